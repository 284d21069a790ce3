//! Loaders for the benchmark corpora and pretrained word vectors.
//!
//! Corpora use the line-aligned layout `<root>/{train,valid,test}/{seq.in,label}`
//! where line `i` of `seq.in` holds the space-separated tokens of utterance
//! `i` and line `i` of `label` its intent. A `seq.out` slot file may sit next
//! to them and is ignored.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::text::Vocabulary;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub text: String,
    pub intent: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub utterances: Vec<Utterance>,
}

impl DatasetSplit {
    pub fn from_pairs<S: Into<String>, L: Into<String>>(pairs: impl IntoIterator<Item = (S, L)>) -> Self {
        Self {
            utterances: pairs
                .into_iter()
                .map(|(text, intent)| Utterance {
                    text: text.into(),
                    intent: intent.into(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter()
    }

    /// Distinct intents of `self` that never occur in `train`, in first
    /// occurrence order.
    pub fn unseen_labels(&self, train: &DatasetSplit) -> Vec<String> {
        let known: HashSet<&str> = train.iter().map(|u| u.intent.as_str()).collect();
        let mut seen = HashSet::new();
        self.iter()
            .filter(|u| !known.contains(u.intent.as_str()) && seen.insert(u.intent.as_str()))
            .map(|u| u.intent.clone())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: DatasetSplit,
    pub valid: DatasetSplit,
    pub test: DatasetSplit,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| {
            l.map(|s| s.trim_end_matches('\r').to_owned())
                .map_err(|e| Error::io(path, e))
        })
        .collect()
}

/// Reads one split directory (`seq.in` + `label`).
pub fn load_split(dir: impl AsRef<Path>) -> Result<DatasetSplit> {
    let dir = dir.as_ref();
    let mut texts = read_lines(&dir.join("seq.in"))?;
    let mut labels = read_lines(&dir.join("label"))?;
    // a single trailing blank line is an editor artifact, not a row
    for lines in [&mut texts, &mut labels] {
        if lines.last().is_some_and(|l| l.trim().is_empty()) {
            lines.pop();
        }
    }
    if texts.len() != labels.len() {
        return Err(Error::Data(format!(
            "{}: seq.in has {} lines but label has {}",
            dir.display(),
            texts.len(),
            labels.len()
        )));
    }
    let mut utterances = Vec::with_capacity(texts.len());
    for (i, (text, intent)) in texts.into_iter().zip(labels).enumerate() {
        let text = text.trim();
        let intent = intent.trim();
        if text.is_empty() || intent.is_empty() {
            return Err(Error::Data(format!(
                "{}: empty utterance or label on line {}",
                dir.display(),
                i + 1
            )));
        }
        utterances.push(Utterance {
            text: text.to_owned(),
            intent: intent.to_owned(),
        });
    }
    Ok(DatasetSplit { utterances })
}

/// Loads `train`, `valid` and `test` under `root`, warning about intents
/// that appear only outside the training split.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let dataset = Dataset {
        train: load_split(root.join("train"))?,
        valid: load_split(root.join("valid"))?,
        test: load_split(root.join("test"))?,
    };
    for (name, split) in [("valid", &dataset.valid), ("test", &dataset.test)] {
        let unseen = split.unseen_labels(&dataset.train);
        if !unseen.is_empty() {
            log::warn!(
                "{} split of {} has {} intent(s) absent from train (scored as errors): {}",
                name,
                root.display(),
                unseen.len(),
                unseen.join(", ")
            );
        }
    }
    Ok(dataset)
}

/// Word vectors read from a whitespace-separated text file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f32>>,
}

impl PretrainedEmbeddings {
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Fraction of the non-reserved vocabulary entries that have a vector.
    pub fn coverage(&self, vocab: &Vocabulary) -> f64 {
        let tokens: Vec<&str> = vocab.regular_tokens().collect();
        if tokens.is_empty() {
            return 0.0;
        }
        let hit = tokens.iter().filter(|t| self.vectors.contains_key(**t)).count();
        hit as f64 / tokens.len() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EmbeddingLoadStats {
    pub lines: usize,
    pub kept: usize,
    pub malformed: usize,
}

/// Most malformed lines tolerated, as a fraction of non-blank lines.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

/// Loads every vector in `path`.
pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<(PretrainedEmbeddings, EmbeddingLoadStats)> {
    load_embeddings_filtered(path, dim, |_| true)
}

/// Streams `path` line by line, keeping only tokens accepted by `keep`.
///
/// Lines that do not hold a token followed by exactly `dim` floats are
/// skipped and counted; more than 1% of them is a format error.
pub fn load_embeddings_filtered(
    path: impl AsRef<Path>,
    dim: usize,
    keep: impl Fn(&str) -> bool,
) -> Result<(PretrainedEmbeddings, EmbeddingLoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = EmbeddingLoadStats::default();
    let mut vectors = HashMap::new();
    let mut line = String::new();
    let mut reader = BufReader::new(file);
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            break;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        stats.lines += 1;
        let mut fields = trimmed.split_whitespace();
        let Some(token) = fields.next() else { continue };
        if !keep(token) {
            // still validate the arity so a wrong `dim` is caught
            if fields.count() != dim {
                stats.malformed += 1;
            }
            continue;
        }
        let parsed: std::result::Result<Vec<f32>, _> = fields.map(str::parse::<f32>).collect();
        match parsed {
            Ok(v) if v.len() == dim && v.iter().all(|x| x.is_finite()) => {
                vectors.insert(token.to_owned(), v);
                stats.kept += 1;
            }
            _ => stats.malformed += 1,
        }
    }
    if stats.lines == 0 {
        log::warn!("embedding file {} is empty", path.display());
    } else if stats.malformed as f64 > MAX_MALFORMED_FRACTION * stats.lines as f64 {
        return Err(Error::Format(format!(
            "{}: {} of {} lines are not `token` + {dim} floats",
            path.display(),
            stats.malformed,
            stats.lines
        )));
    } else if stats.malformed > 0 {
        log::warn!("skipped {} malformed line(s) in {}", stats.malformed, path.display());
    }
    Ok((PretrainedEmbeddings { dim, vectors }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_split(dir: &Path, texts: &str, labels: &str) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join("seq.in"), texts).unwrap();
        fs::write(dir.join("label"), labels).unwrap();
    }

    #[test]
    fn pairs_lines_and_tolerates_crlf() {
        let tmp = tempfile::tempdir().unwrap();
        write_split(
            tmp.path(),
            "list flights\r\nshow fares \n",
            "atis_flight\r\natis_airfare\n",
        );
        fs::write(tmp.path().join("seq.out"), "O O\nO O\n").unwrap();
        let split = load_split(tmp.path()).unwrap();
        assert_eq!(
            split,
            DatasetSplit::from_pairs([("list flights", "atis_flight"), ("show fares", "atis_airfare")])
        );
    }

    #[test]
    fn line_count_mismatch_reports_both_counts() {
        let tmp = tempfile::tempdir().unwrap();
        write_split(tmp.path(), "a\nb\nc\n", "x\ny\n");
        let err = load_split(tmp.path()).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains('2'), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_split(tmp.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn unseen_labels_are_reported_not_dropped() {
        let train = DatasetSplit::from_pairs([("a", "x"), ("b", "y")]);
        let test = DatasetSplit::from_pairs([("c", "x"), ("d", "x#y"), ("e", "x#y"), ("f", "z")]);
        assert_eq!(test.unseen_labels(&train), vec!["x#y".to_string(), "z".to_string()]);
        assert_eq!(test.len(), 4);
    }

    #[test]
    fn embeddings_parse_and_filter() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        let mut body = String::new();
        for (w, base) in [("the", 0.1f32), ("flight", 0.2), ("zebra", 0.3)] {
            body.push_str(w);
            for i in 0..50 {
                body.push_str(&format!(" {}", base + i as f32 * 0.01));
            }
            body.push('\n');
        }
        fs::write(tmp.path(), &body).unwrap();
        let (all, stats) = load_embeddings(tmp.path(), 50).unwrap();
        assert_eq!(
            stats,
            EmbeddingLoadStats {
                lines: 3,
                kept: 3,
                malformed: 0
            }
        );
        assert_eq!(all.get("the").unwrap().len(), 50);
        assert_eq!(all.get("flight").unwrap()[0], 0.2);

        let (some, _) = load_embeddings_filtered(tmp.path(), 50, |w| w != "zebra").unwrap();
        assert_eq!(some.len(), 2);
        assert!(some.get("zebra").is_none());
    }

    #[test]
    fn empty_file_gives_empty_map() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        let (emb, stats) = load_embeddings(tmp.path(), 50).unwrap();
        assert!(emb.is_empty());
        assert_eq!(stats.lines, 0);
    }

    #[test]
    fn wrong_dimension_throughout_is_format_error() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        fs::write(tmp.path(), "a 1 2 3\nb 4 5 6\n").unwrap();
        assert!(matches!(load_embeddings(tmp.path(), 50), Err(Error::Format(_))));
        assert_eq!(load_embeddings(tmp.path(), 3).unwrap().1.kept, 2);
    }

    #[test]
    fn sparse_malformed_lines_are_skipped() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        let mut body = String::from("broken 1.0 oops\n");
        for i in 0..200 {
            body.push_str(&format!("w{i} 1.0 2.0\n"));
        }
        fs::write(tmp.path(), body).unwrap();
        let (emb, stats) = load_embeddings(tmp.path(), 2).unwrap();
        assert_eq!((emb.len(), stats.malformed), (200, 1));
    }
}
