//! Label taxonomy, example records and the line-delimited dataset format.
//!
//! A dataset file holds one JSON object per line:
//!
//! ```text
//! {"id":"m1","group":"m1","origin":"original","image_embedding":[0.1,0.2],"text_embedding":[0.3,0.4],"labels":["Smears"]}
//! ```
//!
//! `labels` is optional; an empty array means the example carries no technique.
//! Records sharing a `group` are an original and its paraphrases.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PERSUASION_TECHNIQUES: &str = include_str!("../data/taxonomy.txt");

/// Ordered list of label names. A label's index is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Taxonomy("no labels".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, name) in labels.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::Taxonomy(format!("label {i} is empty")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Taxonomy(format!("duplicate label `{name}`")));
            }
        }
        Ok(Self { labels, index })
    }

    /// The 22 persuasion techniques of the bundled meme taxonomy,
    /// ordered by training-set frequency.
    pub fn persuasion_techniques() -> Self {
        Self::parse(PERSUASION_TECHNIQUES).expect("bundled taxonomy is valid")
    }

    /// Parses a taxonomy file: one label per line, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(|l| l.trim_end_matches('\r'))
                .filter(|l| !l.trim().is_empty()),
        )
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for label in &self.labels {
            writeln!(w, "{label}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Paraphrase,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Original => f.write_str("original"),
            Origin::Paraphrase => f.write_str("paraphrase"),
        }
    }
}

/// One image/text pair. Paraphrases share the `group` of their original.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub group: String,
    pub image_embedding: Vec<f64>,
    pub text_embedding: Vec<f64>,
    pub origin: Origin,
    /// Taxonomy indices; `None` when the record is unlabeled.
    pub gold: Option<BTreeSet<usize>>,
}

/// Wire representation of a record.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    group: String,
    origin: Origin,
    image_embedding: Vec<f64>,
    text_embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    taxonomy: Taxonomy,
    examples: Vec<Example>,
}

impl Dataset {
    /// Builds a dataset after checking ids, dimensions, label indices and
    /// group structure.
    pub fn new(taxonomy: Taxonomy, examples: Vec<Example>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(examples.len());
        let mut dim = None;
        for ex in &examples {
            if !ids.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            check_example(ex, &taxonomy, &mut dim)?;
        }
        check_groups(&examples)?;
        Ok(Self { taxonomy, examples })
    }

    pub fn empty(taxonomy: Taxonomy) -> Self {
        Self {
            taxonomy,
            examples: Vec::new(),
        }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Shared embedding dimension, `None` for an empty dataset.
    pub fn dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.image_embedding.len())
    }

    /// Group ids in first-appearance order.
    pub fn groups(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.examples
            .iter()
            .filter(|e| seen.insert(e.group.as_str()))
            .map(|e| e.group.as_str())
            .collect()
    }

    /// Keeps only `origin = original` records.
    pub fn originals(&self) -> Dataset {
        Dataset {
            taxonomy: self.taxonomy.clone(),
            examples: self
                .examples
                .iter()
                .filter(|e| e.origin == Origin::Original)
                .cloned()
                .collect(),
        }
    }

    /// Whether every record, or its group's original, has gold labels.
    pub fn is_labeled(&self) -> bool {
        self.gold_matrix().is_ok()
    }

    /// N×L gold matrix in dataset order. A paraphrase without labels inherits
    /// those of its group's original.
    pub fn gold_matrix(&self) -> Result<Array2<bool>> {
        let group_gold: HashMap<&str, &BTreeSet<usize>> = self
            .examples
            .iter()
            .filter(|e| e.origin == Origin::Original)
            .filter_map(|e| e.gold.as_ref().map(|g| (e.group.as_str(), g)))
            .collect();
        let mut out = Array2::from_elem((self.len(), self.taxonomy.len()), false);
        for (n, ex) in self.examples.iter().enumerate() {
            let gold = ex
                .gold
                .as_ref()
                .or_else(|| group_gold.get(ex.group.as_str()).copied())
                .ok_or_else(|| Error::MissingGold(ex.id.clone()))?;
            for &j in gold {
                out[(n, j)] = true;
            }
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for ex in &self.examples {
            let record = Record {
                id: ex.id.clone(),
                group: ex.group.clone(),
                origin: ex.origin,
                image_embedding: ex.image_embedding.clone(),
                text_embedding: ex.text_embedding.clone(),
                labels: ex.gold.as_ref().map(|g| {
                    g.iter()
                        .map(|&j| self.taxonomy.name(j).to_owned())
                        .collect()
                }),
            };
            serde_json::to_writer(&mut w, &record)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_path(path: &Path, taxonomy: &Taxonomy) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        parse_dataset(std::io::BufReader::new(file), taxonomy)
    }

    fn subset(&self, keep: impl Fn(&Example) -> bool) -> Dataset {
        Dataset {
            taxonomy: self.taxonomy.clone(),
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }
}

fn check_example(ex: &Example, taxonomy: &Taxonomy, dim: &mut Option<usize>) -> Result<()> {
    if ex.image_embedding.len() != ex.text_embedding.len() {
        return Err(Error::DimensionMismatch {
            expected: ex.image_embedding.len(),
            actual: ex.text_embedding.len(),
        });
    }
    match *dim {
        Some(d) if d != ex.image_embedding.len() => {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: ex.image_embedding.len(),
            })
        }
        None => *dim = Some(ex.image_embedding.len()),
        _ => {}
    }
    if ex
        .image_embedding
        .iter()
        .chain(&ex.text_embedding)
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("embedding"));
    }
    if let Some(gold) = &ex.gold {
        if let Some(&j) = gold.iter().find(|&&j| j >= taxonomy.len()) {
            return Err(Error::UnknownLabel(format!("#{j}")));
        }
    }
    Ok(())
}

fn check_groups(examples: &[Example]) -> Result<()> {
    let mut originals: HashMap<&str, usize> = HashMap::new();
    let mut order = Vec::new();
    for ex in examples {
        let count = originals.entry(ex.group.as_str()).or_insert_with(|| {
            order.push(ex.group.as_str());
            0
        });
        if ex.origin == Origin::Original {
            *count += 1;
        }
    }
    for group in order {
        let n = originals[group];
        if n != 1 {
            return Err(Error::GroupOriginals {
                group: group.to_owned(),
                originals: n,
            });
        }
    }
    Ok(())
}

/// Reads line-delimited records. Blank lines are skipped; errors carry the
/// 1-based line number where one applies.
pub fn parse_dataset<R: BufRead>(reader: R, taxonomy: &Taxonomy) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut ids = HashSet::new();
    let mut dim = None;
    let at = |line: usize, e: Error| Error::Parse {
        line,
        message: e.to_string(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let gold = match record.labels {
            None => None,
            Some(names) => {
                let mut set = BTreeSet::new();
                for name in names {
                    let j = taxonomy
                        .index_of(&name)
                        .ok_or_else(|| at(line_no, Error::UnknownLabel(name.clone())))?;
                    set.insert(j);
                }
                Some(set)
            }
        };
        let ex = Example {
            id: record.id,
            group: record.group,
            image_embedding: record.image_embedding,
            text_embedding: record.text_embedding,
            origin: record.origin,
            gold,
        };
        if !ids.insert(ex.id.clone()) {
            return Err(at(line_no, Error::DuplicateId(ex.id)));
        }
        check_example(&ex, taxonomy, &mut dim).map_err(|e| at(line_no, e))?;
        examples.push(ex);
    }
    check_groups(&examples)?;
    Ok(Dataset {
        taxonomy: taxonomy.clone(),
        examples,
    })
}

/// Splits by group: `⌈fraction × groups⌉` whole groups go to validation,
/// chosen by a shuffle seeded with `seed`. Both halves keep dataset order.
pub fn split_train_validation(
    ds: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut groups = ds.groups();
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 groups to split, found {}",
            groups.len()
        )));
    }
    let n_val = validation_group_count(groups.len(), fraction);
    if n_val >= groups.len() {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} leaves no training groups out of {}",
            groups.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let validation: HashSet<&str> = groups[..n_val].iter().copied().collect();
    let train = ds.subset(|e| !validation.contains(e.group.as_str()));
    let val = ds.subset(|e| validation.contains(e.group.as_str()));
    Ok((train, val))
}

fn validation_group_count(groups: usize, fraction: f64) -> usize {
    let raw = fraction * groups as f64;
    // 0.1 * 290 is 29.000000000000004 in binary floating point
    let rounded = raw.round();
    let count = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    count as usize
}

/// Per-label counts over `origin = original` records.
pub fn label_counts(ds: &Dataset) -> Result<Vec<usize>> {
    let mut counts = vec![0; ds.taxonomy.len()];
    for ex in &ds.examples {
        let gold = ex
            .gold
            .as_ref()
            .ok_or_else(|| Error::MissingGold(ex.id.clone()))?;
        if ex.origin == Origin::Original {
            for &j in gold {
                counts[j] += 1;
            }
        }
    }
    Ok(counts)
}
