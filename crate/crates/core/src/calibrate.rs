//! Group averaging, global threshold search, and multi-label metrics.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::chain::ProbabilityMatrix;
use crate::dataset::Taxonomy;
use crate::error::{Error, Result};

/// Grid searched by [`tune_threshold`]: `i / 200` for `i = 0..=180`.
pub const GRID_STEPS: usize = 180;
const GRID_DENOMINATOR: f64 = 200.0;
pub const MAX_THRESHOLD: f64 = 0.9;

/// Decision threshold in `[0, 0.9]`; a label is predicted when its score is
/// strictly greater.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=MAX_THRESHOLD).contains(&value) {
            return Err(Error::InvalidArgument(format!(
                "threshold must be in [0, {MAX_THRESHOLD}], got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The `i`-th grid candidate.
    pub fn grid(i: usize) -> Self {
        assert!(i <= GRID_STEPS, "grid index {i} out of range");
        Self(i as f64 / GRID_DENOMINATOR)
    }

    pub fn candidates() -> impl Iterator<Item = Threshold> {
        (0..=GRID_STEPS).map(Threshold::grid)
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Micro,
    Macro,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Micro => "micro",
            Metric::Macro => "macro",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Metric::Micro),
            "macro" => Ok(Metric::Macro),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_label: Vec<LabelScores>,
    /// Gold positives per label.
    pub support: Vec<usize>,
}

impl MetricsReport {
    pub fn score(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Micro => self.micro_f1,
            Metric::Macro => self.macro_f1,
        }
    }

    /// Flat `key=value` lines. Floats use the shortest representation that
    /// parses back to the same value.
    pub fn write_to<W: Write>(&self, taxonomy: &Taxonomy, mut w: W) -> Result<()> {
        writeln!(w, "micro_f1={}", self.micro_f1)?;
        writeln!(w, "macro_f1={}", self.macro_f1)?;
        for (j, (s, support)) in self.per_label.iter().zip(&self.support).enumerate() {
            writeln!(w, "label.{j}.name={}", taxonomy.name(j))?;
            writeln!(w, "label.{j}.precision={}", s.precision)?;
            writeln!(w, "label.{j}.recall={}", s.recall)?;
            writeln!(w, "label.{j}.f1={}", s.f1)?;
            writeln!(w, "label.{j}.support={support}")?;
        }
        Ok(())
    }
}

/// One output row per distinct group: the mean of its member rows. Groups
/// appear in first-appearance order.
pub fn average_groups(
    probs: &ProbabilityMatrix,
    groups: &[String],
) -> Result<(ProbabilityMatrix, Vec<String>)> {
    if probs.nrows() == 0 {
        return Err(Error::Empty("probabilities to average"));
    }
    if groups.len() != probs.nrows() {
        return Err(Error::DimensionMismatch {
            expected: probs.nrows(),
            actual: groups.len(),
        });
    }
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (n, g) in groups.iter().enumerate() {
        let k = *slot.entry(g.as_str()).or_insert_with(|| {
            order.push(g.clone());
            members.push(Vec::new());
            order.len() - 1
        });
        members[k].push(n);
    }
    let values = probs.values();
    let mut out = Array2::<f64>::zeros((order.len(), probs.ncols()));
    for (mut row, rows) in out.rows_mut().into_iter().zip(&members) {
        for j in 0..values.ncols() {
            // sorted summation makes the mean independent of member order
            let mut col: Vec<f64> = rows.iter().map(|&n| values[(n, j)]).collect();
            col.sort_by(f64::total_cmp);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            row[j] = mean.clamp(0.0, 1.0);
        }
    }
    Ok((ProbabilityMatrix::new(out)?, order))
}

/// `out[n, j] = probs[n, j] > t`.
pub fn apply_threshold(probs: &ProbabilityMatrix, t: Threshold) -> Array2<bool> {
    probs.values().mapv(|p| p > t.value())
}

#[derive(Debug, Clone, Copy, Default)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Confusion {
    fn f1(self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_same_shape(pred: ArrayView2<'_, bool>, gold: ArrayView2<'_, bool>) -> Result<()> {
    if pred.dim() != gold.dim() {
        return Err(Error::InvalidArgument(format!(
            "prediction shape {:?} differs from gold shape {:?}",
            pred.dim(),
            gold.dim()
        )));
    }
    Ok(())
}

/// Micro-F1 pools TP/FP/FN over all cells; macro-F1 is the unweighted mean
/// of per-label F1 over every label. A zero denominator scores 0.
pub fn f1_scores(pred: ArrayView2<'_, bool>, gold: ArrayView2<'_, bool>) -> Result<MetricsReport> {
    check_same_shape(pred, gold)?;
    let labels = gold.ncols();
    let mut per = vec![Confusion::default(); labels];
    for (p_row, g_row) in pred.rows().into_iter().zip(gold.rows()) {
        for (c, (&p, &g)) in per.iter_mut().zip(p_row.iter().zip(g_row.iter())) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let pooled = per.iter().fold(Confusion::default(), |acc, c| Confusion {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    let per_label: Vec<LabelScores> = per
        .iter()
        .map(|c| LabelScores {
            precision: ratio(c.tp, c.tp + c.fp),
            recall: ratio(c.tp, c.tp + c.fn_),
            f1: c.f1(),
        })
        .collect();
    let macro_f1 = if labels == 0 {
        0.0
    } else {
        per_label.iter().map(|s| s.f1).sum::<f64>() / labels as f64
    };
    Ok(MetricsReport {
        micro_f1: pooled.f1(),
        macro_f1,
        per_label,
        support: per.iter().map(|c| c.tp + c.fn_).collect(),
    })
}

/// Grid search over the 181 candidates; the smallest threshold wins ties.
pub fn tune_threshold(
    probs: &ProbabilityMatrix,
    gold: ArrayView2<'_, bool>,
    metric: Metric,
) -> Result<Threshold> {
    if probs.nrows() == 0 {
        return Err(Error::Empty("probabilities to tune on"));
    }
    if probs.values().dim() != gold.dim() {
        return Err(Error::InvalidArgument(format!(
            "probability shape {:?} differs from gold shape {:?}",
            probs.values().dim(),
            gold.dim()
        )));
    }
    let scores: Vec<f64> = (0..=GRID_STEPS)
        .into_par_iter()
        .map(|i| {
            let pred = apply_threshold(probs, Threshold::grid(i));
            f1_scores(pred.view(), gold).map(|r| r.score(metric))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(Threshold::grid(best))
}

/// Symmetric L×L matrix of joint label frequencies; the diagonal holds the
/// marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix(Array2<f64>);

impl CooccurrenceMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    /// CSV with a header row of label names and one named row per label.
    pub fn write_csv<W: Write>(&self, taxonomy: &Taxonomy, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(taxonomy.labels().iter().cloned());
        out.write_record(&header)?;
        for (j, row) in self.0.rows().into_iter().enumerate() {
            let mut record = vec![taxonomy.name(j).to_owned()];
            record.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn cooccurrence(gold: ArrayView2<'_, bool>) -> Result<CooccurrenceMatrix> {
    let (n, l) = gold.dim();
    if n == 0 {
        return Err(Error::Empty("gold labels"));
    }
    let mut counts = Array2::<usize>::zeros((l, l));
    for row in gold.rows() {
        let active: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &g)| g)
            .map(|(j, _)| j)
            .collect();
        for &a in &active {
            for &b in &active {
                counts[(a, b)] += 1;
            }
        }
    }
    Ok(CooccurrenceMatrix(counts.mapv(|c| c as f64 / n as f64)))
}
