//! End-to-end training and inference, plus the model file.
//!
//! Inference runs featurize → chain → optional sharpen → per-group average →
//! threshold. Sharpening happens before averaging, and the threshold is tuned
//! on group-averaged scores; both choices are written into the model file.
//!
//! Model file layout (one item per line, floats with 17 significant digits):
//!
//! ```text
//! memechain-model 1
//! mode fused
//! feature_dim 8
//! chain_feed labels
//! sharpen true
//! sharpen_stage before_averaging
//! augment true
//! threshold_stage after_averaging
//! metric micro
//! threshold 2.0000000000000000e-1      # or `none`
//! labels 2
//! label Smears
//! label Loaded Language
//! order 0 1
//! link 0 8
//! intercept -1.2345678901234567e0
//! weights 1.0000000000000000e0 ...
//! link 1 9
//! ...
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;

use crate::calibrate::{
    self, apply_threshold, average_groups, f1_scores, Metric, MetricsReport, Threshold,
};
use crate::chain::{
    self, predict_chain, sharpen, taxonomy_order, ChainFeed, ChainModel, ProbabilityMatrix,
};
use crate::dataset::{split_train_validation, Dataset, Origin, Taxonomy};
use crate::error::{Error, Result};
use crate::fusion::{featurize, FeatureMode};
use crate::logreg::{LinearModel, TrainConfig};

const MAGIC: &str = "memechain-model";
const VERSION: u32 = 1;
const SHARPEN_STAGE: &str = "before_averaging";
const THRESHOLD_STAGE: &str = "after_averaging";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: FeatureMode,
    pub sharpen: bool,
    /// Train on paraphrases and average each group's scores at inference.
    /// When off, paraphrase records are ignored everywhere.
    pub augment: bool,
    /// Chain order; `None` means taxonomy order.
    pub order: Option<Vec<usize>>,
    pub feed: ChainFeed,
    pub train: TrainConfig,
    pub metric: Metric,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Fused,
            sharpen: true,
            augment: true,
            order: None,
            feed: ChainFeed::Labels,
            train: TrainConfig::default(),
            metric: Metric::Micro,
        }
    }
}

/// A trained chain together with the inference settings it was tuned for.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub chain: ChainModel,
    pub sharpen: bool,
    pub augment: bool,
    pub metric: Metric,
    pub threshold: Option<Threshold>,
}

/// Group-level scores in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScores {
    pub groups: Vec<String>,
    pub probs: ProbabilityMatrix,
    /// Gold labels of each group's original, when the dataset is labeled.
    pub gold: Option<Array2<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub scores: GroupScores,
    pub threshold: Threshold,
    pub labels: Array2<bool>,
}

fn usable(ds: &Dataset, augment: bool) -> Dataset {
    if augment {
        ds.clone()
    } else {
        ds.originals()
    }
}

impl Pipeline {
    /// Trains the chain on every usable record of `train`. No threshold yet.
    pub fn fit(train: &Dataset, cfg: &PipelineConfig) -> Result<Self> {
        let data = usable(train, cfg.augment);
        if data.is_empty() {
            return Err(Error::Empty("training dataset"));
        }
        let features = featurize(&data, cfg.mode)?;
        let gold = data.gold_matrix()?;
        let order = cfg
            .order
            .clone()
            .unwrap_or_else(|| taxonomy_order(data.taxonomy().len()));
        let chain = chain::train_chain(
            features.view(),
            gold.view(),
            data.taxonomy(),
            &order,
            cfg.mode,
            &cfg.train,
        )?
        .with_feed(cfg.feed);
        Ok(Self::from_chain(chain, cfg))
    }

    pub fn from_chain(chain: ChainModel, cfg: &PipelineConfig) -> Self {
        Self {
            chain,
            sharpen: cfg.sharpen,
            augment: cfg.augment,
            metric: cfg.metric,
            threshold: None,
        }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.chain.taxonomy
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.taxonomy() != self.taxonomy() {
            return Err(Error::InvalidArgument(
                "dataset taxonomy differs from the model's".into(),
            ));
        }
        if let Some(d) = ds.dim() {
            if d != self.chain.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.chain.feature_dim,
                    actual: d,
                });
            }
        }
        Ok(())
    }

    /// Per-group probabilities for `ds`.
    pub fn score(&self, ds: &Dataset) -> Result<GroupScores> {
        self.check_dataset(ds)?;
        let data = usable(ds, self.augment);
        if data.is_empty() {
            return Err(Error::Empty("dataset to score"));
        }
        let features = featurize(&data, self.chain.mode)?;
        let mut probs = predict_chain(&self.chain, features.view())?;
        if self.sharpen {
            probs = sharpen(&probs);
        }
        let member_groups: Vec<String> = data.examples().iter().map(|e| e.group.clone()).collect();
        let (probs, groups) = average_groups(&probs, &member_groups)?;
        let gold = group_gold(&data, &groups)?;
        Ok(GroupScores {
            groups,
            probs,
            gold,
        })
    }

    /// Tunes the global threshold on `ds` and stores it.
    pub fn tune(&mut self, ds: &Dataset) -> Result<(Threshold, MetricsReport)> {
        let scores = self.score(ds)?;
        let gold = scores
            .gold
            .ok_or_else(|| Error::MissingGold("tuning dataset".into()))?;
        let t = calibrate::tune_threshold(&scores.probs, gold.view(), self.metric)?;
        let report = f1_scores(apply_threshold(&scores.probs, t).view(), gold.view())?;
        self.threshold = Some(t);
        Ok((t, report))
    }

    fn threshold_or(&self, override_t: Option<Threshold>) -> Result<Threshold> {
        override_t
            .or(self.threshold)
            .ok_or_else(|| Error::InvalidArgument("model has no tuned threshold".into()))
    }

    pub fn predict(&self, ds: &Dataset, override_t: Option<Threshold>) -> Result<Predictions> {
        let threshold = self.threshold_or(override_t)?;
        let scores = self.score(ds)?;
        let labels = apply_threshold(&scores.probs, threshold);
        Ok(Predictions {
            scores,
            threshold,
            labels,
        })
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<MetricsReport> {
        let p = self.predict(ds, None)?;
        let gold = p
            .scores
            .gold
            .ok_or_else(|| Error::MissingGold("evaluation dataset".into()))?;
        f1_scores(p.labels.view(), gold.view())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.chain;
        writeln!(w, "{MAGIC} {VERSION}")?;
        writeln!(w, "mode {}", c.mode)?;
        writeln!(w, "feature_dim {}", c.feature_dim)?;
        writeln!(w, "chain_feed {}", c.feed)?;
        writeln!(w, "sharpen {}", self.sharpen)?;
        writeln!(w, "sharpen_stage {SHARPEN_STAGE}")?;
        writeln!(w, "augment {}", self.augment)?;
        writeln!(w, "threshold_stage {THRESHOLD_STAGE}")?;
        writeln!(w, "metric {}", self.metric)?;
        match self.threshold {
            Some(t) => writeln!(w, "threshold {}", exact(t.value()))?,
            None => writeln!(w, "threshold none")?,
        }
        writeln!(w, "labels {}", c.taxonomy.len())?;
        for label in c.taxonomy.labels() {
            writeln!(w, "label {label}")?;
        }
        let order: Vec<String> = c.order.iter().map(ToString::to_string).collect();
        writeln!(w, "order {}", order.join(" "))?;
        for (k, link) in c.links.iter().enumerate() {
            writeln!(w, "link {k} {}", link.dim())?;
            writeln!(w, "intercept {}", exact(link.intercept))?;
            let weights: Vec<String> = link.weights.iter().map(|&v| exact(v)).collect();
            writeln!(w, "weights {}", weights.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = ModelLines::new(reader);
        let header = lines.field(MAGIC)?;
        if header != VERSION.to_string() {
            return Err(lines.error(format!("unsupported version `{header}`")));
        }
        let mode: FeatureMode = lines.parsed("mode")?;
        let feature_dim: usize = lines.parsed("feature_dim")?;
        let feed: ChainFeed = lines.parsed("chain_feed")?;
        let sharpen: bool = lines.parsed("sharpen")?;
        lines.expect_value("sharpen_stage", SHARPEN_STAGE)?;
        let augment: bool = lines.parsed("augment")?;
        lines.expect_value("threshold_stage", THRESHOLD_STAGE)?;
        let metric: Metric = lines.parsed("metric")?;
        let threshold = match lines.field("threshold")?.as_str() {
            "none" => None,
            text => {
                let v: f64 = text
                    .parse()
                    .map_err(|_| lines.error(format!("bad threshold `{text}`")))?;
                Some(Threshold::new(v).map_err(|e| lines.error(e.to_string()))?)
            }
        };
        let n_labels: usize = lines.parsed("labels")?;
        let mut names = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            names.push(lines.field("label")?);
        }
        let taxonomy = Taxonomy::new(names).map_err(|e| lines.error(e.to_string()))?;
        let order = lines
            .field("order")?
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| lines.error(format!("bad order: {e}")))?;
        let mut links = Vec::with_capacity(order.len());
        for k in 0..order.len() {
            let head = lines.field("link")?;
            let expected = format!("{k} {}", feature_dim + k);
            if head != expected {
                return Err(lines.error(format!("expected `link {expected}`, found `link {head}`")));
            }
            let intercept: f64 = lines.parsed("intercept")?;
            let weights = lines
                .field("weights")?
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| lines.error(format!("bad weight: {e}")))?;
            links.push(LinearModel { weights, intercept });
        }
        lines.expect_end()?;
        let chain = ChainModel::new(taxonomy, order, links, feature_dim, mode)
            .map_err(|e| Error::ModelFormat(e.to_string()))?
            .with_feed(feed);
        Ok(Self {
            chain,
            sharpen,
            augment,
            metric,
            threshold,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn exact(v: f64) -> String {
    format!("{v:.16e}")
}

fn group_gold(data: &Dataset, groups: &[String]) -> Result<Option<Array2<bool>>> {
    let Ok(all) = data.gold_matrix() else {
        return Ok(None);
    };
    let mut out = Array2::from_elem((groups.len(), data.taxonomy().len()), false);
    let slot: std::collections::HashMap<&str, usize> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    for (n, ex) in data.examples().iter().enumerate() {
        if ex.origin == Origin::Original {
            out.row_mut(slot[ex.group.as_str()]).assign(&all.row(n));
        }
    }
    Ok(Some(out))
}

/// Outcome of [`train_with_validation`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pipeline: Pipeline,
    pub threshold: Threshold,
    pub validation_report: MetricsReport,
    pub train: Dataset,
    pub validation: Dataset,
}

/// Group-aware split, chain training on the training part, then threshold
/// tuning on the validation part.
pub fn train_with_validation(
    ds: &Dataset,
    cfg: &PipelineConfig,
    fraction: f64,
    seed: u64,
) -> Result<TrainOutcome> {
    let (train, validation) = split_train_validation(ds, fraction, seed)?;
    let mut pipeline = Pipeline::fit(&train, cfg)?;
    let (threshold, validation_report) = pipeline.tune(&validation)?;
    Ok(TrainOutcome {
        pipeline,
        threshold,
        validation_report,
        train,
        validation,
    })
}

/// Writes one row per group: id, `;`-joined predicted label names, then the
/// score of every label.
pub fn write_predictions<W: Write>(p: &Predictions, taxonomy: &Taxonomy, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_owned(), "labels".to_owned()];
    header.extend(taxonomy.labels().iter().cloned());
    out.write_record(&header)?;
    for (n, group) in p.scores.groups.iter().enumerate() {
        let names: Vec<&str> = p
            .labels
            .row(n)
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(j, _)| taxonomy.name(j))
            .collect();
        let mut record = vec![group.clone(), names.join(";")];
        record.extend(p.scores.probs.values().row(n).iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

struct ModelLines<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> ModelLines<R> {
    fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
        }
    }

    fn error(&self, message: String) -> Error {
        Error::ModelFormat(format!("line {}: {message}", self.line_no))
    }

    /// Reads the next line, which must be `key value`, and returns `value`.
    fn field(&mut self, key: &str) -> Result<String> {
        self.line_no += 1;
        let line = match self.lines.next() {
            Some(line) => line?,
            None => return Err(self.error(format!("unexpected end of file, expected `{key}`"))),
        };
        let line = line.trim_end_matches('\r');
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_owned()),
            _ if line == key => Ok(String::new()),
            _ => Err(self.error(format!("expected `{key}`, found `{line}`"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| self.error(format!("bad value `{v}` for `{key}`")))
    }

    fn expect_value(&mut self, key: &str, expected: &str) -> Result<()> {
        let v = self.field(key)?;
        if v != expected {
            return Err(self.error(format!("unsupported {key} `{v}`")));
        }
        Ok(())
    }

    fn expect_end(&mut self) -> Result<()> {
        for line in self.lines.by_ref() {
            self.line_no += 1;
            if !line?.trim().is_empty() {
                return Err(self.error("trailing content".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Augment, SynthConfig};

    fn small(augment: Option<Augment>) -> Dataset {
        generate(&SynthConfig {
            n_examples: 120,
            feature_dim: 4,
            n_labels: 3,
            correlation: 0.7,
            noise: 0.05,
            seed: 3,
            augment,
        })
        .unwrap()
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let ds = small(None);
        let mut p = Pipeline::fit(&ds, &PipelineConfig::default()).unwrap();
        p.tune(&ds).unwrap();
        p.chain.links[0].weights[0] = 0.1 + 0.2;
        p.chain.links[1].intercept = -0.0;
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let back = Pipeline::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert!(back.chain.links[1].intercept.is_sign_negative());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn model_file_without_threshold() {
        let ds = small(None);
        let p = Pipeline::fit(&ds, &PipelineConfig::default()).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\nthreshold none\n"));
        assert_eq!(Pipeline::read_from(buf.as_slice()).unwrap().threshold, None);
        assert!(p.evaluate(&ds).is_err());
    }

    #[test]
    fn corrupt_model_files() {
        let ds = small(None);
        let p = Pipeline::fit(&ds, &PipelineConfig::default()).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let wrong_version = text.replacen("memechain-model 1", "memechain-model 9", 1);
        assert!(Pipeline::read_from(wrong_version.as_bytes()).is_err());
        let truncated: String = text.lines().take(15).map(|l| format!("{l}\n")).collect();
        let err = Pipeline::read_from(truncated.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::ModelFormat(_)), "{err}");
        let stage = text.replace(
            "sharpen_stage before_averaging",
            "sharpen_stage after_averaging",
        );
        assert!(Pipeline::read_from(stage.as_bytes()).is_err());
        let extra = format!("{text}junk\n");
        assert!(Pipeline::read_from(extra.as_bytes()).is_err());
    }

    #[test]
    fn one_row_per_group() {
        let ds = small(Some(Augment {
            copies: 2,
            sigma: 0.3,
        }));
        let p = Pipeline::fit(&ds, &PipelineConfig::default()).unwrap();
        let scores = p.score(&ds).unwrap();
        assert_eq!(scores.groups.len(), 120);
        assert_eq!(scores.gold.unwrap().nrows(), 120);

        let no_aug = Pipeline::fit(
            &ds,
            &PipelineConfig {
                augment: false,
                ..Default::default()
            },
        )
        .unwrap();
        let scores = no_aug.score(&ds).unwrap();
        assert_eq!(scores.groups, ds.originals().groups());
    }

    #[test]
    fn sharpened_scores_stay_in_range() {
        let ds = small(None);
        let p = Pipeline::fit(&ds, &PipelineConfig::default()).unwrap();
        let s = p.score(&ds).unwrap();
        let hi = crate::logreg::sigmoid(1.0);
        assert!(s.probs.values().iter().all(|&v| (0.5..=hi).contains(&v)));
        let preds = p.predict(&ds, Some(Threshold::grid(180))).unwrap();
        assert!(preds.labels.iter().all(|&b| !b));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ds = small(None);
        let p = Pipeline::fit(&ds, &PipelineConfig::default()).unwrap();
        let other = generate(&SynthConfig {
            n_examples: 10,
            feature_dim: 5,
            n_labels: 3,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            p.score(&other),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 5
            })
        ));
    }

    #[test]
    fn prediction_csv() {
        let ds = small(None);
        let mut p = Pipeline::fit(&ds, &PipelineConfig::default()).unwrap();
        p.tune(&ds).unwrap();
        let preds = p.predict(&ds, None).unwrap();
        let mut buf = Vec::new();
        write_predictions(&preds, p.taxonomy(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "id,labels,label_0,label_1,label_2");
        assert_eq!(lines.count(), 120);
    }
}
