//! Classifier chains over logistic-regression links.
//!
//! Link `k` predicts label `order[k]` from the raw features followed by one
//! extra input per earlier chain position. Training appends the gold labels
//! of those positions. Inference appends either the earlier links' predicted
//! labels (`σ(z) > 0.5`, the default) or their raw probabilities, depending on
//! [`ChainFeed`].

use ndarray::{s, Array2, ArrayView1, ArrayView2};

use crate::dataset::Taxonomy;
use crate::error::{Error, Result};
use crate::fusion::FeatureMode;
use crate::logreg::{self, dot, sigmoid, LinearModel, TrainConfig};

/// N×L scores in `[0, 1]`, columns in taxonomy order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(Array2<f64>);

impl ProbabilityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// What earlier links pass forward at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainFeed {
    /// Hard 0/1 predictions, matching the inputs seen during training.
    #[default]
    Labels,
    Probabilities,
}

impl std::fmt::Display for ChainFeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChainFeed::Labels => "labels",
            ChainFeed::Probabilities => "probabilities",
        })
    }
}

impl std::str::FromStr for ChainFeed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(ChainFeed::Labels),
            "probabilities" => Ok(ChainFeed::Probabilities),
            other => Err(Error::InvalidArgument(format!(
                "unknown chain feed `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub taxonomy: Taxonomy,
    pub order: Vec<usize>,
    pub links: Vec<LinearModel>,
    pub feature_dim: usize,
    pub mode: FeatureMode,
    pub feed: ChainFeed,
}

impl ChainModel {
    /// Assembles a model, checking the order and every link's width.
    pub fn new(
        taxonomy: Taxonomy,
        order: Vec<usize>,
        links: Vec<LinearModel>,
        feature_dim: usize,
        mode: FeatureMode,
    ) -> Result<Self> {
        check_order(&order, taxonomy.len())?;
        if links.len() != order.len() {
            return Err(Error::DimensionMismatch {
                expected: order.len(),
                actual: links.len(),
            });
        }
        for (k, link) in links.iter().enumerate() {
            if link.dim() != feature_dim + k {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim + k,
                    actual: link.dim(),
                });
            }
        }
        Ok(Self {
            taxonomy,
            order,
            links,
            feature_dim,
            mode,
            feed: ChainFeed::default(),
        })
    }

    pub fn with_feed(mut self, feed: ChainFeed) -> Self {
        self.feed = feed;
        self
    }

    pub fn n_labels(&self) -> usize {
        self.order.len()
    }

    /// Sets every appended-label coefficient to zero, turning the chain into
    /// independent per-label classifiers.
    pub fn without_label_inputs(&self) -> ChainModel {
        let mut out = self.clone();
        for link in &mut out.links {
            link.weights[self.feature_dim..]
                .iter_mut()
                .for_each(|w| *w = 0.0);
        }
        out
    }
}

pub fn taxonomy_order(n_labels: usize) -> Vec<usize> {
    (0..n_labels).collect()
}

fn check_order(order: &[usize], n_labels: usize) -> Result<()> {
    let mut seen = vec![false; n_labels];
    if order.len() != n_labels {
        return Err(Error::InvalidArgument(format!(
            "chain order has {} entries for {n_labels} labels",
            order.len()
        )));
    }
    for &j in order {
        if j >= n_labels || std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidArgument(format!(
                "chain order {order:?} is not a permutation"
            )));
        }
    }
    Ok(())
}

fn check_shapes(
    features: ArrayView2<'_, f64>,
    gold: ArrayView2<'_, bool>,
    taxonomy: &Taxonomy,
) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::Empty("training features"));
    }
    if gold.nrows() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            actual: gold.nrows(),
        });
    }
    if gold.ncols() != taxonomy.len() {
        return Err(Error::DimensionMismatch {
            expected: taxonomy.len(),
            actual: gold.ncols(),
        });
    }
    Ok(())
}

/// Trains link `k` on `[features ‖ gold[:, order[0..k]]]`.
pub fn train_chain(
    features: ArrayView2<'_, f64>,
    gold: ArrayView2<'_, bool>,
    taxonomy: &Taxonomy,
    order: &[usize],
    mode: FeatureMode,
    cfg: &TrainConfig,
) -> Result<ChainModel> {
    check_shapes(features, gold, taxonomy)?;
    check_order(order, taxonomy.len())?;
    let (n, d) = features.dim();
    let l = order.len();
    let mut inputs = Array2::<f64>::zeros((n, d + l.saturating_sub(1)));
    inputs.slice_mut(s![.., ..d]).assign(&features);
    let mut links = Vec::with_capacity(l);
    for (k, &label) in order.iter().enumerate() {
        let targets: Vec<bool> = gold.column(label).to_vec();
        let link = logreg::train_binary(inputs.slice(s![.., ..d + k]), &targets, cfg)?;
        links.push(link);
        if k + 1 < l {
            let col = inputs.column_mut(d + k);
            col.into_iter()
                .zip(&targets)
                .for_each(|(v, &t)| *v = if t { 1.0 } else { 0.0 });
        }
    }
    ChainModel::new(taxonomy.clone(), order.to_vec(), links, d, mode)
}

/// Binary relevance: each label trained on the raw features alone, stored as
/// a chain whose appended-label coefficients are zero.
pub fn train_independent(
    features: ArrayView2<'_, f64>,
    gold: ArrayView2<'_, bool>,
    taxonomy: &Taxonomy,
    order: &[usize],
    mode: FeatureMode,
    cfg: &TrainConfig,
) -> Result<ChainModel> {
    check_shapes(features, gold, taxonomy)?;
    check_order(order, taxonomy.len())?;
    let d = features.ncols();
    let links = order
        .iter()
        .enumerate()
        .map(|(k, &label)| {
            let targets = gold.column(label).to_vec();
            let mut link = logreg::train_binary(features, &targets, cfg)?;
            link.weights.resize(d + k, 0.0);
            Ok(link)
        })
        .collect::<Result<Vec<_>>>()?;
    ChainModel::new(taxonomy.clone(), order.to_vec(), links, d, mode)
}

/// Chained inference. Output columns follow taxonomy order regardless of the
/// chain order.
pub fn predict_chain(
    model: &ChainModel,
    features: ArrayView2<'_, f64>,
) -> Result<ProbabilityMatrix> {
    if features.ncols() != model.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim,
            actual: features.ncols(),
        });
    }
    let d = model.feature_dim;
    let mut out = Array2::<f64>::zeros((features.nrows(), model.n_labels()));
    for (row, mut probs) in features.rows().into_iter().zip(out.rows_mut()) {
        let mut chained = Vec::with_capacity(model.n_labels());
        for (link, &label) in model.links.iter().zip(&model.order) {
            let z = link_score(link, d, row, &chained);
            let p = sigmoid(z);
            chained.push(match model.feed {
                ChainFeed::Labels => f64::from(u8::from(z > 0.0)),
                ChainFeed::Probabilities => p,
            });
            probs[label] = p;
        }
    }
    Ok(ProbabilityMatrix(out))
}

fn link_score(link: &LinearModel, d: usize, row: ArrayView1<'_, f64>, earlier: &[f64]) -> f64 {
    let raw = dot(&link.weights[..d], row);
    let chained = link.weights[d..]
        .iter()
        .zip(earlier)
        .fold(raw, |acc, (w, p)| acc + w * p);
    chained + link.intercept
}

/// Applies the logistic sigmoid to every (already probabilistic) entry.
/// The result lies in `[0.5, σ(1)]`.
pub fn sharpen(probs: &ProbabilityMatrix) -> ProbabilityMatrix {
    ProbabilityMatrix(probs.0.mapv(sigmoid))
}
