//! Element-wise fusion of image and text embeddings.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Which embedding(s) feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    #[default]
    Fused,
    ImageOnly,
    TextOnly,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Fused => "fused",
            FeatureMode::ImageOnly => "image",
            FeatureMode::TextOnly => "text",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(FeatureMode::Fused),
            "image" | "image_only" => Ok(FeatureMode::ImageOnly),
            "text" | "text_only" => Ok(FeatureMode::TextOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown feature mode `{other}`"
            ))),
        }
    }
}

/// A fused feature vector; all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `out[k] = image[k] * text[k]`.
pub fn fuse(image: &[f64], text: &[f64]) -> Result<FeatureVector> {
    if image.len() != text.len() {
        return Err(Error::DimensionMismatch {
            expected: image.len(),
            actual: text.len(),
        });
    }
    if image.iter().chain(text).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding"));
    }
    let out: Vec<f64> = image.iter().zip(text).map(|(a, b)| a * b).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fused feature"));
    }
    Ok(FeatureVector(out))
}

/// N×d feature matrix in dataset order.
pub fn featurize(ds: &Dataset, mode: FeatureMode) -> Result<Array2<f64>> {
    let d = ds.dim().unwrap_or(0);
    let mut out = Array2::zeros((ds.len(), d));
    for (mut row, ex) in out.rows_mut().into_iter().zip(ds.examples()) {
        match mode {
            FeatureMode::Fused => {
                let fused = fuse(&ex.image_embedding, &ex.text_embedding)?;
                row.iter_mut()
                    .zip(fused.values())
                    .for_each(|(r, v)| *r = *v);
            }
            FeatureMode::ImageOnly => {
                row.iter_mut()
                    .zip(&ex.image_embedding)
                    .for_each(|(r, v)| *r = *v);
            }
            FeatureMode::TextOnly => {
                row.iter_mut()
                    .zip(&ex.text_embedding)
                    .for_each(|(r, v)| *r = *v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Example, Origin, Taxonomy};
    use proptest::prelude::*;

    fn ds(rows: &[(Vec<f64>, Vec<f64>)]) -> Dataset {
        let examples = rows
            .iter()
            .enumerate()
            .map(|(i, (img, txt))| Example {
                id: i.to_string(),
                group: i.to_string(),
                image_embedding: img.clone(),
                text_embedding: txt.clone(),
                origin: Origin::Original,
                gold: None,
            })
            .collect();
        Dataset::new(Taxonomy::new(["a"]).unwrap(), examples).unwrap()
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(
            fuse(&[1.0, 2.0, 3.0], &[1.0; 3]).unwrap().values(),
            &[1.0, 2.0, 3.0]
        );
        assert_eq!(
            fuse(&[1.0, 2.0], &[3.0, 4.0]).unwrap().values(),
            &[3.0, 8.0]
        );
        assert_eq!(
            fuse(&[0.0, 5.0], &[7.0, 0.0]).unwrap().values(),
            &[0.0, 0.0]
        );
    }

    #[test]
    fn fuse_errors() {
        assert!(matches!(
            fuse(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            fuse(&[f64::NAN], &[1.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(fuse(&[1e200], &[1e200]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn featurize_modes() {
        let d = ds(&[
            (vec![1.0, 2.0], vec![3.0, 4.0]),
            (vec![-1.0, 0.5], vec![2.0, 2.0]),
        ]);
        let fused = featurize(&d, FeatureMode::Fused).unwrap();
        assert_eq!(fused, ndarray::array![[3.0, 8.0], [-2.0, 1.0]]);
        let image = featurize(&d, FeatureMode::ImageOnly).unwrap();
        assert_eq!(image, ndarray::array![[1.0, 2.0], [-1.0, 0.5]]);
        let text = featurize(&d, FeatureMode::TextOnly).unwrap();
        assert_eq!(text, ndarray::array![[3.0, 4.0], [2.0, 2.0]]);
    }

    #[test]
    fn featurize_empty() {
        let empty = Dataset::empty(Taxonomy::new(["a"]).unwrap());
        assert_eq!(
            featurize(&empty, FeatureMode::TextOnly).unwrap().dim(),
            (0, 0)
        );
    }

    #[test]
    fn mode_parsing() {
        for mode in [
            FeatureMode::Fused,
            FeatureMode::ImageOnly,
            FeatureMode::TextOnly,
        ] {
            assert_eq!(mode.to_string().parse::<FeatureMode>().unwrap(), mode);
        }
        assert!("both".parse::<FeatureMode>().is_err());
    }

    fn vecs(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, n)
    }

    proptest! {
        #[test]
        fn fuse_is_commutative_and_bilinear(
            (x, y, z) in (1usize..8).prop_flat_map(|n| (vecs(n), vecs(n), vecs(n))),
            a in -10.0f64..10.0,
        ) {
            let xy = fuse(&x, &y).unwrap();
            let yx = fuse(&y, &x).unwrap();
            prop_assert_eq!(xy.values(), yx.values());
            let ident = fuse(&x, &vec![1.0; x.len()]).unwrap();
            prop_assert_eq!(ident.values(), &x[..]);

            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            let lhs = fuse(&ax, &y).unwrap();
            for (l, r) in lhs.values().iter().zip(xy.values()) {
                prop_assert!((l - a * r).abs() <= 1e-9 * (1.0 + r.abs() * a.abs()));
            }
            let x_plus_z: Vec<f64> = x.iter().zip(&z).map(|(p, q)| p + q).collect();
            let lhs = fuse(&x_plus_z, &y).unwrap();
            let zy = fuse(&z, &y).unwrap();
            for ((l, r1), r2) in lhs.values().iter().zip(xy.values()).zip(zy.values()) {
                prop_assert!((l - (r1 + r2)).abs() <= 1e-9 * (1.0 + r1.abs() + r2.abs()));
            }
        }

        #[test]
        fn fused_rows_match_fuse(
            rows in (1usize..5).prop_flat_map(|d| prop::collection::vec((vecs(d), vecs(d)), 0..6))
        ) {
            let data = ds(&rows);
            let m = featurize(&data, FeatureMode::Fused).unwrap();
            for (n, (img, txt)) in rows.iter().enumerate() {
                let expected = fuse(img, txt).unwrap();
                prop_assert_eq!(m.row(n).to_vec(), expected.into_inner());
            }
        }
    }
}
