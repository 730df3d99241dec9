//! Patch scorers: a linear model on spectral features calibrated by
//! Fisher discriminant analysis, and an out-of-process scorer speaking a
//! line-oriented protocol over stdin/stdout.

mod external;
pub mod protocol;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ClassLabel;
use crate::patch::Patch;
use crate::spectral::{spectral_features, FeatureConfig, SpectralFeatures};

pub use external::{ExternalScorer, ExternalScorerConfig, DEFAULT_TIMEOUT_MS};

/// Fewest feature vectors per class accepted by [`calibrate`].
pub const MIN_CALIBRATION_SAMPLES: usize = 10;
const RIDGE_SCALE: f64 = 1e-6;

/// Anything that maps a batch of patches to real-valued scores, higher
/// meaning more likely `positive_class`.
pub trait PatchScorer {
    fn score_patches(&mut self, patches: &[Patch]) -> Result<Vec<f64>>;
}

/// Linear decision function `w · φ(patch) + b` on spectral features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub weights: [f64; 3],
    pub bias: f64,
    pub positive_class: ClassLabel,
    pub feature_cfg: FeatureConfig,
}

impl ScorerModel {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().chain([&self.bias]).any(|v| !v.is_finite()) {
            return Err(Error::Model("weights and bias must be finite".into()));
        }
        if self.feature_cfg.factor == 0 {
            return Err(Error::Model("feature factor must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ScorerModel = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Model(m) => Error::Model(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn score_features(&self, f: &SpectralFeatures) -> f64 {
        let x = f.to_array();
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn score_patch(&self, patch: &Patch) -> Result<f64> {
        Ok(self.score_features(&spectral_features(patch, &self.feature_cfg)?))
    }
}

impl PatchScorer for ScorerModel {
    fn score_patches(&mut self, patches: &[Patch]) -> Result<Vec<f64>> {
        patches.iter().map(|p| self.score_patch(p)).collect()
    }
}

fn mean(xs: &[[f64; 3]]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for x in xs {
        for k in 0..3 {
            m[k] += x[k];
        }
    }
    m.map(|v| v / xs.len() as f64)
}

fn scatter(xs: &[[f64; 3]], m: &[f64; 3], acc: &mut [[f64; 3]; 3]) {
    for x in xs {
        for i in 0..3 {
            for j in 0..3 {
                acc[i][j] += (x[i] - m[i]) * (x[j] - m[j]);
            }
        }
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= scale * 1e-15 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Fisher linear discriminant between two sets of feature vectors.
///
/// The pooled within-class covariance is regularized with
/// `λ = 1e-6 · trace / 3` on the diagonal; the bias puts the decision
/// boundary halfway between the projected class means, so positives score
/// above zero.
pub fn calibrate(
    positives: &[SpectralFeatures],
    negatives: &[SpectralFeatures],
    positive_class: ClassLabel,
    feature_cfg: FeatureConfig,
) -> Result<ScorerModel> {
    let got = positives.len().min(negatives.len());
    if got < MIN_CALIBRATION_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_CALIBRATION_SAMPLES,
            got,
        });
    }
    let pos: Vec<[f64; 3]> = positives.iter().map(|f| f.to_array()).collect();
    let neg: Vec<[f64; 3]> = negatives.iter().map(|f| f.to_array()).collect();
    if pos.iter().chain(&neg).flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateCalibration("non-finite feature value".into()));
    }
    let (mp, mn) = (mean(&pos), mean(&neg));
    let mut cov = [[0.0; 3]; 3];
    scatter(&pos, &mp, &mut cov);
    scatter(&neg, &mn, &mut cov);
    let dof = (pos.len() + neg.len() - 2) as f64;
    cov.iter_mut().flatten().for_each(|v| *v /= dof);
    let trace = cov[0][0] + cov[1][1] + cov[2][2];
    if trace <= 0.0 {
        return Err(Error::DegenerateCalibration("features have no within-class variance".into()));
    }
    let lambda = RIDGE_SCALE * trace / 3.0;
    for (k, row) in cov.iter_mut().enumerate() {
        row[k] += lambda;
    }
    let diff = [mp[0] - mn[0], mp[1] - mn[1], mp[2] - mn[2]];
    if diff.iter().all(|d| *d == 0.0) {
        return Err(Error::DegenerateCalibration("class means coincide".into()));
    }
    let w = solve3(cov, diff)
        .ok_or_else(|| Error::DegenerateCalibration("singular within-class covariance".into()))?;
    let dot = |a: &[f64; 3]| w.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    let bias = -0.5 * (dot(&mp) + dot(&mn));
    let model = ScorerModel {
        weights: w,
        bias,
        positive_class,
        feature_cfg,
    };
    model
        .validate()
        .map_err(|e| Error::DegenerateCalibration(e.to_string()))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn feat(a: [f64; 3]) -> SpectralFeatures {
        SpectralFeatures {
            peak_strength: a[0],
            low_freq_ratio: a[1],
            flatness: a[2],
        }
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize, centre: [f64; 3], sd: [f64; 3]) -> Vec<SpectralFeatures> {
        (0..n)
            .map(|_| {
                let mut v = [0.0; 3];
                for k in 0..3 {
                    v[k] = centre[k] + sd[k] * rng.sample::<f64, _>(StandardNormal);
                }
                feat(v)
            })
            .collect()
    }

    #[test]
    fn separates_shifted_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pos = cloud(&mut rng, 200, [3.0, 0.2, 0.5], [0.3, 0.05, 0.05]);
        let neg = cloud(&mut rng, 200, [1.0, 0.2, 0.5], [0.3, 0.05, 0.05]);
        let m = calibrate(&pos, &neg, ClassLabel::Laundered, FeatureConfig::default()).unwrap();
        assert!(pos.iter().all(|f| m.score_features(f) > 0.0));
        assert!(neg.iter().all(|f| m.score_features(f) < 0.0));
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn matches_closed_form_for_diagonal_covariance() {
        // two clouds mirrored around a centre: pooled covariance is exact
        let base: Vec<[f64; 3]> = (0..12)
            .map(|i| {
                let t = i as f64;
                [(t * 0.7).sin(), (t * 1.3).cos(), ((t * 2.1).sin() * 3.0).tanh()]
            })
            .collect();
        let pos: Vec<_> = base.iter().map(|b| feat([b[0] + 1.0, b[1], b[2] - 0.5])).collect();
        let neg: Vec<_> = base.iter().map(|b| feat([b[0] - 1.0, b[1], b[2] + 0.5])).collect();
        let m = calibrate(&pos, &neg, ClassLabel::FullySynthetic, FeatureConfig::default()).unwrap();
        // oracle: same computation written out with explicit sums
        let mb = mean(&base);
        let mut s = [[0.0; 3]; 3];
        for b in &base {
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] += 2.0 * (b[i] - mb[i]) * (b[j] - mb[j]) / 22.0;
                }
            }
        }
        let lam = 1e-6 * (s[0][0] + s[1][1] + s[2][2]) / 3.0;
        for k in 0..3 {
            s[k][k] += lam;
        }
        // residual of (S + λI) w = Δμ
        let d = [2.0, 0.0, -1.0];
        for i in 0..3 {
            let lhs: f64 = (0..3).map(|j| s[i][j] * m.weights[j]).sum();
            assert!((lhs - d[i]).abs() < 1e-9, "{lhs} vs {}", d[i]);
        }
        // symmetric clouds ⇒ midpoint projection at the shared centre
        let c = mb;
        assert!(m.score_features(&feat(c)).abs() < 1e-9);
    }

    #[test]
    fn calibration_errors() {
        let f = vec![feat([1.0, 0.5, 0.5]); 20];
        let g = vec![feat([2.0, 0.5, 0.5]); 20];
        assert!(matches!(
            calibrate(&f[..9], &g, ClassLabel::Laundered, FeatureConfig::default()),
            Err(Error::TooFewSamples { required: 10, got: 9 })
        ));
        let e = calibrate(&f, &g, ClassLabel::Laundered, FeatureConfig::default()).unwrap_err();
        assert!(e.to_string().starts_with("degenerate calibration set"), "{e}");
        assert!(matches!(
            calibrate(&f, &f, ClassLabel::Laundered, FeatureConfig::default()),
            Err(Error::DegenerateCalibration(_))
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let m = ScorerModel {
            weights: [1.5, -2.0, 0.25],
            bias: -0.75,
            positive_class: ClassLabel::Laundered,
            feature_cfg: FeatureConfig::default(),
        };
        let js = m.to_json();
        assert!(js.contains("\"laundered\""));
        assert_eq!(ScorerModel::from_json(&js).unwrap(), m);
        assert!(matches!(ScorerModel::from_json("{}"), Err(Error::Model(_))));
        let bad = js.replace("1.5", "1e999");
        assert!(ScorerModel::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn scores_are_affine_in_features(a in prop::array::uniform3(-5.0f64..5.0), b in prop::array::uniform3(-5.0f64..5.0), t in 0.0f64..1.0) {
            let m = ScorerModel { weights: [0.3, -1.2, 2.0], bias: 0.1, positive_class: ClassLabel::Laundered, feature_cfg: FeatureConfig::default() };
            let mix = [0, 1, 2].map(|k| t * a[k] + (1.0 - t) * b[k]);
            let lhs = m.score_features(&feat(mix));
            let rhs = t * m.score_features(&feat(a)) + (1.0 - t) * m.score_features(&feat(b));
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn calibration_invariant_to_feature_scaling(seed in 0u64..200, s in 0.1f64..10.0) {
            // LDA is equivariant up to the small ridge term
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pos = cloud(&mut rng, 30, [2.0, 0.3, 0.6], [0.5, 0.1, 0.1]);
            let neg = cloud(&mut rng, 30, [1.0, 0.25, 0.65], [0.5, 0.1, 0.1]);
            let m = calibrate(&pos, &neg, ClassLabel::Laundered, FeatureConfig::default()).unwrap();
            let scaled = |v: &[SpectralFeatures]| v.iter().map(|f| feat([f.peak_strength * s, f.low_freq_ratio, f.flatness])).collect::<Vec<_>>();
            let m2 = calibrate(&scaled(&pos), &scaled(&neg), ClassLabel::Laundered, FeatureConfig::default()).unwrap();
            for f in pos.iter().chain(&neg) {
                let a = m.score_features(f);
                let b = m2.score_features(&feat([f.peak_strength * s, f.low_freq_ratio, f.flatness]));
                prop_assert!((a - b).abs() < 1e-2 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }
}
