//! Analytic drift predictions for noisy agent pipelines: the cumulative-error
//! law `E[E_ceg] ≈ c·(σ/√k)·T^{3/2}`, its correlated-noise generalization, and
//! the drift-corrected spectral gains ρ̃ and ρ̃_c.

use crate::graph::CommGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Zero-mean noise family applied to agent outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    Gaussian,
    Uniform,
}

/// Per-agent noise description: standard deviation σ, the systemic share
/// ρ_c = σ_b²/σ² ∈ [0, 1] of variance common to all agents at a step, the
/// distribution family, and an optional flip probability for the categorical
/// fields (an extension; 0 keeps noise strictly on the Value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub rho_c: f64,
    #[serde(default = "NoiseSpec::default_distribution")]
    pub distribution: NoiseDistribution,
    #[serde(default)]
    pub p_flip: f64,
}

impl NoiseSpec {
    fn default_distribution() -> NoiseDistribution {
        NoiseDistribution::Gaussian
    }

    /// Gaussian noise with no systemic component.
    pub fn gaussian(sigma: f64) -> Result<Self, DriftError> {
        Self::new(sigma, 0.0, NoiseDistribution::Gaussian, 0.0)
    }

    pub fn new(
        sigma: f64,
        rho_c: f64,
        distribution: NoiseDistribution,
        p_flip: f64,
    ) -> Result<Self, DriftError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(DriftError::BadSigma(sigma));
        }
        if !(0.0..=1.0).contains(&rho_c) {
            return Err(DriftError::BadCorrelation(rho_c));
        }
        if !(0.0..=1.0).contains(&p_flip) {
            return Err(DriftError::BadFlipProbability(p_flip));
        }
        Ok(NoiseSpec { sigma, rho_c, distribution, p_flip })
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma: 1.0,
            rho_c: 0.0,
            distribution: NoiseDistribution::Gaussian,
            p_flip: 0.0,
        }
    }
}

/// Per-agent aggregation counts k_i ≥ 1: how many independent outputs are
/// averaged into agent i's state per step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KProfile(Vec<usize>);

impl KProfile {
    pub fn new(k: Vec<usize>) -> Result<Self, DriftError> {
        if k.is_empty() || k.iter().any(|&v| v < 1) {
            return Err(DriftError::BadProfile);
        }
        Ok(KProfile(k))
    }

    /// Uniform profile: every one of `n` agents aggregates `k` outputs.
    pub fn uniform(n: usize, k: usize) -> Result<Self, DriftError> {
        if n == 0 {
            return Err(DriftError::BadProfile);
        }
        Self::new(vec![k; n])
    }

    /// Literal reading from a graph: k_i is the in-degree of agent i
    /// (self-loops excluded), floored at 1 for non-aggregating agents.
    pub fn literal(graph: &CommGraph) -> Self {
        KProfile(
            graph
                .in_degrees_excluding_self()
                .iter()
                .map(|&d| d.max(1))
                .collect(),
        )
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.0.iter().map(|&k| f(k as f64)).sum::<f64>() / self.0.len() as f64
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DriftError {
    #[error("sigma must be finite and >= 0, got {0}")]
    BadSigma(f64),
    #[error("rho_c must lie in [0, 1], got {0}")]
    BadCorrelation(f64),
    #[error("flip probability must lie in [0, 1], got {0}")]
    BadFlipProbability(f64),
    #[error("aggregation profile must be nonempty with every count >= 1")]
    BadProfile,
    #[error("observed ratio {ratio} outside [1, sqrt(k)] = [1, {sqrt_k}]")]
    RatioOutOfRange { ratio: f64, sqrt_k: f64 },
}

/// Predicted cumulative error `c·σ·T^{3/2}/√k`.
pub fn predict_ceg(sigma: f64, k: usize, steps: usize, c: f64) -> f64 {
    assert!(sigma >= 0.0 && k >= 1 && steps >= 1 && c > 0.0);
    c * sigma * (steps as f64).powf(1.5) / (k as f64).sqrt()
}

/// Variance of a k-fold aggregated step under systemic correlation:
/// `(σ²/k)·[1 + (k−1)ρ_c]`.
pub fn aggregated_variance(sigma: f64, k: usize, rho_c: f64) -> f64 {
    assert!(sigma >= 0.0 && k >= 1 && (0.0..=1.0).contains(&rho_c));
    let kf = k as f64;
    (sigma * sigma / kf) * (1.0 + (kf - 1.0) * rho_c)
}

/// Error-ratio prediction generalized from √k: `√(k / [1 + (k−1)ρ_c])`.
pub fn ratio_with_correlation(k: usize, rho_c: f64) -> f64 {
    assert!(k >= 1 && (0.0..=1.0).contains(&rho_c));
    let kf = k as f64;
    (kf / (1.0 + (kf - 1.0) * rho_c)).sqrt()
}

/// Inverts [`ratio_with_correlation`]: `ρ_c = (k/ratio² − 1)/(k − 1)`,
/// clamped to [0, 1]. For k = 1 the only consistent ratio is 1 and every
/// correlation is indistinguishable; 0 is returned by convention.
pub fn infer_rho_c(observed_ratio: f64, k: usize) -> Result<f64, DriftError> {
    assert!(k >= 1);
    let sqrt_k = (k as f64).sqrt();
    if !(1.0..=sqrt_k).contains(&observed_ratio) {
        return Err(DriftError::RatioOutOfRange { ratio: observed_ratio, sqrt_k });
    }
    if k == 1 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let rho = (kf / (observed_ratio * observed_ratio) - 1.0) / (kf - 1.0);
    Ok(rho.clamp(0.0, 1.0))
}

/// Drift-corrected gain `ρ(M)·√((1/n) Σ_i 1/k_i)`.
pub fn rho_tilde(rho: f64, k: &KProfile) -> f64 {
    rho * k.mean_of(|ki| 1.0 / ki).sqrt()
}

/// Correlated-noise gain `ρ(M)·√((1/n) Σ_i (1 + (k_i − 1)ρ_c)/k_i)`.
/// Recovers [`rho_tilde`] at ρ_c = 0 and plain ρ at ρ_c = 1.
pub fn rho_tilde_corr(rho: f64, k: &KProfile, rho_c: f64) -> f64 {
    assert!((0.0..=1.0).contains(&rho_c));
    rho * k.mean_of(|ki| (1.0 + (ki - 1.0) * rho_c) / ki).sqrt()
}

/// Least-squares calibration (through the origin) of the constant in the
/// cumulative-error law against measured `(T, mean E_ceg)` pairs.
pub fn calibrate_c(points: &[(usize, f64)], sigma: f64, k: usize) -> f64 {
    assert!(!points.is_empty() && sigma > 0.0 && k >= 1);
    let mut xy = 0.0;
    let mut xx = 0.0;
    for &(t, y) in points {
        let x = sigma * (t as f64).powf(1.5) / (k as f64).sqrt();
        xy += x * y;
        xx += x * x;
    }
    xy / xx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_chain, make_mesh, make_star};
    use approx::assert_abs_diff_eq;

    #[test]
    fn predict_ceg_cases() {
        assert_abs_diff_eq!(predict_ceg(0.0, 1, 10, 2.0), 0.0);
        assert_abs_diff_eq!(predict_ceg(1.0, 1, 4, 1.0), 8.0);
        for &(sigma, t, c) in &[(0.5, 7usize, 1.3), (2.0, 12, 0.8), (1.0, 33, 2.2)] {
            let ratio = predict_ceg(sigma, 1, t, c) / predict_ceg(sigma, 4, t, c);
            assert_abs_diff_eq!(ratio, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_ceg_scaling_properties() {
        // Degree-1 homogeneous in sigma, monotone in T.
        assert_abs_diff_eq!(
            predict_ceg(3.0, 2, 9, 1.1),
            3.0 * predict_ceg(1.0, 2, 9, 1.1),
            epsilon = 1e-12
        );
        assert!(predict_ceg(1.0, 2, 10, 1.0) > predict_ceg(1.0, 2, 9, 1.0));
    }

    #[test]
    fn aggregated_variance_cases() {
        assert_abs_diff_eq!(aggregated_variance(2.0, 4, 0.0), 1.0);
        assert_abs_diff_eq!(aggregated_variance(2.0, 4, 1.0), 4.0);
        assert_abs_diff_eq!(aggregated_variance(2.0, 4, 0.5), 2.5);
    }

    #[test]
    fn ratio_cases() {
        assert_abs_diff_eq!(ratio_with_correlation(4, 0.0), 2.0);
        assert_abs_diff_eq!(ratio_with_correlation(4, 1.0), 1.0);
        assert_abs_diff_eq!(ratio_with_correlation(9, 0.0), 3.0);
        assert_abs_diff_eq!(ratio_with_correlation(4, 0.0923), 1.77, epsilon = 5e-3);
        // Monotone decreasing in rho_c for k > 1.
        let mut prev = f64::INFINITY;
        for i in 0..=10 {
            let v = ratio_with_correlation(4, i as f64 / 10.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn infer_rho_c_cases() {
        assert_abs_diff_eq!(infer_rho_c(2.0, 4).unwrap(), 0.0);
        assert_abs_diff_eq!(infer_rho_c(1.0, 4).unwrap(), 1.0);
        assert_abs_diff_eq!(infer_rho_c(1.77, 4).unwrap(), 0.092, epsilon = 1e-3);
        assert_abs_diff_eq!(infer_rho_c(1.0, 1).unwrap(), 0.0);
        assert!(matches!(infer_rho_c(2.1, 4), Err(DriftError::RatioOutOfRange { .. })));
        assert!(matches!(infer_rho_c(0.9, 4), Err(DriftError::RatioOutOfRange { .. })));
    }

    #[test]
    fn inference_round_trips_on_a_grid() {
        for &k in &[2usize, 4, 9] {
            for i in 0..=10 {
                let rho_c = i as f64 / 10.0;
                let back = infer_rho_c(ratio_with_correlation(k, rho_c), k).unwrap();
                assert_abs_diff_eq!(back, rho_c, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rho_tilde_cases() {
        let ones = KProfile::uniform(12, 1).unwrap();
        assert_abs_diff_eq!(rho_tilde(1.0, &ones), 1.0);
        let fours = KProfile::uniform(5, 4).unwrap();
        assert_abs_diff_eq!(rho_tilde(10.0, &fours), 5.0);
        let star_literal = KProfile::new(vec![4, 1, 1, 1, 1]).unwrap();
        assert_abs_diff_eq!(rho_tilde(10.0, &star_literal), 10.0 * 0.85f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(rho_tilde(10.0, &star_literal), 9.22, epsilon = 5e-3);
    }

    #[test]
    fn rho_tilde_corr_cases() {
        let fours = KProfile::uniform(5, 4).unwrap();
        assert_abs_diff_eq!(rho_tilde_corr(10.0, &fours, 0.0), rho_tilde(10.0, &fours));
        assert_abs_diff_eq!(rho_tilde_corr(10.0, &fours, 1.0), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho_tilde_corr(10.0, &fours, 0.5), 7.906, epsilon = 5e-4);
        let mixed = KProfile::new(vec![4, 1, 1, 1, 1]).unwrap();
        assert_abs_diff_eq!(rho_tilde_corr(10.0, &mixed, 1.0), 10.0, epsilon = 1e-12);
        // Monotone interpolation between rho_tilde and rho.
        let mut prev = 0.0;
        for i in 0..=10 {
            let v = rho_tilde_corr(10.0, &fours, i as f64 / 10.0);
            assert!(v >= prev && v >= rho_tilde(10.0, &fours) - 1e-12 && v <= 10.0 + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn literal_profiles_from_graphs() {
        assert_eq!(KProfile::literal(&make_chain(12).unwrap()).counts(), vec![1; 12]);
        assert_eq!(
            KProfile::literal(&make_star(4).unwrap()).counts(),
            vec![4, 1, 1, 1, 1]
        );
        assert_eq!(KProfile::literal(&make_mesh(4).unwrap()).counts(), vec![3, 3, 3, 3]);
    }

    #[test]
    fn calibration_recovers_a_planted_constant() {
        let c = 1.7;
        let pts: Vec<(usize, f64)> =
            [4usize, 8, 16, 32].iter().map(|&t| (t, predict_ceg(1.0, 1, t, c))).collect();
        assert_abs_diff_eq!(calibrate_c(&pts, 1.0, 1), c, epsilon = 1e-12);
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::new(1.0, 0.5, NoiseDistribution::Uniform, 0.0).is_ok());
        assert!(matches!(
            NoiseSpec::new(-1.0, 0.0, NoiseDistribution::Gaussian, 0.0),
            Err(DriftError::BadSigma(_))
        ));
        assert!(matches!(
            NoiseSpec::new(1.0, 1.5, NoiseDistribution::Gaussian, 0.0),
            Err(DriftError::BadCorrelation(_))
        ));
        assert!(matches!(
            NoiseSpec::new(1.0, 0.5, NoiseDistribution::Gaussian, 2.0),
            Err(DriftError::BadFlipProbability(_))
        ));
        assert!(KProfile::new(vec![]).is_err());
        assert!(KProfile::new(vec![1, 0]).is_err());
    }
}
