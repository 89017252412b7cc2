//! Split conformal calibration in a discretized function space.
//!
//! Nonconformity scores are relative quadrature-weighted L² errors
//! `s_i = ‖û_i − u_i‖_w / ‖û_i‖_w`. The threshold `τ_α` is the
//! `⌈(1−α)(n+1)⌉`-th smallest calibration score, and the prediction set for a
//! new input is the ball of relative radius `τ_α / c₁` around the prediction.

use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, FcpError, Result};
use crate::grid::{ensure_same_grid, relative_unweighted_error, weighted_distance, weighted_norm, Field};

/// Which norm a score uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreNorm {
    /// Quadrature-weighted relative L² error.
    Weighted,
    /// Plain relative L² error over the sample vector (every point weight 1).
    Unweighted,
}

/// Outcome of calibrating on a set of scores.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    alpha: f64,
    scores: Vec<f64>,
    k_index: usize,
    tau: f64,
    c1: f64,
    c2: f64,
}

impl CalibrationResult {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Calibration scores in ascending order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// One-based rank `k = ⌈(1−α)(n+1)⌉` of the threshold score.
    pub fn k_index(&self) -> usize {
        self.k_index
    }

    /// Threshold `τ_α`; `+∞` when `k > n`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// True when the calibration set was too small and `τ` is infinite.
    pub fn conservative(&self) -> bool {
        self.k_index > self.scores.len()
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Upper bilipschitz constant. Stored for bookkeeping only.
    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// Replaces the bilipschitz constants. Requires `0 < c1 ≤ 1` and `c2 ≥ c1`.
    pub fn with_constants(mut self, c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1 <= 1.0) {
            return invalid(format!("c1 must lie in (0, 1], got {c1}"));
        }
        if !(c2 >= c1) || !c2.is_finite() {
            return invalid(format!("c2 must be finite and at least c1, got {c2}"));
        }
        self.c1 = c1;
        self.c2 = c2;
        Ok(self)
    }

    /// Fraction of a fresh exchangeable score expected to fall at or below
    /// `τ`, i.e. `k/(n+1)` (capped at 1).
    pub fn nominal_coverage(&self) -> f64 {
        (self.k_index as f64 / (self.scores.len() + 1) as f64).min(1.0)
    }
}

/// `⌈(1−α)(n+1)⌉`, with products that are integers up to rounding error
/// treated as exact so that e.g. `α = 0.1, n = 9` yields `k = 9`.
pub fn quantile_index(n: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let x = (1.0 - alpha) * (n + 1) as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok((k as usize).max(1))
}

/// Score of one prediction against its target.
pub fn score(pred: &Field, truth: &Field, norm: ScoreNorm) -> Result<f64> {
    match norm {
        ScoreNorm::Weighted => {
            let num = weighted_distance(pred, truth)?;
            let den = weighted_norm(pred);
            if den == 0.0 {
                return Err(FcpError::DegenerateDenominator {
                    context: "prediction".into(),
                });
            }
            Ok(num / den)
        }
        ScoreNorm::Unweighted => relative_unweighted_error(pred, truth),
    }
}

/// Relative weighted L² scores, one per `(prediction, truth)` pair.
pub fn nonconformity_scores(pairs: &[(Field, Field)]) -> Result<Vec<f64>> {
    nonconformity_scores_with(pairs, ScoreNorm::Weighted)
}

/// Scores under the chosen norm. A zero-norm prediction is reported with its
/// pair index.
pub fn nonconformity_scores_with(pairs: &[(Field, Field)], norm: ScoreNorm) -> Result<Vec<f64>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, (pred, truth))| {
            score(pred, truth, norm).map_err(|e| match e {
                FcpError::DegenerateDenominator { .. } => FcpError::DegenerateDenominator {
                    context: format!("prediction {i}"),
                },
                other => other,
            })
        })
        .collect()
}

/// Split conformal calibration at level `alpha` with `c₁ = c₂ = 1`.
pub fn calibrate(scores: &[f64], alpha: f64) -> Result<CalibrationResult> {
    if scores.is_empty() {
        return invalid("cannot calibrate on an empty score list");
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite() || *s < 0.0) {
        return invalid(format!("score {i} is negative or not finite ({})", scores[i]));
    }
    let k_index = quantile_index(scores.len(), alpha)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tau = if k_index <= sorted.len() {
        sorted[k_index - 1]
    } else {
        f64::INFINITY
    };
    Ok(CalibrationResult {
        alpha,
        scores: sorted,
        k_index,
        tau,
        c1: 1.0,
        c2: 1.0,
    })
}

/// Radius `τ_α / c₁` of the function-space ball.
pub fn functional_radius(calib: &CalibrationResult) -> f64 {
    calib.tau / calib.c1
}

/// Functional and pointwise coverage of a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    /// `C_f`: fraction of test functions with score ≤ τ.
    pub functional: f64,
    /// `C_e`: fraction of grid points inside the supplied bounds.
    pub pointwise: Option<f64>,
    pub n_functions: usize,
    pub n_points: usize,
    /// `max(0, (1−α) − C_f)`.
    pub tv_lower_bound: f64,
}

/// Fraction of scores at or below `tau`.
pub fn functional_coverage(scores: &[f64], tau: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s <= tau).count() as f64 / scores.len() as f64
}

/// Number of points of `truth` lying inside `[lower, upper]`.
pub fn points_inside(lower: &Field, upper: &Field, truth: &Field) -> Result<usize> {
    ensure_same_grid(lower, truth)?;
    ensure_same_grid(upper, truth)?;
    Ok(truth
        .values()
        .iter()
        .zip(lower.values().iter().zip(upper.values()))
        .filter(|(t, (l, u))| **l <= **t && **t <= **u)
        .count())
}

/// Coverage of `pairs` (prediction, truth) at radius `tau`. When `bounds`
/// are supplied (one `(lower, upper)` per pair) the pointwise rate over all
/// grid points is reported as well.
pub fn coverage(
    pairs: &[(Field, Field)],
    tau: f64,
    alpha: f64,
    bounds: Option<&[(Field, Field)]>,
) -> Result<CoverageReport> {
    if pairs.is_empty() {
        return invalid("coverage needs at least one test pair");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let scores = nonconformity_scores(pairs)?;
    let functional = functional_coverage(&scores, tau);
    let n_points: usize = pairs.iter().map(|(_, t)| t.len()).sum();
    let pointwise = match bounds {
        None => None,
        Some(b) => {
            if b.len() != pairs.len() {
                return invalid(format!(
                    "{} bound pairs supplied for {} test pairs",
                    b.len(),
                    pairs.len()
                ));
            }
            let mut inside = 0;
            for ((lo, hi), (_, truth)) in b.iter().zip(pairs) {
                inside += points_inside(lo, hi, truth)?;
            }
            Some(inside as f64 / n_points as f64)
        }
    };
    Ok(CoverageReport {
        functional,
        pointwise,
        n_functions: pairs.len(),
        n_points,
        tv_lower_bound: drift_gap(alpha, functional),
    })
}

/// `max(0, (1−α) − coverage)`, a lower bound on the total-variation distance
/// between calibration and deployment distributions.
pub fn drift_gap(alpha: f64, coverage: f64) -> f64 {
    ((1.0 - alpha) - coverage).max(0.0)
}

/// Negative log-volume of the ellipsoid `{h : Σ w_k h_k² ≤ τ²}` in `R^d`:
/// `½ Σ log w_k − d log τ + ln Γ(d/2 + 1) − (d/2) log π`.
///
/// The value is signed; it is negative whenever the ellipsoid has volume
/// above one.
pub fn log_volume_score(weights: &[f64], tau: f64, d: usize) -> Result<f64> {
    if weights.len() != d {
        return invalid(format!("expected {d} weights, got {}", weights.len()));
    }
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
        return invalid(format!("weight {i} is not positive ({})", weights[i]));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return invalid(format!("tau must be positive and finite, got {tau}"));
    }
    let half_d = 0.5 * d as f64;
    let log_w: f64 = weights.iter().map(|w| w.ln()).sum();
    Ok(0.5 * log_w - d as f64 * tau.ln() + ln_gamma(half_d + 1.0) - half_d * std::f64::consts::PI.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn field(grid: &Grid, v: &[f64]) -> Field {
        Field::new(grid.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn scores_examples() {
        let g = Grid::uniform(&[2]).unwrap();
        let a = field(&g, &[1.0, 2.0]);
        let b = field(&g, &[3.0, -1.0]);
        assert_eq!(
            nonconformity_scores(&[(a.clone(), a.clone()), (b.clone(), b.clone())]).unwrap(),
            vec![0.0, 0.0]
        );
        let s = nonconformity_scores(&[(a.scaled(2.0), a.clone()), (b.scaled(2.0), b.clone())]).unwrap();
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.5, epsilon = 1e-15);

        // pred (1,2) vs truth (0,1): sqrt(0.5·1 + 0.5·1) / sqrt(0.5·1 + 0.5·4)
        let p = field(&g, &[1.0, 2.0]);
        let t = field(&g, &[0.0, 1.0]);
        // pred (3,-1) vs truth (2,1): sqrt(0.5·1 + 0.5·4) / sqrt(0.5·9 + 0.5·1)
        let p2 = field(&g, &[3.0, -1.0]);
        let t2 = field(&g, &[2.0, 1.0]);
        let s = nonconformity_scores(&[(p, t), (p2, t2)]).unwrap();
        assert_abs_diff_eq!(s[0], (1.0f64 / 2.5).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], (2.5f64 / 5.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn zero_prediction_reports_index() {
        let g = Grid::uniform(&[2]).unwrap();
        let a = field(&g, &[1.0, 2.0]);
        let err = nonconformity_scores(&[(a.clone(), a.clone()), (Field::zeros(&g), a)]).unwrap_err();
        assert_eq!(
            err,
            FcpError::DegenerateDenominator {
                context: "prediction 1".into()
            }
        );
    }

    #[test]
    fn calibrate_examples() {
        let nine: Vec<f64> = (1..=9).map(f64::from).collect();
        let c = calibrate(&nine, 0.1).unwrap();
        assert_eq!(c.k_index(), 9);
        assert_eq!(c.tau(), 9.0);
        assert!(!c.conservative());

        let nineteen: Vec<f64> = (1..=19).rev().map(f64::from).collect();
        let c = calibrate(&nineteen, 0.1).unwrap();
        assert_eq!(c.k_index(), 18);
        assert_eq!(c.tau(), 18.0);

        let c = calibrate(&[0.3], 0.1).unwrap();
        assert_eq!(c.k_index(), 2);
        assert!(c.tau().is_infinite());
        assert!(c.conservative());
    }

    #[test]
    fn calibrate_rejects_bad_input() {
        assert!(matches!(calibrate(&[], 0.1), Err(FcpError::InvalidArgument(_))));
        assert!(matches!(calibrate(&[1.0], 0.0), Err(FcpError::InvalidArgument(_))));
        assert!(matches!(calibrate(&[1.0], 1.0), Err(FcpError::InvalidArgument(_))));
        assert!(calibrate(&[1.0, f64::NAN], 0.1).is_err());
    }

    #[test]
    fn radius_examples() {
        let c = calibrate(&[0.01, 0.02, 0.03], 0.25).unwrap();
        assert_eq!(c.tau(), 0.03);
        assert_eq!(functional_radius(&c), 0.03);
        let half = c.clone().with_constants(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(functional_radius(&half), 0.06, epsilon = 1e-15);
        assert!(c.clone().with_constants(0.0, 1.0).is_err());
        assert!(c.with_constants(-1.0, 1.0).is_err());
        let inf = calibrate(&[0.1], 0.1).unwrap();
        assert!(functional_radius(&inf).is_infinite());
    }

    #[test]
    fn coverage_examples() {
        let g = Grid::uniform(&[2]).unwrap();
        let u = field(&g, &[1.0, -1.0]);
        let pairs = vec![(u.clone(), u.clone()); 3];
        let r = coverage(&pairs, 0.1, 0.1, None).unwrap();
        assert_eq!(r.functional, 1.0);
        assert_eq!(r.tv_lower_bound, 0.0);
        assert_eq!(r.pointwise, None);

        assert_eq!(functional_coverage(&[0.1, 0.2, 0.3, 0.4], 0.25), 0.5);

        let bounds: Vec<(Field, Field)> = pairs
            .iter()
            .map(|(_, t)| (t.map(|v| v - 1.0), t.map(|v| v + 1.0)))
            .collect();
        let r = coverage(&pairs, 0.1, 0.1, Some(&bounds)).unwrap();
        assert_eq!(r.pointwise, Some(1.0));
        assert_eq!(r.n_points, 6);

        let other = Grid::uniform(&[3]).unwrap();
        let bad = vec![(Field::zeros(&other), Field::zeros(&other)); 3];
        assert!(matches!(
            coverage(&pairs, 0.1, 0.1, Some(&bad)),
            Err(FcpError::InvalidArgument(_))
        ));
    }

    #[test]
    fn drift_gap_examples() {
        assert_abs_diff_eq!(drift_gap(0.1, 0.8), 0.1, epsilon = 1e-15);
        assert_eq!(drift_gap(0.1, 0.95), 0.0);
    }

    #[test]
    fn log_volume_examples() {
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(
            log_volume_score(&[1.0, 1.0], 1.0, 2).unwrap(),
            -pi.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            log_volume_score(&[1.0, 1.0], 0.5, 2).unwrap(),
            -(pi * 0.25).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(-(pi * 0.25f64).ln(), 0.24157, epsilon = 1e-5);
        let w = [0.3, 0.2, 0.5];
        let base = log_volume_score(&w, 0.7, 3).unwrap();
        let doubled = log_volume_score(&w.map(|x| 2.0 * x), 0.7, 3).unwrap();
        assert_abs_diff_eq!(doubled - base, 1.5 * 2f64.ln(), epsilon = 1e-12);
        assert!(log_volume_score(&[1.0, 0.0], 1.0, 2).is_err());
        assert!(log_volume_score(&[1.0, 1.0], 0.0, 2).is_err());
        assert!(log_volume_score(&[1.0], 1.0, 2).is_err());
    }

    #[test]
    fn marginal_coverage_monte_carlo() {
        let n = 100;
        let reps = 400;
        let n_test = 500;
        let mut total = 0.0;
        for rep in 0..reps {
            let mut rng = stream_rng(11, rep);
            let cal: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let c = calibrate(&cal, 0.1).unwrap();
            let test: Vec<f64> = (0..n_test).map(|_| rng.random::<f64>()).collect();
            total += functional_coverage(&test, c.tau());
        }
        let mean = total / reps as f64;
        assert!((mean - 91.0 / 101.0).abs() < 0.02, "mean coverage {mean}");
    }

    fn brute_force_tau(scores: &[f64], alpha_milli: u32) -> f64 {
        let n = scores.len() as u64;
        let k = ((1000 - alpha_milli as u64) * (n + 1)).div_ceil(1000) as usize;
        let mut s = scores.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if k > s.len() {
            f64::INFINITY
        } else {
            s[k - 1]
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn calibrate_matches_brute_force(
            scores in prop::collection::vec(0.0f64..10.0, 1..=50),
            alpha_milli in 1u32..1000,
        ) {
            let alpha = alpha_milli as f64 / 1000.0;
            let c = calibrate(&scores, alpha).unwrap();
            prop_assert_eq!(c.tau(), brute_force_tau(&scores, alpha_milli));
        }
    }

    proptest! {
        #[test]
        fn tau_nonincreasing_in_alpha(
            scores in prop::collection::vec(0.0f64..1.0, 1..=40),
            a in 0.01f64..0.99,
            b in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let t_lo = calibrate(&scores, lo).unwrap().tau();
            let t_hi = calibrate(&scores, hi).unwrap().tau();
            prop_assert!(t_hi <= t_lo);
        }

        #[test]
        fn coverage_nondecreasing_in_tau(
            scores in prop::collection::vec(0.0f64..1.0, 1..=40),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(functional_coverage(&scores, lo) <= functional_coverage(&scores, hi));
        }

        #[test]
        fn drift_gap_zero_when_covered(alpha in 0.01f64..0.99, cov in 0.0f64..1.0) {
            let g = drift_gap(alpha, cov);
            prop_assert!((0.0..=1.0).contains(&g));
            if cov >= 1.0 - alpha {
                prop_assert_eq!(g, 0.0);
            }
        }

        #[test]
        fn log_volume_matches_direct_volume(
            w in prop::collection::vec(0.01f64..5.0, 1..=3),
            tau in 0.01f64..5.0,
        ) {
            let axes: Vec<f64> = w.iter().map(|wk| tau / wk.sqrt()).collect();
            let volume = match axes.len() {
                1 => 2.0 * axes[0],
                2 => std::f64::consts::PI * axes[0] * axes[1],
                _ => 4.0 / 3.0 * std::f64::consts::PI * axes[0] * axes[1] * axes[2],
            };
            let s = log_volume_score(&w, tau, w.len()).unwrap();
            prop_assert!((s + volume.ln()).abs() < 1e-10);
        }
    }
}
