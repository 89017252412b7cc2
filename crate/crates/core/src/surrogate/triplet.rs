//! Quantile triplet `(û^lo, û^mid, û^hi)` of spectral operators.
//!
//! The middle head is the ridge fit. The outer heads start from it and take
//! fixed-size subgradient steps on the mean pinball loss of the pointwise
//! residuals, weighted by the quadrature weights of the training grid:
//!
//! `L_q(W) = (1/n) Σ_i Σ_j w_j ρ_q(y_ij − ŷ_ij(W))`, `ρ_q(r) = r (q − 1[r<0])`.
//!
//! Subgradient descent is not monotone, so the best iterate seen so far is
//! kept and reported.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::spectral::{features_from, fit_spectral_operator_with, Basis, GridTransform, SpectralOperator};
use crate::error::{invalid, FcpError, Result};
use crate::grid::{Field, Grid};

/// `ρ_q(r) = r (q − 1[r < 0])`.
pub fn pinball_loss(r: f64, q: f64) -> f64 {
    if r < 0.0 {
        r * (q - 1.0)
    } else {
        r * q
    }
}

/// A subgradient of [`pinball_loss`] in `r` (zero at the kink).
pub fn pinball_subgradient(r: f64, q: f64) -> f64 {
    if r > 0.0 {
        q
    } else if r < 0.0 {
        q - 1.0
    } else {
        0.0
    }
}

/// Training options for the outer heads.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileOptions {
    pub q_lo: f64,
    pub q_hi: f64,
    pub steps: usize,
    /// Step size in units of the RMS training output. Each feature column of
    /// the coefficient matrix moves by `step_size · rms(y) / mean(x_p²)` times
    /// its subgradient, i.e. plain fixed-step descent in standardized features.
    pub step_size: f64,
    /// Ridge used for the middle head.
    pub ridge: f64,
    pub basis: Basis,
    /// Number of loss checkpoints recorded per head.
    pub checkpoints: usize,
}

impl Default for QuantileOptions {
    fn default() -> Self {
        QuantileOptions {
            q_lo: 0.05,
            q_hi: 0.95,
            steps: 300,
            step_size: 0.01,
            ridge: 1e-8,
            basis: Basis::Fourier,
            checkpoints: 20,
        }
    }
}

impl QuantileOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.q_lo && self.q_lo < 0.5 && 0.5 < self.q_hi && self.q_hi < 1.0) {
            return invalid(format!(
                "quantile levels must satisfy 0 < q_lo < 0.5 < q_hi < 1, got ({}, {})",
                self.q_lo, self.q_hi
            ));
        }
        if self.steps == 0 {
            return invalid("at least one optimization step is required");
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return invalid("step size must be positive");
        }
        Ok(())
    }
}

/// Quadrature-weighted mean pinball objective over a fixed training set.
pub struct PinballObjective {
    transform: GridTransform,
    weights: Vec<f64>,
    features: DMatrix<f64>,
    targets: Vec<Vec<f64>>,
    output_rms: f64,
    /// Mean square of each feature over the training set.
    feature_scale: Vec<f64>,
}

impl PinballObjective {
    /// Precomputes features of `train` inputs for operators shaped like `op`.
    pub fn new(op: &SpectralOperator, train: &[(Field, Field)]) -> Result<Self> {
        if train.is_empty() {
            return invalid("training set is empty");
        }
        let out_grid = train[0].1.grid().clone();
        let t_in = op.transform(train[0].0.grid())?;
        let transform = op.transform(&out_grid)?;
        let p = op.n_features();
        let mut features = DMatrix::<f64>::zeros(p, train.len());
        let mut targets = Vec::with_capacity(train.len());
        for (i, (input, output)) in train.iter().enumerate() {
            if !output.grid().same_as(&out_grid) || !input.grid().same_as(train[0].0.grid()) {
                return invalid(format!("training pair {i} is not on the common grid"));
            }
            features.set_column(i, &features_from(&t_in, input.values()));
            targets.push(output.values().to_vec());
        }
        let count = (train.len() * out_grid.len()) as f64;
        let output_rms = (targets.iter().flatten().map(|v| v * v).sum::<f64>() / count).sqrt();
        let feature_scale = features
            .row_iter()
            .map(|r| r.norm_squared() / train.len() as f64)
            .collect();
        Ok(PinballObjective {
            transform,
            weights: out_grid.weights().to_vec(),
            features,
            targets,
            output_rms,
            feature_scale,
        })
    }

    fn per_sample<T: Send>(&self, w: &DMatrix<f64>, f: impl Fn(&[f64], &[f64]) -> T + Sync) -> Vec<T> {
        let coeffs = w * &self.features;
        (0..self.targets.len())
            .into_par_iter()
            .map(|i| {
                let pred = self.transform.synthesize(coeffs.column(i).as_slice());
                f(&pred, &self.targets[i])
            })
            .collect()
    }

    /// `L_q(W)`.
    pub fn loss(&self, w: &DMatrix<f64>, q: f64) -> f64 {
        let parts = self.per_sample(w, |pred, y| {
            pred.iter()
                .zip(y)
                .zip(&self.weights)
                .map(|((p, t), wj)| wj * pinball_loss(t - p, q))
                .sum::<f64>()
        });
        parts.iter().sum::<f64>() / self.targets.len() as f64
    }

    /// `L_q(W)` and a subgradient with respect to `W`.
    pub fn loss_and_gradient(&self, w: &DMatrix<f64>, q: f64) -> (f64, DMatrix<f64>) {
        let n = self.targets.len() as f64;
        let parts = self.per_sample(w, |pred, y| {
            let mut loss = 0.0;
            let mut g = vec![0.0; pred.len()];
            for (j, (p, t)) in pred.iter().zip(y).enumerate() {
                let r = t - p;
                loss += self.weights[j] * pinball_loss(r, q);
                g[j] = -pinball_subgradient(r, q) / n;
            }
            // analyze applies the quadrature weights
            (loss, self.transform.analyze(&g))
        });
        let q_out = w.nrows();
        let mut d = DMatrix::<f64>::zeros(q_out, parts.len());
        let mut loss = 0.0;
        for (i, (l, c)) in parts.iter().enumerate() {
            loss += l;
            d.set_column(i, &nalgebra::DVector::from_column_slice(c));
        }
        (loss / n, d * self.features.transpose())
    }

    /// Applies one preconditioned step `W ← W − η G D⁻¹`, where `D` holds the
    /// mean square of each feature. Features that vanish on the whole training
    /// set are left untouched.
    fn step(&self, w: &mut DMatrix<f64>, grad: &DMatrix<f64>, step_size: f64) {
        let eta = step_size * self.output_rms;
        for (p, &s) in self.feature_scale.iter().enumerate() {
            if s <= 1e-300 {
                continue;
            }
            let mut col = w.column_mut(p);
            col.axpy(-eta / s, &grad.column(p), 1.0);
        }
    }
}

/// Result of optimizing one quantile head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadFit {
    pub operator: SpectralOperator,
    /// Best loss so far at evenly spaced checkpoints (first entry is the
    /// starting loss).
    pub checkpoints: Vec<f64>,
}

/// Subgradient descent on `L_q` starting from `start`.
pub fn fit_quantile_head(
    objective: &PinballObjective,
    start: &SpectralOperator,
    q: f64,
    steps: usize,
    step_size: f64,
    checkpoints: usize,
) -> Result<HeadFit> {
    let mut w = start.weights().clone();
    let (loss0, mut grad) = objective.loss_and_gradient(&w, q);
    let mut history = vec![loss0];
    if loss0 <= 1e-12 * objective.output_rms {
        // pinball loss is nonnegative, so the start is already optimal
        return Ok(HeadFit {
            operator: start.clone(),
            checkpoints: history,
        });
    }
    let every = (steps / checkpoints.max(1)).max(1);
    let mut best = (loss0, w.clone());
    for step in 1..=steps {
        objective.step(&mut w, &grad, step_size);
        let (loss, g) = objective.loss_and_gradient(&w, q);
        // A start that is already near zero loss can grow by orders of
        // magnitude in one harmless step, so growth is judged against a small
        // fraction of the output scale as well.
        let floor = loss0.max(1e-3 * objective.output_rms);
        if !loss.is_finite() || loss > 10.0 * floor {
            return Err(FcpError::Numeric(format!(
                "pinball descent diverged at step {step} (loss {loss:e} vs initial {loss0:e}); reduce the step size"
            )));
        }
        if loss < best.0 {
            best = (loss, w.clone());
        }
        grad = g;
        if step % every == 0 || step == steps {
            history.push(best.0);
        }
    }
    Ok(HeadFit {
        operator: start.with_weights(best.1),
        checkpoints: history,
    })
}

/// Lower, middle and upper quantile operators.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletPredictor {
    pub lo: SpectralOperator,
    pub mid: SpectralOperator,
    pub hi: SpectralOperator,
    pub q_lo: f64,
    pub q_hi: f64,
    /// Best-so-far training loss checkpoints of the lower head.
    pub history_lo: Vec<f64>,
    /// Best-so-far training loss checkpoints of the upper head.
    pub history_hi: Vec<f64>,
}

impl TripletPredictor {
    pub fn from_heads(
        lo: SpectralOperator,
        mid: SpectralOperator,
        hi: SpectralOperator,
        q_lo: f64,
        q_hi: f64,
    ) -> Result<Self> {
        if lo.modes() != mid.modes()
            || hi.modes() != mid.modes()
            || lo.basis() != mid.basis()
            || hi.basis() != mid.basis()
        {
            return invalid("triplet heads must share modes and basis");
        }
        if !(0.0 < q_lo && q_lo < 0.5 && 0.5 < q_hi && q_hi < 1.0) {
            return invalid("quantile levels must satisfy 0 < q_lo < 0.5 < q_hi < 1");
        }
        Ok(TripletPredictor {
            lo,
            mid,
            hi,
            q_lo,
            q_hi,
            history_lo: Vec::new(),
            history_hi: Vec::new(),
        })
    }

    /// `(lo, mid, hi)` predictions on `target`.
    pub fn predict(&self, input: &Field, target: &Grid) -> Result<(Field, Field, Field)> {
        Ok((
            self.lo.predict(input, target)?,
            self.mid.predict(input, target)?,
            self.hi.predict(input, target)?,
        ))
    }
}

/// Fits the three heads on `train` with `modes` retained modes per axis.
pub fn fit_quantile_triplet(
    train: &[(Field, Field)],
    modes: usize,
    opts: &QuantileOptions,
) -> Result<TripletPredictor> {
    opts.validate()?;
    let mid = fit_spectral_operator_with(train, opts.basis, modes, opts.ridge)?;
    let objective = PinballObjective::new(&mid, train)?;
    let lo = fit_quantile_head(
        &objective,
        &mid,
        opts.q_lo,
        opts.steps,
        opts.step_size,
        opts.checkpoints,
    )?;
    let hi = fit_quantile_head(
        &objective,
        &mid,
        opts.q_hi,
        opts.steps,
        opts.step_size,
        opts.checkpoints,
    )?;
    Ok(TripletPredictor {
        lo: lo.operator,
        mid,
        hi: hi.operator,
        q_lo: opts.q_lo,
        q_hi: opts.q_hi,
        history_lo: lo.checkpoints,
        history_hi: hi.checkpoints,
    })
}
