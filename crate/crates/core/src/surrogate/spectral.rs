//! Truncated spectral linear operators fit by ridge regression.
//!
//! Inputs and outputs are represented by their coefficients in a tensor
//! product of orthonormal 1D bases on `[0,1]`. Coefficients are computed by
//! quadrature against the grid weights, which is exact on uniform grids for
//! band-limited fields, and fields are synthesized by evaluating the series at
//! the target grid's cell centers. The operator itself is a dense matrix from
//! input coefficients (plus a constant feature) to output coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, FcpError, Result};
use crate::grid::{relative_weighted_error, Field, Grid};

/// 1D orthonormal basis used along every axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    /// `1, √2 cos(2πkx), √2 sin(2πkx)` for `k = 1..M−1` (size `2M−1`).
    Fourier,
    /// `1, √2 cos(πkx)` for `k = 1..M−1` (size `M`); suited to
    /// non-periodic fields.
    Cosine,
}

impl Basis {
    /// Number of basis functions per axis for `modes` retained modes.
    pub fn size(self, modes: usize) -> usize {
        match self {
            Basis::Fourier => 2 * modes - 1,
            Basis::Cosine => modes,
        }
    }

    /// Largest `modes` that is sampled without aliasing on `n` uniform cells.
    pub fn max_modes(self, n: usize) -> usize {
        match self {
            Basis::Fourier => (n / 2).max(1),
            Basis::Cosine => n,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Basis::Fourier => 0,
            Basis::Cosine => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Basis::Fourier),
            1 => Some(Basis::Cosine),
            _ => None,
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn eval(self, modes: usize, x: f64, out: &mut [f64]) {
        let s2 = std::f64::consts::SQRT_2;
        out[0] = 1.0;
        match self {
            Basis::Fourier => {
                for k in 1..modes {
                    let a = std::f64::consts::TAU * k as f64 * x;
                    out[2 * k - 1] = s2 * a.cos();
                    out[2 * k] = s2 * a.sin();
                }
            }
            Basis::Cosine => {
                for k in 1..modes {
                    out[k] = s2 * (std::f64::consts::PI * k as f64 * x).cos();
                }
            }
        }
    }
}

/// `N × B` table of basis values at the cell centers of one axis.
fn synthesis_table(basis: Basis, modes: usize, centers: &[f64]) -> Vec<f64> {
    let b = basis.size(modes);
    let mut t = vec![0.0; centers.len() * b];
    for (i, &x) in centers.iter().enumerate() {
        basis.eval(modes, x, &mut t[i * b..(i + 1) * b]);
    }
    t
}

/// `B × N` table of basis values times cell widths.
fn analysis_table(basis: Basis, modes: usize, centers: &[f64], spacings: &[f64]) -> Vec<f64> {
    let b = basis.size(modes);
    let n = centers.len();
    let syn = synthesis_table(basis, modes, centers);
    let mut t = vec![0.0; b * n];
    for i in 0..n {
        for k in 0..b {
            t[k * n + i] = syn[i * b + k] * spacings[i];
        }
    }
    t
}

/// Replaces axis `axis` (length `shape[axis]`) by `rows` entries through the
/// row-major matrix `m` of size `rows × shape[axis]`.
fn apply_axis(data: &[f64], shape: &[usize], axis: usize, m: &[f64], rows: usize) -> Vec<f64> {
    let len = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        let src = &data[o * len * inner..(o + 1) * len * inner];
        let dst = &mut out[o * rows * inner..(o + 1) * rows * inner];
        for r in 0..rows {
            let row = &m[r * len..(r + 1) * len];
            let d = &mut dst[r * inner..(r + 1) * inner];
            for (j, &c) in row.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let s = &src[j * inner..(j + 1) * inner];
                for (di, si) in d.iter_mut().zip(s) {
                    *di += c * si;
                }
            }
        }
    }
    out
}

/// Precomputed per-axis tables for one grid.
pub(crate) struct GridTransform {
    grid: Grid,
    basis_size: usize,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
}

impl GridTransform {
    pub(crate) fn new(basis: Basis, modes: usize, grid: &Grid) -> Self {
        let analysis = (0..grid.dim())
            .map(|a| analysis_table(basis, modes, grid.centers(a), grid.spacings(a)))
            .collect();
        let synthesis = (0..grid.dim())
            .map(|a| synthesis_table(basis, modes, grid.centers(a)))
            .collect();
        GridTransform {
            grid: grid.clone(),
            basis_size: basis.size(modes),
            analysis,
            synthesis,
        }
    }

    /// Coefficients `Σ_j w_j φ_b(x_j) v_j` of grid values `v`.
    pub(crate) fn analyze(&self, values: &[f64]) -> Vec<f64> {
        let mut shape = self.grid.shape().to_vec();
        let mut data = values.to_vec();
        for axis in 0..shape.len() {
            data = apply_axis(&data, &shape, axis, &self.analysis[axis], self.basis_size);
            shape[axis] = self.basis_size;
        }
        data
    }

    /// Grid values of the series with coefficients `coeffs`.
    pub(crate) fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut shape = vec![self.basis_size; self.grid.dim()];
        let mut data = coeffs.to_vec();
        for axis in 0..shape.len() {
            let n = self.grid.shape()[axis];
            data = apply_axis(&data, &shape, axis, &self.synthesis[axis], n);
            shape[axis] = n;
        }
        data
    }
}

/// A fitted linear map between truncated spectral representations.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOperator {
    dim: usize,
    basis: Basis,
    modes: usize,
    ridge: f64,
    /// `Q × P`: output coefficients from input coefficients plus a constant.
    weights: DMatrix<f64>,
    train_residual: f64,
}

impl SpectralOperator {
    /// Assembles an operator from stored parts; `weights` is row-major
    /// `n_outputs × n_features`.
    pub fn from_parts(
        dim: usize,
        basis: Basis,
        modes: usize,
        ridge: f64,
        weights: Vec<f64>,
        train_residual: f64,
    ) -> Result<Self> {
        if dim == 0 || modes == 0 {
            return invalid("dimension and modes must be at least 1");
        }
        let q = basis.size(modes).pow(dim as u32);
        let p = q + 1;
        if weights.len() != q * p {
            return invalid(format!("expected {} coefficients, got {}", q * p, weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(FcpError::Numeric("operator coefficients are not finite".into()));
        }
        Ok(SpectralOperator {
            dim,
            basis,
            modes,
            ridge,
            weights: DMatrix::from_row_slice(q, p, &weights),
            train_residual,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Retained modes per axis.
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Mean relative weighted error on the training pairs, recorded at fit time.
    pub fn train_residual(&self) -> f64 {
        self.train_residual
    }

    /// Number of output coefficients `Q = B^D`.
    pub fn n_outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Number of input features `P = B^D + 1`.
    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    /// Coefficient matrix in row-major order.
    pub fn coefficients(&self) -> Vec<f64> {
        self.weights.transpose().as_slice().to_vec()
    }

    pub(crate) fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub(crate) fn with_weights(&self, weights: DMatrix<f64>) -> Self {
        SpectralOperator {
            weights,
            ..self.clone()
        }
    }

    /// Checks dimension and aliasing limits for sampling on `grid`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        check_grid(self.basis, self.modes, self.dim, grid)
    }

    pub(crate) fn transform(&self, grid: &Grid) -> Result<GridTransform> {
        self.check_grid(grid)?;
        Ok(GridTransform::new(self.basis, self.modes, grid))
    }

    /// Feature vector (input coefficients followed by the constant 1).
    pub fn features(&self, input: &Field) -> Result<DVector<f64>> {
        let t = self.transform(input.grid())?;
        Ok(features_from(&t, input.values()))
    }

    /// Output series coefficients for a feature vector.
    pub fn output_coefficients(&self, features: &DVector<f64>) -> DVector<f64> {
        &self.weights * features
    }

    /// Evaluates the output series on `target`.
    pub fn synthesize(&self, coeffs: &[f64], target: &Grid) -> Result<Field> {
        let t = self.transform(target)?;
        Field::new(target.clone(), t.synthesize(coeffs))
    }

    /// Applies the operator to `input` and samples the result on `target`.
    pub fn predict(&self, input: &Field, target: &Grid) -> Result<Field> {
        let x = self.features(input)?;
        let c = self.output_coefficients(&x);
        self.synthesize(c.as_slice(), target)
    }
}

pub(crate) fn features_from(t: &GridTransform, values: &[f64]) -> DVector<f64> {
    let mut c = t.analyze(values);
    c.push(1.0);
    DVector::from_vec(c)
}

fn check_grid(basis: Basis, modes: usize, dim: usize, grid: &Grid) -> Result<()> {
    if grid.dim() != dim {
        return invalid(format!("operator is {dim}-D but the grid is {}-D", grid.dim()));
    }
    for (axis, &n) in grid.shape().iter().enumerate() {
        if modes > basis.max_modes(n) {
            return invalid(format!(
                "{modes} retained modes exceed the resolvable limit {} of axis {axis} ({n} cells)",
                basis.max_modes(n)
            ));
        }
    }
    Ok(())
}

/// Fits a Fourier-basis operator; see [`fit_spectral_operator_with`].
pub fn fit_spectral_operator(train: &[(Field, Field)], modes: usize, ridge: f64) -> Result<SpectralOperator> {
    fit_spectral_operator_with(train, Basis::Fourier, modes, ridge)
}

/// Ridge regression `min_W Σ_i ‖c_out,i − W x_i‖² + λ‖W‖²` where `x_i` are
/// the input coefficients with a trailing constant feature.
pub fn fit_spectral_operator_with(
    train: &[(Field, Field)],
    basis: Basis,
    modes: usize,
    ridge: f64,
) -> Result<SpectralOperator> {
    if train.is_empty() {
        return invalid("training set is empty");
    }
    if modes == 0 {
        return invalid("at least one mode must be retained");
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return invalid(format!("ridge must be finite and nonnegative, got {ridge}"));
    }
    let in_grid = train[0].0.grid().clone();
    let out_grid = train[0].1.grid().clone();
    if let Some(i) = train
        .iter()
        .position(|(a, b)| !a.grid().same_as(&in_grid) || !b.grid().same_as(&out_grid))
    {
        return invalid(format!("training pair {i} is not on the common grid"));
    }
    let dim = in_grid.dim();
    if out_grid.dim() != dim {
        return invalid("input and output grids differ in dimension");
    }
    check_grid(basis, modes, dim, &in_grid)?;
    check_grid(basis, modes, dim, &out_grid)?;

    let t_in = GridTransform::new(basis, modes, &in_grid);
    let t_out = GridTransform::new(basis, modes, &out_grid);
    let q = basis.size(modes).pow(dim as u32);
    let p = q + 1;
    let n = train.len();
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DMatrix::<f64>::zeros(n, q);
    for (i, (input, output)) in train.iter().enumerate() {
        let fi = features_from(&t_in, input.values());
        let co = t_out.analyze(output.values());
        for j in 0..p {
            x[(i, j)] = fi[j];
        }
        for j in 0..q {
            y[(i, j)] = co[j];
        }
    }
    let mut gram = x.transpose() * &x;
    for j in 0..p {
        gram[(j, j)] += ridge;
    }
    let rhs = x.transpose() * &y;
    let singular = || {
        FcpError::Rank(format!(
            "normal equations are singular ({n} samples, {p} features); use ridge > 0"
        ))
    };
    let chol = gram.clone().cholesky().ok_or_else(singular)?;
    let l_diag = chol.l_dirty().diagonal();
    let (dmin, dmax) = l_diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    if ridge == 0.0 && !(dmin > 1e-7 * dmax) {
        return Err(singular());
    }
    let z = chol.solve(&rhs);
    let weights = z.transpose();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(FcpError::Numeric("ridge solution is not finite".into()));
    }
    let mut op = SpectralOperator {
        dim,
        basis,
        modes,
        ridge,
        weights,
        train_residual: 0.0,
    };
    op.train_residual = mean_relative_error(&op, train)?;
    Ok(op)
}

/// Mean relative weighted error of `op` on `pairs`, skipping zero predictions.
pub fn mean_relative_error(op: &SpectralOperator, pairs: &[(Field, Field)]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (input, output) in pairs {
        let pred = op.predict(input, output.grid())?;
        match relative_weighted_error(&pred, output) {
            Ok(r) => {
                total += r;
                count += 1;
            }
            Err(FcpError::DegenerateDenominator { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{resample, weighted_norm};
    use crate::pde::random_field::{grf_series, FourierSeries, RandomFieldSpec};
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn band_limited(dim: usize, max_mode: usize, seed: u64, index: u64) -> FourierSeries {
        grf_series(&RandomFieldSpec::new(max_mode, 0.5, 1.0, seed), dim, index).unwrap()
    }

    /// Applies `mult(|m|)` to every Fourier mode of a 1D series.
    fn apply_multiplier(s: &FourierSeries, mult: impl Fn(i32) -> f64, offset_gain: f64) -> FourierSeries {
        let mut out = s.clone();
        out.offset = offset_gain * s.offset;
        for m in &mut out.modes {
            let g = mult(m.wavevector[0]);
            m.cos *= g;
            m.sin *= g;
        }
        out
    }

    #[test]
    fn analysis_synthesis_round_trip() {
        let g = Grid::uniform(&[16, 12]).unwrap();
        let t = GridTransform::new(Basis::Fourier, 5, &g);
        let s = band_limited(2, 4, 1, 0);
        let f = s.discretize(&g).unwrap();
        let back = t.synthesize(&t.analyze(f.values()));
        for (a, b) in back.iter().zip(f.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let c = GridTransform::new(Basis::Cosine, 12, &Grid::uniform(&[12]).unwrap());
        let v: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        for (a, b) in c.synthesize(&c.analyze(&v)).iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn recovers_planted_multiplier() {
        let g = Grid::uniform(&[32]).unwrap();
        let mult = |k: i32| 1.0 / (1.0 + (k * k) as f64);
        let train: Vec<(Field, Field)> = (0..40)
            .map(|i| {
                let mut s = band_limited(1, 7, 2, i);
                s.offset = 0.3 * (i as f64 - 20.0) / 20.0;
                let out = apply_multiplier(&s, mult, 0.5);
                (s.discretize(&g).unwrap(), out.discretize(&g).unwrap())
            })
            .collect();
        let op = fit_spectral_operator(&train, 8, 0.0).unwrap();
        let w = op.weights();
        let b = Basis::Fourier.size(8);
        for r in 0..b {
            for c in 0..b {
                let k = (r as i32 + 1) / 2;
                let expected = if r == c {
                    if r == 0 {
                        0.5
                    } else {
                        mult(k)
                    }
                } else {
                    0.0
                };
                assert_abs_diff_eq!(w[(r, c)], expected, epsilon = 1e-8);
            }
        }
        assert!(op.train_residual() < 1e-10);
    }

    #[test]
    fn identity_training_reproduces_inputs() {
        let g = Grid::uniform(&[16, 16]).unwrap();
        let train: Vec<(Field, Field)> = (0..60)
            .map(|i| {
                let f = band_limited(2, 3, 3, i).discretize(&g).unwrap();
                (f.clone(), f)
            })
            .collect();
        let op = fit_spectral_operator(&train, 4, 1e-12).unwrap();
        for (input, output) in &train {
            let p = op.predict(input, &g).unwrap();
            let err = p
                .values()
                .iter()
                .zip(output.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let g = Grid::uniform(&[16]).unwrap();
        let train: Vec<(Field, Field)> = (0..10)
            .map(|i| {
                let f = band_limited(1, 3, 4, i).discretize(&g).unwrap();
                (f.clone(), f.scaled(2.0))
            })
            .collect();
        let op = fit_spectral_operator(&train, 4, 1e14).unwrap();
        assert!(op.coefficients().iter().all(|c| c.abs() < 1e-12));
        let p = op.predict(&train[0].0, &g).unwrap();
        assert!(weighted_norm(&p) < 1e-12);
    }

    #[test]
    fn singular_without_ridge() {
        let g = Grid::uniform(&[16]).unwrap();
        let train: Vec<(Field, Field)> = (0..3)
            .map(|i| {
                let f = band_limited(1, 3, 5, i).discretize(&g).unwrap();
                (f.clone(), f)
            })
            .collect();
        let err = fit_spectral_operator(&train, 6, 0.0).unwrap_err();
        assert!(matches!(err, FcpError::Rank(_)));
        assert!(err.to_string().contains("ridge > 0"));
        assert!(fit_spectral_operator(&train, 6, 1e-6).is_ok());
    }

    #[test]
    fn nyquist_limits() {
        let g = Grid::uniform(&[8]).unwrap();
        let f = Field::constant(&g, 1.0);
        assert!(fit_spectral_operator(&[(f.clone(), f.clone())], 5, 1.0).is_err());
        let op = fit_spectral_operator(&[(f.clone(), f.clone())], 4, 1.0).unwrap();
        assert!(op.predict(&f, &Grid::uniform(&[6]).unwrap()).is_err());
        assert!(op.predict(&f, &Grid::uniform(&[64]).unwrap()).is_ok());
    }

    fn trained_2d() -> (SpectralOperator, Grid) {
        let g = Grid::uniform(&[16, 16]).unwrap();
        let mut rng = stream_rng(9, 0);
        let gains: Vec<f64> = (0..49).map(|_| rng.random_range(0.2..1.0)).collect();
        let train: Vec<(Field, Field)> = (0..80)
            .map(|i| {
                let s = band_limited(2, 3, 6, i);
                let mut o = s.clone();
                for (m, gain) in o.modes.iter_mut().zip(&gains) {
                    m.cos *= gain;
                    m.sin *= -gain;
                }
                (s.discretize(&g).unwrap(), o.discretize(&g).unwrap())
            })
            .collect();
        (fit_spectral_operator(&train, 4, 1e-10).unwrap(), g)
    }

    #[test]
    fn resolution_consistency_on_nested_centers() {
        let (op, g) = trained_2d();
        let input = band_limited(2, 3, 7, 0).discretize(&g).unwrap();
        // centers of a 12-cell axis coincide with every third center of 36 cells
        let coarse = Grid::uniform(&[12, 12]).unwrap();
        let fine = Grid::uniform(&[36, 36]).unwrap();
        let direct = op.predict(&input, &coarse).unwrap();
        let via_fine = resample(&op.predict(&input, &fine).unwrap(), &coarse).unwrap();
        for (a, b) in direct.values().iter().zip(via_fine.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn error_against_band_limited_truth_is_resolution_free() {
        let (op, g) = trained_2d();
        let s = band_limited(2, 3, 8, 1);
        let input = s.discretize(&g).unwrap();
        let truth = s.clone();
        let r: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let tg = Grid::uniform(&[n, n]).unwrap();
                let p = op.predict(&input, &tg).unwrap();
                relative_weighted_error(&p, &truth.discretize(&tg).unwrap()).unwrap()
            })
            .collect();
        assert!(r[0] > 1e-3);
        assert_abs_diff_eq!(r[0], r[1], epsilon = 1e-6);
        assert_abs_diff_eq!(r[1], r[2], epsilon = 1e-6);
    }

    #[test]
    fn from_parts_round_trip() {
        let (op, _) = trained_2d();
        let back = SpectralOperator::from_parts(
            op.dim(),
            op.basis(),
            op.modes(),
            op.ridge(),
            op.coefficients(),
            op.train_residual(),
        )
        .unwrap();
        assert_eq!(back, op);
        assert!(SpectralOperator::from_parts(2, Basis::Fourier, 4, 0.0, vec![0.0; 3], 0.0).is_err());
    }
}
