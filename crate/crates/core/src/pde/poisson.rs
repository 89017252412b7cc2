//! 2D Poisson problem `Δu = f` on `[0,1]²` with `u = 0` on the boundary.
//!
//! Five-point cell-centered stencil on tensor-product grids with arbitrary
//! spacing. Along each axis the second derivative at a cell center is
//! `2/(h₋+h₊) · [(u₊ − u)/h₊ − (u − u₋)/h₋]`, where `h₋, h₊` are the distances
//! to the neighboring centers. For the first and last cells the neighbor is
//! the boundary itself, half a cell away, carrying the value 0.

use crate::error::{invalid, FcpError, Result};
use crate::grid::{Field, Grid};

/// Linear solver used for the discrete system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoissonMethod {
    /// Banded LU factorization.
    Direct,
    /// Jacobi iteration until the residual max-norm drops below `tol`.
    Jacobi { tol: f64, max_iterations: usize },
}

impl PoissonMethod {
    pub fn jacobi(tol: f64) -> Self {
        PoissonMethod::Jacobi {
            tol,
            max_iterations: 1_000_000,
        }
    }
}

/// Per-axis stencil weights for the minus and plus neighbors.
fn axis_coefficients(grid: &Grid, axis: usize) -> (Vec<f64>, Vec<f64>) {
    let c = grid.centers(axis);
    let n = c.len();
    let mut minus = Vec::with_capacity(n);
    let mut plus = Vec::with_capacity(n);
    for i in 0..n {
        let hm = if i == 0 { c[0] } else { c[i] - c[i - 1] };
        let hp = if i + 1 == n { 1.0 - c[n - 1] } else { c[i + 1] - c[i] };
        let s = 2.0 / (hm + hp);
        minus.push(s / hm);
        plus.push(s / hp);
    }
    (minus, plus)
}

/// Banded LU factors stored row by row: entry `(i, j)` at `i*(2b+1) + j − i + b`.
struct BandLu {
    n: usize,
    b: usize,
    data: Vec<f64>,
}

impl BandLu {
    fn width(&self) -> usize {
        2 * self.b + 1
    }

    /// Factorizes in place without pivoting. The negated Laplacian is an
    /// irreducibly diagonally dominant M-matrix, for which this is stable.
    fn factor(n: usize, b: usize, mut data: Vec<f64>) -> Result<Self> {
        let w = 2 * b + 1;
        for k in 0..n {
            let pivot = data[k * w + b];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(FcpError::Numeric(format!("zero pivot at row {k}")));
            }
            let end = (k + b + 1).min(n);
            for i in k + 1..end {
                let lik = data[i * w + k + b - i] / pivot;
                if lik == 0.0 {
                    continue;
                }
                data[i * w + k + b - i] = lik;
                for j in k + 1..end {
                    data[i * w + j + b - i] -= lik * data[k * w + j + b - k];
                }
            }
        }
        Ok(BandLu { n, b, data })
    }

    #[allow(clippy::needless_range_loop)]
    fn solve(&self, rhs: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.width());
        for i in 0..n {
            let start = i.saturating_sub(b);
            let mut s = rhs[i];
            for j in start..i {
                s -= self.data[i * w + j + b - i] * rhs[j];
            }
            rhs[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + b + 1).min(n);
            let mut s = rhs[i];
            for j in i + 1..end {
                s -= self.data[i * w + j + b - i] * rhs[j];
            }
            rhs[i] = s / self.data[i * w + b];
        }
    }
}

/// Discrete Laplacian on a fixed 2D grid together with its factorization.
/// Building it once and solving many right-hand sides amortizes the LU cost.
pub struct PoissonSolver {
    grid: Grid,
    // axis 0 (slow index) and axis 1 (fast index) neighbor weights
    x_minus: Vec<f64>,
    x_plus: Vec<f64>,
    y_minus: Vec<f64>,
    y_plus: Vec<f64>,
    lu: BandLu,
}

impl PoissonSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        if grid.dim() != 2 {
            return invalid("Poisson solver expects a 2D grid");
        }
        let (x_minus, x_plus) = axis_coefficients(grid, 0);
        let (y_minus, y_plus) = axis_coefficients(grid, 1);
        let (n0, n1) = (grid.shape()[0], grid.shape()[1]);
        let n = n0 * n1;
        let b = n1;
        let w = 2 * b + 1;
        // Assemble −Δ so the matrix has a positive diagonal.
        let mut data = vec![0.0; n * w];
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let r = i0 * n1 + i1;
                data[r * w + b] = x_minus[i0] + x_plus[i0] + y_minus[i1] + y_plus[i1];
                if i0 > 0 {
                    data[r * w + b - n1] = -x_minus[i0];
                }
                if i0 + 1 < n0 {
                    data[r * w + b + n1] = -x_plus[i0];
                }
                if i1 > 0 {
                    data[r * w + b - 1] = -y_minus[i1];
                }
                if i1 + 1 < n1 {
                    data[r * w + b + 1] = -y_plus[i1];
                }
            }
        }
        let lu = BandLu::factor(n, b, data)?;
        Ok(PoissonSolver {
            grid: grid.clone(),
            x_minus,
            x_plus,
            y_minus,
            y_plus,
            lu,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check_rhs(&self, f: &Field) -> Result<()> {
        if !f.grid().same_as(&self.grid) {
            return invalid("right-hand side lives on a different grid than the solver");
        }
        Ok(())
    }

    /// Applies the discrete Laplacian.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check_rhs(u)?;
        let v = u.values();
        let (n0, n1) = (self.grid.shape()[0], self.grid.shape()[1]);
        let mut out = vec![0.0; v.len()];
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let r = i0 * n1 + i1;
                let mut s = -(self.x_minus[i0] + self.x_plus[i0] + self.y_minus[i1] + self.y_plus[i1]) * v[r];
                if i0 > 0 {
                    s += self.x_minus[i0] * v[r - n1];
                }
                if i0 + 1 < n0 {
                    s += self.x_plus[i0] * v[r + n1];
                }
                if i1 > 0 {
                    s += self.y_minus[i1] * v[r - 1];
                }
                if i1 + 1 < n1 {
                    s += self.y_plus[i1] * v[r + 1];
                }
                out[r] = s;
            }
        }
        Field::new(self.grid.clone(), out)
    }

    /// Max-norm of `f − Δu`.
    pub fn residual_max(&self, u: &Field, f: &Field) -> Result<f64> {
        let lap = self.apply(u)?;
        Ok(lap
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (b - a).abs())
            .fold(0.0, f64::max))
    }

    /// Direct solve.
    pub fn solve(&self, f: &Field) -> Result<Field> {
        self.check_rhs(f)?;
        let mut x: Vec<f64> = f.values().iter().map(|v| -v).collect();
        self.lu.solve(&mut x);
        Field::new(self.grid.clone(), x)
    }

    /// Jacobi iteration from zero. Returns the solution and the iteration count.
    pub fn solve_jacobi(&self, f: &Field, tol: f64, max_iterations: usize) -> Result<(Field, usize)> {
        self.check_rhs(f)?;
        if !(tol > 0.0) {
            return invalid(format!("Jacobi tolerance must be positive, got {tol}"));
        }
        let fv = f.values();
        let (n0, n1) = (self.grid.shape()[0], self.grid.shape()[1]);
        let mut u = vec![0.0; fv.len()];
        let mut next = vec![0.0; fv.len()];
        let mut residual = f64::INFINITY;
        for it in 0..max_iterations {
            residual = 0.0;
            for i0 in 0..n0 {
                for i1 in 0..n1 {
                    let r = i0 * n1 + i1;
                    let diag = self.x_minus[i0] + self.x_plus[i0] + self.y_minus[i1] + self.y_plus[i1];
                    let mut off = 0.0;
                    if i0 > 0 {
                        off += self.x_minus[i0] * u[r - n1];
                    }
                    if i0 + 1 < n0 {
                        off += self.x_plus[i0] * u[r + n1];
                    }
                    if i1 > 0 {
                        off += self.y_minus[i1] * u[r - 1];
                    }
                    if i1 + 1 < n1 {
                        off += self.y_plus[i1] * u[r + 1];
                    }
                    // residual of the current iterate, f − (off − diag·u)
                    residual = f64::max(residual, (fv[r] - off + diag * u[r]).abs());
                    next[r] = (off - fv[r]) / diag;
                }
            }
            if !residual.is_finite() {
                return Err(FcpError::Numeric(format!(
                    "Jacobi residual not finite at iteration {it}"
                )));
            }
            if residual < tol {
                return Ok((Field::new(self.grid.clone(), u)?, it));
            }
            std::mem::swap(&mut u, &mut next);
        }
        Err(FcpError::Convergence {
            iterations: max_iterations,
            residual,
        })
    }
}

/// One-shot solve of `Δu = f` on `f`'s grid.
pub fn solve_poisson_2d(f: &Field, method: PoissonMethod) -> Result<Field> {
    let solver = PoissonSolver::new(f.grid())?;
    match method {
        PoissonMethod::Direct => solver.solve(f),
        PoissonMethod::Jacobi { tol, max_iterations } => solver.solve_jacobi(f, tol, max_iterations).map(|(u, _)| u),
    }
}
