//! Steady 1D Darcy flow `−(k u′)′ = 0` on `[0,1]` with `u(0)=0`, `u(1)=1`.
//!
//! Cell-centered finite volumes with harmonic face transmissibilities. The
//! flux `k u′` is constant in the exact solution, and the discrete scheme
//! reproduces it exactly for cellwise-constant `k`: potentials at cell faces
//! then equal `∫₀ˣ dt/k / ∫₀¹ dt/k` to rounding.

use crate::error::{invalid, Result};
use crate::grid::Field;

fn check_permeability(k: &Field) -> Result<()> {
    if k.grid().dim() != 1 {
        return invalid("Darcy solver expects a 1D field");
    }
    if let Some(i) = k.values().iter().position(|&v| !(v > 0.0)) {
        return invalid(format!(
            "permeability must be positive, got {} at cell {i}",
            k.values()[i]
        ));
    }
    Ok(())
}

/// Face transmissibilities: index 0 is the left boundary half-cell, index N
/// the right one.
fn transmissibilities(k: &Field) -> Vec<f64> {
    let kv = k.values();
    let h = k.grid().spacings(0);
    let n = kv.len();
    let mut t = Vec::with_capacity(n + 1);
    t.push(2.0 * kv[0] / h[0]);
    for i in 0..n - 1 {
        t.push(1.0 / (0.5 * h[i] / kv[i] + 0.5 * h[i + 1] / kv[i + 1]));
    }
    t.push(2.0 * kv[n - 1] / h[n - 1]);
    t
}

/// Pressure at the cell centers of `k`'s grid.
pub fn solve_darcy_1d(k: &Field) -> Result<Field> {
    check_permeability(k)?;
    let n = k.len();
    let t = transmissibilities(k);
    // Cell i: t[i] (u_i − u_{i−1}) − t[i+1] (u_{i+1} − u_i) = 0, u_{−1} = 0, u_N = 1.
    let diag: Vec<f64> = (0..n).map(|i| t[i] + t[i + 1]).collect();
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = t[n];

    // Thomas algorithm; off-diagonals are −t[i] (lower) and −t[i+1] (upper).
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = -t[1] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] + t[i] * c[i - 1];
        c[i] = if i + 1 < n { -t[i + 1] / denom } else { 0.0 };
        d[i] = (rhs[i] + t[i] * d[i - 1]) / denom;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = d[i] - c[i] * u[i + 1];
    }
    Field::new(k.grid().clone(), u)
}

/// Potentials at the N+1 cell faces reconstructed from the discrete fluxes.
/// Boundary faces carry the Dirichlet data.
pub fn darcy_face_potentials(k: &Field, u: &Field) -> Result<Vec<f64>> {
    check_permeability(k)?;
    if !u.grid().same_as(k.grid()) {
        return invalid("pressure and permeability live on different grids");
    }
    let n = k.len();
    let t = transmissibilities(k);
    let h = k.grid().spacings(0);
    let (kv, uv) = (k.values(), u.values());
    let mut faces = Vec::with_capacity(n + 1);
    faces.push(0.0);
    for i in 0..n - 1 {
        let flux = t[i + 1] * (uv[i + 1] - uv[i]);
        faces.push(uv[i] + flux * 0.5 * h[i] / kv[i]);
    }
    faces.push(1.0);
    Ok(faces)
}
