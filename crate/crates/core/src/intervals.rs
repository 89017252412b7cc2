//! Pointwise bounds from ensembles and quantile triplets.
//!
//! [`mc_envelope`] forms the pointwise min/max over ensemble members,
//! optionally keeping only members whose relative weighted distance to a
//! center (by default the ensemble mean) is within the conformal radius.
//! [`adjust_quantile_bounds`] rescales the offsets of a quantile triplet so
//! each bound sits at relative weighted distance exactly `τ` from the middle
//! prediction.

use crate::error::{invalid, FcpError, Result};
use crate::forecast::ensemble_mean;
use crate::grid::{ensure_same_grid, weighted_distance, weighted_norm, Field};

/// Which members contribute to an envelope.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Conditioning {
    /// Every member.
    None,
    /// Members within `τ` of the ensemble mean (relative weighted distance).
    #[default]
    MeanDistance,
    /// Members within `τ` of the given reference prediction.
    Reference(Field),
}

/// Output of [`mc_envelope`].
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub lower: Field,
    pub upper: Field,
    /// Indices of the members that formed the envelope, ascending.
    pub kept: Vec<usize>,
}

impl Envelope {
    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }
}

/// Relative weighted distance of every member to `center`.
fn distances(members: &[Field], center: &Field) -> Result<Vec<f64>> {
    let norm = weighted_norm(center);
    if norm == 0.0 {
        return Err(FcpError::DegenerateDenominator {
            context: "envelope center".into(),
        });
    }
    members
        .iter()
        .map(|m| Ok(weighted_distance(m, center)? / norm))
        .collect()
}

/// Pointwise min/max envelope of (a subset of) `members`.
///
/// When conditioned, member `j` is kept iff its relative weighted distance to
/// the center is at most `tau`. If no member qualifies, the one closest to the
/// center is kept so the envelope is never empty.
pub fn mc_envelope(members: &[Field], tau: f64, conditioning: &Conditioning) -> Result<Envelope> {
    let first = members
        .first()
        .ok_or_else(|| FcpError::InvalidArgument("no ensemble members".into()))?;
    for m in &members[1..] {
        ensure_same_grid(first, m)?;
    }
    let kept: Vec<usize> = match conditioning {
        Conditioning::None => (0..members.len()).collect(),
        other => {
            if !(tau > 0.0) {
                return invalid(format!("conditioning requires tau > 0, got {tau}"));
            }
            let d = match other {
                Conditioning::Reference(r) => {
                    ensure_same_grid(first, r)?;
                    distances(members, r)?
                }
                _ => distances(members, &ensemble_mean(members)?)?,
            };
            let within: Vec<usize> = (0..members.len()).filter(|&j| d[j] <= tau).collect();
            if within.is_empty() {
                let nearest = (0..members.len())
                    .min_by(|&a, &b| d[a].total_cmp(&d[b]))
                    .expect("nonempty");
                vec![nearest]
            } else {
                within
            }
        }
    };
    let len = first.len();
    let mut lo = vec![f64::INFINITY; len];
    let mut hi = vec![f64::NEG_INFINITY; len];
    for &j in &kept {
        for (i, &v) in members[j].values().iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    Ok(Envelope {
        lower: Field::new(first.grid().clone(), lo)?,
        upper: Field::new(first.grid().clone(), hi)?,
        kept,
    })
}

/// Rescales `lo` and `hi` about `mid`: `û_adj = mid + (τ / r)(û − mid)` with
/// `r = ‖û − mid‖_w / ‖mid‖_w`. Returns `(lo_adj, hi_adj)`.
pub fn adjust_quantile_bounds(lo: &Field, mid: &Field, hi: &Field, tau: f64) -> Result<(Field, Field)> {
    ensure_same_grid(lo, mid)?;
    ensure_same_grid(hi, mid)?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return invalid(format!("tau must be finite and nonnegative, got {tau}"));
    }
    let norm = weighted_norm(mid);
    if norm == 0.0 {
        return Err(FcpError::DegenerateDenominator {
            context: "middle prediction".into(),
        });
    }
    let adjust = |bound: &Field, name: &'static str| -> Result<Field> {
        let r = weighted_distance(bound, mid)? / norm;
        if r == 0.0 {
            return Err(FcpError::DegenerateOffset(name));
        }
        let s = tau / r;
        mid.zip_map(bound, |m, b| m + s * (b - m))
    };
    Ok((adjust(lo, "lower")?, adjust(hi, "upper")?))
}
