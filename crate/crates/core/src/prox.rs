//! Regularizers and their proximal maps.
//!
//! For a step size `η > 0` the proximal map of `r` is
//!
//! ```text
//! prox(y, η) = argmin_x  ½‖x − y‖² + η·r(x)
//! ```
//!
//! Every regularizer in the catalog is coordinate-separable, so the map is
//! evaluated in closed form one coordinate at a time. [`brute_force_prox`]
//! minimizes the same objective numerically and serves as a test oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    /// `r = 0`.
    Zero,
    /// `r(x) = weight·‖x‖₁`.
    L1 { weight: f64 },
    /// `r(x) = (weight/2)·‖x‖²`.
    SquaredL2 { weight: f64 },
    /// Indicator of the box `lo ≤ x ≤ hi`, one bound pair per coordinate.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `r(x) = l1·‖x‖₁ + (l2/2)·‖x‖²`.
    ElasticNet { l1: f64, l2: f64 },
}

impl Regularizer {
    pub fn l1(weight: f64) -> Self {
        Regularizer::L1 { weight }
    }

    pub fn squared_l2(weight: f64) -> Self {
        Regularizer::SquaredL2 { weight }
    }

    pub fn elastic_net(l1: f64, l2: f64) -> Self {
        Regularizer::ElasticNet { l1, l2 }
    }

    /// Same bounds `[lo, hi]` on each of `n` coordinates.
    pub fn uniform_box(lo: f64, hi: f64, n: usize) -> Self {
        Regularizer::Box {
            lo: vec![lo; n],
            hi: vec![hi; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, w: f64| {
            if w.is_finite() && w >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} weight must be finite and >= 0, got {w}"
                )))
            }
        };
        match self {
            Regularizer::Zero => Ok(()),
            Regularizer::L1 { weight } => nonneg("l1", *weight),
            Regularizer::SquaredL2 { weight } => nonneg("squared_l2", *weight),
            Regularizer::ElasticNet { l1, l2 } => {
                nonneg("elastic_net l1", *l1)?;
                nonneg("elastic_net l2", *l2)
            }
            Regularizer::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lo.len(),
                        got: hi.len(),
                    });
                }
                for (j, (l, h)) in lo.iter().zip(hi).enumerate() {
                    if l.is_nan() || h.is_nan() || l > h {
                        return Err(Error::InvalidArgument(format!(
                            "box coordinate {j} is empty: [{l}, {h}]"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Dimension fixed by the descriptor, if any (only boxes carry one).
    pub fn dim(&self) -> Option<usize> {
        match self {
            Regularizer::Box { lo, .. } => Some(lo.len()),
            _ => None,
        }
    }

    /// Contribution of coordinate `j` at value `t`; `+inf` outside a box.
    pub fn coord_value(&self, j: usize, t: f64) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight } => weight * t.abs(),
            Regularizer::SquaredL2 { weight } => 0.5 * weight * t * t,
            Regularizer::ElasticNet { l1, l2 } => l1 * t.abs() + 0.5 * l2 * t * t,
            Regularizer::Box { lo, hi } => {
                if t >= lo[j] && t <= hi[j] {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `r(x)`, which is `+inf` for points outside a box.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            _ => x
                .iter()
                .enumerate()
                .map(|(j, &t)| self.coord_value(j, t))
                .sum(),
        }
    }

    /// Closed-form prox of coordinate `j`.
    pub fn apply_coord(&self, j: usize, y: f64, eta: f64) -> f64 {
        match self {
            Regularizer::Zero => y,
            Regularizer::L1 { weight } => soft_threshold(y, eta * weight),
            Regularizer::SquaredL2 { weight } => y / (1.0 + eta * weight),
            Regularizer::ElasticNet { l1, l2 } => soft_threshold(y, eta * l1) / (1.0 + eta * l2),
            Regularizer::Box { lo, hi } => y.clamp(lo[j], hi[j]),
        }
    }

    /// The proximal map `argmin_x ½‖x − y‖² + η·r(x)`.
    pub fn apply(&self, y: &[f64], eta: f64) -> Result<Vec<f64>> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prox step size must be finite and > 0, got {eta}"
            )));
        }
        if !vector::all_finite(y) {
            return Err(Error::NonFinite("prox input".into()));
        }
        if let Some(n) = self.dim() {
            if n != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: y.len(),
                });
            }
        }
        Ok(y.iter()
            .enumerate()
            .map(|(j, &t)| self.apply_coord(j, t, eta))
            .collect())
    }

    /// `r(z) − r(x) − ⟨h, z − x⟩`, nonnegative whenever `h ∈ ∂r(x)`.
    pub fn subgradient_gap(&self, x: &[f64], h: &[f64], z: &[f64]) -> f64 {
        let lin: f64 = x
            .iter()
            .zip(h)
            .zip(z)
            .map(|((xi, hi), zi)| hi * (zi - xi))
            .sum();
        self.value(z) - self.value(x) - lin
    }

    /// `r_j(a) − r_j(b)` evaluated without forming the two values separately,
    /// so the difference keeps full relative precision near a minimizer.
    fn coord_value_diff(&self, j: usize, a: f64, b: f64) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight } => weight * (a.abs() - b.abs()),
            Regularizer::SquaredL2 { weight } => 0.5 * weight * (a - b) * (a + b),
            Regularizer::ElasticNet { l1, l2 } => {
                l1 * (a.abs() - b.abs()) + 0.5 * l2 * (a - b) * (a + b)
            }
            Regularizer::Box { .. } => self.coord_value(j, a) - self.coord_value(j, b),
        }
    }
}

pub fn soft_threshold(y: f64, threshold: f64) -> f64 {
    if y > threshold {
        y - threshold
    } else if y < -threshold {
        y + threshold
    } else {
        0.0
    }
}

/// The subgradient of `r` at `x_next` selected by the prox step
/// `x_next = prox(x_prev − η·g, η)`, i.e. `(x_prev − η·g − x_next)/η`.
pub fn subgradient_residual(x_prev: &[f64], x_next: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    x_prev
        .iter()
        .zip(x_next)
        .zip(g)
        .map(|((xp, xn), gi)| (xp - eta * gi - xn) / eta)
        .collect()
}

/// Golden-section minimization of the scalar prox objective on coordinate 0.
pub fn brute_force_prox(op: &Regularizer, y: f64, eta: f64) -> f64 {
    brute_force_prox_coord(op, 0, y, eta)
}

/// Golden-section minimization of `φ(t) = ½(t − y)² + η·r_j(t)` over
/// `[y − R, y + R]` (intersected with the box, if any), `R = |y| + 10`,
/// down to a bracket of width `1e-11`.
///
/// Only values of `φ` are used, never the closed form. Comparisons go through
/// `φ(a) − φ(b)` expanded algebraically, which stays accurate when `a` and `b`
/// are close; comparing rounded values of `φ` would stall near `1e-8`.
pub fn brute_force_prox_coord(op: &Regularizer, j: usize, y: f64, eta: f64) -> f64 {
    let radius = y.abs() + 10.0;
    let (mut lo, mut hi) = (y - radius, y + radius);
    if let Regularizer::Box { lo: blo, hi: bhi } = op {
        lo = lo.max(blo[j]);
        hi = hi.min(bhi[j]);
        if lo > hi {
            // the bracket misses the box entirely; the nearer face wins
            return if y < blo[j] { blo[j] } else { bhi[j] };
        }
    }
    let phi_diff = |a: f64, b: f64| 0.5 * (a - b) * (a + b - 2.0 * y) + eta * op.coord_value_diff(j, a, b);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    while hi - lo > 1e-11 {
        if phi_diff(c, d) < 0.0 {
            hi = d;
            d = c;
            c = hi - inv_phi * (hi - lo);
        } else {
            lo = c;
            c = d;
            d = lo + inv_phi * (hi - lo);
        }
    }
    0.5 * (lo + hi)
}
