//! Double-well potential and the interpolation function gating the
//! proliferation, apoptosis and drug terms.

use crate::error::{ChbError, Result};

/// Quartic double well `ψ(s) = (s² - 1)² / 4`, split into the convex part
/// `s⁴/4` and the concave part `-s²/2 + 1/4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialSpec {
    /// Stabilization constant of the linearly implicit time stepper.
    pub s_stab: f64,
}

/// `max ψ''` over `[-1.5, 1.5]`.
pub const DEFAULT_STABILIZATION: f64 = 3.0 * 1.5 * 1.5 - 1.0;

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            s_stab: DEFAULT_STABILIZATION,
        }
    }
}

impl PotentialSpec {
    pub fn new(s_stab: f64) -> Result<Self> {
        if !(s_stab >= 0.0 && s_stab.is_finite()) {
            return Err(ChbError::InvalidParameter(format!(
                "s_stab must be >= 0, got {s_stab}"
            )));
        }
        Ok(Self { s_stab })
    }

    pub fn psi(&self, s: f64, order: usize) -> Result<f64> {
        psi_eval(s, order)
    }
}

pub fn psi_eval(s: f64, order: usize) -> Result<f64> {
    match order {
        0 => Ok(psi(s)),
        1 => Ok(psi_d1(s)),
        2 => Ok(psi_d2(s)),
        3 => Ok(6.0 * s),
        _ => Err(ChbError::OrderOutOfRange { order, max: 3 }),
    }
}

pub fn h_eval(s: f64, order: usize) -> Result<f64> {
    match order {
        0 => Ok(interp(s)),
        1 => Ok(interp_d1(s)),
        2 => Ok(interp_d2(s)),
        _ => Err(ChbError::OrderOutOfRange { order, max: 2 }),
    }
}

#[inline]
pub fn psi(s: f64) -> f64 {
    let q = s * s - 1.0;
    0.25 * q * q
}

#[inline]
pub fn psi_d1(s: f64) -> f64 {
    s * s * s - s
}

#[inline]
pub fn psi_d2(s: f64) -> f64 {
    3.0 * s * s - 1.0
}

#[inline]
pub fn psi_convex(s: f64) -> f64 {
    0.25 * s * s * s * s
}

#[inline]
pub fn psi_concave(s: f64) -> f64 {
    -0.5 * s * s + 0.25
}

/// Quintic smoothstep on `[-1, 1]`, clamped to 0 below and 1 above.
#[inline]
pub fn interp(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let t = 0.5 * (s + 1.0);
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

#[inline]
pub fn interp_d1(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let t = 0.5 * (s + 1.0);
        let u = t * (1.0 - t);
        15.0 * u * u
    }
}

#[inline]
pub fn interp_d2(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let t = 0.5 * (s + 1.0);
        15.0 * t * (2.0 * t - 1.0) * (t - 1.0)
    }
}
