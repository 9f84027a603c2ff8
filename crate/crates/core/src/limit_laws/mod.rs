//! Limiting Poisson point processes for the ranked cluster sizes.
//!
//! Each [`LimitLaw`] is described by its tail `T(x)`, the intensity measure of
//! `[x, inf)`:
//!
//! * `ContinuousX2 { rate }`: `T(x) = rate / x` (intensity `rate * x^-2 dx`).
//! * `LatticeXi { scale, span: a, phase }`:
//!   `T(x) = scale * a / (1 - e^-a) * exp(a * floor(phase - ln(x) / a) - a * phase)`.
//! * `LatticeLambda { scale, d, phase }`:
//!   `T(x) = scale * d^(-phase + floor(phase - log_d x) + 1) / (d - 1)`.
//!
//! Lattice tails are step functions, constant on `(g_(m+1), g_m]` for the grid
//! `g_m = e^(a (phase - m))` (resp. `d^(phase - m)`), so every atom of a lattice
//! law sits on its grid.

pub mod gof;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LimitLaw<T> {
    ContinuousX2 { rate: T },
    LatticeXi { scale: T, span: T, phase: T },
    LatticeLambda { scale: T, d: u32, phase: T },
}

fn check_phase<T: Real>(phase: T) -> Result<()> {
    if phase >= T::zero() && phase < T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("phase must lie in [0, 1), got {phase}")))
    }
}

fn check_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// `floor(z)`, treating values within rounding distance of an integer as that integer.
fn grid_floor<T: Real>(z: T) -> T {
    let r = z.round();
    if (z - r).abs() <= T::of(1e-12) * T::one().max(z.abs()) {
        r
    } else {
        z.floor()
    }
}

fn grid_ceil<T: Real>(z: T) -> T {
    let r = z.round();
    if (z - r).abs() <= T::of(1e-12) * T::one().max(z.abs()) {
        r
    } else {
        z.ceil()
    }
}

/// Fractional part `{y}`, with values within rounding distance of an integer
/// mapped to 0 (so `{log_2 16}` is 0, not 0.99999...).
pub fn fractional_part<T: Real>(y: T) -> T {
    y - grid_floor(y)
}

/// `{log_d h}`, the phase of the regular-tree lattice law at height `h`.
pub fn regular_phase<T: Real>(d: u32, h: u32) -> T {
    fractional_part(T::of_u64(h as u64).ln() / T::of_u64(d as u64).ln())
}

/// `{ln ln n / a}`, the phase of the split-tree lattice law at `n` balls.
pub fn split_phase<T: Real>(n: u64, span: T) -> T {
    fractional_part(T::of_u64(n).ln().ln() / span)
}

impl<T: Real> LimitLaw<T> {
    pub fn continuous(rate: T) -> Result<Self> {
        check_positive("rate", rate)?;
        Ok(LimitLaw::ContinuousX2 { rate })
    }

    pub fn lattice_xi(scale: T, span: T, phase: T) -> Result<Self> {
        check_positive("scale", scale)?;
        check_positive("span", span)?;
        check_phase(phase)?;
        Ok(LimitLaw::LatticeXi { scale, span, phase })
    }

    pub fn lattice_lambda(scale: T, d: u32, phase: T) -> Result<Self> {
        check_positive("scale", scale)?;
        if d < 2 {
            return Err(Error::Domain(format!("d must be at least 2, got {d}")));
        }
        check_phase(phase)?;
        Ok(LimitLaw::LatticeLambda { scale, d, phase })
    }

    /// Intensity of `[x, inf)`.
    pub fn tail(&self, x: T) -> Result<T> {
        if !(x > T::zero()) {
            return Err(Error::Domain(format!("tail needs x > 0, got {x}")));
        }
        Ok(match *self {
            LimitLaw::ContinuousX2 { rate } => rate / x,
            LimitLaw::LatticeXi { scale, span: a, phase } => {
                let m = grid_floor(phase - x.ln() / a);
                scale * a / (T::one() - (-a).exp()) * (a * m - a * phase).exp()
            }
            LimitLaw::LatticeLambda { scale, d, phase } => {
                let dd = T::of_u64(d as u64);
                let m = grid_floor(phase - x.ln() / dd.ln());
                scale * dd.powf(-phase + m + T::one()) / (dd - T::one())
            }
        })
    }

    /// Generalised inverse `sup { x : T(x) >= y }` for `y > 0`.
    pub fn inverse_tail(&self, y: T) -> T {
        match *self {
            LimitLaw::ContinuousX2 { rate } => rate / y,
            LimitLaw::LatticeXi { scale, span: a, phase } => {
                let k = scale * a / (T::one() - (-a).exp());
                let m = grid_ceil(phase + (y / k).ln() / a);
                (a * (phase - m)).exp()
            }
            LimitLaw::LatticeLambda { scale, d, phase } => {
                let dd = T::of_u64(d as u64);
                let s = scale / (dd - T::one());
                let m = grid_ceil((y / s).ln() / dd.ln() + phase - T::one());
                dd.powf(phase - m)
            }
        }
    }

    /// `P(x_1 >= x) = 1 - exp(-T(x))`.
    pub fn top_atom_exceedance(&self, x: T) -> Result<T> {
        Ok(T::one() - (-self.tail(x)?).exp())
    }

    /// The `k` largest atoms, non-increasing, by inversion of cumulative
    /// standard exponential arrival times.
    pub fn sample_top_atoms<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<T> {
        let mut arrival = T::zero();
        (0..k)
            .map(|_| {
                let e: f64 = rng.sample(Exp1);
                arrival = arrival + T::of(e);
                self.inverse_tail(arrival)
            })
            .collect()
    }

    /// Whether `x` lies on the support grid of a lattice law (always true for
    /// the continuous law).
    pub fn on_support(&self, x: T) -> bool {
        let near_int = |z: T| (z - z.round()).abs() <= T::of(1e-9) * T::one().max(z.abs());
        match *self {
            LimitLaw::ContinuousX2 { .. } => x > T::zero(),
            LimitLaw::LatticeXi { span, phase, .. } => near_int(phase - x.ln() / span),
            LimitLaw::LatticeLambda { d, phase, .. } => near_int(phase - x.ln() / T::of_u64(d as u64).ln()),
        }
    }
}

/// `lambda = c * alpha / mu * exp(-c / mu)`: rate of the exponential spacings
/// `1/x_1, 1/x_2 - 1/x_1, ...`.
pub fn exponential_rate<T: Real>(c: T, mu: T, alpha: T) -> Result<T> {
    check_positive("c", c)?;
    check_positive("mu", mu)?;
    check_positive("alpha", alpha)?;
    Ok(c * alpha / mu * (-c / mu).exp())
}

/// Giant-cluster fraction `exp(-c / mu)`.
pub fn giant_fraction<T: Real>(c: T, mu: T) -> T {
    (-c / mu).exp()
}

/// Regular-tree giant fraction `d e^-c / (d - 1)`.
pub fn regular_giant_fraction<T: Real>(c: T, d: u32) -> T {
    let dd = T::of_u64(d as u64);
    dd * (-c).exp() / (dd - T::one())
}
