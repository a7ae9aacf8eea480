//! Quadratic-theory (Bogoliubov) spectrum and trial-state ingredients.
//!
//! With kinetic symbol `T = k²/2` and interaction `v̂`, the dispersion at
//! density `ρ` is
//!
//! ```text
//! ω(k) = sqrt( T (T + 2 v̂(k) ρ) ),
//! ```
//!
//! grand-canonically parameterized through `ρ = μ / v̂(0)`. The squeeze
//! coefficients of the underlying trial state follow from
//! `|s_k|² = (A/ω - 1)/2` with `A = T + v̂(k) μ/v̂(0)`, carrying an overall
//! phase `e^{iτ}` from the condensate; `c_k = sqrt(1 + |s_k|²)`. At small
//! `|k|` this gives `|s_k| ≈ μ^{1/4} / sqrt(2|k|)`, the seed of the d = 1
//! infrared divergences tracked elsewhere.

use crate::error::{Error, Result};
use crate::model::{BoxGeometry, Potential};
use crate::numerics::{lattice_sum_even, RadialQuadrature, WeightRule};
use num_complex::Complex64;

/// Density parameterization: direct, or through the leading-order relation
/// `ρ = μ / v̂(0)`.
#[derive(Debug, Clone, Copy)]
pub enum DensityParam {
    Density(f64),
    Mu(f64),
}

impl DensityParam {
    pub fn rho(&self, pot: &Potential, d: usize) -> Result<f64> {
        match self {
            DensityParam::Density(rho) => Ok(*rho),
            DensityParam::Mu(mu) => {
                let v0 = pot.vhat0(d)?;
                if v0 <= 0.0 {
                    return Err(Error::Domain(format!(
                        "chemical-potential parameterization needs v̂(0) > 0, got {v0}"
                    )));
                }
                Ok(mu / v0)
            }
        }
    }
}

/// `ω(k) = sqrt(T(T + 2 v̂(k) ρ))` at radial `|k|`. A negative radicand
/// (attractive coupling strong enough to destabilize the mode) is a domain
/// error naming the offending `k`.
pub fn dispersion(pot: &Potential, d: usize, param: DensityParam, k_abs: f64) -> Result<f64> {
    let rho = param.rho(pot, d)?;
    let t = 0.5 * k_abs * k_abs;
    let radicand = t * (t + 2.0 * pot.fourier_radial(k_abs, d)? * rho);
    if radicand < 0.0 {
        return Err(Error::Domain(format!(
            "dispersion radicand negative at |k| = {k_abs}: T(T+2v̂ρ) = {radicand}"
        )));
    }
    Ok(radicand.sqrt())
}

/// Condensate amplitude of the coherent trial state: `|α| = sqrt(μ V / v̂(0))`.
pub fn coherent_alpha_abs(pot: &Potential, d: usize, mu: f64, volume: f64) -> Result<f64> {
    let v0 = pot.vhat0(d)?;
    if v0 <= 0.0 || mu < 0.0 {
        return Err(Error::Domain(format!(
            "coherent amplitude needs v̂(0) > 0 and μ >= 0, got v̂(0)={v0}, μ={mu}"
        )));
    }
    Ok((mu * volume / v0).sqrt())
}

/// Squeeze coefficients `(c_k, s_k)` of the quadratic-theory ground state at
/// a nonzero mode. `s_k = e^{iτ} sqrt(y/2)` with
/// `y = (1 - x²)^{-1/2} - 1`, `x = P/A`, `P = v̂(k) μ/v̂(0)`, `A = T + P`,
/// evaluated in the cancellation-free form `y = x²/(√(1-x²)(1+√(1-x²)))`.
pub fn squeeze_coefficients(
    pot: &Potential,
    d: usize,
    mu: f64,
    k_abs: f64,
    tau: f64,
) -> Result<(f64, Complex64)> {
    if k_abs == 0.0 {
        return Err(Error::Domain(
            "squeeze coefficients are defined on nonzero modes only; the zero mode carries the condensate".into(),
        ));
    }
    let v0 = pot.vhat0(d)?;
    if v0 <= 0.0 {
        return Err(Error::Domain(format!("squeeze coefficients need v̂(0) > 0, got {v0}")));
    }
    let t = 0.5 * k_abs * k_abs;
    let p = pot.fourier_radial(k_abs, d)? * mu / v0;
    let a = t + p;
    let x = p / a;
    if !(x.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "squeeze coefficients undefined at |k| = {k_abs}: |P/A| = {x} >= 1"
        )));
    }
    let root = (1.0 - x * x).sqrt();
    let y = x * x / (root * (1.0 + root));
    let s_abs = (0.5 * y).sqrt();
    let s = Complex64::from_polar(s_abs, tau);
    let c = (1.0 + s_abs * s_abs).sqrt();
    Ok((c, s))
}

/// Truncated-box ground-state energy of the quadratic theory:
/// `-Vμ²/(2v̂(0)) - Σ_k ½[(T + v̂(k)μ/v̂(0)) - ω(k)]`, the sum running over
/// the full grid including the zero mode (whose summand is `μ/2`).
#[derive(Debug, Clone, Copy)]
pub struct GroundEnergy {
    pub value: f64,
    /// Outermost-shell summand magnitude; nonzero tails mean the box cutoff
    /// has not yet absorbed the sum.
    pub tail_estimate: f64,
    pub tail_warning: bool,
}

pub fn ground_energy(pot: &Potential, geom: &BoxGeometry, mu: f64, tail_tol: f64) -> Result<GroundEnergy> {
    let v0 = pot.vhat0(geom.d)?;
    if v0 <= 0.0 {
        return Err(Error::Domain(format!("ground energy needs v̂(0) > 0, got {v0}")));
    }
    let full = BoxGeometry { include_zero: true, ..geom.clone() };
    // Summand ½(A - ω) ≥ 0 since ω² = A² - P².
    let term = |m: crate::model::Mode| -> f64 {
        let k = full.mode_norm(m);
        let t = 0.5 * k * k;
        let p = pot.fourier_radial(k, full.d).unwrap_or(0.0) * mu / v0;
        let a = t + p;
        let omega = (a * a - p * p).max(0.0).sqrt();
        0.5 * (a - omega)
    };
    let sum = lattice_sum_even(&full, term);
    let value = -full.volume() * mu * mu / (2.0 * v0) - sum.value;
    Ok(GroundEnergy {
        value,
        tail_estimate: sum.tail_estimate,
        tail_warning: sum.tail_estimate > tail_tol,
    })
}

/// Depletion density result. In one dimension the integral diverges
/// logarithmically as the inner cutoff shrinks; the flag records that.
#[derive(Debug, Clone, Copy)]
pub struct Depletion {
    pub value: f64,
    pub eta: f64,
    pub diverges_as_eta_to_zero: bool,
}

/// Box form: `(1/V) Σ_{k≠0} |s_k|²` over the geometry's grid.
pub fn depletion_box(pot: &Potential, geom: &BoxGeometry, mu: f64) -> Result<f64> {
    let grid = BoxGeometry { include_zero: false, ..geom.clone() };
    let mut bad: Option<Error> = None;
    let sum = lattice_sum_even(&grid, |m| {
        match squeeze_coefficients(pot, grid.d, mu, grid.mode_norm(m), 0.0) {
            Ok((_, s)) => s.norm_sqr(),
            Err(e) => {
                if bad.is_none() {
                    bad = Some(e);
                }
                0.0
            }
        }
    });
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(sum.value / grid.volume())
}

/// Continuum form: `(2π)^{-d} ∫_{η<|k|≤k_max} |s_k|² dk`. For d = 1 the
/// small-`k` law `|s_k|² ≈ √μ/(2|k|)` makes the value grow by
/// `2 ln10 · √μ/(4π)` per decade of `η`; the divergence flag is set there.
pub fn depletion_continuum(
    pot: &Potential,
    d: usize,
    mu: f64,
    eta: f64,
    k_max: f64,
) -> Result<Depletion> {
    if eta <= 0.0 {
        return Err(Error::Config(format!("continuum depletion needs η > 0, got {eta}")));
    }
    let rule = if d == 1 { WeightRule::LogAbsorb } else { WeightRule::Plain };
    let quad = RadialQuadrature::with_rule(d, eta, k_max, 48, 16, rule)?;
    let mut bad: Option<Error> = None;
    let val = quad.integrate(|r| match squeeze_coefficients(pot, d, mu, r, 0.0) {
        Ok((_, s)) => s.norm_sqr(),
        Err(e) => {
            if bad.is_none() {
                bad = Some(e);
            }
            0.0
        }
    });
    if let Some(e) = bad {
        return Err(e);
    }
    Ok(Depletion {
        value: val / (2.0 * std::f64::consts::PI).powi(d as i32),
        eta,
        diverges_as_eta_to_zero: d == 1 && mu > 0.0,
    })
}

/// Radial dispersion table: `|k|`, `ω(k)`, `|s_k|`.
#[derive(Debug, Clone)]
pub struct DispersionTable {
    pub radii: Vec<f64>,
    pub omega: Vec<f64>,
    pub s_abs: Vec<f64>,
}

impl DispersionTable {
    /// Evaluate on explicit radii (all nonzero, ascending not required).
    pub fn on_radii(pot: &Potential, d: usize, mu: f64, radii: &[f64]) -> Result<Self> {
        let mut omega = Vec::with_capacity(radii.len());
        let mut s_abs = Vec::with_capacity(radii.len());
        for &r in radii {
            omega.push(dispersion(pot, d, DensityParam::Mu(mu), r)?);
            s_abs.push(if r == 0.0 {
                f64::NAN
            } else {
                squeeze_coefficients(pot, d, mu, r, 0.0)?.1.norm()
            });
        }
        Ok(DispersionTable { radii: radii.to_vec(), omega, s_abs })
    }

    /// Evaluate on the sorted distinct radii of a box grid (zero excluded).
    pub fn on_box(pot: &Potential, geom: &BoxGeometry, mu: f64) -> Result<Self> {
        let mut radii: Vec<f64> = geom
            .momentum_grid()
            .into_iter()
            .filter(|m| !crate::model::mode_is_zero(*m))
            .map(|m| geom.mode_norm(m))
            .collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * a.abs().max(1.0));
        Self::on_radii(pot, geom.d, mu, &radii)
    }
}

/// Critical and phase velocities read off a dispersion table.
#[derive(Debug, Clone, Copy)]
pub struct Velocities {
    /// `min_k ω/|k|` over the tabulated nonzero radii.
    pub critical: f64,
    /// Small-`k` slope from the two smallest radii, Richardson-extrapolated
    /// assuming an `O(k²)` secant error.
    pub phase: f64,
    /// Magnitude of the extrapolation step, a grid-resolution error proxy.
    pub phase_err_estimate: f64,
}

pub fn velocity_extract(table: &DispersionTable) -> Result<Velocities> {
    let mut pairs: Vec<(f64, f64)> = table
        .radii
        .iter()
        .zip(&table.omega)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, w)| (*r, *w))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Domain(format!(
            "velocity extraction needs at least two nonzero radii, got {}",
            pairs.len()
        )));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let critical = pairs.iter().map(|(r, w)| w / r).fold(f64::INFINITY, f64::min);
    let (r1, w1) = pairs[0];
    let (r2, w2) = pairs[1];
    let (s1, s2) = (w1 / r1, w2 / r2);
    // σ(r) = c + b r² + O(r⁴): eliminate b with the two smallest radii.
    let phase = s1 + (s1 - s2) * r1 * r1 / (r2 * r2 - r1 * r1);
    Ok(Velocities { critical, phase, phase_err_estimate: (phase - s1).abs() })
}
