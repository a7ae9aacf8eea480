//! Squeezed-state trial energies, coefficients, gradients, and residuals.
//!
//! The trial state is a Weyl shift of a squeezed vacuum: the zero mode
//! carries a condensate amplitude `α = |α| e^{iτ}` and each pair `{k, −k}`
//! a squeeze with `c_k = cosh|θ_k| ≥ 1` and complex `s_k`, `c_k² − |s_k|² = 1`.
//! Expectation values reduce to Wick contractions with
//! `⟨a_k* a_k⟩ = |s_k|²` and anomalous average `⟨a_k a_{−k}⟩ = −c_k s_k`.
//! The energy of the grand-canonical Hamiltonian (kinetic `k²/2`, coupling
//! `v̂`, volume `V`) is then the five-line functional
//!
//! ```text
//! B = −μ|α|² + v̂(0)|α|⁴/(2V)
//!   + Σ_k [k²/2 − μ + (v̂(0)+v̂(k))|α|²/V] |s_k|²
//!   + (1/2V) Σ_{k,k'} (v̂(0) + v̂(k−k')) |s_k|² |s_{k'}|²
//!   + (1/2V) Σ_{k,k'} v̂(k−k') (c_k s_k)(c_{k'} s̄_{k'})
//!   − (1/2V) Σ_k v̂(k) (ᾱ² s_k + α² s̄_k) c_k ,
//! ```
//!
//! sums over the squeezed mode set. Everything else here is derived from B:
//! the coefficients `f_k` (real) and `g_k`, the quasiparticle energies
//! `D(k)` and anomalous residuals `O(k)`, the condensate residual, and the
//! analytic gradients (which treat each `s_k` as an independent complex
//! coordinate, so they hold on asymmetric raw states too and can be checked
//! by finite differences).
//!
//! Solver-facing states store the capital parameters `S_k = 2 s_k c_k`
//! (complex) and `C_k = c_k² + |s_k|²` (real), even in `k`, on a
//! half-lattice; `C² − |S|² = 1` mirrors the hyperbolic constraint.

use crate::error::{Error, Result};
use crate::model::{mode_is_zero, mode_lex_positive, mode_neg, BoxGeometry, Mode, Potential};
use num_complex::Complex64;
use rayon::prelude::*;

/// Whether the zero mode joins the squeezed pairs or carries only the
/// condensate. Finite-box iteration past the first step forces `Exclude`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroModePolicy {
    Exclude,
    Include,
}

/// Cached per-mode potential data for a fixed squeezed mode set:
/// `vhat[i] = v̂(k_i)` and `vdiff[i][j] = v̂(k_i − k_j)`.
#[derive(Debug, Clone)]
pub struct ModeTable {
    pub geom: BoxGeometry,
    pub modes: Vec<Mode>,
    pub vhat0: f64,
    pub vhat: Vec<f64>,
    vdiff: Vec<f64>,
    pub ksq_half: Vec<f64>,
}

impl ModeTable {
    pub fn new(geom: &BoxGeometry, modes: Vec<Mode>, pot: &Potential) -> Result<Self> {
        let vhat0 = pot.vhat0(geom.d)?;
        let vhat: Result<Vec<f64>> =
            modes.iter().map(|m| pot.fourier_mode(geom, *m)).collect();
        let vhat = vhat?;
        let n = modes.len();
        let mut vdiff = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = crate::model::mode_sub(modes[i], modes[j]);
                vdiff[i * n + j] = pot.fourier_mode(geom, d)?;
            }
        }
        let ksq_half = modes.iter().map(|m| 0.5 * geom.mode_norm_sq(*m)).collect();
        Ok(ModeTable { geom: geom.clone(), modes, vhat0, vhat, vdiff, ksq_half })
    }

    #[inline]
    pub fn vdiff(&self, i: usize, j: usize) -> f64 {
        self.vdiff[i * self.modes.len() + j]
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Unconstrained per-mode squeeze data: one independent complex `s_k` per
/// listed mode (no evenness imposed), `c_k = √(1+|s_k|²)` implicit. The
/// gradient formulas are exact on these states, which is what makes clean
/// finite-difference checks possible.
#[derive(Debug, Clone)]
pub struct RawSqueeze {
    pub alpha: Complex64,
    pub s: Vec<Complex64>,
}

impl RawSqueeze {
    pub fn c(&self, i: usize) -> f64 {
        (1.0 + self.s[i].norm_sqr()).sqrt()
    }
}

/// Evaluate B on a raw squeeze state.
pub fn energy_b(table: &ModeTable, raw: &RawSqueeze, mu: f64) -> Result<f64> {
    let n = table.len();
    if raw.s.len() != n {
        return Err(Error::Config("state size does not match mode table".into()));
    }
    let vol = table.geom.volume();
    let a2 = raw.alpha.norm_sqr();
    let mut b = -mu * a2 + table.vhat0 * a2 * a2 / (2.0 * vol);
    let p: Vec<Complex64> = (0..n).map(|i| raw.s[i] * raw.c(i)).collect();
    let mut quad = Complex64::ZERO;
    for i in 0..n {
        let ss = raw.s[i].norm_sqr();
        b += (table.ksq_half[i] - mu + (table.vhat0 + table.vhat[i]) * a2 / vol) * ss;
        for j in 0..n {
            let v = table.vdiff(i, j);
            b += (table.vhat0 + v) * ss * raw.s[j].norm_sqr() / (2.0 * vol);
            quad += v * p[i] * p[j].conj() / (2.0 * vol);
        }
        b -= table.vhat[i] * (raw.alpha.conj() * raw.alpha.conj() * p[i]).re / vol;
    }
    if quad.im.abs() > 1e-8 * (1.0 + quad.re.abs()) {
        return Err(Error::CheckFailed(format!(
            "pairing energy acquired an imaginary part {} (phase bug?)",
            quad.im
        )));
    }
    Ok(b + quad.re)
}

/// Raw-state coefficients in the μ-parameterized form:
/// `f_k = k²/2 − μ + (v̂(0)+v̂(k))|α|²/V + Σ (v̂(k'−k)+v̂(0))|s_{k'}|²/V` and
/// `g_k = α² v̂(k)/V − Σ v̂(k'−k) s_{k'} c_{k'}/V`.
pub fn raw_coefficients(
    table: &ModeTable,
    raw: &RawSqueeze,
    mu: f64,
) -> (Vec<f64>, Vec<Complex64>) {
    let n = table.len();
    let vol = table.geom.volume();
    let a2 = raw.alpha.norm_sqr();
    let alpha_sq = raw.alpha * raw.alpha;
    let p: Vec<Complex64> = (0..n).map(|i| raw.s[i] * raw.c(i)).collect();
    let mut f = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let mut fi = table.ksq_half[i] - mu + (table.vhat0 + table.vhat[i]) * a2 / vol;
        let mut gi = alpha_sq * table.vhat[i] / vol;
        for j in 0..n {
            let v = table.vdiff(j, i);
            fi += (v + table.vhat0) * raw.s[j].norm_sqr() / vol;
            gi -= v * p[j] / vol;
        }
        f.push(fi);
        g.push(gi);
    }
    (f, g)
}

/// Wirtinger gradients of B: `(∂_α B, ∂_ᾱ B)` and per-mode
/// `(∂_{s_k} B, ∂_{s̄_k} B)`, with
/// `∂_{s̄_k}B = f_k s_k − (g_k/2)(c_k + |s_k|²/(2c_k)) − ḡ_k s_k²/(4c_k)`.
#[derive(Debug, Clone)]
pub struct GradB {
    pub d_alpha: Complex64,
    pub d_alpha_bar: Complex64,
    pub d_s: Vec<Complex64>,
    pub d_s_bar: Vec<Complex64>,
}

pub fn gradients_b(table: &ModeTable, raw: &RawSqueeze, mu: f64) -> GradB {
    let n = table.len();
    let vol = table.geom.volume();
    let (f, g) = raw_coefficients(table, raw, mu);
    let mut d_s = Vec::with_capacity(n);
    let mut d_s_bar = Vec::with_capacity(n);
    for i in 0..n {
        let s = raw.s[i];
        let c = raw.c(i);
        let half_stretch = c + s.norm_sqr() / (2.0 * c);
        let dsb = f[i] * s - 0.5 * g[i] * half_stretch - g[i].conj() * s * s / (4.0 * c);
        let ds = f[i] * s.conj()
            - 0.5 * g[i].conj() * half_stretch
            - g[i] * s.conj() * s.conj() / (4.0 * c);
        d_s.push(ds);
        d_s_bar.push(dsb);
    }
    // α-block: B depends on α through |α|² factors and the ᾱ² pairing term.
    let a2 = raw.alpha.norm_sqr();
    let mut scalar = table.vhat0 * a2 / vol - mu;
    let mut pair = Complex64::ZERO;
    for i in 0..n {
        scalar += (table.vhat0 + table.vhat[i]) * raw.s[i].norm_sqr() / vol;
        pair += table.vhat[i] * raw.s[i] * raw.c(i) / vol;
    }
    let d_alpha = raw.alpha.conj() * scalar - raw.alpha * pair.conj();
    let d_alpha_bar = raw.alpha * scalar - raw.alpha.conj() * pair;
    GradB { d_alpha, d_alpha_bar, d_s, d_s_bar }
}

/// Condensate (linear) residual `C = c₀ ∂_ᾱB − s₀ ∂_αB`, where `(c₀, s₀)`
/// are the zero mode's squeeze parameters (1, 0 when it is not squeezed).
pub fn condensate_residual(table: &ModeTable, raw: &RawSqueeze, mu: f64) -> Complex64 {
    let grads = gradients_b(table, raw, mu);
    let zero = table.modes.iter().position(|m| mode_is_zero(*m));
    let (c0, s0) = match zero {
        Some(i) => (raw.c(i), raw.s[i]),
        None => (1.0, Complex64::ZERO),
    };
    c0 * grads.d_alpha_bar - s0 * grads.d_alpha
}

/// Anomalous residual `O(k) = −2 c_k s_k f_k + s_k² ḡ_k + c_k² g_k` and
/// quasiparticle energy `D(k) = f_k(c_k²+|s_k|²) − c_k(s_k ḡ_k + s̄_k g_k)`,
/// per mode, from raw parameters.
pub fn raw_d_o(
    raw: &RawSqueeze,
    f: &[f64],
    g: &[Complex64],
) -> (Vec<f64>, Vec<Complex64>) {
    let n = raw.s.len();
    let mut d = Vec::with_capacity(n);
    let mut o = Vec::with_capacity(n);
    for i in 0..n {
        let s = raw.s[i];
        let c = raw.c(i);
        d.push(f[i] * (c * c + s.norm_sqr()) - 2.0 * c * (s * g[i].conj()).re);
        o.push(-2.0 * c * s * f[i] + s * s * g[i].conj() + c * c * g[i]);
    }
    (d, o)
}

/// Solver state: capital parameters on a half-lattice, plus the condensate.
#[derive(Debug, Clone)]
pub struct HfbState {
    pub geom: BoxGeometry,
    pub alpha_abs: f64,
    pub tau: f64,
    /// Half-lattice representatives (lexicographically positive), preceded
    /// by the zero mode when the policy includes it.
    half_modes: Vec<Mode>,
    pub s_cap: Vec<Complex64>,
    pub c_cap: Vec<f64>,
    pub policy: ZeroModePolicy,
}

impl HfbState {
    /// The natural starting point: no squeezing, condensate only.
    pub fn start(
        geom: &BoxGeometry,
        alpha_abs: f64,
        tau: f64,
        policy: ZeroModePolicy,
    ) -> Result<Self> {
        if alpha_abs < 0.0 {
            return Err(Error::Domain(format!("|α| must be nonnegative, got {alpha_abs}")));
        }
        let mut half_modes = Vec::new();
        if policy == ZeroModePolicy::Include {
            half_modes.push([0, 0, 0]);
        }
        half_modes.extend(geom.half_grid());
        let n = half_modes.len();
        Ok(HfbState {
            geom: geom.clone(),
            alpha_abs,
            tau,
            half_modes,
            s_cap: vec![Complex64::ZERO; n],
            c_cap: vec![1.0; n],
            policy,
        })
    }

    pub fn half_modes(&self) -> &[Mode] {
        &self.half_modes
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::from_polar(self.alpha_abs, self.tau)
    }

    /// Max deviation of `C² − |S|²` from 1.
    pub fn constraint_residual(&self) -> f64 {
        self.half_modes
            .iter()
            .enumerate()
            .map(|(i, _)| (self.c_cap[i] * self.c_cap[i] - self.s_cap[i].norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Validity: constraint to 1e−12, C ≥ 1, and (at τ = 0) real S.
    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.half_modes.iter().enumerate() {
            if self.c_cap[i] < 1.0 - 1e-12 {
                return Err(Error::Domain(format!(
                    "C at mode {m:?} is {}, below 1",
                    self.c_cap[i]
                )));
            }
            let res = (self.c_cap[i] * self.c_cap[i] - self.s_cap[i].norm_sqr() - 1.0).abs();
            if res > 1e-12 * self.c_cap[i].max(1.0).powi(2) {
                return Err(Error::Domain(format!(
                    "hyperbolic constraint violated at mode {m:?}: C²−|S|²−1 = {res:e}"
                )));
            }
            if self.tau == 0.0 && self.s_cap[i].im.abs() > 1e-12 * (1.0 + self.s_cap[i].norm()) {
                return Err(Error::Domain(format!(
                    "S at mode {m:?} has imaginary part {} although τ = 0",
                    self.s_cap[i].im
                )));
            }
        }
        Ok(())
    }

    /// Full squeezed mode list (both members of each pair), in a fixed
    /// order: each half mode followed by its negation; zero mode once.
    pub fn full_modes(&self) -> Vec<Mode> {
        let mut out = Vec::with_capacity(2 * self.half_modes.len());
        for m in &self.half_modes {
            out.push(*m);
            if !mode_is_zero(*m) {
                out.push(mode_neg(*m));
            }
        }
        out
    }

    /// Capital values expanded onto `full_modes()` order.
    pub fn full_caps(&self) -> (Vec<Complex64>, Vec<f64>) {
        let mut s = Vec::new();
        let mut c = Vec::new();
        for (i, m) in self.half_modes.iter().enumerate() {
            s.push(self.s_cap[i]);
            c.push(self.c_cap[i]);
            if !mode_is_zero(*m) {
                s.push(self.s_cap[i]);
                c.push(self.c_cap[i]);
            }
        }
        (s, c)
    }

    /// Lowercase parameters: `c = √((C+1)/2)`, `s = S/(2c)`, on the full
    /// mode list.
    pub fn raw(&self) -> RawSqueeze {
        let (s_cap, c_cap) = self.full_caps();
        let s = s_cap
            .iter()
            .zip(&c_cap)
            .map(|(s, c)| {
                let low_c = (0.5 * (c + 1.0)).sqrt();
                s / (2.0 * low_c)
            })
            .collect();
        RawSqueeze { alpha: self.alpha(), s }
    }

    /// Slot of a half mode.
    pub fn slot(&self, m: Mode) -> Option<usize> {
        let rep = if mode_lex_positive(m) || mode_is_zero(m) { m } else { mode_neg(m) };
        self.half_modes.iter().position(|h| *h == rep)
    }
}

/// Coefficient parameterization: explicit μ, or μ eliminated through the
/// condensate stationarity relation.
#[derive(Debug, Clone, Copy)]
pub enum CoeffForm {
    Mu(f64),
    Alpha,
}

/// Per-half-mode coefficients `(f_k, g_k)` of a solver state.
///
/// μ-form: the raw formulas with capital substitutions
/// `|s|² = (C−1)/2`, `sc = S/2`. α-form (μ eliminated):
/// `f_k = k²/2 + |α|²v̂(k)/V + Σ (v̂(k'−k) − v̂(k'))(C_{k'}−1)/(2V)
///        + Re[e^{2iτ} Σ v̂(k') S̄_{k'}/(2V)]`,
/// `g_k = α² v̂(k)/V − Σ v̂(k'−k) S_{k'}/(2V)`.
/// `f` must come out real; a residual imaginary part beyond 1e−12 of scale
/// is reported as a failure (it means the state's phases are inconsistent).
pub fn coefficients_f_g(
    table: &ModeTable,
    state: &HfbState,
    form: CoeffForm,
) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let full = state.full_modes();
    if full.len() != table.len() {
        return Err(Error::Config("mode table does not match state".into()));
    }
    let (s_cap, c_cap) = state.full_caps();
    let vol = state.geom.volume();
    let alpha = state.alpha();
    let a2 = alpha.norm_sqr();
    let alpha_sq = alpha * alpha;
    let phase = Complex64::from_polar(1.0, 2.0 * state.tau);
    let n = table.len();

    let results: Vec<(f64, Complex64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = alpha_sq * table.vhat[i] / vol;
            let mut f_im = 0.0;
            let mut f = match form {
                CoeffForm::Mu(mu) => {
                    table.ksq_half[i] - mu + (table.vhat0 + table.vhat[i]) * a2 / vol
                }
                CoeffForm::Alpha => table.ksq_half[i] + table.vhat[i] * a2 / vol,
            };
            for j in 0..n {
                let v = table.vdiff(j, i);
                let dep = 0.5 * (c_cap[j] - 1.0);
                g -= v * s_cap[j] / (2.0 * vol);
                match form {
                    CoeffForm::Mu(_) => {
                        f += (v + table.vhat0) * dep / vol;
                    }
                    CoeffForm::Alpha => {
                        f += (v - table.vhat[j]) * dep / vol;
                        let t = phase * s_cap[j].conj() * table.vhat[j] / (2.0 * vol);
                        f += t.re;
                        f_im += t.im;
                    }
                }
            }
            (f, g, f_im)
        })
        .map(|(f, g, _fi)| (f, g))
        .collect();

    // Reality check for the α-form phase term, done on the full sums.
    if let CoeffForm::Alpha = form {
        let mut t = Complex64::ZERO;
        for j in 0..n {
            t += phase * s_cap[j].conj() * table.vhat[j] / (2.0 * vol);
        }
        let scale = results.iter().map(|(f, _)| f.abs()).fold(1.0, f64::max);
        if t.im.abs() > 1e-12 * scale {
            return Err(Error::CheckFailed(format!(
                "f acquired imaginary part {:e}; state phases inconsistent with τ",
                t.im
            )));
        }
    }

    // Collapse to half-lattice order.
    let mut f_half = Vec::with_capacity(state.half_modes().len());
    let mut g_half = Vec::with_capacity(state.half_modes().len());
    let mut idx = 0;
    for m in state.half_modes() {
        f_half.push(results[idx].0);
        g_half.push(results[idx].1);
        idx += if mode_is_zero(*m) { 1 } else { 2 };
    }
    Ok((f_half, g_half))
}

/// Quasiparticle energies and anomalous residuals of a solver state, by two
/// independently coded routes that must agree: lowercase
/// (`D = f(c²+|s|²) − c(sḡ + s̄g)`, `O = −2csf + s²ḡ + c²g`) and capital
/// (`D = Cf − Re(Sḡ)`, `O = −Sf + Cg`).
#[derive(Debug, Clone)]
pub struct DandO {
    pub d: Vec<f64>,
    pub o: Vec<Complex64>,
    pub d_capital: Vec<f64>,
    pub o_capital: Vec<Complex64>,
}

impl DandO {
    /// Max relative disagreement between the two routes.
    pub fn route_disagreement(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.d.len() {
            let scale = self.d[i].abs().max(1.0);
            worst = worst.max((self.d[i] - self.d_capital[i]).abs() / scale);
            let so = self.o[i].norm().max(1.0);
            worst = worst.max((self.o[i] - self.o_capital[i]).norm() / so);
        }
        worst
    }
}

pub fn coefficients_d_o(state: &HfbState, f: &[f64], g: &[Complex64]) -> DandO {
    let n = state.half_modes().len();
    let mut d = Vec::with_capacity(n);
    let mut o = Vec::with_capacity(n);
    let mut d_cap = Vec::with_capacity(n);
    let mut o_cap = Vec::with_capacity(n);
    for i in 0..n {
        let cc = state.c_cap[i];
        let ss = state.s_cap[i];
        let low_c = (0.5 * (cc + 1.0)).sqrt();
        let low_s = ss / (2.0 * low_c);
        d.push(f[i] * (low_c * low_c + low_s.norm_sqr()) - 2.0 * low_c * (low_s * g[i].conj()).re);
        o.push(-2.0 * low_c * low_s * f[i] + low_s * low_s * g[i].conj() + low_c * low_c * g[i]);
        d_cap.push(cc * f[i] - (ss * g[i].conj()).re);
        o_cap.push(-ss * f[i] + cc * g[i]);
    }
    DandO { d, o, d_capital: d_cap, o_capital: o_cap }
}

/// Chemical potential from condensate stationarity (requires `|α| > 0`):
/// `μ = v̂(0)|α|²/V + Σ (v̂(0)+v̂(k))(C_k−1)/(2V) − Re[e^{2iτ} Σ v̂(k) S̄_k/(2V)]`.
pub fn chemical_potential_of_state(table: &ModeTable, state: &HfbState) -> Result<f64> {
    if state.alpha_abs == 0.0 {
        return Err(Error::Domain(
            "μ-elimination needs |α| > 0; with no condensate use the explicit-μ form".into(),
        ));
    }
    let full = state.full_modes();
    if full.len() != table.len() {
        return Err(Error::Config("mode table does not match state".into()));
    }
    let (s_cap, c_cap) = state.full_caps();
    let vol = state.geom.volume();
    let phase = Complex64::from_polar(1.0, 2.0 * state.tau);
    let mut mu = Complex64::new(table.vhat0 * state.alpha_abs * state.alpha_abs / vol, 0.0);
    for j in 0..table.len() {
        mu += (table.vhat0 + table.vhat[j]) * 0.5 * (c_cap[j] - 1.0) / vol;
        mu -= phase * s_cap[j].conj() * table.vhat[j] / (2.0 * vol);
    }
    if mu.im.abs() > 1e-10 * mu.re.abs().max(1.0) {
        return Err(Error::CheckFailed(format!(
            "chemical potential came out complex (Im = {:e}); phases inconsistent",
            mu.im
        )));
    }
    Ok(mu.re)
}

/// Grand-canonical density `ρ = (|α|² + Σ_k (C_k−1)/2) / V`.
pub fn density_of_state(state: &HfbState) -> f64 {
    let (_, c_cap) = state.full_caps();
    let dep: f64 = c_cap.iter().map(|c| 0.5 * (c - 1.0)).sum();
    (state.alpha_abs * state.alpha_abs + dep) / state.geom.volume()
}

/// Energy of a solver state.
pub fn energy_of_state(table: &ModeTable, state: &HfbState, mu: f64) -> Result<f64> {
    energy_b(table, &state.raw(), mu)
}

/// Stationarity diagnostics at a state: residual magnitudes, the zero-mode
/// Hessian block `[[f₀, g₀], [ḡ₀, f₀]]`, and the gap.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub c_residual_abs: f64,
    pub max_o_abs: f64,
    pub grad_alpha_abs: f64,
    pub max_grad_s_abs: f64,
    pub constraint_residual: f64,
    pub f0: f64,
    pub g0_abs: f64,
    /// Hessian eigenvalues `f₀ ± |g₀|`.
    pub hessian_eigs: (f64, f64),
    pub hessian_psd: bool,
    /// `D(0)² = 4 (v̂(0)|α|²/V) · W` with `W = Re[e^{2iτ} Σ v̂ S̄/(2V)]`;
    /// negative means the gap is imaginary at this state.
    pub d0_squared: f64,
    /// `sgn(D(0)²)·√|D(0)²|`.
    pub d0: f64,
}

pub fn stationarity_report(
    table: &ModeTable,
    state: &HfbState,
    mu: f64,
) -> Result<StationarityReport> {
    let raw = state.raw();
    let grads = gradients_b(table, &raw, mu);
    let c_res = condensate_residual(table, &raw, mu);
    let (f, g) = coefficients_f_g(table, state, CoeffForm::Mu(mu))?;
    let d_o = coefficients_d_o(state, &f, &g);
    let max_o = d_o.o.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_grad_s = grads.d_s_bar.iter().map(|z| z.norm()).fold(0.0, f64::max);

    // Zero-mode block from the α-form coefficients evaluated at k = 0:
    // f₀ = F + W, |g₀| = |F − W| with F = v̂(0)|α|²/V.
    let vol = state.geom.volume();
    let cap_f = table.vhat0 * state.alpha_abs * state.alpha_abs / vol;
    let phase = Complex64::from_polar(1.0, 2.0 * state.tau);
    let (s_cap, _) = state.full_caps();
    let mut w = Complex64::ZERO;
    for j in 0..table.len() {
        w += phase * s_cap[j].conj() * table.vhat[j] / (2.0 * vol);
    }
    let w = w.re;
    let f0 = cap_f + w;
    let g0_abs = (cap_f - w).abs();
    let eigs = (f0 - g0_abs, f0 + g0_abs);
    let d0_squared = 4.0 * cap_f * w;
    let d0 = d0_squared.signum() * d0_squared.abs().sqrt();
    Ok(StationarityReport {
        c_residual_abs: c_res.norm(),
        max_o_abs: max_o,
        grad_alpha_abs: grads.d_alpha_bar.norm(),
        max_grad_s_abs: max_grad_s,
        constraint_residual: state.constraint_residual(),
        f0,
        g0_abs,
        hessian_eigs: eigs,
        hessian_psd: eigs.0 >= -1e-12 * f0.abs().max(1.0),
        d0_squared,
        d0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn gauss() -> Potential {
        Potential::gaussian(1.0, 1.0).unwrap()
    }

    fn table_for(state: &HfbState, pot: &Potential) -> ModeTable {
        ModeTable::new(&state.geom, state.full_modes(), pot).unwrap()
    }

    fn random_raw(rng: &mut StdRng, n: usize, scale: f64) -> RawSqueeze {
        let alpha = Complex64::new(rng.random_range(-1.0..1.5), rng.random_range(-1.0..1.0));
        let s = (0..n)
            .map(|_| Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
            .collect();
        RawSqueeze { alpha, s }
    }

    #[test]
    fn vacuum_energy_is_zero() {
        let geom = BoxGeometry::new(1, 7.0, 2, false).unwrap();
        let state = HfbState::start(&geom, 0.0, 0.0, ZeroModePolicy::Exclude).unwrap();
        let table = table_for(&state, &gauss());
        let b = energy_of_state(&table, &state, 0.9).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn coherent_state_energy_hits_mean_field_minimum() {
        let geom = BoxGeometry::new(1, 7.0, 3, false).unwrap();
        let pot = gauss();
        let mu = 1.3;
        let v0 = pot.vhat0(1).unwrap();
        let alpha = (mu * geom.volume() / v0).sqrt();
        let state = HfbState::start(&geom, alpha, 0.0, ZeroModePolicy::Exclude).unwrap();
        let table = table_for(&state, &pot);
        let b = energy_of_state(&table, &state, mu).unwrap();
        let expect = -geom.volume() * mu * mu / (2.0 * v0);
        assert!((b - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Central differences on every real coordinate of (α, s₁..s_n),
        // random asymmetric states, relative error ≤ 1e−6.
        let geom = BoxGeometry::new(1, 6.0, 2, true).unwrap();
        let pot = gauss();
        let modes = geom.momentum_grid();
        let table = ModeTable::new(&geom, modes.clone(), &pot).unwrap();
        let mu = 0.8;
        let mut rng = StdRng::seed_from_u64(7);
        let h = 1e-5;
        for _ in 0..20 {
            let raw = random_raw(&mut rng, modes.len(), 0.7);
            let grads = gradients_b(&table, &raw, mu);
            let b_at = |r: &RawSqueeze| energy_b(&table, r, mu).unwrap();
            // α real/imaginary directions: ∂x = ∂α + ∂ᾱ, ∂y = i(∂α − ∂ᾱ).
            let mut plus = raw.clone();
            plus.alpha += h;
            let mut minus = raw.clone();
            minus.alpha -= h;
            let fd_x = (b_at(&plus) - b_at(&minus)) / (2.0 * h);
            let an_x = (grads.d_alpha + grads.d_alpha_bar).re;
            assert!((fd_x - an_x).abs() <= 1e-6 * an_x.abs().max(1.0), "α.x {fd_x} vs {an_x}");
            let mut plus = raw.clone();
            plus.alpha += Complex64::new(0.0, h);
            let mut minus = raw.clone();
            minus.alpha -= Complex64::new(0.0, h);
            let fd_y = (b_at(&plus) - b_at(&minus)) / (2.0 * h);
            let an_y = (Complex64::i() * (grads.d_alpha - grads.d_alpha_bar)).re;
            assert!((fd_y - an_y).abs() <= 1e-6 * an_y.abs().max(1.0), "α.y {fd_y} vs {an_y}");
            for i in 0..modes.len() {
                let mut plus = raw.clone();
                plus.s[i] += h;
                let mut minus = raw.clone();
                minus.s[i] -= h;
                let fd = (b_at(&plus) - b_at(&minus)) / (2.0 * h);
                let an = (grads.d_s[i] + grads.d_s_bar[i]).re;
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "s[{i}].x {fd} vs {an}");
                let mut plus = raw.clone();
                plus.s[i] += Complex64::new(0.0, h);
                let mut minus = raw.clone();
                minus.s[i] -= Complex64::new(0.0, h);
                let fd = (b_at(&plus) - b_at(&minus)) / (2.0 * h);
                let an = (Complex64::i() * (grads.d_s[i] - grads.d_s_bar[i])).re;
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "s[{i}].y {fd} vs {an}");
            }
        }
    }

    #[test]
    fn condensate_residual_identity_with_squeezed_zero_mode() {
        // C = c₀∂_ᾱB − s₀∂_αB must hold whether or not mode 0 is squeezed;
        // with s₀ = 0 it reduces to C = ∂_ᾱB exactly.
        let geom = BoxGeometry::new(1, 6.0, 2, true).unwrap();
        let pot = gauss();
        let modes = geom.momentum_grid();
        let table = ModeTable::new(&geom, modes.clone(), &pot).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let raw = random_raw(&mut rng, modes.len(), 0.5);
        let c = condensate_residual(&table, &raw, 0.7);
        let grads = gradients_b(&table, &raw, 0.7);
        let zero = modes.iter().position(|m| mode_is_zero(*m)).unwrap();
        let expect = raw.c(zero) * grads.d_alpha_bar - raw.s[zero] * grads.d_alpha;
        assert!((c - expect).norm() < 1e-12);
        // Zero mode unsqueezed: drop it from the table.
        let nz: Vec<Mode> = modes.iter().copied().filter(|m| !mode_is_zero(*m)).collect();
        let table2 = ModeTable::new(&geom, nz.clone(), &pot).unwrap();
        let raw2 = RawSqueeze {
            alpha: raw.alpha,
            s: raw
                .s
                .iter()
                .zip(&modes)
                .filter(|(_, m)| !mode_is_zero(**m))
                .map(|(s, _)| *s)
                .collect(),
        };
        let c2 = condensate_residual(&table2, &raw2, 0.7);
        let g2 = gradients_b(&table2, &raw2, 0.7);
        assert_eq!(c2, g2.d_alpha_bar);
    }

    #[test]
    fn anomalous_residual_matches_gradient_combination() {
        // O(k) = (−2c_k + |s_k|²/c_k) ∂_{s̄_k}B − (s_k²/c_k) ∂_{s_k}B.
        let geom = BoxGeometry::new(1, 6.0, 3, false).unwrap();
        let pot = gauss();
        let modes = geom.momentum_grid();
        let table = ModeTable::new(&geom, modes.clone(), &pot).unwrap();
        let mu = 1.1;
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let raw = random_raw(&mut rng, modes.len(), 0.8);
            let (f, g) = raw_coefficients(&table, &raw, mu);
            let (_, o) = raw_d_o(&raw, &f, &g);
            let grads = gradients_b(&table, &raw, mu);
            for i in 0..modes.len() {
                let s = raw.s[i];
                let c = raw.c(i);
                let combo = (-2.0 * c + s.norm_sqr() / c) * grads.d_s_bar[i]
                    - s * s / c * grads.d_s[i];
                assert!(
                    (combo - o[i]).norm() <= 1e-10 * o[i].norm().max(1.0),
                    "mode {i}: {combo} vs {}",
                    o[i]
                );
            }
        }
    }

    #[test]
    fn first_iteration_coefficients_from_unsqueezed_start() {
        // S = 0, C = 1, κ = |α|²/V: α-form gives f = k²/2 + κv̂(k) and
        // g = κ v̂(k) e^{2iτ}; D = ω and O = g.
        let geom = BoxGeometry::new(1, 9.0, 4, false).unwrap();
        let pot = gauss();
        let tau = 0.4;
        let alpha_abs = 1.2;
        let state = HfbState::start(&geom, alpha_abs, tau, ZeroModePolicy::Exclude).unwrap();
        let table = table_for(&state, &pot);
        let kappa = alpha_abs * alpha_abs / geom.volume();
        let (f, g) = coefficients_f_g(&table, &state, CoeffForm::Alpha).unwrap();
        for (i, m) in state.half_modes().iter().enumerate() {
            let k2 = geom.mode_norm_sq(*m);
            let vh = pot.fourier_mode(&geom, *m).unwrap();
            assert!((f[i] - (0.5 * k2 + kappa * vh)).abs() < 1e-14 * f[i].abs());
            let want = Complex64::from_polar(kappa * vh, 2.0 * tau);
            assert!((g[i] - want).norm() < 1e-14 * want.norm().max(1e-300));
        }
        let d_o = coefficients_d_o(&state, &f, &g);
        for i in 0..f.len() {
            assert_eq!(d_o.d[i], f[i], "S = 0 ⇒ D = f");
            assert_eq!(d_o.o[i], g[i], "S = 0 ⇒ O = g");
        }
    }

    #[test]
    fn free_terms_without_interaction_scale() {
        // v̂ ≡ 0 (λ = 0), α = 0: μ-form gives f = k²/2 − μ, g = 0.
        let geom = BoxGeometry::new(1, 9.0, 3, false).unwrap();
        let pot = Potential::gaussian(1.0, 1.0).unwrap().with_lambda(0.0);
        let state = HfbState::start(&geom, 0.0, 0.0, ZeroModePolicy::Exclude).unwrap();
        let table = table_for(&state, &pot);
        let mu = 0.3;
        let (f, g) = coefficients_f_g(&table, &state, CoeffForm::Mu(mu)).unwrap();
        for (i, m) in state.half_modes().iter().enumerate() {
            assert_eq!(f[i], 0.5 * geom.mode_norm_sq(*m) - mu);
            assert_eq!(g[i], Complex64::ZERO);
        }
    }

    #[test]
    fn d_and_o_with_constant_coupling() {
        // κ = 1, v̂ ≡ 1, k² = 2: f = 2, g = 1, D = √3.
        let f = vec![2.0];
        let g = vec![Complex64::new(1.0, 0.0)];
        // State with S = g/D, C = f/D at that point.
        let d_val = 3.0f64.sqrt();
        let geom = BoxGeometry::new(1, 2.0 * std::f64::consts::PI, 1, false).unwrap();
        let mut state = HfbState::start(&geom, 1.0, 0.0, ZeroModePolicy::Exclude).unwrap();
        state.s_cap[0] = Complex64::new(1.0 / d_val, 0.0);
        state.c_cap[0] = 2.0 / d_val;
        state.validate().unwrap();
        let d_o = coefficients_d_o(&state, &f, &g);
        assert!((d_o.d_capital[0] - d_val).abs() < 1e-12, "Cf − Sḡ = (f²−g²)/D = D");
        assert!(d_o.o_capital[0].norm() < 1e-12, "−Sf + Cg = 0 at the fixed point");
        assert!((d_o.d[0] - d_val).abs() < 1e-12);
        assert!(d_o.o[0].norm() < 1e-12);
        assert!(d_o.route_disagreement() < 1e-12);
    }

    #[test]
    fn chemical_potential_reduces_to_mean_field_and_stays_intensive() {
        let pot = gauss();
        let mu_of = |len: f64, alpha_abs: f64| {
            let geom = BoxGeometry::new(1, len, 3, false).unwrap();
            let state = HfbState::start(&geom, alpha_abs, 0.0, ZeroModePolicy::Exclude).unwrap();
            let table = table_for(&state, &pot);
            chemical_potential_of_state(&table, &state).unwrap()
        };
        let v0 = pot.vhat0(1).unwrap();
        let kappa = 0.6;
        let l = 8.0;
        let mu1 = mu_of(l, (kappa * l).sqrt());
        assert!((mu1 - v0 * kappa).abs() < 1e-13, "S = 0 ⇒ μ = v̂(0)κ");
        // Doubling the box at fixed κ and S-profile (still zero) keeps μ.
        let mu2 = mu_of(2.0 * l, (kappa * 2.0 * l).sqrt());
        assert!((mu1 - mu2).abs() < 1e-13);
        // No condensate: elimination refused.
        let geom = BoxGeometry::new(1, l, 3, false).unwrap();
        let state = HfbState::start(&geom, 0.0, 0.0, ZeroModePolicy::Exclude).unwrap();
        let table = table_for(&state, &pot);
        assert!(chemical_potential_of_state(&table, &state).is_err());
    }

    #[test]
    fn density_counts_condensate_and_depletion() {
        let geom = BoxGeometry::new(1, 5.0, 2, false).unwrap();
        let mut state = HfbState::start(&geom, 2.0, 0.0, ZeroModePolicy::Exclude).unwrap();
        assert!((density_of_state(&state) - 4.0 / geom.volume()).abs() < 1e-15);
        state.c_cap[0] = 1.5;
        state.s_cap[0] = Complex64::new((1.5f64 * 1.5 - 1.0).sqrt(), 0.0);
        state.validate().unwrap();
        // Half mode 0 covers the pair ±k: depletion 2·(C−1)/2.
        let want = (4.0 + 0.5) / geom.volume();
        assert!((density_of_state(&state) - want).abs() < 1e-15);
        assert!(density_of_state(&state) >= 4.0 / geom.volume());
    }

    #[test]
    fn gauge_rotation_leaves_observables_invariant() {
        let geom = BoxGeometry::new(1, 6.0, 3, false).unwrap();
        let pot = gauss();
        let mut rng = StdRng::seed_from_u64(3);
        let mut state = HfbState::start(&geom, 1.1, 0.0, ZeroModePolicy::Exclude).unwrap();
        for i in 0..state.s_cap.len() {
            let x = rng.random_range(-0.6..0.6);
            state.s_cap[i] = Complex64::new(x, 0.0);
            state.c_cap[i] = (1.0 + x * x).sqrt();
        }
        state.validate().unwrap();
        let table = table_for(&state, &pot);
        let mu = chemical_potential_of_state(&table, &state).unwrap();
        let b = energy_of_state(&table, &state, mu).unwrap();
        let (f, g) = coefficients_f_g(&table, &state, CoeffForm::Mu(mu)).unwrap();
        let d_o = coefficients_d_o(&state, &f, &g);
        let rho = density_of_state(&state);

        let phi = 0.83;
        let mut rotated = state.clone();
        rotated.tau += phi;
        let rot = Complex64::from_polar(1.0, 2.0 * phi);
        for s in rotated.s_cap.iter_mut() {
            *s *= rot;
        }
        rotated.validate().unwrap();
        let mu_r = chemical_potential_of_state(&table, &rotated).unwrap();
        let b_r = energy_of_state(&table, &rotated, mu_r).unwrap();
        let (f_r, g_r) = coefficients_f_g(&table, &rotated, CoeffForm::Mu(mu_r)).unwrap();
        let d_o_r = coefficients_d_o(&rotated, &f_r, &g_r);
        let rho_r = density_of_state(&rotated);

        assert!((mu - mu_r).abs() <= 1e-12 * mu.abs().max(1.0));
        assert!((b - b_r).abs() <= 1e-12 * b.abs().max(1.0));
        assert!((rho - rho_r).abs() <= 1e-12);
        for i in 0..f.len() {
            assert!((d_o.d[i] - d_o_r.d[i]).abs() <= 1e-12 * d_o.d[i].abs().max(1.0));
            assert!((d_o.o[i].norm() - d_o_r.o[i].norm()).abs() <= 1e-12);
        }
    }

    #[test]
    fn stationarity_report_links_hessian_and_gap() {
        let geom = BoxGeometry::new(1, 6.0, 3, false).unwrap();
        let pot = gauss();
        let mut state = HfbState::start(&geom, 1.4, 0.0, ZeroModePolicy::Exclude).unwrap();
        // Positive S-profile: W > 0 so the gap formula gives a real D(0).
        for i in 0..state.s_cap.len() {
            let x = 0.3 / (1.0 + i as f64);
            state.s_cap[i] = Complex64::new(x, 0.0);
            state.c_cap[i] = (1.0 + x * x).sqrt();
        }
        let table = table_for(&state, &pot);
        let rep = stationarity_report(&table, &state, 0.9).unwrap();
        assert!(rep.d0_squared > 0.0);
        assert!(rep.hessian_psd);
        assert!((rep.hessian_eigs.0 - (rep.f0 - rep.g0_abs)).abs() < 1e-14);
        // PSD ⟺ D(0)² ≥ 0: flip the profile sign to break both at once.
        let mut flipped = state.clone();
        for s in flipped.s_cap.iter_mut() {
            *s = -*s;
        }
        let rep2 = stationarity_report(&table, &flipped, 0.9).unwrap();
        assert!(rep2.d0_squared < 0.0);
        assert!(!rep2.hessian_psd);
        assert!(rep2.d0 < 0.0, "imaginary gap is reported as a negative magnitude");
    }

    #[test]
    fn state_validation_catches_broken_constraint_and_phase() {
        let geom = BoxGeometry::new(1, 6.0, 2, false).unwrap();
        let mut state = HfbState::start(&geom, 1.0, 0.0, ZeroModePolicy::Exclude).unwrap();
        state.s_cap[0] = Complex64::new(0.5, 0.0);
        // C left at 1: constraint broken.
        assert!(state.validate().is_err());
        state.c_cap[0] = (1.0 + 0.25f64).sqrt();
        state.validate().unwrap();
        state.s_cap[0] = Complex64::new(0.3, 0.4);
        state.c_cap[0] = (1.0 + 0.25f64).sqrt();
        assert!(state.validate().is_err(), "imaginary S at τ = 0");
    }
}
