//! Self-consistent squeezed-state solver on a finite momentum lattice.
//!
//! Stationarity in the pair parameters is `O(k) = 0`, i.e. `S_k = g_k/D_k`
//! and `C_k = f_k/D_k` with `D = √(f² − |g|²)`. The solver runs the damped
//! iteration on those targets with the condensate density `κ = |α|²/V`
//! held fixed and μ eliminated through condensate stationarity, so any
//! fixed point is stationary in α automatically; μ is recovered afterwards.
//! Solving at a prescribed μ wraps the κ-solve in a bracketed root find.
//!
//! A damped average of two hyperbolic pairs drifts off `C² − |S|² = 1` by
//! second order in the update, so each sweep ends with the exact hyperbolic
//! rescale `(C, S) ← (C, S)/√(C² − |S|²)`, which fixed points pass through
//! unchanged.

use crate::error::{Error, Result};
use crate::hfb::state::{
    chemical_potential_of_state, coefficients_f_g, density_of_state, energy_of_state,
    stationarity_report, CoeffForm, HfbState, ModeTable, StationarityReport, ZeroModePolicy,
};
use crate::model::{mode_is_zero, BoxGeometry, Potential};
use crate::numerics::{bisect_root, damped_fixed_point, FixedPointOptions, FixedPointTrace};
use num_complex::Complex64;

/// Primary knob of the finite-box solve.
#[derive(Debug, Clone, Copy)]
pub enum BoxParam {
    /// Condensate density `κ = |α|²/V`; μ is an output.
    Kappa(f64),
    /// Chemical potential; κ is found by a bracketed root find.
    Mu(f64),
}

#[derive(Debug, Clone)]
pub struct BoxOptions {
    pub policy: ZeroModePolicy,
    pub tau: f64,
    pub fixed_point: FixedPointOptions,
    /// Start from this state instead of the unsqueezed one (multi-start).
    pub initial: Option<HfbState>,
}

impl Default for BoxOptions {
    fn default() -> Self {
        BoxOptions {
            policy: ZeroModePolicy::Exclude,
            tau: 0.0,
            fixed_point: FixedPointOptions::default(),
            initial: None,
        }
    }
}

/// Converged solution with its self-consistency diagnostics.
#[derive(Debug, Clone)]
pub struct BoxSolve {
    pub state: HfbState,
    pub mu: f64,
    pub kappa: f64,
    pub energy: f64,
    pub density: f64,
    pub report: StationarityReport,
    /// `D(k)` per half mode evaluated at the unsqueezed start; equals the
    /// grand-canonical Bogoliubov dispersion at `μ = v̂(0)κ`.
    pub first_iteration_d: Vec<f64>,
    pub trace: FixedPointTrace,
}

#[derive(Clone)]
struct IterX {
    s: Vec<Complex64>,
    c: Vec<f64>,
}

fn coefficient_targets(
    table: &ModeTable,
    template: &HfbState,
    x: &IterX,
) -> Result<IterX> {
    let mut state = template.clone();
    state.s_cap = x.s.clone();
    state.c_cap = x.c.clone();
    let (f, g) = coefficients_f_g(table, &state, CoeffForm::Alpha)?;
    let mut target = IterX { s: vec![Complex64::ZERO; f.len()], c: vec![1.0; f.len()] };
    for (i, m) in state.half_modes().iter().enumerate() {
        if f[i] <= 0.0 {
            return Err(Error::Domain(format!(
                "f at mode {m:?} is {}; the f ≤ 0 branch is outside this solver",
                f[i]
            )));
        }
        let d_sq = f[i] * f[i] - g[i].norm_sqr();
        if d_sq <= 0.0 {
            if mode_is_zero(*m) {
                return Err(Error::Domain(
                    "zero-mode update diverges: D(0) = 0 at the unsqueezed start makes \
                     S_0 = g_0/D_0 infinite, so the iteration cannot continue past the \
                     first step; exclude the zero mode from the pair modes"
                        .into(),
                ));
            }
            return Err(Error::Domain(format!(
                "f² < |g|² at mode {m:?} (f = {}, |g| = {}); no real quasiparticle energy",
                f[i],
                g[i].norm()
            )));
        }
        let d = d_sq.sqrt();
        target.s[i] = g[i] / d;
        target.c[i] = f[i] / d;
    }
    Ok(target)
}

/// `D(k)` per half mode at a given iterate (clamped to 0 where `f² < |g|²`,
/// which only happens for the included zero mode at the start).
fn d_of(table: &ModeTable, template: &HfbState, x: &IterX) -> Result<Vec<f64>> {
    let mut state = template.clone();
    state.s_cap = x.s.clone();
    state.c_cap = x.c.clone();
    let (f, g) = coefficients_f_g(table, &state, CoeffForm::Alpha)?;
    Ok(f.iter().zip(&g).map(|(f, g)| (f * f - g.norm_sqr()).max(0.0).sqrt()).collect())
}

/// Solve the pair problem at fixed condensate density or fixed μ.
pub fn solve_finite_box(
    pot: &Potential,
    geom: &BoxGeometry,
    param: BoxParam,
    opts: &BoxOptions,
) -> Result<BoxSolve> {
    match param {
        BoxParam::Kappa(kappa) => solve_at_kappa(pot, geom, kappa, opts),
        BoxParam::Mu(mu) => solve_at_mu(pot, geom, mu, opts),
    }
}

fn solve_at_kappa(
    pot: &Potential,
    geom: &BoxGeometry,
    kappa: f64,
    opts: &BoxOptions,
) -> Result<BoxSolve> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("condensate density must be > 0, got {kappa}")));
    }
    let alpha_abs = (kappa * geom.volume()).sqrt();
    let template = match &opts.initial {
        Some(s) => {
            s.validate()?;
            let mut t = s.clone();
            t.alpha_abs = alpha_abs;
            t.tau = opts.tau;
            t
        }
        None => HfbState::start(geom, alpha_abs, opts.tau, opts.policy)?,
    };
    let table = ModeTable::new(geom, template.full_modes(), pot)?;
    // v̂ ≥ 0 with v̂(0) > 0 keeps f > 0 near the start and the energy
    // bounded below; attractive Fourier components are out of scope.
    if table.vhat0 <= 0.0 || table.vhat.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain(
            "solver requires v̂(0) > 0 and v̂ ≥ 0 on the whole grid".into(),
        ));
    }
    let n = template.half_modes().len();
    if n == 0 {
        return Err(Error::Config("no pair modes on this grid".into()));
    }

    let start = IterX { s: template.s_cap.clone(), c: template.c_cap.clone() };
    let unsqueezed =
        IterX { s: vec![Complex64::ZERO; n], c: vec![1.0; n] };
    let first_iteration_d = d_of(&table, &template, &unsqueezed)?;

    let step = |x: &IterX| coefficient_targets(&table, &template, x);
    let mix = |x: &IterX, t: &IterX, gamma: f64| {
        let mut s = Vec::with_capacity(x.s.len());
        let mut c = Vec::with_capacity(x.c.len());
        for i in 0..x.s.len() {
            let si = (1.0 - gamma) * x.s[i] + gamma * t.s[i];
            let ci = (1.0 - gamma) * x.c[i] + gamma * t.c[i];
            // Exact hyperbolic rescale; r ≥ 1 up to rounding.
            let r = (ci * ci - si.norm_sqr()).sqrt();
            s.push(si / r);
            c.push(ci / r);
        }
        IterX { s, c }
    };
    let dist = |a: &IterX, b: &IterX| {
        let mut worst = 0.0f64;
        for i in 0..a.s.len() {
            worst = worst.max((a.s[i] - b.s[i]).norm());
            worst = worst.max((a.c[i] - b.c[i]).abs());
        }
        worst
    };
    let (x, trace) = damped_fixed_point(start, step, mix, dist, opts.fixed_point.clone())?;
    if !trace.converged {
        return Err(Error::NoConvergence(format!(
            "pair iteration stalled after {} sweeps (last update {:.3e}, γ = {}, {} restarts)",
            trace.iterations,
            trace.update_norms.last().copied().unwrap_or(f64::NAN),
            trace.final_gamma,
            trace.restarts
        )));
    }
    let mut state = template.clone();
    state.s_cap = x.s;
    state.c_cap = x.c;
    state.validate()?;
    let mu = chemical_potential_of_state(&table, &state)?;
    let report = stationarity_report(&table, &state, mu)?;
    Ok(BoxSolve {
        energy: energy_of_state(&table, &state, mu)?,
        density: density_of_state(&state),
        kappa,
        mu,
        report,
        first_iteration_d,
        trace,
        state,
    })
}

fn solve_at_mu(
    pot: &Potential,
    geom: &BoxGeometry,
    mu: f64,
    opts: &BoxOptions,
) -> Result<BoxSolve> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!(
            "the condensed phase needs μ > 0, got {mu}; below that the state is vacuum"
        )));
    }
    let v0 = pot.vhat0(geom.d)?;
    let guess = mu / v0;
    // Bracket κ around the mean-field guess; μ(κ) is increasing there.
    let mu_of = |k: f64| -> Result<f64> { Ok(solve_at_kappa(pot, geom, k, opts)?.mu) };
    let mut lo = guess;
    let mut flo = mu_of(lo)? - mu;
    let mut tries = 0;
    while flo > 0.0 {
        lo *= 0.5;
        flo = mu_of(lo)? - mu;
        tries += 1;
        if tries > 60 {
            return Err(Error::NoConvergence("could not bracket κ from below".into()));
        }
    }
    let mut hi = guess.max(lo * 2.0);
    let mut fhi = mu_of(hi)? - mu;
    tries = 0;
    while fhi < 0.0 {
        hi *= 1.5;
        fhi = mu_of(hi)? - mu;
        tries += 1;
        if tries > 60 {
            return Err(Error::NoConvergence("could not bracket κ from above".into()));
        }
    }
    let kappa = bisect_root(|k| Ok(mu_of(k)? - mu), lo, hi, 1e-13 * guess.max(1e-6), 200)?;
    solve_at_kappa(pot, geom, kappa, opts)
}

/// Spread of converged solutions across perturbed starts. Disagreement is
/// reported, not judged: the fixed point has no uniqueness theory.
#[derive(Debug, Clone)]
pub struct MultiStartReport {
    pub energies: Vec<f64>,
    pub energy_spread: f64,
    pub max_state_distance: f64,
}

/// Run the κ-solve from the unsqueezed start and from randomly perturbed
/// starts, returning the lowest-energy solution with the spread report.
pub fn solve_finite_box_multistart(
    pot: &Potential,
    geom: &BoxGeometry,
    param: BoxParam,
    opts: &BoxOptions,
    seeds: &[u64],
) -> Result<(BoxSolve, MultiStartReport)> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut solves = vec![solve_finite_box(pot, geom, param, opts)?];
    for &seed in seeds {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut start = HfbState::start(geom, solves[0].state.alpha_abs, opts.tau, opts.policy)?;
        let phase = Complex64::from_polar(1.0, 2.0 * opts.tau);
        for i in 0..start.s_cap.len() {
            let r: f64 = rng.random_range(-0.4..0.4);
            start.s_cap[i] = phase * r;
            start.c_cap[i] = (1.0 + start.s_cap[i].norm_sqr()).sqrt();
        }
        let mut o = opts.clone();
        o.initial = Some(start);
        solves.push(solve_finite_box(pot, geom, param, &o)?);
    }
    let energies: Vec<f64> = solves.iter().map(|s| s.energy).collect();
    let spread = energies.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - energies.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mut max_dist = 0.0f64;
    for i in 0..solves.len() {
        for j in i + 1..solves.len() {
            for k in 0..solves[i].state.s_cap.len() {
                max_dist =
                    max_dist.max((solves[i].state.s_cap[k] - solves[j].state.s_cap[k]).norm());
            }
        }
    }
    let best = solves
        .into_iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .expect("nonempty");
    Ok((best, MultiStartReport { energies, energy_spread: spread, max_state_distance: max_dist }))
}
