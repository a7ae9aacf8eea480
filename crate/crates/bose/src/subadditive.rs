//! Subadditive hulls of dispersion relations on finite momentum lattices.
//!
//! The hull of `ω` is the largest function `ε ≤ ω` with
//! `ε(k₁+k₂) ≤ ε(k₁) + ε(k₂)`; equivalently
//!
//! ```text
//! ε(k) = min { ω(k₁) + ⋯ + ω(k_n) : k₁ + ⋯ + k_n = k },
//! ```
//!
//! the cheapest way to assemble momentum `k` from free quasiparticles. On a
//! finite grid it is computed by Jacobi min-plus relaxation,
//! `ε_{m+1}(k) = min(ω(k), min_{k'} [ε_m(k') + ε_m(k−k')])`, run to a bitwise
//! fixed point; after `m` sweeps decompositions into at most `2^m` parts are
//! accounted for. Two combination rules are supported: hard cutoff keeps only
//! decompositions whose intermediate sums stay on the stored grid (dropping
//! candidates can only raise the min, so the result upper-bounds the
//! untruncated hull), while wraparound folds sums back periodically and is
//! exact for the periodic one-dimensional theory.

use crate::error::{Error, Result};
use crate::model::{mode_is_zero, BoxGeometry, Mode};
use rayon::prelude::*;

/// How mode sums that leave the stored box are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinationRule {
    /// Decompositions confined to the stored grid; off-grid sums contribute
    /// no candidate.
    HardCutoff,
    /// Mode arithmetic modulo the grid period (exact group structure).
    Wraparound,
}

/// Nonnegative, even spectrum values tabulated on a full box grid
/// (zero mode included), together with the combination rule.
#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    pub geom: BoxGeometry,
    pub rule: CombinationRule,
    values: Vec<f64>,
    modes: Vec<Mode>,
}

impl SpectrumGrid {
    /// Build from per-mode values in the geometry's grid order.
    pub fn new(geom: BoxGeometry, rule: CombinationRule, values: Vec<f64>) -> Result<Self> {
        if !geom.include_zero {
            return Err(Error::Config(
                "spectrum grids must include the zero mode (hull candidates pass through it)".into(),
            ));
        }
        let modes = geom.momentum_grid();
        if modes.is_empty() {
            return Err(Error::Config("empty spectrum grid".into()));
        }
        if values.len() != modes.len() {
            return Err(Error::Config(format!(
                "value count {} does not match grid size {}",
                values.len(),
                modes.len()
            )));
        }
        let grid = SpectrumGrid { geom, rule, values, modes };
        for (i, m) in grid.modes.iter().enumerate() {
            let v = grid.values[i];
            if !(v >= 0.0) {
                return Err(Error::Domain(format!(
                    "spectrum value at mode {m:?} is {v}; values must be nonnegative"
                )));
            }
            let j = grid.index_of(crate::model::mode_neg(*m)).expect("grid closed under negation");
            if grid.values[j].to_bits() != v.to_bits() {
                return Err(Error::Domain(format!(
                    "spectrum not even in k: value at {m:?} differs from its negation"
                )));
            }
        }
        Ok(grid)
    }

    /// Build by sampling a function of the mode.
    pub fn from_fn<F: FnMut(Mode, f64) -> f64>(
        geom: BoxGeometry,
        rule: CombinationRule,
        mut f: F,
    ) -> Result<Self> {
        let full = BoxGeometry { include_zero: true, ..geom };
        let values = full.momentum_grid().into_iter().map(|m| f(m, full.mode_norm(m))).collect();
        Self::new(full, rule, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lexicographic slot of a mode, `None` when off-grid.
    pub fn index_of(&self, m: Mode) -> Option<usize> {
        if !self.geom.in_box(m) {
            return None;
        }
        let n = 2 * self.geom.cutoff as usize + 1;
        let k = self.geom.cutoff;
        let mut idx = 0usize;
        for axis in 0..self.geom.d {
            idx = idx * n + (m[axis] + k) as usize;
        }
        Some(idx)
    }

    pub fn value(&self, m: Mode) -> Option<f64> {
        self.index_of(m).map(|i| self.values[i])
    }

    /// Fold a mode back into the box, periodically per axis.
    pub fn wrap(&self, mut m: Mode) -> Mode {
        let n = 2 * self.geom.cutoff + 1;
        for axis in 0..self.geom.d {
            m[axis] = (m[axis] + self.geom.cutoff).rem_euclid(n) - self.geom.cutoff;
        }
        m
    }

    /// Combine two modes under the grid's rule; `None` when the hard-cutoff
    /// sum leaves the box.
    pub fn combine(&self, a: Mode, b: Mode) -> Option<Mode> {
        let s = crate::model::mode_add(a, b);
        match self.rule {
            CombinationRule::HardCutoff => {
                if self.geom.in_box(s) {
                    Some(s)
                } else {
                    None
                }
            }
            CombinationRule::Wraparound => Some(self.wrap(s)),
        }
    }
}

/// Hull relaxation controls.
#[derive(Debug, Clone, Copy)]
pub struct HullOptions {
    /// Sweep cap; `None` runs to the bitwise fixed point (after `m` sweeps
    /// decompositions into `2^m` parts are covered, so the safety ceiling of
    /// 64 sweeps is never the binding constraint in practice).
    pub max_sweeps: Option<u32>,
    /// Restrict the inner minimization to `|k'| ≤ r_inner`. Defaults to a
    /// third of the grid radius on grids beyond 10^5 points, since a full
    /// sweep is quadratic in the point count.
    pub r_inner: Option<f64>,
}

impl Default for HullOptions {
    fn default() -> Self {
        HullOptions { max_sweeps: None, r_inner: None }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HullReport {
    pub sweeps: u32,
    pub reached_fixed_point: bool,
    /// Inner-radius guard that was applied, if any.
    pub r_inner_applied: Option<f64>,
}

const GUARD_POINTS: usize = 100_000;
const SWEEP_CEILING: u32 = 64;

/// Largest subadditive minorant of the grid values under its combination
/// rule, by Jacobi min-plus relaxation to a bitwise fixed point.
///
/// Each sweep is a parallel map over grid points reading the previous
/// generation only, so the result is independent of thread count.
pub fn subadditive_hull(grid: &SpectrumGrid, opts: HullOptions) -> Result<(SpectrumGrid, HullReport)> {
    let r_inner = match opts.r_inner {
        Some(r) if r > 0.0 => Some(r),
        Some(r) => {
            return Err(Error::Config(format!("inner-radius guard must be positive, got {r}")));
        }
        None if grid.len() > GUARD_POINTS => {
            let r_max = grid.geom.cutoff as f64 * grid.geom.step() * (grid.geom.d as f64).sqrt();
            Some(r_max / 3.0)
        }
        None => None,
    };
    // Precompute the inner-loop mode list once.
    let inner: Vec<(usize, Mode)> = grid
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| r_inner.map_or(true, |r| grid.geom.mode_norm(**m) <= r))
        .map(|(i, m)| (i, *m))
        .collect();
    let cap = opts.max_sweeps.unwrap_or(SWEEP_CEILING);
    let mut current = grid.values.clone();
    let mut sweeps = 0u32;
    let mut fixed = false;
    while sweeps < cap {
        let next: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let k = grid.modes[i];
                let mut best = grid.values[i];
                for &(j, kp) in &inner {
                    let rest = crate::model::mode_sub(k, kp);
                    let rest = match grid.rule {
                        CombinationRule::HardCutoff => {
                            if grid.geom.in_box(rest) {
                                rest
                            } else {
                                continue;
                            }
                        }
                        CombinationRule::Wraparound => grid.wrap(rest),
                    };
                    let cand = current[j] + current[grid.index_of(rest).unwrap()];
                    if cand < best {
                        best = cand;
                    }
                }
                best
            })
            .collect();
        sweeps += 1;
        let unchanged = next
            .iter()
            .zip(&current)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        current = next;
        if unchanged {
            fixed = true;
            break;
        }
    }
    if !fixed && opts.max_sweeps.is_none() {
        return Err(Error::NoConvergence(format!(
            "hull relaxation did not reach a fixed point within {cap} sweeps"
        )));
    }
    let hull = SpectrumGrid {
        geom: grid.geom.clone(),
        rule: grid.rule,
        values: current,
        modes: grid.modes.clone(),
    };
    Ok((hull, HullReport { sweeps, reached_fixed_point: fixed, r_inner_applied: r_inner }))
}

/// First subadditivity violation, in lexicographic pair order.
#[derive(Debug, Clone, Copy)]
pub struct Violation {
    pub k1: Mode,
    pub k2: Mode,
    pub sum: Mode,
    pub lhs: f64,
    pub rhs: f64,
}

/// Exhaustive check of `ε(k₁+k₂) ≤ ε(k₁) + ε(k₂) + tol` over all in-range
/// pairs. `tol = 0` is safe on hull output: the fixed point already compared
/// exactly these floating-point sums. Raw sampled data may need a few ulps.
pub fn is_subadditive(grid: &SpectrumGrid, tol: f64) -> Option<Violation> {
    for (i, &k1) in grid.modes.iter().enumerate() {
        for (j, &k2) in grid.modes.iter().enumerate() {
            let Some(sum) = grid.combine(k1, k2) else { continue };
            let lhs = grid.value(sum).unwrap();
            let rhs = grid.values[i] + grid.values[j];
            if lhs > rhs + tol {
                return Some(Violation { k1, k2, sum, lhs, rhs });
            }
        }
    }
    None
}

/// Periodic one-dimensional spectrum from a profile on `[0, ½]`:
/// `ε(k) = f(dist(k, ℤ))` on a (2K+1)-site circle of unit period, i.e.
/// `samples[j] = f(j/(2K+1))` for `j = 0..=K`. Requires `f(0) ≥ 0`,
/// nondecreasing, concave; such profiles are subadditive under wraparound,
/// and that is verified before returning.
pub fn periodic_hull_d1(samples: &[f64]) -> Result<SpectrumGrid> {
    if samples.len() < 2 {
        return Err(Error::Config("periodic profile needs at least two samples".into()));
    }
    let scale = samples.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    let tol = 1e-12 * scale.max(1.0);
    if samples[0] < 0.0 {
        return Err(Error::Domain(format!("profile must start nonnegative, f(0) = {}", samples[0])));
    }
    for w in samples.windows(2) {
        if w[1] < w[0] - tol {
            return Err(Error::Domain(format!(
                "profile must be nondecreasing; drops from {} to {}",
                w[0], w[1]
            )));
        }
    }
    for w in samples.windows(3) {
        if w[2] - w[1] > w[1] - w[0] + tol {
            return Err(Error::Domain(format!(
                "profile must be concave; increment grows from {} to {}",
                w[1] - w[0],
                w[2] - w[1]
            )));
        }
    }
    let k = (samples.len() - 1) as i32;
    let n = 2 * k + 1;
    // Physical step 1/N so mode m sits at position m/N on the unit circle.
    let geom = BoxGeometry::new(1, 2.0 * std::f64::consts::PI * n as f64, k, true)?;
    let grid = SpectrumGrid::from_fn(geom, CombinationRule::Wraparound, |m, _| {
        samples[m[0].unsigned_abs() as usize]
    })?;
    // Sample rounding perturbs each value by ≤ ½ ulp; allow that much slack.
    if let Some(v) = is_subadditive(&grid, 1e-15 * scale.max(1.0)) {
        return Err(Error::CheckFailed(format!(
            "periodic extension not subadditive: ε({:?}) = {} > ε({:?}) + ε({:?}) = {}",
            v.sum, v.lhs, v.k1, v.k2, v.rhs
        )));
    }
    Ok(grid)
}

/// On-grid versions of the slope statements relating a spectrum to its hull.
#[derive(Debug, Clone, Copy)]
pub struct SlopeReport {
    /// Max spread of hull values within an equal-`|k|` class; zero means the
    /// hull is radially symmetric on the grid.
    pub symmetry_spread: f64,
    /// `min_{k≠0} ω(k)/|k|`.
    pub omega_min_ratio: f64,
    /// `min_{k≠0} ε(k)/|k|`.
    pub hull_min_ratio: f64,
    /// The two minima agree bitwise (they do in exact arithmetic: a
    /// decomposition costs at least `min(ω/|k|)` per unit momentum).
    pub min_ratios_bitwise_equal: bool,
    /// Per-axis-step coefficient `ω(δe₁)/δ`; the hull obeys the chain bound
    /// `ε(k) ≤ coeff · ‖k‖₁`.
    pub linear_upper_coeff: f64,
    pub linear_upper_violations: usize,
    /// `min_k ω(k)/min(|k|,1)` over nonzero modes.
    pub slope_floor_input: f64,
    /// Same ratio for the hull; stays at or above the input floor.
    pub slope_floor_hull: f64,
    pub slope_floor_preserved: bool,
}

pub fn hull_slope_checks(omega: &SpectrumGrid, hull: &SpectrumGrid) -> Result<SlopeReport> {
    if omega.geom.d != hull.geom.d || omega.len() != hull.len() {
        return Err(Error::Config("spectrum and hull must share a grid".into()));
    }
    // Radius classes: sort (|k|, hull value) and scan equal-radius runs.
    let mut by_radius: Vec<(f64, f64)> = hull
        .modes
        .iter()
        .zip(hull.values())
        .map(|(m, v)| (hull.geom.mode_norm(*m), *v))
        .collect();
    by_radius.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut symmetry_spread = 0.0f64;
    let mut run_start = 0;
    for i in 1..=by_radius.len() {
        let closes = i == by_radius.len()
            || by_radius[i].0 - by_radius[run_start].0 > 1e-12 * by_radius[i].0.max(1.0);
        if closes {
            let run = &by_radius[run_start..i];
            let lo = run.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let hi = run.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            symmetry_spread = symmetry_spread.max(hi - lo);
            run_start = i;
        }
    }

    let ratio_min = |g: &SpectrumGrid, floor: fn(f64) -> f64| -> f64 {
        g.modes
            .iter()
            .zip(g.values())
            .filter(|(m, _)| !mode_is_zero(**m))
            .map(|(m, v)| v / floor(g.geom.mode_norm(*m)))
            .fold(f64::INFINITY, f64::min)
    };
    let omega_min_ratio = ratio_min(omega, |r| r);
    let hull_min_ratio = ratio_min(hull, |r| r);

    // Chain bound: walking to k one axis step at a time costs ω(δe) per step.
    let delta = omega.geom.step();
    let mut coeff = 0.0f64;
    for axis in 0..omega.geom.d {
        let mut e: Mode = [0; 3];
        e[axis] = 1;
        coeff = coeff.max(omega.value(e).unwrap() / delta);
    }
    let mut linear_upper_violations = 0usize;
    for (m, v) in hull.modes.iter().zip(hull.values()) {
        let l1: f64 = (0..hull.geom.d).map(|a| m[a].abs() as f64 * delta).sum();
        let bound = coeff * l1;
        let steps: i32 = (0..hull.geom.d).map(|a| m[a].abs()).sum();
        if *v > bound + 1e-14 * (steps.max(1) as f64) * bound.abs().max(1.0) {
            linear_upper_violations += 1;
        }
    }

    let slope_floor_input = ratio_min(omega, |r| r.min(1.0));
    let slope_floor_hull = ratio_min(hull, |r| r.min(1.0));
    let preserved =
        slope_floor_hull >= slope_floor_input - 1e-12 * slope_floor_input.abs().max(1.0);

    Ok(SlopeReport {
        symmetry_spread,
        omega_min_ratio,
        hull_min_ratio,
        min_ratios_bitwise_equal: omega_min_ratio.to_bits() == hull_min_ratio.to_bits(),
        linear_upper_coeff: coeff,
        linear_upper_violations,
        slope_floor_input,
        slope_floor_hull,
        slope_floor_preserved: preserved,
    })
}

/// Reference hull by explicit partition enumeration: dynamic program over
/// the part count, `cost_j(k) = min_{k'} [cost_{j-1}(k−k') + ω(k')]`, taking
/// the min over `1..=max_parts` parts. Under the hard-cutoff rule prefix
/// sums are confined to the box (the relaxation explores general
/// decomposition trees, so it can only match or undercut this). Quadratic
/// per part count; intended for small validation grids.
pub fn hull_by_partitions(grid: &SpectrumGrid, max_parts: usize) -> Result<SpectrumGrid> {
    if max_parts == 0 {
        return Err(Error::Config("partition hull needs at least one part".into()));
    }
    let n = grid.len();
    let mut best = grid.values.to_vec();
    let mut exact_j = grid.values.to_vec();
    for _ in 2..=max_parts {
        let mut next = vec![f64::INFINITY; n];
        for (i, &k) in grid.modes.iter().enumerate() {
            if exact_j[i].is_infinite() {
                continue;
            }
            for (j, &kp) in grid.modes.iter().enumerate() {
                let Some(sum) = grid.combine(k, kp) else { continue };
                let slot = grid.index_of(sum).unwrap();
                let cand = exact_j[i] + grid.values[j];
                if cand < next[slot] {
                    next[slot] = cand;
                }
            }
        }
        exact_j = next;
        for i in 0..n {
            if exact_j[i] < best[i] {
                best[i] = exact_j[i];
            }
        }
    }
    Ok(SpectrumGrid {
        geom: grid.geom.clone(),
        rule: grid.rule,
        values: best,
        modes: grid.modes.clone(),
    })
}
