//! Shared numerical kernels: radial quadrature, lattice sums, damped
//! fixed-point iteration.
//!
//! The radial quadrature integrates rotation-invariant functions over
//! `R^d`: `∫ f(|k|) dk = S_{d-1} ∫_η^{k_max} f(r) r^{d-1} dr`, with composite
//! Gauss-Legendre panels graded geometrically toward the inner cutoff `η` so
//! integrands behaving like `|k|^{-1}` near zero are resolved. Error
//! estimates come from doubling the nodes per panel, never from closed-form
//! bounds.

use crate::error::{Error, Result};

/// Surface area of the unit sphere in `d` dimensions (`S_0 = 2` counts the
/// two half-lines of `R^1`).
pub fn sphere_surface(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("dimension must be 1, 2 or 3"),
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Deterministic and accurate to machine precision for
/// the orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            // Legendre P_n and derivative at x.
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = if n == 1 { 1.0 } else { n as f64 * (x * p1 - p0) / (x * x - 1.0) };
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, x);
                for j in 2..=n {
                    let q2 = ((2 * j - 1) as f64 * x * q1 - (j - 1) as f64 * q0) / j as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = if n == 1 { 1.0 } else { n as f64 * (x * q1 - q0) / (x * x - 1.0) };
                nodes[i] = -x;
                nodes[n - 1 - i] = x;
                let w = 2.0 / ((1.0 - x * x) * dq * dq);
                weights[i] = w;
                weights[n - 1 - i] = w;
                break;
            }
        }
    }
    (nodes, weights)
}

/// How the radial measure treats an integrable `|k|^{-1}`-type factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    /// Integrate `f(r) r^{d-1}` directly.
    Plain,
    /// Substitute `r = e^t`: nodes uniform in `log r`, weights pick up a
    /// factor `r`. Exact damping of a pure `1/r` integrand. Requires `η > 0`.
    LogAbsorb,
}

/// Composite Gauss-Legendre rule on `(η, k_max]`, panels graded
/// geometrically toward `η` when `η > 0`, uniform otherwise.
#[derive(Debug, Clone)]
pub struct RadialQuadrature {
    pub d: usize,
    pub eta: f64,
    pub k_max: f64,
    pub panels: usize,
    pub points_per_panel: usize,
    pub rule: WeightRule,
    /// Flattened (node, weight) pairs for `∫_η^{k_max} h(r) dr`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialQuadrature {
    pub fn new(d: usize, eta: f64, k_max: f64, panels: usize, points_per_panel: usize) -> Result<Self> {
        Self::with_rule(d, eta, k_max, panels, points_per_panel, WeightRule::Plain)
    }

    pub fn with_rule(
        d: usize,
        eta: f64,
        k_max: f64,
        panels: usize,
        points_per_panel: usize,
        rule: WeightRule,
    ) -> Result<Self> {
        crate::model::check_dim(d)?;
        if !(eta >= 0.0 && k_max > eta && eta.is_finite() && k_max.is_finite()) {
            return Err(Error::Config(format!(
                "radial quadrature needs 0 <= eta < k_max, got eta={eta}, k_max={k_max}"
            )));
        }
        if panels == 0 || points_per_panel < 2 || points_per_panel > 64 {
            return Err(Error::Config(format!(
                "radial quadrature needs panels >= 1 and 2..=64 points per panel, got {panels}/{points_per_panel}"
            )));
        }
        if rule == WeightRule::LogAbsorb && eta == 0.0 {
            return Err(Error::Config("log-absorbing rule needs a positive inner cutoff".into()));
        }
        let mut q = RadialQuadrature {
            d,
            eta,
            k_max,
            panels,
            points_per_panel,
            rule,
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        q.build();
        Ok(q)
    }

    fn build(&mut self) {
        let (gx, gw) = gauss_legendre(self.points_per_panel);
        let bounds = self.panel_bounds();
        self.nodes.clear();
        self.weights.clear();
        match self.rule {
            WeightRule::Plain => {
                for w in bounds.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let half = 0.5 * (b - a);
                    let mid = 0.5 * (a + b);
                    for (x, wt) in gx.iter().zip(&gw) {
                        self.nodes.push(mid + half * x);
                        self.weights.push(half * wt);
                    }
                }
            }
            WeightRule::LogAbsorb => {
                // Uniform panels in t = log r over [log η, log k_max].
                let (ta, tb) = (self.eta.ln(), self.k_max.ln());
                let dt = (tb - ta) / self.panels as f64;
                for p in 0..self.panels {
                    let a = ta + p as f64 * dt;
                    let half = 0.5 * dt;
                    let mid = a + half;
                    for (x, wt) in gx.iter().zip(&gw) {
                        let r = (mid + half * x).exp();
                        self.nodes.push(r);
                        self.weights.push(half * wt * r);
                    }
                }
            }
        }
    }

    /// Geometric grading toward η when η > 0, else uniform panels.
    fn panel_bounds(&self) -> Vec<f64> {
        let mut bounds = Vec::with_capacity(self.panels + 1);
        if self.eta > 0.0 {
            let ratio = self.k_max / self.eta;
            for i in 0..=self.panels {
                bounds.push(self.eta * ratio.powf(i as f64 / self.panels as f64));
            }
        } else {
            for i in 0..=self.panels {
                bounds.push(self.k_max * i as f64 / self.panels as f64);
            }
        }
        bounds
    }

    /// Plain 1-D integral `∫_η^{k_max} h(r) dr`.
    pub fn integrate_1d<F: FnMut(f64) -> f64>(&self, mut h: F) -> f64 {
        let mut acc = 0.0;
        for (r, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * h(*r);
        }
        acc
    }

    /// Rotation-invariant integral `∫_{η<|k|≤k_max} f(|k|) dk` over `R^d`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let d = self.d;
        let surf = sphere_surface(d);
        surf * self.integrate_1d(|r| f(r) * r.powi(d as i32 - 1))
    }

    /// Same integral together with an error estimate from doubling the
    /// points per panel. Returns (refined value, |refined - coarse|).
    pub fn integrate_with_error<F: Fn(f64) -> f64>(&self, f: F) -> Result<(f64, f64)> {
        let coarse = self.integrate(&f);
        let fine = RadialQuadrature::with_rule(
            self.d,
            self.eta,
            self.k_max,
            self.panels,
            (2 * self.points_per_panel).min(64),
            self.rule,
        )?;
        let refined = fine.integrate(&f);
        Ok((refined, (refined - coarse).abs()))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Line weights paired with [`Self::nodes`], for `∫_η^{k_max} h(r) dr`.
    pub fn line_weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Result of a truncated lattice sum.
#[derive(Debug, Clone, Copy)]
pub struct LatticeSum {
    pub value: f64,
    /// Sum of |f| over the outermost shell `max_i |m_i| = K`; a cheap
    /// surrogate for the dropped tail.
    pub tail_estimate: f64,
}

/// `Σ_{m in grid} f(m)` in deterministic grid order, with the outermost-shell
/// tail estimate. `f` sees integer labels; callers fold in physical momenta.
pub fn lattice_sum<F: FnMut(crate::model::Mode) -> f64>(
    geom: &crate::model::BoxGeometry,
    mut f: F,
) -> LatticeSum {
    let mut value = 0.0;
    let mut tail = 0.0;
    let k = geom.cutoff;
    for m in geom.momentum_grid() {
        let v = f(m);
        value += v;
        if m.iter().take(geom.d).map(|c| c.abs()).max().unwrap_or(0) == k {
            tail += v.abs();
        }
    }
    LatticeSum { value, tail_estimate: tail }
}

/// Evenness-exploiting variant: `f` is evaluated once per `{m, -m}` pair and
/// doubled, plus the center if the grid includes it. Requires `f(m) = f(-m)`.
pub fn lattice_sum_even<F: FnMut(crate::model::Mode) -> f64>(
    geom: &crate::model::BoxGeometry,
    mut f: F,
) -> LatticeSum {
    let mut value = 0.0;
    let mut tail = 0.0;
    let k = geom.cutoff;
    for m in geom.half_grid() {
        let v = 2.0 * f(m);
        value += v;
        if m.iter().take(geom.d).map(|c| c.abs()).max().unwrap_or(0) == k {
            tail += v.abs();
        }
    }
    if geom.include_zero {
        value += f([0, 0, 0]);
    }
    LatticeSum { value, tail_estimate: tail }
}

/// Options for the damped fixed-point driver.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    /// Mixing weight on the new iterate: `x ← (1-γ)x + γ·step(x)`.
    pub gamma: f64,
    /// Convergence threshold on the update distance.
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive growing update norms that count as divergence.
    pub growth_streak: usize,
    /// Smallest damping tried before giving up.
    pub gamma_min: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { gamma: 0.5, tol: 1e-12, max_iter: 400, growth_streak: 5, gamma_min: 1e-3 }
    }
}

/// Convergence history of a fixed-point run. A non-converged run is a normal
/// result carrying its trace, not an error.
#[derive(Debug, Clone)]
pub struct FixedPointTrace {
    pub update_norms: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gamma: f64,
    /// Number of damping halvings triggered by divergence.
    pub restarts: usize,
}

/// Damped fixed-point iteration `x ← mix(x, step(x), γ)`.
///
/// On `growth_streak` consecutive increases of the update norm the damping
/// is halved and the state rolls back to the last iterate before the growth
/// began. Single-threaded; iteration order is the only source of state, so
/// reruns are bit-identical.
pub fn damped_fixed_point<X, S, M, D>(
    x0: X,
    mut step: S,
    mix: M,
    dist: D,
    opts: FixedPointOptions,
) -> Result<(X, FixedPointTrace)>
where
    X: Clone,
    S: FnMut(&X) -> Result<X>,
    M: Fn(&X, &X, f64) -> X,
    D: Fn(&X, &X) -> f64,
{
    let mut x = x0;
    let mut gamma = opts.gamma;
    let mut trace = FixedPointTrace {
        update_norms: Vec::new(),
        converged: false,
        iterations: 0,
        final_gamma: gamma,
        restarts: 0,
    };
    let mut streak = 0usize;
    let mut last_norm = f64::INFINITY;
    let mut last_good = x.clone();
    for it in 0..opts.max_iter {
        trace.iterations = it + 1;
        let proposal = step(&x)?;
        let next = mix(&x, &proposal, gamma);
        let norm = dist(&x, &next);
        trace.update_norms.push(norm);
        if norm > last_norm {
            streak += 1;
            if streak >= opts.growth_streak {
                gamma *= 0.5;
                trace.restarts += 1;
                trace.final_gamma = gamma;
                if gamma < opts.gamma_min {
                    return Ok((x, trace));
                }
                x = last_good.clone();
                streak = 0;
                last_norm = f64::INFINITY;
                continue;
            }
        } else {
            streak = 0;
            last_good = x.clone();
        }
        last_norm = norm;
        x = next;
        if norm <= opts.tol {
            trace.converged = true;
            break;
        }
    }
    trace.final_gamma = gamma;
    Ok((x, trace))
}

/// Root of `f` on `[a, b]` by bisection. The endpoints must bracket a sign
/// change; converges when the bracket width falls below `xtol`. Fallible
/// integrands propagate their errors.
pub fn bisect_root<F>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a < b) {
        return Err(Error::Config(format!("bisection needs a < b, got [{a}, {b}]")));
    }
    let mut lo = a;
    let mut hi = b;
    let mut flo = f(lo)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    let fhi = f(hi)?;
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Domain(format!(
            "no sign change on [{a}, {b}]: f = {flo:.6e} and {fhi:.6e}"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol {
            return Ok(mid);
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(format!(
        "bisection bracket still {:.3e} wide after {max_iter} iterations",
        hi - lo
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_cube_root_and_rejects_bad_brackets() {
        let root = bisect_root(|x| Ok(x * x * x - 2.0), 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((root - 2f64.powf(1.0 / 3.0)).abs() < 1e-13);
        assert!(bisect_root(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // Degree-15 polynomial integrates exactly with 8 points.
        let val: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((val - 2.0 / 15.0).abs() < 1e-14);
        let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(7)).sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn gaussian_integral_d3() {
        // ∫_{R³} e^{-k²/2} dk = (2π)^{3/2}.
        let q = RadialQuadrature::new(3, 0.0, 14.0, 24, 16).unwrap();
        let val = q.integrate(|r| (-0.5 * r * r).exp());
        let expect = (2.0 * std::f64::consts::PI).powf(1.5);
        assert!((val - expect).abs() / expect < 1e-8, "got {val}, want {expect}");
    }

    #[test]
    fn inverse_radius_d2_is_exact() {
        // ∫_{η<|k|≤1} dk/|k| over R² = 2π(1-η): the measure cancels 1/r.
        let eta = 1e-3;
        let q = RadialQuadrature::new(2, eta, 1.0, 12, 12).unwrap();
        let val = q.integrate(|r| 1.0 / r);
        let expect = 2.0 * std::f64::consts::PI * (1.0 - eta);
        assert!((val - expect).abs() < 1e-12);
    }

    #[test]
    fn inverse_radius_d1_grows_two_ln_ten_per_decade() {
        // ∫_{η<|k|≤1} dk/|k| over R¹ = 2 ln(1/η): each decade of η adds 2 ln 10.
        let vals: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&eta| {
                let q = RadialQuadrature::with_rule(1, eta, 1.0, 40, 12, WeightRule::LogAbsorb).unwrap();
                q.integrate(|r| 1.0 / r)
            })
            .collect();
        let per_decade = 2.0 * 10f64.ln();
        assert!((vals[1] - vals[0] - per_decade).abs() < 1e-10);
        assert!((vals[2] - vals[1] - per_decade).abs() < 1e-10);
    }

    #[test]
    fn node_doubling_bounds_true_error() {
        let q = RadialQuadrature::new(3, 0.0, 10.0, 8, 8).unwrap();
        let (val, err) = q.integrate_with_error(|r| (-0.5 * r * r).exp()).unwrap();
        let expect = (2.0 * std::f64::consts::PI).powf(1.5);
        assert!((val - expect).abs() <= 10.0 * err.max(1e-12), "estimate {err} vs true {}", (val - expect).abs());
    }

    #[test]
    fn lattice_sum_even_matches_generic() {
        let geom = crate::model::BoxGeometry::new(2, 6.0, 5, true).unwrap();
        let f = |m: crate::model::Mode| (-geom.mode_norm_sq(m)).exp();
        let a = lattice_sum(&geom, f);
        let b = lattice_sum_even(&geom, f);
        assert!((a.value - b.value).abs() < 1e-14 * a.value.abs().max(1.0));
        assert!(a.tail_estimate > 0.0 && b.tail_estimate > 0.0);
    }

    #[test]
    fn fixed_point_converges_on_contraction() {
        let (x, trace) = damped_fixed_point(
            vec![10.0f64],
            |x| Ok(vec![0.5 * x[0] + 1.0]),
            |a, b, g| vec![(1.0 - g) * a[0] + g * b[0]],
            |a, b| (a[0] - b[0]).abs(),
            FixedPointOptions { gamma: 1.0, ..Default::default() },
        )
        .unwrap();
        assert!(trace.converged);
        assert!((x[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn fixed_point_halves_damping_on_divergence() {
        // step(x) = -2.2x oscillates divergently undamped; γ halvings tame it.
        let (x, trace) = damped_fixed_point(
            vec![1.0f64],
            |x| Ok(vec![-2.2 * x[0]]),
            |a, b, g| vec![(1.0 - g) * a[0] + g * b[0]],
            |a, b| (a[0] - b[0]).abs(),
            FixedPointOptions { gamma: 1.0, max_iter: 2000, ..Default::default() },
        )
        .unwrap();
        assert!(trace.restarts >= 1, "divergence must trigger a damping restart");
        assert!(trace.converged, "trace: {:?}", trace.update_norms.len());
        assert!(x[0].abs() < 1e-9);
    }

    #[test]
    fn fixed_point_returns_trace_without_convergence() {
        let (_, trace) = damped_fixed_point(
            vec![1.0f64],
            |x| Ok(vec![x[0] + 1.0]),
            |a, b, g| vec![(1.0 - g) * a[0] + g * b[0]],
            |a, b| (a[0] - b[0]).abs(),
            FixedPointOptions { gamma: 1.0, max_iter: 10, ..Default::default() },
        )
        .unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations, 10);
    }
}
