//! Interaction potentials, box geometry, and momentum bookkeeping.
//!
//! Everything downstream works on a torus of side `L` in `d` dimensions with
//! the momentum lattice `(2π/L)·Z^d`. Potentials are specified through their
//! Fourier transform `v̂(k) = ∫ v(x) e^{-ik·x} dx`, radial in `|k|`, so
//! evenness `v̂(k) = v̂(-k)` holds by construction. A repulsive potential has
//! `v̂ > 0` wherever it is evaluated.
//!
//! Momenta are kept as exact integer labels `m` (units of `2π/L`); physical
//! wave vectors are produced only at the point of numerical evaluation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Integer momentum label; unused trailing coordinates stay 0.
pub type Mode = [i32; 3];

pub fn mode_add(a: Mode, b: Mode) -> Mode {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn mode_sub(a: Mode, b: Mode) -> Mode {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn mode_neg(a: Mode) -> Mode {
    [-a[0], -a[1], -a[2]]
}

pub fn mode_is_zero(a: Mode) -> bool {
    a == [0, 0, 0]
}

/// Interaction potential, radial in Fourier space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PotentialKind {
    /// `v(x) = strength · exp(-|x|²/(2 width²))`, so
    /// `v̂(k) = strength · (2π width²)^{d/2} · exp(-width² |k|²/2)`.
    /// `strength` is an energy (it equals `v(0)`), `width` a length.
    Gaussian { strength: f64, width: f64 },
    /// `v̂(k) = strength` for `|k| ≤ width`, zero outside.
    /// `strength` carries units energy·volume, `width` is an inverse length.
    ConstantBand { strength: f64, width: f64 },
    /// `v̂(|k|)` tabulated on ascending radii, interpolated by a
    /// monotonicity-preserving cubic. Evaluation outside the table range is
    /// a domain error, never extrapolation.
    TabulatedRadial { table: RadialTable },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    /// Overall coupling multiplier applied to `v̂` (and hence to `v`).
    pub lambda: f64,
}

impl Potential {
    pub fn gaussian(strength: f64, width: f64) -> Result<Self> {
        if !(strength.is_finite() && width.is_finite() && width > 0.0) {
            return Err(Error::Config(format!(
                "gaussian potential needs finite strength and width > 0, got strength={strength}, width={width}"
            )));
        }
        Ok(Potential { kind: PotentialKind::Gaussian { strength, width }, lambda: 1.0 })
    }

    pub fn constant_band(strength: f64, width: f64) -> Result<Self> {
        if !(strength.is_finite() && width.is_finite() && width > 0.0) {
            return Err(Error::Config(format!(
                "constant-band potential needs finite strength and width > 0, got strength={strength}, width={width}"
            )));
        }
        Ok(Potential { kind: PotentialKind::ConstantBand { strength, width }, lambda: 1.0 })
    }

    pub fn tabulated(table: RadialTable) -> Self {
        Potential { kind: PotentialKind::TabulatedRadial { table }, lambda: 1.0 }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// `v̂` at radial argument `r = |k| ≥ 0`, including the λ multiplier.
    pub fn fourier_radial(&self, r: f64, d: usize) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!("fourier_radial needs finite |k| >= 0, got {r}")));
        }
        let bare = match &self.kind {
            PotentialKind::Gaussian { strength, width } => {
                let pref = strength * (2.0 * std::f64::consts::PI * width * width).powf(d as f64 / 2.0);
                pref * (-0.5 * width * width * r * r).exp()
            }
            PotentialKind::ConstantBand { strength, width } => {
                if r <= *width {
                    *strength
                } else {
                    0.0
                }
            }
            PotentialKind::TabulatedRadial { table } => table.eval(r)?,
        };
        Ok(self.lambda * bare)
    }

    /// `v̂` at an integer-labeled lattice momentum.
    pub fn fourier_mode(&self, geom: &BoxGeometry, m: Mode) -> Result<f64> {
        self.fourier_radial(geom.mode_norm(m), geom.d)
    }

    /// `v̂(0)`.
    pub fn vhat0(&self, d: usize) -> Result<f64> {
        self.fourier_radial(0.0, d)
    }

    /// Position-space value at the origin, `v(0) = (2π)^{-d} ∫ v̂(k) dk`.
    ///
    /// Closed form for the built-in kinds; for a tabulated potential the
    /// radial integral runs over the table range (the tail beyond the table
    /// is treated as zero, consistent with the no-extrapolation rule).
    pub fn v_at_origin(&self, d: usize) -> Result<f64> {
        check_dim(d)?;
        let bare = match &self.kind {
            PotentialKind::Gaussian { strength, .. } => *strength,
            PotentialKind::ConstantBand { strength, width } => {
                strength * ball_volume(d, *width) / (2.0 * std::f64::consts::PI).powi(d as i32)
            }
            PotentialKind::TabulatedRadial { table } => {
                // (2π)^{-d} S_{d-1} ∫ v̂(r) r^{d-1} dr over the table range.
                let quad = crate::numerics::RadialQuadrature::new(d, 0.0, table.max_radius(), 64, 16)?;
                let val = quad.integrate(|r| table.eval(r).unwrap_or(0.0));
                val / (2.0 * std::f64::consts::PI).powi(d as i32)
            }
        };
        Ok(self.lambda * bare)
    }

    /// First radius (from a list) where `v̂ ≤ 0`, if any. Repulsive means none.
    pub fn first_nonpositive(&self, radii: &[f64], d: usize) -> Result<Option<f64>> {
        for &r in radii {
            if self.fourier_radial(r, d)? <= 0.0 {
                return Ok(Some(r));
            }
        }
        Ok(None)
    }
}

fn ball_volume(d: usize, radius: f64) -> f64 {
    match d {
        1 => 2.0 * radius,
        2 => std::f64::consts::PI * radius * radius,
        3 => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        _ => unreachable!("dimension checked earlier"),
    }
}

pub fn check_dim(d: usize) -> Result<()> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::Config(format!("dimension must be 1, 2 or 3, got {d}")))
    }
}

/// Ascending two-column radial table with monotone cubic (Fritsch-Carlson)
/// interpolation. Stays within the data's local bounds, so a positive table
/// interpolates positively.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialTable {
    radii: Vec<f64>,
    values: Vec<f64>,
    /// Hermite slopes at the nodes, fixed at construction.
    slopes: Vec<f64>,
}

impl RadialTable {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::Config(format!(
                "radial table column length mismatch: {} radii vs {} values",
                radii.len(),
                values.len()
            )));
        }
        if radii.len() < 2 {
            return Err(Error::Config("radial table needs at least two rows".into()));
        }
        for pair in radii.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::Config(format!(
                    "radial table radii must be strictly ascending, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if radii[0] < 0.0 {
            return Err(Error::Config(format!("radial table radii must be >= 0, got {}", radii[0])));
        }
        let slopes = fritsch_carlson_slopes(&radii, &values);
        Ok(RadialTable { radii, values, slopes })
    }

    /// Parse two-column text: `|k| value` per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (r, v) = match (cols.next(), cols.next(), cols.next()) {
                (Some(r), Some(v), None) => (r, v),
                _ => {
                    return Err(Error::Config(format!(
                        "radial table line {}: expected two columns, got {:?}",
                        lineno + 1,
                        line
                    )))
                }
            };
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("radial table line {}: bad number {:?}", lineno + 1, s))
                })
            };
            radii.push(parse(r)?);
            values.push(parse(v)?);
        }
        RadialTable::new(radii, values)
    }

    pub fn max_radius(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        let (lo, hi) = (self.radii[0], self.max_radius());
        if r < lo || r > hi {
            return Err(Error::Domain(format!(
                "radial table evaluated at |k| = {r} outside [{lo}, {hi}]; extrapolation refused"
            )));
        }
        // Find the interval with r in [x_i, x_{i+1}].
        let i = match self.radii.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i - 1,
        };
        let h = self.radii[i + 1] - self.radii[i];
        let t = (r - self.radii[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        Ok(h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1)
    }
}

/// Monotonicity-preserving Hermite slopes (Fritsch-Carlson limiter).
fn fritsch_carlson_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // Clamp slopes so each interval stays monotone (|m| <= 3|delta|).
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
        } else {
            let a = m[i] / delta[i];
            let b = m[i + 1] / delta[i];
            if a > 3.0 {
                m[i] = 3.0 * delta[i];
            }
            if b > 3.0 {
                m[i + 1] = 3.0 * delta[i];
            }
        }
    }
    m
}

/// Finite torus carrying the momentum lattice `(2π/L)·Z^d`, truncated to the
/// box `|m_i| ≤ K` on integer labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxGeometry {
    pub d: usize,
    pub length: f64,
    /// Box cutoff on integer labels.
    pub cutoff: i32,
    /// Whether the momentum grid contains m = 0.
    pub include_zero: bool,
}

impl BoxGeometry {
    pub fn new(d: usize, length: f64, cutoff: i32, include_zero: bool) -> Result<Self> {
        check_dim(d)?;
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!("box length must be > 0, got {length}")));
        }
        if cutoff < 0 {
            return Err(Error::Config(format!("box cutoff must be >= 0, got {cutoff}")));
        }
        Ok(BoxGeometry { d, length, cutoff, include_zero })
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.d as i32)
    }

    /// Lattice spacing `2π/L`.
    pub fn step(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length
    }

    pub fn phys(&self, m: Mode) -> [f64; 3] {
        let s = self.step();
        [s * m[0] as f64, s * m[1] as f64, s * m[2] as f64]
    }

    pub fn mode_norm_sq(&self, m: Mode) -> f64 {
        let s = self.step();
        let n2 = (m[0] as f64).powi(2) + (m[1] as f64).powi(2) + (m[2] as f64).powi(2);
        s * s * n2
    }

    pub fn mode_norm(&self, m: Mode) -> f64 {
        self.mode_norm_sq(m).sqrt()
    }

    pub fn in_box(&self, m: Mode) -> bool {
        let within = m.iter().all(|&c| c.abs() <= self.cutoff);
        let tail_zero = m.iter().skip(self.d).all(|&c| c == 0);
        within && tail_zero && (self.include_zero || !mode_is_zero(m))
    }

    /// All lattice labels with `|m_i| ≤ K`, lexicographically ordered on
    /// `(m_1, .., m_d)`. Closed under negation; contains 0 iff the zero mode
    /// is included. Size `(2K+1)^d` (minus one without the zero mode).
    pub fn momentum_grid(&self) -> Vec<Mode> {
        let k = self.cutoff;
        let range = |active: bool| -> Vec<i32> {
            if active {
                (-k..=k).collect()
            } else {
                vec![0]
            }
        };
        let mut grid = Vec::new();
        for &a in &range(self.d >= 1) {
            for &b in &range(self.d >= 2) {
                for &c in &range(self.d >= 3) {
                    let m = [a, b, c];
                    if !self.include_zero && mode_is_zero(m) {
                        continue;
                    }
                    grid.push(m);
                }
            }
        }
        grid
    }

    /// Box grid post-filtered to the ball `|k| ≤ k_c`.
    pub fn momentum_grid_ball(&self, k_c: f64) -> Vec<Mode> {
        self.momentum_grid().into_iter().filter(|&m| self.mode_norm(m) <= k_c).collect()
    }

    /// One representative per `{m, -m}` pair (the lexicographically positive
    /// one), zero mode excluded.
    pub fn half_grid(&self) -> Vec<Mode> {
        self.momentum_grid()
            .into_iter()
            .filter(|&m| !mode_is_zero(m) && mode_lex_positive(m))
            .collect()
    }
}

/// True when the first nonzero coordinate is positive.
pub fn mode_lex_positive(m: Mode) -> bool {
    for &c in &m {
        if c != 0 {
            return c > 0;
        }
    }
    false
}

/// Chemical potential, symmetry-breaking field, condensate density.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CouplingParams {
    pub mu: f64,
    pub nu: f64,
    pub kappa: f64,
}

impl CouplingParams {
    pub fn new(mu: f64, nu: f64, kappa: f64) -> Result<Self> {
        if !(mu.is_finite() && nu.is_finite() && kappa.is_finite()) {
            return Err(Error::Config("coupling parameters must be finite".into()));
        }
        if kappa < 0.0 {
            return Err(Error::Config(format!("condensate density must be >= 0, got {kappa}")));
        }
        Ok(CouplingParams { mu, nu, kappa })
    }
}

/// Torus-periodized potential `v^L(x) = (1/V) Σ_{|m|≤K} e^{ik·x} v̂(k)`.
///
/// Evenness of `v̂` makes the sum real; it is assembled with cosines. The
/// grid always includes the zero mode here regardless of the geometry flag,
/// since the periodization is a plain Fourier series.
pub fn periodized_potential(pot: &Potential, geom: &BoxGeometry, x: &[f64]) -> Result<f64> {
    if x.len() != geom.d {
        return Err(Error::Config(format!(
            "position has {} coordinates but geometry is {}-dimensional",
            x.len(),
            geom.d
        )));
    }
    let full = BoxGeometry { include_zero: true, ..geom.clone() };
    let mut sum = 0.0;
    for m in full.momentum_grid() {
        let k = full.phys(m);
        let phase = k[0] * x.first().copied().unwrap_or(0.0)
            + k[1] * x.get(1).copied().unwrap_or(0.0)
            + k[2] * x.get(2).copied().unwrap_or(0.0);
        sum += phase.cos() * pot.fourier_mode(&full, m)?;
    }
    Ok(sum / geom.volume())
}

/// Direct image sum `Σ_n v(x + nL)` for a gaussian potential; the oracle the
/// periodized series is tested against. Converges like a theta function.
pub fn gaussian_image_sum(pot: &Potential, geom: &BoxGeometry, x: &[f64]) -> Result<f64> {
    let (strength, width) = match pot.kind {
        PotentialKind::Gaussian { strength, width } => (strength, width),
        _ => return Err(Error::Config("image sum is only available for the gaussian kind".into())),
    };
    let l = geom.length;
    // Enough images that the dropped tail is far below 1e-12 relative.
    let reach = (10.0 * width / l).ceil() as i64 + 2;
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for i in 0..geom.d {
        let mut vals = Vec::new();
        for n in -reach..=reach {
            vals.push(x[i] + n as f64 * l);
        }
        axes.push(vals);
    }
    // Separable gaussian: sum over the image lattice factorizes per axis.
    let axis_sum = |vals: &[f64]| -> f64 {
        vals.iter().map(|&t| (-t * t / (2.0 * width * width)).exp()).sum()
    };
    let mut prod = 1.0;
    for vals in &axes {
        prod *= axis_sum(vals);
    }
    Ok(pot.lambda * strength * prod)
}
