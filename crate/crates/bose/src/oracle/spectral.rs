//! Eigensolvers and resolvent solves for sector operators.
//!
//! Dense symmetric diagonalization for dimensions up to [`DENSE_LIMIT`],
//! Lanczos with full reorthogonalization beyond. Every retained eigenpair
//! is verified against `‖Av − λv‖ ≤ 1e−10` before it is returned; a failed
//! residual is a hard error, never a silent degradation.
//!
//! `H − E` is singular on a sector containing its own ground state, so
//! resolvent applications at the ground energy run conjugate gradients on
//! the explicitly deflated complement of the ground space. Complex shifted
//! solves `(H − z)x = b` use dense LU and refuse shifts closer than 1e−8
//! to an eigenvalue.

use crate::error::{Error, Result};
use crate::model::Mode;
use crate::oracle::sector::SectorOp;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Largest dimension sent to the dense symmetric eigensolver.
pub const DENSE_LIMIT: usize = 2000;

/// Eigenvalue residual bound enforced on retained pairs.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Two eigenvalues closer than this (relative to spectral width) count as
/// degenerate for the ground-degeneracy flag.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column j pairs with `eigenvalues[j]`. Dense runs retain all columns;
    /// Lanczos runs retain the converged lowest ones only.
    pub vectors: DMatrix<f64>,
    pub ground_degenerate: bool,
    /// True when every eigenvalue of the operator is present.
    pub complete: bool,
}

impl SpectralData {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_vector(&self) -> Vec<f64> {
        self.vectors.column(0).iter().copied().collect()
    }

    /// All vectors spanning the ground space (within the degeneracy window).
    pub fn ground_space(&self) -> Vec<Vec<f64>> {
        let e0 = self.eigenvalues[0];
        let scale = self.spectral_width().max(1.0);
        self.eigenvalues
            .iter()
            .take_while(|e| (**e - e0).abs() <= DEGENERACY_TOL * scale)
            .enumerate()
            .map(|(j, _)| self.vectors.column(j).iter().copied().collect())
            .collect()
    }

    pub fn spectral_width(&self) -> f64 {
        self.eigenvalues.last().unwrap() - self.eigenvalues[0]
    }
}

fn verify_residuals(op: &SectorOp, vals: &[f64], vecs: &DMatrix<f64>) -> Result<()> {
    for (j, &lambda) in vals.iter().enumerate() {
        let v: Vec<f64> = vecs.column(j).iter().copied().collect();
        let av = op.apply(&v);
        let mut res = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..v.len() {
            res += (av[i] - lambda * v[i]).powi(2);
            norm += v[i] * v[i];
        }
        let res = res.sqrt();
        let norm = norm.sqrt();
        if !(res <= RESIDUAL_TOL * norm.max(1e-300)) {
            return Err(Error::CheckFailed(format!(
                "{}: eigenpair {j} residual {res:.3e} exceeds {RESIDUAL_TOL:.0e}",
                op.label
            )));
        }
    }
    Ok(())
}

fn degeneracy_flag(vals: &[f64]) -> bool {
    if vals.len() < 2 {
        return false;
    }
    let width = (vals[vals.len() - 1] - vals[0]).max(1.0);
    (vals[1] - vals[0]).abs() <= DEGENERACY_TOL * width
}

/// Complete spectrum through the dense symmetric eigensolver.
pub fn dense_spectrum(op: &SectorOp) -> Result<SpectralData> {
    if !op.symmetric || op.rows != op.cols {
        return Err(Error::Config(format!("{}: dense_spectrum needs a symmetric square operator", op.label)));
    }
    if op.rows > DENSE_LIMIT {
        return Err(Error::SizeLimit(format!(
            "{}: dimension {} exceeds the dense eigensolver limit {DENSE_LIMIT}",
            op.label, op.rows
        )));
    }
    if op.rows == 0 {
        return Err(Error::Config(format!("{}: empty sector", op.label)));
    }
    let eig = op.to_dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..op.rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(op.rows, op.rows);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    verify_residuals(op, &vals, &vecs)?;
    Ok(SpectralData {
        ground_degenerate: degeneracy_flag(&vals),
        eigenvalues: vals,
        vectors: vecs,
        complete: true,
    })
}

/// Lowest `want` eigenpairs by Lanczos with full reorthogonalization.
/// Restarted with a growing Krylov budget until the requested pairs have
/// residuals within [`RESIDUAL_TOL`]. A single-vector recursion collapses
/// exactly degenerate copies onto one retained pair; the degeneracy flag
/// still fires off the gap between the two lowest retained values.
pub fn lanczos_lowest(op: &SectorOp, want: usize, seed: u64) -> Result<SpectralData> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    if !op.symmetric || op.rows != op.cols {
        return Err(Error::Config(format!("{}: lanczos needs a symmetric square operator", op.label)));
    }
    let n = op.rows;
    let want = want.min(n);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut m = (2 * want + 40).min(n);
    loop {
        // Full-reorthogonalized Lanczos basis.
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
        let mut alphas = Vec::with_capacity(m);
        let mut betas = Vec::with_capacity(m);
        let mut q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0f64));
        q /= q.norm();
        basis.push(q.clone());
        let mut beta_last = 0.0;
        for j in 0..m {
            let qj = basis[j].clone();
            let mut w = DVector::from_vec(op.apply(qj.as_slice()));
            let alpha = w.dot(&qj);
            alphas.push(alpha);
            // Two passes of classical Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for b in &basis {
                    let c = w.dot(b);
                    w.axpy(-c, b, 1.0);
                }
            }
            let beta = w.norm();
            beta_last = beta;
            if j + 1 == m || beta < 1e-300 {
                if beta < 1e-300 {
                    m = j + 1;
                }
                break;
            }
            betas.push(beta);
            basis.push(w / beta);
        }
        // Tridiagonal Ritz problem, solved densely (m is small).
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        // Residual of Ritz pair j is |β_m| × |last component of s_j|.
        let mut vals = Vec::with_capacity(want);
        let mut cols = Vec::with_capacity(want);
        let mut converged = true;
        for &i in order.iter().take(want) {
            let s = eig.eigenvectors.column(i);
            let est = beta_last.abs() * s[m - 1].abs();
            if est > 0.1 * RESIDUAL_TOL {
                converged = false;
                break;
            }
            let mut v = DVector::zeros(n);
            for (t_idx, b) in basis.iter().enumerate() {
                v.axpy(s[t_idx], b, 1.0);
            }
            v /= v.norm();
            vals.push(eig.eigenvalues[i]);
            cols.push(v);
        }
        if converged && vals.len() == want {
            let mut vecs = DMatrix::zeros(n, want);
            for (j, v) in cols.iter().enumerate() {
                vecs.set_column(j, v);
            }
            verify_residuals(op, &vals, &vecs)?;
            return Ok(SpectralData {
                ground_degenerate: degeneracy_flag(&vals),
                eigenvalues: vals,
                vectors: vecs,
                complete: false,
            });
        }
        if m >= n {
            return Err(Error::NoConvergence(format!(
                "{}: lanczos failed to converge {want} pairs at full Krylov size {n}",
                op.label
            )));
        }
        m = (2 * m).min(n);
    }
}

/// Complete spectrum with automatic method choice. Beyond the dense limit
/// only the lowest `fallback_pairs` eigenpairs are produced.
pub fn spectrum(op: &SectorOp, fallback_pairs: usize) -> Result<SpectralData> {
    if op.rows <= DENSE_LIMIT {
        dense_spectrum(op)
    } else {
        lanczos_lowest(op, fallback_pairs, 0x5eed)
    }
}

/// Ground energy, vector, and degeneracy flag.
pub fn ground_state(op: &SectorOp) -> Result<(f64, Vec<f64>, bool)> {
    let sp = spectrum(op, 2)?;
    Ok((sp.ground_energy(), sp.ground_vector(), sp.ground_degenerate))
}

/// Per-sector excitation energies over a family of sector Hamiltonians.
#[derive(Debug, Clone)]
pub struct IesPoint {
    pub k_total: Mode,
    pub sector_min: f64,
    pub epsilon: f64,
    pub degenerate_in_sector: bool,
}

#[derive(Debug, Clone)]
pub struct IesReport {
    pub ground_energy: f64,
    /// Some sector at k ≠ 0 shares the global minimum (within tolerance).
    pub degenerate_across_sectors: bool,
    pub points: Vec<IesPoint>,
}

/// Global ground energy and infimum excitation spectrum over sectors.
/// The zero-momentum sector must attain the global minimum; any other
/// sector touching it is flagged, not fatal.
pub fn ground_and_ies(hams: &[(Mode, &SectorOp)]) -> Result<IesReport> {
    if hams.is_empty() {
        return Err(Error::Config("ground_and_ies: no sectors given".into()));
    }
    let mut mins = Vec::with_capacity(hams.len());
    for (k, h) in hams {
        let sp = spectrum(h, 2)?;
        mins.push((*k, sp.ground_energy(), sp.ground_degenerate));
    }
    let e = mins.iter().map(|(_, e, _)| *e).fold(f64::INFINITY, f64::min);
    let scale = mins.iter().map(|(_, m, _)| m.abs()).fold(1.0f64, f64::max);
    let zero = mins
        .iter()
        .find(|(k, _, _)| *k == [0, 0, 0])
        .ok_or_else(|| Error::Config("ground_and_ies: no zero-momentum sector".into()))?;
    if zero.1 - e > 1e-10 * scale {
        return Err(Error::CheckFailed(format!(
            "global minimum {e} not attained at zero momentum (sector min {})",
            zero.1
        )));
    }
    let mut degenerate_across = false;
    let points = mins
        .iter()
        .map(|(k, m, deg)| {
            if *k != [0, 0, 0] && (m - e).abs() <= 1e-10 * scale {
                degenerate_across = true;
            }
            IesPoint { k_total: *k, sector_min: *m, epsilon: m - e, degenerate_in_sector: *deg }
        })
        .collect();
    Ok(IesReport { ground_energy: e, degenerate_across_sectors: degenerate_across, points })
}

/// Result of a deflated conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgSolve {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn project_out(x: &mut [f64], space: &[Vec<f64>]) {
    for g in space {
        let c: f64 = x.iter().zip(g).map(|(a, b)| a * b).sum();
        let nn: f64 = g.iter().map(|a| a * a).sum();
        let c = c / nn;
        for (xi, gi) in x.iter_mut().zip(g) {
            *xi -= c * gi;
        }
    }
}

/// Solve `(H − e0) x = b` on the orthogonal complement of `ground`.
/// `H − e0` is positive semidefinite when `e0` is the ground energy, and
/// positive definite on the complement, so conjugate gradients applies.
pub fn solve_deflated(
    op: &SectorOp,
    e0: f64,
    ground: &[Vec<f64>],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgSolve> {
    let n = op.rows;
    if b.len() != n {
        return Err(Error::Config("solve_deflated: rhs length mismatch".into()));
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = op.apply(x);
        for i in 0..n {
            y[i] -= e0 * x[i];
        }
        project_out(&mut y, ground);
        y
    };
    let mut r = b.to_vec();
    project_out(&mut r, ground);
    let b_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(CgSolve { x: vec![0.0; n], residual: 0.0, iterations: 0 });
    }
    let mut x = vec![0.0; n];
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    for it in 0..max_iter {
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::CheckFailed(format!(
                "{}: deflated operator not positive definite (pᵀAp = {pap:.3e}); \
                 is e0 really the ground energy?",
                op.label
            )));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // Re-projection controls drift out of the complement.
        project_out(&mut r, ground);
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        if rs_new.sqrt() <= tol * b_norm {
            project_out(&mut x, ground);
            return Ok(CgSolve { x, residual: rs_new.sqrt() / b_norm, iterations: it + 1 });
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence(format!(
        "{}: deflated CG at {max_iter} iterations, relative residual {:.3e} > {tol:.0e}",
        op.label,
        rs.sqrt() / b_norm
    )))
}

/// Minimal distance from `z` to the given (real) eigenvalues.
pub fn pole_distance(z: Complex64, eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().map(|l| (z - Complex64::new(*l, 0.0)).norm()).fold(f64::INFINITY, f64::min)
}

/// Solve `(z − H) x = b` for complex `z` by dense LU. Refuses shifts within
/// 1e−8 of the spectrum (eigenvalues must be supplied by the caller, who
/// has them from the same diagonalization that produced the state).
pub fn shifted_solve(
    op: &SectorOp,
    eigenvalues: &[f64],
    z: Complex64,
    b: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = op.rows;
    if op.rows != op.cols || b.len() != n {
        return Err(Error::Config("shifted_solve: shape mismatch".into()));
    }
    let dist = pole_distance(z, eigenvalues);
    if dist < 1e-8 {
        return Err(Error::Domain(format!(
            "shift z = {z} is within {dist:.3e} of the spectrum; move z or add broadening"
        )));
    }
    let dense = op.to_dense();
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = Complex64::new(-dense[(i, j)], 0.0);
        }
        a[(i, i)] += z;
    }
    let rhs = DVector::from_iterator(n, b.iter().copied());
    let lu = a.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::CheckFailed("shifted LU solve failed despite pole guard".into()))?;
    Ok(x.iter().copied().collect())
}
