//! Eigenpairs of the assembled operator, heat kernels and the ground-state
//! diagnostics built on them.
//!
//! Two heat-kernel routes are provided. The spectral expansion is exact up
//! to roundoff in absolute terms, which is what the semigroup identities
//! need. Ratios against `φ₁(x)φ₁(y)` far from the origin need entrywise
//! relative accuracy instead, so [`positive_heat_kernel`] evaluates
//! `exp(-tA)` through `e^{-tc} exp(t(cI - A))`, where `cI - A` has no
//! negative entries and every step of the computation adds non-negative
//! numbers. The ground state is refined the same way.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::discretize::{Grid, OperatorAssembly};
use crate::error::{Error, Result};
use crate::model::Ball;

/// Nodes farther than this fraction of `R` from the origin are left out of
/// sup/max diagnostics.
pub const WINDOW: f64 = 0.9;
const UNDERFLOW: f64 = 1e-300;

#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    /// Columns orthonormal under `Σ f g h`.
    pub eigenvectors: DMatrix<f64>,
    pub ground_state: Vec<f64>,
    /// Second eigenvalue, kept even when only one mode is reported.
    pub lambda2: f64,
    pub max_residual: f64,
    pub orthonormality_defect: f64,
    matrix: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct HeatKernel {
    pub t: f64,
    pub h: f64,
    /// `p(t, x_i, x_j)`; `Σ_j p_ij f_j h` is the semigroup applied to `f`.
    pub values: DMatrix<f64>,
}

impl HeatKernel {
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let v = &self.values * DVector::from_column_slice(f) * self.h;
        v.as_slice().to_vec()
    }

    /// `Σ_{x_j ∈ set} p(t, x_i, x_j) h`.
    pub fn mass(&self, grid: &Grid, i: usize, set: &Ball) -> f64 {
        (0..grid.n)
            .filter(|&j| set.contains(grid.x(j)))
            .map(|j| self.values[(i, j)])
            .sum::<f64>()
            * self.h
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(-t(A - shift·I))` for a symmetric matrix with non-positive
/// off-diagonal entries, by a positive Taylor step and repeated squaring.
pub fn positive_exponential(a: &DMatrix<f64>, t: f64, shift: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("time must be positive, got {t}")));
    }
    let c = (0..n).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let mut m = -a.clone();
    for i in 0..n {
        m[(i, i)] += c;
    }
    if m.iter().any(|&v| v < 0.0) {
        return Err(Error::Precondition(
            "positive exponential needs non-positive off-diagonal entries".into(),
        ));
    }
    let norm = inf_norm(&m);
    let squarings = if t * norm > 0.125 {
        (8.0 * t * norm).log2().ceil() as i32
    } else {
        0
    };
    let tau = t / 2f64.powi(squarings);
    let step = &m * tau;
    let mut s = DMatrix::<f64>::identity(n, n);
    for k in (1..=14).rev() {
        s = &step * &s / k as f64;
        for i in 0..n {
            s[(i, i)] += 1.0;
        }
    }
    s *= (-tau * (c - shift)).exp();
    for _ in 0..squarings {
        s = &s * &s;
    }
    Ok(s)
}

/// Full eigendecomposition of a symmetric matrix acting on grid functions
/// with cell width `h`, keeping `k` modes.
pub fn solve_matrix(a: &DMatrix<f64>, grid: Grid, k: usize) -> Result<SpectralResult> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("mode count {k} outside 1..={n}")));
    }
    let norm = inf_norm(a);
    let asym = a
        .iter()
        .zip(a.transpose().iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    if asym > 1e-12 * norm {
        return Err(Error::Precondition(format!(
            "matrix not symmetric (defect {asym:.3e})"
        )));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0).ok_or_else(|| {
        Error::Solver(format!(
            "symmetric eigensolver did not converge for N = {n}"
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let scale = 1.0 / grid.h.sqrt();
    let eigenvalues: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let lambda2 = if n > 1 {
        eig.eigenvalues[order[1]]
    } else {
        f64::INFINITY
    };
    let mut vectors = DMatrix::<f64>::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        let col = eig.eigenvectors.column(i) * scale;
        let sign = if col.sum() < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(c, &(col * sign));
    }
    let mut result = SpectralResult {
        grid,
        eigenvalues,
        eigenvectors: vectors,
        ground_state: Vec::new(),
        lambda2,
        max_residual: 0.0,
        orthonormality_defect: 0.0,
        matrix: a.clone(),
    };
    result.ground_state = result.refine_ground_state()?;
    result
        .eigenvectors
        .set_column(0, &DVector::from_column_slice(&result.ground_state));
    result.check_residuals(norm)?;
    Ok(result)
}

/// Eigenpairs of the assembled `-L^V`.
pub fn solve_spectrum(assembly: &OperatorAssembly, k: usize) -> Result<SpectralResult> {
    solve_matrix(&assembly.a, assembly.grid, k)
}

impl SpectralResult {
    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn gap(&self) -> f64 {
        self.lambda2 - self.eigenvalues[0]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Positive ground state from `exp(-T(A - λ₁))` applied to a positive
    /// vector, with `T·gap` large enough that the second mode is below
    /// roundoff.
    fn refine_ground_state(&self) -> Result<Vec<f64>> {
        let dense: Vec<f64> = self.eigenvectors.column(0).iter().copied().collect();
        let n = dense.len();
        let gap = self.gap();
        if !(gap > 0.0) || n < 2 {
            return Ok(dense);
        }
        let horizon = (40.0 / gap).clamp(1e-3, 1e6);
        let e = match positive_exponential(&self.matrix, horizon, self.eigenvalues[0]) {
            Ok(e) => e,
            // matrices with positive off-diagonal entries keep the dense vector
            Err(Error::Precondition(_)) => return Ok(dense),
            Err(err) => return Err(err),
        };
        let mut v = DVector::from_element(n, 1.0);
        for _ in 0..3 {
            v = &e * v;
            let m = v.max();
            if !(m > 0.0) {
                return Err(Error::Solver("ground-state refinement underflowed".into()));
            }
            v /= m;
        }
        let norm = (v.norm_squared() * self.grid.h).sqrt();
        Ok(v.iter().map(|x| x / norm).collect())
    }

    fn check_residuals(&mut self, norm: f64) -> Result<()> {
        let h = self.grid.h;
        let k = self.eigenvalues.len();
        let mut worst = 0.0f64;
        for c in 0..k {
            let v = self.eigenvectors.column(c);
            let r = &self.matrix * v - v * self.eigenvalues[c];
            worst = worst.max((r.norm_squared() * h).sqrt());
        }
        let gram = self.eigenvectors.transpose() * &self.eigenvectors * h;
        let defect = (gram - DMatrix::<f64>::identity(k, k)).abs().max();
        self.max_residual = worst;
        self.orthonormality_defect = defect;
        if worst > 1e-8 * norm {
            return Err(Error::Solver(format!(
                "eigen-residual {worst:.3e} exceeds 1e-8 ‖A‖ = {:.3e}",
                1e-8 * norm
            )));
        }
        if defect > 1e-8 {
            return Err(Error::Solver(format!("orthonormality defect {defect:.3e}")));
        }
        Ok(())
    }

    /// Node indices with `|x| ≤ 0.9R` and a ground state above the underflow
    /// floor, together with the number of window nodes dropped for underflow.
    pub fn window_nodes(&self) -> (Vec<usize>, usize) {
        let g = &self.grid;
        let mut kept = Vec::new();
        let mut dropped = 0;
        for i in 0..g.n {
            if g.x(i).abs() <= WINDOW * g.r + 1e-12 {
                if self.ground_state[i] > UNDERFLOW {
                    kept.push(i);
                } else {
                    dropped += 1;
                }
            }
        }
        (kept, dropped)
    }
}

/// Spectral expansion `p(t, x_i, x_j) = Σ_n e^{-λ_n t} φ_n(x_i) φ_n(x_j)` over
/// all computed modes.
pub fn heat_kernel(spec: &SpectralResult, t: f64) -> HeatKernel {
    let k = spec.eigenvalues.len();
    let mut weighted = spec.eigenvectors.clone();
    for c in 0..k {
        let w = (-spec.eigenvalues[c] * t).exp();
        weighted.column_mut(c).scale_mut(w);
    }
    let values = &weighted * spec.eigenvectors.transpose();
    let values = (&values + values.transpose()) * 0.5;
    HeatKernel {
        t,
        h: spec.grid.h,
        values,
    }
}

/// `p(t) = exp(-tA)/h` with entrywise relative accuracy.
pub fn positive_heat_kernel(spec: &SpectralResult, t: f64) -> Result<HeatKernel> {
    let e = positive_exponential(&spec.matrix, t, 0.0)?;
    let values = (&e + e.transpose()) * (0.5 / spec.grid.h);
    Ok(HeatKernel {
        t,
        h: spec.grid.h,
        values,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IucReport {
    pub t: f64,
    pub value: f64,
    pub argmax: (f64, f64),
    pub excluded_nodes: usize,
}

/// `Λ(t) = max p(t, x_i, x_j)/(φ₁(x_i)φ₁(x_j))` over the window.
pub fn iuc_ratio(spec: &SpectralResult, t: f64) -> Result<IucReport> {
    let hk = positive_heat_kernel(spec, t)?;
    Ok(iuc_ratio_with(spec, &hk))
}

pub fn iuc_ratio_with(spec: &SpectralResult, hk: &HeatKernel) -> IucReport {
    let (nodes, excluded) = spec.window_nodes();
    let phi = &spec.ground_state;
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for &i in &nodes {
        for &j in &nodes {
            let r = hk.values[(i, j)] / (phi[i] * phi[j]);
            if r > best.0 {
                best = (r, i, j);
            }
        }
    }
    IucReport {
        t: hk.t,
        value: best.0,
        argmax: (spec.grid.x(best.1), spec.grid.x(best.2)),
        excluded_nodes: excluded,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntrinsicReport {
    pub t: f64,
    /// Norm of the intrinsic semigroup from `L²(φ₁² h)` to `L^∞`.
    pub norm: f64,
    /// `max_i |Σ_j p̃_ij φ₁(x_j)² h - 1|` over the window.
    pub markov_defect: f64,
    pub excluded_nodes: usize,
}

pub fn intrinsic_norm(spec: &SpectralResult, t: f64) -> Result<IntrinsicReport> {
    let hk = positive_heat_kernel(spec, t)?;
    let (nodes, excluded) = spec.window_nodes();
    let phi = &spec.ground_state;
    let h = spec.grid.h;
    let growth = (spec.lambda1() * t).exp();
    let mut norm = 0.0f64;
    let mut defect = 0.0f64;
    for &i in &nodes {
        let (mut sq, mut row) = (0.0, 0.0);
        for j in 0..spec.grid.n {
            if phi[j] <= UNDERFLOW {
                continue;
            }
            // p̃_ij φ_j = e^{λ₁t} p_ij / φ_i
            let pf = growth * hk.values[(i, j)] / phi[i];
            sq += pf * pf * h;
            row += pf * phi[j] * h;
        }
        norm = norm.max(sq.sqrt());
        defect = defect.max((row - 1.0).abs());
    }
    Ok(IntrinsicReport {
        t,
        norm,
        markov_defect: defect,
        excluded_nodes: excluded,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SupersolutionReport {
    /// Smallest `λ` with `L^V ψ ≤ λ ψ` on the window nodes.
    pub lambda_star: f64,
    /// `max φ₁/ψ` on the window nodes.
    pub ratio_bound: f64,
}

pub fn supersolution_check(spec: &SpectralResult, psi: &[f64]) -> Result<SupersolutionReport> {
    if psi.len() != spec.grid.n {
        return Err(Error::Parameter("ψ has the wrong length".into()));
    }
    if let Some(i) = psi.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::Domain(format!(
            "ψ must be positive, fails at x = {}",
            spec.grid.x(i)
        )));
    }
    let a_psi = &spec.matrix * DVector::from_column_slice(psi);
    let (nodes, _) = spec.window_nodes();
    let mut lambda_star = f64::NEG_INFINITY;
    let mut ratio = 0.0f64;
    for &i in &nodes {
        lambda_star = lambda_star.max(-a_psi[i] / psi[i]);
        ratio = ratio.max(spec.ground_state[i] / psi[i]);
    }
    Ok(SupersolutionReport {
        lambda_star,
        ratio_bound: ratio,
    })
}

/// `exp(-λ/(2κ) √(1+x²) log(1+x²))`.
pub fn psi_log(grid: &Grid, lambda: f64, kappa: f64) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|x| {
            let q = 1.0 + x * x;
            (-lambda / (2.0 * kappa) * q.sqrt() * q.ln()).exp()
        })
        .collect()
}

/// `exp(-(c₀θ)^{(γ-1)/γ} √(1+x²) log^{(γ-1)/γ} √(1+x²))`.
pub fn psi_tempered(grid: &Grid, c0: f64, theta: f64, gamma: f64) -> Vec<f64> {
    let e = (gamma - 1.0) / gamma;
    grid.nodes()
        .iter()
        .map(|x| {
            let s = (1.0 + x * x).sqrt();
            (-(c0 * theta).powf(e) * s * s.ln().powf(e)).exp()
        })
        .collect()
}

/// `T_t(1_{B(x, reach)})(x) / T_t(1_D)(x)`, or `+∞` when the denominator
/// underflows.
pub fn condition13_ratio_with(hk: &HeatKernel, grid: &Grid, i: usize, d: &Ball, reach: f64) -> f64 {
    let num = hk.mass(grid, i, &Ball::new(grid.x(i), reach));
    let den = hk.mass(grid, i, d);
    if den < UNDERFLOW {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn condition13_ratio(spec: &SpectralResult, t: f64, x: f64, d: &Ball) -> Result<f64> {
    let hk = positive_heat_kernel(spec, t)?;
    Ok(condition13_ratio_with(
        &hk,
        &spec.grid,
        spec.grid.index_of(x),
        d,
        1.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::assemble_generator;
    use crate::model::{KernelSpec, PotentialSpec};

    fn setup(theta: f64, r: f64, n: usize) -> (OperatorAssembly, SpectralResult) {
        let kernel = KernelSpec::truncated(1.0, 1.0).unwrap();
        let asm = assemble_generator(
            &kernel,
            &PotentialSpec::power(theta).unwrap(),
            Grid::new(r, n).unwrap(),
        )
        .unwrap();
        let spec = solve_spectrum(&asm, n).unwrap();
        (asm, spec)
    }

    #[test]
    fn textbook_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let grid = Grid {
            r: 0.5,
            n: 2,
            h: 1.0,
        };
        let s = solve_matrix(&a, grid, 2).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 3.0).abs() < 1e-14);
        assert!(s.ground_state.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn invariants() {
        let (asm, spec) = setup(2.0, 4.0, 161);
        assert!(spec.lambda1() > 0.0 && spec.gap() > 0.0);
        assert!(spec.ground_state.iter().all(|&v| v > 0.0));
        assert!(spec.max_residual <= 1e-8 * asm.norm());
        assert!(spec.orthonormality_defect < 1e-8);
        let var = asm.form(&spec.ground_state);
        assert!(
            ((var - spec.lambda1()) / spec.lambda1()).abs() < 1e-6,
            "{var} {}",
            spec.lambda1()
        );
    }

    #[test]
    fn potential_shift_shifts_spectrum() {
        let kernel = KernelSpec::truncated(1.0, 1.0).unwrap();
        let g = Grid::new(3.0, 121).unwrap();
        let base = solve_spectrum(
            &assemble_generator(&kernel, &PotentialSpec::power(2.0).unwrap(), g).unwrap(),
            5,
        )
        .unwrap();
        let shifted_v = PotentialSpec::power(2.0).unwrap().with_offset(1.5).unwrap();
        let shifted =
            solve_spectrum(&assemble_generator(&kernel, &shifted_v, g).unwrap(), 5).unwrap();
        for n in 0..5 {
            assert!((shifted.eigenvalues[n] - base.eigenvalues[n] - 1.5).abs() < 1e-9);
        }
        for i in 0..g.n {
            assert!((shifted.ground_state[i] - base.ground_state[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn heat_kernel_identities() {
        let (_, spec) = setup(2.0, 4.0, 161);
        let t = 0.5;
        let p1 = heat_kernel(&spec, t);
        let p2 = heat_kernel(&spec, 2.0 * t);
        assert_eq!(p1.values, p1.values.transpose());
        let comp = &p1.values * &p1.values * spec.grid.h;
        let ck = (&p2.values - comp).abs().max();
        assert!(ck < 1e-8 * p2.max_entry(), "{ck}");
        let floor = -1e-12 * p1.max_entry();
        assert!(p1.values.iter().all(|&v| v >= floor));
        // eigen-relation under the reconstructed kernel
        let tp = p1.apply(&spec.ground_state);
        let g = (spec.lambda1() * t).exp();
        for (a, p) in tp.iter().zip(&spec.ground_state) {
            assert!((g * a - p).abs() < 1e-8);
        }
        // dominant-mode limit
        let tl = 50.0 / spec.gap();
        let pl = heat_kernel(&spec, tl);
        let gl = (spec.lambda1() * tl).exp();
        let c = spec.grid.center();
        let lim = spec.ground_state[c] * spec.ground_state[c + 10];
        assert!((gl * pl.values[(c, c + 10)] - lim).abs() < 1e-9 * lim.max(1.0));
    }

    #[test]
    fn positive_route_matches_expansion() {
        let (_, spec) = setup(2.0, 4.0, 161);
        let a = heat_kernel(&spec, 1.0);
        let b = positive_heat_kernel(&spec, 1.0).unwrap();
        let rel = (&a.values - &b.values).abs().max() / a.max_entry();
        assert!(rel < 1e-10, "{rel}");
        assert!(b.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn refined_ground_state_tail_is_an_eigenvector() {
        let (_, spec) = setup(2.0, 8.0, 321);
        let a = spec.matrix();
        let phi = DVector::from_column_slice(&spec.ground_state);
        let r = a * &phi - &phi * spec.lambda1();
        // relative residual at the edge of the window, where φ₁ is tiny
        let i = spec.grid.index_of(7.0);
        assert!(spec.ground_state[i] < 1e-8);
        assert!(
            (r[i] / (spec.lambda1() * phi[i])).abs() < 1e-6,
            "{}",
            r[i] / phi[i]
        );
    }

    #[test]
    fn iuc_lower_bound_and_intrinsic_kernel() {
        let (_, spec) = setup(2.0, 4.0, 161);
        for t in [0.5, 1.0, 2.0] {
            let rep = iuc_ratio(&spec, t).unwrap();
            assert!(rep.value >= (-spec.lambda1() * t).exp());
        }
        let norms: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&t| intrinsic_norm(&spec, t).unwrap())
            .map(|r| {
                assert!(r.markov_defect < 1e-6, "{}", r.markov_defect);
                assert!(r.norm >= 1.0 - 1e-9);
                r.norm
            })
            .collect();
        assert!(norms[0] >= norms[1] && norms[1] >= norms[2]);
    }

    #[test]
    fn supersolutions() {
        let (_, spec) = setup(2.0, 4.0, 161);
        let tight = supersolution_check(&spec, &spec.ground_state.clone()).unwrap();
        assert!((tight.lambda_star + spec.lambda1()).abs() < 1e-8);
        assert!((tight.ratio_bound - 1.0).abs() < 1e-12);
        let ones = vec![1.0; spec.grid.n];
        let c = supersolution_check(&spec, &ones).unwrap();
        assert!(c.lambda_star <= 1e-12);
        let psi = psi_log(&spec.grid, 1.0, 1.0);
        let rep = supersolution_check(&spec, &psi).unwrap();
        assert!(rep.lambda_star.is_finite() && rep.ratio_bound.is_finite());
        let mut bad = ones.clone();
        bad[3] = 0.0;
        assert!(matches!(
            supersolution_check(&spec, &bad),
            Err(Error::Domain(_))
        ));
        let pt = psi_tempered(&spec.grid, 1.0, 2.0, 2.0);
        assert!((pt[spec.grid.center()] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn condition13_at_origin_finite() {
        let (_, spec) = setup(2.0, 4.0, 161);
        let r = condition13_ratio(&spec, 1.0, 0.0, &Ball::new(0.0, 1.0)).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }
}
