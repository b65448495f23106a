//! Uniform 1-D grid, the matrix of `-L + V` with exterior truncation, and
//! the quadratic form `D^V`.
//!
//! Jumps longer than one grid spacing are integrated by the midpoint rule
//! on the target cell. Jumps of length at most `h` are lumped into a
//! second difference with coefficient `σ_h²(x)/2`, plus a centered first
//! difference carrying the principal-value drift when the kernel is not
//! translation invariant. Mass that would leave `[-R - h/2, R + h/2]` is
//! kept on the diagonal as a killing rate.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ball_volume, KernelSpec, PotentialSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub r: f64,
    pub n: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(r: f64, n: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!(
                "grid half-width must be positive, got {r}"
            )));
        }
        if n < 16 {
            return Err(Error::Parameter(format!(
                "grid needs at least 16 nodes, got {n}"
            )));
        }
        if n.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "grid node count must be odd, got {n}"
            )));
        }
        Ok(Grid {
            r,
            n,
            h: 2.0 * r / (n - 1) as f64,
        })
    }

    /// Grid on `[-R, R]` with spacing as close to `h` as an odd count allows.
    pub fn with_spacing(r: f64, h: f64) -> Result<Self> {
        let half = (r / h).round().max(8.0) as usize;
        Self::new(r, 2 * half + 1)
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.r + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn center(&self) -> usize {
        self.n / 2
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn index_of(&self, x: f64) -> usize {
        (((x + self.r) / self.h).round().max(0.0) as usize).min(self.n - 1)
    }

    /// `Σ f g h`.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.h
    }

    pub fn norm2(&self, f: &[f64]) -> f64 {
        self.dot(f, f).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct OperatorAssembly {
    pub grid: Grid,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
    /// Matrix of `-L + V` acting on nodal values.
    pub a: DMatrix<f64>,
    /// Edge-wise form matrix with `fᵀ B f h = D^V(f, f)`.
    pub bform: DMatrix<f64>,
    pub kill: Vec<f64>,
    pub v: Vec<f64>,
    /// `max |A - Aᵀ|` before symmetrization, relative to `‖A‖_∞`.
    pub asymmetry_defect: f64,
}

struct LocalMoments {
    sigma2: Vec<f64>,
    drift: Vec<f64>,
}

fn local_moments(kernel: &KernelSpec, grid: &Grid, shift: f64) -> LocalMoments {
    let h = grid.h;
    if kernel.is_translation_invariant() {
        let s = kernel.near_second_moment(0.0, h);
        return LocalMoments {
            sigma2: vec![s; grid.n],
            drift: vec![0.0; grid.n],
        };
    }
    let xs: Vec<f64> = (0..grid.n).map(|i| grid.x(i) + shift).collect();
    LocalMoments {
        sigma2: xs
            .iter()
            .map(|&x| kernel.near_second_moment(x, h))
            .collect(),
        drift: xs.iter().map(|&x| kernel.near_drift(x, h)).collect(),
    }
}

/// Continuum mass of jumps from node `i` into the exterior that the far
/// field does not see.
fn exterior_far(kernel: &KernelSpec, grid: &Grid, i: usize) -> f64 {
    let (h, x) = (grid.h, grid.x(i));
    let ur = (grid.r + 0.5 * h - x).max(1.5 * h);
    let ul = (x + grid.r + 0.5 * h).max(1.5 * h);
    kernel.directed_tail(x, ur, 1.0) + kernel.directed_tail(x, ul, -1.0)
}

fn check_resolution(kernel: &KernelSpec, grid: &Grid) -> Result<()> {
    if kernel.d != 1 {
        return Err(Error::Unsupported("assembly is one-dimensional".into()));
    }
    if !(grid.h < kernel.kappa / 4.0) {
        return Err(Error::Precondition(format!(
            "need h < kappa/4, got h = {}",
            grid.h
        )));
    }
    if !(grid.h < 1.0) {
        return Err(Error::Precondition(format!(
            "need h < 1, got h = {}",
            grid.h
        )));
    }
    Ok(())
}

fn far_kernel<'a>(kernel: &'a KernelSpec, grid: &'a Grid) -> impl Fn(usize, usize) -> f64 + 'a {
    let table: Vec<f64> = if kernel.is_translation_invariant() {
        (0..grid.n)
            .map(|k| {
                if k < 2 {
                    0.0
                } else {
                    kernel.rho(k as f64 * grid.h)
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    move |i: usize, j: usize| {
        if table.is_empty() {
            kernel.density(grid.x(i), grid.x(j))
        } else {
            table[i.abs_diff(j)]
        }
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix of `-L^V` with exterior truncation.
pub fn assemble_generator(
    kernel: &KernelSpec,
    potential: &PotentialSpec,
    grid: Grid,
) -> Result<OperatorAssembly> {
    check_resolution(kernel, &grid)?;
    let (n, h) = (grid.n, grid.h);
    let mom = local_moments(kernel, &grid, 0.0);
    let far = far_kernel(kernel, &grid);
    let v: Vec<f64> = (0..n).map(|i| potential.eval(grid.x(i))).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut kill = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i.abs_diff(j) >= 2 {
                a[(i, j)] = -far(i, j) * h;
            }
        }
        let lap = mom.sigma2[i] / (2.0 * h * h);
        let adv = mom.drift[i] / (2.0 * h);
        let (left, right) = (lap - adv, lap + adv);
        if left < 0.0 || right < 0.0 {
            return Err(Error::Assembly(format!(
                "drift dominates the near band at node {i}; refine the grid"
            )));
        }
        if i > 0 {
            a[(i, i - 1)] = -left;
        } else {
            kill[i] += left;
        }
        if i + 1 < n {
            a[(i, i + 1)] = -right;
        } else {
            kill[i] += right;
        }
        kill[i] += exterior_far(kernel, &grid, i);
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = -off + kill[i] + v[i];
    }
    if let Some(i) = (0..n).find(|&i| !a.row(i).iter().all(|x| x.is_finite())) {
        return Err(Error::Assembly(format!(
            "non-finite operator entry in row {i}"
        )));
    }
    let norm = inf_norm(&a);
    let defect = a
        .iter()
        .zip(a.transpose().iter())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
        / norm;
    let tol = if kernel.is_translation_invariant() {
        1e-6
    } else {
        10.0 * h * h
    };
    if defect > tol {
        return Err(Error::Assembly(format!(
            "asymmetry defect {defect:.3e} exceeds {tol:.1e}: drift correction inconsistent"
        )));
    }
    let a = (&a + a.transpose()) * 0.5;
    let bform = assemble_form_matrix(kernel, &grid, &v)?;
    Ok(OperatorAssembly {
        grid,
        kernel: kernel.clone(),
        potential: potential.clone(),
        a,
        bform,
        kill,
        v,
        asymmetry_defect: defect,
    })
}

fn assemble_form_matrix(kernel: &KernelSpec, grid: &Grid, v: &[f64]) -> Result<DMatrix<f64>> {
    let (n, h) = (grid.n, grid.h);
    let edge = local_moments(kernel, grid, 0.5 * h);
    let far = far_kernel(kernel, grid);
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut diag = vec![0.0; n];
    for i in 0..n {
        for j in (i + 2)..n {
            let w = far(i, j) * h;
            b[(i, j)] = -w;
            b[(j, i)] = -w;
            diag[i] += w;
            diag[j] += w;
        }
        // edge between i and i+1 sits at x_i + h/2; edge to the exterior
        // on the left of node 0 at x_0 - h/2
        let w = edge.sigma2[i] / (2.0 * h * h);
        if i + 1 < n {
            b[(i, i + 1)] = -w;
            b[(i + 1, i)] = -w;
            diag[i + 1] += w;
        }
        diag[i] += w;
        diag[i] += exterior_far(kernel, grid, i);
        if w < 0.0 || v[i] < 0.0 {
            return Err(Error::Assembly("negative edge weight or potential".into()));
        }
    }
    let left_edge = local_moments(kernel, grid, -0.5 * h).sigma2[0] / (2.0 * h * h);
    diag[0] += left_edge;
    for i in 0..n {
        b[(i, i)] = diag[i] + v[i];
    }
    Ok(b)
}

/// Edge-wise form matrix; `fᵀ B f h` is the discrete double sum plus the
/// potential and killing terms. The matrix is a weighted graph Laplacian
/// plus a non-negative diagonal, hence positive semidefinite by
/// construction; non-negativity of every weight is checked.
pub fn assemble_form(
    kernel: &KernelSpec,
    potential: &PotentialSpec,
    grid: Grid,
) -> Result<DMatrix<f64>> {
    check_resolution(kernel, &grid)?;
    let v: Vec<f64> = (0..grid.n).map(|i| potential.eval(grid.x(i))).collect();
    assemble_form_matrix(kernel, &grid, &v)
}

impl OperatorAssembly {
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let fv = nalgebra::DVector::from_column_slice(f);
        (&self.a * fv).as_slice().to_vec()
    }

    /// `fᵀ A f h`.
    pub fn quadratic(&self, f: &[f64]) -> f64 {
        self.grid.dot(f, &self.apply(f))
    }

    /// `fᵀ B f h = D^V(f, f)`.
    pub fn form(&self, f: &[f64]) -> f64 {
        let fv = nalgebra::DVector::from_column_slice(f);
        self.grid.dot(f, (&self.bform * fv).as_slice())
    }

    /// `D(f, f)` without the potential term.
    pub fn kernel_form(&self, f: &[f64]) -> f64 {
        self.form(f) - f.iter().zip(&self.v).map(|(a, b)| a * a * b).sum::<f64>() * self.grid.h
    }

    pub fn norm(&self) -> f64 {
        inf_norm(&self.a)
    }

    /// Independent double-sum evaluation of `½ΣΣ (f_i - f_j)² J h² + Σ f²(V + k) h`.
    pub fn double_sum_form(&self, f: &[f64]) -> f64 {
        let (n, h) = (self.grid.n, self.grid.h);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = f[i] - f[j];
                    s += 0.5 * d * d * self.kernel.density(self.grid.x(i), self.grid.x(j)) * h * h;
                }
            }
            s += f[i] * f[i] * (self.v[i] + self.kill[i]) * h;
        }
        s
    }

    /// Writes `A` as `N: u64, R: f64, h: f64` then row-major `f64`, all little endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write_matrix(&mut w, &self.grid, &self.a)
    }
}

pub fn write_matrix<W: Write>(w: &mut W, grid: &Grid, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_all(&(grid.n as u64).to_le_bytes())?;
    w.write_all(&grid.r.to_le_bytes())?;
    w.write_all(&grid.h.to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn check_interior_support(f: &[f64], grid: &Grid) -> Result<()> {
    if f.len() != grid.n {
        return Err(Error::Parameter(format!(
            "grid function has {} values for {} nodes",
            f.len(),
            grid.n
        )));
    }
    if f[0] != 0.0 || f[grid.n - 1] != 0.0 {
        return Err(Error::Precondition(
            "grid function must vanish at the boundary nodes".into(),
        ));
    }
    Ok(())
}

/// Both sides of the mollifier estimate
/// `∫_{B(0,r)} f² ≤ (2s^{1+α₁}/|B_s|) ∬_{|x-y|≤s} (f(x)-f(y))²/|x-y|^{1+α₁} + (2/|B_s|)(∫_{B(0,r+s)} |f|)²`
/// as grid sums.
///
/// The discrete averaging argument needs every discrete `s`-ball to hold at
/// least `|B_s|` of mass, which holds when `s/h` has fractional part at most
/// one half; other spacings are rejected.
pub fn local_sp_explicit_check(
    grid: &Grid,
    kernel: &KernelSpec,
    f: &[f64],
    r: f64,
    s: f64,
) -> Result<(f64, f64)> {
    if !(s > 0.0 && s <= kernel.kappa) {
        return Err(Error::Range(format!("need 0 < s <= kappa, got s = {s}")));
    }
    if r < kernel.kappa {
        return Err(Error::Range(format!("need r >= kappa, got r = {r}")));
    }
    check_interior_support(f, grid)?;
    let ratio = s / grid.h;
    if ratio - ratio.floor() > 0.5 + 1e-9 {
        return Err(Error::Precondition(format!(
            "s/h = {ratio} has fractional part above 1/2"
        )));
    }
    let h = grid.h;
    let a1 = kernel.alpha1;
    let band = (ratio + 1e-9).floor() as usize;
    let tol = 1e-9 * h;
    let mut lhs = 0.0;
    let mut mass = 0.0;
    let mut dd = 0.0;
    for i in 0..grid.n {
        let x = grid.x(i);
        if x.abs() <= r + tol {
            lhs += f[i] * f[i] * h;
        }
        if x.abs() <= r + s + tol {
            mass += f[i].abs() * h;
        }
        for k in 1..=band {
            if i + k < grid.n {
                let d = f[i] - f[i + k];
                // both orderings of the pair
                dd += 2.0 * d * d / (k as f64 * h).powf(1.0 + a1) * h * h;
            }
        }
    }
    let ball = ball_volume(1) * s;
    let rhs = 2.0 * s.powf(1.0 + a1) / ball * dd + 2.0 / ball * mass * mass;
    Ok((lhs, rhs))
}

/// `(‖f‖²_{L^p}, D(f, f) + ‖f‖²₂)` with `p = 2/(1 - α₁)`.
pub fn sobolev_check(assembly: &OperatorAssembly, f: &[f64]) -> Result<(f64, f64)> {
    let a1 = assembly.kernel.alpha1;
    if a1 >= 1.0 {
        return Err(Error::Inapplicable(format!(
            "Sobolev embedding needs alpha1 < d = 1, got {a1}"
        )));
    }
    check_interior_support(f, &assembly.grid)?;
    let p = 2.0 / (1.0 - a1);
    let h = assembly.grid.h;
    let lp = (f.iter().map(|v| v.abs().powf(p)).sum::<f64>() * h).powf(2.0 / p);
    let rhs = assembly.kernel_form(f) + assembly.grid.dot(f, f);
    Ok((lp, rhs))
}

/// Random continuous piecewise-linear functions supported in `[-support, support]`
/// with knots every `knot` and values uniform in `[-1, 1]`.
pub fn random_piecewise_linear(
    grid: &Grid,
    support: f64,
    knot: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = support.min(grid.r - grid.h);
    let m = (2.0 * support / knot).ceil() as usize;
    (0..count)
        .map(|_| {
            let mut vals: Vec<f64> = (0..=m).map(|_| rng.random_range(-1.0..1.0)).collect();
            vals[0] = 0.0;
            vals[m] = 0.0;
            (0..grid.n)
                .map(|i| {
                    let x = grid.x(i);
                    if x.abs() >= support {
                        return 0.0;
                    }
                    let t = (x + support) / knot;
                    let k = (t.floor() as usize).min(m - 1);
                    let w = t - k as f64;
                    vals[k] * (1.0 - w) + vals[k + 1] * w
                })
                .collect()
        })
        .collect()
}
