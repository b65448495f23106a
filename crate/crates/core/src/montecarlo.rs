//! Path simulation of the translation-invariant jump processes and the
//! Feynman–Kac functional.
//!
//! Jumps longer than the cutoff `ε` arrive as a compound Poisson stream
//! with exact inverse-transform magnitudes; jumps up to `ε` are replaced by
//! a Brownian motion with the matching variance rate. The potential
//! integral uses the trapezoidal rule on the merged skeleton of time steps
//! and jump epochs.
//!
//! Every path draws from its own ChaCha stream (`seed`, stream = path
//! index), so estimates do not depend on the number of worker threads.
//! Path results are reduced in index order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::model::{Ball, KernelFamily, KernelSpec, PotentialSpec};

const Z95: f64 = 1.959_963_984_540_054;

/// Conventional value of the exit-time constant in `t₀ = c₀ (εκ)^{...}`.
pub const C0_EXIT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimScheme {
    pub eps_cut: f64,
    pub dt: f64,
    pub rng_seed: u64,
    pub worker_count: usize,
    /// Rate of jumps longer than `eps_cut`.
    pub lambda_eps: f64,
    /// Variance rate of the Gaussian replacing the shorter jumps.
    pub sigma2_eps: f64,
}

impl SimScheme {
    pub fn new(
        kernel: &KernelSpec,
        eps_cut: f64,
        dt: f64,
        rng_seed: u64,
        worker_count: usize,
    ) -> Result<Self> {
        check_levy(kernel)?;
        if !(eps_cut > 0.0 && eps_cut < kernel.kappa) {
            return Err(Error::Parameter(format!(
                "cutoff must lie in (0, kappa), got {eps_cut}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Parameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        Ok(SimScheme {
            eps_cut,
            dt,
            rng_seed,
            worker_count: worker_count.max(1),
            lambda_eps: 2.0 * kernel.radial_tail(eps_cut),
            sigma2_eps: kernel.near_second_moment(0.0, eps_cut),
        })
    }

    pub fn with_defaults(kernel: &KernelSpec, rng_seed: u64) -> Result<Self> {
        Self::new(kernel, 1e-3, 1e-4, rng_seed, 1)
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(path as u64);
        rng
    }

    fn map_paths<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng) -> T + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.worker_count)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        Ok(pool.install(|| {
            (0..count)
                .into_par_iter()
                .map(|k| {
                    let mut rng = self.rng(k);
                    f(&mut rng)
                })
                .collect()
        }))
    }
}

fn check_levy(kernel: &KernelSpec) -> Result<()> {
    if !kernel.is_translation_invariant() {
        return Err(Error::Unsupported(
            "simulation needs a translation-invariant kernel".into(),
        ));
    }
    if kernel.d != 1 {
        return Err(Error::Unsupported("simulation is one-dimensional".into()));
    }
    Ok(())
}

/// Inverse-transform sampler for `|z|` under `ρ` restricted to `|z| > ε`.
#[derive(Clone, Debug)]
struct JumpSampler {
    kernel: KernelSpec,
    eps: f64,
    near: f64,
    far: f64,
}

impl JumpSampler {
    fn new(kernel: &KernelSpec, eps: f64) -> Self {
        let a = kernel.alpha1;
        let near = kernel.c1 * (eps.powf(-a) - kernel.kappa.powf(-a)) / a;
        let far = kernel.radial_tail(kernel.kappa);
        JumpSampler {
            kernel: kernel.clone(),
            eps,
            near,
            far,
        }
    }

    fn magnitude(&self, u: f64) -> f64 {
        let k = &self.kernel;
        let a = k.alpha1;
        let m = u * (self.near + self.far);
        if m < self.near {
            return (self.eps.powf(-a) - a * m / k.c1).powf(-1.0 / a);
        }
        let rest = (self.near + self.far - m).max(f64::MIN_POSITIVE);
        match k.family {
            KernelFamily::StableLike => (rest * a / k.c_tail).powf(-1.0 / a),
            _ => {
                // tempered tail: invert the incomplete gamma numerically
                let (mut lo, mut hi) = (k.kappa, 2.0 * k.kappa);
                while k.radial_tail(hi) > rest {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if k.radial_tail(mid) > rest {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-14 * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    fn signed<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let z = self.magnitude(u);
        if rng.random::<bool>() {
            z
        } else {
            -z
        }
    }
}

/// Extra jumps toward a target ball, used as an importance-sampling
/// proposal. While the path is farther than half the target radius from
/// the center, jumps of length uniform in `[max(ε, L/2), L]`, with
/// `L = min(κ, distance)`, arrive at `rate` toward the center.
#[derive(Clone, Copy, Debug)]
pub struct Tilt {
    pub target: Ball,
    pub rate: f64,
}

impl Tilt {
    fn support(&self, x: f64, kappa: f64, eps: f64) -> Option<(f64, f64, f64)> {
        let dist = (self.target.center - x).abs();
        if dist <= 0.5 * self.target.radius {
            return None;
        }
        let hi = dist.min(kappa);
        let lo = eps.max(0.5 * hi);
        if hi <= lo {
            return None;
        }
        Some(((self.target.center - x).signum(), lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    Move,
    Jump,
}

#[derive(Clone, Copy, Debug, Default)]
struct Cursor {
    t: f64,
    x: f64,
    /// `-∫V` plus the log likelihood ratio when tilted.
    ln_weight: f64,
    jumps: u64,
}

struct Engine<'a> {
    sampler: JumpSampler,
    lambda: f64,
    sigma: f64,
    dt: f64,
    potential: Option<&'a PotentialSpec>,
    tilt: Option<Tilt>,
}

impl<'a> Engine<'a> {
    fn new(kernel: &KernelSpec, scheme: &SimScheme, potential: Option<&'a PotentialSpec>) -> Self {
        Engine {
            sampler: JumpSampler::new(kernel, scheme.eps_cut),
            lambda: scheme.lambda_eps,
            sigma: scheme.sigma2_eps.sqrt(),
            dt: scheme.dt,
            potential,
            tilt: None,
        }
    }

    fn v(&self, x: f64) -> f64 {
        self.potential.map_or(0.0, |p| p.eval(x))
    }

    /// Runs one path on `[0, horizon]`; the observer may stop it early by
    /// returning `false`.
    fn run<R: Rng, F: FnMut(&Cursor, Event, f64) -> bool>(
        &self,
        x0: f64,
        horizon: f64,
        rng: &mut R,
        mut obs: F,
    ) -> Cursor {
        let kappa = self.sampler.kernel.kappa;
        let eps = self.sampler.eps;
        let mut c = Cursor {
            t: 0.0,
            x: x0,
            ln_weight: 0.0,
            jumps: 0,
        };
        let mut v_prev = self.v(x0);
        while c.t < horizon {
            let step_end = (c.t + self.dt).min(horizon);
            let extra = self
                .tilt
                .and_then(|tl| tl.support(c.x, kappa, eps).map(|s| (tl.rate, s)));
            let mu = extra.map_or(0.0, |e| e.0);
            let total = self.lambda + mu;
            let u: f64 = rng.random();
            let wait = -(1.0 - u).ln() / total;
            let (t_next, jump) = if c.t + wait < step_end {
                (c.t + wait, true)
            } else {
                (step_end, false)
            };
            let d = t_next - c.t;
            let g: f64 = rng.sample(StandardNormal);
            let x_new = c.x + self.sigma * d.sqrt() * g;
            let v_new = self.v(x_new);
            c.ln_weight += -0.5 * (v_prev + v_new) * d + mu * d;
            c.t = t_next;
            c.x = x_new;
            v_prev = v_new;
            if !obs(&c, Event::Move, 0.0) {
                return c;
            }
            if jump {
                let z = match extra {
                    Some((mu, (dir, lo, hi))) => {
                        let natural: f64 = rng.random();
                        let z = if natural * total < self.lambda {
                            self.sampler.signed(rng)
                        } else {
                            dir * rng.random_range(lo..hi)
                        };
                        let nat = if z.abs() > eps {
                            self.sampler.kernel.rho(z.abs())
                        } else {
                            0.0
                        };
                        let inside = z.signum() == dir && z.abs() >= lo && z.abs() <= hi;
                        let prop = nat + if inside { mu / (hi - lo) } else { 0.0 };
                        c.ln_weight += (nat / prop).ln();
                        z
                    }
                    None => self.sampler.signed(rng),
                };
                c.x += z;
                c.jumps += 1;
                v_prev = self.v(c.x);
                if !obs(&c, Event::Jump, z) {
                    return c;
                }
            }
        }
        c
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PathSample {
    pub jump_count: u64,
    /// Recorded only on request.
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub terminal: f64,
    pub integrated_v: f64,
    /// First exit time from each queried ball, if it happens before `t`.
    pub exit_times: Vec<Option<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    kernel: &KernelSpec,
    potential: Option<&PotentialSpec>,
    scheme: &SimScheme,
    x0: f64,
    t: f64,
    count: usize,
    balls: &[Ball],
    record: bool,
) -> Result<Vec<PathSample>> {
    check_levy(kernel)?;
    check_time(t)?;
    let engine = Engine::new(kernel, scheme, potential);
    scheme.map_paths(count, |rng| {
        let mut s = PathSample {
            exit_times: vec![None; balls.len()],
            ..Default::default()
        };
        let end = engine.run(x0, t, rng, |c, ev, z| {
            for (k, b) in balls.iter().enumerate() {
                if s.exit_times[k].is_none() && !b.contains(c.x) {
                    s.exit_times[k] = Some(c.t);
                }
            }
            if record && ev == Event::Jump {
                s.jump_times.push(c.t);
                s.jump_sizes.push(z);
            }
            true
        });
        s.jump_count = end.jumps;
        s.terminal = end.x;
        s.integrated_v = -end.ln_weight;
        s
    })
}

/// Raw path layout: per path `u64` index, `u64` jump count, `f64` terminal
/// position, `f64` integrated potential, then `(f64 time, f64 size)` per
/// jump; little endian throughout.
pub fn write_path_dump<W: Write>(mut w: W, paths: &[PathSample]) -> std::io::Result<()> {
    for (k, p) in paths.iter().enumerate() {
        w.write_all(&(k as u64).to_le_bytes())?;
        w.write_all(&(p.jump_times.len() as u64).to_le_bytes())?;
        w.write_all(&p.terminal.to_le_bytes())?;
        w.write_all(&p.integrated_v.to_le_bytes())?;
        for (t, z) in p.jump_times.iter().zip(&p.jump_sizes) {
            w.write_all(&t.to_le_bytes())?;
            w.write_all(&z.to_le_bytes())?;
        }
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("time must be positive, got {t}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub paths: usize,
    pub seed: u64,
}

impl Estimate {
    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// Wilson 95% interval for `hits` successes out of `n`.
pub fn wilson(hits: usize, n: usize, seed: u64) -> Estimate {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / den;
    let half = Z95 / den * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let ci_low = if hits == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let ci_high = if hits == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    Estimate {
        estimate: p,
        ci_low,
        ci_high,
        paths: n,
        seed,
    }
}

fn mean_ci(values: &[f64], seed: u64) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let half = Z95 * (var / n).sqrt();
    Estimate {
        estimate: mean,
        ci_low: mean - half,
        ci_high: mean + half,
        paths: values.len(),
        seed,
    }
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `α₂ + (α₂ - α₁) d / α₁`, the exit-time scaling exponent.
pub fn exit_exponent(kernel: &KernelSpec) -> f64 {
    kernel.alpha2 + (kernel.alpha2 - kernel.alpha1) * kernel.d as f64 / kernel.alpha1
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitRow {
    pub r: f64,
    pub median: f64,
    pub exited_fraction: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitStats {
    pub rows: Vec<ExitRow>,
    /// Least-squares slope of `log median` against `log r`.
    pub slope: f64,
    pub exponent: f64,
    /// `max/min` of `median / r^exponent`.
    pub collapse_ratio: f64,
}

/// Median exit times from `B(0, r)`.
pub fn exit_time_stats(
    kernel: &KernelSpec,
    scheme: &SimScheme,
    r_list: &[f64],
    count: usize,
) -> Result<ExitStats> {
    check_levy(kernel)?;
    if count < 10_000 {
        return Err(Error::Precondition(format!(
            "need at least 10^4 paths, got {count}"
        )));
    }
    if let Some(r) = r_list
        .iter()
        .find(|&&r| !(r > 0.0 && r <= 0.5 * kernel.kappa))
    {
        return Err(Error::Precondition(format!(
            "radius {r} outside (0, kappa/2]"
        )));
    }
    let exponent = exit_exponent(kernel);
    let engine = Engine::new(kernel, scheme, None);
    let mut rows = Vec::new();
    for &r in r_list {
        let ball = Ball::new(0.0, r);
        let mut horizon = 10.0 * r.powf(exponent);
        let mut attempt = 0;
        loop {
            let times = scheme.map_paths(count, |rng| {
                let mut exit = f64::INFINITY;
                engine.run(0.0, horizon, rng, |c, _, _| {
                    if ball.contains(c.x) {
                        true
                    } else {
                        exit = c.t;
                        false
                    }
                });
                exit
            })?;
            let exited = times.iter().filter(|t| t.is_finite()).count();
            let frac = exited as f64 / count as f64;
            if frac > 0.6 {
                let mut sorted = times;
                sorted.sort_by(f64::total_cmp);
                let median = if count % 2 == 1 {
                    sorted[count / 2]
                } else {
                    0.5 * (sorted[count / 2 - 1] + sorted[count / 2])
                };
                rows.push(ExitRow {
                    r,
                    median,
                    exited_fraction: frac,
                    horizon,
                });
                break;
            }
            attempt += 1;
            if attempt > 4 {
                return Err(Error::InsufficientData(format!(
                    "only {:.1}% of paths left B(0, {r}) by t = {horizon}",
                    100.0 * frac
                )));
            }
            horizon *= 4.0;
        }
    }
    let lx: Vec<f64> = rows.iter().map(|w| w.r.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|w| w.median.ln()).collect();
    let slope = if rows.len() >= 2 {
        least_squares_slope(&lx, &ly)
    } else {
        f64::NAN
    };
    let scaled: Vec<f64> = rows.iter().map(|w| w.median / w.r.powf(exponent)).collect();
    let collapse_ratio = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ExitStats {
        rows,
        slope,
        exponent,
        collapse_ratio,
    })
}

/// Probabilities of `{X_τ ∈ D, t₁ ≤ τ < t₂}` for `τ` the exit time from `B`,
/// starting from the center of `B`, for each window, from one batch of paths.
pub fn simulate_window_exits(
    kernel: &KernelSpec,
    scheme: &SimScheme,
    b: &Ball,
    d: &Ball,
    windows: &[(f64, f64)],
    count: usize,
) -> Result<Vec<Estimate>> {
    check_levy(kernel)?;
    let horizon = windows.iter().map(|w| w.1).fold(0.0, f64::max);
    if horizon <= 0.0 {
        return Ok(windows
            .iter()
            .map(|_| wilson(0, count, scheme.rng_seed))
            .collect());
    }
    let engine = Engine::new(kernel, scheme, None);
    let exits = scheme.map_paths(count, |rng| {
        let mut out = None;
        engine.run(b.center, horizon, rng, |c, _, _| {
            if b.contains(c.x) {
                true
            } else {
                out = Some((c.t, c.x));
                false
            }
        });
        out
    })?;
    Ok(windows
        .iter()
        .map(|&(t1, t2)| {
            let hits = exits
                .iter()
                .filter(|e| matches!(e, Some((t, x)) if *t >= t1 && *t < t2 && d.contains(*x)))
                .count();
            wilson(hits, count, scheme.rng_seed)
        })
        .collect())
}

/// Window-exit probability with the geometric and time-scale constraints
/// enforced: `dist(B, D) > εκ`, all pairwise distances at most `κ`, and
/// `0 < t₁ ≤ t₂ < c₀ (εκ)^{exponent}`.
#[allow(clippy::too_many_arguments)]
pub fn window_exit_prob(
    kernel: &KernelSpec,
    scheme: &SimScheme,
    b: &Ball,
    d: &Ball,
    t1: f64,
    t2: f64,
    count: usize,
    eps: f64,
) -> Result<Estimate> {
    check_window(kernel, b, d, t1, t2, eps)?;
    Ok(simulate_window_exits(kernel, scheme, b, d, &[(t1, t2)], count)?[0])
}

pub fn window_time_scale(kernel: &KernelSpec, eps: f64) -> f64 {
    C0_EXIT * (eps * kernel.kappa).powf(exit_exponent(kernel))
}

fn check_window(kernel: &KernelSpec, b: &Ball, d: &Ball, t1: f64, t2: f64, eps: f64) -> Result<()> {
    let kappa = kernel.kappa;
    let gap = (b.center - d.center).abs() - b.radius - d.radius;
    if !(gap > eps * kappa) {
        return Err(Error::Precondition(format!(
            "dist(B, D) = {gap} must exceed eps*kappa = {}",
            eps * kappa
        )));
    }
    let reach = (b.center - d.center).abs() + b.radius + d.radius;
    if reach > kappa {
        return Err(Error::Precondition(format!(
            "pairwise distance {reach} between B and D exceeds kappa"
        )));
    }
    let scale = window_time_scale(kernel, eps);
    if !(t1 > 0.0 && t1 <= t2 && t2 < scale) {
        return Err(Error::Precondition(format!(
            "time window must satisfy 0 < t1 <= t2 < {scale}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearityReport {
    pub narrow: Estimate,
    pub wide: Estimate,
    pub ratio: f64,
}

/// Estimates for windows `[t₁, t₁ + w)` and `[t₁, t₁ + 2w)` from the same paths.
#[allow(clippy::too_many_arguments)]
pub fn window_linearity(
    kernel: &KernelSpec,
    scheme: &SimScheme,
    b: &Ball,
    d: &Ball,
    t1: f64,
    w: f64,
    count: usize,
    eps: f64,
) -> Result<LinearityReport> {
    check_window(kernel, b, d, t1, t1 + 2.0 * w, eps)?;
    let est = simulate_window_exits(
        kernel,
        scheme,
        b,
        d,
        &[(t1, t1 + w), (t1, t1 + 2.0 * w)],
        count,
    )?;
    Ok(LinearityReport {
        narrow: est[0],
        wide: est[1],
        ratio: est[1].estimate / est[0].estimate,
    })
}

/// Test function of the Feynman–Kac functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FkTarget {
    /// `f ≡ 1`.
    One,
    /// `f = 1_B`.
    Ball(Ball),
    /// `f ≡ 1`, with paths killed on leaving `[-R, R]`.
    Box(f64),
}

/// `E^{x₀}[e^{-∫₀ᵗ V} f(X_t)]` at every time in `times`, from one batch of paths.
#[allow(clippy::too_many_arguments)]
pub fn fk_estimate(
    kernel: &KernelSpec,
    potential: &PotentialSpec,
    scheme: &SimScheme,
    x0: f64,
    times: &[f64],
    target: FkTarget,
    count: usize,
) -> Result<Vec<Estimate>> {
    check_levy(kernel)?;
    for &t in times {
        check_time(t)?;
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let engine = Engine::new(kernel, scheme, Some(potential));
    let dt = scheme.dt;
    let per_path = scheme.map_paths(count, |rng| {
        let mut vals = vec![0.0; times.len()];
        let mut next = 0;
        engine.run(x0, horizon, rng, |c, ev, _| {
            if let FkTarget::Box(r) = target {
                if c.x.abs() > r {
                    return false;
                }
            }
            // observation epochs fall on the step grid
            while next < order.len() && ev == Event::Move && c.t >= times[order[next]] - 1e-9 * dt {
                let f = match target {
                    FkTarget::Ball(b) => b.contains(c.x) as u8 as f64,
                    _ => 1.0,
                };
                vals[order[next]] = f * c.ln_weight.exp();
                next += 1;
            }
            next < order.len()
        });
        vals
    })?;
    Ok((0..times.len())
        .map(|k| {
            let column: Vec<f64> = per_path.iter().map(|v| v[k]).collect();
            mean_ci(&column, scheme.rng_seed)
        })
        .collect())
}

/// Decay rate from the slope of `-log E` against `t`.
pub fn decay_rate(times: &[f64], estimates: &[Estimate]) -> Result<f64> {
    if estimates.iter().any(|e| !(e.estimate > 0.0)) {
        return Err(Error::InsufficientData(
            "non-positive Feynman–Kac estimate".into(),
        ));
    }
    let y: Vec<f64> = estimates.iter().map(|e| -e.estimate.ln()).collect();
    Ok(least_squares_slope(times, &y))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogEstimate {
    pub ln_estimate: f64,
    /// Standard error of the estimate relative to its value.
    pub rel_std_err: f64,
    pub paths: usize,
    pub hits: usize,
    pub seed: u64,
}

/// `T_t^V(1_D)(x₀)` by importance sampling with extra jumps toward `D`,
/// returned in log form.
#[allow(clippy::too_many_arguments)]
pub fn fk_importance(
    kernel: &KernelSpec,
    potential: &PotentialSpec,
    scheme: &SimScheme,
    x0: f64,
    t: f64,
    d: &Ball,
    tilt_rate: f64,
    count: usize,
) -> Result<LogEstimate> {
    check_levy(kernel)?;
    check_time(t)?;
    let mut engine = Engine::new(kernel, scheme, Some(potential));
    engine.tilt = Some(Tilt {
        target: *d,
        rate: tilt_rate,
    });
    let ln_w = scheme.map_paths(count, |rng| {
        let end = engine.run(x0, t, rng, |_, _, _| true);
        if d.contains(end.x) {
            end.ln_weight
        } else {
            f64::NEG_INFINITY
        }
    })?;
    let hits = ln_w.iter().filter(|w| w.is_finite()).count();
    if hits == 0 {
        return Ok(LogEstimate {
            ln_estimate: f64::NEG_INFINITY,
            rel_std_err: f64::INFINITY,
            paths: count,
            hits,
            seed: scheme.rng_seed,
        });
    }
    let m = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s1: f64 = ln_w.iter().map(|w| (w - m).exp()).sum();
    let s2: f64 = ln_w.iter().map(|w| (2.0 * (w - m)).exp()).sum();
    let n = count as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0) / n;
    Ok(LogEstimate {
        ln_estimate: m + mean.ln(),
        rel_std_err: var.sqrt() / mean,
        paths: count,
        hits,
        seed: scheme.rng_seed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainPlan {
    pub target: f64,
    pub kappa: f64,
    pub eps: f64,
    pub n: usize,
    pub centers: Vec<f64>,
    /// Radius `2εκ` of the balls `D_i`.
    pub outer_radius: f64,
    /// Radius `εκ` of the balls `D̃_i`.
    pub inner_radius: f64,
    pub t0: f64,
}

impl ChainPlan {
    pub fn new(x: f64, kernel: &KernelSpec, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0 / 11.0) {
            return Err(Error::Parameter(format!(
                "chain epsilon must lie in (0, 1/11), got {eps}"
            )));
        }
        let kappa = kernel.kappa;
        let n = (x.abs() / ((1.0 - 4.0 * eps) * kappa)).floor() as usize + 1;
        let centers = (0..=n).map(|i| i as f64 * x / n as f64).collect();
        Ok(ChainPlan {
            target: x,
            kappa,
            eps,
            n,
            centers,
            outer_radius: 2.0 * eps * kappa,
            inner_radius: eps * kappa,
            t0: C0_EXIT * (eps * kappa).powf(exit_exponent(kernel)),
        })
    }

    /// Separation, reach and chain-length constraints of the construction.
    pub fn check_geometry(&self) -> Result<()> {
        let step = self.target.abs() / self.n as f64;
        let sep = step - 2.0 * self.outer_radius;
        if !(sep > 2.0 * self.eps * self.kappa) {
            return Err(Error::Precondition(format!(
                "consecutive balls {sep} apart, need more than 2*eps*kappa"
            )));
        }
        if step + 2.0 * self.outer_radius > self.kappa + 1e-12 {
            return Err(Error::Precondition(
                "consecutive balls farther apart than kappa".into(),
            ));
        }
        let x = self.target.abs();
        let lo = x / ((1.0 - 4.0 * self.eps) * self.kappa);
        let hi = x / ((1.0 - 5.0 * self.eps) * self.kappa);
        if !(lo <= self.n as f64 && (self.n as f64) < hi) {
            return Err(Error::Precondition(format!(
                "chain length {} outside [{lo}, {hi})",
                self.n
            )));
        }
        Ok(())
    }

    pub fn validity_threshold(&self) -> f64 {
        self.kappa * (1.0 - 5.0 * self.eps) * (1.0 - 4.0 * self.eps) / self.eps
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainBound {
    /// `-(1/((1-6ε)κ)) |x| log(1 + |x| + sup_{|z| ≤ |x| + 2εκ} V)`; the
    /// additive constant is not included.
    pub exponent: f64,
    /// `Σ_i log(C ε κ^{-α₁} t₀ / (n + t₀ sup_{D_{i-1}} V))`.
    pub ln_link_product: f64,
    pub link_constant: f64,
    pub n: usize,
    pub t0: f64,
}

pub fn chain_exponent(x: f64, kappa: f64, eps: f64, potential: &PotentialSpec) -> f64 {
    let sup = potential.sup_ball(x.abs() + 2.0 * eps * kappa);
    -x.abs() / ((1.0 - 6.0 * eps) * kappa) * (1.0 + x.abs() + sup).ln()
}

pub fn chain_lower_bound(
    plan: &ChainPlan,
    kernel: &KernelSpec,
    potential: &PotentialSpec,
    link_constant: f64,
) -> Result<ChainBound> {
    if !(plan.target.abs() > plan.validity_threshold()) {
        return Err(Error::Range(format!(
            "|x| = {} must exceed {}",
            plan.target.abs(),
            plan.validity_threshold()
        )));
    }
    plan.check_geometry()?;
    let base = link_constant * plan.eps * plan.kappa.powf(-kernel.alpha1) * plan.t0;
    let ln_link_product = plan.centers[..plan.n]
        .iter()
        .map(|c| {
            let sup = potential.sup_ball(c.abs() + plan.outer_radius);
            (base / (plan.n as f64 + plan.t0 * sup)).ln()
        })
        .sum();
    Ok(ChainBound {
        exponent: chain_exponent(plan.target, plan.kappa, plan.eps, potential),
        ln_link_product,
        link_constant,
        n: plan.n,
        t0: plan.t0,
    })
}

/// `C` with `P ≈ C ε κ^{-α₁} (t₂ - t₁)`.
pub fn link_constant(window: &Estimate, eps: f64, kernel: &KernelSpec, width: f64) -> f64 {
    window.estimate / (eps * kernel.kappa.powf(-kernel.alpha1) * width)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RrrRow {
    pub r: f64,
    pub partial_sum: f64,
    /// Lower bound on the omitted tail.
    pub tail_lower: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub const RRR_TERMS: u64 = 1_000_000;

/// `Σ_j e^{-r/j}/(j(j+1)) ≥ e^{-1}/(r+1)` from a partial sum plus the tail
/// bound `e^{-r/(J+1)}/(J+1)`.
pub fn rrr1_check(r_list: &[f64]) -> Result<Vec<RrrRow>> {
    r_list
        .iter()
        .map(|&r| {
            if !(r >= 0.0) {
                return Err(Error::Range(format!("r must be non-negative, got {r}")));
            }
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for j in 1..=RRR_TERMS {
                let jf = j as f64;
                let term = (-r / jf).exp() / (jf * (jf + 1.0));
                let y = term - comp;
                let s = sum + y;
                comp = (s - sum) - y;
                sum = s;
            }
            let jn = RRR_TERMS as f64 + 1.0;
            let tail_lower = (-r / jn).exp() / jn;
            let rhs = (-1.0f64).exp() / (r + 1.0);
            Ok(RrrRow {
                r,
                partial_sum: sum,
                tail_lower,
                rhs,
                holds: sum + tail_lower >= rhs,
            })
        })
        .collect()
}

/// Kolmogorov–Smirnov distance between observed counts and `Poisson(mean)`
/// and its asymptotic p-value (conservative for a discrete law).
pub fn poisson_ks(counts: &[u64], mean: f64) -> Result<(f64, f64)> {
    let pois = Poisson::new(mean).map_err(|e| Error::Parameter(format!("poisson mean: {e}")))?;
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut dmax = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let k = sorted[i];
        let before = i as f64 / n;
        while i < sorted.len() && sorted[i] == k {
            i += 1;
        }
        let after = i as f64 / n;
        let f = pois.cdf(k);
        let f_before = if k == 0 { 0.0 } else { pois.cdf(k - 1) };
        dmax = dmax.max((after - f).abs()).max((before - f_before).abs());
    }
    let lam = dmax * (n.sqrt() + 0.12 + 0.11 / n.sqrt());
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        p += 2.0 * if j % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * jf * jf * lam * lam).exp();
    }
    Ok((dmax, p.clamp(0.0, 1.0)))
}
