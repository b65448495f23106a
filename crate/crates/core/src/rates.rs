//! Rate-function calculus for intrinsic ultracontractivity.
//!
//! The rate functions grow like `exp(C R log R)` in the radius they are
//! evaluated at, so everything here is carried in the log domain: methods
//! prefixed `ln_` return natural logarithms and the plain accessors
//! exponentiate (overflowing to `+∞` when the value is not representable).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KernelSpec, PotentialShape, PotentialSpec};
use crate::quad;

pub const INVERSE_FLOOR: f64 = 1e-12;
pub const INVERSE_CEIL: f64 = 1e12;
/// Safety factor applied to empirically calibrated constants.
pub const CALIBRATION_SAFETY: f64 = 2.0;
const N0_SEARCH_LIMIT: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// `inf{s > 0 : f(s) ≥ r}` (increasing) or `inf{s > 0 : f(s) ≤ r}`
/// (decreasing), by geometric bracketing and bisection on
/// `[1e-12, 1e12]`. When the condition already holds at the floor the floor
/// is returned.
pub fn generalized_inverse<F: Fn(f64) -> f64>(f: F, direction: Direction, r: f64) -> Result<f64> {
    let hit = |s: f64| {
        let v = f(s);
        match direction {
            Direction::Increasing => v >= r,
            Direction::Decreasing => v <= r,
        }
    };
    let (mut lo, mut hi);
    if hit(1.0) {
        hi = 1.0;
        lo = 0.5;
        while hit(lo) {
            hi = lo;
            if lo <= INVERSE_FLOOR {
                return Ok(INVERSE_FLOOR);
            }
            lo = (lo * 0.5).max(INVERSE_FLOOR);
        }
    } else {
        lo = 1.0;
        hi = 2.0;
        while !hit(hi) {
            lo = hi;
            if hi >= INVERSE_CEIL {
                return Err(Error::UnboundedInverse { level: r });
            }
            hi = (hi * 2.0).min(INVERSE_CEIL);
        }
    }
    while hi - lo > 1e-13 * hi {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if hit(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `φ(x) = exp(-|x| log(1 + |x| + sup_{|z| ≤ |x| + 2εκ} V(z)) / (κ(1 - 6ε)))`.
#[derive(Clone, Debug)]
pub struct ComparisonFunction {
    pub kappa: f64,
    pub epsilon: f64,
    pub potential: PotentialSpec,
}

impl ComparisonFunction {
    pub fn new(kappa: f64, epsilon: f64, potential: PotentialSpec) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0 / 11.0) {
            return Err(Error::Parameter(format!(
                "chain parameter must lie in (0, 1/11), got {epsilon}"
            )));
        }
        if !(kappa > 0.0) {
            return Err(Error::Parameter("kappa must be positive".into()));
        }
        Ok(ComparisonFunction {
            kappa,
            epsilon,
            potential,
        })
    }

    pub fn ln_eval(&self, x: f64) -> f64 {
        let r = x.abs();
        let sup = self.potential.sup_ball(r + 2.0 * self.epsilon * self.kappa);
        -r * (1.0 + r + sup).ln() / (self.kappa * (1.0 - 6.0 * self.epsilon))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.ln_eval(x).exp()
    }
}

/// Constants entering the rate functions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConstants {
    /// `C0` with `φ ≤ C0 φ₁`.
    pub c0_envelope: f64,
    /// `c(κ)` of the local super Poincaré inequality.
    pub c_kappa: f64,
    /// `c₀(κ)` of the Sobolev inequality.
    pub c0_sobolev: f64,
    pub delta: f64,
    /// `c₁ ≈ ‖φ₁‖²_∞`.
    pub c1_slicing: f64,
}

impl Default for RateConstants {
    fn default() -> Self {
        RateConstants {
            c0_envelope: 1.0,
            c_kappa: 1.0,
            c0_sobolev: 1.0,
            delta: std::f64::consts::E,
            c1_slicing: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RateBundle {
    pub comparison: ComparisonFunction,
    pub constants: RateConstants,
    pub d: usize,
    pub alpha1: f64,
    /// `2d/(d - α₁)` when `d > α₁`.
    pub sobolev_p: Option<f64>,
    pub r0: f64,
    pub s0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummabilityReport {
    pub converges: bool,
    pub first_index: u64,
    pub terms: usize,
    pub ln_sum: f64,
    pub ln_last_term: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlicingSchedule {
    pub n0: u64,
    pub n_floor: f64,
    pub s_n: Vec<(u64, f64)>,
    pub ln_beta_tilde: f64,
    pub beta_tilde: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub s: f64,
    pub ln_beta: f64,
    pub ln_gamma: f64,
    pub ln_beta_hat: f64,
    pub ln_beta_tilde: f64,
}

impl RateBundle {
    pub fn new(
        kernel: &KernelSpec,
        potential: PotentialSpec,
        epsilon: f64,
        constants: RateConstants,
    ) -> Result<Self> {
        let comparison = ComparisonFunction::new(kernel.kappa, epsilon, potential)?;
        if !(constants.delta > 1.0) {
            return Err(Error::Parameter("slicing base delta must exceed 1".into()));
        }
        for (name, v) in [
            ("C0", constants.c0_envelope),
            ("c(kappa)", constants.c_kappa),
            ("c0(kappa)", constants.c0_sobolev),
            ("c1", constants.c1_slicing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "constant {name} must be positive and finite"
                )));
            }
        }
        let d = kernel.d;
        let sobolev_p = if (d as f64) > kernel.alpha1 {
            Some(2.0 * d as f64 / (d as f64 - kernel.alpha1))
        } else {
            None
        };
        let r0 = kernel.kappa;
        let phi_r0 = comparison.potential.phi(r0)?;
        if !phi_r0.is_finite() {
            return Err(Error::Inapplicable(
                "Φ is infinite at r0: no level above K".into(),
            ));
        }
        Ok(RateBundle {
            comparison,
            constants,
            d,
            alpha1: kernel.alpha1,
            sobolev_p,
            r0,
            s0: 2.0 / phi_r0,
        })
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.comparison.potential
    }

    fn phi(&self, r: f64) -> f64 {
        self.potential().phi(r).unwrap_or(f64::INFINITY)
    }

    /// `Φ⁻¹(y)` clamped below at `r0`.
    pub fn phi_inverse(&self, y: f64) -> Result<f64> {
        match generalized_inverse(|r| self.phi(r), Direction::Increasing, y) {
            Ok(r) => Ok(r.max(self.r0)),
            Err(Error::UnboundedInverse { .. }) => Err(Error::Inapplicable(format!(
                "Φ never reaches {y}: assumption on Φ violated"
            ))),
            Err(e) => Err(e),
        }
    }

    /// `log α(r, s)`.
    pub fn ln_alpha(&self, r: f64, s: f64) -> Result<f64> {
        if r < self.r0 * (1.0 - 1e-12) {
            return Err(Error::Range(format!("alpha needs r >= kappa, got {r}")));
        }
        if !(s > 0.0) {
            return Err(Error::Range("alpha needs s > 0".into()));
        }
        let ln_inf_phi2 = 2.0 * self.comparison.ln_eval(r + self.comparison.kappa);
        let t = -(self.d as f64 / self.alpha1) * s.ln();
        Ok(self.constants.c_kappa.ln() - ln_inf_phi2 + softplus(t))
    }

    pub fn alpha(&self, r: f64, s: f64) -> Result<f64> {
        Ok(self.ln_alpha(r, s)?.exp())
    }

    fn frozen(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Range(format!(
                "rate argument must be positive, got {s}"
            )));
        }
        Ok(s.min(self.s0))
    }

    /// `log β(s)`, `β(s) = C0² α(Φ⁻¹(2/s), s/2)`.
    pub fn ln_beta(&self, s: f64) -> Result<f64> {
        let s = self.frozen(s)?;
        let r = self.phi_inverse(2.0 / s)?;
        Ok(2.0 * self.constants.c0_envelope.ln() + self.ln_alpha(r, 0.5 * s)?)
    }

    pub fn beta(&self, s: f64) -> Result<f64> {
        Ok(self.ln_beta(s)?.exp())
    }

    /// `log γ(s)`, `γ(s) = Θ(Φ⁻¹(2/s))`.
    pub fn ln_gamma(&self, s: f64) -> Result<f64> {
        let s = self.frozen(s)?;
        let r = self.phi_inverse(2.0 / s)?;
        self.potential().ln_theta(r)
    }

    pub fn gamma(&self, s: f64) -> Result<f64> {
        Ok(self.ln_gamma(s)?.exp())
    }

    fn sobolev_exponent(&self) -> Result<f64> {
        let p = self
            .sobolev_p
            .ok_or_else(|| Error::Inapplicable("Sobolev branch needs d > alpha1".into()))?;
        Ok((p - 2.0) / p)
    }

    /// `Ψ(R) = 1/Φ(R) + c₀ Θ(R)^{(p-2)/p}`.
    pub fn psi(&self, r: f64) -> Result<f64> {
        let e = self.sobolev_exponent()?;
        let phi = self.potential().phi(r)?;
        let theta = self.potential().theta(r)?;
        Ok(1.0 / phi + self.constants.c0_sobolev * theta.powf(e))
    }

    /// `log β̂(s)`, `β̂(s) = 2 C0² α(Ψ⁻¹(s/4), s/4)`.
    pub fn ln_beta_hat(&self, s: f64) -> Result<f64> {
        let s = self.frozen(s)?;
        self.sobolev_exponent()?;
        let r = match generalized_inverse(
            |r| self.psi(r).unwrap_or(f64::INFINITY),
            Direction::Decreasing,
            0.25 * s,
        ) {
            Ok(r) => r.max(self.r0),
            Err(Error::UnboundedInverse { .. }) => {
                return Err(Error::Inapplicable(format!(
                    "Ψ never falls to {}",
                    0.25 * s
                )))
            }
            Err(e) => return Err(e),
        };
        Ok(std::f64::consts::LN_2
            + 2.0 * self.constants.c0_envelope.ln()
            + self.ln_alpha(r, 0.25 * s)?)
    }

    pub fn beta_hat(&self, s: f64) -> Result<f64> {
        Ok(self.ln_beta_hat(s)?.exp())
    }

    /// `β⁻¹` evaluated at `exp(ln_level)`.
    pub fn beta_inverse_ln(&self, ln_level: f64) -> Result<f64> {
        generalized_inverse(
            |s| self.ln_beta(s).unwrap_or(f64::INFINITY),
            Direction::Decreasing,
            ln_level,
        )
    }

    /// `γ⁻¹` evaluated at `exp(ln_level)`.
    pub fn gamma_inverse_ln(&self, ln_level: f64) -> Result<f64> {
        generalized_inverse(
            |s| self.ln_gamma(s).unwrap_or(f64::NEG_INFINITY),
            Direction::Increasing,
            ln_level,
        )
    }

    fn ln_delta(&self) -> f64 {
        self.constants.delta.ln()
    }

    /// `log(c₁ δⁿ / 2)`.
    fn ln_slice_level(&self, n: u64) -> f64 {
        (0.5 * self.constants.c1_slicing).ln() + n as f64 * self.ln_delta()
    }

    /// `s_n = β⁻¹(c₁ δⁿ / 2)`; `None` while the level is below the frozen minimum of `β`.
    pub fn slice_point(&self, n: u64) -> Result<Option<f64>> {
        match self.beta_inverse_ln(self.ln_slice_level(n)) {
            Ok(s) => Ok(Some(s)),
            Err(Error::UnboundedInverse { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Partial-sum test of `Σ γ(s_n) δⁿ < ∞`, in the log domain.
    ///
    /// Converged once ten consecutive terms fall below `1e-12` of the running
    /// sum; divergent once the sum exceeds `e^{700}` or `max_terms` are used.
    pub fn summability(&self, max_terms: usize) -> Result<SummabilityReport> {
        let ln_b0 = self.ln_beta(self.s0)?;
        let first = ((ln_b0 - (0.5 * self.constants.c1_slicing).ln()) / self.ln_delta())
            .ceil()
            .max(1.0) as u64;
        let mut ln_sum = f64::NEG_INFINITY;
        let mut small_run = 0;
        let mut n = first;
        let mut last = f64::NEG_INFINITY;
        let mut count = 0;
        while count < max_terms {
            let Some(s) = self.slice_point(n)? else {
                n += 1;
                continue;
            };
            last = self.ln_gamma(s)? + n as f64 * self.ln_delta();
            ln_sum = log_add(ln_sum, last);
            count += 1;
            if ln_sum > 700.0 {
                return Ok(SummabilityReport {
                    converges: false,
                    first_index: first,
                    terms: count,
                    ln_sum,
                    ln_last_term: last,
                });
            }
            if last == f64::NEG_INFINITY || last - ln_sum < (1e-12f64).ln() {
                small_run += 1;
                if small_run >= 10 {
                    return Ok(SummabilityReport {
                        converges: true,
                        first_index: first,
                        terms: count,
                        ln_sum,
                        ln_last_term: last,
                    });
                }
            } else {
                small_run = 0;
            }
            n += 1;
        }
        Ok(SummabilityReport {
            converges: false,
            first_index: first,
            terms: count,
            ln_sum,
            ln_last_term: last,
        })
    }

    /// `n₀(s)`, the slice points and `β̃(s)`.
    pub fn slicing_schedule(&self, s: f64) -> Result<SlicingSchedule> {
        let s = self.frozen(s)?;
        let ln_g0 = self.ln_gamma(self.s0)?;
        if ln_g0 == f64::NEG_INFINITY {
            return Err(Error::Inapplicable(
                "γ vanishes identically; the plain super Poincaré branch applies".into(),
            ));
        }
        let sum = self.summability(200_000)?;
        if !sum.converges {
            return Err(Error::Inapplicable(format!(
                "Σ γ(s_n) δ^n fails to converge (log partial sum {:.3e} after {} terms)",
                sum.ln_sum, sum.terms
            )));
        }
        let ld = self.ln_delta();
        let delta = self.constants.delta;
        let ln_b0 = self.ln_beta(self.s0)?;
        let floor_a = (std::f64::consts::LN_2 + ln_b0 - self.constants.c1_slicing.ln()) / ld;
        let floor_b = -((4.0 * delta).ln() + ln_g0) / ld;
        let n_floor = floor_a.max(floor_b);
        let start = n_floor.ceil().max(0.0) as u64;
        let sd = delta.sqrt();
        let factor = 4.0 * delta * (sd + 1.0) / (sd - 1.0);
        let holds = |n: u64| -> Result<bool> {
            let Some(sn) = self.slice_point(n)? else {
                return Ok(false);
            };
            let g = match self.gamma_inverse_ln(-(4.0f64).ln() - (n + 1) as f64 * ld) {
                Ok(v) => v,
                Err(Error::UnboundedInverse { .. }) => return Ok(false),
                Err(e) => return Err(e),
            };
            Ok(factor * sn + 2.0 * g <= s)
        };
        // The left side decreases in n, so gallop then bisect.
        let mut lo = start;
        let n0 = if holds(lo)? {
            lo
        } else {
            let mut step = 1u64;
            let mut hi = lo + step;
            while !holds(hi)? {
                lo = hi;
                step *= 2;
                hi = lo + step;
                if hi - start > N0_SEARCH_LIMIT {
                    return Err(Error::Solver(format!(
                        "n0 search exceeded {N0_SEARCH_LIMIT} steps"
                    )));
                }
            }
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if holds(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let mut s_n = Vec::new();
        for n in start..=n0.min(start + 10_000) {
            if let Some(v) = self.slice_point(n)? {
                s_n.push((n, v));
            }
        }
        let arg = match self.gamma_inverse_ln(-(4.0f64).ln() - (n0 + 1) as f64 * ld) {
            Ok(v) => v,
            Err(_) => {
                return Err(Error::Inapplicable(
                    "γ⁻¹ undefined at the slicing level".into(),
                ))
            }
        };
        let ln_beta_tilde = std::f64::consts::LN_2 + self.ln_beta(arg)?;
        Ok(SlicingSchedule {
            n0,
            n_floor,
            s_n,
            ln_beta_tilde,
            beta_tilde: ln_beta_tilde.exp(),
        })
    }

    /// Rate table on the given `s` values; entries that do not apply are NaN.
    pub fn tabulate(&self, s_values: &[f64]) -> Vec<RateRow> {
        s_values
            .iter()
            .map(|&s| RateRow {
                s,
                ln_beta: self.ln_beta(s).unwrap_or(f64::NAN),
                ln_gamma: self.ln_gamma(s).unwrap_or(f64::NAN),
                ln_beta_hat: self.ln_beta_hat(s).unwrap_or(f64::NAN),
                ln_beta_tilde: self
                    .slicing_schedule(s)
                    .map(|x| x.ln_beta_tilde)
                    .unwrap_or(f64::NAN),
            })
            .collect()
    }

    /// Both sides of the mixed super Poincaré inequality for a grid function.
    ///
    /// `form` returns `D^V(f, f)`; `p = None` stands for `p = ∞`.
    pub fn mixed_sp_witness(
        &self,
        form: &dyn Fn(&[f64]) -> f64,
        f: &[f64],
        phi1: &[f64],
        h: f64,
        s: f64,
        p: Option<f64>,
    ) -> Result<(f64, f64)> {
        if f.len() != phi1.len() {
            return Err(Error::Parameter("f and phi1 lengths differ".into()));
        }
        let lhs: f64 = f.iter().map(|v| v * v).sum::<f64>() * h;
        let se = s.min(self.s0);
        let weighted: f64 = f.iter().zip(phi1).map(|(a, b)| a.abs() * b).sum::<f64>() * h;
        let beta_term = if weighted == 0.0 {
            0.0
        } else {
            self.beta(se)? * weighted * weighted
        };
        let (norm_p, e) = match p {
            None => (f.iter().fold(0.0f64, |m, v| m.max(v.abs())), 1.0),
            Some(p) if p > 2.0 => (
                (f.iter().map(|v| v.abs().powf(p)).sum::<f64>() * h).powf(1.0 / p),
                (p - 2.0) / p,
            ),
            Some(p) => return Err(Error::Parameter(format!("need p > 2, got {p}"))),
        };
        let g = self.gamma(se)?;
        let gamma_term = if norm_p == 0.0 || g == 0.0 {
            0.0
        } else {
            g.powf(e) * norm_p * norm_p
        };
        let rhs = s * form(f) + beta_term + gamma_term;
        Ok((lhs, rhs))
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `2 · max` of the observed ratios; the frozen calibrated constant.
pub fn calibrate<I: IntoIterator<Item = f64>>(ratios: I) -> f64 {
    CALIBRATION_SAFETY
        * ratios
            .into_iter()
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converges,
    Diverges,
    Undecided,
}

/// Closed-form verdict for `∫^∞ β⁻¹(s)/s ds` when `V` is power-log:
/// finite iff `θ₁ > 1`, or `θ₁ = 1` and `θ₂ > 2`.
pub fn closed_form_verdict(potential: &PotentialSpec) -> Option<Verdict> {
    match potential.shape {
        PotentialShape::PowerLog { theta1, theta2, .. } => Some(power_log_verdict(theta1, theta2)),
        PotentialShape::Power { theta, .. } => Some(power_log_verdict(theta, 0.0)),
        _ => None,
    }
}

pub fn power_log_verdict(theta1: f64, theta2: f64) -> Verdict {
    if theta1 > 1.0 || (theta1 == 1.0 && theta2 > 2.0) {
        Verdict::Converges
    } else {
        Verdict::Diverges
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegralTestReport {
    pub verdict: Verdict,
    /// Block boundaries in `w = log log s`.
    pub w: Vec<f64>,
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Fitted `p` in `increment ≈ C w^{-p}` over the tail blocks.
    pub power: f64,
    /// Extrapolated tail beyond the last block (finite only when converging).
    pub extrapolated_tail: f64,
}

/// Numeric test of `∫_{t₀}^∞ g(s)/s ds < ∞` for a non-increasing `g = β⁻¹`.
///
/// The integrand decays at double-logarithmic speed, so the integral is taken
/// in `w = log log s` over unit blocks from `w = 3` to `w = 10` (that is,
/// `s` up to `exp(e^{10})`, with `g` supplied through `ln s`). Increments
/// decaying geometrically (ratios at most 0.85 and not rising) mean
/// convergence, non-decreasing increments mean divergence, and in between the tail exponent `p` of `increment ≈ C w^{-p}`
/// decides (`p ≥ 1.5` converges, `p < 1.25` diverges, otherwise undecided).
/// A fitted `p ≥ 1.5` whose block-to-block exponents keep falling and end
/// below 2 is left undecided.
pub fn integral_test_ln<G: Fn(f64) -> Option<f64>>(g_of_ln_s: G, t0: f64) -> IntegralTestReport {
    let w_start = t0.max(std::f64::consts::E).ln().ln().max(3.0);
    let blocks = 7usize;
    let h = |w: f64| -> f64 {
        let u = w.exp();
        match g_of_ln_s(u) {
            Some(g) if g.is_finite() => g * u,
            _ => f64::NAN,
        }
    };
    let w: Vec<f64> = (0..=blocks).map(|k| w_start + k as f64).collect();
    let increments: Vec<f64> = w
        .windows(2)
        .map(|ab| quad::integrate(h, ab[0], ab[1], 1e-9))
        .collect();
    let ratios: Vec<f64> = increments.windows(2).map(|x| x[1] / x[0]).collect();
    let undecided = |power| IntegralTestReport {
        verdict: Verdict::Undecided,
        w: w.clone(),
        increments: increments.clone(),
        ratios: ratios.clone(),
        power,
        extrapolated_tail: f64::NAN,
    };
    if increments.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return undecided(f64::NAN);
    }
    let tail = &ratios[ratios.len() - 3..];
    if tail.iter().all(|&q| q >= 1.0 - 1e-9) {
        return IntegralTestReport {
            verdict: Verdict::Diverges,
            power: f64::NAN,
            extrapolated_tail: f64::INFINITY,
            ..undecided(f64::NAN)
        };
    }
    // Least-squares slope of log increment against log of block midpoint.
    let k0 = increments.len() - 4;
    let pts: Vec<(f64, f64)> = (k0..increments.len())
        .map(|k| ((0.5 * (w[k] + w[k + 1])).ln(), increments[k].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let power = -sxy / sxx;
    let last = *increments.last().unwrap();
    let q = *ratios.last().unwrap();
    if tail.iter().all(|&q| q <= 0.85) && tail[2] <= tail[0] + 1e-9 {
        return IntegralTestReport {
            verdict: Verdict::Converges,
            power,
            extrapolated_tail: last * q / (1.0 - q),
            ..undecided(power)
        };
    }
    // local exponents between consecutive tail blocks; a downward drift
    // means the asymptotic exponent sits below the fitted one
    let local: Vec<f64> = (k0..increments.len() - 1)
        .map(|k| {
            let (m0, m1) = (0.5 * (w[k] + w[k + 1]), 0.5 * (w[k + 1] + w[k + 2]));
            (increments[k] / increments[k + 1]).ln() / (m1 / m0).ln()
        })
        .collect();
    let drifting = local.windows(2).all(|p| p[1] < p[0]);
    if power >= 1.5 && drifting && *local.last().unwrap() < 2.0 {
        return undecided(power);
    }
    if power >= 1.5 {
        let w_end = *w.last().unwrap();
        let c = last * (w_end - 0.5).powf(power);
        IntegralTestReport {
            verdict: Verdict::Converges,
            power,
            extrapolated_tail: c * w_end.powf(1.0 - power) / (power - 1.0),
            ..undecided(power)
        }
    } else if power < 1.25 {
        IntegralTestReport {
            verdict: Verdict::Diverges,
            power,
            extrapolated_tail: f64::INFINITY,
            ..undecided(power)
        }
    } else {
        undecided(power)
    }
}

/// Integral test applied to the inverse of `β` held by a bundle.
pub fn iuc_integral_test(bundle: &RateBundle, t0: f64) -> IntegralTestReport {
    integral_test_ln(|ln_s| bundle.beta_inverse_ln(ln_s).ok(), t0)
}
