use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::quad;

const QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `c1 |z|^{-d-α}` inside `κ`, `c_tail |z|^{-d-α}` beyond.
    StableLike,
    /// `c1 |z|^{-d-α}` inside `κ`, zero beyond.
    Truncated,
    /// `c1 |z|^{-d-α}` inside `κ`, `c_tail e^{-|z|^γ}` beyond.
    Tempered,
    /// `c1 |x-y|^{-d-a(x,y)}` inside `κ` with an order oscillating in `x + y`.
    VariableOrder,
}

/// A symmetric jump kernel `J(x, y)`.
///
/// `gamma` is `None` for the untempered families (γ = ∞).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    pub d: usize,
    pub family: KernelFamily,
    pub alpha1: f64,
    pub alpha2: f64,
    pub kappa: f64,
    pub gamma: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c_tail: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernelSpec {
    #[serde(default)]
    d: Option<usize>,
    family: KernelFamily,
    alpha1: f64,
    #[serde(default)]
    alpha2: Option<f64>,
    #[serde(default)]
    kappa: Option<f64>,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    c1: Option<f64>,
    #[serde(default)]
    c2: Option<f64>,
    #[serde(default)]
    c_tail: Option<f64>,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        let spec = KernelSpec {
            d: raw.d.unwrap_or(1),
            family: raw.family,
            alpha1: raw.alpha1,
            alpha2: raw.alpha2.unwrap_or(raw.alpha1),
            kappa: raw.kappa.unwrap_or(1.0),
            gamma: raw.gamma,
            c1: raw.c1.unwrap_or(1.0),
            c2: raw.c2.unwrap_or(1.0),
            c_tail: raw.c_tail.unwrap_or(1.0),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Truncated moments of the kernel at radius `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
}

impl KernelSpec {
    fn base(family: KernelFamily, alpha: f64, kappa: f64) -> Self {
        KernelSpec {
            d: 1,
            family,
            alpha1: alpha,
            alpha2: alpha,
            kappa,
            gamma: None,
            c1: 1.0,
            c2: 1.0,
            c_tail: 1.0,
        }
    }

    pub fn truncated(alpha: f64, kappa: f64) -> Result<Self> {
        let k = Self::base(KernelFamily::Truncated, alpha, kappa);
        k.validate()?;
        Ok(k)
    }

    pub fn stable_like(alpha: f64, kappa: f64) -> Result<Self> {
        let k = Self::base(KernelFamily::StableLike, alpha, kappa);
        k.validate()?;
        Ok(k)
    }

    pub fn tempered(alpha: f64, kappa: f64, gamma: f64) -> Result<Self> {
        let mut k = Self::base(KernelFamily::Tempered, alpha, kappa);
        k.gamma = Some(gamma);
        k.validate()?;
        Ok(k)
    }

    pub fn variable_order(alpha1: f64, alpha2: f64, kappa: f64) -> Result<Self> {
        let mut k = Self::base(KernelFamily::VariableOrder, alpha1, kappa);
        k.alpha2 = alpha2;
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if !(self.alpha1 > 0.0 && self.alpha1 <= self.alpha2 && self.alpha2 < 2.0) {
            return bad("need 0 < alpha1 <= alpha2 < 2");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be positive and finite");
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c_tail >= 0.0) {
            return bad("need c1 > 0, c2 > 0, c_tail >= 0");
        }
        if self.c1 > self.c2 {
            return bad("need c1 <= c2 for the short-range sandwich");
        }
        match self.family {
            KernelFamily::Tempered => match self.gamma {
                Some(g) if g > 1.0 && g.is_finite() => {}
                _ => return bad("tempered family needs finite gamma > 1"),
            },
            _ => {
                if self.gamma.is_some() {
                    return bad("gamma is only meaningful for the tempered family");
                }
            }
        }
        if self.family == KernelFamily::VariableOrder {
            if self.d != 1 {
                return bad("variable_order is defined in one dimension only");
            }
            if self.kappa > 1.0 {
                return bad("variable_order needs kappa <= 1 for the short-range sandwich");
            }
        } else if self.alpha1 != self.alpha2 {
            return bad("translation-invariant families carry a single order");
        }
        Ok(())
    }

    pub fn is_translation_invariant(&self) -> bool {
        self.family != KernelFamily::VariableOrder
    }

    /// Local order `a(x, y)`; constant for the translation-invariant families.
    pub fn order(&self, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::VariableOrder => {
                self.alpha1 + (self.alpha2 - self.alpha1) * 0.5 * (1.0 + (x + y).sin())
            }
            _ => self.alpha1,
        }
    }

    /// `J(x, y)` without the diagonal check.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        self.jump_density(x, y - x)
    }

    /// `J(x, x + z)` with the jump passed directly, so that jumps below the
    /// resolution of `x` keep their length.
    pub fn jump_density(&self, x: f64, z: f64) -> f64 {
        let r = z.abs();
        let dd = self.d as f64;
        if r <= self.kappa {
            return self.c1 * r.powf(-dd - self.order(x, x + z));
        }
        match self.family {
            KernelFamily::Truncated | KernelFamily::VariableOrder => 0.0,
            KernelFamily::StableLike => self.c_tail * r.powf(-dd - self.alpha1),
            KernelFamily::Tempered => {
                self.c_tail * (-r.powf(self.gamma.unwrap_or(f64::INFINITY))).exp()
            }
        }
    }

    /// `J(x, y)`; the kernel is singular on the diagonal.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if x == y {
            return Err(Error::Domain("kernel is singular on the diagonal".into()));
        }
        Ok(self.density(x, y))
    }

    /// Lévy density `ρ(z)` of a translation-invariant family.
    pub fn rho(&self, z: f64) -> f64 {
        self.density(0.0, z)
    }

    /// `∫_v^∞ r^{d-1} e^{-r^γ} dr`.
    fn tempered_radial_tail(&self, v: f64) -> f64 {
        let g = self.gamma.expect("tempered gamma");
        let a = self.d as f64 / g;
        gamma(a) * gamma_ur(a, v.powf(g)) / g
    }

    /// Radial mass `∫_{u<|z|} ρ(z) dz / ω_d` of a translation-invariant family
    /// (the one-sided tail when `d = 1`).
    pub fn radial_tail(&self, u: f64) -> f64 {
        let a = self.alpha1;
        let near = if u < self.kappa {
            self.c1 * (u.powf(-a) - self.kappa.powf(-a)) / a
        } else {
            0.0
        };
        let v = u.max(self.kappa);
        let far = match self.family {
            KernelFamily::Truncated | KernelFamily::VariableOrder => 0.0,
            KernelFamily::StableLike => self.c_tail * v.powf(-a) / a,
            KernelFamily::Tempered => self.c_tail * self.tempered_radial_tail(v),
        };
        near + far
    }

    /// `∫_u^∞ J(x, x + σz) dz` in one dimension, `σ = ±1` the jump direction.
    pub fn directed_tail(&self, x: f64, u: f64, sign: f64) -> f64 {
        if self.is_translation_invariant() {
            return self.radial_tail(u);
        }
        if u >= self.kappa {
            return 0.0;
        }
        let p = 2.0 / (2.0 - self.alpha2);
        let ff = |z: f64| self.jump_density(x, sign * z);
        if u > 0.0 {
            quad::integrate(ff, u, self.kappa, QUAD_TOL)
        } else {
            quad::integrate_singular_left(ff, 0.0, self.kappa, p, QUAD_TOL)
        }
    }

    /// `∫_{|z|≤h} z² J(x, x+z) dz` in one dimension.
    pub fn near_second_moment(&self, x: f64, h: f64) -> f64 {
        let h_in = h.min(self.kappa);
        if self.is_translation_invariant() {
            let a = self.alpha1;
            return 2.0 * self.c1 * h_in.powf(2.0 - a) / (2.0 - a)
                + if h > self.kappa {
                    quad::integrate(|z| 2.0 * z * z * self.rho(z), self.kappa, h, QUAD_TOL)
                } else {
                    0.0
                };
        }
        let p = 2.0 / (2.0 - self.alpha2);
        let e = 2.0 - self.d as f64;
        // one power: z² and z^{-d-a} separately overflow near 0
        quad::integrate_singular_left(
            |z| self.c1 * (z.powf(e - self.order(x, x + z)) + z.powf(e - self.order(x, x - z))),
            0.0,
            h_in,
            p,
            QUAD_TOL,
        )
    }

    /// Principal-value drift `∫_0^h z (J(x,x+z) - J(x,x-z)) dz`; zero for the
    /// translation-invariant families.
    pub fn near_drift(&self, x: f64, h: f64) -> f64 {
        if self.is_translation_invariant() {
            return 0.0;
        }
        let p = 2.0 / (2.0 - self.alpha2);
        // z^{-a+} - z^{-a-} written through expm1 to avoid cancellation
        let spread = (self.alpha2 - self.alpha1) * (2.0 * x).cos();
        quad::integrate_singular_left(
            |z| {
                let am = self.order(x, x - z);
                let m = (-(spread * z.sin()) * z.ln()).exp_m1();
                if m == 0.0 {
                    return 0.0;
                }
                self.c1 * m.signum() * (m.abs().ln() - am * z.ln()).exp()
            },
            0.0,
            h.min(self.kappa),
            p,
            QUAD_TOL,
        )
    }

    fn check_radius(&self, s: f64) -> Result<()> {
        if !(s > 0.0) {
            return Err(Error::Range(format!(
                "moment radius must be positive, got {s}"
            )));
        }
        if s > self.kappa {
            return Err(Error::Range(format!(
                "moment radius {s} exceeds kappa {}",
                self.kappa
            )));
        }
        Ok(())
    }

    fn assemble_l(&self, l1: f64, l2: f64, s: f64) -> Moments {
        let dd = self.d as f64;
        let l = l1 + s.powf(dd) * (l2 / (s * s)).powf((dd + self.alpha1) / self.alpha1);
        Moments { l1, l2, l }
    }

    /// `L1(s)`, `L2(s)` and `L(s)`, in closed form where the family allows.
    pub fn moments(&self, s: f64) -> Result<Moments> {
        self.check_radius(s)?;
        if !self.is_translation_invariant() {
            return self.moments_quadrature(s);
        }
        let omega = super::sphere_area(self.d);
        let a = self.alpha1;
        let l1 = omega * self.radial_tail(s);
        let l2 = omega * self.c1 * s.powf(2.0 - a) / (2.0 - a);
        Ok(self.assemble_l(l1, l2, s))
    }

    /// The same moments computed by adaptive quadrature throughout.
    pub fn moments_quadrature(&self, s: f64) -> Result<Moments> {
        self.check_radius(s)?;
        if self.is_translation_invariant() {
            if self.d != 1 {
                return Err(Error::Unsupported(
                    "quadrature moments are one-dimensional".into(),
                ));
            }
            let near = quad::integrate(|z| self.rho(z), s, self.kappa, QUAD_TOL);
            let far = match self.family {
                KernelFamily::Truncated => 0.0,
                _ => quad::integrate_to_infinity(|z| self.rho(z), self.kappa, QUAD_TOL),
            };
            let p = 2.0 / (2.0 - self.alpha1);
            let l2 =
                2.0 * quad::integrate_singular_left(|z| z * z * self.rho(z), 0.0, s, p, QUAD_TOL);
            return Ok(self.assemble_l(2.0 * (near + far), l2, s));
        }
        // The local order is π-periodic in x; scan a period and refine.
        let l1_at = |x: f64| self.directed_tail(x, s, 1.0) + self.directed_tail(x, s, -1.0);
        let l2_at = |x: f64| self.near_second_moment(x, s);
        Ok(self.assemble_l(periodic_sup(l1_at), periodic_sup(l2_at), s))
    }

    /// Sandwich bounds `(c1 r^{-d-α1}, c2 r^{-d-α2})` at distance `r ≤ κ`.
    pub fn sandwich(&self, r: f64) -> (f64, f64) {
        let dd = self.d as f64;
        (
            self.c1 * r.powf(-dd - self.alpha1),
            self.c2 * r.powf(-dd - self.alpha2),
        )
    }
}

fn periodic_sup<F: Fn(f64) -> f64>(f: F) -> f64 {
    let n = 64;
    let period = std::f64::consts::PI;
    let step = period / n as f64;
    let (mut best_x, mut best) = (0.0, f64::NEG_INFINITY);
    for i in 0..n {
        let x = i as f64 * step;
        let v = f(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    // Golden-section refinement on the bracketing cell pair.
    let (mut a, mut b) = (best_x - step, best_x + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-9 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best.max(fc).max(fd)
}
