use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

/// Radius law of the valley balls `B(x_n, r_n)`, `x_n = n^{k0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusLaw {
    /// `r_n = n^{-k0/α + 1}`.
    Power { alpha: f64 },
    /// `r_n = ½ exp(-c6 x_n^{η1} log^{η2}(1 + x_n))`.
    ExpTail { c6: f64, eta1: f64, eta2: f64 },
    /// Every ball has the same radius.
    Constant { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValleyGeometry {
    pub k0: f64,
    pub radius_law: RadiusLaw,
    /// Number of balls; `None` for the infinite family.
    #[serde(default)]
    pub count: Option<u64>,
    pub off_valley: Box<PotentialShape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialShape {
    /// `c |x|^θ`.
    Power {
        #[serde(default = "one")]
        c: f64,
        theta: f64,
    },
    /// `c |x|^{θ1} log^{θ2}(1 + |x|)`.
    PowerLog {
        #[serde(default = "one")]
        c: f64,
        theta1: f64,
        theta2: f64,
    },
    /// `exp(c (1 + |x|^θ))`.
    ExpPower {
        #[serde(default = "one")]
        c: f64,
        theta: f64,
    },
    /// `1` on the ball union `A`, the off-valley shape elsewhere.
    Valley(ValleyGeometry),
}

/// A potential `V = shape + offset` with the level `K` used by `Φ_K`, `Θ_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotentialSpec")]
pub struct PotentialSpec {
    pub shape: PotentialShape,
    pub threshold: f64,
    pub offset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotentialSpec {
    shape: PotentialShape,
    #[serde(default)]
    threshold: Option<f64>,
    #[serde(default)]
    offset: Option<f64>,
}

impl TryFrom<RawPotentialSpec> for PotentialSpec {
    type Error = Error;

    fn try_from(raw: RawPotentialSpec) -> Result<Self> {
        let mut p = PotentialSpec::new(raw.shape)?.with_offset(raw.offset.unwrap_or(0.0))?;
        if let Some(k) = raw.threshold {
            p = p.with_threshold(k)?;
        }
        Ok(p)
    }
}

impl ValleyGeometry {
    pub fn center(&self, n: u64) -> f64 {
        (n as f64).powf(self.k0)
    }

    pub fn ln_radius(&self, n: u64) -> f64 {
        match self.radius_law {
            RadiusLaw::Power { alpha } => (-self.k0 / alpha + 1.0) * (n as f64).ln(),
            RadiusLaw::ExpTail { c6, eta1, eta2 } => {
                let x = self.center(n);
                -std::f64::consts::LN_2 - c6 * x.powf(eta1) * x.ln_1p().powf(eta2)
            }
            RadiusLaw::Constant { radius } => radius.ln(),
        }
    }

    pub fn radius(&self, n: u64) -> f64 {
        self.ln_radius(n).exp()
    }

    fn last(&self) -> u64 {
        self.count.unwrap_or(u64::MAX)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if !(self.k0 >= 1.0) {
            return bad("valley center exponent k0 must be at least 1");
        }
        if self.count == Some(0) {
            return bad("valley needs at least one ball");
        }
        if matches!(*self.off_valley, PotentialShape::Valley(_)) {
            return bad("off-valley potential cannot itself be a valley");
        }
        self.off_valley.validate()?;
        match self.radius_law {
            RadiusLaw::Power { alpha } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return bad("radius-law order must lie in (0, 2)");
                }
                if self.count.is_none() && self.k0 / alpha - 1.0 <= 1.0 {
                    return bad("infinite valley with k0/alpha <= 2 has infinite measure");
                }
                if self.k0 / alpha <= 1.0 {
                    return bad("radius law must be decreasing (k0 > alpha)");
                }
            }
            RadiusLaw::ExpTail { c6, eta1, eta2 } => {
                if !(c6 > 0.0 && eta1 > 0.0 && eta2 >= 0.0) {
                    return bad("exp-tail radius law needs c6 > 0, eta1 > 0, eta2 >= 0");
                }
            }
            RadiusLaw::Constant { radius } => {
                if !(radius > 0.0) {
                    return bad("constant valley radius must be positive");
                }
                if self.count.is_none() {
                    return bad("infinitely many equal balls have infinite measure");
                }
            }
        }
        Ok(())
    }

    /// Whether `x` lies in one of the balls.
    pub fn contains(&self, x: f64) -> bool {
        if x < 0.0 && self.center(1) - self.radius(1) > 0.0 {
            return false;
        }
        let rmax = self.radius(1);
        let lo = (x - rmax).max(1.0).powf(1.0 / self.k0).floor().max(1.0) as u64;
        let hi_x = x + rmax;
        if hi_x < 1.0 {
            return false;
        }
        let hi = (hi_x.powf(1.0 / self.k0).ceil() as u64).min(self.last());
        (lo..=hi).any(|n| (x - self.center(n)).abs() <= self.radius(n))
    }

    /// `Σ_{n=a}^{b} 2 r_n` for balls that are pairwise disjoint and far out.
    fn tail_sum(&self, a: u64, b: u64) -> f64 {
        if a > b {
            return 0.0;
        }
        match self.radius_law {
            RadiusLaw::Power { alpha } => {
                let q = self.k0 / alpha - 1.0;
                let upper = if b == u64::MAX {
                    0.0
                } else {
                    zeta_tail(q, b as f64 + 1.0)
                };
                2.0 * (zeta_tail(q, a as f64) - upper)
            }
            _ => {
                let mut acc = 0.0;
                let mut n = a;
                loop {
                    let t = 2.0 * self.radius(n);
                    acc += t;
                    if n == b || t == 0.0 || (acc > 0.0 && t < 1e-18 * acc) {
                        break;
                    }
                    n += 1;
                }
                acc
            }
        }
    }

    /// `|{|x| ≥ R} ∩ (A ∪ [-l, l])|`, with the central interval optional.
    fn measure_beyond(&self, r: f64, central: Option<f64>) -> f64 {
        let mut pieces: Vec<(f64, f64)> = Vec::new();
        if let Some(l) = central {
            pieces.push((0.0, l));
        }
        let mut reach = central.unwrap_or(f64::NEG_INFINITY).max(r);
        let last = self.last();
        let mut n = 1u64;
        loop {
            let (c, rad) = (self.center(n), self.radius(n));
            pieces.push((c, rad));
            reach = reach.max(c + rad);
            if n == last {
                return measure_outside(&mut pieces, r);
            }
            let (c1, r1) = (self.center(n + 1), self.radius(n + 1));
            if n >= 64 && c1 - r1 > reach && c1 - c > rad + r1 {
                return measure_outside(&mut pieces, r) + self.tail_sum(n + 1, last);
            }
            n += 1;
        }
    }

    /// Log of the valley tail mass beyond `R` counted by centers, for radii
    /// far below the resolution of the centers.
    fn ln_tail_by_centers(&self, r: f64) -> f64 {
        let mut n = (r.max(1.0).powf(1.0 / self.k0).floor() as u64).max(1);
        while self.center(n) < r {
            n += 1;
        }
        let last = self.last();
        let mut terms = Vec::new();
        let mut top = f64::NEG_INFINITY;
        loop {
            let t = std::f64::consts::LN_2 + self.ln_radius(n);
            top = top.max(t);
            terms.push(t);
            if n == last || t < top - 60.0 || terms.len() > 1_000_000 {
                break;
            }
            n += 1;
        }
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }
}

/// `Σ_{n≥a} n^{-q}` by Euler–Maclaurin, accurate for `a ≥ 64`.
fn zeta_tail(q: f64, a: f64) -> f64 {
    let f = a.powf(-q);
    let d1 = -q * a.powf(-q - 1.0);
    let d3 = -q * (q + 1.0) * (q + 2.0) * a.powf(-q - 3.0);
    let d5 = -q * (q + 1.0) * (q + 2.0) * (q + 3.0) * (q + 4.0) * a.powf(-q - 5.0);
    a.powf(1.0 - q) / (q - 1.0) + 0.5 * f - d1 / 12.0 + d3 / 720.0 - d5 / 30240.0
}

/// Measure of the union of `[c - ρ, c + ρ]` over `(c, ρ)` intersected with
/// `{|x| ≥ r}`. An isolated piece lying wholly on one side contributes `2ρ`
/// directly, so tiny radii far out keep full relative precision.
fn measure_outside(pieces: &mut [(f64, f64)], r: f64) -> f64 {
    pieces.sort_by(|a, b| (a.0 - a.1).total_cmp(&(b.0 - b.1)));
    let mut total = 0.0;
    let mut i = 0;
    while i < pieces.len() {
        let (c, rad) = pieces[i];
        let (lo, mut hi) = (c - rad, c + rad);
        let mut j = i + 1;
        while j < pieces.len() && pieces[j].0 - pieces[j].1 <= hi {
            hi = hi.max(pieces[j].0 + pieces[j].1);
            j += 1;
        }
        if j == i + 1 && (lo >= r || hi <= -r) {
            total += 2.0 * rad;
        } else {
            total += (hi.min(-r) - lo).max(0.0) + (hi - lo.max(r)).max(0.0);
        }
        i = j;
    }
    total
}

impl PotentialShape {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        match *self {
            PotentialShape::Power { c, theta } => {
                if !(c >= 0.0 && theta > 0.0) {
                    return bad("power potential needs c >= 0, theta > 0");
                }
            }
            PotentialShape::PowerLog { c, theta1, theta2 } => {
                if !(c >= 0.0 && theta1 > 0.0 && theta1 + theta2 > 0.0) {
                    return bad(
                        "power_log potential needs c >= 0, theta1 > 0, theta1 + theta2 > 0",
                    );
                }
            }
            PotentialShape::ExpPower { c, theta } => {
                if !(c > 0.0 && theta > 0.0) {
                    return bad("exp_power potential needs c > 0, theta > 0");
                }
            }
            PotentialShape::Valley(ref g) => g.validate()?,
        }
        Ok(())
    }

    /// Value at `|x| = r` of a radial shape.
    fn radial(&self, r: f64) -> f64 {
        match *self {
            PotentialShape::Power { c, theta } => c * r.powf(theta),
            PotentialShape::PowerLog { c, theta1, theta2 } => {
                if r == 0.0 {
                    0.0
                } else {
                    c * r.powf(theta1) * r.ln_1p().powf(theta2)
                }
            }
            PotentialShape::ExpPower { c, theta } => (c * (1.0 + r.powf(theta))).exp(),
            PotentialShape::Valley(ref g) => g.off_valley.radial(r),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PotentialShape::Valley(g) if g.contains(x) => 1.0,
            _ => self.radial(x.abs()),
        }
    }

    /// Half-length `l` of the sublevel set `{V ≤ k} = [-l, l]` of a radial
    /// increasing shape, `None` when empty and `+∞` when unbounded.
    fn sublevel(&self, k: f64) -> Option<f64> {
        if self.radial(0.0) > k {
            return None;
        }
        let l = match *self {
            PotentialShape::Power { c, theta } => {
                if c == 0.0 {
                    f64::INFINITY
                } else {
                    (k / c).powf(1.0 / theta)
                }
            }
            PotentialShape::ExpPower { c, theta } => (k.ln() / c - 1.0).max(0.0).powf(1.0 / theta),
            PotentialShape::PowerLog { c: 0.0, .. } => f64::INFINITY,
            PotentialShape::PowerLog { .. } => {
                let mut hi = 1.0;
                while self.radial(hi) <= k {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.radial(mid) <= k {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                lo
            }
            PotentialShape::Valley(ref g) => return g.off_valley.sublevel(k),
        };
        Some(l)
    }
}

impl PotentialSpec {
    /// Wraps a shape with the default level: `1` for valleys, `V(1)` otherwise.
    pub fn new(shape: PotentialShape) -> Result<Self> {
        shape.validate()?;
        let threshold = match shape {
            PotentialShape::Valley(_) => 1.0,
            ref s => s.radial(1.0),
        };
        Ok(PotentialSpec {
            shape,
            threshold,
            offset: 0.0,
        })
    }

    pub fn power(theta: f64) -> Result<Self> {
        Self::new(PotentialShape::Power { c: 1.0, theta })
    }

    pub fn power_log(c: f64, theta1: f64, theta2: f64) -> Result<Self> {
        Self::new(PotentialShape::PowerLog { c, theta1, theta2 })
    }

    pub fn exp_power(c: f64, theta: f64) -> Result<Self> {
        Self::new(PotentialShape::ExpPower { c, theta })
    }

    pub fn valley(geometry: ValleyGeometry) -> Result<Self> {
        Self::new(PotentialShape::Valley(geometry))
    }

    /// Identically zero potential (violates confinement; useful for free paths).
    pub fn zero() -> Self {
        PotentialSpec {
            shape: PotentialShape::Power { c: 0.0, theta: 1.0 },
            threshold: 0.0,
            offset: 0.0,
        }
    }

    pub fn with_threshold(mut self, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Parameter("threshold K must be positive".into()));
        }
        self.threshold = k;
        Ok(self)
    }

    /// Adds a constant to `V`; the level `K` moves with it.
    pub fn with_offset(mut self, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Parameter(
                "offset must be finite and non-negative".into(),
            ));
        }
        self.threshold += c - self.offset;
        self.offset = c;
        Ok(self)
    }

    pub fn is_valley(&self) -> bool {
        matches!(self.shape, PotentialShape::Valley(_))
    }

    pub fn geometry(&self) -> Option<&ValleyGeometry> {
        match self.shape {
            PotentialShape::Valley(ref g) => Some(g),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.shape.eval(x) + self.offset
    }

    /// Confinement: every sublevel set has finite measure.
    pub fn is_confining(&self) -> bool {
        self.shape.sublevel(1e6).is_none_or(|l| l.is_finite())
    }

    fn check_r(r: f64) -> Result<()> {
        if r > 0.0 {
            Ok(())
        } else {
            Err(Error::Range(format!("radius must be positive, got {r}")))
        }
    }

    /// `Φ_K(R) = inf{V(x) : |x| ≥ R, V(x) > K}`; `+∞` when the set is empty.
    pub fn phi(&self, r: f64) -> Result<f64> {
        Self::check_r(r)?;
        let k = self.threshold - self.offset;
        if !self.is_confining() {
            return Ok(f64::INFINITY);
        }
        let mut v = self.shape.radial(r).max(k);
        if let PotentialShape::Valley(ref g) = self.shape {
            // Valley points themselves qualify when the level sits below 1.
            if k < 1.0 && (g.count.is_none() || g.center(g.last()) + g.radius(g.last()) >= r) {
                v = v.min(1.0);
            }
        }
        Ok(v + self.offset)
    }

    /// `Θ_K(R) = |{|x| ≥ R, V(x) ≤ K}|`.
    pub fn theta(&self, r: f64) -> Result<f64> {
        Self::check_r(r)?;
        let k = self.threshold - self.offset;
        let central = self.shape.sublevel(k);
        match self.shape {
            PotentialShape::Valley(ref g) if k >= 1.0 => Ok(g.measure_beyond(r, central)),
            _ => Ok(central.map_or(0.0, |l| 2.0 * (l - r).max(0.0))),
        }
    }

    /// `log Θ_K(R)`, staying finite when the valley tail underflows.
    pub fn ln_theta(&self, r: f64) -> Result<f64> {
        let t = self.theta(r)?;
        if t > 1e-280 {
            return Ok(t.ln());
        }
        match self.shape {
            PotentialShape::Valley(ref g) if self.threshold - self.offset >= 1.0 => {
                let central = self
                    .shape
                    .sublevel(self.threshold - self.offset)
                    .unwrap_or(0.0);
                if central >= r {
                    Ok(t.ln())
                } else {
                    Ok(g.ln_tail_by_centers(r))
                }
            }
            _ => Ok(t.ln()),
        }
    }

    /// Measure of the valley set alone beyond `R`.
    pub fn valley_tail(&self, r: f64) -> Result<f64> {
        let g = self
            .geometry()
            .ok_or_else(|| Error::Family("valley tail of a non-valley potential".into()))?;
        Ok(g.measure_beyond(r, None))
    }

    /// `sup_{|z| ≤ r} V(z)`.
    pub fn sup_ball(&self, r: f64) -> f64 {
        let r = r.abs();
        let mut v = self.shape.radial(r);
        if let PotentialShape::Valley(ref g) = self.shape {
            if g.center(1) - g.radius(1) <= r {
                v = v.max(1.0);
            }
        }
        v + self.offset
    }

    /// Same supremum by sampling with the given step (cross-check).
    pub fn sup_ball_sampled(&self, r: f64, step: f64) -> f64 {
        let n = (2.0 * r / step).ceil() as usize;
        (0..=n)
            .map(|i| self.eval((-r + i as f64 * step).min(r)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TailBoundRow {
    pub r: f64,
    pub tail: f64,
    pub bound_shape: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailBoundReport {
    pub exponent: f64,
    pub rows: Vec<TailBoundRow>,
    pub c0: f64,
    /// Largest ratio on a dense log grid spanning the listed radii.
    pub sup_in_range: f64,
    /// Largest ratio on a dense log grid from the largest radius to 100× it.
    pub sup_beyond: f64,
    /// No new maximum of the ratio appears beyond the listed range.
    pub bounded: bool,
}

/// Compares the valley tail with `c0 R^{-(1/α - ε)}`.
pub fn valley_tail_bound_check(
    spec: &PotentialSpec,
    r_list: &[f64],
    eps: f64,
) -> Result<TailBoundReport> {
    let g = spec
        .geometry()
        .ok_or_else(|| Error::Family("tail bound needs a valley potential".into()))?;
    let alpha = match g.radius_law {
        RadiusLaw::Power { alpha } => alpha,
        _ => {
            return Err(Error::Family(
                "tail bound needs the power radius law".into(),
            ))
        }
    };
    if !(eps > 0.0) || g.k0 <= 2.0 / eps {
        return Err(Error::Precondition(format!(
            "need k0 > 2/eps, got k0 = {}, eps = {eps}",
            g.k0
        )));
    }
    if r_list.is_empty() {
        return Err(Error::InsufficientData("empty radius list".into()));
    }
    let exponent = 1.0 / alpha - eps;
    let row = |r: f64| -> Result<TailBoundRow> {
        let tail = spec.valley_tail(r)?;
        let bound_shape = r.powf(-exponent);
        Ok(TailBoundRow {
            r,
            tail,
            bound_shape,
            ratio: tail / bound_shape,
        })
    };
    let rows = r_list.iter().map(|&r| row(r)).collect::<Result<Vec<_>>>()?;
    let c0 = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let r_min = r_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_max = r_list.iter().cloned().fold(0.0, f64::max);
    let dense_sup = |a: f64, b: f64| -> Result<f64> {
        let steps = 2000;
        let mut m: f64 = 0.0;
        for i in 0..=steps {
            let r = a * (b / a).powf(i as f64 / steps as f64);
            m = m.max(row(r)?.ratio);
        }
        Ok(m)
    };
    let sup_in_range = dense_sup(r_min, r_max)?.max(c0);
    let sup_beyond = dense_sup(r_max, 100.0 * r_max)?;
    let bounded = c0.is_finite() && sup_beyond <= sup_in_range * (1.0 + 1e-9);
    Ok(TailBoundReport {
        exponent,
        rows,
        c0,
        sup_in_range,
        sup_beyond,
        bounded,
    })
}
