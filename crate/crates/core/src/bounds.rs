//! Ground-state envelopes and least-squares decay fits.
//!
//! Envelopes are evaluated as exponents, i.e. the logarithm of the bound
//! with its unknown multiplicative constant dropped. Comparisons against a
//! computed ground state align that constant at one point.

use serde::{Deserialize, Serialize};

use crate::discretize::Grid;
use crate::error::{Error, Result};
use crate::model::PotentialSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    /// Chain lower bound with the potential's local supremum.
    #[serde(rename = "prop31_lower")]
    ChainLower {
        kappa: f64,
        eps: f64,
        potential: PotentialSpec,
    },
    #[serde(rename = "thm12_lower")]
    PowerLogLower { kappa: f64, eps: f64, theta3: f64 },
    #[serde(rename = "thm12_upper")]
    PowerLogUpper { kappa: f64, eps: f64, theta1: f64 },
    /// Power potential, finite-range kernel.
    #[serde(rename = "ex12_gamma_inf")]
    FiniteRange { side: Side, eps: f64, theta: f64 },
    /// Power potential, tempered kernel; `c` stands for the unknown
    /// θ-independent constant.
    #[serde(rename = "ex12_gamma_finite")]
    Tempered {
        side: Side,
        gamma: f64,
        theta: f64,
        c: f64,
    },
    #[serde(rename = "prop41_power")]
    PowerSupersolution {
        side: Side,
        kappa: f64,
        eps: f64,
        theta5: f64,
        theta6: f64,
    },
    #[serde(rename = "prop41_exp")]
    ExpSupersolution {
        side: Side,
        kappa: f64,
        eps: f64,
        c7: f64,
        c8: f64,
        theta7: f64,
        theta8: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl Envelope {
    pub fn side(&self) -> Side {
        match self {
            Envelope::ChainLower { .. } | Envelope::PowerLogLower { .. } => Side::Lower,
            Envelope::PowerLogUpper { .. } => Side::Upper,
            Envelope::FiniteRange { side, .. }
            | Envelope::Tempered { side, .. }
            | Envelope::PowerSupersolution { side, .. }
            | Envelope::ExpSupersolution { side, .. } => *side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Envelope::ChainLower { kappa, eps, .. } => {
                positive("kappa", kappa)?;
                if !(eps > 0.0 && eps < 1.0 / 11.0) {
                    return Err(Error::Parameter(format!(
                        "chain envelope needs eps in (0, 1/11), got {eps}"
                    )));
                }
            }
            Envelope::PowerLogLower { kappa, eps, theta3 } => {
                positive("kappa", kappa)?;
                positive("eps", eps)?;
                positive("theta3", theta3)?;
            }
            Envelope::PowerLogUpper { kappa, eps, theta1 } => {
                positive("kappa", kappa)?;
                positive("theta1", theta1)?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::Parameter(format!(
                        "upper envelope needs eps in (0, 1), got {eps}"
                    )));
                }
            }
            Envelope::FiniteRange { eps, theta, .. } => {
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::Parameter(format!(
                        "eps must lie in (0, 1), got {eps}"
                    )));
                }
                if !(theta > 1.0) {
                    return Err(Error::Parameter(format!(
                        "two-sided estimate needs theta > 1, got {theta}"
                    )));
                }
            }
            Envelope::Tempered {
                gamma, theta, c, ..
            } => {
                if !(gamma > 1.0 && gamma.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "gamma must lie in (1, inf), got {gamma}"
                    )));
                }
                if !(theta > 1.0) {
                    return Err(Error::Parameter(format!(
                        "two-sided estimate needs theta > 1, got {theta}"
                    )));
                }
                positive("c", c)?;
            }
            Envelope::PowerSupersolution {
                kappa,
                eps,
                theta5,
                theta6,
                ..
            } => {
                positive("kappa", kappa)?;
                positive("eps", eps)?;
                positive("theta6", theta6)?;
                if !(theta5 > theta6 + 1.0) {
                    return Err(Error::Parameter(format!(
                        "need theta5 > theta6 + 1, got {theta5}, {theta6}"
                    )));
                }
            }
            Envelope::ExpSupersolution {
                side,
                kappa,
                eps,
                c7,
                c8,
                theta7,
                theta8,
            } => {
                positive("kappa", kappa)?;
                positive("eps", eps)?;
                positive("c7", c7)?;
                positive("c8", c8)?;
                positive("theta7", theta7)?;
                if !(theta7 <= theta8) {
                    return Err(Error::Parameter(format!(
                        "need theta7 <= theta8, got {theta7}, {theta8}"
                    )));
                }
                if side == Side::Upper && !(eps > theta7 / (theta7 + 1.0) && eps < 1.0) {
                    return Err(Error::Parameter(format!(
                        "upper envelope needs eps in ({}, 1), got {eps}",
                        theta7 / (theta7 + 1.0)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Logarithm of the envelope at `x`, without its multiplicative constant.
pub fn eval_envelope(env: &Envelope, x: f64) -> Result<f64> {
    env.validate()?;
    let r = x.abs();
    let l = (1.0 + r).ln();
    let sign = |side: Side| if side == Side::Lower { 1.0 } else { -1.0 };
    Ok(match *env {
        Envelope::ChainLower {
            kappa,
            eps,
            ref potential,
        } => {
            let sup = potential.sup_ball(r + 2.0 * eps * kappa);
            -r / (kappa * (1.0 - 6.0 * eps)) * (1.0 + r + sup).ln()
        }
        Envelope::PowerLogLower { kappa, eps, theta3 } => -(1.0 + eps) * theta3 / kappa * r * l,
        Envelope::PowerLogUpper { kappa, eps, theta1 } => -(1.0 - eps) * theta1 / kappa * r * l,
        Envelope::FiniteRange { side, eps, theta } => -(1.0 + sign(side) * eps) * theta * r * l,
        Envelope::Tempered {
            gamma, theta, c, ..
        } => {
            let e = (gamma - 1.0) / gamma;
            -c * theta.powf(e) * r * l.powf(e)
        }
        Envelope::PowerSupersolution {
            side,
            kappa,
            eps,
            theta5,
            theta6,
        } => match side {
            Side::Lower => -(1.0 + eps) / kappa * r.powf(theta6 + 1.0),
            Side::Upper => -(1.0 - eps) * theta5 / kappa * r * l,
        },
        Envelope::ExpSupersolution {
            side,
            kappa,
            eps,
            c7,
            c8,
            theta7,
            theta8,
        } => match side {
            Side::Lower => -c8 * (1.0 + eps) / kappa * r.powf(theta8 + 1.0),
            Side::Upper => -c7 * (1.0 - eps) / kappa * r.powf(theta7 + 1.0),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DecayModel {
    /// `b` fitted together with `a` and `c`.
    PowerLogBFree,
    BFixed {
        b: f64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Root-mean-square residual of `-log φ₁`.
    pub residual: f64,
    pub window: (f64, f64),
    pub nodes: usize,
}

/// Nodes with `|x| ∈ [R/4, 3R/4]`.
pub fn fit_window(grid: &Grid) -> Vec<usize> {
    let (lo, hi) = (0.25 * grid.r, 0.75 * grid.r);
    (0..grid.n)
        .filter(|&i| (lo - 1e-12..=hi + 1e-12).contains(&grid.x(i).abs()))
        .collect()
}

fn fit_fixed(xs: &[f64], ys: &[f64], b: f64) -> (f64, f64, f64) {
    let f: Vec<f64> = xs
        .iter()
        .map(|x| x.abs() * (1.0 + x.abs()).ln().powf(b))
        .collect();
    let n = f.len() as f64;
    let mf = f.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sfy: f64 = f.iter().zip(ys).map(|(p, q)| (p - mf) * (q - my)).sum();
    let sff: f64 = f.iter().map(|p| (p - mf) * (p - mf)).sum();
    let a = sfy / sff;
    let c = my - a * mf;
    let ss: f64 = f.iter().zip(ys).map(|(p, q)| (q - a * p - c).powi(2)).sum();
    (a, c, (ss / n).sqrt())
}

/// Least squares for `-log φ₁(x) = a |x| log^b(1 + |x|) + c` on the window.
pub fn fit_decay(grid: &Grid, phi1: &[f64], model: DecayModel) -> Result<DecayFit> {
    let idx = fit_window(grid);
    if idx.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "fit window holds {} nodes, need 10",
            idx.len()
        )));
    }
    if let Some(&i) = idx.iter().find(|&&i| !(phi1[i] > 0.0)) {
        return Err(Error::Domain(format!(
            "ground state not positive at x = {}",
            grid.x(i)
        )));
    }
    let xs: Vec<f64> = idx.iter().map(|&i| grid.x(i)).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| -phi1[i].ln()).collect();
    let b = match model {
        DecayModel::BFixed { b } => b,
        DecayModel::PowerLogBFree => {
            let cost = |b: f64| fit_fixed(&xs, &ys, b).2;
            let grid_b: Vec<f64> = (1..=80).map(|k| k as f64 * 0.05).collect();
            let k = (0..grid_b.len())
                .min_by(|&i, &j| cost(grid_b[i]).total_cmp(&cost(grid_b[j])))
                .unwrap();
            let (mut lo, mut hi) = (
                grid_b[k.saturating_sub(1)],
                grid_b[(k + 1).min(grid_b.len() - 1)],
            );
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let (mut p, mut q) = (hi - g * (hi - lo), lo + g * (hi - lo));
            let (mut fp, mut fq) = (cost(p), cost(q));
            while hi - lo > 1e-11 {
                if fp < fq {
                    hi = q;
                    q = p;
                    fq = fp;
                    p = hi - g * (hi - lo);
                    fp = cost(p);
                } else {
                    lo = p;
                    p = q;
                    fp = fq;
                    q = lo + g * (hi - lo);
                    fq = cost(q);
                }
            }
            0.5 * (lo + hi)
        }
    };
    let (a, c, residual) = fit_fixed(&xs, &ys, b);
    Ok(DecayFit {
        a,
        b,
        c,
        residual,
        window: (0.25 * grid.r, 0.75 * grid.r),
        nodes: idx.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub nodes: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Largest distance of `-log φ₁` outside the band, 0 without violations.
    pub max_violation: f64,
    pub lower_offset: f64,
    pub upper_offset: f64,
}

/// Aligns both envelope exponents with `log φ₁` at the window midpoint and
/// counts window nodes where `-log φ₁` leaves the band
/// `[0.8 min(L, U), 1.2 max(L, U)]` of the aligned magnitudes.
pub fn envelope_sandwich_report(
    grid: &Grid,
    phi1: &[f64],
    lower: &Envelope,
    upper: &Envelope,
) -> Result<SandwichReport> {
    if lower.side() != Side::Lower || upper.side() != Side::Upper {
        return Err(Error::Parameter(
            "sandwich needs a lower and an upper envelope".into(),
        ));
    }
    let idx = fit_window(grid);
    if idx.is_empty() {
        return Err(Error::InsufficientData("empty fit window".into()));
    }
    let xm = 0.5 * grid.r;
    let im = grid.index_of(xm);
    let gm = -phi1[im].ln();
    let lower_offset = gm + eval_envelope(lower, grid.x(im))?;
    let upper_offset = gm + eval_envelope(upper, grid.x(im))?;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for &i in &idx {
        let x = grid.x(i);
        let g = -phi1[i].ln();
        let l = -eval_envelope(lower, x)? + lower_offset;
        let u = -eval_envelope(upper, x)? + upper_offset;
        let (lo, hi) = (0.8 * l.min(u), 1.2 * l.max(u));
        let miss = (lo - g).max(g - hi).max(0.0);
        if miss > 0.0 {
            violations += 1;
            worst = worst.max(miss);
        }
    }
    Ok(SandwichReport {
        nodes: idx.len(),
        violations,
        violation_fraction: violations as f64 / idx.len() as f64,
        max_violation: worst,
        lower_offset,
        upper_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn gamma_inf_example_value() {
        let env = Envelope::FiniteRange {
            side: Side::Lower,
            eps: 0.1,
            theta: 2.0,
        };
        let v = eval_envelope(&env, 10.0).unwrap();
        assert!((v + 1.1 * 2.0 * 10.0 * 11f64.ln()).abs() < 1e-12);
        assert!((v + 52.75).abs() < 5e-3);
    }

    fn all_kinds() -> Vec<Envelope> {
        vec![
            Envelope::ChainLower {
                kappa: 1.0,
                eps: 0.05,
                potential: PotentialSpec::power(2.0).unwrap(),
            },
            Envelope::PowerLogLower {
                kappa: 1.0,
                eps: 0.1,
                theta3: 2.0,
            },
            Envelope::PowerLogUpper {
                kappa: 1.0,
                eps: 0.1,
                theta1: 2.0,
            },
            Envelope::FiniteRange {
                side: Side::Upper,
                eps: 0.1,
                theta: 2.0,
            },
            Envelope::Tempered {
                side: Side::Lower,
                gamma: 2.0,
                theta: 2.0,
                c: 1.0,
            },
            Envelope::PowerSupersolution {
                side: Side::Lower,
                kappa: 1.0,
                eps: 0.1,
                theta5: 3.0,
                theta6: 0.5,
            },
            Envelope::ExpSupersolution {
                side: Side::Upper,
                kappa: 1.0,
                eps: 0.6,
                c7: 1.0,
                c8: 2.0,
                theta7: 1.0,
                theta8: 1.5,
            },
        ]
    }

    #[test]
    fn zero_at_origin_and_non_positive() {
        for env in all_kinds() {
            assert_eq!(eval_envelope(&env, 0.0).unwrap(), 0.0);
            for x in [1.0, 3.0, 10.0, -7.0] {
                assert!(eval_envelope(&env, x).unwrap() <= 0.0);
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad = [
            Envelope::ChainLower {
                kappa: 1.0,
                eps: 0.1,
                potential: PotentialSpec::zero(),
            },
            Envelope::Tempered {
                side: Side::Lower,
                gamma: f64::INFINITY,
                theta: 2.0,
                c: 1.0,
            },
            Envelope::Tempered {
                side: Side::Lower,
                gamma: 1.0,
                theta: 2.0,
                c: 1.0,
            },
            Envelope::PowerSupersolution {
                side: Side::Lower,
                kappa: 1.0,
                eps: 0.1,
                theta5: 1.2,
                theta6: 0.5,
            },
            Envelope::ExpSupersolution {
                side: Side::Upper,
                kappa: 1.0,
                eps: 0.3,
                c7: 1.0,
                c8: 2.0,
                theta7: 1.0,
                theta8: 1.5,
            },
        ];
        for env in bad {
            assert!(
                matches!(eval_envelope(&env, 1.0), Err(Error::Parameter(_))),
                "{env:?}"
            );
        }
    }

    #[test]
    fn gamma_finite_shape_shared() {
        let lo = Envelope::Tempered {
            side: Side::Lower,
            gamma: 2.0,
            theta: 2.0,
            c: 3.0,
        };
        let up = Envelope::Tempered {
            side: Side::Upper,
            gamma: 2.0,
            theta: 2.0,
            c: 0.5,
        };
        for x in [1.0, 4.0, 9.0] {
            let r = eval_envelope(&lo, x).unwrap() / eval_envelope(&up, x).unwrap();
            assert!((r - 6.0).abs() < 1e-12);
            let shape = x * (1.0 + x).ln().sqrt();
            assert!((eval_envelope(&lo, x).unwrap() + 3.0 * 2f64.sqrt() * shape).abs() < 1e-12);
        }
    }

    #[test]
    fn sandwich_ordering_of_exponents() {
        for x in [0.5, 2.0, 10.0] {
            let l = eval_envelope(
                &Envelope::PowerLogLower {
                    kappa: 1.0,
                    eps: 0.1,
                    theta3: 2.0,
                },
                x,
            )
            .unwrap();
            let u = eval_envelope(
                &Envelope::PowerLogUpper {
                    kappa: 1.0,
                    eps: 0.1,
                    theta1: 2.0,
                },
                x,
            )
            .unwrap();
            assert!(l <= u);
        }
    }

    #[test]
    fn power_envelope_continuity_in_theta6() {
        let near = Envelope::PowerSupersolution {
            side: Side::Lower,
            kappa: 1.0,
            eps: 0.1,
            theta5: 3.0,
            theta6: 1e-6,
        };
        for x in [1.0, 5.0, 20.0] {
            let v = eval_envelope(&near, x).unwrap();
            assert!((v + 1.1 * x).abs() < 1e-4 * x.max(1.0), "{v}");
        }
    }

    #[test]
    fn exact_model_recovery() {
        let g = Grid::new(20.0, 401).unwrap();
        let phi: Vec<f64> = g
            .nodes()
            .iter()
            .map(|x| (-2.0 * x.abs() * (1.0 + x.abs()).ln()).exp())
            .collect();
        let fixed = fit_decay(&g, &phi, DecayModel::BFixed { b: 1.0 }).unwrap();
        assert!((fixed.a - 2.0).abs() < 1e-9 && fixed.c.abs() < 1e-8);
        let free = fit_decay(&g, &phi, DecayModel::PowerLogBFree).unwrap();
        assert!((free.a - 2.0).abs() < 1e-6, "{free:?}");
        assert!((free.b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_model_recovery() {
        let g = Grid::new(20.0, 401).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let phi: Vec<f64> = g
            .nodes()
            .iter()
            .map(|x| {
                let y = 2.0 * x.abs() * (1.0 + x.abs()).ln();
                (-y * (1.0 + noise.sample(&mut rng))).exp()
            })
            .collect();
        let fit = fit_decay(&g, &phi, DecayModel::BFixed { b: 1.0 }).unwrap();
        assert!((fit.a - 2.0).abs() < 2e-2, "{fit:?}");
    }

    #[test]
    fn small_window_rejected() {
        let g = Grid {
            r: 2.0,
            n: 9,
            h: 0.5,
        };
        let phi = vec![1.0; 9];
        assert!(matches!(
            fit_decay(&g, &phi, DecayModel::BFixed { b: 1.0 }),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn self_sandwich_has_no_violations() {
        let g = Grid::new(20.0, 401).unwrap();
        let env = Envelope::FiniteRange {
            side: Side::Lower,
            eps: 0.1,
            theta: 2.0,
        };
        let phi: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&x| eval_envelope(&env, x).unwrap().exp())
            .collect();
        let up = Envelope::FiniteRange {
            side: Side::Upper,
            eps: 0.1,
            theta: 2.0,
        };
        let rep = envelope_sandwich_report(&g, &phi, &env, &up).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(envelope_sandwich_report(&g, &phi, &up, &env).is_err());
    }
}
