use fklab::discretize::assemble_generator;
use fklab::model::{valley_tail_bound_check, Ball, PotentialSpec, ValleyGeometry};
use fklab::rates::RateBundle;
use fklab::spectral::{condition13_ratio_with, positive_heat_kernel, solve_spectrum};
use fklab::Error;
use serde_json::json;

use super::{Context, Outcome};
use crate::report::Table;
use crate::CliError;

/// Measure of the ball union beyond `r` from the explicit ball list.
fn series_tail(g: &ValleyGeometry, r: f64, terms: u64) -> f64 {
    let last = g.count.map_or(terms, |c| c.min(terms));
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for n in 1..=last {
        let (c, rad) = (g.center(n), g.radius(n));
        let len = if c - rad >= r {
            2.0 * rad
        } else {
            ((c + rad) - r).max(0.0)
        };
        let y = len - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let p = &c.valley;
    let kernel = &c.model.kernel;
    let mut out = Outcome::default();

    let power = PotentialSpec::valley(p.power_valley.clone())?;
    let mut table = Table::new(&["R", "tail", "series", "relative_error"]);
    let mut worst = 0.0f64;
    for &r in &p.tail_radii {
        let tail = power.valley_tail(r)?;
        let series = series_tail(&p.power_valley, r, p.oracle_terms);
        let err = if series == 0.0 {
            tail.abs()
        } else {
            ((tail - series) / series).abs()
        };
        worst = worst.max(err);
        table.push(&[r, tail, series, err]);
    }
    out.check(
        "valley_tail_series",
        worst <= c.tolerances.valley_oracle,
        format!("largest relative deviation {worst:e}"),
    );
    out.tables.push(("valley_tail".into(), table));

    let bound = valley_tail_bound_check(&power, &p.tail_radii, p.tail_eps)?;
    out.check(
        "valley_tail_bounded",
        bound.bounded,
        format!(
            "sup of the ratio {:e} in range, {:e} beyond",
            bound.sup_in_range, bound.sup_beyond
        ),
    );
    out.record("tail_bound", &bound);

    let exp_tail = PotentialSpec::valley(p.exp_tail_valley.clone())?;
    let bundle = RateBundle::new(kernel, exp_tail, p.epsilon, p.constants)?;
    let summ = bundle.summability(200_000)?;
    let mut schedules = Vec::new();
    let mut finite = summ.converges;
    for &s in &p.slicing_s {
        match bundle.slicing_schedule(s) {
            Ok(sched) => {
                finite &= sched.ln_beta_tilde.is_finite();
                schedules
                    .push(json!({ "s": s, "n0": sched.n0, "ln_beta_tilde": sched.ln_beta_tilde }));
            }
            Err(e) => {
                finite = false;
                schedules.push(json!({ "s": s, "error": e.to_string() }));
            }
        }
    }
    out.check(
        "slicing_exp_tail_finite",
        finite,
        format!(
            "summability {}, {} schedules",
            summ.converges,
            schedules.len()
        ),
    );
    out.record("exp_tail_summability", &summ);
    out.record("exp_tail_schedules", &schedules);

    let power_bundle = RateBundle::new(kernel, power, p.epsilon, p.constants)?;
    let rejection = power_bundle.slicing_schedule(p.slicing_s[0]);
    let rejected = matches!(rejection, Err(Error::Inapplicable(_)));
    out.check(
        "slicing_rejects_non_summable",
        rejected,
        match &rejection {
            Ok(s) => format!("returned n0 = {}", s.n0),
            Err(e) => e.to_string(),
        },
    );

    // reported only: the reduced geometry is far from the asymptotic regime
    let reduced = PotentialSpec::valley(p.reduced_valley.clone())?;
    let grid = p.reduced_grid.build()?;
    let asm = assemble_generator(kernel, &reduced, grid)?;
    let spec = solve_spectrum(&asm, 2)?;
    let hk = positive_heat_kernel(&spec, p.reduced_t)?;
    let d = Ball::new(0.0, 1.0);
    let centers: Vec<f64> = (1..=2).map(|n| p.reduced_valley.center(n)).collect();
    let ratios: Vec<f64> = centers
        .iter()
        .map(|&x| condition13_ratio_with(&hk, &grid, grid.index_of(x), &d, 1.0))
        .collect();
    out.record(
        "condition13_reduced",
        &json!({ "centers": centers, "ratios": ratios, "increase": ratios[1] > ratios[0], "t": p.reduced_t }),
    );
    Ok(out)
}
