use fklab::model::Ball;
use fklab::montecarlo::{chain_lower_bound, fk_importance, ChainPlan};
use serde_json::json;

use super::{scheme, slope, Context, Outcome};
use crate::report::Table;
use crate::CliError;

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let p = &c.chain_bound;
    let kernel = &c.model.kernel;
    let potential = &c.model.potential;
    let sim = scheme(ctx, kernel, c.scheme.eps_cut, c.scheme.dt)?;
    let target = Ball::new(p.target.0, p.target.1);
    let mut out = Outcome::default();

    let mut table = Table::new(&[
        "x",
        "neg_log_T",
        "rel_std_err",
        "bound_exponent",
        "ln_link_product",
    ]);
    let mut rows = Vec::new();
    let (mut xs, mut mc, mut bound) = (Vec::new(), Vec::new(), Vec::new());
    for &x in &p.points {
        let plan = ChainPlan::new(x, kernel, p.eps)?;
        let lb = chain_lower_bound(&plan, kernel, potential, p.link_constant)?;
        let est = fk_importance(
            kernel,
            potential,
            &sim,
            x,
            plan.t0,
            &target,
            p.tilt_rate,
            p.paths,
        )?;
        table.push(&[
            x,
            -est.ln_estimate,
            est.rel_std_err,
            -lb.exponent,
            lb.ln_link_product,
        ]);
        xs.push(x);
        mc.push(-est.ln_estimate);
        bound.push(-lb.exponent);
        rows.push(json!({ "x": x, "estimate": est, "bound": lb, "plan": plan }));
    }
    let finite = mc.iter().all(|v| v.is_finite());
    out.check("chain_estimates_finite", finite, format!("-log T = {mc:?}"));
    let s_mc = slope(&xs, &mc);
    let s_bound = slope(&xs, &bound);
    let ratio = s_mc / s_bound;
    out.check(
        "chain_slope",
        finite && ratio <= c.tolerances.chain_slope_factor,
        format!("Monte Carlo slope {s_mc:.4} vs bound slope {s_bound:.4}, ratio {ratio:.4}"),
    );
    out.record("points", &rows);
    out.record("mc_slope", &s_mc);
    out.record("bound_slope", &s_bound);
    out.record("slope_ratio", &ratio);
    out.tables.push(("chain".into(), table));
    Ok(out)
}
