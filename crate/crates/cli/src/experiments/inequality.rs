use fklab::discretize::{
    assemble_generator, local_sp_explicit_check, random_piecewise_linear, sobolev_check,
};
use fklab::montecarlo::rrr1_check;
use fklab::Error;
use serde_json::json;

use super::{Context, Outcome};
use crate::report::Table;
use crate::CliError;

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let p = &c.inequality_suite;
    let kernel = &c.model.kernel;
    let grid = p.grid.build()?;
    let funcs = random_piecewise_linear(&grid, p.support, p.knot, p.functions, c.scheme.seed);
    let mut out = Outcome::default();

    let mut table = Table::new(&["r", "s", "violations", "max_lhs_over_rhs"]);
    let mut total = 0;
    for &(r, s) in &p.pairs {
        let mut violations = 0;
        let mut worst = 0.0f64;
        for f in &funcs {
            let (lhs, rhs) = local_sp_explicit_check(&grid, kernel, f, r, s)?;
            if lhs > rhs {
                violations += 1;
            }
            if rhs > 0.0 {
                worst = worst.max(lhs / rhs);
            }
        }
        total += violations;
        table.push(&[r, s, violations as f64, worst]);
    }
    out.check(
        "local_super_poincare",
        total == 0,
        format!(
            "{total} violations over {} functions x {} (r, s) pairs",
            funcs.len(),
            p.pairs.len()
        ),
    );
    out.tables.push(("local_super_poincare".into(), table));

    let rrr = rrr1_check(&p.rrr_radii)?;
    let failing: Vec<f64> = rrr
        .iter()
        .filter(|row| !row.holds)
        .map(|row| row.r)
        .collect();
    out.check(
        "rrr1",
        failing.is_empty(),
        format!("fails at r = {failing:?}"),
    );
    out.record("rrr1", &rrr);

    let asm = assemble_generator(kernel, &c.model.potential, grid)?;
    let sobolev = match funcs
        .iter()
        .map(|f| sobolev_check(&asm, f))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(pairs) => {
            let ratio = pairs.iter().map(|(l, r)| l / r).fold(0.0, f64::max);
            json!({ "applicable": true, "max_lp_over_energy": ratio })
        }
        Err(Error::Inapplicable(msg)) => json!({ "applicable": false, "reason": msg }),
        Err(e) => return Err(e.into()),
    };
    out.record("sobolev", &sobolev);
    out.record("grid", &grid);
    Ok(out)
}
