use fklab::discretize::{assemble_generator, Grid};
use fklab::model::{Ball, PotentialSpec};
use fklab::spectral::{
    condition13_ratio_with, iuc_ratio_with, positive_heat_kernel, solve_spectrum, WINDOW,
};
use serde::Serialize;
use serde_json::json;

use super::{fmt_theta, Context, Outcome};
use crate::report::{PlotKind, PlotTable};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IucVerdict {
    IucConsistent,
    NonIucConsistent,
    Undecided,
}

pub fn verdict(growth: f64, bounded: f64, blowup: f64) -> IucVerdict {
    if growth < bounded {
        IucVerdict::IucConsistent
    } else if growth > blowup {
        IucVerdict::NonIucConsistent
    } else {
        IucVerdict::Undecided
    }
}

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let p = &c.iuc_dichotomy;
    let tol = &c.tolerances;
    let h = c.grid.build()?.h;
    let mut radii = p.radii.clone();
    radii.sort_by(f64::total_cmp);
    let mut out = Outcome::default();
    let mut per_theta = Vec::new();

    for &theta in &p.thetas {
        let potential = PotentialSpec::power(theta)?;
        let mut plot = PlotTable::new(PlotKind::IucRatioVsR, Some(fmt_theta(theta)));
        let mut rows = Vec::new();
        let mut two_point = serde_json::Value::Null;
        for (k, &r) in radii.iter().enumerate() {
            let grid = Grid::with_spacing(r, h)?;
            let asm = assemble_generator(&c.model.kernel, &potential, grid)?;
            let spec = solve_spectrum(&asm, 2)?;
            let hk = positive_heat_kernel(&spec, p.t)?;
            let rep = iuc_ratio_with(&spec, &hk);
            plot.table.push(&[r, p.t, rep.value]);
            if k + 1 == radii.len() {
                let (x1, x2) = p.condition13_points;
                if x1.max(x2) + 1.0 <= WINDOW * r {
                    let d = Ball::new(0.0, 1.0);
                    let a = condition13_ratio_with(&hk, &grid, grid.index_of(x1), &d, 1.0);
                    let b = condition13_ratio_with(&hk, &grid, grid.index_of(x2), &d, 1.0);
                    two_point = json!({ "x": [x1, x2], "ratio": [a, b], "growth": b / a, "r": r });
                }
            }
            rows.push(json!({ "r": r, "n": grid.n, "lambda1": spec.lambda1(), "iuc": rep }));
        }
        let first = plot
            .table
            .rows
            .first()
            .and_then(|r| r[2])
            .unwrap_or(f64::NAN);
        let last = plot
            .table
            .rows
            .last()
            .and_then(|r| r[2])
            .unwrap_or(f64::NAN);
        let growth = last / first;
        let v = verdict(growth, tol.iuc_bounded_growth, tol.iuc_blowup_growth);
        let expected = if theta > 1.0 {
            IucVerdict::IucConsistent
        } else {
            IucVerdict::NonIucConsistent
        };
        out.check(
            format!("iuc_verdict_{}", fmt_theta(theta)),
            v == expected,
            format!(
                "Lambda({}) grows by {growth:e} over R in [{}, {}]: {v:?}, expected {expected:?}",
                p.t,
                radii[0],
                radii[radii.len() - 1]
            ),
        );
        per_theta.push(json!({
            "theta": theta,
            "growth": growth,
            "verdict": v,
            "expected": expected,
            "rows": rows,
            "condition13": two_point,
        }));
        out.plots.push(plot);
    }
    out.record("h", &h);
    out.record("t", &p.t);
    out.record("thetas", &per_theta);
    Ok(out)
}
