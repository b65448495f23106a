use fklab::model::PotentialSpec;
use fklab::rates::{closed_form_verdict, iuc_integral_test, RateBundle, Verdict};
use serde_json::json;

use super::{Context, Outcome};
use crate::report::{PlotKind, PlotTable, Table};
use crate::CliError;

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let p = &c.rates_table;
    let kernel = &c.model.kernel;
    let mut out = Outcome::default();

    let bundle = RateBundle::new(kernel, c.model.potential.clone(), p.epsilon, p.constants)?;
    let mut plot = PlotTable::new(PlotKind::RateFunctions, None);
    for row in bundle.tabulate(&p.s_values) {
        plot.table.push(&[
            row.s,
            row.ln_beta,
            row.ln_gamma,
            row.ln_beta_hat,
            row.ln_beta_tilde,
        ]);
    }
    out.plots.push(plot);
    out.record("s0", &bundle.s0);
    out.record("r0", &bundle.r0);
    out.record(
        "closed_form_verdict",
        &closed_form_verdict(&c.model.potential),
    );
    out.record("integral_test", &iuc_integral_test(&bundle, p.integral_t0));

    let mut table = Table::new(&[
        "theta1",
        "theta2",
        "closed_form_finite",
        "numeric_finite",
        "agree",
    ]);
    let mut rows = Vec::new();
    let mut agree = 0;
    let mut contradictions = 0;
    for &(t1, t2) in &p.classifier_grid {
        let potential = PotentialSpec::power_log(1.0, t1, t2)?;
        let closed =
            closed_form_verdict(&potential).expect("power-log potential has a closed form");
        let b = RateBundle::new(kernel, potential, p.epsilon, p.constants)?;
        let numeric = iuc_integral_test(&b, p.integral_t0);
        let same = numeric.verdict == closed;
        agree += same as usize;
        contradictions += (numeric.verdict != Verdict::Undecided && !same) as usize;
        let code = |v: Verdict| match v {
            Verdict::Converges => 1.0,
            Verdict::Diverges => 0.0,
            Verdict::Undecided => f64::NAN,
        };
        table.push(&[
            t1,
            t2,
            code(closed),
            code(numeric.verdict),
            same as u8 as f64,
        ]);
        rows.push(json!({ "theta1": t1, "theta2": t2, "closed_form": closed, "numeric": numeric }));
    }
    let need = c
        .tolerances
        .classifier_min_agreement
        .min(p.classifier_grid.len());
    out.check(
        "classifier_agreement",
        agree >= need && contradictions == 0,
        format!(
            "{agree} of {} agree, {contradictions} contradict, need {need}",
            p.classifier_grid.len()
        ),
    );
    out.record("classifier", &rows);
    out.tables.push(("classifier".into(), table));
    Ok(out)
}
