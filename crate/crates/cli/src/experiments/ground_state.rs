use fklab::bounds::{
    envelope_sandwich_report, eval_envelope, fit_decay, fit_window, DecayModel, Envelope, Side,
};
use fklab::discretize::assemble_generator;
use fklab::spectral::solve_spectrum;

use super::{phi1_trace, power_theta, write_binary, Context, Outcome};
use crate::report::{PlotKind, PlotTable};
use crate::CliError;

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let p = &c.ground_state_fit;
    let tol = &c.tolerances;
    let kernel = &c.model.kernel;
    let theta = power_theta(&c.model.potential)?;
    let grid = c.grid.build()?;
    let asm = assemble_generator(kernel, &c.model.potential, grid)?;
    if ctx.options.export_matrix {
        write_binary(ctx, "operator.bin", |w| asm.write_binary(w))?;
    }
    let spec = solve_spectrum(&asm, 2)?;
    let phi = &spec.ground_state;
    let fixed = fit_decay(&grid, phi, DecayModel::BFixed { b: p.b_fixed })?;
    let free = fit_decay(&grid, phi, DecayModel::PowerLogBFree)?;
    let mut out = Outcome::default();

    let (lower, upper) = match kernel.gamma {
        None => {
            let (lo, hi) = (tol.decay_a_band.0 * theta, tol.decay_a_band.1 * theta);
            out.check(
                "decay_constant_a",
                fixed.a >= lo && fixed.a <= hi,
                format!(
                    "a = {:.4} with b = {}, admissible [{lo}, {hi}]",
                    fixed.a, p.b_fixed
                ),
            );
            (
                Envelope::FiniteRange {
                    side: Side::Lower,
                    eps: p.envelope_eps,
                    theta,
                },
                Envelope::FiniteRange {
                    side: Side::Upper,
                    eps: p.envelope_eps,
                    theta,
                },
            )
        }
        Some(gamma) => {
            let target = (gamma - 1.0) / gamma;
            let hw = tol.decay_b_halfwidth;
            out.check(
                "decay_exponent_b",
                (free.b - target).abs() <= hw,
                format!(
                    "free b = {:.4}, admissible [{}, {}]",
                    free.b,
                    target - hw,
                    target + hw
                ),
            );
            (
                Envelope::Tempered {
                    side: Side::Lower,
                    gamma,
                    theta,
                    c: p.tempered_c,
                },
                Envelope::Tempered {
                    side: Side::Upper,
                    gamma,
                    theta,
                    c: p.tempered_c,
                },
            )
        }
    };
    let sandwich = envelope_sandwich_report(&grid, phi, &lower, &upper)?;
    out.check(
        "envelope_sandwich",
        sandwich.violation_fraction <= tol.sandwich_max_fraction,
        format!(
            "{} of {} window nodes outside the band",
            sandwich.violations, sandwich.nodes
        ),
    );

    let mut overlay = PlotTable::new(PlotKind::EnvelopeOverlay, None);
    for i in fit_window(&grid) {
        let x = grid.x(i);
        let lo = -eval_envelope(&lower, x)? + sandwich.lower_offset;
        let hi = -eval_envelope(&upper, x)? + sandwich.upper_offset;
        overlay.table.push(&[x, -phi[i].ln(), lo, hi]);
    }

    out.record("grid", &grid);
    out.record("theta", &theta);
    out.record("lambda1", &spec.lambda1());
    out.record("fit_b_fixed", &fixed);
    out.record("fit_b_free", &free);
    out.record("envelopes", &[&lower, &upper]);
    out.record("sandwich", &sandwich);
    out.plots.push(phi1_trace(&grid, phi, &asm.v, None));
    out.plots.push(overlay);
    Ok(out)
}
