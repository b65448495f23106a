use fklab::discretize::assemble_generator;
use fklab::model::Ball;
use fklab::montecarlo::{
    decay_rate, exit_time_stats, fk_estimate, simulate_paths, window_linearity, write_path_dump,
    FkTarget,
};
use fklab::spectral::solve_spectrum;

use super::{scheme, write_binary, Context, Outcome};
use crate::report::{PlotKind, PlotTable, Table};
use crate::CliError;

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let p = &c.mc_lemmas;
    let tol = &c.tolerances;
    let kernel = &c.model.kernel;
    let fine = scheme(ctx, kernel, c.scheme.eps_cut, c.scheme.dt)?;
    let mut out = Outcome::default();

    let exit = exit_time_stats(kernel, &fine, &p.exit_radii, p.exit_paths)?;
    let hw = tol.exit_slope_halfwidth;
    out.check(
        "exit_time_slope",
        (exit.slope - exit.exponent).abs() <= hw,
        format!(
            "slope {:.4}, admissible {} +- {hw}",
            exit.slope, exit.exponent
        ),
    );
    out.check(
        "exit_time_collapse",
        exit.collapse_ratio < tol.exit_collapse_max,
        format!(
            "max/min of median/r^{} = {:.4}",
            exit.exponent, exit.collapse_ratio
        ),
    );
    let mut plot = PlotTable::new(PlotKind::McScaling, None);
    for row in &exit.rows {
        plot.table.push(&[
            row.r,
            row.median,
            row.exited_fraction,
            row.median / row.r.powf(exit.exponent),
        ]);
    }
    out.plots.push(plot);
    out.record("exit_times", &exit);

    let b = Ball::new(p.window_b.0, p.window_b.1);
    let d = Ball::new(p.window_d.0, p.window_d.1);
    let lin = window_linearity(
        kernel,
        &fine,
        &b,
        &d,
        p.window_t1,
        p.window_width,
        p.window_paths,
        p.window_eps,
    )?;
    let (lo, hi) = tol.window_ratio;
    out.check(
        "window_linearity",
        lin.ratio >= lo && lin.ratio <= hi,
        format!(
            "doubling the window scales the probability by {:.4}, admissible [{lo}, {hi}]",
            lin.ratio
        ),
    );
    out.record("window", &lin);

    let grid = c.grid.build()?;
    let asm = assemble_generator(kernel, &c.model.potential, grid)?;
    let lambda1 = solve_spectrum(&asm, 1)?.lambda1();
    let coarse = scheme(ctx, kernel, p.fk_eps_cut, p.fk_dt)?;
    let est = fk_estimate(
        kernel,
        &c.model.potential,
        &coarse,
        0.0,
        &p.fk_times,
        FkTarget::Box(grid.r),
        p.fk_paths,
    )?;
    let rate = decay_rate(&p.fk_times, &est)?;
    let gap = (rate - lambda1).abs() / lambda1;
    out.check(
        "fk_spectral_agreement",
        gap < tol.fk_relative_gap,
        format!(
            "Monte Carlo rate {rate:.4} vs spectral lambda1 {lambda1:.4}, relative gap {gap:.4}"
        ),
    );
    let mut fk = Table::new(&["t", "estimate", "ci_low", "ci_high"]);
    for (t, e) in p.fk_times.iter().zip(&est) {
        fk.push(&[*t, e.estimate, e.ci_low, e.ci_high]);
    }
    out.tables.push(("feynman_kac".into(), fk));
    out.record("fk_estimates", &est);
    out.record("fk_rate", &rate);
    out.record("spectral_lambda1", &lambda1);
    out.record("spectral_grid", &grid);

    if ctx.options.dump_paths {
        let paths = simulate_paths(
            kernel,
            Some(&c.model.potential),
            &fine,
            0.0,
            p.dump_horizon,
            p.dump_count,
            &[],
            true,
        )?;
        write_binary(ctx, "paths.bin", |w| write_path_dump(w, &paths))?;
    }
    Ok(out)
}
