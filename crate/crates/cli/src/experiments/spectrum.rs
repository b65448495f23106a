use fklab::discretize::assemble_generator;
use fklab::spectral::{heat_kernel, solve_spectrum};
use serde_json::json;

use super::{phi1_trace, write_binary, Context, Outcome};
use crate::report::Table;
use crate::CliError;

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let tol = &c.tolerances;
    let grid = c.grid.build()?;
    let asm = assemble_generator(&c.model.kernel, &c.model.potential, grid)?;
    if ctx.options.export_matrix {
        write_binary(ctx, "operator.bin", |w| asm.write_binary(w))?;
    }
    let spec = solve_spectrum(&asm, grid.n)?;
    let norm = asm.norm();
    let mut out = Outcome::default();

    let l1 = spec.lambda1();
    let gap = spec.gap();
    out.check("lambda1_positive", l1 > 0.0, format!("lambda1 = {l1:e}"));
    out.check(
        "spectral_gap_positive",
        gap > 0.0,
        format!("lambda2 - lambda1 = {gap:e}"),
    );

    let sym_bound = if c.model.kernel.is_translation_invariant() {
        1e-6
    } else {
        10.0 * grid.h * grid.h
    };
    out.check(
        "matrix_symmetry",
        asm.asymmetry_defect <= sym_bound,
        format!(
            "relative defect {:e}, bound {sym_bound:e}",
            asm.asymmetry_defect
        ),
    );
    let lowest = spec.eigenvalues[0];
    out.check(
        "matrix_psd",
        lowest >= -1e-12 * norm,
        format!("smallest eigenvalue {lowest:e}"),
    );
    out.check(
        "eigen_residual",
        spec.max_residual <= tol.residual * norm,
        format!(
            "max residual {:e}, bound {:e}",
            spec.max_residual,
            tol.residual * norm
        ),
    );
    out.check(
        "orthonormality",
        spec.orthonormality_defect <= tol.orthonormality,
        format!("defect {:e}", spec.orthonormality_defect),
    );

    let phi = &spec.ground_state;
    let neg = phi.iter().filter(|&&p| !(p > 0.0)).count();
    out.check(
        "phi1_positive",
        neg == 0,
        format!("{neg} non-positive nodes"),
    );

    let form = asm.form(phi);
    let quadratic = asm.quadratic(phi);
    let var_rel = (form - l1).abs() / l1.abs();
    out.check(
        "variational_identity",
        var_rel <= tol.variational,
        format!("|D(phi1) - lambda1| / lambda1 = {var_rel:e}"),
    );

    let mut ck = Vec::new();
    for &t in &c.spectrum.heat_times {
        let p1 = heat_kernel(&spec, t);
        let p2 = heat_kernel(&spec, 2.0 * t);
        let composed = &p1.values * &p1.values * grid.h;
        let defect = (&p2.values - composed).abs().max() / p2.values.abs().max();
        let min_entry = p1.values.min();
        out.check(
            format!("chapman_kolmogorov_t{t}"),
            defect <= tol.chapman_kolmogorov,
            format!("relative defect {defect:e}"),
        );
        ck.push(json!({ "t": t, "relative_defect": defect, "min_entry": min_entry, "max_entry": p1.max_entry() }));
    }

    let modes = c.spectrum.modes.min(grid.n);
    out.record("grid", &grid);
    out.record("lambda1", &l1);
    out.record("lambda2", &spec.lambda2);
    out.record("gap", &gap);
    out.record("eigenvalues", &spec.eigenvalues[..modes].to_vec());
    out.record("operator_norm", &norm);
    out.record("asymmetry_defect", &asm.asymmetry_defect);
    out.record("max_residual", &spec.max_residual);
    out.record("orthonormality_defect", &spec.orthonormality_defect);
    out.record("form_phi1", &form);
    out.record("quadratic_phi1", &quadratic);
    out.record("chapman_kolmogorov", &ck);

    let mut eig = Table::new(&["index", "lambda"]);
    for (k, l) in spec.eigenvalues.iter().enumerate() {
        eig.push(&[(k + 1) as f64, *l]);
    }
    out.tables.push(("eigenvalues".into(), eig));
    out.plots.push(phi1_trace(&grid, phi, &asm.v, None));
    Ok(out)
}
