//! Implicit laws, where the strain is a polynomial in the stress. Neither law
//! can be written as stress in terms of strain, but the solver only needs the
//! manifold `g(e, s) = 0`.
//!
//! ```text
//! cargo run --release --example implicit_laws
//! ```

use ddcm::assembly::{apply_paper_loads, build_quarter_arc, feasibility, solve_structure, stress_distribution, symmetry_diagnostics, ARC_ELEMENTS};
use ddcm::constitutive::LawPreset;
use ddcm::newton::NewtonSettings;

fn main() -> ddcm::Result<()> {
    for preset in [LawPreset::ImplicitAntisym, LawPreset::ImplicitNonsym] {
        let law = preset.law();
        let report = law.consistency_check(-200.0, 200.0);
        println!("{preset}: consistent on [-200, 200]: {}", report.is_consistent());

        let mut structure = apply_paper_loads(build_quarter_arc(ARC_ELEMENTS)?)?;
        structure.law = law;
        let sol = solve_structure(&structure, &NewtonSettings::with_tol(1e-12))?;
        let sym = symmetry_diagnostics(&stress_distribution(&sol), 1e-6);
        println!("  {} iterations, mirror symmetric: {}", sol.iterations, sym.holds());
        println!("  largest mirror deviation: {:.2e}", sym.component_deviation.iter().fold(0.0f64, |a, &b| a.max(b)));
        println!("  {:?}", feasibility(&structure, &sol)?);
    }
    Ok(())
}
