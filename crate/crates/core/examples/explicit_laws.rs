//! Cubic explicit laws on the quarter arc, with the stress distribution and
//! its mirror symmetry.
//!
//! ```text
//! cargo run --release --example explicit_laws
//! ```

use ddcm::assembly::{apply_paper_loads, build_quarter_arc, solve_structure, stress_distribution, symmetry_diagnostics, ARC_ELEMENTS};
use ddcm::constitutive::LawPreset;
use ddcm::newton::NewtonSettings;

fn main() -> ddcm::Result<()> {
    for preset in [LawPreset::ExplicitAntisym, LawPreset::ExplicitNonsym] {
        let mut structure = apply_paper_loads(build_quarter_arc(ARC_ELEMENTS)?)?;
        structure.law = preset.law();
        let sol = solve_structure(&structure, &NewtonSettings::with_tol(1e-12))?;
        let stress = stress_distribution(&sol);
        let sym = symmetry_diagnostics(&stress, 1e-6);
        println!("{preset}: {} iterations, mirror symmetric: {}", sol.iterations, sym.holds());
        println!("  element        n1        n2        n3        m1        m2        m3");
        for (k, s) in stress.iter().enumerate() {
            println!("  {:>7} {}", k + 1, s.iter().map(|v| format!("{v:>9.4}")).collect::<Vec<_>>().join(" "));
        }
    }
    Ok(())
}
