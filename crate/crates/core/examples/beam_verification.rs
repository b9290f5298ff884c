//! Loaded quarter arc with the linear law: Newton trace, the central node and
//! element 8.
//!
//! ```text
//! cargo run --release --example beam_verification
//! ```

use ddcm::assembly::{apply_paper_loads, build_quarter_arc, feasibility, solve_structure, ARC_ELEMENTS};
use ddcm::newton::NewtonSettings;

fn main() -> ddcm::Result<()> {
    let structure = apply_paper_loads(build_quarter_arc(ARC_ELEMENTS)?)?;
    println!("{} unknowns", structure.layout().dim());
    let sol = solve_structure(&structure, &NewtonSettings::with_tol(1e-12))?;
    for (k, (r, dx)) in sol.residual_norms.iter().zip(&sol.step_norms).enumerate() {
        println!("iteration {}: |r| = {r:.3e}  |dx| = {dx:.3e}", k + 1);
    }

    let node = &sol.nodes[10];
    println!("node 11");
    for (name, v) in [("phi0", node.phi0), ("d1", node.d1), ("d2", node.d2), ("d3", node.d3)] {
        println!("  {name:<4} {:>12.8} {:>12.8} {:>12.8}", v.x, v.y, v.z);
    }
    let el = &sol.elements[7];
    println!("element 8");
    let row = |v: &nalgebra::Vector6<f64>| v.iter().map(|x| format!("{x:>12.8}")).collect::<Vec<_>>().join(" ");
    println!("  e {}", row(&el.strain));
    println!("  s {}", row(&el.stress));
    println!("{:?}", feasibility(&structure, &sol)?);
    Ok(())
}
