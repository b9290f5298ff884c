//! Displacement-based truss equilibrium and the phase state it lands on.
//!
//! ```text
//! cargo run --example truss_root
//! ```

use ddcm::newton::NewtonSettings;
use ddcm::truss::TrussModel;

fn main() -> ddcm::Result<()> {
    let model = TrussModel::unit_bar(20.0);
    let (q, result) = model.standard_solve(1.0, &NewtonSettings::with_tol(1e-12).traced())?;
    for (k, step) in result.step_norms.iter().enumerate() {
        println!("iteration {}: |dq| = {step:.3e}", k + 1);
    }
    let e = model.strain(&q);
    println!("free end q = {:.8}", q[5]);
    println!("phase state (e, s) = ({e:.8}, {e:.8})");
    Ok(())
}
