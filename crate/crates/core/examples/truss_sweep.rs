//! Enumerates a synthetic data set with cold and warm starts.
//!
//! Warm starts follow one branch of local minimizers each, so the two warm
//! sweeps end up with stresses of opposite sign.
//!
//! ```text
//! cargo run --release --example truss_sweep -- [noise] [seed]
//! ```

use ddcm::constitutive::{generate_synthetic_data, ManifoldLaw};
use ddcm::newton::NewtonSettings;
use ddcm::truss::{dcnlp_enumerate, dcnlp_global_minimum, StartMode, TrussModel};

fn main() -> ddcm::Result<()> {
    let mut args = std::env::args().skip(1);
    let noise: f64 = args.next().map_or(0.0, |a| a.parse().expect("noise fraction"));
    let seed: u64 = args.next().map_or(7, |a| a.parse().expect("seed"));

    let law = ManifoldLaw::linear_explicit(vec![1.0])?;
    let data = generate_synthetic_data(&law, 101, (-10.0, 10.0), noise, seed)?;
    let model = TrussModel::unit_bar(20.0);
    let settings = NewtonSettings::with_tol(1e-10);

    let sweeps = [StartMode::Cold, StartMode::WarmAscending, StartMode::WarmDescending]
        .map(|mode| dcnlp_enumerate(&model, &data, mode, &settings));
    let sweeps: Vec<_> = sweeps.into_iter().collect::<ddcm::Result<_>>()?;
    for sweep in &sweeps {
        let signs: String = sweep
            .pairs
            .iter()
            .map(|p| match &p.state {
                Some(s) if p.converged && s.s < 0.0 => '-',
                Some(_) if p.converged => '+',
                _ => 'x',
            })
            .collect();
        println!(
            "{:<10} {:>3}/{} converged, median {:?} iterations",
            sweep.mode,
            sweep.converged_count(),
            sweep.pairs.len(),
            sweep.median_iterations()
        );
        println!("           {signs}");
    }
    let refs: Vec<_> = sweeps.iter().collect();
    if let Some((k, i)) = dcnlp_global_minimum(&refs) {
        let p = &sweeps[k].pairs[i];
        println!("global minimum: pair {} {:?}, cost {:.4e} ({})", i + 1, p.data, p.cost, sweeps[k].mode);
    }
    Ok(())
}
