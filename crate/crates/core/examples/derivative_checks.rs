//! Finite-difference checks of every analytic derivative, and the same check
//! applied to a problem of your own.
//!
//! ```text
//! cargo run --release --example derivative_checks -- [seed] [points]
//! ```

use ddcm::checks::{check_problem, run_derivative_checks, DEFAULT_THRESHOLD};
use ddcm::newton::FnProblem;
use nalgebra::{DMatrix, DVector};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(1, |a| a.parse().expect("seed"));
    let points = args.next().map_or(10, |a| a.parse().expect("points"));
    println!("{}\n", run_derivative_checks(seed, points, DEFAULT_THRESHOLD));

    // r(x) = (x0² − x1, sin x1); the second Jacobian has a deliberate sign slip
    let r = |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0] - x[1], x[1].sin()]);
    let good = FnProblem::new(2, r, |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[2.0 * x[0], -1.0, 0.0, x[1].cos()]), "good");
    let bad = FnProblem::new(2, r, |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 1.0, 0.0, x[1].cos()]), "bad");
    let states = [DVector::from_vec(vec![0.3, -1.2]), DVector::from_vec(vec![2.0, 0.5])];
    println!("{}", check_problem("hand-written Jacobian", &good, &states, DEFAULT_THRESHOLD));
    println!("{}", check_problem("sign slip", &bad, &states, DEFAULT_THRESHOLD));
}
