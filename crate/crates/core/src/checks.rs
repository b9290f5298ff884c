//! Finite-difference oracles for every analytic derivative in the crate.
//!
//! Each check compares an analytic matrix with central differences of the
//! function it differentiates, at seeded random states, and records the
//! largest entrywise error `|A − FD| / (1 + |A|)`.

use std::fmt;

use nalgebra::{DMatrix, DVector, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{build_quarter_arc, ApproxNlpProblem};
use crate::beam::{
    constraint_stiffness, null_space_derivative, null_space_transpose_derivative, ElementState,
    NodeState, Vector12, Vector24,
};
use crate::constitutive::{LawPreset, PhasePoint};
use crate::newton::{jacobian_check, KktProblem};
use crate::truss::{FixNlpProblem, FixNlpState, TrussModel};

pub const DEFAULT_THRESHOLD: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub samples: usize,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub seed: u64,
    pub threshold: f64,
    pub entries: Vec<CheckEntry>,
}

impl DerivativeReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries
            .iter()
            .filter(move |e| !(e.max_error < self.threshold))
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn max_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for DerivativeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let verdict = if e.max_error < self.threshold { "ok" } else { "FAIL" };
            writeln!(f, "{:<40} {:>4} samples  max rel err {:.3e}  {verdict}", e.name, e.samples, e.max_error)?;
        }
        write!(f, "threshold {:.1e}, seed {}", self.threshold, self.seed)
    }
}

/// Largest `|A − FD| / (1 + |A|)` between `analytic` and central differences of `f` at `x`.
pub fn compare_with_fd<F>(f: F, x: &DVector<f64>, analytic: &DMatrix<f64>, step: f64) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    assert_eq!(analytic.ncols(), x.len(), "analytic Jacobian column count");
    let mut worst = 0.0f64;
    let mut xp = x.clone();
    for j in 0..x.len() {
        xp[j] = x[j] + step;
        let fp = f(&xp);
        xp[j] = x[j] - step;
        let fm = f(&xp);
        xp[j] = x[j];
        assert_eq!(fp.len(), analytic.nrows(), "analytic Jacobian row count");
        for i in 0..fp.len() {
            let fd = (fp[i] - fm[i]) / (2.0 * step);
            let a = analytic[(i, j)];
            let err = (a - fd).abs() / (1.0 + a.abs());
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
    }
    worst
}

fn dyn_vec<const N: usize>(v: &SVector<f64, N>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn dyn_mat<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn random_svec<const N: usize>(rng: &mut ChaCha8Rng, scale: f64) -> SVector<f64, N> {
    SVector::from_fn(|_, _| scale * rng.random_range(-1.0..1.0))
}

fn random_dvec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
}

struct Tracker {
    entries: Vec<CheckEntry>,
}

impl Tracker {
    fn record(&mut self, name: &str, err: f64) {
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => {
                e.samples += 1;
                e.max_error = e.max_error.max(err);
            }
            None => self.entries.push(CheckEntry {
                name: name.to_string(),
                samples: 1,
                max_error: err,
            }),
        }
    }
}

fn beam_checks(t: &mut Tracker, rng: &mut ChaCha8Rng, points: usize) {
    for _ in 0..points {
        let length = rng.random_range(0.05..1.0);
        let q: Vector24 = random_svec(rng, 1.0);
        let el = ElementState::from_vector(&q, length);
        let (gr, wr) = (random_svec::<3>(rng, 1.0), random_svec::<3>(rng, 1.0));
        let a: Vector24 = random_svec(rng, 1.0);
        let s = random_svec::<6>(rng, 1.0);
        let at = |x: &DVector<f64>| ElementState::from_vector(&Vector24::from_column_slice(x.as_slice()), length);
        let qd = dyn_vec(&q);

        let strain = |x: &DVector<f64>| dyn_vec(&at(x).strain(&gr, &wr));
        t.record("beam B = de/dq", compare_with_fd(strain, &qd, &dyn_mat(&el.b_matrix()), FD_STEP));
        let ba = |x: &DVector<f64>| dyn_vec(&(at(x).b_matrix() * a));
        t.record("beam U1(a) = d(B a)/dq", compare_with_fd(ba, &qd, &dyn_mat(&el.u1(&a)), FD_STEP));
        let bts = |x: &DVector<f64>| dyn_vec(&(at(x).b_matrix().transpose() * s));
        t.record("beam U2(s) = d(B^T s)/dq", compare_with_fd(bts, &qd, &dyn_mat(&el.u2(&s)), FD_STEP));

        let qn: Vector12 = random_svec(rng, 1.0);
        let nu = random_svec::<6>(rng, 1.0);
        let an: Vector12 = random_svec(rng, 1.0);
        let b = random_svec::<6>(rng, 1.0);
        let node = NodeState::from_vector(&qn);
        let nd = |x: &DVector<f64>| NodeState::from_vector(&Vector12::from_column_slice(x.as_slice()));
        let qnd = dyn_vec(&qn);
        let h = |x: &DVector<f64>| dyn_vec(&nd(x).h());
        t.record("node H = dh/dq", compare_with_fd(h, &qnd, &dyn_mat(&node.h_jacobian()), FD_STEP));
        let htnu = |x: &DVector<f64>| dyn_vec(&(nd(x).h_jacobian().transpose() * nu));
        t.record("node V(nu) = d(H^T nu)/dq", compare_with_fd(htnu, &qnd, &dyn_mat(&constraint_stiffness(&nu)), FD_STEP));
        let nta = |x: &DVector<f64>| dyn_vec(&(nd(x).null_space().transpose() * an));
        t.record(
            "node W1(a) = d(N^T a)/dq",
            compare_with_fd(nta, &qnd, &dyn_mat(&null_space_transpose_derivative(&an)), FD_STEP),
        );
        let nb = |x: &DVector<f64>| dyn_vec(&(nd(x).null_space() * b));
        t.record("node W2(b) = d(N b)/dq", compare_with_fd(nb, &qnd, &dyn_mat(&null_space_derivative(&b)), FD_STEP));
    }
}

fn constitutive_checks(t: &mut Tracker, rng: &mut ChaCha8Rng, points: usize) {
    for preset in LawPreset::ALL {
        let law = preset.law();
        let n = law.dim();
        for _ in 0..points {
            // stay inside the range where the polynomial laws are probed in practice
            let e = random_dvec(rng, n, 0.8);
            let s = random_dvec(rng, n, 40.0);
            let xi = random_dvec(rng, n, 1.0);
            let p = PhasePoint::new(e.clone(), s.clone());
            let (de, ds) = law.g_jacobians(&p).expect("preset dimension");
            let hc = law.g_hessian_contract(&p, &xi).expect("preset dimension");
            let g_of_e = |x: &DVector<f64>| law.g_eval(&PhasePoint::new(x.clone(), s.clone())).unwrap();
            let g_of_s = |x: &DVector<f64>| law.g_eval(&PhasePoint::new(e.clone(), x.clone())).unwrap();
            t.record(&format!("law {preset}: dg/de"), compare_with_fd(g_of_e, &e, &de, FD_STEP));
            t.record(&format!("law {preset}: dg/ds"), compare_with_fd(g_of_s, &s, &ds, FD_STEP));
            let contract = |e: &DVector<f64>, s: &DVector<f64>| {
                let (de, ds) = law.g_jacobians(&PhasePoint::new(e.clone(), s.clone())).unwrap();
                (de.transpose() * &xi, ds.transpose() * &xi)
            };
            let blocks = [
                ("d/de([dg/de]^T xi)", compare_with_fd(|x| contract(x, &s).0, &e, &hc.strain_strain, FD_STEP)),
                ("d/ds([dg/de]^T xi)", compare_with_fd(|x| contract(&e, x).0, &s, &hc.stress_strain, FD_STEP)),
                ("d/de([dg/ds]^T xi)", compare_with_fd(|x| contract(x, &s).1, &e, &hc.strain_stress, FD_STEP)),
                ("d/ds([dg/ds]^T xi)", compare_with_fd(|x| contract(&e, x).1, &s, &hc.stress_stress, FD_STEP)),
            ];
            for (name, err) in blocks {
                t.record(&format!("law {preset}: {name}"), err);
            }
        }
    }
}

fn truss_checks(t: &mut Tracker, rng: &mut ChaCha8Rng, points: usize) {
    let model = TrussModel::unit_bar(20.0);
    for _ in 0..points {
        let x = random_dvec(rng, model.dim(), 2.0);
        let state = FixNlpState::from_vector(&model, &x).expect("dimension");
        let data = PhasePoint::scalar(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let problem = FixNlpProblem { model: &model, data };
        t.record("truss fixNLP KKT matrix", jacobian_check(&problem, &state.to_vector(), FD_STEP));
    }
}

fn global_checks(t: &mut Tracker, rng: &mut ChaCha8Rng, points: usize) {
    for preset in LawPreset::ALL {
        let mut structure = build_quarter_arc(4).expect("valid arc");
        structure.law = preset.law();
        for f in structure.loads.iter_mut() {
            *f = Vector3::new(1.0, -2.0, 3.0);
        }
        let problem = ApproxNlpProblem::new(&structure).expect("valid structure");
        let x0 = structure.initial_guess();
        for _ in 0..points {
            let x = x0.map(|v| v + 0.3 * rng.random_range(-1.0..1.0));
            debug_assert_eq!(x.len(), problem.dim());
            t.record("global approximate-NLP KKT matrix", jacobian_check(&problem, &x, FD_STEP));
        }
    }
}

/// Runs every derivative check at `points` seeded random states per operator.
pub fn run_derivative_checks(seed: u64, points: usize, threshold: f64) -> DerivativeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker { entries: Vec::new() };
    let points = points.max(1);
    beam_checks(&mut t, &mut rng, points);
    constitutive_checks(&mut t, &mut rng, points);
    truss_checks(&mut t, &mut rng, points);
    global_checks(&mut t, &mut rng, points);
    DerivativeReport {
        seed,
        threshold,
        entries: t.entries,
    }
}

/// Checks an arbitrary problem the same way, for user-supplied models.
pub fn check_problem<P: KktProblem + ?Sized>(
    name: &str,
    problem: &P,
    states: &[DVector<f64>],
    threshold: f64,
) -> DerivativeReport {
    let mut t = Tracker { entries: Vec::new() };
    for x in states {
        t.record(name, jacobian_check(problem, x, FD_STEP));
    }
    DerivativeReport {
        seed: 0,
        threshold,
        entries: t.entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::FnProblem;

    #[test]
    fn default_suite_passes() {
        let report = run_derivative_checks(1, 10, DEFAULT_THRESHOLD);
        assert!(report.passed(), "{report}");
        assert!(report.entries.iter().all(|e| e.samples >= 10));
    }

    #[test]
    fn more_points_more_samples() {
        let a = run_derivative_checks(3, 2, DEFAULT_THRESHOLD);
        let b = run_derivative_checks(3, 4, DEFAULT_THRESHOLD);
        assert!(a.entries.iter().zip(&b.entries).all(|(x, y)| x.samples < y.samples));
        assert_eq!(a, run_derivative_checks(3, 2, DEFAULT_THRESHOLD));
    }

    #[test]
    fn sign_error_is_caught() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let a2 = a.clone();
        let wrong = FnProblem::new(2, move |x: &DVector<f64>| &a * x, move |_: &DVector<f64>| -&a2, "flipped");
        let report = check_problem("flipped", &wrong, &[DVector::from_vec(vec![0.5, -1.0])], DEFAULT_THRESHOLD);
        assert!(!report.passed());
        assert!(report.to_string().contains("FAIL"));
    }
}
