//! Single-element data-driven truss: the fixed-pair NLP and the enumeration
//! driver for the discrete-continuous problem.
//!
//! Unknowns of the fixed-pair problem are stacked as
//! `x = (q[6], e, s, λ, μ[n−m], ν[m])`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::constitutive::{DataSet, PhasePoint};
use crate::error::{check_dim, Error, Result};
use crate::io::fmt_f64;
use crate::newton::{newton_solve, FnProblem, KktProblem, NewtonResult, NewtonSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct TrussModel {
    /// Strain quadratic form: `e(q) = ½ qᵀ E q − e_ref`.
    pub e_mat: Matrix6<f64>,
    pub e_ref: f64,
    /// Linear constraints `H q = h_ref`.
    pub h_mat: DMatrix<f64>,
    pub h_ref: DVector<f64>,
    /// Constant basis of `ker H`.
    pub n_mat: DMatrix<f64>,
    pub f_ext: Vector6<f64>,
    pub c_weight: f64,
}

impl TrussModel {
    /// Unit-length bar along z with `φ₀` clamped, the free end sliding
    /// longitudinally and an axial end force `force`.
    pub fn unit_bar(force: f64) -> Self {
        let i3 = nalgebra::Matrix3::<f64>::identity();
        let mut e_mat = Matrix6::zeros();
        e_mat.fixed_view_mut::<3, 3>(0, 0).copy_from(&i3);
        e_mat.fixed_view_mut::<3, 3>(3, 3).copy_from(&i3);
        e_mat.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-i3));
        e_mat.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-i3));

        let mut h_mat = DMatrix::zeros(5, 6);
        h_mat.view_mut((0, 0), (5, 5)).fill_with_identity();
        let mut n_mat = DMatrix::zeros(6, 1);
        n_mat[(5, 0)] = 1.0;
        let mut f_ext = Vector6::zeros();
        f_ext[5] = force;

        Self {
            e_mat,
            e_ref: 0.5,
            h_mat,
            h_ref: DVector::zeros(5),
            n_mat,
            f_ext,
            c_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(6, self.h_mat.ncols(), "constraint Jacobian columns")?;
        check_dim(self.h_mat.nrows(), self.h_ref.len(), "constraint offset")?;
        check_dim(6, self.n_mat.nrows(), "null-space basis rows")?;
        check_dim(6 - self.h_mat.nrows(), self.n_mat.ncols(), "null-space basis columns")?;
        if (self.e_mat - self.e_mat.transpose()).amax() > 0.0 {
            return Err(Error::InvalidInput("strain form E must be symmetric".into()));
        }
        if (&self.h_mat * &self.n_mat).amax() > 1e-14 {
            return Err(Error::InvalidInput("H N must vanish".into()));
        }
        if self.n_mat.rank(1e-12) != self.n_mat.ncols() {
            return Err(Error::InvalidInput("null-space basis must have full column rank".into()));
        }
        if !(self.c_weight > 0.0) {
            return Err(Error::InvalidInput("weight must be positive".into()));
        }
        Ok(())
    }

    pub fn n_constraints(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_mat.ncols()
    }

    pub fn dim(&self) -> usize {
        6 + 3 + self.n_dofs() + self.n_constraints()
    }

    /// `½ qᵀ E q − e_ref`.
    pub fn strain(&self, q: &Vector6<f64>) -> f64 {
        0.5 * q.dot(&(self.e_mat * q)) - self.e_ref
    }

    /// The stress-free configuration with zero multipliers.
    pub fn cold_start(&self) -> FixNlpState {
        let mut q = Vector6::zeros();
        q[5] = 1.0;
        FixNlpState {
            q,
            e: 0.0,
            s: 0.0,
            lambda: 0.0,
            mu: DVector::zeros(self.n_dofs()),
            nu: DVector::zeros(self.n_constraints()),
        }
    }

    /// Displacement-based equilibrium with the linear law `s = stiffness · e`,
    /// solved by Newton in the free coordinates `q = q_cold + N u`.
    ///
    /// For the unit bar the residual is `stiffness · ½(q³ − q) − force`.
    pub fn standard_solve(&self, stiffness: f64, settings: &NewtonSettings) -> Result<(Vector6<f64>, NewtonResult)> {
        self.validate()?;
        let q0 = self.cold_start().q;
        let n = self.n_mat.clone();
        let coords = move |u: &DVector<f64>| -> Vector6<f64> { q0 + Vector6::from_iterator((&n * u).iter().copied()) };
        let n = &self.n_mat;
        let residual = |u: &DVector<f64>| {
            let q = coords(u);
            let internal = self.e_mat * q * (stiffness * self.strain(&q));
            n.transpose() * DVector::from_iterator(6, (internal - self.f_ext).iter().copied())
        };
        let matrix = |u: &DVector<f64>| {
            let q = coords(u);
            let eq = self.e_mat * q;
            let k = (eq * eq.transpose() + self.e_mat * self.strain(&q)) * stiffness;
            n.transpose() * DMatrix::from_iterator(6, 6, k.iter().copied()) * n
        };
        let problem = FnProblem::new(self.n_dofs(), residual, matrix, "truss standard equilibrium");
        let result = newton_solve(&problem, &DVector::zeros(self.n_dofs()), settings)?;
        Ok((coords(&result.x_star), result))
    }

    pub fn cost(&self, state: &FixNlpState, data: (f64, f64)) -> f64 {
        let c = self.c_weight;
        0.5 * c * (state.e - data.0).powi(2) + 0.5 / c * (state.s - data.1).powi(2)
    }

    pub fn fixnlp_residual(&self, state: &FixNlpState, data: &PhasePoint) -> Result<DVector<f64>> {
        self.check_state(state)?;
        check_dim(1, data.dim(), "truss data pair")?;
        let (et, st) = (data.strain[0], data.stress[0]);
        let c = self.c_weight;
        let eq = self.e_mat * state.q;
        let n_mu = &self.n_mat * &state.mu;
        let en_mu = self.e_mat * Vector6::from_column_slice(n_mu.as_slice());
        let m = self.n_constraints();
        let k = self.n_dofs();

        let mut r = DVector::zeros(self.dim());
        let r_q = -state.lambda * eq + state.s * en_mu + self.h_mat.transpose() * &state.nu;
        r.rows_mut(0, 6).copy_from(&r_q);
        r[6] = c * (state.e - et) + state.lambda;
        r[7] = (state.s - st) / c + state.q.dot(&en_mu);
        r[8] = -0.5 * state.q.dot(&eq) + state.e + self.e_ref;
        let nt = self.n_mat.transpose();
        let eq_d = DVector::from_column_slice(eq.as_slice());
        let f_d = DVector::from_column_slice(self.f_ext.as_slice());
        r.rows_mut(9, k).copy_from(&(&nt * (eq_d * state.s - f_d)));
        let q_d = DVector::from_column_slice(state.q.as_slice());
        r.rows_mut(9 + k, m).copy_from(&(&self.h_mat * q_d - &self.h_ref));
        Ok(r)
    }

    /// KKT matrix of the fixed-pair problem; independent of `e` and `ν`.
    pub fn fixnlp_matrix(&self, state: &FixNlpState) -> Result<DMatrix<f64>> {
        self.check_state(state)?;
        let (m, k) = (self.n_constraints(), self.n_dofs());
        let n = self.dim();
        let c = self.c_weight;
        let e = DMatrix::from_column_slice(6, 6, self.e_mat.as_slice());
        let q = DVector::from_column_slice(state.q.as_slice());
        let eq = &e * &q;
        let en = &e * &self.n_mat;
        let en_mu = &en * &state.mu;
        let (i_e, i_s, i_l, i_mu, i_nu) = (6, 7, 8, 9, 9 + k);

        let mut s = DMatrix::zeros(n, n);
        s.view_mut((0, 0), (6, 6)).copy_from(&(&e * -state.lambda));
        s.view_mut((0, i_s), (6, 1)).copy_from(&en_mu);
        s.view_mut((i_s, 0), (1, 6)).copy_from(&en_mu.transpose());
        s.view_mut((0, i_l), (6, 1)).copy_from(&(-&eq));
        s.view_mut((i_l, 0), (1, 6)).copy_from(&(-eq.transpose()));
        s.view_mut((0, i_mu), (6, k)).copy_from(&(&en * state.s));
        s.view_mut((i_mu, 0), (k, 6)).copy_from(&(en.transpose() * state.s));
        s.view_mut((0, i_nu), (6, m)).copy_from(&self.h_mat.transpose());
        s.view_mut((i_nu, 0), (m, 6)).copy_from(&self.h_mat);
        s[(i_e, i_e)] = c;
        s[(i_e, i_l)] = 1.0;
        s[(i_l, i_e)] = 1.0;
        s[(i_s, i_s)] = 1.0 / c;
        let qt_en = q.transpose() * &en;
        s.view_mut((i_s, i_mu), (1, k)).copy_from(&qt_en);
        s.view_mut((i_mu, i_s), (k, 1)).copy_from(&qt_en.transpose());
        Ok(s)
    }

    fn check_state(&self, state: &FixNlpState) -> Result<()> {
        check_dim(self.n_dofs(), state.mu.len(), "balance multipliers")?;
        check_dim(self.n_constraints(), state.nu.len(), "constraint multipliers")
    }
}

/// Primal-dual point of the fixed-pair truss problem.
#[derive(Clone, Debug, PartialEq)]
pub struct FixNlpState {
    pub q: Vector6<f64>,
    pub e: f64,
    pub s: f64,
    pub lambda: f64,
    pub mu: DVector<f64>,
    pub nu: DVector<f64>,
}

impl FixNlpState {
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(9 + self.mu.len() + self.nu.len());
        v.extend_from_slice(self.q.as_slice());
        v.extend_from_slice(&[self.e, self.s, self.lambda]);
        v.extend_from_slice(self.mu.as_slice());
        v.extend_from_slice(self.nu.as_slice());
        DVector::from_vec(v)
    }

    pub fn from_vector(model: &TrussModel, x: &DVector<f64>) -> Result<Self> {
        check_dim(model.dim(), x.len(), "truss unknown vector")?;
        let k = model.n_dofs();
        Ok(Self {
            q: Vector6::from_column_slice(&x.as_slice()[..6]),
            e: x[6],
            s: x[7],
            lambda: x[8],
            mu: x.rows(9, k).into_owned(),
            nu: x.rows(9 + k, model.n_constraints()).into_owned(),
        })
    }
}

/// The fixed-pair NLP for one measurement `(ẽ, s̃)`.
pub struct FixNlpProblem<'a> {
    pub model: &'a TrussModel,
    pub data: PhasePoint,
}

impl KktProblem for FixNlpProblem<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let state = FixNlpState::from_vector(self.model, x).expect("dimension checked by solver");
        self.model
            .fixnlp_residual(&state, &self.data)
            .expect("state built from model dimensions")
    }

    fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let state = FixNlpState::from_vector(self.model, x).expect("dimension checked by solver");
        self.model
            .fixnlp_matrix(&state)
            .expect("state built from model dimensions")
    }

    fn description(&self) -> String {
        format!(
            "truss fixNLP at ({}, {})",
            self.data.strain[0], self.data.stress[0]
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartMode {
    Cold,
    WarmAscending,
    WarmDescending,
}

impl StartMode {
    pub fn name(self) -> &'static str {
        match self {
            StartMode::Cold => "cold",
            StartMode::WarmAscending => "warm-asc",
            StartMode::WarmDescending => "warm-desc",
        }
    }
}

impl FromStr for StartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(StartMode::Cold),
            "warm-asc" => Ok(StartMode::WarmAscending),
            "warm-desc" => Ok(StartMode::WarmDescending),
            other => Err(Error::InvalidInput(format!("unknown start mode '{other}'"))),
        }
    }
}

impl fmt::Display for StartMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct PairResult {
    /// Zero-based position in the data set.
    pub index: usize,
    pub data: (f64, f64),
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    /// Final iterate; `None` when the solver failed outright.
    pub state: Option<FixNlpState>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub mode: StartMode,
    /// In data-set order, regardless of the solve order.
    pub pairs: Vec<PairResult>,
    /// Zero-based index of the lowest cost among converged pairs.
    pub global_min: Option<usize>,
}

impl SweepResult {
    pub fn converged_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.converged).count()
    }

    pub fn median_iterations(&self) -> Option<f64> {
        let mut its: Vec<usize> = self
            .pairs
            .iter()
            .filter(|p| p.converged)
            .map(|p| p.iterations)
            .collect();
        if its.is_empty() {
            return None;
        }
        its.sort_unstable();
        let n = its.len();
        Some(if n % 2 == 1 {
            its[n / 2] as f64
        } else {
            0.5 * (its[n / 2 - 1] + its[n / 2]) as f64
        })
    }

    /// Writes `index,strain,stress,converged,iterations,cost,q,e,s` with a
    /// one-based index; `q` is the free longitudinal coordinate.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,strain,stress,converged,iterations,cost,q,e,s")?;
        for p in &self.pairs {
            let (q, e, s) = match &p.state {
                Some(st) => (st.q[5], st.e, st.s),
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.index + 1,
                fmt_f64(p.data.0),
                fmt_f64(p.data.1),
                p.converged,
                p.iterations,
                fmt_f64(p.cost),
                fmt_f64(q),
                fmt_f64(e),
                fmt_f64(s),
            )?;
        }
        Ok(())
    }
}

/// Solves the fixed-pair problem for every measurement.
///
/// `Cold` starts every pair from [`TrussModel::cold_start`]. The warm modes
/// cold-start the first pair in their order and then start each pair from the
/// last converged solution. Solver failures are recorded per pair.
pub fn dcnlp_enumerate(
    model: &TrussModel,
    data: &DataSet,
    start: StartMode,
    settings: &NewtonSettings,
) -> Result<SweepResult> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data set is empty".into()));
    }
    model.validate()?;
    let order: Vec<usize> = match start {
        StartMode::Cold | StartMode::WarmAscending => (0..data.len()).collect(),
        StartMode::WarmDescending => (0..data.len()).rev().collect(),
    };
    let cold = model.cold_start().to_vector();
    let mut warm: Option<DVector<f64>> = None;
    let mut results: Vec<Option<PairResult>> = vec![None; data.len()];

    for &index in &order {
        let x0 = match (start, &warm) {
            (StartMode::Cold, _) | (_, None) => cold.clone(),
            (_, Some(prev)) => prev.clone(),
        };
        let problem = FixNlpProblem {
            model,
            data: data.point(index),
        };
        let pair = data.pairs()[index];
        let result = match newton_solve(&problem, &x0, settings) {
            Ok(res) => {
                let state = FixNlpState::from_vector(model, &res.x_star)?;
                let cost = model.cost(&state, pair);
                if res.converged {
                    warm = Some(res.x_star.clone());
                }
                PairResult {
                    index,
                    data: pair,
                    converged: res.converged,
                    iterations: res.iterations,
                    cost,
                    state: Some(state),
                    error: None,
                }
            }
            Err(err) => PairResult {
                index,
                data: pair,
                converged: false,
                iterations: 0,
                cost: f64::NAN,
                state: None,
                error: Some(err.to_string()),
            },
        };
        results[index] = Some(result);
    }

    let pairs: Vec<PairResult> = results.into_iter().map(|r| r.expect("every pair solved")).collect();
    let global_min = pairs
        .iter()
        .filter(|p| p.converged)
        .fold(None::<&PairResult>, |best, p| match best {
            Some(b) if b.cost <= p.cost => Some(b),
            _ => Some(p),
        })
        .map(|p| p.index);
    Ok(SweepResult {
        mode: start,
        pairs,
        global_min,
    })
}

/// Lowest cost over the converged pairs of several sweeps.
///
/// A single warm sweep follows one branch of local minimizers, so its minimum
/// is a branch minimum. Combining sweeps that cover every branch gives the
/// DCNLP minimum. Returns `(sweep position, pair index)`; ties go to the lowest
/// pair index, then the earliest sweep.
pub fn dcnlp_global_minimum(sweeps: &[&SweepResult]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (k, sweep) in sweeps.iter().enumerate() {
        for p in sweep.pairs.iter().filter(|p| p.converged) {
            let better = match best {
                None => true,
                Some((bk, bi, bc)) => p.cost < bc || (p.cost == bc && (p.index, k) < (bi, bk)),
            };
            if better {
                best = Some((k, p.index, p.cost));
            }
        }
    }
    best.map(|(k, i, _)| (k, i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::jacobian_check;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn free_end(q: f64) -> Vector6<f64> {
        Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, q)
    }

    fn random_state(model: &TrussModel, rng: &mut ChaCha8Rng) -> FixNlpState {
        let mut x = DVector::from_fn(model.dim(), |_, _| rng.random_range(-2.0..2.0));
        x[5] += 1.5;
        FixNlpState::from_vector(model, &x).unwrap()
    }

    #[test]
    fn model_is_valid() {
        let m = TrussModel::unit_bar(20.0);
        m.validate().unwrap();
        assert_eq!((&m.h_mat * &m.n_mat).amax(), 0.0);
        assert_eq!(m.dim(), 15);
    }

    #[test]
    fn strain_values() {
        let m = TrussModel::unit_bar(20.0);
        assert_eq!(m.strain(&free_end(1.0)), 0.0);
        assert_relative_eq!(m.strain(&free_end(3.51739351)), 5.68602856, epsilon = 1e-7);
        // doubling q quadruples the quadratic part
        let q = Vector6::new(0.1, -0.2, 0.3, 0.4, 0.5, 1.7);
        let quad = m.strain(&q) + m.e_ref;
        assert_relative_eq!(m.strain(&(2.0 * q)) + m.e_ref, 4.0 * quad, epsilon = 1e-14);
    }

    #[test]
    fn standard_solve_finds_real_root() {
        let m = TrussModel::unit_bar(20.0);
        let (q, res) = m.standard_solve(1.0, &NewtonSettings::with_tol(1e-12)).unwrap();
        assert!(res.converged);
        // independent oracle: the real root of q³ − q − 40 by Cardano
        let (p, r) = (-1.0f64, -40.0f64);
        let disc = (r / 2.0).powi(2) + (p / 3.0).powi(3);
        let root = (-r / 2.0 + disc.sqrt()).cbrt() + (-r / 2.0 - disc.sqrt()).cbrt();
        assert_relative_eq!(q[5], root, epsilon = 1e-12);
        assert_relative_eq!(m.strain(&q), 0.5 * (root * root - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn unloaded_equilibrium_residual() {
        let m = TrussModel::unit_bar(0.0);
        let r = m.fixnlp_residual(&m.cold_start(), &PhasePoint::scalar(0.0, 0.0)).unwrap();
        assert_eq!(r.amax(), 0.0);
    }

    #[test]
    fn zero_multiplier_block() {
        let m = TrussModel::unit_bar(20.0);
        let s = m.fixnlp_matrix(&m.cold_start()).unwrap();
        assert_eq!(s.view((0, 0), (6, 6)).amax(), 0.0);
    }

    #[test]
    fn matrix_symmetric_and_consistent() {
        let m = TrussModel::unit_bar(20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let st = random_state(&m, &mut rng);
            let s = m.fixnlp_matrix(&st).unwrap();
            assert!((&s - s.transpose()).amax() <= 1e-12);
            let p = FixNlpProblem {
                model: &m,
                data: PhasePoint::scalar(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            };
            let d = jacobian_check(&p, &st.to_vector(), 1e-6);
            assert!(d < 1e-6, "{d}");
        }
    }

    #[test]
    fn dimension_errors() {
        let m = TrussModel::unit_bar(20.0);
        let mut st = m.cold_start();
        st.nu = DVector::zeros(4);
        assert!(matches!(
            m.fixnlp_residual(&st, &PhasePoint::scalar(0.0, 0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.fixnlp_matrix(&st).is_err());
        assert!(m
            .fixnlp_residual(&m.cold_start(), &PhasePoint::zeros(2))
            .is_err());
    }

    #[test]
    fn invalid_null_space_rejected() {
        let mut m = TrussModel::unit_bar(20.0);
        m.n_mat[(0, 0)] = 1.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn cold_start_on_analytic_pair() {
        let m = TrussModel::unit_bar(20.0);
        let p = FixNlpProblem {
            model: &m,
            data: PhasePoint::scalar(5.6, 5.6),
        };
        let res = newton_solve(&p, &m.cold_start().to_vector(), &NewtonSettings::with_tol(1e-10))
            .unwrap();
        assert!(res.converged);
        let st = FixNlpState::from_vector(&m, &res.x_star).unwrap();
        assert!(p.residual(&res.x_star).norm() < 1e-8);
        assert!((st.e - m.strain(&st.q)).abs() < 1e-9);
        assert!((st.s * st.q[5] - 20.0).abs() < 1e-8);
    }

    #[test]
    fn empty_dataset_rejected() {
        let m = TrussModel::unit_bar(20.0);
        let data = DataSet::new(vec![]).unwrap();
        assert!(dcnlp_enumerate(&m, &data, StartMode::Cold, &NewtonSettings::default()).is_err());
    }

    #[test]
    fn start_mode_names() {
        for mode in [StartMode::Cold, StartMode::WarmAscending, StartMode::WarmDescending] {
            assert_eq!(mode.name().parse::<StartMode>().unwrap(), mode);
        }
        assert!("warm".parse::<StartMode>().is_err());
    }
}
