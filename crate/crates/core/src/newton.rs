//! Full-step Newton iteration on the KKT conditions of an equality-constrained
//! NLP.
//!
//! A problem supplies its primal-dual residual `r(x)` and the KKT matrix
//! `S(x) = ∂r/∂x`. Every step solves `S(x) Δx = −r(x)` with the dense
//! symmetric-indefinite factorization in [`crate::linalg`] and takes the full
//! step. There is no line search or trust region.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::solve_kkt_linear;

/// Iterates with `‖x‖` above this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// An equality-constrained NLP seen through its KKT system.
///
/// Implementations must be pure: identical `x` yields identical output.
pub trait KktProblem {
    fn dim(&self) -> usize;

    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;

    fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn description(&self) -> String {
        String::from("KKT problem")
    }
}

/// A [`KktProblem`] built from two closures.
pub struct FnProblem<R, M> {
    dim: usize,
    residual: R,
    matrix: M,
    label: String,
}

impl<R, M> FnProblem<R, M>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    M: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    pub fn new(dim: usize, residual: R, matrix: M, label: impl Into<String>) -> Self {
        Self {
            dim,
            residual,
            matrix,
            label: label.into(),
        }
    }
}

impl<R, M> KktProblem for FnProblem<R, M>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    M: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.residual)(x)
    }

    fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.matrix)(x)
    }

    fn description(&self) -> String {
        self.label.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    /// Relative step tolerance: stop when `‖Δx‖ ≤ rel_tol · ‖x‖`.
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub record_trace: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iterations: 50,
            record_trace: false,
        }
    }
}

impl NewtonSettings {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn traced(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub x_star: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖Δx_k‖` per iteration (empty unless tracing).
    pub step_norms: Vec<f64>,
    /// `‖r(x_k)‖` at the start of each iteration (empty unless tracing).
    pub residual_norms: Vec<f64>,
}

/// Runs full-step Newton from `x0`.
///
/// Iteration `k` solves `S(x_k) Δx = −r(x_k)`, sets `x_{k+1} = x_k + Δx` and
/// reports convergence after `k` iterations when `‖Δx‖ ≤ rel_tol · ‖x_{k+1}‖`
/// (`‖Δx‖ ≤ rel_tol` when `x_{k+1} = 0`). A residual that is exactly zero at
/// the current iterate also counts as converged, without taking a step.
pub fn newton_solve<P: KktProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    settings: &NewtonSettings,
) -> Result<NewtonResult> {
    settings.validate()?;
    check_dim(problem.dim(), x0.len(), "initial guess")?;

    let mut x = x0.clone();
    let mut step_norms = Vec::new();
    let mut residual_norms = Vec::new();

    for iteration in 1..=settings.max_iterations {
        let r = problem.residual(&x);
        check_dim(problem.dim(), r.len(), "residual")?;
        let r_norm = r.norm();
        if !r_norm.is_finite() {
            return Err(Error::Diverged {
                iteration,
                reason: "non-finite residual".into(),
            });
        }
        if settings.record_trace {
            residual_norms.push(r_norm);
        }
        if r_norm == 0.0 {
            return Ok(NewtonResult {
                x_star: x,
                iterations: iteration - 1,
                converged: true,
                step_norms,
                residual_norms,
            });
        }

        let s = problem.matrix(&x);
        check_dim(problem.dim(), s.nrows(), "KKT matrix rows")?;
        check_dim(problem.dim(), s.ncols(), "KKT matrix columns")?;
        let dx = solve_kkt_linear(&s, &(-r))?;
        x += &dx;

        let dx_norm = dx.norm();
        let x_norm = x.norm();
        if settings.record_trace {
            step_norms.push(dx_norm);
        }
        if !x_norm.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration,
                reason: "non-finite iterate".into(),
            });
        }
        if x_norm > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                iteration,
                reason: format!("iterate norm {x_norm:.3e} exceeds {DIVERGENCE_NORM:.0e}"),
            });
        }

        let threshold = if x_norm > 0.0 {
            settings.rel_tol * x_norm
        } else {
            settings.rel_tol
        };
        if dx_norm <= threshold {
            return Ok(NewtonResult {
                x_star: x,
                iterations: iteration,
                converged: true,
                step_norms,
                residual_norms,
            });
        }
    }

    Ok(NewtonResult {
        x_star: x,
        iterations: settings.max_iterations,
        converged: false,
        step_norms,
        residual_norms,
    })
}

/// Central-difference approximation of `∂r/∂x` at `x`.
pub fn finite_difference_jacobian<P: KktProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    step: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let m = problem.dim();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + step;
        let rp = problem.residual(&xp);
        xp[j] = orig - step;
        let rm = problem.residual(&xp);
        xp[j] = orig;
        jac.set_column(j, &((rp - rm) / (2.0 * step)));
    }
    jac
}

/// Largest entrywise discrepancy `|S_ij − FD_ij| / (1 + |S_ij|)` between the
/// analytic KKT matrix and central differences of the residual.
pub fn jacobian_check<P: KktProblem + ?Sized>(problem: &P, x: &DVector<f64>, step: f64) -> f64 {
    let analytic = problem.matrix(x);
    let fd = finite_difference_jacobian(problem, x, step);
    analytic
        .iter()
        .zip(fd.iter())
        .map(|(a, f)| (a - f).abs() / (1.0 + a.abs()))
        .fold(0.0, f64::max)
}
