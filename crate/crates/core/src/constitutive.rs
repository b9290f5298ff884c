//! Implicit constitutive manifolds `g(ě, š) = 0` and measurement data sets.
//!
//! All laws here are componentwise decoupled polynomials. For the explicit
//! families the stress is a cubic in the strain,
//!
//! ```text
//! g_i = š_i − a_i ě_i − (b_i/2) ě_i² − (c_i/3) ě_i³
//! ```
//!
//! and the implicit families swap the roles of strain and stress. The linear
//! kinds are the same formulas with `b = c = 0`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    LinearExplicit,
    LinearImplicit,
    PolyExplicit,
    PolyImplicit,
}

impl LawKind {
    pub fn is_explicit(self) -> bool {
        matches!(self, LawKind::LinearExplicit | LawKind::PolyExplicit)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldLaw {
    pub kind: LawKind,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub strain: DVector<f64>,
    pub stress: DVector<f64>,
}

impl PhasePoint {
    pub fn new(strain: DVector<f64>, stress: DVector<f64>) -> Self {
        Self { strain, stress }
    }

    pub fn scalar(strain: f64, stress: f64) -> Self {
        Self {
            strain: DVector::from_element(1, strain),
            stress: DVector::from_element(1, stress),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            strain: DVector::zeros(dim),
            stress: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.strain.len()
    }
}

/// The four second-derivative contractions of `g` with a multiplier `ξ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianContraction {
    /// `∂ě([∂ě g]ᵀ ξ)`
    pub strain_strain: DMatrix<f64>,
    /// `∂š([∂ě g]ᵀ ξ)`
    pub stress_strain: DMatrix<f64>,
    /// `∂ě([∂š g]ᵀ ξ)`
    pub strain_stress: DMatrix<f64>,
    /// `∂š([∂š g]ᵀ ξ)`
    pub stress_stress: DMatrix<f64>,
}

impl ManifoldLaw {
    pub fn new(kind: LawKind, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let law = Self { kind, a, b, c };
        law.validate()?;
        Ok(law)
    }

    pub fn linear_explicit(a: Vec<f64>) -> Result<Self> {
        let n = a.len();
        Self::new(LawKind::LinearExplicit, a, vec![0.0; n], vec![0.0; n])
    }

    pub fn linear_implicit(a: Vec<f64>) -> Result<Self> {
        let n = a.len();
        Self::new(LawKind::LinearImplicit, a, vec![0.0; n], vec![0.0; n])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        if n == 0 {
            return Err(Error::InvalidInput("law must have at least one component".into()));
        }
        check_dim(n, self.b.len(), "quadratic law coefficients")?;
        check_dim(n, self.c.len(), "cubic law coefficients")?;
        if let Some(a) = self.a.iter().find(|a| !(**a > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "linear law coefficients must be positive, got {a}"
            )));
        }
        if matches!(self.kind, LawKind::LinearExplicit | LawKind::LinearImplicit)
            && self.b.iter().chain(&self.c).any(|v| *v != 0.0)
        {
            return Err(Error::InvalidInput(
                "linear laws cannot carry quadratic or cubic coefficients".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    fn check_point(&self, p: &PhasePoint) -> Result<()> {
        check_dim(self.dim(), p.strain.len(), "phase point strain")?;
        check_dim(self.dim(), p.stress.len(), "phase point stress")
    }

    /// `a x + (b/2) x² + (c/3) x³` for component `i`.
    pub fn polynomial(&self, i: usize, x: f64) -> f64 {
        x * (self.a[i] + x * (0.5 * self.b[i] + x * self.c[i] / 3.0))
    }

    fn polynomial_slope(&self, i: usize, x: f64) -> f64 {
        self.a[i] + x * (self.b[i] + x * self.c[i])
    }

    fn polynomial_curvature(&self, i: usize, x: f64) -> f64 {
        self.b[i] + 2.0 * self.c[i] * x
    }

    /// Stress on the manifold for an explicit law.
    pub fn explicit_stress(&self, strain: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.kind.is_explicit() {
            return Err(Error::UnsupportedLaw(format!(
                "{:?} does not define stress explicitly",
                self.kind
            )));
        }
        check_dim(self.dim(), strain.len(), "strain")?;
        Ok(DVector::from_fn(self.dim(), |i, _| self.polynomial(i, strain[i])))
    }

    /// Strain on the manifold for an implicit law.
    pub fn implicit_strain(&self, stress: &DVector<f64>) -> Result<DVector<f64>> {
        if self.kind.is_explicit() {
            return Err(Error::UnsupportedLaw(format!(
                "{:?} does not define strain explicitly",
                self.kind
            )));
        }
        check_dim(self.dim(), stress.len(), "stress")?;
        Ok(DVector::from_fn(self.dim(), |i, _| self.polynomial(i, stress[i])))
    }

    pub fn g_eval(&self, p: &PhasePoint) -> Result<DVector<f64>> {
        self.check_point(p)?;
        let n = self.dim();
        Ok(if self.kind.is_explicit() {
            DVector::from_fn(n, |i, _| p.stress[i] - self.polynomial(i, p.strain[i]))
        } else {
            DVector::from_fn(n, |i, _| p.strain[i] - self.polynomial(i, p.stress[i]))
        })
    }

    /// Returns `(∂ě g, ∂š g)`.
    pub fn g_jacobians(&self, p: &PhasePoint) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_point(p)?;
        let n = self.dim();
        let eye = DMatrix::identity(n, n);
        Ok(if self.kind.is_explicit() {
            let d = DVector::from_fn(n, |i, _| -self.polynomial_slope(i, p.strain[i]));
            (DMatrix::from_diagonal(&d), eye)
        } else {
            let d = DVector::from_fn(n, |i, _| -self.polynomial_slope(i, p.stress[i]));
            (eye, DMatrix::from_diagonal(&d))
        })
    }

    pub fn g_hessian_contract(&self, p: &PhasePoint, xi: &DVector<f64>) -> Result<HessianContraction> {
        self.check_point(p)?;
        check_dim(self.dim(), xi.len(), "manifold multiplier")?;
        let n = self.dim();
        let zero = DMatrix::zeros(n, n);
        let mut out = HessianContraction {
            strain_strain: zero.clone(),
            stress_strain: zero.clone(),
            strain_stress: zero.clone(),
            stress_stress: zero,
        };
        for i in 0..n {
            if self.kind.is_explicit() {
                out.strain_strain[(i, i)] = -self.polynomial_curvature(i, p.strain[i]) * xi[i];
            } else {
                out.stress_stress[(i, i)] = -self.polynomial_curvature(i, p.stress[i]) * xi[i];
            }
        }
        Ok(out)
    }

    /// Nonzero roots of `g(ě, 0) = 0` and `g(0, š) = 0` inside `[lo, hi]`.
    ///
    /// Spurious roots are reported, never rejected.
    pub fn consistency_check(&self, lo: f64, hi: f64) -> ConsistencyReport {
        let mut report = ConsistencyReport::default();
        for i in 0..self.dim() {
            // the constrained variable is the polynomial argument; the other
            // argument enters linearly and only vanishes at zero
            let roots = nonzero_polynomial_roots(self.a[i], self.b[i], self.c[i])
                .into_iter()
                .filter(|r| *r >= lo && *r <= hi);
            for root in roots {
                let spurious = SpuriousRoot { component: i, value: root };
                if self.kind.is_explicit() {
                    report.strain_roots.push(spurious);
                } else {
                    report.stress_roots.push(spurious);
                }
            }
        }
        report
    }

    /// `‖skew([∂š g]⁻¹ ∂ě g)‖_F` at `p`, with the mirrored form as a fallback.
    pub fn symmetry_check(&self, p: &PhasePoint) -> Result<f64> {
        let (de, ds) = self.g_jacobians(p)?;
        jacobian_skew_norm(&de, &ds)
    }
}

/// Nonzero real roots of `x (a + (b/2) x + (c/3) x²) = 0`.
fn nonzero_polynomial_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let (qa, qb, qc) = (c / 3.0, 0.5 * b, a);
    let mut roots = Vec::new();
    if qa == 0.0 {
        if qb != 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let t = -0.5 * (qb + qb.signum() * sq);
            if t != 0.0 {
                roots.push(qc / t);
                roots.push(t / qa);
            } else {
                // qb = 0 and disc = 0 implies qc = 0, excluded by a > 0
                roots.push(sq / (2.0 * qa));
                roots.push(-sq / (2.0 * qa));
            }
        }
    }
    roots.retain(|r| *r != 0.0);
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

/// Frobenius norm of the skew part of `ds⁻¹ de`, or of `de⁻¹ ds` when `ds` is
/// singular.
pub fn jacobian_skew_norm(de: &DMatrix<f64>, ds: &DMatrix<f64>) -> Result<f64> {
    let skew = |m: DMatrix<f64>| ((&m - m.transpose()) * 0.5).norm();
    if let Some(ds_inv) = ds.clone().lu().try_inverse() {
        return Ok(skew(ds_inv * de));
    }
    if let Some(de_inv) = de.clone().lu().try_inverse() {
        return Ok(skew(de_inv * ds));
    }
    Err(Error::SingularJacobian)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpuriousRoot {
    pub component: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConsistencyReport {
    /// Nonzero `ě` with `g(ě, 0) = 0`.
    pub strain_roots: Vec<SpuriousRoot>,
    /// Nonzero `š` with `g(0, š) = 0`.
    pub stress_roots: Vec<SpuriousRoot>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.strain_roots.is_empty() && self.stress_roots.is_empty()
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_consistent() {
            return write!(f, "consistent");
        }
        write!(f, "spurious roots:")?;
        for r in &self.strain_roots {
            write!(f, " strain[{}]={:.6}", r.component, r.value)?;
        }
        for r in &self.stress_roots {
            write!(f, " stress[{}]={:.6}", r.component, r.value)?;
        }
        Ok(())
    }
}

/// Built-in law presets for the quarter-arc experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LawPreset {
    Verification,
    ExplicitAntisym,
    ExplicitNonsym,
    ImplicitAntisym,
    ImplicitNonsym,
}

/// Linear stiffnesses `(n₁, n₂, n₃, m₁, m₂, m₃)` of the beam experiments, in N and N·m².
pub const BEAM_STIFFNESS: [f64; 6] = [75.0, 75.0, 100.0, 100.0, 100.0, 200.0];

impl LawPreset {
    pub const ALL: [LawPreset; 5] = [
        LawPreset::Verification,
        LawPreset::ExplicitAntisym,
        LawPreset::ExplicitNonsym,
        LawPreset::ImplicitAntisym,
        LawPreset::ImplicitNonsym,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LawPreset::Verification => "verification",
            LawPreset::ExplicitAntisym => "explicit-antisym",
            LawPreset::ExplicitNonsym => "explicit-nonsym",
            LawPreset::ImplicitAntisym => "implicit-antisym",
            LawPreset::ImplicitNonsym => "implicit-nonsym",
        }
    }

    /// Whether the material response is odd in strain, so a symmetric
    /// structure keeps a symmetric response.
    pub fn is_antisymmetric(self) -> bool {
        !matches!(self, LawPreset::ExplicitNonsym | LawPreset::ImplicitNonsym)
    }

    pub fn law(self) -> ManifoldLaw {
        let a = BEAM_STIFFNESS.to_vec();
        let compliance: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
        let zeros = vec![0.0; 6];
        let scaled = |v: &[f64], k: f64| v.iter().map(|x| k * x).collect::<Vec<_>>();
        let law = match self {
            LawPreset::Verification => ManifoldLaw::linear_explicit(a),
            LawPreset::ExplicitAntisym => {
                ManifoldLaw::new(LawKind::PolyExplicit, a.clone(), zeros, a)
            }
            LawPreset::ExplicitNonsym => {
                ManifoldLaw::new(LawKind::PolyExplicit, a.clone(), scaled(&a, 0.85), zeros)
            }
            LawPreset::ImplicitAntisym => ManifoldLaw::new(
                LawKind::PolyImplicit,
                compliance.clone(),
                zeros,
                scaled(&compliance, 0.0005),
            ),
            LawPreset::ImplicitNonsym => ManifoldLaw::new(
                LawKind::PolyImplicit,
                compliance.clone(),
                scaled(&compliance, 0.015),
                zeros,
            ),
        };
        law.expect("preset coefficients are valid")
    }
}

impl FromStr for LawPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LawPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown law preset '{s}'")))
    }
}

impl fmt::Display for LawPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// A finite set of scalar strain-stress measurements, sorted by strain.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    pairs: Vec<(f64, f64)>,
}

impl DataSet {
    pub fn new(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.iter().any(|(e, s)| !e.is_finite() || !s.is_finite()) {
            return Err(Error::InvalidInput("data set contains non-finite values".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn point(&self, index: usize) -> PhasePoint {
        let (e, s) = self.pairs[index];
        PhasePoint::scalar(e, s)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "strain,stress")?;
        for (e, s) in &self.pairs {
            writeln!(out, "{},{}", crate::io::fmt_f64(*e), crate::io::fmt_f64(*s))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(str::trim) != Some("strain,stress") {
            return Err(Error::InvalidInput("expected header 'strain,stress'".into()));
        }
        let mut pairs = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |v: Option<&str>| -> Result<f64> {
                v.and_then(|t| t.trim().parse().ok()).ok_or_else(|| {
                    Error::InvalidInput(format!("malformed data line {}: '{line}'", n + 2))
                })
            };
            let mut cols = line.split(',');
            let e = parse(cols.next())?;
            let s = parse(cols.next())?;
            pairs.push((e, s));
        }
        Self::new(pairs)
    }
}

/// Samples an explicit scalar law on a uniform strain grid.
///
/// Stresses get multiplicative noise `1 + noise_fraction · u` with `u` uniform
/// on `[−1, 1]`, drawn from a ChaCha8 stream seeded with `seed`; strains stay
/// exact.
pub fn generate_synthetic_data(
    law: &ManifoldLaw,
    n: usize,
    strain_range: (f64, f64),
    noise_fraction: f64,
    seed: u64,
) -> Result<DataSet> {
    if law.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: law.dim(),
            context: "synthetic data needs a scalar law",
        });
    }
    if !law.kind.is_explicit() {
        return Err(Error::UnsupportedLaw(
            "synthetic data generation needs an explicit stress definition".into(),
        ));
    }
    if n < 2 {
        return Err(Error::InvalidInput("need at least two data points".into()));
    }
    if !(noise_fraction >= 0.0) {
        return Err(Error::InvalidInput("noise fraction must be non-negative".into()));
    }
    let (lo, hi) = strain_range;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n)
        .map(|k| {
            let e = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            let mut s = law.polynomial(0, e);
            if noise_fraction > 0.0 {
                s *= 1.0 + noise_fraction * rng.random_range(-1.0..=1.0);
            }
            (e, s)
        })
        .collect();
    DataSet::new(pairs)
}
