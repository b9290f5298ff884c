//! Global approximate NLP for beam structures.
//!
//! The unknown vector is laid out element-major, then node-major:
//!
//! ```text
//! [ ě š e s λ ξ ]  for every element   (6 each)
//! [ q μ ν ]        for every free node (12, 6, 6)
//! ```
//!
//! Fully fixed nodes are frozen at their reference coordinates and carry no
//! unknowns. The balance equation integrates `Bᵀs` with the element length as
//! quadrature weight; the distance and compatibility terms are taken per
//! element without weight (an equivalent scaling of the same optimum).

use nalgebra::{
    Cholesky, DMatrix, DVector, Dim, Matrix, Matrix6, RawStorage, Vector3, Vector6,
};
use serde::Serialize;

use crate::beam::{
    constraint_stiffness, null_space_derivative, null_space_transpose_derivative, ElementState,
    Matrix12, Matrix12x6, NodeState, Vector12, Vector24,
};
use crate::constitutive::{LawPreset, ManifoldLaw, PhasePoint};
use crate::error::{check_dim, Error, Result};
use crate::newton::{newton_solve, KktProblem, NewtonSettings};

pub const ELEMENT_BLOCK: usize = 36;
pub const NODE_BLOCK: usize = 24;

/// Offsets inside an element block.
const E_CHECK: usize = 0;
const S_CHECK: usize = 6;
const E: usize = 12;
const S: usize = 18;
const LAMBDA: usize = 24;
const XI: usize = 30;
/// Offsets inside a free-node block.
const Q: usize = 0;
const MU: usize = 12;
const NU: usize = 18;

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    /// Zero-based node indices, ordered along the beam axis.
    pub nodes: [usize; 2],
    pub length_ref: f64,
    pub gamma_ref: Vector3<f64>,
    pub omega_ref: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Structure {
    /// Reference configuration.
    pub nodes: Vec<NodeState>,
    pub elements: Vec<Element>,
    /// `fixed[n]` freezes all twelve coordinates of node `n`.
    pub fixed: Vec<bool>,
    /// Nodal forces (N); nodal moments are not supported.
    pub loads: Vec<Vector3<f64>>,
    pub law: ManifoldLaw,
    pub weight: Matrix6<f64>,
    weight_inv: Matrix6<f64>,
}

impl Structure {
    /// Builds a structure whose reference strains are read off the reference
    /// configuration, so the unloaded state is strain free.
    pub fn new(
        nodes: Vec<NodeState>,
        connectivity: Vec<([usize; 2], f64)>,
        fixed: Vec<bool>,
        law: ManifoldLaw,
        weight: Matrix6<f64>,
    ) -> Result<Self> {
        let n = nodes.len();
        check_dim(n, fixed.len(), "fixed-node flags")?;
        let mut elements = Vec::with_capacity(connectivity.len());
        for (k, ([a, b], length_ref)) in connectivity.into_iter().enumerate() {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidInput(format!(
                    "element {} connects invalid nodes ({}, {})",
                    k + 1,
                    a + 1,
                    b + 1
                )));
            }
            if !(length_ref > 0.0 && length_ref.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "element {} has non-positive reference length {length_ref}",
                    k + 1
                )));
            }
            let reference = ElementState::new(nodes[a], nodes[b], length_ref);
            let raw = reference.strain(&Vector3::zeros(), &Vector3::zeros());
            elements.push(Element {
                nodes: [a, b],
                length_ref,
                gamma_ref: raw.fixed_rows::<3>(0).into_owned(),
                omega_ref: raw.fixed_rows::<3>(3).into_owned(),
            });
        }
        let mut s = Self {
            loads: vec![Vector3::zeros(); n],
            nodes,
            elements,
            fixed,
            law,
            weight,
            weight_inv: Matrix6::identity(),
        };
        s.set_weight(weight)?;
        s.validate()?;
        Ok(s)
    }

    pub fn set_weight(&mut self, weight: Matrix6<f64>) -> Result<()> {
        if (weight - weight.transpose()).amax() > 1e-12 * weight.amax() {
            return Err(Error::InvalidInput("weight matrix must be symmetric".into()));
        }
        let chol = Cholesky::new(weight)
            .ok_or_else(|| Error::InvalidInput("weight matrix must be positive definite".into()))?;
        self.weight = weight;
        self.weight_inv = chol.inverse();
        Ok(())
    }

    pub fn weight_inverse(&self) -> &Matrix6<f64> {
        &self.weight_inv
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        check_dim(n, self.fixed.len(), "fixed-node flags")?;
        check_dim(n, self.loads.len(), "nodal loads")?;
        check_dim(6, self.law.dim(), "beam constitutive law")?;
        self.law.validate()?;
        if self.elements.is_empty() {
            return Err(Error::InvalidInput("structure has no elements".into()));
        }
        if self.loads.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("loads must be finite".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.h().amax() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "reference directors of node {} are not orthonormal",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    /// Generalized load vector of node `n`: the force acts on `φ₀` only.
    fn generalized_load(&self, n: usize) -> Vector12 {
        let mut f = Vector12::zeros();
        f.fixed_rows_mut::<3>(0).copy_from(&self.loads[n]);
        f
    }

    pub fn total_load(&self) -> Vector3<f64> {
        self.loads.iter().sum()
    }

    /// Stress-free reference state with zero multipliers.
    pub fn initial_guess(&self) -> DVector<f64> {
        let layout = self.layout();
        let mut x = DVector::zeros(layout.dim());
        for (n, node) in self.nodes.iter().enumerate() {
            if let Some(off) = layout.node_offset(n) {
                x.fixed_rows_mut::<12>(off + Q).copy_from(&node.to_vector());
            }
        }
        x
    }
}

/// Index map between structure entities and the global unknown vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    n_elements: usize,
    free_index: Vec<Option<usize>>,
    n_free: usize,
}

impl Layout {
    fn new(structure: &Structure) -> Self {
        let mut n_free = 0;
        let free_index = structure
            .fixed
            .iter()
            .map(|&fixed| {
                (!fixed).then(|| {
                    n_free += 1;
                    n_free - 1
                })
            })
            .collect();
        Self {
            n_elements: structure.n_elements(),
            free_index,
            n_free,
        }
    }

    pub fn dim(&self) -> usize {
        ELEMENT_BLOCK * self.n_elements + NODE_BLOCK * self.n_free
    }

    pub fn n_free_nodes(&self) -> usize {
        self.n_free
    }

    pub fn element_offset(&self, k: usize) -> usize {
        ELEMENT_BLOCK * k
    }

    /// `None` for fixed nodes.
    pub fn node_offset(&self, n: usize) -> Option<usize> {
        self.free_index[n].map(|j| ELEMENT_BLOCK * self.n_elements + NODE_BLOCK * j)
    }
}

fn v6(x: &DVector<f64>, off: usize) -> Vector6<f64> {
    x.fixed_rows::<6>(off).into_owned()
}

fn dvec(v: &Vector6<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn add_block<R: Dim, C: Dim, St: RawStorage<f64, R, C>>(
    s: &mut DMatrix<f64>,
    r0: usize,
    c0: usize,
    m: &Matrix<f64, R, C, St>,
) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s[(r0 + i, c0 + j)] += m[(i, j)];
        }
    }
}

/// Adds `m` at `(r0, c0)` and `mᵀ` at `(c0, r0)`.
fn add_pair<R: Dim, C: Dim, St: RawStorage<f64, R, C>>(
    s: &mut DMatrix<f64>,
    r0: usize,
    c0: usize,
    m: &Matrix<f64, R, C, St>,
) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s[(r0 + i, c0 + j)] += m[(i, j)];
            s[(c0 + j, r0 + i)] += m[(i, j)];
        }
    }
}

/// Unpacked view of a global iterate.
struct Unpacked {
    q: Vec<Vector12>,
    mu: Vec<Vector6<f64>>,
    nu: Vec<Vector6<f64>>,
    null_space: Vec<Matrix12x6>,
    n_mu: Vec<Vector12>,
}

impl Unpacked {
    fn new(structure: &Structure, layout: &Layout, x: &DVector<f64>) -> Self {
        let n = structure.n_nodes();
        let mut u = Self {
            q: Vec::with_capacity(n),
            mu: vec![Vector6::zeros(); n],
            nu: vec![Vector6::zeros(); n],
            null_space: Vec::with_capacity(n),
            n_mu: vec![Vector12::zeros(); n],
        };
        for (i, node) in structure.nodes.iter().enumerate() {
            let q = match layout.node_offset(i) {
                Some(off) => {
                    u.mu[i] = v6(x, off + MU);
                    u.nu[i] = v6(x, off + NU);
                    x.fixed_rows::<12>(off + Q).into_owned()
                }
                None => node.to_vector(),
            };
            let nm = NodeState::from_vector(&q).null_space();
            if layout.node_offset(i).is_some() {
                u.n_mu[i] = nm * u.mu[i];
            }
            u.q.push(q);
            u.null_space.push(nm);
        }
        u
    }

    fn element_coords(&self, el: &Element) -> Vector24 {
        let mut q = Vector24::zeros();
        q.fixed_rows_mut::<12>(0).copy_from(&self.q[el.nodes[0]]);
        q.fixed_rows_mut::<12>(12).copy_from(&self.q[el.nodes[1]]);
        q
    }

    fn element_n_mu(&self, el: &Element) -> Vector24 {
        let mut v = Vector24::zeros();
        v.fixed_rows_mut::<12>(0).copy_from(&self.n_mu[el.nodes[0]]);
        v.fixed_rows_mut::<12>(12).copy_from(&self.n_mu[el.nodes[1]]);
        v
    }
}

/// Phase-space variables of one element read from a global iterate.
struct ElementVars {
    e_check: Vector6<f64>,
    s_check: Vector6<f64>,
    e: Vector6<f64>,
    s: Vector6<f64>,
    lambda: Vector6<f64>,
    xi: Vector6<f64>,
}

impl ElementVars {
    fn read(x: &DVector<f64>, off: usize) -> Self {
        Self {
            e_check: v6(x, off + E_CHECK),
            s_check: v6(x, off + S_CHECK),
            e: v6(x, off + E),
            s: v6(x, off + S),
            lambda: v6(x, off + LAMBDA),
            xi: v6(x, off + XI),
        }
    }

    fn phase_check(&self) -> PhasePoint {
        PhasePoint::new(dvec(&self.e_check), dvec(&self.s_check))
    }
}

fn law_jacobians(law: &ManifoldLaw, p: &PhasePoint) -> (Matrix6<f64>, Matrix6<f64>) {
    let (de, ds) = law.g_jacobians(p).expect("law dimension checked by Structure::validate");
    (Matrix6::from_iterator(de.iter().copied()), Matrix6::from_iterator(ds.iter().copied()))
}

/// Internal generalized forces `Σ_e w_e B_eᵀ s_e` scattered to nodes.
fn internal_forces(structure: &Structure, u: &Unpacked, x: &DVector<f64>, layout: &Layout) -> Vec<Vector12> {
    let mut force = vec![Vector12::zeros(); structure.n_nodes()];
    for (k, el) in structure.elements.iter().enumerate() {
        let state = ElementState::from_vector(&u.element_coords(el), el.length_ref);
        let s = v6(x, layout.element_offset(k) + S);
        let f = state.b_matrix().transpose() * s * state.quadrature_weight();
        force[el.nodes[0]] += f.fixed_rows::<12>(0);
        force[el.nodes[1]] += f.fixed_rows::<12>(12);
    }
    force
}

/// KKT residual of the approximate NLP.
pub fn approx_residual(structure: &Structure, x: &DVector<f64>) -> Result<DVector<f64>> {
    let layout = structure.layout();
    check_dim(layout.dim(), x.len(), "approximate NLP vector")?;
    Ok(residual_unchecked(structure, &layout, x))
}

fn residual_unchecked(structure: &Structure, layout: &Layout, x: &DVector<f64>) -> DVector<f64> {
    let u = Unpacked::new(structure, layout, x);
    let (c, c_inv) = (&structure.weight, &structure.weight_inv);
    let mut r = DVector::zeros(layout.dim());
    let mut rq = vec![Vector12::zeros(); structure.n_nodes()];

    for (k, el) in structure.elements.iter().enumerate() {
        let off = layout.element_offset(k);
        let v = ElementVars::read(x, off);
        let state = ElementState::from_vector(&u.element_coords(el), el.length_ref);
        let w = state.quadrature_weight();
        let b = state.b_matrix();
        let e_q = state.strain(&el.gamma_ref, &el.omega_ref);
        let p = v.phase_check();
        let g = structure.law.g_eval(&p).expect("law dimension checked");
        let (de, ds) = law_jacobians(&structure.law, &p);
        let n_mu = u.element_n_mu(el);

        let de_strain = c * (v.e - v.e_check);
        let de_stress = c_inv * (v.s - v.s_check);
        r.fixed_rows_mut::<6>(off + E_CHECK).copy_from(&(-de_strain + de.transpose() * v.xi));
        r.fixed_rows_mut::<6>(off + S_CHECK).copy_from(&(-de_stress + ds.transpose() * v.xi));
        r.fixed_rows_mut::<6>(off + E).copy_from(&(de_strain + v.lambda));
        r.fixed_rows_mut::<6>(off + S).copy_from(&(de_stress + b * n_mu * w));
        r.fixed_rows_mut::<6>(off + LAMBDA).copy_from(&(v.e - e_q));
        r.fixed_rows_mut::<6>(off + XI).copy_from_slice(g.as_slice());

        let fq = -b.transpose() * v.lambda + state.u2(&v.s) * n_mu * w;
        rq[el.nodes[0]] += fq.fixed_rows::<12>(0);
        rq[el.nodes[1]] += fq.fixed_rows::<12>(12);
    }

    let force = internal_forces(structure, &u, x, layout);
    for n in 0..structure.n_nodes() {
        let Some(off) = layout.node_offset(n) else {
            continue;
        };
        let node = NodeState::from_vector(&u.q[n]);
        let unbalanced = force[n] - structure.generalized_load(n);
        let q_row = rq[n]
            + null_space_derivative(&u.mu[n]).transpose() * unbalanced
            + node.h_jacobian().transpose() * u.nu[n];
        r.fixed_rows_mut::<12>(off + Q).copy_from(&q_row);
        r.fixed_rows_mut::<6>(off + MU).copy_from(&(u.null_space[n].transpose() * unbalanced));
        r.fixed_rows_mut::<6>(off + NU).copy_from(&node.h());
    }
    r
}

/// Symmetric KKT matrix of the approximate NLP (Hessian of the Lagrangian).
pub fn approx_kkt_matrix(structure: &Structure, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let layout = structure.layout();
    check_dim(layout.dim(), x.len(), "approximate NLP vector")?;
    Ok(matrix_unchecked(structure, &layout, x))
}

fn matrix_unchecked(structure: &Structure, layout: &Layout, x: &DVector<f64>) -> DMatrix<f64> {
    let u = Unpacked::new(structure, layout, x);
    let (c, c_inv) = (&structure.weight, &structure.weight_inv);
    let dim = layout.dim();
    let mut s = DMatrix::zeros(dim, dim);
    let force = internal_forces(structure, &u, x, layout);
    let eye = Matrix6::<f64>::identity();

    for (k, el) in structure.elements.iter().enumerate() {
        let off = layout.element_offset(k);
        let v = ElementVars::read(x, off);
        let state = ElementState::from_vector(&u.element_coords(el), el.length_ref);
        let w = state.quadrature_weight();
        let b = state.b_matrix();
        let p = v.phase_check();
        let (de, ds) = law_jacobians(&structure.law, &p);
        let hc = structure
            .law
            .g_hessian_contract(&p, &dvec(&v.xi))
            .expect("law dimension checked");
        let n_mu = u.element_n_mu(el);

        // manifold and distance blocks
        add_block(&mut s, off + E_CHECK, off + E_CHECK, &(c + &hc.strain_strain));
        add_block(&mut s, off + S_CHECK, off + S_CHECK, &(c_inv + &hc.stress_stress));
        add_pair(&mut s, off + S_CHECK, off + E_CHECK, &hc.stress_strain);
        add_pair(&mut s, off + E, off + E_CHECK, &(-c));
        add_pair(&mut s, off + S, off + S_CHECK, &(-c_inv));
        add_pair(&mut s, off + XI, off + E_CHECK, &de);
        add_pair(&mut s, off + XI, off + S_CHECK, &ds);
        add_block(&mut s, off + E, off + E, c);
        add_block(&mut s, off + S, off + S, c_inv);
        add_pair(&mut s, off + LAMBDA, off + E, &eye);

        // coupling to free nodes
        let u2_lambda = state.u2(&v.lambda);
        let u2_s = state.u2(&v.s) * w;
        let u1 = state.u1(&n_mu) * w;
        let slot_offsets = el.nodes.map(|n| layout.node_offset(n));
        for (a, &node_a) in el.nodes.iter().enumerate() {
            let Some(off_a) = slot_offsets[a] else {
                continue;
            };
            let b_a = b.fixed_view::<6, 12>(0, 12 * a);
            let w2_a = null_space_derivative(&u.mu[node_a]);
            let s_q = u1.fixed_view::<6, 12>(0, 12 * a) + b_a * w2_a * w;
            add_pair(&mut s, off + S, off_a + Q, &s_q);
            add_pair(&mut s, off + S, off_a + MU, &(b_a * u.null_space[node_a] * w));
            add_pair(&mut s, off + LAMBDA, off_a + Q, &(-b_a));

            for (m, &node_m) in el.nodes.iter().enumerate() {
                let Some(off_m) = slot_offsets[m] else {
                    continue;
                };
                let u2_am = u2_s.fixed_view::<12, 12>(12 * a, 12 * m);
                let w2_m = null_space_derivative(&u.mu[node_m]);
                let q_q = -u2_lambda.fixed_view::<12, 12>(12 * a, 12 * m)
                    + u2_am * w2_m
                    + w2_a.transpose() * u2_am;
                add_block(&mut s, off_a + Q, off_m + Q, &q_q);
                add_pair(&mut s, off_a + Q, off_m + MU, &(u2_am * u.null_space[node_m]));
            }
        }
    }

    for n in 0..structure.n_nodes() {
        let Some(off) = layout.node_offset(n) else {
            continue;
        };
        let node = NodeState::from_vector(&u.q[n]);
        let unbalanced = force[n] - structure.generalized_load(n);
        add_block(&mut s, off + Q, off + Q, &constraint_stiffness(&u.nu[n]));
        add_pair(
            &mut s,
            off + Q,
            off + MU,
            &null_space_transpose_derivative(&unbalanced).transpose(),
        );
        add_pair(&mut s, off + NU, off + Q, &node.h_jacobian());
    }
    s
}

/// The approximate NLP of a structure as a [`KktProblem`].
pub struct ApproxNlpProblem<'a> {
    structure: &'a Structure,
    layout: Layout,
}

impl<'a> ApproxNlpProblem<'a> {
    pub fn new(structure: &'a Structure) -> Result<Self> {
        structure.validate()?;
        Ok(Self {
            layout: structure.layout(),
            structure,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }
}

impl KktProblem for ApproxNlpProblem<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        residual_unchecked(self.structure, &self.layout, x)
    }

    fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        matrix_unchecked(self.structure, &self.layout, x)
    }

    fn description(&self) -> String {
        format!(
            "approximate NLP: {} elements, {} free nodes, {} unknowns",
            self.structure.n_elements(),
            self.layout.n_free_nodes(),
            self.layout.dim()
        )
    }
}

/// Element count of the quarter-arc experiments: 21 nodes, so that node 11
/// sits on the symmetry plane.
pub const ARC_ELEMENTS: usize = 20;

/// Uniform discretization of a quarter circle of arc length 1 m lying in the
/// x-y plane, starting at the origin with tangent `(0, 1, 0)`. Both end nodes
/// are fully fixed and the law defaults to the linear verification law.
pub fn build_quarter_arc(n_elements: usize) -> Result<Structure> {
    if n_elements < 1 {
        return Err(Error::InvalidInput("the arc needs at least one element".into()));
    }
    let radius = 2.0 / std::f64::consts::PI;
    let nodes: Vec<NodeState> = (0..=n_elements)
        .map(|i| {
            let theta = std::f64::consts::FRAC_PI_2 * i as f64 / n_elements as f64;
            let (sin, cos) = theta.sin_cos();
            let d1 = Vector3::z();
            let d3 = Vector3::new(sin, cos, 0.0);
            NodeState::new(radius * Vector3::new(1.0 - cos, sin, 0.0), d1, d3.cross(&d1), d3)
        })
        .collect();
    // straight elements: the reference length is the chord, not the arc
    let length = 2.0 * radius * (std::f64::consts::FRAC_PI_4 / n_elements as f64).sin();
    let connectivity = (0..n_elements).map(|k| ([k, k + 1], length)).collect();
    let mut fixed = vec![false; n_elements + 1];
    fixed[0] = true;
    fixed[n_elements] = true;
    Structure::new(
        nodes,
        connectivity,
        fixed,
        LawPreset::Verification.law(),
        Matrix6::identity(),
    )
}

/// Nodal forces of the quarter-arc experiments (21 nodes, 1-based numbering).
pub fn apply_paper_loads(mut structure: Structure) -> Result<Structure> {
    check_dim(ARC_ELEMENTS + 1, structure.n_nodes(), "quarter-arc load pattern")?;
    let groups: [(std::ops::RangeInclusive<usize>, Vector3<f64>); 3] = [
        (2..=4, Vector3::new(-10.0, 0.0, -20.0)),
        (8..=14, Vector3::new(7.5, -7.5, 15.0)),
        (18..=20, Vector3::new(0.0, 10.0, -20.0)),
    ];
    structure.loads = vec![Vector3::zeros(); structure.n_nodes()];
    for (nodes, force) in groups {
        for n in nodes {
            structure.loads[n - 1] = force;
        }
    }
    Ok(structure)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementSolution {
    pub strain_check: Vector6<f64>,
    pub stress_check: Vector6<f64>,
    pub strain: Vector6<f64>,
    pub stress: Vector6<f64>,
    pub lambda: Vector6<f64>,
    pub xi: Vector6<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub nodes: Vec<NodeState>,
    pub elements: Vec<ElementSolution>,
    /// `(μ, ν)` for free nodes, `None` for fixed ones.
    pub node_multipliers: Vec<Option<(Vector6<f64>, Vector6<f64>)>>,
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub step_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
}

impl Solution {
    /// Unpacks a global vector; the convergence record is left empty.
    pub fn from_vector(structure: &Structure, x: DVector<f64>) -> Result<Self> {
        let layout = structure.layout();
        check_dim(layout.dim(), x.len(), "approximate NLP vector")?;
        let elements = (0..structure.n_elements())
            .map(|k| {
                let v = ElementVars::read(&x, layout.element_offset(k));
                ElementSolution {
                    strain_check: v.e_check,
                    stress_check: v.s_check,
                    strain: v.e,
                    stress: v.s,
                    lambda: v.lambda,
                    xi: v.xi,
                }
            })
            .collect();
        let mut nodes = structure.nodes.clone();
        let mut node_multipliers = vec![None; structure.n_nodes()];
        for (n, node) in nodes.iter_mut().enumerate() {
            if let Some(off) = layout.node_offset(n) {
                *node = NodeState::from_vector(&x.fixed_rows::<12>(off + Q).into_owned());
                node_multipliers[n] = Some((v6(&x, off + MU), v6(&x, off + NU)));
            }
        }
        Ok(Self {
            nodes,
            elements,
            node_multipliers,
            x,
            iterations: 0,
            converged: false,
            step_norms: Vec::new(),
            residual_norms: Vec::new(),
        })
    }

    /// Packs the per-entity fields back into a global vector, ignoring `self.x`.
    pub fn pack(&self, structure: &Structure) -> Result<DVector<f64>> {
        let layout = structure.layout();
        check_dim(structure.n_elements(), self.elements.len(), "element solutions")?;
        check_dim(structure.n_nodes(), self.nodes.len(), "node solutions")?;
        check_dim(structure.n_nodes(), self.node_multipliers.len(), "node multipliers")?;
        let mut x = DVector::zeros(layout.dim());
        for (k, el) in self.elements.iter().enumerate() {
            let off = layout.element_offset(k);
            for (field, v) in [
                (E_CHECK, &el.strain_check),
                (S_CHECK, &el.stress_check),
                (E, &el.strain),
                (S, &el.stress),
                (LAMBDA, &el.lambda),
                (XI, &el.xi),
            ] {
                x.fixed_rows_mut::<6>(off + field).copy_from(v);
            }
        }
        for (n, node) in self.nodes.iter().enumerate() {
            let Some(off) = layout.node_offset(n) else { continue };
            let (mu, nu) = self.node_multipliers[n].ok_or_else(|| {
                Error::InvalidInput(format!("free node {} has no multipliers", n + 1))
            })?;
            x.fixed_rows_mut::<12>(off + Q).copy_from(&node.to_vector());
            x.fixed_rows_mut::<6>(off + MU).copy_from(&mu);
            x.fixed_rows_mut::<6>(off + NU).copy_from(&nu);
        }
        Ok(x)
    }
}

/// Cold-started Newton solve in a single load step.
pub fn solve_structure(structure: &Structure, settings: &NewtonSettings) -> Result<Solution> {
    let problem = ApproxNlpProblem::new(structure)?;
    let settings = settings.traced();
    let result = newton_solve(&problem, &structure.initial_guess(), &settings)?;
    let mut solution = Solution::from_vector(structure, result.x_star)?;
    solution.iterations = result.iterations;
    solution.converged = result.converged;
    solution.step_norms = result.step_norms;
    solution.residual_norms = result.residual_norms;
    Ok(solution)
}

/// Per-element stress resultants in element order along the arc.
pub fn stress_distribution(solution: &Solution) -> Vec<Vector6<f64>> {
    solution.elements.iter().map(|e| e.stress).collect()
}

/// Constraint-force multipliers of one node and its orthogonal null-space projector.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeMultipliers {
    pub chi: Vector6<f64>,
    pub projector: Matrix12,
}

/// `χ = −(HHᵀ)⁻¹H(Bᵀs − f)` and `P = I − Hᵀ(HHᵀ)⁻¹H` for every free node.
pub fn recover_multipliers(
    structure: &Structure,
    q: &[NodeState],
    s: &[Vector6<f64>],
) -> Result<Vec<Option<NodeMultipliers>>> {
    check_dim(structure.n_nodes(), q.len(), "nodal states")?;
    check_dim(structure.n_elements(), s.len(), "element stresses")?;
    let mut force = vec![Vector12::zeros(); structure.n_nodes()];
    for (el, s) in structure.elements.iter().zip(s) {
        let state = ElementState::new(q[el.nodes[0]], q[el.nodes[1]], el.length_ref);
        let f = state.b_matrix().transpose() * s * state.quadrature_weight();
        force[el.nodes[0]] += f.fixed_rows::<12>(0);
        force[el.nodes[1]] += f.fixed_rows::<12>(12);
    }
    (0..structure.n_nodes())
        .map(|n| {
            if structure.fixed[n] {
                return Ok(None);
            }
            let h = q[n].h_jacobian();
            let gram = Cholesky::new(h * h.transpose()).ok_or(Error::RankDeficientConstraints)?;
            if gram.l().diagonal().min() < 1e-8 * gram.l().diagonal().max() {
                return Err(Error::RankDeficientConstraints);
            }
            let unbalanced = force[n] - structure.generalized_load(n);
            let chi = -gram.solve(&(h * unbalanced));
            let projector = Matrix12::identity() - h.transpose() * gram.solve(&h);
            Ok(Some(NodeMultipliers { chi, projector }))
        })
        .collect()
}

/// Mirror-symmetry classification of a stress distribution.
///
/// Element `k` is paired with element `n + 1 − k`. Axial force and the two
/// transversal moments (components 3, 4, 5) are compared for equality; the
/// transversal forces and the torsion moment (components 1, 2, 6) for
/// opposite sign.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    /// Largest mirror deviation per component.
    pub component_deviation: [f64; 6],
    pub scale: f64,
    pub tolerance: f64,
    pub symmetric_holds: bool,
    pub antisymmetric_holds: bool,
}

impl SymmetryReport {
    pub const SYMMETRIC: [usize; 3] = [2, 3, 4];
    pub const ANTISYMMETRIC: [usize; 3] = [0, 1, 5];

    pub fn holds(&self) -> bool {
        self.symmetric_holds && self.antisymmetric_holds
    }
}

/// `rel_tol` is relative to the largest stress magnitude.
pub fn symmetry_diagnostics(stress: &[Vector6<f64>], rel_tol: f64) -> SymmetryReport {
    let n = stress.len();
    let scale = stress.iter().map(|s| s.amax()).fold(0.0, f64::max);
    let mut dev = [0.0f64; 6];
    for k in 0..n {
        let (a, b) = (&stress[k], &stress[n - 1 - k]);
        for i in SymmetryReport::SYMMETRIC {
            dev[i] = dev[i].max((a[i] - b[i]).abs());
        }
        for i in SymmetryReport::ANTISYMMETRIC {
            dev[i] = dev[i].max((a[i] + b[i]).abs());
        }
    }
    let tolerance = rel_tol * scale;
    SymmetryReport {
        component_deviation: dev,
        scale,
        tolerance,
        symmetric_holds: SymmetryReport::SYMMETRIC.iter().all(|&i| dev[i] <= tolerance),
        antisymmetric_holds: SymmetryReport::ANTISYMMETRIC.iter().all(|&i| dev[i] <= tolerance),
    }
}

/// Constraint violations of a solution, each the largest over nodes or elements.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub orthonormality: f64,
    pub compatibility: f64,
    pub manifold: f64,
    /// `‖Nᵀ(Bᵀs − f)‖` relative to the largest nodal load (or 1).
    pub balance: f64,
}

impl Feasibility {
    pub fn within(&self, h: f64, compat: f64, manifold: f64, balance: f64) -> bool {
        self.orthonormality < h
            && self.compatibility < compat
            && self.manifold < manifold
            && self.balance < balance
    }
}

pub fn feasibility(structure: &Structure, solution: &Solution) -> Result<Feasibility> {
    let layout = structure.layout();
    check_dim(layout.dim(), solution.x.len(), "approximate NLP vector")?;
    let u = Unpacked::new(structure, &layout, &solution.x);
    let force = internal_forces(structure, &u, &solution.x, &layout);
    let mut report = Feasibility {
        orthonormality: 0.0,
        compatibility: 0.0,
        manifold: 0.0,
        balance: 0.0,
    };
    let load_scale = structure.loads.iter().map(|f| f.amax()).fold(1.0, f64::max);
    for n in 0..structure.n_nodes() {
        if structure.fixed[n] {
            continue;
        }
        report.orthonormality = report.orthonormality.max(solution.nodes[n].h().norm());
        let unbalanced = force[n] - structure.generalized_load(n);
        let bal = (u.null_space[n].transpose() * unbalanced).norm() / load_scale;
        report.balance = report.balance.max(bal);
    }
    for (el, sol) in structure.elements.iter().zip(&solution.elements) {
        let state = ElementState::new(
            solution.nodes[el.nodes[0]],
            solution.nodes[el.nodes[1]],
            el.length_ref,
        );
        let e_q = state.strain(&el.gamma_ref, &el.omega_ref);
        report.compatibility = report.compatibility.max((sol.strain - e_q).norm());
        let g = structure
            .law
            .g_eval(&PhasePoint::new(dvec(&sol.strain_check), dvec(&sol.stress_check)))?;
        report.manifold = report.manifold.max(g.norm());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::jacobian_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn perturbed_state(structure: &Structure, seed: u64, scale: f64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = structure.initial_guess();
        x0.map(|v| v + scale * rng.random_range(-1.0..1.0))
    }

    #[test]
    fn quarter_arc_geometry() {
        let s = build_quarter_arc(ARC_ELEMENTS).unwrap();
        assert_eq!(s.n_nodes(), 21);
        assert_eq!(s.nodes[0].phi0, Vector3::zeros());
        let r = 2.0 / std::f64::consts::PI;
        assert!((s.nodes[20].phi0 - Vector3::new(r, r, 0.0)).amax() < 1e-12);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.nodes[10].d3 - Vector3::new(half, half, 0.0)).amax() < 1e-15);
        assert_eq!(s.layout().dim(), 20 * 36 + 19 * 24);
        // polygon of chords inscribed in the arc
        let total: f64 = s.elements.iter().map(|e| e.length_ref).sum();
        assert!(total < 1.0 && total > 1.0 - 1e-3);
        assert!(build_quarter_arc(0).is_err());
    }

    #[test]
    fn reference_state_is_stress_free_equilibrium() {
        let s = build_quarter_arc(5).unwrap();
        let r = approx_residual(&s, &s.initial_guess()).unwrap();
        assert!(r.amax() < 1e-14, "{}", r.amax());
    }

    #[test]
    fn arc_load_pattern() {
        let s = apply_paper_loads(build_quarter_arc(ARC_ELEMENTS).unwrap()).unwrap();
        assert_eq!(s.total_load(), Vector3::new(-30.0 + 52.5, -52.5 + 30.0, -15.0));
        assert_eq!(s.loads[0], Vector3::zeros());
        assert_eq!(s.loads[4], Vector3::zeros());
        assert_eq!(s.loads[1], Vector3::new(-10.0, 0.0, -20.0));
        assert!(apply_paper_loads(build_quarter_arc(4).unwrap()).is_err());
    }

    #[test]
    fn kkt_matrix_matches_finite_differences() {
        for preset in LawPreset::ALL {
            let mut s = build_quarter_arc(4).unwrap();
            s.law = preset.law();
            s.loads = vec![Vector3::new(1.0, -2.0, 3.0); 5];
            let problem = ApproxNlpProblem::new(&s).unwrap();
            for seed in 0..2 {
                let x = perturbed_state(&s, seed, 0.3);
                let m = problem.matrix(&x);
                assert!((&m - m.transpose()).amax() < 1e-10);
                let err = jacobian_check(&problem, &x, 1e-6);
                assert!(err < 1e-6, "{preset}: {err}");
            }
        }
    }

    #[test]
    fn linear_law_has_no_manifold_curvature() {
        let s = build_quarter_arc(3).unwrap();
        let x = perturbed_state(&s, 3, 0.5);
        let m = approx_kkt_matrix(&s, &x).unwrap();
        let blk = m.view((0, 0), (6, 6));
        assert!((blk - DMatrix::<f64>::identity(6, 6)).amax() == 0.0);
    }

    #[test]
    fn unloaded_solve_stays_at_reference() {
        let s = build_quarter_arc(3).unwrap();
        let sol = solve_structure(&s, &NewtonSettings::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert!(stress_distribution(&sol).iter().all(|v| v.amax() == 0.0));
    }

    #[test]
    fn projector_identities() {
        let s = build_quarter_arc(4).unwrap();
        let stress = vec![Vector6::zeros(); 4];
        let m = recover_multipliers(&s, &s.nodes, &stress).unwrap();
        assert!(m[0].is_none());
        for (n, nm) in m.iter().enumerate().skip(1).take(3) {
            let nm = nm.as_ref().unwrap();
            assert_eq!(nm.chi, Vector6::zeros());
            let p = nm.projector;
            let h = s.nodes[n].h_jacobian();
            assert!((p * p - p).amax() < 1e-12);
            assert!((p * h.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn symmetry_report() {
        let a = Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let mirror = Vector6::new(-1.0, -2.0, 3.0, 4.0, 5.0, -6.0);
        let good = symmetry_diagnostics(&[a, Vector6::zeros(), mirror], 1e-12);
        assert!(good.holds());
        let bad = symmetry_diagnostics(&[a, Vector6::zeros(), a], 1e-12);
        assert!(bad.symmetric_holds && !bad.antisymmetric_holds);
    }
}
