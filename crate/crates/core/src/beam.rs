//! Two-node geometrically exact beam element with three directors.
//!
//! Nodal coordinates are `q = (φ₀, d₁, d₂, d₃) ∈ R¹²`; an element stacks its
//! two nodes into `R²⁴`. Strains are evaluated at the single Gauss point,
//! where fields are the nodal average and arc-length derivatives are the
//! directed nodal difference over the reference length.
//!
//! Every strain component is a bilinear form `c · m_Iᵀ g_J` between a midpoint
//! block `m_I` and a derivative block `g_J`, so `B`, `U₁` and `U₂` all follow
//! from the same term table and are exactly linear in `q`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector6};

pub type Vector12 = SVector<f64, 12>;
pub type Vector24 = SVector<f64, 24>;
pub type Matrix6x12 = SMatrix<f64, 6, 12>;
pub type Matrix6x24 = SMatrix<f64, 6, 24>;
pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Matrix12x6 = SMatrix<f64, 12, 6>;
pub type Matrix24 = SMatrix<f64, 24, 24>;

const POS: usize = 0;
const D1: usize = 1;
const D2: usize = 2;
const D3: usize = 3;

/// `(coefficient, midpoint block, derivative block)` terms per strain row
/// `(γ₁, γ₂, γ₃, ω₁, ω₂, ω₃)`.
const STRAIN_TERMS: [&[(f64, usize, usize)]; 6] = [
    &[(1.0, D1, POS)],
    &[(1.0, D2, POS)],
    &[(1.0, D3, POS)],
    &[(0.5, D3, D2), (-0.5, D2, D3)],
    &[(0.5, D1, D3), (-0.5, D3, D1)],
    &[(0.5, D2, D1), (-0.5, D1, D2)],
];

/// Skew matrix with `hat(a) v = a × v`.
pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

fn block(v: &Vector12, b: usize) -> Vector3<f64> {
    v.fixed_rows::<3>(3 * b).into_owned()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeState {
    pub phi0: Vector3<f64>,
    pub d1: Vector3<f64>,
    pub d2: Vector3<f64>,
    pub d3: Vector3<f64>,
}

impl NodeState {
    pub fn new(phi0: Vector3<f64>, d1: Vector3<f64>, d2: Vector3<f64>, d3: Vector3<f64>) -> Self {
        Self { phi0, d1, d2, d3 }
    }

    pub fn to_vector(&self) -> Vector12 {
        let mut q = Vector12::zeros();
        q.fixed_rows_mut::<3>(0).copy_from(&self.phi0);
        q.fixed_rows_mut::<3>(3).copy_from(&self.d1);
        q.fixed_rows_mut::<3>(6).copy_from(&self.d2);
        q.fixed_rows_mut::<3>(9).copy_from(&self.d3);
        q
    }

    pub fn from_vector(q: &Vector12) -> Self {
        Self {
            phi0: block(q, POS),
            d1: block(q, D1),
            d2: block(q, D2),
            d3: block(q, D3),
        }
    }

    pub fn directors(&self) -> [Vector3<f64>; 3] {
        [self.d1, self.d2, self.d3]
    }

    /// Internal orthonormality constraint
    /// `½(d₁·d₁−1, d₂·d₂−1, d₃·d₃−1, 2d₂·d₃, 2d₁·d₃, 2d₁·d₂)`.
    pub fn h(&self) -> Vector6<f64> {
        let (d1, d2, d3) = (&self.d1, &self.d2, &self.d3);
        Vector6::new(
            0.5 * (d1.dot(d1) - 1.0),
            0.5 * (d2.dot(d2) - 1.0),
            0.5 * (d3.dot(d3) - 1.0),
            d2.dot(d3),
            d1.dot(d3),
            d1.dot(d2),
        )
    }

    /// `H = ∂h/∂q` (6×12).
    pub fn h_jacobian(&self) -> Matrix6x12 {
        let mut h = Matrix6x12::zeros();
        let rows: [[(usize, &Vector3<f64>); 2]; 6] = [
            [(D1, &self.d1), (D1, &self.d1)],
            [(D2, &self.d2), (D2, &self.d2)],
            [(D3, &self.d3), (D3, &self.d3)],
            [(D2, &self.d3), (D3, &self.d2)],
            [(D1, &self.d3), (D3, &self.d1)],
            [(D1, &self.d2), (D2, &self.d1)],
        ];
        for (r, entries) in rows.iter().enumerate() {
            if r < 3 {
                let (b, v) = entries[0];
                h.fixed_view_mut::<1, 3>(r, 3 * b).copy_from(&v.transpose());
            } else {
                for &(b, v) in entries {
                    h.fixed_view_mut::<1, 3>(r, 3 * b).copy_from(&v.transpose());
                }
            }
        }
        h
    }

    /// Null-space basis of `H`: translations, then infinitesimal rotations
    /// `δd_i = θ × d_i` (12×6).
    pub fn null_space(&self) -> Matrix12x6 {
        let mut n = Matrix12x6::zeros();
        n.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
        for (i, d) in self.directors().iter().enumerate() {
            n.fixed_view_mut::<3, 3>(3 * (i + 1), 3).copy_from(&(-hat(d)));
        }
        n
    }
}

/// `V(ν) = ∂(Hᵀν)/∂q` (12×12, symmetric, independent of `q`).
pub fn constraint_stiffness(nu: &Vector6<f64>) -> Matrix12 {
    let coef = [
        [nu[0], nu[5], nu[4]],
        [nu[5], nu[1], nu[3]],
        [nu[4], nu[3], nu[2]],
    ];
    let mut v = Matrix12::zeros();
    for i in 0..3 {
        for j in 0..3 {
            v.fixed_view_mut::<3, 3>(3 * (i + 1), 3 * (j + 1))
                .fill_diagonal(coef[i][j]);
        }
    }
    v
}

/// `W₁(a) = ∂(N(q)ᵀ a)/∂q` (6×12, independent of `q`).
pub fn null_space_transpose_derivative(a: &Vector12) -> Matrix6x12 {
    let mut w = Matrix6x12::zeros();
    for i in 1..4 {
        w.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&(-hat(&block(a, i))));
    }
    w
}

/// `W₂(b) = ∂(N(q) b)/∂q` (12×12, independent of `q`).
pub fn null_space_derivative(b: &Vector6<f64>) -> Matrix12 {
    let b2 = hat(&b.fixed_rows::<3>(3).into_owned());
    let mut w = Matrix12::zeros();
    for i in 1..4 {
        w.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&b2);
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementState {
    pub node_a: NodeState,
    pub node_b: NodeState,
    pub length_ref: f64,
}

impl ElementState {
    pub fn new(node_a: NodeState, node_b: NodeState, length_ref: f64) -> Self {
        debug_assert!(length_ref > 0.0);
        Self {
            node_a,
            node_b,
            length_ref,
        }
    }

    pub fn from_vector(q: &Vector24, length_ref: f64) -> Self {
        Self::new(
            NodeState::from_vector(&q.fixed_rows::<12>(0).into_owned()),
            NodeState::from_vector(&q.fixed_rows::<12>(12).into_owned()),
            length_ref,
        )
    }

    pub fn to_vector(&self) -> Vector24 {
        let mut q = Vector24::zeros();
        q.fixed_rows_mut::<12>(0).copy_from(&self.node_a.to_vector());
        q.fixed_rows_mut::<12>(12).copy_from(&self.node_b.to_vector());
        q
    }

    pub fn kinematics(&self) -> ElementKinematics {
        let (qa, qb) = (self.node_a.to_vector(), self.node_b.to_vector());
        ElementKinematics {
            q_mid: (qa + qb) * 0.5,
            dq_mid: (qb - qa) / self.length_ref,
        }
    }

    /// One-point Gauss rule: the midpoint with weight `L_e`.
    pub fn quadrature_weight(&self) -> f64 {
        self.length_ref
    }

    pub fn strain(&self, gamma_ref: &Vector3<f64>, omega_ref: &Vector3<f64>) -> Vector6<f64> {
        element_strain(&self.kinematics(), gamma_ref, omega_ref)
    }

    /// `B(q) = ∂e/∂q` (6×24).
    pub fn b_matrix(&self) -> Matrix6x24 {
        strain_gradient(&self.to_vector(), self.length_ref)
    }

    /// `U₁(a) = ∂(B(q) a)/∂q`. Since `B` is linear in `q`, this is `B` evaluated at `a`.
    pub fn u1(&self, a: &Vector24) -> Matrix6x24 {
        strain_gradient(a, self.length_ref)
    }

    /// `U₂(s) = ∂(B(q)ᵀ s)/∂q` (24×24, symmetric, independent of `q`).
    pub fn u2(&self, s: &Vector6<f64>) -> Matrix24 {
        strain_hessian(s, self.length_ref)
    }
}

/// Gauss-point fields of an element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementKinematics {
    pub q_mid: Vector12,
    /// Arc-length derivative of `q` (1/m).
    pub dq_mid: Vector12,
}

impl ElementKinematics {
    fn mid(&self, b: usize) -> Vector3<f64> {
        block(&self.q_mid, b)
    }

    fn diff(&self, b: usize) -> Vector3<f64> {
        block(&self.dq_mid, b)
    }
}

/// Shear and elongation `γ = (d₁·φ₀′, d₂·φ₀′, d₃·φ₀′)`.
pub fn gamma(kin: &ElementKinematics) -> Vector3<f64> {
    let dphi = kin.diff(POS);
    Vector3::new(
        kin.mid(D1).dot(&dphi),
        kin.mid(D2).dot(&dphi),
        kin.mid(D3).dot(&dphi),
    )
}

/// Bending and torsion
/// `ω = ½(d₃·d₂′ − d₂·d₃′, d₁·d₃′ − d₃·d₁′, d₂·d₁′ − d₁·d₂′)`.
pub fn omega(kin: &ElementKinematics) -> Vector3<f64> {
    let (d1, d2, d3) = (kin.mid(D1), kin.mid(D2), kin.mid(D3));
    let (g1, g2, g3) = (kin.diff(D1), kin.diff(D2), kin.diff(D3));
    0.5 * Vector3::new(
        d3.dot(&g2) - d2.dot(&g3),
        d1.dot(&g3) - d3.dot(&g1),
        d2.dot(&g1) - d1.dot(&g2),
    )
}

pub fn element_strain(
    kin: &ElementKinematics,
    gamma_ref: &Vector3<f64>,
    omega_ref: &Vector3<f64>,
) -> Vector6<f64> {
    let g = gamma(kin) - gamma_ref;
    let w = omega(kin) - omega_ref;
    Vector6::new(g.x, g.y, g.z, w.x, w.y, w.z)
}

// midpoint and difference weights for nodes a and b
fn node_weights(length: f64) -> ([f64; 2], [f64; 2]) {
    ([0.5, 0.5], [-1.0 / length, 1.0 / length])
}

fn strain_gradient(q: &Vector24, length: f64) -> Matrix6x24 {
    let (wm, wd) = node_weights(length);
    let qa = q.fixed_rows::<12>(0).into_owned();
    let qb = q.fixed_rows::<12>(12).into_owned();
    let mid = (qa + qb) * 0.5;
    let diff = (qb - qa) / length;
    let mut b = Matrix6x24::zeros();
    for (k, terms) in STRAIN_TERMS.iter().enumerate() {
        for &(c, mb, gb) in terms.iter() {
            let m = block(&mid, mb);
            let g = block(&diff, gb);
            for node in 0..2 {
                let col_m = 12 * node + 3 * mb;
                let col_g = 12 * node + 3 * gb;
                let mut row_m = b.fixed_view_mut::<1, 3>(k, col_m);
                row_m += (c * wm[node] * g).transpose();
                let mut row_g = b.fixed_view_mut::<1, 3>(k, col_g);
                row_g += (c * wd[node] * m).transpose();
            }
        }
    }
    b
}

fn strain_hessian(s: &Vector6<f64>, length: f64) -> Matrix24 {
    let (wm, wd) = node_weights(length);
    let mut u = Matrix24::zeros();
    for (k, terms) in STRAIN_TERMS.iter().enumerate() {
        if s[k] == 0.0 {
            continue;
        }
        for &(c, mb, gb) in terms.iter() {
            for alpha in 0..2 {
                for beta in 0..2 {
                    let v = c * s[k] * wm[alpha] * wd[beta];
                    let (r, col) = (12 * alpha + 3 * mb, 12 * beta + 3 * gb);
                    for i in 0..3 {
                        u[(r + i, col + i)] += v;
                        u[(col + i, r + i)] += v;
                    }
                }
            }
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec<const N: usize>(rng: &mut ChaCha8Rng) -> SVector<f64, N> {
        SVector::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    fn random_frame(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
        let axis = Unit::new_normalize(random_vec::<3>(rng) + Vector3::new(0.0, 0.0, 1e-3));
        Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0))
    }

    fn node_from_frame(phi0: Vector3<f64>, r: &Rotation3<f64>) -> NodeState {
        let m = r.matrix();
        NodeState::new(phi0, m.column(0).into(), m.column(1).into(), m.column(2).into())
    }

    fn random_element(rng: &mut ChaCha8Rng) -> ElementState {
        ElementState::from_vector(&random_vec::<24>(rng), rng.random_range(0.05..1.0))
    }

    #[test]
    fn straight_element_strains() {
        let r = Rotation3::identity();
        let a = node_from_frame(Vector3::zeros(), &r);
        let b = node_from_frame(Vector3::new(0.0, 0.0, 0.5), &r);
        let el = ElementState::new(a, b, 0.5);
        let kin = el.kinematics();
        assert_eq!(gamma(&kin), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(omega(&kin), Vector3::zeros());
        let zero_len = ElementState::new(a, a, 0.5).kinematics();
        assert_eq!(gamma(&zero_len), Vector3::zeros());
    }

    #[test]
    fn gamma_and_omega_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let el = random_element(&mut rng);
            let (a, b, l) = (el.node_a, el.node_b, el.length_ref);
            let avg = |x: Vector3<f64>, y: Vector3<f64>| (x + y) * 0.5;
            let der = |x: Vector3<f64>, y: Vector3<f64>| (y - x) / l;
            let dphi = der(a.phi0, b.phi0);
            let (d1, d2, d3) = (avg(a.d1, b.d1), avg(a.d2, b.d2), avg(a.d3, b.d3));
            let (g1, g2, g3) = (der(a.d1, b.d1), der(a.d2, b.d2), der(a.d3, b.d3));
            let kin = el.kinematics();
            let gm = gamma(&kin);
            let om = omega(&kin);
            assert!((gm - Vector3::new(d1.dot(&dphi), d2.dot(&dphi), d3.dot(&dphi))).amax() < 1e-14);
            let expected = Vector3::new(
                0.5 * (d3.dot(&g2) - d2.dot(&g3)),
                0.5 * (d1.dot(&g3) - d3.dot(&g1)),
                0.5 * (d2.dot(&g1) - d1.dot(&g2)),
            );
            assert!((om - expected).amax() < 1e-14);
        }
    }

    #[test]
    fn circular_arc_curvature() {
        let radius = 2.0;
        let frame = |theta: f64| {
            let phi = radius * Vector3::new(1.0 - theta.cos(), theta.sin(), 0.0);
            let d1 = Vector3::new(0.0, 0.0, 1.0);
            let d3 = Vector3::new(theta.sin(), theta.cos(), 0.0);
            NodeState::new(phi, d1, d3.cross(&d1), d3)
        };
        for &dtheta in &[0.1, 0.05] {
            let el = ElementState::new(frame(0.3), frame(0.3 + dtheta), radius * dtheta);
            let om = omega(&el.kinematics());
            // bending about the out-of-plane director d1
            assert!(om.y.abs() < 1e-14 && om.z.abs() < 1e-14);
            assert!((om.x + 1.0 / radius).abs() < dtheta * dtheta);
        }
    }

    #[test]
    fn strain_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (gr, wr) = (random_vec::<3>(&mut rng), random_vec::<3>(&mut rng));
        for _ in 0..10 {
            let el = random_element(&mut rng);
            let q = el.to_vector();
            let b = el.b_matrix();
            let h = 1e-6;
            for j in 0..24 {
                let mut qp = q;
                qp[j] += h;
                let mut qm = q;
                qm[j] -= h;
                let ep = ElementState::from_vector(&qp, el.length_ref).strain(&gr, &wr);
                let em = ElementState::from_vector(&qm, el.length_ref).strain(&gr, &wr);
                let fd = (ep - em) / (2.0 * h);
                for i in 0..6 {
                    assert!((fd[i] - b[(i, j)]).abs() / (1.0 + b[(i, j)].abs()) < 1e-7);
                }
            }
        }
    }

    #[test]
    fn strain_gradient_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let el = random_element(&mut rng);
        let scaled = ElementState::from_vector(&(el.to_vector() * 2.5), el.length_ref);
        assert!((scaled.b_matrix() - el.b_matrix() * 2.5).amax() < 1e-13);
        // quadratic strain parts: B(q) q = 2 (e(q) + e_ref)
        let q = el.to_vector();
        let raw = el.strain(&Vector3::zeros(), &Vector3::zeros());
        assert!((el.b_matrix() * q - 2.0 * raw).amax() < 1e-12);
    }

    #[test]
    fn curvature_rows_ignore_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_element(&mut rng).b_matrix();
        for node in 0..2 {
            assert_eq!(b.fixed_view::<3, 3>(3, 12 * node).amax(), 0.0);
        }
    }

    #[test]
    fn u1_and_u2_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let el = random_element(&mut rng);
            let a = random_vec::<24>(&mut rng);
            let s = random_vec::<6>(&mut rng);
            let q = el.to_vector();
            let u1 = el.u1(&a);
            let u2 = el.u2(&s);
            assert!((u2 - u2.transpose()).amax() < 1e-12);
            let h = 1e-6;
            for j in 0..24 {
                let mut qp = q;
                qp[j] += h;
                let mut qm = q;
                qm[j] -= h;
                let bp = ElementState::from_vector(&qp, el.length_ref).b_matrix();
                let bm = ElementState::from_vector(&qm, el.length_ref).b_matrix();
                let fd1 = (bp * a - bm * a) / (2.0 * h);
                let fd2 = (bp.transpose() * s - bm.transpose() * s) / (2.0 * h);
                for i in 0..6 {
                    assert!((fd1[i] - u1[(i, j)]).abs() / (1.0 + u1[(i, j)].abs()) < 1e-6);
                }
                for i in 0..24 {
                    assert!((fd2[i] - u2[(i, j)]).abs() / (1.0 + u2[(i, j)].abs()) < 1e-6);
                }
            }
        }
        let el = random_element(&mut rng);
        assert_eq!(el.u2(&Vector6::zeros()), Matrix24::zeros());
    }

    #[test]
    fn orthonormal_frame_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = node_from_frame(random_vec::<3>(&mut rng), &random_frame(&mut rng));
            assert!(n.h().amax() < 1e-15);
            assert!((n.h_jacobian() * n.null_space()).amax() < 1e-14);
            assert_eq!(n.null_space().rank(1e-10), 6);
        }
    }

    #[test]
    fn node_operators_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        for _ in 0..10 {
            let q = random_vec::<12>(&mut rng);
            let node = NodeState::from_vector(&q);
            let nu = random_vec::<6>(&mut rng);
            let a = random_vec::<12>(&mut rng);
            let b = random_vec::<6>(&mut rng);
            let (hj, v) = (node.h_jacobian(), constraint_stiffness(&nu));
            let (w1, w2) = (null_space_transpose_derivative(&a), null_space_derivative(&b));
            assert!((v - v.transpose()).amax() == 0.0);
            for j in 0..12 {
                let mut qp = q;
                qp[j] += h;
                let mut qm = q;
                qm[j] -= h;
                let (np, nm) = (NodeState::from_vector(&qp), NodeState::from_vector(&qm));
                let checks: [(SVector<f64, 12>, Matrix12, &str); 2] = [
                    ((np.h_jacobian().transpose() * nu - nm.h_jacobian().transpose() * nu) / (2.0 * h), v, "V"),
                    ((np.null_space() * b - nm.null_space() * b) / (2.0 * h), w2, "W2"),
                ];
                for (fd, an, name) in checks {
                    for i in 0..12 {
                        assert!((fd[i] - an[(i, j)]).abs() / (1.0 + an[(i, j)].abs()) < 1e-7, "{name}");
                    }
                }
                let fd_h = (np.h() - nm.h()) / (2.0 * h);
                let fd_w1 = (np.null_space().transpose() * a - nm.null_space().transpose() * a) / (2.0 * h);
                for i in 0..6 {
                    assert!((fd_h[i] - hj[(i, j)]).abs() / (1.0 + hj[(i, j)].abs()) < 1e-7);
                    assert!((fd_w1[i] - w1[(i, j)]).abs() / (1.0 + w1[(i, j)].abs()) < 1e-7);
                }
            }
        }
    }

    #[test]
    fn strains_are_frame_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let el = random_element(&mut rng);
            let r = random_frame(&mut rng);
            let shift = random_vec::<3>(&mut rng);
            let rot = |n: &NodeState| {
                NodeState::new(r * n.phi0 + shift, r * n.d1, r * n.d2, r * n.d3)
            };
            let moved = ElementState::new(rot(&el.node_a), rot(&el.node_b), el.length_ref);
            let (k0, k1) = (el.kinematics(), moved.kinematics());
            assert!((gamma(&k0) - gamma(&k1)).amax() < 1e-13);
            assert!((omega(&k0) - omega(&k1)).amax() < 1e-13);
        }
    }

    #[test]
    fn quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let el = random_element(&mut rng);
        assert_eq!(el.quadrature_weight(), el.length_ref);
        // a linear integrand f(σ) = α + β σ over [0, L] is integrated exactly
        let (alpha, beta, l) = (0.7, -2.3, el.length_ref);
        let midpoint = l * (alpha + beta * 0.5 * l);
        assert_relative_eq!(midpoint, alpha * l + 0.5 * beta * l * l, epsilon = 1e-15);
    }

    #[test]
    fn hat_is_cross_product() {
        let a = Vector3::new(0.3, -1.2, 2.0);
        let v = Vector3::new(-0.5, 0.25, 1.0);
        assert!((hat(&a) * v - a.cross(&v)).amax() < 1e-15);
    }
}
