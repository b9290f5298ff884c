//! Property tests for the invariants each module promises.

use ddcm::assembly::{build_quarter_arc, feasibility, solve_structure};
use ddcm::beam::{constraint_stiffness, ElementState, NodeState};
use ddcm::checks::{compare_with_fd, run_derivative_checks};
use ddcm::constitutive::{generate_synthetic_data, LawKind, LawPreset, ManifoldLaw, PhasePoint};
use ddcm::newton::{jacobian_check, newton_solve, FnProblem, KktProblem, NewtonSettings};
use ddcm::truss::{FixNlpProblem, FixNlpState, TrussModel};
use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};
use proptest::prelude::*;

fn frame(quat: [f64; 4], pos: [f64; 3]) -> NodeState {
    let q = Quaternion::new(quat[0], quat[1], quat[2], quat[3]);
    let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    let m = r.matrix();
    NodeState::new(Vector3::from(pos), m.column(0).into(), m.column(1).into(), m.column(2).into())
}

fn quat() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0).prop_filter("non-degenerate", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-2)
}

fn stiffness(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..2.0, n)
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn vec6(range: f64) -> impl Strategy<Value = Vector6<f64>> {
    prop::array::uniform6(-range..range).prop_map(Vector6::from)
}

/// `r(x) = A x + ½ x∘x − b` with a diagonally dominant `A`.
fn quadratic_problem(b: Vec<f64>) -> impl KktProblem {
    let n = b.len();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 4.0 } else { 0.3 / (1.0 + (i + j) as f64) });
    let a2 = a.clone();
    let b = DVector::from_vec(b);
    FnProblem::new(
        n,
        move |x: &DVector<f64>| &a * x + x.component_mul(x) * 0.5 - &b,
        move |x: &DVector<f64>| &a2 + DMatrix::from_diagonal(x),
        "quadratic",
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn newton_is_deterministic_and_superlinear(b in prop::collection::vec(-1.0f64..1.0, 1..6)) {
        let p = quadratic_problem(b);
        let x0 = DVector::zeros(p.dim());
        let settings = NewtonSettings::with_tol(1e-14).traced();
        let r1 = newton_solve(&p, &x0, &settings).unwrap();
        let r2 = newton_solve(&p, &x0, &settings).unwrap();
        prop_assert!(r1.converged);
        prop_assert_eq!(r1.x_star.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        r2.x_star.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(&r1.step_norms, &r2.step_norms);
        prop_assert!(jacobian_check(&p, &r1.x_star, 1e-6) < 1e-5);
        // step ratios fall below 1e-2 before the rounding floor
        let steps: Vec<f64> = r1.step_norms.iter().copied().filter(|&s| s > 1e-12).collect();
        if steps.len() >= 3 {
            let n = steps.len();
            prop_assert!(steps[n - 1] / steps[n - 2] < 1e-2, "steps {:?}", steps);
        }
    }

    #[test]
    fn explicit_laws_vanish_on_their_graph(
        kind in prop_oneof![Just(LawKind::LinearExplicit), Just(LawKind::PolyExplicit)],
        a in stiffness(3), b in coeffs(3), c in coeffs(3), e in coeffs(3),
    ) {
        let (b, c) = if kind == LawKind::LinearExplicit { (vec![0.0; 3], vec![0.0; 3]) } else { (b, c) };
        let law = ManifoldLaw::new(kind, a, b, c).unwrap();
        let e = DVector::from_vec(e);
        let s = law.explicit_stress(&e).unwrap();
        prop_assert!(law.g_eval(&PhasePoint::new(e, s)).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn law_derivatives_match_differences(
        kind in prop_oneof![Just(LawKind::PolyExplicit), Just(LawKind::PolyImplicit)],
        a in stiffness(2), b in coeffs(2), c in coeffs(2),
        e in coeffs(2), s in coeffs(2), xi in coeffs(2),
    ) {
        let law = ManifoldLaw::new(kind, a, b, c).unwrap();
        let (e, s, xi) = (DVector::from_vec(e).scale(0.5), DVector::from_vec(s).scale(0.5), DVector::from_vec(xi));
        let p = PhasePoint::new(e.clone(), s.clone());
        let (de, ds) = law.g_jacobians(&p).unwrap();
        let ge = |x: &DVector<f64>| law.g_eval(&PhasePoint::new(x.clone(), s.clone())).unwrap();
        let gs = |x: &DVector<f64>| law.g_eval(&PhasePoint::new(e.clone(), x.clone())).unwrap();
        prop_assert!(compare_with_fd(ge, &e, &de, 1e-6) < 1e-6);
        prop_assert!(compare_with_fd(gs, &s, &ds, 1e-6) < 1e-6);
        let h = law.g_hessian_contract(&p, &xi).unwrap();
        let te = |x: &DVector<f64>| law.g_jacobians(&PhasePoint::new(x.clone(), s.clone())).unwrap().0.transpose() * &xi;
        let ts = |x: &DVector<f64>| law.g_jacobians(&PhasePoint::new(e.clone(), x.clone())).unwrap().1.transpose() * &xi;
        prop_assert!(compare_with_fd(te, &e, &h.strain_strain, 1e-6) < 1e-6);
        prop_assert!(compare_with_fd(ts, &s, &h.stress_stress, 1e-6) < 1e-6);
    }

    #[test]
    fn noise_free_data_lies_on_the_law(a in 0.1f64..5.0, b in -1.0f64..1.0, c in 0.0f64..1.0, n in 2usize..60, seed in any::<u64>()) {
        let law = ManifoldLaw::new(LawKind::PolyExplicit, vec![a], vec![b], vec![c]).unwrap();
        let data = generate_synthetic_data(&law, n, (-3.0, 3.0), 0.0, seed).unwrap();
        prop_assert_eq!(data.len(), n);
        for i in 0..n {
            prop_assert_eq!(law.g_eval(&data.point(i)).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn fixnlp_solutions_are_feasible(e_data in -10.0f64..10.0, s_data in -10.0f64..10.0) {
        let model = TrussModel::unit_bar(20.0);
        let h_n = &model.h_mat * &model.n_mat;
        prop_assert_eq!(h_n.amax(), 0.0);
        let problem = FixNlpProblem { model: &model, data: PhasePoint::scalar(e_data, s_data) };
        let x0 = model.cold_start().to_vector();
        prop_assert!(jacobian_check(&problem, &x0, 1e-6) < 1e-5);
        // cold starts may meet a singular matrix; only converged solves are checked
        let r = newton_solve(&problem, &x0, &NewtonSettings::with_tol(1e-10));
        if let Some(r) = r.ok().filter(|r| r.converged) {
            let st = FixNlpState::from_vector(&model, &r.x_star).unwrap();
            prop_assert!((st.e - model.strain(&st.q)).abs() < 1e-9);
            let eq = DVector::from_iterator(6, (model.e_mat * st.q).iter().copied());
            let f = DVector::from_iterator(6, model.f_ext.iter().copied());
            let balance = model.n_mat.transpose() * (eq * st.s - f);
            prop_assert!(balance.norm() < 1e-8);
            let hq = &model.h_mat * DVector::from_iterator(6, st.q.iter().copied()) - &model.h_ref;
            prop_assert!(hq.norm() < 1e-10);
        }
    }

    #[test]
    fn node_null_space(qt in quat(), pos in prop::array::uniform3(-5.0f64..5.0)) {
        let node = frame(qt, pos);
        prop_assert!(node.h().amax() < 1e-14);
        let n = node.null_space();
        prop_assert!((node.h_jacobian() * n).amax() < 1e-13);
        let sv = n.svd(false, false).singular_values;
        prop_assert!(sv.min() > 1e-8 * sv.max());
    }

    #[test]
    fn operator_symmetry(nu in vec6(10.0), s in vec6(10.0), q in prop::array::uniform24(-1.0f64..1.0), l in 0.05f64..1.0) {
        let v = constraint_stiffness(&nu);
        prop_assert_eq!(v, v.transpose());
        let el = ElementState::from_vector(&q.into(), l);
        let u2 = el.u2(&s);
        prop_assert!((u2 - u2.transpose()).amax() <= 1e-14 * (1.0 + u2.amax()));
    }

    #[test]
    fn strains_are_frame_invariant(
        qa in quat(), qb in quat(), rot in quat(),
        pa in prop::array::uniform3(-1.0f64..1.0), pb in prop::array::uniform3(-1.0f64..1.0),
        l in 0.05f64..1.0,
    ) {
        let (a, b) = (frame(qa, pa), frame(qb, pb));
        let r: Matrix3<f64> = *UnitQuaternion::from_quaternion(Quaternion::new(rot[0], rot[1], rot[2], rot[3]))
            .to_rotation_matrix()
            .matrix();
        let turn = |n: &NodeState| NodeState::new(r * n.phi0, r * n.d1, r * n.d2, r * n.d3);
        let zero = Vector3::zeros();
        let before = ElementState::new(a, b, l).strain(&zero, &zero);
        let after = ElementState::new(turn(&a), turn(&b), l).strain(&zero, &zero);
        prop_assert!((before - after).amax() < 1e-12 * (1.0 + before.amax()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn beam_operator_checks_hold_for_any_seed(seed in any::<u64>()) {
        let report = run_derivative_checks(seed, 1, 1e-6);
        for e in report.entries.iter().filter(|e| e.name.starts_with("beam") || e.name.starts_with("node")) {
            prop_assert!(e.max_error < 1e-6, "{} {:e}", e.name, e.max_error);
        }
    }

    #[test]
    fn converged_arcs_satisfy_kkt_structure(preset in 0usize..5, loads in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 3)) {
        let preset = LawPreset::ALL[preset];
        let mut s = build_quarter_arc(4).unwrap();
        s.law = preset.law();
        for (n, f) in loads.iter().enumerate() {
            s.loads[n + 1] = Vector3::from(*f);
        }
        let sol = solve_structure(&s, &NewtonSettings::with_tol(1e-12)).unwrap();
        prop_assert!(sol.converged, "{preset} did not converge");
        let f = feasibility(&s, &sol).unwrap();
        prop_assert!(f.within(1e-10, 1e-9, 1e-9, 1e-8), "{:?}", f);
        for el in &sol.elements {
            let gap = s.weight * (el.strain - el.strain_check);
            prop_assert!((el.lambda + gap).amax() < 1e-8 * (1.0 + gap.amax()));
            let (de, _) = s.law.g_jacobians(&PhasePoint::new(
                DVector::from_column_slice(el.strain_check.as_slice()),
                DVector::from_column_slice(el.stress_check.as_slice()),
            )).unwrap();
            let xi = DVector::from_column_slice(el.xi.as_slice());
            let d_echeck = -DVector::from_column_slice(gap.as_slice()) + de.transpose() * xi;
            prop_assert!(d_echeck.amax() < 1e-8 * (1.0 + gap.amax()));
        }
    }
}
