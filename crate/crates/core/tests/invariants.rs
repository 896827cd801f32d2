//! Property tests of structural invariants on random instances.

use hd_core::verify::instances::{certified, random_logistic_elastic_net, random_quadratic};
use hd_core::{Atom, DenseVector, Rng};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matvec_is_linear(seed in any::<u64>(), n in 1usize..9, m in 1usize..9, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let a = rng.normal_matrix(n, m, 1.0);
        let (u, v) = (rng.normal_vector(m), rng.normal_vector(m));
        let lhs = a.matvec(&u.lincomb(alpha, &v, beta)).unwrap();
        let rhs = a.matvec(&u).unwrap().lincomb(alpha, &a.matvec(&v).unwrap(), beta);
        prop_assert!((&lhs - &rhs).norm_inf() <= 1e-12 * (1.0 + rhs.norm_inf()));
        // ⟨Au, w⟩ = ⟨u, Aᵀw⟩
        let w = rng.normal_vector(n);
        let left = a.matvec(&u).unwrap().dot(&w);
        let right = u.dot(&a.tmatvec(&w).unwrap());
        prop_assert!(rel(left, right) <= 1e-12);
    }

    #[test]
    fn weak_duality(seed in any::<u64>(), n in 1usize..8, m in 1usize..8) {
        let mut rng = Rng::new(seed);
        let problem = random_quadratic(&mut rng, n, m, false).unwrap();
        let y = rng.normal_vector(m).scaled(3.0);
        let p = rng.normal_vector(n).scaled(3.0);
        let primal = problem.primal_value(&y).unwrap();
        let dual = problem.dual_value(&p).unwrap();
        prop_assert!(primal >= dual - 1e-10 * primal.abs().max(1.0));
    }

    #[test]
    fn bregman_matches_definition(seed in any::<u64>(), n in 1usize..8, m in 1usize..8) {
        let mut rng = Rng::new(seed);
        let problem = random_logistic_elastic_net(&mut rng, n, m).unwrap();
        let (u, v) = (rng.normal_vector(n), rng.normal_vector(n));
        let h = problem.h();
        let direct = h.value(&u).unwrap() - h.value(&v).unwrap() - h.grad(&v).unwrap().dot(&(&u - &v));
        let d = problem.bregman_h(&u, &v).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - direct).abs() <= 1e-10 * (1.0 + h.value(&u).unwrap().abs()));
        prop_assert_eq!(problem.bregman_h(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn partial_gap_is_sandwiched(seed in any::<u64>(), n in 1usize..8, m in 1usize..8) {
        let mut rng = Rng::new(seed);
        let (problem, cert) = certified(random_quadratic(&mut rng, n, m, false).unwrap()).unwrap();
        let y = &cert.y_star + &rng.normal_vector(m);
        let p = &cert.p_star + &rng.normal_vector(n);
        let partial = problem.partial_gap(&cert, &problem.ax(&y).unwrap(), &problem.atp(&p).unwrap()).unwrap();
        let full = problem.full_gap(&y, &p).unwrap();
        prop_assert!(partial >= -1e-12);
        prop_assert!(partial <= full + 1e-10 * full.max(1.0));
    }

    #[test]
    fn hamiltonian_is_midpoint_convex(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, t in 0.0f64..1.0) {
        let mut rng = Rng::new(seed);
        let (problem, cert) = certified(random_logistic_elastic_net(&mut rng, n, m).unwrap()).unwrap();
        let point = |rng: &mut Rng| (&cert.y_star + &rng.normal_vector(m), &cert.q_star + &rng.normal_vector(m));
        let (y0, q0) = point(&mut rng);
        let (y1, q1) = point(&mut rng);
        let h = |y: &DenseVector, q: &DenseVector| problem.hamiltonian_yq(&cert, y, q).unwrap();
        let (ym, qm) = (y0.lincomb(1.0 - t, &y1, t), q0.lincomb(1.0 - t, &q1, t));
        let (h0, h1, hm) = (h(&y0, &q0), h(&y1, &q1), h(&ym, &qm));
        prop_assert!(hm <= (1.0 - t) * h0 + t * h1 + 1e-10 * (1.0 + h0.max(h1)));
        prop_assert!(hm >= -1e-12);
    }

    #[test]
    fn elastic_net_fenchel_young(seed in any::<u64>(), m in 1usize..8, l1 in 0.01f64..1.0, l2 in 0.05f64..2.0) {
        let mut rng = Rng::new(seed);
        let g = Atom::elastic_net(l1, l2, m).unwrap();
        let x = rng.normal_vector(m).scaled(2.0);
        let v = rng.normal_vector(m).scaled(2.0);
        prop_assert!(g.value(&x).unwrap() + g.conj_value(&v).unwrap() >= x.dot(&v) - 1e-12);
        // Equality along the conjugate gradient.
        let xv = g.conj_grad(&v).unwrap();
        let gap = g.value(&xv).unwrap() + g.conj_value(&v).unwrap() - xv.dot(&v);
        prop_assert!(gap.abs() <= 1e-10 * (1.0 + v.norm_sq()));
    }
}
