//! Property tests that cut across modules.

use kirlab::continuum::{frac_bound, frac_kir, frac_kir_pv, frac_kir_regular, FracKernelSpec};
use kirlab::convergence::{
    estimate_limit, family_coupling, family_fd, family_poisson_cutoff, family_tail_dichotomy, TailDensity,
};
use kirlab::division::{bump_family, DEFAULT_SEED};
use kirlab::dyadic::{
    ball_measure, cs_constant, kernel_kirchhoff, rho, spectral_kirchhoff, spectral_kirchhoff_kernel, HaarExpansion2,
    HaarFunction,
};
use kirlab::graph::{kirchhoff, GraphSystem};
use kirlab::lattice::{fd_laplacian, frac_lattice_constant, frac_laplacian, FracSpec, LatticeSpec};
use kirlab::{check_division, grad0, CouplingWeights, NodeMeasure, Point, ScalarField, TwoPointField};
use proptest::prelude::*;

fn smooth_two_point(a: f64, b: f64) -> TwoPointField {
    TwoPointField::new(move |x, y| (a * x[0] + b * y[0]).sin() + a * b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grad0_is_antisymmetric(x in -5.0f64..5.0, y in -5.0f64..5.0, c in -3.0f64..3.0) {
        let f = ScalarField::from_1d(move |t| (c * t).exp() - t * t);
        let g = grad0(&f);
        prop_assert_eq!(g.eval(&[x], &[x]), 0.0);
        prop_assert_eq!(g.eval(&[x], &[y]), -g.eval(&[y], &[x]));
    }

    #[test]
    fn graph_kirchhoff_satisfies_division(
        n in 2usize..7,
        seed in 0u64..1000,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let nodes: Vec<Point> = (0..n).map(|k| Point::scalar(k as f64 * 0.7 + (seed % 7) as f64 * 0.01)).collect();
        let weights: Vec<f64> = (0..n).map(|k| 0.5 + ((k as u64 * 31 + seed) % 5) as f64 * 0.3).collect();
        let mut entries = Vec::new();
        for k in 0..n {
            for j in 0..n {
                if j != k && (k + j + seed as usize) % 3 != 0 {
                    entries.push((k, j, 0.1 + ((k * 7 + j * 3) % 5) as f64 * 0.2));
                }
            }
        }
        let sys = GraphSystem::new(NodeMeasure::new(nodes.clone(), weights).unwrap(), CouplingWeights::new(entries).unwrap()).unwrap();
        let phi = smooth_two_point(a, b);
        let psi = ScalarField::from_node_values(&nodes, &kirchhoff(&sys, &phi).unwrap());
        let r = check_division(sys.measure(), &sys, &psi, &phi, &bump_family(&nodes, 0.5, DEFAULT_SEED)).unwrap();
        prop_assert!(r.passes(1e-12), "{:?}", r.max_relative);
    }

    #[test]
    fn lattice_operators_are_translation_invariant(
        k in prop::collection::vec(-3i64..3, 2),
        v in prop::collection::vec(-2i64..3, 2),
    ) {
        // Integer-valued field on h = 1 keeps every evaluation exact.
        let f = ScalarField::new(|x| (x[0].powi(3) - 2.0 * x[0] * x[1] + x[1] * x[1]).round())
            .with_sup_bound(1e3);
        let spec = LatticeSpec::new(2, 1.0, 12).unwrap();
        let shifted_f = {
            let v = v.clone();
            ScalarField::new(move |x| (
                (x[0] - v[0] as f64).powi(3) - 2.0 * (x[0] - v[0] as f64) * (x[1] - v[1] as f64)
                    + (x[1] - v[1] as f64).powi(2)
            ).round())
            .with_sup_bound(1e3)
        };
        let kv: Vec<i64> = k.iter().zip(&v).map(|(a, b)| a + b).collect();
        prop_assert_eq!(fd_laplacian(&spec, &f, &k).unwrap(), fd_laplacian(&spec, &shifted_f, &kv).unwrap());
        let fs = FracSpec::new(0.7, 4).unwrap();
        let a = frac_laplacian(&spec, &fs, &f, &k).unwrap();
        let b = frac_laplacian(&spec, &fs, &shifted_f, &kv).unwrap();
        prop_assert_eq!(a.value, b.value);
    }

    #[test]
    fn lattice_constant_bracket_contains_refinement(n in 1usize..3, alpha in 0.2f64..1.8, r in 2i64..40) {
        let c = frac_lattice_constant(n, alpha, r).unwrap();
        let fine = frac_lattice_constant(n, alpha, 2 * r).unwrap();
        prop_assert!(c.lower() <= fine.value && fine.value <= c.upper());
    }

    #[test]
    fn rho_is_an_ultrametric(x in 0.0f64..16.0, y in 0.0f64..16.0, z in 0.0f64..16.0) {
        let (xy, yz, xz) = (rho(x, y).unwrap(), rho(y, z).unwrap(), rho(x, z).unwrap());
        prop_assert!(xz <= xy.max(yz));
    }

    #[test]
    fn dyadic_balls_are_one_ahlfors(x in 0.0f64..32.0, r in 1e-3f64..50.0) {
        let m = ball_measure(x, r).unwrap();
        prop_assert!(0.5 * r <= m && m <= 2.0 * r);
    }

    #[test]
    fn spectral_kernel_matches_kernel_quadrature(
        terms in prop::collection::vec((0i32..4, 0u64..4, 0i32..4, 0u64..4, -2.0f64..2.0), 1..5),
        s in 0.05f64..0.45,
        u in 0.0f64..1.0,
    ) {
        let list: Vec<(HaarFunction, HaarFunction, f64)> = terms
            .iter()
            .map(|&(j, k, j2, k2, c)| {
                let k = k % (1u64 << j);
                let k2 = k2 % (1u64 << j2);
                (HaarFunction::new(j, k), HaarFunction::new(j2, k2), c)
            })
            .collect();
        let phi = HaarExpansion2::new(list).unwrap();
        let x = (u * 1024.0).floor() / 1024.0 + 1.0 / 4096.0;
        let a = spectral_kirchhoff_kernel(s, &phi, x).unwrap();
        let b = kernel_kirchhoff(s, &phi, x).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn regular_kir_within_bound(c in -2.0f64..2.0, w in 0.5f64..2.0, x in -1.0f64..1.0, s in 0.05f64..0.45) {
        let bump = move |t: f64| {
            let u = 1.0 - (t / w).powi(2);
            if u <= 0.0 { 0.0 } else { u * u * u }
        };
        // |d/dt (1 - t^2)^3| <= 1.8 / w.
        let phi = TwoPointField::from_1d(move |_, y| c * bump(y))
            .with_y_support(w)
            .with_sup_norm(c.abs())
            .with_y_gradient_sup(c.abs() * 1.8 / w);
        let spec = FracKernelSpec::new(1, s).unwrap();
        let v = frac_kir_regular(&spec, &phi, &[x]).unwrap().value;
        prop_assert!(v.abs() <= frac_bound(&spec, &phi));
    }

    #[test]
    fn verdicts_stable_under_halving(x in 0.3f64..1.5) {
        let x = (x * 64.0).round() / 64.0;
        let cases: Vec<(kirlab::convergence::ConvergenceFamily, TwoPointField)> = vec![
            (family_fd(), grad0(&ScalarField::from_1d(|t| t.powi(4) - t))),
            (family_poisson_cutoff(), TwoPointField::from_1d(|_, y| y.cos())),
            (family_coupling(|h, x: f64| x + h * (2.0 + x.sin()), None), TwoPointField::from_1d(|x, y| (y - x) * x)),
            (
                family_tail_dichotomy(TailDensity::epanechnikov()),
                TwoPointField::from_1d(|_, y| (1.0 - y * y).max(0.0)).with_y_support(1.0),
            ),
        ];
        for (fam, phi) in cases {
            let a = estimate_limit(&fam, &phi, &[x], 0.25, 9).unwrap();
            let b = estimate_limit(&fam, &phi, &[x], 0.125, 9).unwrap();
            prop_assert_eq!(a.verdict, b.verdict, "{}", fam.name());
            let tol = a.error_bar + b.error_bar + 1e-9 * (1.0 + a.value.abs());
            prop_assert!((a.value - b.value).abs() <= tol, "{}: {} vs {}", fam.name(), a.value, b.value);
        }
    }
}

#[test]
fn regime_continuity_near_one_half() {
    // Diagnostic only: the two evaluation paths agree on either side of s = 1/2.
    let bump = |t: f64| (1.0 - t * t).max(0.0).powi(4);
    let phi = TwoPointField::from_1d(move |x, y| bump(x) * bump(y)).with_y_support(1.0);
    let lo = frac_kir_regular(&FracKernelSpec::new(1, 0.49).unwrap(), &phi, &[0.3]).unwrap().value;
    let hi = frac_kir_pv(&FracKernelSpec::new(1, 0.51).unwrap(), &phi, &[0.3]).unwrap().value;
    assert!((lo - hi).abs() < 0.05 * lo.abs(), "{lo} vs {hi}");
    let auto = frac_kir(&FracKernelSpec::new(1, 0.49).unwrap(), &phi, &[0.3]).unwrap().value;
    assert_eq!(auto, lo);
}

#[test]
#[ignore = "the stated constant c_s differs from the kernel eigenvalue; see the acceptance table"]
fn spectral_with_stated_constant_matches_kernel() {
    let h = HaarFunction::new(1, 1);
    let phi = HaarExpansion2::new([(h, h, 1.0)]).unwrap();
    let s = 0.25;
    let a = spectral_kirchhoff(s, &phi, 0.6).unwrap();
    let b = kernel_kirchhoff(s, &phi, 0.6).unwrap();
    assert!((a - b).abs() <= 1e-6 * b.abs(), "{a} vs {b} (c_s = {})", cs_constant(s));
}
