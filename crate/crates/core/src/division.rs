//! The division contract `<T, phi psi> = <<S, phi Phi>>`, checked on a finite family of
//! test functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{KirError, Result};
use crate::field::{Point, ScalarField, TwoPointField};
use crate::measure::{Pairing1, Pairing2};

/// Seed used for the random part of [`bump_family`].
pub const DEFAULT_SEED: u64 = 0x4b49_5243;

/// Residuals of the division contract, one per test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivisionReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// `max(|<T, phi psi>|, |<<S, phi Phi>>|)` per test function.
    pub scales: Vec<f64>,
    /// Largest `residual / scale` (0 where both sides vanish).
    pub max_relative: f64,
}

impl DivisionReport {
    /// `true` when every residual is within `rel_tol` of its scale (absolute `rel_tol` for zero scales).
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.residuals
            .iter()
            .zip(&self.scales)
            .all(|(r, s)| *r <= rel_tol * s.max(1.0))
    }
}

/// Evaluates `|<T, phi_i psi> - <<S, phi_i Phi>>|` for every test function `phi_i`.
pub fn check_division(
    t: &dyn Pairing1,
    s: &dyn Pairing2,
    psi: &ScalarField,
    phi: &TwoPointField,
    tests: &[ScalarField],
) -> Result<DivisionReport> {
    let mut residuals = Vec::with_capacity(tests.len());
    let mut scales = Vec::with_capacity(tests.len());
    for (i, test) in tests.iter().enumerate() {
        let lhs = t.pair(&|x| test.eval(x) * psi.eval(x));
        let rhs = s.pair2(&|x, y| test.eval(x) * phi.eval(x, y));
        for (side, v) in [("<T, phi psi>", lhs), ("<<S, phi Phi>>", rhs)] {
            if !v.is_finite() {
                return Err(KirError::NonFinite {
                    context: format!("{side} for test function {i}"),
                    value: v,
                });
            }
        }
        residuals.push((lhs - rhs).abs());
        scales.push(lhs.abs().max(rhs.abs()));
    }
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(*r));
    let max_relative = residuals
        .iter()
        .zip(&scales)
        .map(|(r, s)| if *s > 0.0 { r / s } else if *r > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0f64, f64::max);
    Ok(DivisionReport {
        residuals,
        max_residual,
        scales,
        max_relative,
    })
}

/// Tensor bump `prod_m (1 - ((x_m - c_m)/r)^2)^3_+`, a C^2 profile supported in the cube of radius `r`.
pub fn tensor_bump(center: &[f64], radius: f64) -> ScalarField {
    let c = center.to_vec();
    ScalarField::new(move |x| {
        let mut v = 1.0;
        for (xi, ci) in x.iter().zip(&c) {
            let t = (xi - ci) / radius;
            let u = 1.0 - t * t;
            if u <= 0.0 {
                return 0.0;
            }
            v *= u * u * u;
        }
        v
    })
    .with_sup_bound(1.0)
}

/// Default witness family: a bump at every node plus 8 bumps at seeded random centres in
/// the bounding box of the nodes (enlarged by `radius`).
pub fn bump_family(nodes: &[Point], radius: f64, seed: u64) -> Vec<ScalarField> {
    let mut out: Vec<ScalarField> = nodes.iter().map(|p| tensor_bump(&p.0, radius)).collect();
    if nodes.is_empty() {
        return out;
    }
    let dim = nodes[0].dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in nodes {
        for d in 0..dim {
            lo[d] = lo[d].min(p.0[d] - radius);
            hi[d] = hi[d].max(p.0[d] + radius);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..8 {
        let c: Vec<f64> = (0..dim).map(|d| rng.gen_range(lo[d]..=hi[d])).collect();
        out.push(tensor_bump(&c, radius));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{BoxDensity, NodeMeasure, ProductPairing};

    #[test]
    fn zero_fields_give_zero_residual() {
        let t = NodeMeasure::uniform(vec![Point::scalar(0.0), Point::scalar(1.0)]).unwrap();
        let s = ProductPairing {
            first: t.clone(),
            second: t.clone(),
        };
        let tests = bump_family(t.nodes(), 0.7, DEFAULT_SEED);
        let r = check_division(&t, &s, &ScalarField::constant(0.0), &TwoPointField::zero(), &tests)
            .unwrap();
        assert_eq!(r.max_residual, 0.0);
        assert_eq!(r.residuals.len(), 2 + 8);
    }

    #[test]
    fn no_solution_counterexample() {
        // T = delta_0, S = dx dy on a box, Phi = 1: a test function vanishing at 0
        // with positive integral leaves residual |int phi| whatever psi is.
        let t = NodeMeasure::uniform(vec![Point::scalar(0.0)]).unwrap();
        let s = ProductPairing {
            first: BoxDensity::lebesgue(vec![-2.0], vec![2.0]).unwrap(),
            second: BoxDensity::lebesgue(vec![-1.0], vec![1.0]).unwrap(),
        };
        let phi_test = tensor_bump(&[1.0], 0.5);
        let int_phi = 0.5 * 32.0 / 35.0;
        for psi in [ScalarField::constant(0.0), ScalarField::constant(7.0), ScalarField::from_1d(|x| x * 100.0)] {
            let r = check_division(&t, &s, &psi, &TwoPointField::from_1d(|_, _| 1.0), &[phi_test.clone()])
                .unwrap();
            // <<S, phi 1>> = int phi(x) dx * |[-1,1]| = 2 int phi.
            assert!((r.max_residual - 2.0 * int_phi).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_pairing_is_reported() {
        let t = NodeMeasure::uniform(vec![Point::scalar(0.0)]).unwrap();
        let s = ProductPairing {
            first: t.clone(),
            second: t.clone(),
        };
        let psi = ScalarField::constant(f64::NAN);
        let err = check_division(&t, &s, &psi, &TwoPointField::zero(), &[tensor_bump(&[0.0], 1.0)])
            .unwrap_err();
        assert!(err.to_string().contains("test function 0"));
    }

    #[test]
    fn bump_family_is_seeded() {
        let nodes = vec![Point::new(vec![0.0, 0.0]), Point::new(vec![1.0, 2.0])];
        let a = bump_family(&nodes, 0.5, 7);
        let b = bump_family(&nodes, 0.5, 7);
        for (f, g) in a.iter().zip(&b) {
            assert_eq!(f.eval(&[0.3, 0.4]), g.eval(&[0.3, 0.4]));
        }
        assert_eq!(a[0].eval(&[0.0, 0.0]), 1.0);
        assert_eq!(a[0].eval(&[0.6, 0.0]), 0.0);
    }
}
