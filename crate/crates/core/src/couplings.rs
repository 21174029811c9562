//! Operators built from coupling measures `pi` on `X x X` with `T = mu`: the independent
//! (product) coupling, the deterministic coupling `pi = mu o G^{-1}` with `G(x) = (x, F(x))`,
//! and the first-order derivatives of the deterministic coupling.

use std::sync::Arc;

use crate::deriv::gradient_of;
use crate::error::{finite, KirError, Result};
use crate::field::{ScalarField, TwoPointField};
use crate::measure::{Marginal, Pairing1, PushforwardPairing};

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// Step used for numerical derivatives in the positive-order operators.
pub const DERIV_STEP: f64 = 1e-4;

/// `pi = pi_1 x pi_2` with `pi_1 << mu`.
#[derive(Debug, Clone)]
pub struct IndependentCoupling {
    density: ScalarField,
    second: Marginal,
    mass: f64,
}

impl IndependentCoupling {
    /// `density` is `d pi_1 / d mu`; `second` is `pi_2`.
    pub fn new(density: ScalarField, second: Marginal) -> Self {
        let mass = second.total_mass();
        IndependentCoupling {
            density,
            second,
            mass,
        }
    }

    pub fn density(&self) -> &ScalarField {
        &self.density
    }

    pub fn second(&self) -> &Marginal {
        &self.second
    }

    /// `pi_2(X)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// `Kir Phi(x) = (d pi_1/d mu)(x) int Phi(x, y) d pi_2(y)`.
pub fn independent_kir(c: &IndependentCoupling, phi: &TwoPointField, x: &[f64]) -> Result<f64> {
    let d = c.density.eval(x);
    if d < 0.0 {
        return Err(KirError::invalid(format!("negative density {d} at {x:?}")));
    }
    if d == 0.0 {
        return Ok(0.0);
    }
    let integral = c.second.pair(&|y| phi.eval(x, y));
    finite(d * integral, || format!("independent Kirchhoff divergence at {x:?}"))
}

/// `Delta f(x) = (d pi_1/d mu)(x) (int f d pi_2 - f(x) pi_2(X))`.
pub fn independent_laplacian(c: &IndependentCoupling, f: &ScalarField, x: &[f64]) -> Result<f64> {
    if !c.mass.is_finite() {
        return Err(KirError::invalid(
            "second marginal has infinite mass; the Laplacian is undefined",
        ));
    }
    let d = c.density.eval(x);
    if d < 0.0 {
        return Err(KirError::invalid(format!("negative density {d} at {x:?}")));
    }
    if d == 0.0 {
        return Ok(0.0);
    }
    // Integrate the difference so that constants cancel term by term.
    let fx = f.eval(x);
    let integral = c.second.pair(&|y| f.eval(y) - fx);
    finite(d * integral, || format!("independent Laplacian at {x:?}"))
}

/// `pi_h = (1/h) mu o G^{-1}` with `G(x) = (x, F(x))`.
///
/// `g` is the density of `mu` against Lebesgue measure; it only matters for the
/// positive-order operators.
#[derive(Clone)]
pub struct DeterministicCoupling {
    map: MapFn,
    jacobian: Option<JacobianFn>,
    g: ScalarField,
    h: f64,
}

impl std::fmt::Debug for DeterministicCoupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeterministicCoupling")
            .field("jacobian", &self.jacobian.is_some())
            .field("g", &self.g)
            .field("h", &self.h)
            .finish()
    }
}

impl DeterministicCoupling {
    pub fn new(map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        DeterministicCoupling {
            map: Arc::new(map),
            jacobian: None,
            g: ScalarField::constant(1.0),
            h: 1.0,
        }
    }

    pub fn from_1d(map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        DeterministicCoupling::new(move |x| vec![map(x[0])])
    }

    /// `J[m][i] = dF_m / dx_i`.
    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_density(mut self, g: ScalarField) -> Self {
        self.g = g;
        self
    }

    pub fn with_scale(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(KirError::invalid(format!("scale h must be positive, got {h}")));
        }
        self.h = h;
        Ok(self)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn density(&self) -> &ScalarField {
        &self.g
    }

    /// `J[m][i] = dF_m / dx_i`, analytic when declared.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let m = self.apply(x).len();
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|c| gradient_of(&|p| (self.map)(p)[c], x, DERIV_STEP))
            .collect();
        cols
    }

    /// `<<pi_h, Theta>> = (1/h) int Theta(x, F(x)) d mu(x)` against a base measure.
    pub fn pairing<A: Pairing1>(&self, base: A) -> PushforwardPairing<A> {
        PushforwardPairing {
            base,
            map: self.map.clone(),
            scale: self.h,
        }
    }

    fn positive_density(&self, x: &[f64]) -> Result<f64> {
        let g = self.g.eval(x);
        if !(g > 0.0) {
            return Err(KirError::invalid(format!("density g must be positive, got {g} at {x:?}")));
        }
        Ok(g)
    }

    fn dlog_g(&self, i: usize, x: &[f64]) -> Result<f64> {
        let g = self.positive_density(x)?;
        let dg = match self.g.gradient(x) {
            Some(v) => v[i],
            None => gradient_of(&|p| self.g.eval(p), x, DERIV_STEP)[i],
        };
        Ok(dg / g)
    }
}

/// `Kir Phi(x) = (1/h) Phi(x, F(x))`.
pub fn deterministic_kir(c: &DeterministicCoupling, phi: &TwoPointField, x: &[f64]) -> Result<f64> {
    let v = phi.eval(x, &c.apply(x)) / c.h;
    finite(v, || format!("deterministic Kirchhoff divergence at {x:?}"))
}

/// `Delta f(x) = (1/h) (f(F(x)) - f(x))`.
pub fn deterministic_laplacian(c: &DeterministicCoupling, f: &ScalarField, x: &[f64]) -> Result<f64> {
    let v = (f.eval(&c.apply(x)) - f.eval(x)) / c.h;
    finite(v, || format!("deterministic Laplacian at {x:?}"))
}

fn check_axis(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(KirError::invalid(format!("axis {i} out of range for dimension {n}")));
    }
    Ok(())
}

/// `Kir_{i,1} Phi = (1/g) d/dx_i [g (Phi o G)] - (dPhi/dx_i) o G`.
///
/// Expanded as `d_i log g (Phi o G) + sum_m (dPhi/dy_m o G) dF_m/dx_i`; the y-gradient is
/// analytic when `Phi` declares one.
pub fn positive_order_kir_x(
    c: &DeterministicCoupling,
    i: usize,
    phi: &TwoPointField,
    x: &[f64],
) -> Result<f64> {
    check_axis(i, x.len())?;
    let y = c.apply(x);
    let dlog = c.dlog_g(i, x)?;
    let grad_y = match phi.y_gradient(x, &y) {
        Some(g) => g,
        None => gradient_of(&|p| phi.eval(x, p), &y, DERIV_STEP),
    };
    let jac = c.jacobian(x);
    let chain: f64 = grad_y.iter().zip(&jac).map(|(d, row)| d * row[i]).sum();
    finite(dlog * phi.eval(x, &y) + chain, || {
        format!("positive-order Kirchhoff divergence (x, axis {i}) at {x:?}")
    })
}

/// `Delta_{i,1} f = dF/dx_i . (grad f o F) + (f o F - f) d_i log g`.
pub fn positive_order_laplacian_x(
    c: &DeterministicCoupling,
    i: usize,
    f: &ScalarField,
    x: &[f64],
) -> Result<f64> {
    check_axis(i, x.len())?;
    let y = c.apply(x);
    let dlog = c.dlog_g(i, x)?;
    let grad = f
        .gradient(&y)
        .unwrap_or_else(|| gradient_of(&|p| f.eval(p), &y, DERIV_STEP));
    let jac = c.jacobian(x);
    let chain: f64 = grad.iter().zip(&jac).map(|(d, row)| d * row[i]).sum();
    finite(chain + (f.eval(&y) - f.eval(x)) * dlog, || {
        format!("positive-order Laplacian (x, axis {i}) at {x:?}")
    })
}

/// `Kir_{j,2} Phi = (dPhi/dy_j) o G`.
pub fn positive_order_kir_y(
    c: &DeterministicCoupling,
    j: usize,
    phi: &TwoPointField,
    x: &[f64],
) -> Result<f64> {
    c.positive_density(x)?;
    let y = c.apply(x);
    check_axis(j, y.len())?;
    let v = match phi.y_gradient(x, &y) {
        Some(g) => g[j],
        None => gradient_of(&|p| phi.eval(x, p), &y, DERIV_STEP)[j],
    };
    finite(v, || format!("positive-order Kirchhoff divergence (y, axis {j}) at {x:?}"))
}

/// `Delta_{j,2} f = (df/dx_j) o F`.
pub fn positive_order_laplacian_y(
    c: &DeterministicCoupling,
    j: usize,
    f: &ScalarField,
    x: &[f64],
) -> Result<f64> {
    c.positive_density(x)?;
    let y = c.apply(x);
    check_axis(j, y.len())?;
    let v = match f.gradient(&y) {
        Some(g) => g[j],
        None => gradient_of(&|p| f.eval(p), &y, DERIV_STEP)[j],
    };
    finite(v, || format!("positive-order Laplacian (y, axis {j}) at {x:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{grad0, Point};
    use crate::measure::{BoxDensity, NodeMeasure, Pairing2};
    use crate::quad::adaptive_simpson;
    use proptest::prelude::*;

    fn atom(y: f64) -> Marginal {
        Marginal::Atoms(NodeMeasure::uniform(vec![Point::scalar(y)]).unwrap())
    }

    #[test]
    fn independent_single_atom() {
        let c = IndependentCoupling::new(ScalarField::constant(1.0), atom(0.7));
        let phi = TwoPointField::from_1d(|x, y| x * y + y * y);
        let v = independent_kir(&c, &phi, &[2.0]).unwrap();
        assert_eq!(v, phi.eval1(2.0, 0.7));
        let f = ScalarField::from_1d(|t| t.sin());
        let d = independent_laplacian(&c, &f, &[2.0]).unwrap();
        assert_eq!(d, 0.7f64.sin() - 2.0f64.sin());
    }

    #[test]
    fn independent_zero_density_and_constants() {
        let dens = ScalarField::from_1d(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let c = IndependentCoupling::new(dens, atom(0.3));
        assert_eq!(independent_kir(&c, &TwoPointField::from_1d(|_, _| 5.0), &[-1.0]).unwrap(), 0.0);
        let box_ = BoxDensity::lebesgue(vec![0.0], vec![2.0]).unwrap();
        let c = IndependentCoupling::new(ScalarField::constant(0.5), Marginal::Density(box_));
        assert!((c.mass() - 2.0).abs() < 1e-14);
        assert_eq!(independent_laplacian(&c, &ScalarField::constant(3.0), &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn independent_laplacian_is_kir_of_grad0() {
        let box_ = BoxDensity::new(vec![-1.0], vec![1.0], ScalarField::from_1d(|y| 1.0 + y * y)).unwrap();
        let c = IndependentCoupling::new(ScalarField::from_1d(|x| x.exp()), Marginal::Density(box_));
        let f = ScalarField::from_1d(|t| t.powi(3) - t);
        for x in [-0.5, 0.2, 1.3] {
            let a = independent_laplacian(&c, &f, &[x]).unwrap();
            let b = independent_kir(&c, &grad0(&f), &[x]).unwrap();
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn infinite_mass_rejected() {
        let m = NodeMeasure::new(vec![Point::scalar(0.0)], vec![f64::INFINITY]);
        // Infinite weights are refused at construction; model infinite mass with a pairing.
        assert!(m.is_err());
        let inf = IndependentCoupling {
            density: ScalarField::constant(1.0),
            second: atom(0.0),
            mass: f64::INFINITY,
        };
        assert!(independent_laplacian(&inf, &ScalarField::constant(1.0), &[0.0]).is_err());
    }

    #[test]
    fn deterministic_examples() {
        let id = DeterministicCoupling::new(|x| x.to_vec());
        let phi = TwoPointField::from_1d(|x, y| x * x + 3.0 * y);
        assert_eq!(deterministic_kir(&id, &phi, &[1.5]).unwrap(), phi.eval1(1.5, 1.5));
        let f = ScalarField::from_1d(|t| t.cos());
        assert_eq!(deterministic_laplacian(&id, &f, &[0.3]).unwrap(), 0.0);

        let sq = DeterministicCoupling::from_1d(|x| x * x);
        let lin = ScalarField::from_1d(|t| t);
        assert_eq!(deterministic_laplacian(&sq, &lin, &[2.0]).unwrap(), 2.0);
        let half = sq.with_scale(0.5).unwrap();
        assert_eq!(deterministic_laplacian(&half, &lin, &[2.0]).unwrap(), 4.0);
        assert!(DeterministicCoupling::from_1d(|x| x).with_scale(0.0).is_err());
    }

    #[test]
    fn positive_order_examples() {
        let c = DeterministicCoupling::from_1d(|x| 2.0 * x);
        let phi = TwoPointField::from_1d(|_, y| y * y);
        let v = positive_order_kir_x(&c, 0, &phi, &[1.0]).unwrap();
        assert!((v - 8.0).abs() < 1e-7);

        let ce = DeterministicCoupling::from_1d(|x| 2.0 * x)
            .with_density(ScalarField::from_1d(f64::exp).with_gradient_fn(|x| vec![x[0].exp()]));
        let v = positive_order_kir_x(&ce, 0, &phi, &[1.0]).unwrap();
        assert!((v - 12.0).abs() < 1e-7);

        let f2 = ScalarField::from_1d(|y| y * y);
        let d = positive_order_laplacian_x(&c, 0, &f2, &[1.0]).unwrap();
        assert!((d - 8.0).abs() < 1e-7);

        let f3 = ScalarField::from_1d(|y| y * y * y);
        let d = positive_order_laplacian_y(&c, 0, &f3, &[1.0]).unwrap();
        assert!((d - 12.0).abs() < 1e-6);

        let id = DeterministicCoupling::new(|x| x.to_vec());
        let f = ScalarField::new(|p| p[0] * p[0] * p[1]);
        let d = positive_order_laplacian_x(&id, 1, &f, &[2.0, 3.0]).unwrap();
        assert!((d - 4.0).abs() < 1e-7);

        let cy = DeterministicCoupling::from_1d(|x| x + 1.0);
        let v = positive_order_kir_y(&cy, 0, &TwoPointField::from_1d(|x, y| x * y * y), &[2.0]).unwrap();
        assert!((v - 12.0).abs() < 1e-7);
    }

    #[test]
    fn positive_order_constant_along_graph_vanishes() {
        let c = DeterministicCoupling::from_1d(|x| x + 2.0);
        let phi = TwoPointField::from_1d(|x, y| y - x);
        let v = positive_order_kir_x(&c, 0, &phi, &[0.4]).unwrap();
        // g = 1: only the chain term remains, dPhi/dy = 1 times dF/dx = 1.
        assert!((v - 1.0).abs() < 1e-8);
        let flat = TwoPointField::from_1d(|_, _| 3.0);
        assert!(positive_order_kir_x(&c, 0, &flat, &[0.4]).unwrap().abs() < 1e-9);
    }

    #[test]
    fn nonpositive_density_rejected() {
        let c = DeterministicCoupling::from_1d(|x| x).with_density(ScalarField::constant(0.0));
        let phi = TwoPointField::from_1d(|_, y| y);
        assert!(positive_order_kir_x(&c, 0, &phi, &[1.0]).is_err());
        assert!(positive_order_kir_y(&c, 0, &phi, &[1.0]).is_err());
        assert!(positive_order_laplacian_y(&c, 0, &ScalarField::constant(1.0), &[1.0]).is_err());
        let ok = DeterministicCoupling::from_1d(|x| x);
        assert!(positive_order_kir_x(&ok, 1, &phi, &[1.0]).is_err());
    }

    #[test]
    fn pushforward_identity_by_substitution() {
        // mu = Lebesgue on [0, 1], F(x) = x^2. For Theta = a(x) b(y), substituting u = x^2
        // gives int_0^1 a(sqrt u) b(u) / (2 sqrt u) du; a(x) = x keeps it regular.
        let c = DeterministicCoupling::from_1d(|x| x * x);
        let base = BoxDensity::lebesgue(vec![0.0], vec![1.0]).unwrap();
        let pf = c.pairing(base);
        for (p, q) in [(1.0, 2.0), (0.5, -1.0), (3.0, 0.25)] {
            let lhs = pf.pair2(&|x, y| x[0] * (p * y[0]).sin() + q * x[0] * y[0]);
            let rhs = adaptive_simpson(
                &|u: f64| 0.5 * ((p * u).sin() + q * u),
                0.0,
                1.0,
                1e-13,
                40,
            );
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        }
    }

    proptest! {
        #[test]
        fn deterministic_laplacian_kills_constants(c0 in -50.0f64..50.0, h in 0.01f64..4.0, x in -3.0f64..3.0) {
            let c = DeterministicCoupling::from_1d(|t| t.sin() * 3.0 + t * t).with_scale(h).unwrap();
            prop_assert_eq!(deterministic_laplacian(&c, &ScalarField::constant(c0), &[x]).unwrap(), 0.0);
        }

        #[test]
        fn independent_laplacian_shift_invariant(shift in -10.0f64..10.0, x in -2.0f64..2.0) {
            let atoms = NodeMeasure::new(
                vec![Point::scalar(-1.0), Point::scalar(0.5), Point::scalar(2.0)],
                vec![0.5, 1.0, 2.0],
            ).unwrap();
            let c = IndependentCoupling::new(ScalarField::from_1d(|t| 1.0 + t * t), Marginal::Atoms(atoms));
            let f = ScalarField::from_1d(|t| t * t * t);
            let a = independent_laplacian(&c, &f, &[x]).unwrap();
            let b = independent_laplacian(&c, &f.add_constant(shift), &[x]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs() + shift.abs() * 10.0));
        }

        #[test]
        fn positive_order_x_consistent_with_grad0(x in 0.2f64..2.0, a in 0.5f64..2.0) {
            let c = DeterministicCoupling::from_1d(move |t| a * t + t * t)
                .with_density(ScalarField::from_1d(|t| 1.0 + t * t));
            let f = ScalarField::from_1d(|t| t.sin() + t * t);
            let l = positive_order_laplacian_x(&c, 0, &f, &[x]).unwrap();
            let k = positive_order_kir_x(&c, 0, &grad0(&f), &[x]).unwrap();
            prop_assert!((l - k).abs() < 1e-5);
        }
    }
}
