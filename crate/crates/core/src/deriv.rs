//! Central-difference derivatives of `y -> Phi(x, y)` on the diagonal `y = x`.

use crate::error::{KirError, Result};
use crate::field::TwoPointField;

/// Order of derivative requested from [`num_y_derivs`].
#[derive(Debug, Clone, PartialEq)]
pub enum YDerivs {
    /// Gradient `d_y Phi(x, x)`.
    Gradient(Vec<f64>),
    /// Hessian `d^2_y Phi(x, x)`, row-major.
    Hessian(Vec<Vec<f64>>),
}

impl YDerivs {
    pub fn gradient(self) -> Option<Vec<f64>> {
        match self {
            YDerivs::Gradient(g) => Some(g),
            YDerivs::Hessian(_) => None,
        }
    }

    pub fn hessian(self) -> Option<Vec<Vec<f64>>> {
        match self {
            YDerivs::Hessian(h) => Some(h),
            YDerivs::Gradient(_) => None,
        }
    }
}

/// Central-difference y-derivatives of `Phi` at `(x, x)`; error `O(h^2)` for smooth fields.
pub fn num_y_derivs(phi: &TwoPointField, x: &[f64], order: u8, h: f64) -> Result<YDerivs> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(KirError::invalid(format!("step h must be positive, got {h}")));
    }
    match order {
        1 => Ok(YDerivs::Gradient(y_gradient_at(phi, x, x, h))),
        2 => Ok(YDerivs::Hessian(y_hessian_at(phi, x, x, h))),
        _ => Err(KirError::invalid(format!("derivative order must be 1 or 2, got {order}"))),
    }
}

/// Central-difference y-gradient of `Phi(x, .)` at `y`.
pub(crate) fn y_gradient_at(phi: &TwoPointField, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
    let mut yp = y.to_vec();
    (0..y.len())
        .map(|i| {
            yp[i] = y[i] + h;
            let fp = phi.eval(x, &yp);
            yp[i] = y[i] - h;
            let fm = phi.eval(x, &yp);
            yp[i] = y[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference y-Hessian of `Phi(x, .)` at `y`.
pub(crate) fn y_hessian_at(phi: &TwoPointField, x: &[f64], y: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = y.len();
    let f0 = phi.eval(x, y);
    let mut out = vec![vec![0.0; n]; n];
    let mut p = y.to_vec();
    for i in 0..n {
        p[i] = y[i] + h;
        let fp = phi.eval(x, &p);
        p[i] = y[i] - h;
        let fm = phi.eval(x, &p);
        p[i] = y[i];
        out[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                p[i] = y[i] + si * h;
                p[j] = y[j] + sj * h;
                let v = phi.eval(x, &p);
                p[i] = y[i];
                p[j] = y[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Central-difference gradient of a scalar function of `R^n`.
pub(crate) fn gradient_of(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let fp = f(&p);
            p[i] = x[i] - h;
            let fm = f(&p);
            p[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_step() {
        let phi = TwoPointField::from_1d(|_, y| y);
        assert!(num_y_derivs(&phi, &[0.0], 1, 0.0).is_err());
        assert!(num_y_derivs(&phi, &[0.0], 1, -1e-3).is_err());
        assert!(num_y_derivs(&phi, &[0.0], 3, 1e-3).is_err());
    }

    #[test]
    fn spot_values() {
        let sq = TwoPointField::from_1d(|x, y| (y - x) * (y - x));
        let h = num_y_derivs(&sq, &[0.7], 2, 1e-3).unwrap().hessian().unwrap();
        assert!((h[0][0] - 2.0).abs() < 1e-6);

        let sin = TwoPointField::from_1d(|_, y| y.sin());
        let g = num_y_derivs(&sin, &[0.0], 1, 1e-3).unwrap().gradient().unwrap();
        assert!((g[0] - 1.0).abs() < 1e-6);

        let cubic = TwoPointField::from_1d(|x, y| x * y * y * y);
        let h = num_y_derivs(&cubic, &[1.0], 2, 1e-3).unwrap().hessian().unwrap();
        assert!((h[0][0] - 6.0).abs() < 1e-5);
    }

    #[test]
    fn mixed_partials() {
        let phi = TwoPointField::new(|_, y| y[0] * y[0] * y[1] + 3.0 * y[1] * y[1]);
        let h = num_y_derivs(&phi, &[1.0, 2.0], 2, 1e-3).unwrap().hessian().unwrap();
        assert!((h[0][0] - 4.0).abs() < 1e-6);
        assert!((h[0][1] - 2.0).abs() < 1e-6);
        assert!((h[1][1] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn second_order_convergence() {
        // Quartic: the leading error term is h^2 f''''/12.
        let phi = TwoPointField::from_1d(|_, y| y.powi(4) + y.powi(3));
        let exact = 12.0 * 0.5f64.powi(2) + 6.0 * 0.5;
        let err = |h: f64| {
            let v = num_y_derivs(&phi, &[0.5], 2, h).unwrap().hessian().unwrap()[0][0];
            (v - exact).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!(order >= 1.9, "order {order}");

        let phi1 = TwoPointField::from_1d(|_, y| y.powi(4));
        let exact1 = 4.0 * 0.5f64.powi(3);
        let err1 = |h: f64| {
            let v = num_y_derivs(&phi1, &[0.5], 1, h).unwrap().gradient().unwrap()[0];
            (v - exact1).abs()
        };
        let order1 = (err1(0.1) / err1(0.05)).log2();
        assert!(order1 >= 1.9, "order {order1}");
    }
}
