//! Pointwise derivative data of scalar fields up to third order.
//!
//! Everything downstream (Laplacians, second fundamental forms, gradients of
//! derived quantities) consumes a `Jet3`: value, gradient, Hessian and the
//! symmetric third-derivative tensor at one point. Built-in fields supply
//! closed forms; anything else falls back to 4th-order central differences.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::tensor::Tensor3;

#[derive(Debug, Clone)]
pub struct Jet3 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub third: Tensor3,
}

impl Jet3 {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Jet3 {
            value,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
            third: Tensor3::zeros(n),
        }
    }

    /// Euclidean norm of the coordinate gradient.
    pub fn grad_norm(&self) -> f64 {
        self.grad.norm()
    }

    /// Composition with a 1-d function: jet of tau(f) from the jet of f.
    /// Third-order chain rule:
    ///   (tau.f)_a   = t1 f_a
    ///   (tau.f)_ab  = t2 f_a f_b + t1 f_ab
    ///   (tau.f)_abc = t3 f_a f_b f_c
    ///               + t2 (f_ab f_c + f_ac f_b + f_bc f_a) + t1 f_abc
    pub fn compose(&self, outer: &Profile1d) -> Jet3 {
        let n = self.dim();
        let [v, t1, t2, t3] = outer.jet(self.value);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut third = Tensor3::zeros(n);
        for a in 0..n {
            grad[a] = t1 * self.grad[a];
        }
        for a in 0..n {
            for b in 0..n {
                hess[(a, b)] = t2 * self.grad[a] * self.grad[b] + t1 * self.hess[(a, b)];
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let v3 = t3 * self.grad[a] * self.grad[b] * self.grad[c]
                        + t2 * (self.hess[(a, b)] * self.grad[c]
                            + self.hess[(a, c)] * self.grad[b]
                            + self.hess[(b, c)] * self.grad[a])
                        + t1 * self.third.get(a, b, c);
                    third.set(a, b, c, v3);
                }
            }
        }
        Jet3 { value: v, grad, hess, third }
    }
}

/// A scalar function of one variable carrying derivatives up to order 3,
/// used both as profile tau in tau(f) compositions and as the 1-d pieces of
/// radial constructions.
#[derive(Clone)]
pub struct Profile1d {
    pub label: String,
    jet: Arc<dyn Fn(f64) -> [f64; 4] + Send + Sync>,
}

impl std::fmt::Debug for Profile1d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Profile1d({})", self.label)
    }
}

impl Profile1d {
    pub fn new(label: &str, jet: impl Fn(f64) -> [f64; 4] + Send + Sync + 'static) -> Self {
        Profile1d { label: label.to_string(), jet: Arc::new(jet) }
    }

    /// [tau, tau', tau'', tau'''] at t.
    pub fn jet(&self, t: f64) -> [f64; 4] {
        (self.jet)(t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.jet)(t)[0]
    }

    pub fn identity() -> Self {
        Profile1d::new("t", |t| [t, 1.0, 0.0, 0.0])
    }

    pub fn scale(a: f64) -> Self {
        Profile1d::new(&format!("{a}*t"), move |t| [a * t, a, 0.0, 0.0])
    }

    pub fn cubic_plus_t() -> Self {
        Profile1d::new("t^3+t", |t| [t * t * t + t, 3.0 * t * t + 1.0, 6.0 * t, 6.0])
    }

    pub fn cube() -> Self {
        Profile1d::new("t^3", |t| [t * t * t, 3.0 * t * t, 6.0 * t, 6.0])
    }

    pub fn exp() -> Self {
        Profile1d::new("e^t", |t| {
            let e = t.exp();
            [e, e, e, e]
        })
    }

    /// ln(t + 2); only safe for t > -2 which callers must ensure.
    pub fn log_shift2() -> Self {
        Profile1d::new("log(t+2)", |t| {
            let u = t + 2.0;
            [u.ln(), 1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u)]
        })
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "t" => Some(Self::identity()),
            "t^3+t" => Some(Self::cubic_plus_t()),
            "t^3" => Some(Self::cube()),
            "e^t" => Some(Self::exp()),
            "log(t+2)" => Some(Self::log_shift2()),
            _ => None,
        }
    }
}

/// 4th-order central-difference jet of a black-box evaluator.
///
/// Stencils: first derivative (-f2 + 8f1 - 8f-1 + f-2)/(12h); second
/// derivative (-f2 + 16f1 - 30f0 + 16f-1 - f-2)/(12h^2); third derivative
/// (f3 - 8f2 + 13f1 - 13f-1 + 8f-2 - f-3)/(8h^3). Mixed partials are tensor
/// products of the 1-d stencils, so every term stays O(h^4).
pub fn fd_jet3(eval: &dyn Fn(&[f64]) -> f64, point: &[f64], h: f64) -> Jet3 {
    let n = point.len();
    let value = eval(point);

    let at = |offsets: &[(usize, f64)]| -> f64 {
        let mut x = point.to_vec();
        for &(axis, k) in offsets {
            x[axis] += k * h;
        }
        eval(&x)
    };

    // (offset multiple, weight) pairs for d/dx, d2/dx2, d3/dx3.
    const D1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    const D2: [(f64, f64); 5] = [
        (-2.0, -1.0 / 12.0),
        (-1.0, 16.0 / 12.0),
        (0.0, -30.0 / 12.0),
        (1.0, 16.0 / 12.0),
        (2.0, -1.0 / 12.0),
    ];
    const D3: [(f64, f64); 6] = [
        (-3.0, 1.0 / 8.0),
        (-2.0, -8.0 / 8.0),
        (-1.0, 13.0 / 8.0),
        (1.0, -13.0 / 8.0),
        (2.0, 8.0 / 8.0),
        (3.0, -1.0 / 8.0),
    ];

    let mut grad = DVector::zeros(n);
    for a in 0..n {
        let mut s = 0.0;
        for &(k, w) in &D1 {
            s += w * at(&[(a, k)]);
        }
        grad[a] = s / h;
    }

    let mut hess = DMatrix::zeros(n, n);
    for a in 0..n {
        let mut s = 0.0;
        for &(k, w) in &D2 {
            s += if k == 0.0 { w * value } else { w * at(&[(a, k)]) };
        }
        hess[(a, a)] = s / (h * h);
        for b in (a + 1)..n {
            let mut s = 0.0;
            for &(ka, wa) in &D1 {
                for &(kb, wb) in &D1 {
                    s += wa * wb * at(&[(a, ka), (b, kb)]);
                }
            }
            let v = s / (h * h);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }

    let mut third = Tensor3::zeros(n);
    for a in 0..n {
        // f_aaa
        let mut s = 0.0;
        for &(k, w) in &D3 {
            s += w * at(&[(a, k)]);
        }
        third.set(a, a, a, s / (h * h * h));
        // f_aab for b != a
        for b in 0..n {
            if b == a {
                continue;
            }
            let mut s = 0.0;
            for &(ka, wa) in &D2 {
                for &(kb, wb) in &D1 {
                    s += if ka == 0.0 {
                        wa * wb * at(&[(b, kb)])
                    } else {
                        wa * wb * at(&[(a, ka), (b, kb)])
                    };
                }
            }
            let v = s / (h * h * h);
            third.set(a, a, b, v);
            third.set(a, b, a, v);
            third.set(b, a, a, v);
        }
    }
    // f_abc with a < b < c: product of three first-derivative stencils.
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                let mut s = 0.0;
                for &(ka, wa) in &D1 {
                    for &(kb, wb) in &D1 {
                        for &(kc, wc) in &D1 {
                            s += wa * wb * wc * at(&[(a, ka), (b, kb), (c, kc)]);
                        }
                    }
                }
                let v = s / (h * h * h);
                third.set(a, b, c, v);
                third.set(a, c, b, v);
                third.set(b, a, c, v);
                third.set(b, c, a, v);
                third.set(c, a, b, v);
                third.set(c, b, a, v);
            }
        }
    }

    Jet3 { value, grad, hess, third }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly(x: &[f64]) -> f64 {
        // x^3 y + 2 x y z + y^2 z + 5x - 7
        let (x0, x1, x2) = (x[0], x[1], x[2]);
        x0.powi(3) * x1 + 2.0 * x0 * x1 * x2 + x1 * x1 * x2 + 5.0 * x0 - 7.0
    }

    #[test]
    fn fd_jet_matches_polynomial_derivatives() {
        let p = [0.7, -0.4, 1.3];
        let jet = fd_jet3(&poly, &p, 1e-2);
        let (x, y, z) = (p[0], p[1], p[2]);
        assert_relative_eq!(jet.value, poly(&p));
        assert_relative_eq!(jet.grad[0], 3.0 * x * x * y + 2.0 * y * z + 5.0, epsilon = 1e-8);
        assert_relative_eq!(jet.grad[1], x.powi(3) + 2.0 * x * z + 2.0 * y * z, epsilon = 1e-8);
        assert_relative_eq!(jet.grad[2], 2.0 * x * y + y * y, epsilon = 1e-8);
        assert_relative_eq!(jet.hess[(0, 0)], 6.0 * x * y, epsilon = 1e-7);
        assert_relative_eq!(jet.hess[(0, 1)], 3.0 * x * x + 2.0 * z, epsilon = 1e-7);
        assert_relative_eq!(jet.hess[(1, 2)], 2.0 * x + 2.0 * y, epsilon = 1e-7);
        assert_relative_eq!(jet.third.get(0, 0, 0), 6.0 * y, epsilon = 1e-6);
        assert_relative_eq!(jet.third.get(0, 0, 1), 6.0 * x, epsilon = 1e-6);
        assert_relative_eq!(jet.third.get(0, 1, 2), 2.0, epsilon = 1e-6);
        assert_relative_eq!(jet.third.get(1, 1, 2), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_first_derivative_of_sin_is_fourth_order() {
        let f = |x: &[f64]| x[0].sin();
        let jet = fd_jet3(&f, &[0.6, 0.0, 0.0], 1e-2);
        assert!((jet.grad[0] - 0.6_f64.cos()).abs() < 1e-8);
        assert!((jet.hess[(0, 0)] + 0.6_f64.sin()).abs() < 1e-7);
        assert!((jet.third.get(0, 0, 0) + 0.6_f64.cos()).abs() < 1e-5);
    }

    #[test]
    fn composition_chain_rule_against_fd() {
        // tau(f) with f = |x|^2 and tau = e^t: compare closed-form composition
        // against a finite-difference jet of the composite evaluator.
        let f_jet = |p: &[f64]| {
            let n = p.len();
            let mut grad = DVector::zeros(n);
            let mut hess = DMatrix::zeros(n, n);
            let mut value = 0.0;
            for a in 0..n {
                value += p[a] * p[a];
                grad[a] = 2.0 * p[a];
                hess[(a, a)] = 2.0;
            }
            Jet3 { value, grad, hess, third: Tensor3::zeros(n) }
        };
        let p = [0.3, -0.2, 0.5];
        let composed = f_jet(&p).compose(&Profile1d::exp());
        let direct = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>()).exp();
        let fd = fd_jet3(&direct, &p, 1e-2);
        assert_relative_eq!(composed.value, fd.value, epsilon = 1e-10);
        for a in 0..3 {
            assert_relative_eq!(composed.grad[a], fd.grad[a], epsilon = 1e-7);
            for b in 0..3 {
                assert_relative_eq!(composed.hess[(a, b)], fd.hess[(a, b)], epsilon = 1e-6);
                for c in 0..3 {
                    assert_relative_eq!(
                        composed.third.get(a, b, c),
                        fd.third.get(a, b, c),
                        epsilon = 1e-4
                    );
                }
            }
        }
    }
}
