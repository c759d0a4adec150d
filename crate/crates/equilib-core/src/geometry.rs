//! Metric charts and first-principles curvature.
//!
//! All tensors are stored fully covariant; indices are raised explicitly at
//! use sites. Built-in charts carry closed-form metric jets (g, dg, d2g);
//! custom metrics fall back to 4th-order central differences.
//!
//! Curvature conventions: R^a_bcd = dΓ^a_db/dx^c - dΓ^a_cb/dx^d + ΓΓ - ΓΓ,
//! Ricci R_bd = R^a_bad. With these signs the round sphere has positive
//! scalar curvature (n = 3, radius 1: R = 6).

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::jet::Jet3;
use crate::tensor::{Tensor3, Tensor4};

type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum ChartKind {
    Euclidean,
    /// g = e^{2 phi} delta with a user-supplied conformal exponent.
    ConformallyFlat { phi: ScalarField },
    /// Constant sectional curvature k in the conformal model
    /// g = 4 (1 + k |x|^2)^{-2} delta. k > 0: stereographic sphere chart of
    /// radius 1/sqrt(k); k < 0: Poincare ball of curvature k.
    ConstantCurvature { k: f64 },
    /// Block metric: constant-curvature 2-factor in (x1, x2), flat line x3.
    ProductLine { k2: f64 },
    /// Black-box metric with finite-difference jets.
    Custom { metric: MetricFn, step: f64 },
}

#[derive(Clone)]
pub struct MetricChart {
    dimension: usize,
    domain: Vec<[f64; 2]>,
    kind: ChartKind,
    label: String,
}

impl std::fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MetricChart({}, n={})", self.label, self.dimension)
    }
}

/// Metric with coordinate derivatives at a point: dg[a,b,c] = d g_ab / dx^c,
/// d2g[a,b,c,d] = d^2 g_ab / dx^c dx^d.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub dg: Tensor3,
    pub d2g: Tensor4,
}

#[derive(Debug, Clone)]
pub struct CurvatureAt {
    /// Fully covariant Riemann tensor R_abcd.
    pub riemann: Tensor4,
    /// Ricci tensor R_bd = R^a_bad.
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

impl MetricChart {
    pub fn euclidean(n: usize, domain: Vec<[f64; 2]>) -> Self {
        assert_eq!(domain.len(), n);
        MetricChart { dimension: n, domain, kind: ChartKind::Euclidean, label: "euclidean".into() }
    }

    pub fn conformally_flat(phi: ScalarField, domain: Vec<[f64; 2]>) -> Self {
        let n = phi.dimension();
        assert_eq!(domain.len(), n);
        MetricChart {
            dimension: n,
            domain,
            kind: ChartKind::ConformallyFlat { phi },
            label: "conformally_flat".into(),
        }
    }

    /// Stereographic chart of the round n-sphere of the given radius.
    /// Default box half-width: 4 * radius.
    pub fn stereographic_sphere(radius: f64, n: usize) -> Self {
        assert!(radius > 0.0);
        let h = 4.0 * radius;
        MetricChart {
            dimension: n,
            domain: vec![[-h, h]; n],
            kind: ChartKind::ConstantCurvature { k: 1.0 / (radius * radius) },
            label: format!("stereographic_sphere({radius})"),
        }
    }

    /// Poincare ball model of constant negative curvature. The box half-width
    /// keeps the whole box strictly inside the ball of radius 1/sqrt(-k).
    pub fn poincare_ball(curvature: f64, n: usize) -> Self {
        assert!(curvature < 0.0);
        let ball = 1.0 / (-curvature).sqrt();
        let h = 0.5 * ball;
        MetricChart {
            dimension: n,
            domain: vec![[-h, h]; n],
            kind: ChartKind::ConstantCurvature { k: curvature },
            label: format!("poincare_ball({curvature})"),
        }
    }

    /// S^2(radius) x R for k2 > 0 (k2 = 1/radius^2), H^2 x R for k2 < 0.
    pub fn product_line(k2: f64) -> Self {
        assert!(k2 != 0.0);
        let h = if k2 > 0.0 { 4.0 / k2.sqrt() } else { 0.5 / (-k2).sqrt() };
        MetricChart {
            dimension: 3,
            domain: vec![[-h, h], [-h, h], [-2.0, 2.0]],
            kind: ChartKind::ProductLine { k2 },
            label: format!("product_line({k2})"),
        }
    }

    pub fn custom(
        n: usize,
        domain: Vec<[f64; 2]>,
        metric: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        assert_eq!(domain.len(), n);
        let extent = domain.iter().map(|r| r[1] - r[0]).fold(f64::INFINITY, f64::min);
        MetricChart {
            dimension: n,
            domain,
            kind: ChartKind::Custom { metric: Arc::new(metric), step: extent * 1e-3 },
            label: "custom".into(),
        }
    }

    pub fn with_domain(mut self, domain: Vec<[f64; 2]>) -> Self {
        assert_eq!(domain.len(), self.dimension);
        self.domain = domain;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// True only for the flat chart: gates Segre-style fiber labels and the
    /// straight-line normal matching.
    pub fn is_flat(&self) -> bool {
        matches!(self.kind, ChartKind::Euclidean)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dimension
            && point
                .iter()
                .zip(&self.domain)
                .all(|(x, r)| *x >= r[0] && *x <= r[1])
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, got: point.len() });
        }
        if !self.contains(point) {
            return Err(Error::OutsideDomain { point: point.to_vec() });
        }
        Ok(())
    }

    /// Metric tensor alone (no derivatives); cheaper than metric_jet.
    pub fn metric(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(point)?;
        let n = self.dimension;
        Ok(match &self.kind {
            ChartKind::Euclidean => DMatrix::identity(n, n),
            ChartKind::ConformallyFlat { phi } => {
                let e2 = (2.0 * phi.jet_at(point)?.value).exp();
                DMatrix::identity(n, n) * e2
            }
            ChartKind::ConstantCurvature { k } => {
                let e2 = conformal_factor_const_curv(*k, point, n)?;
                DMatrix::identity(n, n) * e2
            }
            ChartKind::ProductLine { k2 } => {
                let e2 = conformal_factor_const_curv(*k2, &point[..2], 2)?;
                let mut g = DMatrix::identity(n, n);
                g[(0, 0)] = e2;
                g[(1, 1)] = e2;
                g
            }
            ChartKind::Custom { metric, .. } => metric(point),
        })
    }

    /// Metric with first and second coordinate derivatives.
    pub fn metric_jet(&self, point: &[f64]) -> Result<MetricJet> {
        self.check_point(point)?;
        let n = self.dimension;
        let (g, dg, d2g) = match &self.kind {
            ChartKind::Euclidean => {
                (DMatrix::identity(n, n), Tensor3::zeros(n), Tensor4::zeros(n))
            }
            ChartKind::ConformallyFlat { phi } => {
                let jet = phi.jet_at(point)?;
                conformal_metric_jet(&jet, n)
            }
            ChartKind::ConstantCurvature { k } => {
                let jet = const_curv_phi_jet(*k, point, n)?;
                conformal_metric_jet(&jet, n)
            }
            ChartKind::ProductLine { k2 } => {
                let jet2 = const_curv_phi_jet(*k2, &point[..2], 2)?;
                let (g2, dg2, d2g2) = conformal_metric_jet(&jet2, 2);
                let mut g = DMatrix::identity(n, n);
                let mut dg = Tensor3::zeros(n);
                let mut d2g = Tensor4::zeros(n);
                for a in 0..2 {
                    for b in 0..2 {
                        g[(a, b)] = g2[(a, b)];
                        for c in 0..2 {
                            dg.set(a, b, c, dg2.get(a, b, c));
                            for d in 0..2 {
                                d2g.set(a, b, c, d, d2g2.get(a, b, c, d));
                            }
                        }
                    }
                }
                (g, dg, d2g)
            }
            ChartKind::Custom { metric, step } => fd_metric_jet(&**metric, point, *step, n),
        };
        let det = g.determinant();
        let scale = g.amax().max(1e-300);
        if !det.is_finite() || det.abs() < 1e-13 * scale.powi(n as i32) {
            return Err(Error::DegenerateMetric { point: point.to_vec(), det });
        }
        let g_inv = g
            .clone()
            .try_inverse()
            .ok_or(Error::DegenerateMetric { point: point.to_vec(), det })?;
        Ok(MetricJet { g, g_inv, dg, d2g })
    }

    /// Metric gradient norm squared g^{ab} f_a f_b of a field jet.
    pub fn grad_norm_sq(&self, jet: &Jet3, point: &[f64]) -> Result<f64> {
        let g = self.metric(point)?;
        let g_inv = g.try_inverse().ok_or(Error::DegenerateMetric {
            point: point.to_vec(),
            det: 0.0,
        })?;
        Ok((&g_inv * &jet.grad).dot(&jet.grad))
    }
}

/// e^{2 phi} for the constant-curvature conformal model; errors when the
/// point leaves the model's coordinate range (Poincare ball boundary).
fn conformal_factor_const_curv(k: f64, point: &[f64], _n: usize) -> Result<f64> {
    let r2: f64 = point.iter().map(|v| v * v).sum();
    let w = 1.0 + k * r2;
    if w <= 1e-12 {
        return Err(Error::OutsideDomain { point: point.to_vec() });
    }
    Ok(4.0 / (w * w))
}

/// Jet of phi(x) = ln 2 - ln(1 + k |x|^2) up to second order (third unused),
/// the conformal exponent of the constant-curvature model.
fn const_curv_phi_jet(k: f64, point: &[f64], n: usize) -> Result<Jet3> {
    let r2: f64 = point.iter().map(|v| v * v).sum();
    let w = 1.0 + k * r2;
    if w <= 1e-12 {
        return Err(Error::OutsideDomain { point: point.to_vec() });
    }
    let value = std::f64::consts::LN_2 - w.ln();
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for a in 0..n {
        grad[a] = -2.0 * k * point[a] / w;
    }
    for a in 0..n {
        for b in 0..n {
            let kron = if a == b { 1.0 } else { 0.0 };
            hess[(a, b)] = -2.0 * k * kron / w + 4.0 * k * k * point[a] * point[b] / (w * w);
        }
    }
    Ok(Jet3 { value, grad, hess, third: Tensor3::zeros(n) })
}

/// (g, dg, d2g) for g_ab = e^{2 phi} delta_ab from the jet of phi.
fn conformal_metric_jet(phi: &Jet3, n: usize) -> (DMatrix<f64>, Tensor3, Tensor4) {
    let e2 = (2.0 * phi.value).exp();
    let g = DMatrix::identity(n, n) * e2;
    let mut dg = Tensor3::zeros(n);
    let mut d2g = Tensor4::zeros(n);
    for a in 0..n {
        for c in 0..n {
            dg.set(a, a, c, 2.0 * phi.grad[c] * e2);
            for d in 0..n {
                let v = (2.0 * phi.hess[(c, d)] + 4.0 * phi.grad[c] * phi.grad[d]) * e2;
                d2g.set(a, a, c, d, v);
            }
        }
    }
    (g, dg, d2g)
}

/// Finite-difference metric jets: 4th-order central stencils applied to the
/// black-box metric evaluator, component by component.
fn fd_metric_jet(
    metric: &dyn Fn(&[f64]) -> DMatrix<f64>,
    point: &[f64],
    h: f64,
    n: usize,
) -> (DMatrix<f64>, Tensor3, Tensor4) {
    const D1: [(f64, f64); 4] =
        [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    const D2: [(f64, f64); 5] = [
        (-2.0, -1.0 / 12.0),
        (-1.0, 16.0 / 12.0),
        (0.0, -30.0 / 12.0),
        (1.0, 16.0 / 12.0),
        (2.0, -1.0 / 12.0),
    ];
    let at = |offsets: &[(usize, f64)]| -> DMatrix<f64> {
        let mut x = point.to_vec();
        for &(axis, k) in offsets {
            x[axis] += k * h;
        }
        metric(&x)
    };
    let g = metric(point);
    let mut dg = Tensor3::zeros(n);
    let mut d2g = Tensor4::zeros(n);
    for c in 0..n {
        let mut m1 = DMatrix::zeros(n, n);
        for &(k, w) in &D1 {
            m1 += at(&[(c, k)]) * w;
        }
        m1 /= h;
        let mut m2 = DMatrix::zeros(n, n);
        for &(k, w) in &D2 {
            m2 += if k == 0.0 { g.clone() * w } else { at(&[(c, k)]) * w };
        }
        m2 /= h * h;
        for a in 0..n {
            for b in 0..n {
                dg.set(a, b, c, m1[(a, b)]);
                d2g.set(a, b, c, c, m2[(a, b)]);
            }
        }
        for d in (c + 1)..n {
            let mut m = DMatrix::zeros(n, n);
            for &(kc, wc) in &D1 {
                for &(kd, wd) in &D1 {
                    m += at(&[(c, kc), (d, kd)]) * (wc * wd);
                }
            }
            m /= h * h;
            for a in 0..n {
                for b in 0..n {
                    d2g.set(a, b, c, d, m[(a, b)]);
                    d2g.set(a, b, d, c, m[(a, b)]);
                }
            }
        }
    }
    (g, dg, d2g)
}

/// Christoffel symbols of the second kind: Gamma[a,b,c] = Gamma^a_bc.
pub fn christoffel(chart: &MetricChart, point: &[f64]) -> Result<Tensor3> {
    let mj = chart.metric_jet(point)?;
    Ok(christoffel_from_jet(&mj))
}

pub fn christoffel_from_jet(mj: &MetricJet) -> Tensor3 {
    let n = mj.g.nrows();
    let mut gamma = Tensor3::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = 0.0;
                for d in 0..n {
                    s += mj.g_inv[(a, d)]
                        * (mj.dg.get(d, c, b) + mj.dg.get(d, b, c) - mj.dg.get(b, c, d));
                }
                gamma.set(a, b, c, 0.5 * s);
            }
        }
    }
    gamma
}

/// Coordinate derivatives of the Christoffel symbols:
/// out[a][b][c] at fixed e, assembled as dGamma^a_bc / dx^e for all e.
/// Returned as Tensor4 indexed [a][b][c][e].
pub fn christoffel_derivatives(mj: &MetricJet) -> Tensor4 {
    let n = mj.g.nrows();
    // d g^{ad} / dx^e = - g^{am} g^{dn} dg_mn/dx^e
    let mut dginv = Tensor3::zeros(n);
    for a in 0..n {
        for d in 0..n {
            for e in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    for nn in 0..n {
                        s -= mj.g_inv[(a, m)] * mj.g_inv[(d, nn)] * mj.dg.get(m, nn, e);
                    }
                }
                dginv.set(a, d, e, s);
            }
        }
    }
    let mut out = Tensor4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for e in 0..n {
                    let mut s = 0.0;
                    for d in 0..n {
                        let bracket =
                            mj.dg.get(d, c, b) + mj.dg.get(d, b, c) - mj.dg.get(b, c, d);
                        let dbracket = mj.d2g.get(d, c, b, e) + mj.d2g.get(d, b, c, e)
                            - mj.d2g.get(b, c, d, e);
                        s += dginv.get(a, d, e) * bracket + mj.g_inv[(a, d)] * dbracket;
                    }
                    out.set(a, b, c, e, 0.5 * s);
                }
            }
        }
    }
    out
}

/// Riemann (fully covariant), Ricci and scalar curvature at a point.
pub fn curvature_at(chart: &MetricChart, point: &[f64]) -> Result<CurvatureAt> {
    let mj = chart.metric_jet(point)?;
    Ok(curvature_from_jet(&mj))
}

pub fn curvature_from_jet(mj: &MetricJet) -> CurvatureAt {
    let n = mj.g.nrows();
    let gamma = christoffel_from_jet(mj);
    let dgamma = christoffel_derivatives(mj);

    // R^a_bcd = dGamma^a_db/dx^c - dGamma^a_cb/dx^d
    //         + Gamma^a_ce Gamma^e_db - Gamma^a_de Gamma^e_cb
    let mut riemann_up = Tensor4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut v = dgamma.get(a, d, b, c) - dgamma.get(a, c, b, d);
                    for e in 0..n {
                        v += gamma.get(a, c, e) * gamma.get(e, d, b)
                            - gamma.get(a, d, e) * gamma.get(e, c, b);
                    }
                    riemann_up.set(a, b, c, d, v);
                }
            }
        }
    }

    let mut riemann = Tensor4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut v = 0.0;
                    for e in 0..n {
                        v += mj.g[(a, e)] * riemann_up.get(e, b, c, d);
                    }
                    riemann.set(a, b, c, d, v);
                }
            }
        }
    }

    let mut ricci = DMatrix::zeros(n, n);
    for b in 0..n {
        for d in 0..n {
            let mut v = 0.0;
            for a in 0..n {
                v += riemann_up.get(a, b, a, d);
            }
            ricci[(b, d)] = v;
        }
    }

    let mut scalar = 0.0;
    for b in 0..n {
        for d in 0..n {
            scalar += mj.g_inv[(b, d)] * ricci[(b, d)];
        }
    }

    CurvatureAt { riemann, ricci, scalar }
}

/// Sectional curvature of the plane spanned by u, v:
/// K = R(u, v, u, v) / (|u|^2 |v|^2 - <u,v>^2), all in the metric g.
pub fn sectional_curvature(
    chart: &MetricChart,
    point: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let mj = chart.metric_jet(point)?;
    let curv = curvature_from_jet(&mj);
    let n = mj.g.nrows();
    let uu = quad_form(&mj.g, u, u);
    let vv = quad_form(&mj.g, v, v);
    let uv = quad_form(&mj.g, u, v);
    let denom = uu * vv - uv * uv;
    if denom <= 1e-12 * uu.max(1e-300) * vv.max(1e-300) {
        return Err(Error::DegeneratePlane);
    }
    let mut num = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    num += curv.riemann.get(a, b, c, d) * u[a] * v[b] * u[c] * v[d];
                }
            }
        }
    }
    Ok(num / denom)
}

fn quad_form(g: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = g.nrows();
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            s += g[(a, b)] * u[a] * v[b];
        }
    }
    s
}

/// Contravariant gradient (grad f)^a = g^{ab} f_b.
pub fn gradient(chart: &MetricChart, jet: &Jet3, point: &[f64]) -> Result<DVector<f64>> {
    let mj = chart.metric_jet(point)?;
    Ok(&mj.g_inv * &jet.grad)
}

/// Laplace-Beltrami: Delta f = g^{bc} (f_bc - Gamma^d_bc f_d).
pub fn laplace_beltrami(chart: &MetricChart, jet: &Jet3, point: &[f64]) -> Result<f64> {
    let mj = chart.metric_jet(point)?;
    Ok(laplace_from_jets(&mj, jet))
}

pub fn laplace_from_jets(mj: &MetricJet, jet: &Jet3) -> f64 {
    let n = mj.g.nrows();
    let gamma = christoffel_from_jet(mj);
    let mut s = 0.0;
    for b in 0..n {
        for c in 0..n {
            let mut hc = jet.hess[(b, c)];
            for d in 0..n {
                hc -= gamma.get(d, b, c) * jet.grad[d];
            }
            s += mj.g_inv[(b, c)] * hc;
        }
    }
    s
}

/// Curvature of g = e^{2 phi} delta in n = 3 directly from the jet of phi,
/// bypassing the Christoffel route:
///   R_ab = -(phi_ab - phi_a phi_b) - delta_ab (Lap_E phi + |grad_E phi|^2)
///   R    = e^{-2 phi} (-4 Lap_E phi - 2 |grad_E phi|^2)
/// The Riemann tensor is reconstructed from Ricci via the 3-d identity
///   R_abcd = g_ac R_bd - g_ad R_bc + g_bd R_ac - g_bc R_ad
///          - (R/2)(g_ac g_bd - g_ad g_bc).
///
/// Signs follow the first-principles convention above (sphere positive); the
/// sign-flipped variant of these formulas appears in some references.
pub fn conformal_ricci(phi: &Jet3) -> Result<CurvatureAt> {
    let n = phi.dim();
    if n != 3 {
        return Err(Error::UnsupportedDimension(format!(
            "conformal_ricci is the n = 3 specialization, got n = {n}"
        )));
    }
    let lap: f64 = (0..n).map(|a| phi.hess[(a, a)]).sum();
    let grad2: f64 = phi.grad.iter().map(|v| v * v).sum();
    let e2 = (2.0 * phi.value).exp();

    let mut ricci = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let kron = if a == b { 1.0 } else { 0.0 };
            ricci[(a, b)] =
                -(phi.hess[(a, b)] - phi.grad[a] * phi.grad[b]) - kron * (lap + grad2);
        }
    }
    let scalar = (-4.0 * lap - 2.0 * grad2) / e2;

    let g = DMatrix::identity(n, n) * e2;
    let mut riemann = Tensor4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let v = g[(a, c)] * ricci[(b, d)] - g[(a, d)] * ricci[(b, c)]
                        + g[(b, d)] * ricci[(a, c)]
                        - g[(b, c)] * ricci[(a, d)]
                        - 0.5 * scalar * (g[(a, c)] * g[(b, d)] - g[(a, d)] * g[(b, c)]);
                    riemann.set(a, b, c, d, v);
                }
            }
        }
    }
    Ok(CurvatureAt { riemann, ricci, scalar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::halton::BoxSampler;
    use approx::assert_relative_eq;

    fn quadratic_phi() -> ScalarField {
        // phi = 0.2 x1 - 0.15 x2^2 + 0.1 x1 x3, closed-form jet.
        ScalarField::analytic("phi_quad", 3, |p| {
            let value = 0.2 * p[0] - 0.15 * p[1] * p[1] + 0.1 * p[0] * p[2];
            let grad = DVector::from_column_slice(&[
                0.2 + 0.1 * p[2],
                -0.3 * p[1],
                0.1 * p[0],
            ]);
            let mut hess = DMatrix::zeros(3, 3);
            hess[(1, 1)] = -0.3;
            hess[(0, 2)] = 0.1;
            hess[(2, 0)] = 0.1;
            Jet3 { value, grad, hess, third: Tensor3::zeros(3) }
        })
    }

    #[test]
    fn euclidean_christoffel_and_curvature_vanish() {
        let chart = MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3]);
        let gamma = christoffel(&chart, &[0.3, -1.0, 0.7]).unwrap();
        assert_eq!(gamma.max_abs(), 0.0);
        let curv = curvature_at(&chart, &[0.3, -1.0, 0.7]).unwrap();
        assert_eq!(curv.riemann.max_abs(), 0.0);
        assert_eq!(curv.scalar, 0.0);
    }

    #[test]
    fn conformal_christoffel_closed_form() {
        // Gamma^a_bc = delta^a_b phi_c + delta^a_c phi_b - delta_bc phi^a
        let phi = quadratic_phi();
        let chart = MetricChart::conformally_flat(phi.clone(), vec![[-2.0, 2.0]; 3]);
        let p = [0.4, -0.8, 1.1];
        let jet = phi.jet_at(&p).unwrap();
        let gamma = christoffel(&chart, &p).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut expect = 0.0;
                    if a == b {
                        expect += jet.grad[c];
                    }
                    if a == c {
                        expect += jet.grad[b];
                    }
                    if b == c {
                        expect -= jet.grad[a];
                    }
                    assert_relative_eq!(gamma.get(a, b, c), expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn stereographic_chart_is_flat_to_first_order_at_origin() {
        let chart = MetricChart::stereographic_sphere(1.0, 3);
        let mj = chart.metric_jet(&[0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(mj.g[(0, 0)], 4.0);
        assert_eq!(mj.dg.max_abs(), 0.0);
        let gamma = christoffel(&chart, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(gamma.max_abs(), 0.0);
    }

    #[test]
    fn constant_curvature_scalar_values() {
        // Unit 3-sphere: R = n(n-1)/radius^2 = 6. Poincare ball k=-1: R = -6.
        let sphere = MetricChart::stereographic_sphere(1.0, 3);
        let ball = MetricChart::poincare_ball(-1.0, 3);
        for p in [[0.0, 0.0, 0.0], [0.3, -0.2, 0.4], [0.1, 0.1, -0.3]] {
            let c = curvature_at(&sphere, &p).unwrap();
            assert_relative_eq!(c.scalar, 6.0, epsilon = 1e-9);
            let c = curvature_at(&ball, &p).unwrap();
            assert_relative_eq!(c.scalar, -6.0, epsilon = 1e-9);
        }
        // Radius 2: scalar = 6/4.
        let sphere2 = MetricChart::stereographic_sphere(2.0, 3);
        let c = curvature_at(&sphere2, &[0.5, 1.0, -0.7]).unwrap();
        assert_relative_eq!(c.scalar, 1.5, epsilon = 1e-9);
    }

    #[test]
    fn constant_curvature_riemann_identity() {
        // R_abcd = k (g_ac g_bd - g_ad g_bc) on the model charts.
        for (chart, k) in [
            (MetricChart::stereographic_sphere(1.0, 3), 1.0),
            (MetricChart::poincare_ball(-1.0, 3), -1.0),
        ] {
            let p = [0.21, -0.14, 0.33];
            let mj = chart.metric_jet(&p).unwrap();
            let curv = curvature_at(&chart, &p).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for d in 0..3 {
                            let expect = k
                                * (mj.g[(a, c)] * mj.g[(b, d)] - mj.g[(a, d)] * mj.g[(b, c)]);
                            assert_relative_eq!(
                                curv.riemann.get(a, b, c, d),
                                expect,
                                epsilon = 1e-8
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn riemann_symmetries_on_every_builtin_chart() {
        let charts = vec![
            MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3]),
            MetricChart::conformally_flat(quadratic_phi(), vec![[-2.0, 2.0]; 3]),
            MetricChart::stereographic_sphere(1.3, 3),
            MetricChart::poincare_ball(-0.7, 3),
            MetricChart::product_line(1.0),
            MetricChart::product_line(-1.0),
        ];
        for chart in &charts {
            let mut sampler = BoxSampler::new(chart.domain(), 11);
            let mut p = Vec::new();
            for _ in 0..20 {
                sampler.next_point(&mut p);
                let curv = curvature_at(chart, &p).unwrap();
                let r = &curv.riemann;
                let scale = r.max_abs().max(1.0);
                for a in 0..3 {
                    for b in 0..3 {
                        for c in 0..3 {
                            for d in 0..3 {
                                // antisymmetry in (a,b) and (c,d), pair symmetry,
                                // first Bianchi identity
                                assert!(
                                    (r.get(a, b, c, d) + r.get(b, a, c, d)).abs()
                                        < 1e-9 * scale,
                                    "antisym ab failed on {}",
                                    chart.label()
                                );
                                assert!(
                                    (r.get(a, b, c, d) + r.get(a, b, d, c)).abs()
                                        < 1e-9 * scale
                                );
                                assert!(
                                    (r.get(a, b, c, d) - r.get(c, d, a, b)).abs()
                                        < 1e-8 * scale
                                );
                                let bianchi = r.get(a, b, c, d)
                                    + r.get(a, c, d, b)
                                    + r.get(a, d, b, c);
                                assert!(bianchi.abs() < 1e-8 * scale);
                            }
                        }
                    }
                }
                // double contraction reproduces the scalar
                let mj = chart.metric_jet(&p).unwrap();
                let mut s = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        for c in 0..3 {
                            for d in 0..3 {
                                s += mj.g_inv[(a, c)]
                                    * mj.g_inv[(b, d)]
                                    * r.get(a, b, c, d);
                            }
                        }
                    }
                }
                assert_relative_eq!(s, curv.scalar, epsilon = 1e-8 * scale);
            }
        }
    }

    #[test]
    fn product_chart_sectional_curvatures() {
        // S^2(1) x R: the (e1,e2) plane has K = 1, mixed planes are flat,
        // scalar curvature is 2.
        let chart = MetricChart::product_line(1.0);
        let p = [0.4, -0.3, 0.8];
        let k12 = sectional_curvature(&chart, &p, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let k13 = sectional_curvature(&chart, &p, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        let k23 = sectional_curvature(&chart, &p, &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(k12, 1.0, epsilon = 1e-9);
        assert!(k13.abs() < 1e-9);
        assert!(k23.abs() < 1e-9);
        let c = curvature_at(&chart, &p).unwrap();
        assert_relative_eq!(c.scalar, 2.0, epsilon = 1e-9);

        // H^2(-1) x R
        let chart = MetricChart::product_line(-1.0);
        let p = [0.2, 0.1, -0.5];
        let k12 = sectional_curvature(&chart, &p, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(k12, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn sectional_curvature_is_basis_invariant() {
        let chart = MetricChart::stereographic_sphere(1.0, 3);
        let p = [0.3, 0.2, -0.1];
        let u = [1.0, 0.2, 0.0];
        let v = [0.0, 1.0, -0.4];
        let k1 = sectional_curvature(&chart, &p, &u, &v).unwrap();
        // same plane, different basis: v' = 2v + 0.7u, u' = 3u
        let u2: Vec<f64> = u.iter().map(|x| 3.0 * x).collect();
        let v2: Vec<f64> = (0..3).map(|i| 2.0 * v[i] + 0.7 * u[i]).collect();
        let k2 = sectional_curvature(&chart, &p, &u2, &v2).unwrap();
        assert_relative_eq!(k1, k2, epsilon = 1e-10);
        assert_relative_eq!(k1, 1.0, epsilon = 1e-9);

        match sectional_curvature(&chart, &p, &u, &u) {
            Err(Error::DegeneratePlane) => {}
            other => panic!("expected DegeneratePlane, got {other:?}"),
        }
    }

    #[test]
    fn laplacian_on_flat_and_conformal_charts() {
        let flat = MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3]);
        let f = ScalarField::norm_sq(3);
        let p = [0.7, -0.2, 0.5];
        let lap = laplace_beltrami(&flat, &f.jet_at(&p).unwrap(), &p).unwrap();
        assert_relative_eq!(lap, 6.0, epsilon = 1e-12);

        // phi = x1, f = x1: Delta_g f = e^{-2 x1} (Lap_E f + grad phi . grad f)
        //                            = e^{-2 x1}
        let phi = ScalarField::coordinate(0, 3);
        let chart = MetricChart::conformally_flat(phi, vec![[-2.0, 2.0]; 3]);
        let f = ScalarField::coordinate(0, 3);
        let p = [0.3, 1.0, -0.6];
        let lap = laplace_beltrami(&chart, &f.jet_at(&p).unwrap(), &p).unwrap();
        assert_relative_eq!(lap, (-2.0 * 0.3f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn conformal_gradient_and_laplacian_identities() {
        // For g = e^{2 phi} delta in n = 3 and the field f = phi:
        //   |grad phi|_g^2 = e^{-2 phi} |grad_E phi|^2
        //   Lap_g phi = e^{-2 phi} (|grad_E phi|^2 + Lap_E phi)
        let phi = quadratic_phi();
        let chart = MetricChart::conformally_flat(phi.clone(), vec![[-2.0, 2.0]; 3]);
        let mut sampler = BoxSampler::new(chart.domain(), 5);
        let mut p = Vec::new();
        for _ in 0..100 {
            sampler.next_point(&mut p);
            let jet = phi.jet_at(&p).unwrap();
            let e2 = (2.0 * jet.value).exp();
            let ge = jet.grad.norm_squared();
            let le: f64 = (0..3).map(|a| jet.hess[(a, a)]).sum();

            let g2 = chart.grad_norm_sq(&jet, &p).unwrap();
            assert_relative_eq!(g2, ge / e2, epsilon = 1e-10 * (1.0 + ge));

            let lap = laplace_beltrami(&chart, &jet, &p).unwrap();
            assert_relative_eq!(lap, (ge + le) / e2, epsilon = 1e-10 * (1.0 + le.abs()));
        }
    }

    #[test]
    fn conformal_ricci_agrees_with_first_principles() {
        let phi = quadratic_phi();
        let chart = MetricChart::conformally_flat(phi.clone(), vec![[-2.0, 2.0]; 3]);
        let mut sampler = BoxSampler::new(chart.domain(), 9);
        let mut p = Vec::new();
        for _ in 0..50 {
            sampler.next_point(&mut p);
            let direct = conformal_ricci(&phi.jet_at(&p).unwrap()).unwrap();
            let fp = curvature_at(&chart, &p).unwrap();
            assert_relative_eq!(direct.scalar, fp.scalar, epsilon = 1e-8);
            for a in 0..3 {
                for b in 0..3 {
                    assert_relative_eq!(
                        direct.ricci[(a, b)],
                        fp.ricci[(a, b)],
                        epsilon = 1e-8
                    );
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for d in 0..3 {
                            assert_relative_eq!(
                                direct.riemann.get(a, b, c, d),
                                fp.riemann.get(a, b, c, d),
                                epsilon = 1e-8
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conformal_ricci_linear_exponent_origin() {
        // phi = x1 at the origin. First principles give R = -2; the
        // opposite-convention form of the scalar identity would give +2.
        let phi = ScalarField::coordinate(0, 3);
        let curv = conformal_ricci(&phi.jet_at(&[0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_relative_eq!(curv.scalar, -2.0, epsilon = 1e-12);
        let chart = MetricChart::conformally_flat(phi, vec![[-2.0, 2.0]; 3]);
        let fp = curvature_at(&chart, &[0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(fp.scalar, -2.0, epsilon = 1e-10);
    }

    #[test]
    fn custom_metric_finite_difference_jets() {
        // Same conformal metric, supplied as a black box: curvature must agree
        // with the analytic chart to FD accuracy.
        let phi = quadratic_phi();
        let phi2 = phi.clone();
        let analytic = MetricChart::conformally_flat(phi, vec![[-2.0, 2.0]; 3]);
        let custom = MetricChart::custom(3, vec![[-2.0, 2.0]; 3], move |p| {
            let e2 = (2.0 * phi2.eval(p)).exp();
            DMatrix::identity(3, 3) * e2
        });
        let p = [0.5, -0.4, 0.2];
        let ca = curvature_at(&analytic, &p).unwrap();
        let cc = curvature_at(&custom, &p).unwrap();
        assert_relative_eq!(ca.scalar, cc.scalar, epsilon = 1e-6);
    }

    #[test]
    fn domain_and_degeneracy_errors() {
        let chart = MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3]);
        match christoffel(&chart, &[3.0, 0.0, 0.0]) {
            Err(Error::OutsideDomain { .. }) => {}
            other => panic!("expected OutsideDomain, got {other:?}"),
        }
        let degenerate = MetricChart::custom(2, vec![[-1.0, 1.0]; 2], |p| {
            DMatrix::from_row_slice(2, 2, &[p[0], 0.0, 0.0, 1.0])
        });
        match christoffel(&degenerate, &[0.0, 0.5]) {
            Err(Error::DegenerateMetric { .. }) => {}
            other => panic!("expected DegenerateMetric, got {other:?}"),
        }
    }
}
