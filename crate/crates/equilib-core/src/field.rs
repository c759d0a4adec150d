//! Scalar fields with third-order jets, the built-in field catalog, and
//! deterministic domain sampling.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::MetricChart;
use crate::halton::BoxSampler;
use crate::jet::{fd_jet3, Jet3, Profile1d};
use crate::tensor::Tensor3;

type JetFn = Arc<dyn Fn(&[f64]) -> Jet3 + Send + Sync>;
type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FieldKind {
    /// Closed-form jets.
    Analytic { jet: JetFn },
    /// Value-only evaluator; jets by 4th-order central differences.
    Numeric { eval: EvalFn, step: f64 },
}

/// A scalar field on chart coordinates, able to produce value and
/// derivatives up to order 3 at any point.
#[derive(Clone)]
pub struct ScalarField {
    label: String,
    dimension: usize,
    kind: FieldKind,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarField({}, n={})", self.label, self.dimension)
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-2;

impl ScalarField {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn has_analytic_jets(&self) -> bool {
        matches!(self.kind, FieldKind::Analytic { .. })
    }

    pub fn analytic(
        label: &str,
        dimension: usize,
        jet: impl Fn(&[f64]) -> Jet3 + Send + Sync + 'static,
    ) -> Self {
        ScalarField { label: label.to_string(), dimension, kind: FieldKind::Analytic { jet: Arc::new(jet) } }
    }

    pub fn numeric(
        label: &str,
        dimension: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        step: f64,
    ) -> Self {
        ScalarField {
            label: label.to_string(),
            dimension,
            kind: FieldKind::Numeric { eval: Arc::new(eval), step },
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        match &self.kind {
            FieldKind::Analytic { jet } => jet(point).value,
            FieldKind::Numeric { eval, .. } => eval(point),
        }
    }

    pub fn jet_at(&self, point: &[f64]) -> Result<Jet3> {
        if point.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, got: point.len() });
        }
        let mut jet = match &self.kind {
            FieldKind::Analytic { jet } => jet(point),
            FieldKind::Numeric { eval, step } => fd_jet3(&**eval, point, *step),
        };
        // hess/third must be exactly index-symmetric regardless of supplier.
        let ht = jet.hess.transpose();
        jet.hess = (&jet.hess + ht) * 0.5;
        jet.third = jet.third.symmetrized();
        if !jet.value.is_finite() || jet.grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::FieldEvaluation {
                point: point.to_vec(),
                reason: "non-finite value or gradient".into(),
            });
        }
        Ok(jet)
    }

    /// tau(f): analytic composition when f has closed-form jets, otherwise a
    /// composed evaluator with the same finite-difference step.
    pub fn compose(&self, outer: &Profile1d) -> ScalarField {
        let label = format!("{}({})", outer.label, self.label);
        match &self.kind {
            FieldKind::Analytic { jet } => {
                let inner = jet.clone();
                let outer = outer.clone();
                ScalarField::analytic(&label, self.dimension, move |p| inner(p).compose(&outer))
            }
            FieldKind::Numeric { eval, step } => {
                let inner = eval.clone();
                let outer = outer.clone();
                let step = *step;
                ScalarField::numeric(&label, self.dimension, move |p| outer.eval(inner(p)), step)
            }
        }
    }

    // ----- built-in catalog -------------------------------------------------

    /// f = a . x
    pub fn linear(a: &[f64]) -> Self {
        let a = a.to_vec();
        let n = a.len();
        let label = format!("linear({a:?})");
        ScalarField::analytic(&label, n, move |p| {
            let value = a.iter().zip(p).map(|(ai, xi)| ai * xi).sum();
            Jet3 {
                value,
                grad: DVector::from_column_slice(&a),
                hess: DMatrix::zeros(n, n),
                third: Tensor3::zeros(n),
            }
        })
    }

    /// f = |x|^2
    pub fn norm_sq(n: usize) -> Self {
        Self::quadratic_radial("norm_sq", n, n)
    }

    /// f = x1^2 + x2^2 (cylinder radius squared; n >= 2)
    pub fn cyl_r2(n: usize) -> Self {
        Self::quadratic_radial("cyl_r2", n, 2)
    }

    fn quadratic_radial(label: &str, n: usize, active: usize) -> Self {
        assert!(active <= n);
        ScalarField::analytic(label, n, move |p| {
            let mut grad = DVector::zeros(n);
            let mut hess = DMatrix::zeros(n, n);
            let mut value = 0.0;
            for a in 0..active {
                value += p[a] * p[a];
                grad[a] = 2.0 * p[a];
                hess[(a, a)] = 2.0;
            }
            Jet3 { value, grad, hess, third: Tensor3::zeros(n) }
        })
    }

    /// f = x^axis (single coordinate)
    pub fn coordinate(axis: usize, n: usize) -> Self {
        let mut a = vec![0.0; n];
        a[axis] = 1.0;
        let mut f = ScalarField::linear(&a);
        f.label = format!("x{}", axis + 1);
        f
    }

    /// f = (x^n)^3, the cubed last coordinate.
    pub fn z_cubed(n: usize) -> Self {
        let mut f = ScalarField::coordinate(n - 1, n).compose(&Profile1d::cube());
        f.label = "z_cubed".into();
        f
    }

    /// f = exp(x1^2 + x2^2)
    pub fn exp_cyl(n: usize) -> Self {
        let mut f = ScalarField::cyl_r2(n).compose(&Profile1d::exp());
        f.label = "exp_cyl".into();
        f
    }

    /// f(x) = P(r) with r the Euclidean norm of the first `radial_dims`
    /// coordinates. Analytic jets by the radial chain rule; r = 0 must be
    /// avoided by callers (guarded against NaN in jet_at).
    pub fn radial(label: &str, profile: Profile1d, radial_dims: usize, n: usize) -> Self {
        assert!(radial_dims >= 1 && radial_dims <= n);
        ScalarField::analytic(label, n, move |p| {
            if radial_dims == 1 {
                return jet_of_abscissa(&profile, p, n);
            }
            let r2: f64 = p[..radial_dims].iter().map(|v| v * v).sum();
            let r = r2.sqrt();
            let [v, p1, p2, p3] = profile.jet(r);
            let mut grad = DVector::zeros(n);
            let mut hess = DMatrix::zeros(n, n);
            let mut third = Tensor3::zeros(n);
            // dr/dx_a = x_a / r etc., zero outside the radial block.
            let d = radial_dims;
            let mut ra = vec![0.0; d];
            for a in 0..d {
                ra[a] = p[a] / r;
            }
            let rab = |a: usize, b: usize| -> f64 {
                let kron = if a == b { 1.0 } else { 0.0 };
                kron / r - p[a] * p[b] / (r * r2)
            };
            let rabc = |a: usize, b: usize, c: usize| -> f64 {
                let kab = if a == b { 1.0 } else { 0.0 };
                let kac = if a == c { 1.0 } else { 0.0 };
                let kbc = if b == c { 1.0 } else { 0.0 };
                -(kab * p[c] + kac * p[b] + kbc * p[a]) / (r * r2)
                    + 3.0 * p[a] * p[b] * p[c] / (r * r2 * r2)
            };
            for a in 0..d {
                grad[a] = p1 * ra[a];
            }
            for a in 0..d {
                for b in 0..d {
                    hess[(a, b)] = p2 * ra[a] * ra[b] + p1 * rab(a, b);
                }
            }
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        let t = p3 * ra[a] * ra[b] * ra[c]
                            + p2 * (rab(a, b) * ra[c] + rab(a, c) * ra[b] + rab(b, c) * ra[a])
                            + p1 * rabc(a, b, c);
                        third.set(a, b, c, t);
                    }
                }
            }
            Jet3 { value: v, grad, hess, third }
        })
    }

    /// Smooth-but-not-analytic example: g = F + h(F) with F = |x|^2 - 1 and
    /// h(t) = t exp(-1/t^2), flat at t = 0 from both sides.
    pub fn example_4_2(n: usize) -> Self {
        ScalarField::numeric(
            "example_4_2",
            n,
            |p| {
                let f: f64 = p.iter().map(|v| v * v).sum::<f64>() - 1.0;
                f + flat_bump(f)
            },
            DEFAULT_FD_STEP,
        )
    }

    /// One-sided flat defect across {x1 = 0}:
    /// g = x1 (1 + x2 exp(-1/x1^2)) for x1 > 0, else x1.
    pub fn example_4_3(n: usize) -> Self {
        assert!(n >= 2);
        ScalarField::numeric(
            "example_4_3",
            n,
            |p| {
                let x1 = p[0];
                if x1 > 0.0 {
                    x1 * (1.0 + p[1] * (-1.0 / (x1 * x1)).exp())
                } else {
                    x1
                }
            },
            DEFAULT_FD_STEP,
        )
    }

    /// Planar (n = 2) one-sided defect outside the unit circle:
    /// g = 1 - r^2 + sin(theta) exp(-1/(1-r)^2) for r >= 1, else 1 - r^2.
    pub fn example_4_4() -> Self {
        ScalarField::numeric(
            "example_4_4",
            2,
            |p| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                let r = r2.sqrt();
                if r >= 1.0 {
                    let u = 1.0 - r;
                    1.0 - r2 + (p[1] / r) * (-1.0 / (u * u)).exp()
                } else {
                    1.0 - r2
                }
            },
            DEFAULT_FD_STEP,
        )
    }

    /// User expression over x1..xn with finite-difference jets.
    pub fn from_expr(src: &str, dimension: usize, step: f64) -> Result<Self> {
        let expr = Expr::parse(src)?;
        if expr.min_dimension() > dimension {
            return Err(Error::Config(format!(
                "expression {src:?} uses x{} but dimension is {dimension}",
                expr.min_dimension()
            )));
        }
        Ok(ScalarField::numeric(&format!("expr({src})"), dimension, move |p| expr.eval(p), step))
    }
}

/// P(|x1|) lifted to n dimensions (planar symmetry). Even extension: odd
/// derivatives pick up the sign of x1.
fn jet_of_abscissa(profile: &Profile1d, p: &[f64], n: usize) -> Jet3 {
    let s = if p[0] < 0.0 { -1.0 } else { 1.0 };
    let [v, p1, p2, p3] = profile.jet(p[0].abs());
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let mut third = Tensor3::zeros(n);
    grad[0] = s * p1;
    hess[(0, 0)] = p2;
    third.set(0, 0, 0, s * p3);
    Jet3 { value: v, grad, hess, third }
}

/// t exp(-1/t^2) extended by 0 at t = 0; C-infinity, flat at the origin.
pub fn flat_bump(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * (-1.0 / (t * t)).exp()
    }
}

/// Sample points of a chart box, deterministic in `seed`, rejecting
/// near-critical points of `field` (metric gradient norm below `eps_grad`)
/// and keeping a margin from the chart boundary.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    pub points: Vec<Vec<f64>>,
    pub exclusion_radius: f64,
    pub seed: u64,
    /// Gradient-norm floor the cloud was filtered with; rank tests reuse it
    /// as the absolute scale guard.
    pub eps_grad: f64,
}

pub fn sample_domain(
    field: &ScalarField,
    chart: &MetricChart,
    count: usize,
    seed: u64,
    eps_grad: f64,
) -> Result<SampleCloud> {
    let domain = chart.domain();
    let min_extent = domain
        .iter()
        .map(|r| r[1] - r[0])
        .fold(f64::INFINITY, f64::min);
    let exclusion_radius = 1e-3 * min_extent;
    let shrunk: Vec<[f64; 2]> = domain
        .iter()
        .map(|r| [r[0] + exclusion_radius, r[1] - exclusion_radius])
        .collect();

    let mut sampler = BoxSampler::new(&shrunk, seed);
    let mut points = Vec::with_capacity(count);
    let mut p = Vec::new();
    let mut tried: u64 = 0;
    let budget = (count as u64) * 200 + 1000;
    while points.len() < count {
        if tried >= budget {
            return Err(Error::EverywhereCritical {
                eps_grad,
                rejection_rate: 1.0 - points.len() as f64 / tried as f64,
            });
        }
        sampler.next_point(&mut p);
        tried += 1;
        let jet = match field.jet_at(&p) {
            Ok(j) => j,
            Err(_) => continue,
        };
        match chart.grad_norm_sq(&jet, &p) {
            Ok(g2) if g2.sqrt() >= eps_grad => points.push(p.clone()),
            _ => continue,
        }
    }
    Ok(SampleCloud { points, exclusion_radius, seed, eps_grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn norm_sq_jet_closed_form() {
        let f = ScalarField::norm_sq(3);
        let jet = f.jet_at(&[1.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(jet.value, 9.0);
        assert_eq!(jet.grad.as_slice(), &[2.0, 4.0, 4.0]);
        assert_relative_eq!(jet.hess[(0, 0)], 2.0);
        assert_relative_eq!(jet.hess[(0, 1)], 0.0);
        assert_relative_eq!(jet.third.max_abs(), 0.0);
    }

    #[test]
    fn monomial_third_derivative_via_expr() {
        // f = x1 x2 x3: the only nonzero third derivative is f_123 = 1.
        let f = ScalarField::from_expr("x1*x2*x3", 3, DEFAULT_FD_STEP).unwrap();
        let jet = f.jet_at(&[0.4, -1.1, 0.8]).unwrap();
        assert_relative_eq!(jet.third.get(0, 1, 2), 1.0, epsilon = 1e-8);
        assert_relative_eq!(jet.third.get(2, 0, 1), 1.0, epsilon = 1e-8);
        assert_relative_eq!(jet.third.get(0, 0, 1), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn radial_field_matches_direct_evaluation() {
        let prof = Profile1d::new("r^2+r", |r| [r * r + r, 2.0 * r + 1.0, 2.0, 0.0]);
        let f = ScalarField::radial("rad", prof, 3, 3);
        let p = [0.6, -0.3, 0.9];
        let jet = f.jet_at(&p).unwrap();
        let direct = |x: &[f64]| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            r * r + r
        };
        let fd = fd_jet3(&direct, &p, 1e-3);
        assert_relative_eq!(jet.value, fd.value, epsilon = 1e-12);
        for a in 0..3 {
            assert_relative_eq!(jet.grad[a], fd.grad[a], epsilon = 1e-9);
            for b in 0..3 {
                assert_relative_eq!(jet.hess[(a, b)], fd.hess[(a, b)], epsilon = 1e-7);
                for c in 0..3 {
                    assert_relative_eq!(jet.third.get(a, b, c), fd.third.get(a, b, c), epsilon = 1e-4);
                }
            }
        }
    }

    #[test]
    fn example_fields_are_finite_and_continuous_at_the_defect() {
        let g = ScalarField::example_4_3(3);
        assert_relative_eq!(g.eval(&[0.0, 1.0, 0.0]), 0.0);
        assert!((g.eval(&[1e-3, 1.0, 0.0]) - 1e-3).abs() < 1e-9);
        assert!((g.eval(&[-1e-3, 1.0, 0.0]) + 1e-3).abs() < 1e-15);

        let g = ScalarField::example_4_4();
        assert_relative_eq!(g.eval(&[0.0, 1.0]), 0.0);
        assert_relative_eq!(g.eval(&[0.6, 0.0]), 1.0 - 0.36);
        assert!(g.eval(&[0.0, 1.5]).is_finite());

        let g = ScalarField::example_4_2(3);
        assert_relative_eq!(g.eval(&[1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn sample_domain_rejects_critical_band_and_is_deterministic() {
        let chart = MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3]);
        let f = ScalarField::norm_sq(3);
        let c1 = sample_domain(&f, &chart, 500, 42, 1e-3).unwrap();
        let c2 = sample_domain(&f, &chart, 500, 42, 1e-3).unwrap();
        assert_eq!(c1.points, c2.points);
        for p in &c1.points {
            let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(2.0 * r >= 1e-3, "critical point at {p:?} not rejected");
        }
        let c3 = sample_domain(&f, &chart, 500, 43, 1e-3).unwrap();
        assert_ne!(c1.points, c3.points);
    }

    #[test]
    fn sample_domain_fails_on_constant_field() {
        let chart = MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3]);
        let f = ScalarField::analytic("const", 3, |_| Jet3::constant(3, 1.0));
        match sample_domain(&f, &chart, 100, 1, 1e-6) {
            Err(Error::EverywhereCritical { .. }) => {}
            other => panic!("expected EverywhereCritical, got {other:?}"),
        }
    }
}
