//! Level-set (fiber) geometry: extraction, extrinsic and intrinsic curvature,
//! classification against the b·S^p × R^q model family, and parallel-fiber
//! relations.
//!
//! Sign conventions, fixed once: the unit normal is n = ∇f/‖∇f‖ (pointing
//! toward increasing f), the shape operator is S(v) = ∇_v n, and the
//! principal curvatures are its tangential eigenvalues. With this choice a
//! level sphere of f = ‖x‖² has kᵢ = +1/radius, and the parallel-offset
//! relation k′ = k/(1 + r·k) holds with r measured along +n.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{christoffel_from_jet, curvature_at, CurvatureAt, MetricChart};
use crate::marching::{extract_level_set, MeshFaces};
use crate::partition::EquilibriumProfile;

/// Gradient-norm floor below which hypersurface geometry is refused.
pub const DEFAULT_EPS_GRAD: f64 = 1e-8;
/// Per-curvature coefficient-of-variation bound for "constant" verdicts.
pub const CLASSIFY_CV_TOL: f64 = 1e-3;
/// |kᵢ| below 1e-4·(max|k|+1) counts as a flat direction.
pub const ZERO_CURVATURE_FACTOR: f64 = 1e-4;

/// Hypersurface data of {f = f(x)} at one regular point.
#[derive(Debug, Clone)]
pub struct HypersurfaceJet {
    /// ‖∇f‖_g.
    pub grad_norm: f64,
    /// Covariant unit conormal n_a = f_a/‖∇f‖.
    pub normal_co: DVector<f64>,
    /// Contravariant unit normal n^a.
    pub normal_contra: DVector<f64>,
    /// Covariant second fundamental form H_ab (tangential, symmetric).
    pub h_cov: DMatrix<f64>,
    /// Principal curvatures: eigenvalues of the shape operator restricted to
    /// the tangent space, ascending.
    pub principal: Vec<f64>,
    /// Mean curvature H = g^{ab} H_ab = Σ kᵢ.
    pub mean: f64,
}

/// Full extrinsic/extrinsic jet of the level set through `point`.
pub fn hypersurface_at(
    f: &ScalarField,
    chart: &MetricChart,
    point: &[f64],
) -> Result<HypersurfaceJet> {
    let n = chart.dimension();
    if f.dimension() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.dimension() });
    }
    let jet = f.jet_at(point)?;
    let mj = chart.metric_jet(point)?;
    let gamma = christoffel_from_jet(&mj);
    let fa = &jet.grad;
    let u2 = (fa.transpose() * &mj.g_inv * fa)[(0, 0)];
    let u = u2.max(0.0).sqrt();
    if u < DEFAULT_EPS_GRAD {
        return Err(Error::FieldEvaluation {
            point: point.to_vec(),
            reason: format!(
                "gradient norm {u:.3e} below {DEFAULT_EPS_GRAD:.1e}: level-set geometry \
                 undefined near a critical point"
            ),
        });
    }

    // d_c ‖∇f‖ via d_c g^{ab} = −g^{am} g^{bn} d_c g_mn
    let mut u_c = DVector::zeros(n);
    for c in 0..n {
        let mut dgc = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                dgc[(a, b)] = mj.dg.get(a, b, c);
            }
        }
        let dginv_c = -(&mj.g_inv * dgc * &mj.g_inv);
        let t1 = (fa.transpose() * &dginv_c * fa)[(0, 0)];
        let mut t2 = 0.0;
        for a in 0..n {
            for b in 0..n {
                t2 += mj.g_inv[(a, b)] * jet.hess[(a, c)] * fa[b];
            }
        }
        u_c[c] = (t1 + 2.0 * t2) / (2.0 * u);
    }

    let normal_co = fa / u;
    let normal_contra = &mj.g_inv * &normal_co;

    // n_{b;c} = d_c n_b − Γ^d_bc n_d with d_c n_b = f_bc/u − f_b u_c/u²
    let mut dn = DMatrix::zeros(n, n);
    for b in 0..n {
        for c in 0..n {
            let mut v = jet.hess[(b, c)] / u - fa[b] * u_c[c] / u2;
            for d in 0..n {
                v -= gamma.get(d, b, c) * normal_co[d];
            }
            dn[(b, c)] = v;
        }
    }

    // H_ab = β_a^c β_b^d n_{d;c}, β_a^c = δ_a^c − n_a n^c
    let mut h = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for c in 0..n {
                let bca =
                    if c == a { 1.0 } else { 0.0 } - normal_co[a] * normal_contra[c];
                for d in 0..n {
                    let bdb =
                        if d == b { 1.0 } else { 0.0 } - normal_co[b] * normal_contra[d];
                    s += bca * bdb * dn[(d, c)];
                }
            }
            h[(a, b)] = s;
        }
    }
    let ht = h.transpose();
    let h_cov = (&h + ht) * 0.5;

    let mean = (&mj.g_inv * &h_cov).trace();

    let basis = tangent_basis(&mj.g, &normal_contra, &normal_co)?;
    let m = n - 1;
    let mut shape = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            shape[(i, j)] = (basis[i].transpose() * &h_cov * &basis[j])[(0, 0)];
        }
    }
    let shape_t = shape.transpose();
    let shape = (shape + shape_t) * 0.5;
    let mut principal: Vec<f64> = shape.symmetric_eigen().eigenvalues.iter().cloned().collect();
    principal.sort_by(f64::total_cmp);

    Ok(HypersurfaceJet { grad_norm: u, normal_co, normal_contra, h_cov, principal, mean })
}

/// g-orthonormal basis of the tangent space orthogonal to the unit normal,
/// built deterministically from coordinate-axis seeds.
fn tangent_basis(
    g: &DMatrix<f64>,
    normal_contra: &DVector<f64>,
    normal_co: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let n = g.nrows();
    let ip = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * g * v)[(0, 0)];
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for axis in 0..n {
        if basis.len() == n - 1 {
            break;
        }
        let mut v = DVector::zeros(n);
        v[axis] = 1.0;
        // n_a v^a is the g-inner product with the unit normal
        let vn = normal_co.dot(&v);
        v -= normal_contra * vn;
        for b in &basis {
            let c = ip(&v, b);
            v -= b * c;
        }
        let nn = ip(&v, &v);
        if nn > 1e-12 {
            basis.push(v / nn.sqrt());
        }
    }
    if basis.len() != n - 1 {
        return Err(Error::Geometry("tangent basis construction degenerated".into()));
    }
    Ok(basis)
}

/// Covariant second fundamental form H_ab of {f = f(point)} at `point`.
pub fn second_fundamental_form(
    f: &ScalarField,
    chart: &MetricChart,
    point: &[f64],
) -> Result<DMatrix<f64>> {
    Ok(hypersurface_at(f, chart, point)?.h_cov)
}

/// Principal curvatures (shape-operator eigenvalues, ascending), any n ≥ 2.
pub fn shape_eigenvalues(
    f: &ScalarField,
    chart: &MetricChart,
    point: &[f64],
) -> Result<Vec<f64>> {
    Ok(hypersurface_at(f, chart, point)?.principal)
}

/// Mean curvature H = div n at a regular point, normal along +∇f.
pub fn mean_curvature(f: &ScalarField, chart: &MetricChart, point: &[f64]) -> Result<f64> {
    Ok(hypersurface_at(f, chart, point)?.mean)
}

/// Mean curvature from the recovered level profiles alone:
/// H(c) = (−ω′(c)/2 + ψ(c)) / √ω(c).
pub fn mean_curvature_from_profile(profile: &EquilibriumProfile, level: f64) -> Result<f64> {
    let omega = profile.omega_at(level)?;
    if omega <= 0.0 {
        return Err(Error::Geometry(format!(
            "profile gradient-norm value {omega:.3e} not positive at level {level}"
        )));
    }
    let psi = profile.psi_at(level)?;
    let omega_prime = profile.omega_prime_at(level)?;
    Ok((-0.5 * omega_prime + psi) / omega.sqrt())
}

/// Principal curvatures with the ambient/intrinsic curvature split (n = 3).
#[derive(Debug, Clone)]
pub struct PrincipalIntrinsic {
    /// k₁ ≤ k₂.
    pub principal: Vec<f64>,
    /// Ambient sectional curvature of the tangent plane: K = R/2 − Ric(n,n).
    pub ambient_sectional: f64,
    /// Gauss curvature K̄ = k₁k₂.
    pub gauss: f64,
    /// Intrinsic curvature K′ = K + K̄.
    pub intrinsic: f64,
    /// |K′ − ½(R − 2 Ric(n,n) + H² − Σk²)|: disagreement between the
    /// curvature-split route and the contracted Gauss-equation route.
    pub gauss_identity_residual: f64,
}

fn intrinsic_from_parts(hs: &HypersurfaceJet, cur: &CurvatureAt) -> PrincipalIntrinsic {
    let ric_nn = (hs.normal_contra.transpose() * &cur.ricci * &hs.normal_contra)[(0, 0)];
    let ambient = 0.5 * cur.scalar - ric_nn;
    let gauss = hs.principal[0] * hs.principal[1];
    let intrinsic = ambient + gauss;
    let sum_sq: f64 = hs.principal.iter().map(|k| k * k).sum();
    let scalar_induced = cur.scalar - 2.0 * ric_nn + hs.mean * hs.mean - sum_sq;
    let gauss_identity_residual = (0.5 * scalar_induced - intrinsic).abs();
    PrincipalIntrinsic {
        principal: hs.principal.clone(),
        ambient_sectional: ambient,
        gauss,
        intrinsic,
        gauss_identity_residual,
    }
}

/// (k₁, k₂, K, K̄, K′) of the level set through `point`; n = 3 only.
pub fn principal_and_intrinsic(
    f: &ScalarField,
    chart: &MetricChart,
    point: &[f64],
) -> Result<PrincipalIntrinsic> {
    if chart.dimension() != 3 {
        return Err(Error::UnsupportedDimension(format!(
            "intrinsic curvature split requires dimension 3, got {}; principal \
             curvatures alone are available via shape_eigenvalues",
            chart.dimension()
        )));
    }
    let hs = hypersurface_at(f, chart, point)?;
    let cur = curvature_at(chart, point)?;
    Ok(intrinsic_from_parts(&hs, &cur))
}

/// Per-vertex hypersurface geometry. Curvature-split entries are present only
/// for n = 3; a near-critical vertex leaves NaN geometry and raises the mesh
/// warning flag instead of aborting extraction.
#[derive(Debug, Clone)]
pub struct VertexGeometry {
    /// Contravariant unit normal n^a (‖n‖_g = 1).
    pub normal: Vec<f64>,
    pub mean_curvature: f64,
    /// Ascending.
    pub principal: Vec<f64>,
    pub ambient_sectional: Option<f64>,
    pub gauss_curvature: Option<f64>,
    pub intrinsic_curvature: Option<f64>,
    pub gauss_identity_residual: Option<f64>,
}

impl VertexGeometry {
    pub fn is_valid(&self) -> bool {
        self.mean_curvature.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct FiberComponent {
    pub vertices: Vec<Vec<f64>>,
    pub faces: MeshFaces,
    /// Aligned with `vertices`.
    pub geometry: Vec<VertexGeometry>,
    /// V − E + F (triangles) or V − E (segments).
    pub euler: i64,
    /// Component touches the chart boundary box.
    pub clipped: bool,
    /// max |f(vertex) − level| over the component.
    pub max_level_residual: f64,
}

#[derive(Debug, Clone)]
pub struct FiberMesh {
    pub level: f64,
    /// Connected components, deterministic order.
    pub components: Vec<FiberComponent>,
    /// Some vertex sits below the gradient floor: the level is within reach
    /// of a critical value at this resolution.
    pub critical_warning: bool,
}

impl FiberMesh {
    pub fn vertex_count(&self) -> usize {
        self.components.iter().map(|c| c.vertices.len()).sum()
    }

    pub fn clipped(&self) -> bool {
        self.components.iter().any(|c| c.clipped)
    }
}

/// Extract {f = level} on the chart grid and fill per-vertex geometry from
/// analytic jets at the vertex coordinates (never from mesh discretization).
pub fn extract_fiber(
    f: &ScalarField,
    chart: &MetricChart,
    level: f64,
    grid_resolution: usize,
) -> Result<FiberMesh> {
    let n = chart.dimension();
    if f.dimension() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.dimension() });
    }
    if grid_resolution < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    let eval = |p: &[f64]| f.eval(p);
    let raw = extract_level_set(&eval, chart.domain(), grid_resolution, level)?;

    let mut critical_warning = false;
    let mut components = Vec::with_capacity(raw.len());
    for comp in raw {
        let mut geometry = Vec::with_capacity(comp.vertices.len());
        let mut max_level_residual = 0.0f64;
        for v in &comp.vertices {
            max_level_residual = max_level_residual.max((f.eval(v) - level).abs());
            match hypersurface_at(f, chart, v) {
                Ok(hs) => {
                    let (ambient, gauss, intrinsic, resid) = if n == 3 {
                        let cur = curvature_at(chart, v)?;
                        let pi = intrinsic_from_parts(&hs, &cur);
                        (
                            Some(pi.ambient_sectional),
                            Some(pi.gauss),
                            Some(pi.intrinsic),
                            Some(pi.gauss_identity_residual),
                        )
                    } else {
                        (None, None, None, None)
                    };
                    geometry.push(VertexGeometry {
                        normal: hs.normal_contra.iter().cloned().collect(),
                        mean_curvature: hs.mean,
                        principal: hs.principal,
                        ambient_sectional: ambient,
                        gauss_curvature: gauss,
                        intrinsic_curvature: intrinsic,
                        gauss_identity_residual: resid,
                    });
                }
                Err(Error::FieldEvaluation { .. }) => {
                    critical_warning = true;
                    geometry.push(VertexGeometry {
                        normal: vec![f64::NAN; n],
                        mean_curvature: f64::NAN,
                        principal: vec![f64::NAN; n - 1],
                        ambient_sectional: None,
                        gauss_curvature: None,
                        intrinsic_curvature: None,
                        gauss_identity_residual: None,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        components.push(FiberComponent {
            vertices: comp.vertices,
            faces: comp.faces,
            geometry,
            euler: comp.euler,
            clipped: comp.clipped,
            max_level_residual,
        });
    }
    Ok(FiberMesh { level, components, critical_warning })
}

/// Coefficient of variation with an absolute floor on the denominator so that
/// identically-zero samples register as constant rather than 0/0.
fn floored_cv(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return f64::NAN;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let max_abs = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let denom = mean.abs().max(CLASSIFY_CV_TOL * (max_abs + 1.0));
    var.sqrt() / denom
}

/// CVs of the curvature power sums Σᵢ kᵢ^j over the mesh, j = 1..=max_power.
pub fn power_sum_constancy(comp: &FiberComponent, max_power: usize) -> Vec<f64> {
    (1..=max_power)
        .map(|j| {
            let vals: Vec<f64> = comp
                .geometry
                .iter()
                .filter(|g| g.is_valid())
                .map(|g| g.principal.iter().map(|k| k.powi(j as i32)).sum::<f64>())
                .collect();
            floored_cv(&vals)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberClass {
    Sphere,
    Plane,
    Cylinder,
    /// Constant principal curvatures on a non-flat chart (no model label).
    ConstantPrincipal,
    NonConstant,
}

impl std::fmt::Display for FiberClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FiberClass::Sphere => "sphere",
            FiberClass::Plane => "plane",
            FiberClass::Cylinder => "cylinder",
            FiberClass::ConstantPrincipal => "constant-principal-curvatures",
            FiberClass::NonConstant => "non-constant",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub label: FiberClass,
    /// Fitted radius of the curved factor b·S^p (sphere/cylinder only).
    pub b: Option<f64>,
    /// Curved directions.
    pub p: usize,
    /// Flat directions.
    pub q: usize,
    /// Max per-curvature coefficient of variation over the mesh.
    pub curvature_cv: f64,
    /// Max |kᵢ(vertex) − mean kᵢ| over the mesh.
    pub residual: f64,
    /// Verdict computed on a clipped mesh (attempted, flagged).
    pub clipped: bool,
}

/// Classify one fiber component against the b·S^p × R^q family. Model labels
/// (sphere/plane/cylinder) are emitted on the flat chart only; a non-flat
/// chart can still earn "constant-principal-curvatures".
pub fn classify_fiber(comp: &FiberComponent, chart: &MetricChart) -> ClassificationReport {
    let m = chart.dimension() - 1;
    let valid: Vec<&VertexGeometry> = comp.geometry.iter().filter(|g| g.is_valid()).collect();
    if valid.is_empty() {
        return ClassificationReport {
            label: FiberClass::NonConstant,
            b: None,
            p: 0,
            q: 0,
            curvature_cv: f64::NAN,
            residual: f64::NAN,
            clipped: comp.clipped,
        };
    }

    let mut means = vec![0.0f64; m];
    let mut cv = 0.0f64;
    let mut residual = 0.0f64;
    for i in 0..m {
        let vals: Vec<f64> = valid.iter().map(|g| g.principal[i]).collect();
        means[i] = vals.iter().sum::<f64>() / vals.len() as f64;
        cv = cv.max(floored_cv(&vals));
        residual = residual
            .max(vals.iter().fold(0.0f64, |r, v| r.max((v - means[i]).abs())));
    }

    if !cv.is_finite() || cv > CLASSIFY_CV_TOL {
        return ClassificationReport {
            label: FiberClass::NonConstant,
            b: None,
            p: 0,
            q: 0,
            curvature_cv: cv,
            residual,
            clipped: comp.clipped,
        };
    }

    let max_k = means.iter().fold(0.0f64, |r, v| r.max(v.abs()));
    let zero_tol = ZERO_CURVATURE_FACTOR * (max_k + 1.0);
    let nonzero: Vec<f64> = means.iter().cloned().filter(|k| k.abs() >= zero_tol).collect();
    let q = m - nonzero.len();
    let p = m - q;

    if !chart.is_flat() {
        return ClassificationReport {
            label: FiberClass::ConstantPrincipal,
            b: None,
            p,
            q,
            curvature_cv: cv,
            residual,
            clipped: comp.clipped,
        };
    }

    // the p curved directions must share one curvature for a model label
    if !nonzero.is_empty() {
        let spread = nonzero.iter().fold(f64::NEG_INFINITY, |r, v| r.max(*v))
            - nonzero.iter().fold(f64::INFINITY, |r, v| r.min(*v));
        if spread > zero_tol {
            return ClassificationReport {
                label: FiberClass::ConstantPrincipal,
                b: None,
                p,
                q,
                curvature_cv: cv,
                residual,
                clipped: comp.clipped,
            };
        }
    }

    let (label, b) = if p == 0 {
        (FiberClass::Plane, None)
    } else {
        let kbar = nonzero.iter().map(|k| k.abs()).sum::<f64>() / nonzero.len() as f64;
        (if q == 0 { FiberClass::Sphere } else { FiberClass::Cylinder }, Some(1.0 / kbar))
    };
    ClassificationReport { label, b, p, q, curvature_cv: cv, residual, clipped: comp.clipped }
}

/// Parallel-fiber distances and the pre-geodesic property of ∇f.
#[derive(Debug, Clone)]
pub struct ParallelismReport {
    /// Δλ = ∫ df/ω(f): level-parameter gap.
    pub lambda_gap: f64,
    /// Δs = ∫ df/√ω(f): geodesic distance between the fibers.
    pub geodesic_distance: f64,
    /// max ‖D_{∇f}∇f − (ω′/2)∇f‖_g over sampled fiber points.
    pub pre_geodesic_max_residual: f64,
    /// max |s* − Δs| over normal-line shots that reached the far fiber.
    pub shooting_max_deviation: f64,
    pub shots: usize,
    pub shots_dropped: usize,
}

fn adaptive_simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(g: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = g(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        g: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(g, a, fa, m, fm);
        let (right, rm, frm) = simpson(g, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(g, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(g, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = g(a);
    let fb = g(b);
    let (whole, m, fm) = simpson(g, a, fa, b, fb);
    recurse(g, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// Fourth-order step of x' = n(x) (unit normal field along +∇f).
fn rk4_normal_step(
    f: &ScalarField,
    chart: &MetricChart,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let dir = |p: &[f64]| -> Result<DVector<f64>> {
        let hs = hypersurface_at(f, chart, p)?;
        Ok(hs.normal_contra)
    };
    let n = x.len();
    let x0 = DVector::from_column_slice(x);
    let k1 = dir(x)?;
    let mk = |v: &DVector<f64>| -> Vec<f64> { v.iter().cloned().collect() };
    let k2 = dir(&mk(&(&x0 + &k1 * (0.5 * h))))?;
    let k3 = dir(&mk(&(&x0 + &k2 * (0.5 * h))))?;
    let k4 = dir(&mk(&(&x0 + &k3 * h)))?;
    let out = &x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let mut res = vec![0.0; n];
    for i in 0..n {
        res[i] = out[i];
    }
    Ok(res)
}

/// Distances between the fibers {f = c1} and {f = c2} from the level
/// profiles, with independent residual and shooting cross-checks.
pub fn geodesic_offset(
    f: &ScalarField,
    chart: &MetricChart,
    c1: f64,
    c2: f64,
    profile: &EquilibriumProfile,
) -> Result<ParallelismReport> {
    let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
    let (plo, phi) = profile.level_range();
    if lo < plo || hi > phi {
        return Err(Error::ProfileRange { lo, hi });
    }
    // ω must stay positive on the interval: a zero is a critical value
    let mut omega_min = f64::INFINITY;
    let mut omega_max = 0.0f64;
    for i in 0..=512 {
        let t = lo + (hi - lo) * i as f64 / 512.0;
        let w = profile.omega_at(t)?;
        omega_min = omega_min.min(w);
        omega_max = omega_max.max(w);
    }
    if omega_min <= 1e-12 * omega_max.max(1.0) {
        return Err(Error::CriticalInInterval { lo, hi });
    }

    let lambda_gap =
        adaptive_simpson(&|t| 1.0 / profile.omega_at(t).unwrap_or(f64::NAN), lo, hi, 1e-12);
    let geodesic_distance = adaptive_simpson(
        &|t| 1.0 / profile.omega_at(t).unwrap_or(f64::NAN).sqrt(),
        lo,
        hi,
        1e-12,
    );
    if !lambda_gap.is_finite() || !geodesic_distance.is_finite() {
        return Err(Error::Geometry("profile quadrature produced a non-finite value".into()));
    }

    // sample points of the near fiber for the residual and shooting checks
    let eval = |p: &[f64]| f.eval(p);
    let raw = extract_level_set(&eval, chart.domain(), 48, lo)?;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    'outer: for comp in &raw {
        let stride = (comp.vertices.len() / 50).max(1);
        for v in comp.vertices.iter().step_by(stride) {
            starts.push(v.clone());
            if starts.len() >= 50 {
                break 'outer;
            }
        }
    }

    // ‖D_{∇f}∇f − (ω′/2)∇f‖_g at the sampled points
    let mut pre_geodesic_max_residual = 0.0f64;
    for p in &starts {
        let jet = f.jet_at(p)?;
        let mj = chart.metric_jet(p)?;
        let gamma = christoffel_from_jet(&mj);
        let n = p.len();
        let fa = &jet.grad;
        let f_up = &mj.g_inv * fa;
        // d_b f^a = (d_b g^{ac}) f_c + g^{ac} f_cb
        let mut acc = DVector::zeros(n);
        for a in 0..n {
            let mut s = 0.0;
            for b in 0..n {
                let mut dbfa = 0.0;
                for c in 0..n {
                    let mut dginv = 0.0;
                    for mm in 0..n {
                        for nn in 0..n {
                            dginv -= mj.g_inv[(a, mm)] * mj.g_inv[(c, nn)] * mj.dg.get(mm, nn, b);
                        }
                    }
                    dbfa += dginv * fa[c] + mj.g_inv[(a, c)] * jet.hess[(c, b)];
                }
                let mut gam = 0.0;
                for e in 0..n {
                    gam += gamma.get(a, b, e) * f_up[e];
                }
                s += f_up[b] * (dbfa + gam);
            }
            acc[a] = s;
        }
        let omega_prime = profile.omega_prime_at(f.eval(p))?;
        let r = &acc - &f_up * (0.5 * omega_prime);
        let norm2 = (r.transpose() * &mj.g * &r)[(0, 0)];
        pre_geodesic_max_residual = pre_geodesic_max_residual.max(norm2.max(0.0).sqrt());
    }

    // shoot the normal line from 10 near-fiber points and compare arc length
    let mut shots = 0usize;
    let mut shots_dropped = 0usize;
    let mut shooting_max_deviation = 0.0f64;
    let step = geodesic_distance / 100.0;
    let max_steps = 250usize;
    let stride = (starts.len() / 10).max(1);
    for start in starts.iter().step_by(stride).take(10) {
        let mut x = start.clone();
        let mut s = 0.0f64;
        let mut ok = false;
        for _ in 0..max_steps {
            if !chart.contains(&x) {
                break;
            }
            let next = match rk4_normal_step(f, chart, &x, step) {
                Ok(v) => v,
                Err(_) => break,
            };
            if !chart.contains(&next) {
                break;
            }
            if f.eval(&next) >= hi {
                // refine the crossing by bisection on the step fraction
                let (mut a, mut b) = (0.0f64, 1.0f64);
                for _ in 0..48 {
                    let mid = 0.5 * (a + b);
                    let probe = match rk4_normal_step(f, chart, &x, step * mid) {
                        Ok(v) => v,
                        Err(_) => break,
                    };
                    if f.eval(&probe) >= hi {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                s += step * 0.5 * (a + b);
                ok = true;
                break;
            }
            x = next;
            s += step;
        }
        if ok {
            shots += 1;
            shooting_max_deviation = shooting_max_deviation.max((s - geodesic_distance).abs());
        } else {
            shots_dropped += 1;
        }
    }

    Ok(ParallelismReport {
        lambda_gap,
        geodesic_distance,
        pre_geodesic_max_residual,
        shooting_max_deviation,
        shots,
        shots_dropped,
    })
}

#[derive(Debug, Clone)]
pub struct ParallelCurvatureReport {
    /// max over matched pairs and i of |kᵢ′ − kᵢ/(1 + r kᵢ)|.
    pub max_principal_residual: f64,
    /// max over matched pairs of |H′ − Σᵢ kᵢ/(1 + r kᵢ)|.
    pub max_mean_residual: f64,
    pub pairs: usize,
    pub dropped: usize,
}

/// Check the parallel-offset curvature relation between two fibers a geodesic
/// distance r apart (r > 0 along +∇f). Points are matched by walking the
/// straight normal line, which is exact on the flat chart.
pub fn parallel_curvature_check(
    fiber1: &FiberMesh,
    fiber2: &FiberMesh,
    r: f64,
    chart: &MetricChart,
) -> Result<ParallelCurvatureReport> {
    if !chart.is_flat() {
        return Err(Error::Geometry(
            "straight-line normal matching requires the flat chart".into(),
        ));
    }
    let far: Vec<(&Vec<f64>, &VertexGeometry)> = fiber2
        .components
        .iter()
        .flat_map(|c| c.vertices.iter().zip(&c.geometry))
        .filter(|(_, g)| g.is_valid())
        .collect();
    if far.is_empty() {
        return Err(Error::Geometry("far fiber has no regular vertices".into()));
    }

    let mut pairs = 0usize;
    let mut dropped = 0usize;
    let mut max_principal_residual = 0.0f64;
    let mut max_mean_residual = 0.0f64;

    for comp in &fiber1.components {
        let stride = (comp.vertices.len() / 160).max(1);
        for (v, g) in comp.vertices.iter().zip(&comp.geometry).step_by(stride) {
            if !g.is_valid() {
                dropped += 1;
                continue;
            }
            let y: Vec<f64> = v.iter().zip(&g.normal).map(|(x, n)| x + r * n).collect();
            if !chart.contains(&y) {
                dropped += 1;
                continue;
            }
            if g.principal.iter().any(|k| (1.0 + r * k).abs() < 1e-9) {
                dropped += 1; // focal point of the offset map
                continue;
            }
            // nearest far-fiber vertex
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, (w, _)) in far.iter().enumerate() {
                let d: f64 = w.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            let gf = far[best].1;
            let predicted: Vec<f64> = {
                let mut p: Vec<f64> =
                    g.principal.iter().map(|k| k / (1.0 + r * k)).collect();
                p.sort_by(f64::total_cmp);
                p
            };
            for (pk, fk) in predicted.iter().zip(&gf.principal) {
                max_principal_residual = max_principal_residual.max((pk - fk).abs());
            }
            let mean_pred: f64 = predicted.iter().sum();
            max_mean_residual =
                max_mean_residual.max((gf.mean_curvature - mean_pred).abs());
            pairs += 1;
        }
    }
    Ok(ParallelCurvatureReport { max_principal_residual, max_mean_residual, pairs, dropped })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyVerdict {
    Invariant,
    Varies,
    IndeterminateClipped,
}

#[derive(Debug, Clone)]
pub struct TopologyReport {
    /// Per level: sorted Euler characteristics of the components.
    pub per_level: Vec<(f64, Vec<i64>)>,
    pub verdict: TopologyVerdict,
}

/// Euler characteristics of {f = c} across levels: components of a regular
/// interval must not change topology.
pub fn topology_invariance(
    f: &ScalarField,
    chart: &MetricChart,
    levels: &[f64],
    grid_resolution: usize,
) -> Result<TopologyReport> {
    if levels.is_empty() {
        return Err(Error::Config("topology check needs at least one level".into()));
    }
    let eval = |p: &[f64]| f.eval(p);
    let mut per_level = Vec::with_capacity(levels.len());
    let mut any_clipped = false;
    for &c in levels {
        let comps = extract_level_set(&eval, chart.domain(), grid_resolution, c)?;
        any_clipped |= comps.iter().any(|k| k.clipped);
        let mut chars: Vec<i64> = comps.iter().map(|k| k.euler).collect();
        chars.sort_unstable();
        per_level.push((c, chars));
    }
    let verdict = if any_clipped {
        TopologyVerdict::IndeterminateClipped
    } else if per_level.iter().all(|(_, c)| *c == per_level[0].1) {
        TopologyVerdict::Invariant
    } else {
        TopologyVerdict::Varies
    };
    Ok(TopologyReport { per_level, verdict })
}
