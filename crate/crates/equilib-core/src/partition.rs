//! Fibrewise agreement, the equilibrium-function test, profile recovery, the
//! m-function generalization, and the free-boundary elliptic residual checker.
//!
//! The central numerical surrogate: scalars agree fibrewise iff their stacked
//! coordinate-gradient matrix has numerical rank <= the number of independent
//! base functions, witnessed by the singular-value ratio at every sample.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{SampleCloud, ScalarField};
use crate::geometry::{christoffel_derivatives, christoffel_from_jet, laplace_from_jets, MetricChart};
use crate::halton::BoxSampler;
use crate::jet::Jet3;

/// Relative singular-value threshold when all inputs carry closed-form jets.
pub const RANK_TOL_ANALYTIC: f64 = 1e-6;
/// Threshold when any input uses finite-difference jets.
pub const RANK_TOL_NUMERIC: f64 = 1e-3;

/// Default tolerance for a set of fields, by jet supplier kind.
pub fn default_rank_tol(fields: &[&ScalarField]) -> f64 {
    if fields.iter().all(|f| f.has_analytic_jets()) {
        RANK_TOL_ANALYTIC
    } else {
        RANK_TOL_NUMERIC
    }
}

#[derive(Debug, Clone)]
pub struct FibrewiseReport {
    pub pass: bool,
    /// Largest sigma_{k+1}/sigma_1 over samples, k the allowed rank.
    pub max_rank_ratio: f64,
    pub worst_point: Vec<f64>,
    pub fraction_failing: f64,
    pub samples: usize,
    /// Allowed numerical rank (1 for pairwise/equilibrium, m for m functions).
    pub rank_bound: usize,
}

/// Rank test over a cloud: at each point, `rows` supplies the stacked
/// coordinate gradients; the point passes iff sigma_{k+1} <= tol * max(sigma_1,
/// eps_grad) with k = rank_bound.
fn stacked_rank_report(
    cloud: &SampleCloud,
    rank_bound: usize,
    tol: f64,
    mut rows: impl FnMut(&[f64]) -> Result<Vec<DVector<f64>>>,
) -> Result<FibrewiseReport> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut failing = 0usize;
    let mut max_ratio = 0.0f64;
    let mut worst_point = cloud.points[0].clone();
    for p in &cloud.points {
        let rs = rows(p)?;
        let n = rs[0].len();
        if rs.len() <= rank_bound {
            continue; // cannot exceed the allowed rank
        }
        let mut m = DMatrix::zeros(rs.len(), n);
        for (i, r) in rs.iter().enumerate() {
            m.set_row(i, &r.transpose());
        }
        let mut sv: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let s1 = sv[0];
        let sk = sv.get(rank_bound).copied().unwrap_or(0.0);
        let ratio = if s1 > 0.0 { sk / s1 } else { 0.0 };
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_point = p.clone();
        }
        if sk > tol * s1.max(cloud.eps_grad) {
            failing += 1;
        }
    }
    let fraction_failing = failing as f64 / cloud.points.len() as f64;
    Ok(FibrewiseReport {
        pass: failing == 0,
        max_rank_ratio: max_ratio,
        worst_point,
        fraction_failing,
        samples: cloud.points.len(),
        rank_bound,
    })
}

/// Two scalars agree fibrewise iff [grad f; grad g] has numerical rank <= 1
/// at every sample.
pub fn fibrewise_agree(
    f: &ScalarField,
    g: &ScalarField,
    _chart: &MetricChart,
    cloud: &SampleCloud,
    tol: f64,
) -> Result<FibrewiseReport> {
    stacked_rank_report(cloud, 1, tol, |p| {
        Ok(vec![f.jet_at(p)?.grad, g.jet_at(p)?.grad])
    })
}

/// Value and exact coordinate gradient of the two derived scalars of f at a
/// point: u2 = |grad f|_g^2 and u3 = Laplace-Beltrami f.
///
/// d_a u2 = (d_a g^{bc}) f_b f_c + 2 g^{bc} f_ab f_c
/// d_a u3 = (d_a g^{bc})(f_bc - Gamma^d_bc f_d)
///        + g^{bc}(f_abc - (d_a Gamma^d_bc) f_d - Gamma^d_bc f_ad)
pub fn derived_values_and_gradients(
    f: &ScalarField,
    chart: &MetricChart,
    point: &[f64],
) -> Result<(Jet3, (f64, DVector<f64>), (f64, DVector<f64>))> {
    let jet = f.jet_at(point)?;
    let mj = chart.metric_jet(point)?;
    let n = chart.dimension();
    let gamma = christoffel_from_jet(&mj);
    let dgamma = christoffel_derivatives(&mj);

    // d_a g^{bc} = -g^{bm} g^{cn} dg_mn/dx^a
    let dginv = |b: usize, c: usize, a: usize| -> f64 {
        let mut s = 0.0;
        for m in 0..n {
            for k in 0..n {
                s -= mj.g_inv[(b, m)] * mj.g_inv[(c, k)] * mj.dg.get(m, k, a);
            }
        }
        s
    };

    let mut u2 = 0.0;
    for b in 0..n {
        for c in 0..n {
            u2 += mj.g_inv[(b, c)] * jet.grad[b] * jet.grad[c];
        }
    }
    let mut du2 = DVector::zeros(n);
    for a in 0..n {
        let mut s = 0.0;
        for b in 0..n {
            for c in 0..n {
                s += dginv(b, c, a) * jet.grad[b] * jet.grad[c]
                    + 2.0 * mj.g_inv[(b, c)] * jet.hess[(a, b)] * jet.grad[c];
            }
        }
        du2[a] = s;
    }

    let u3 = laplace_from_jets(&mj, &jet);
    let mut du3 = DVector::zeros(n);
    for a in 0..n {
        let mut s = 0.0;
        for b in 0..n {
            for c in 0..n {
                let mut covar = jet.hess[(b, c)];
                for d in 0..n {
                    covar -= gamma.get(d, b, c) * jet.grad[d];
                }
                let mut dcovar = jet.third.get(a, b, c);
                for d in 0..n {
                    dcovar -= dgamma.get(d, b, c, a) * jet.grad[d]
                        + gamma.get(d, b, c) * jet.hess[(a, d)];
                }
                s += dginv(b, c, a) * covar + mj.g_inv[(b, c)] * dcovar;
            }
        }
        du3[a] = s;
    }

    Ok((jet, (u2, du2), (u3, du3)))
}

/// The derived scalars of f as fields. Value and first derivatives are exact;
/// hess/third are zero placeholders — suitable for rank tests and profile
/// recovery only, never for second-derivative work.
pub fn derived_fields(f: &ScalarField, chart: &MetricChart) -> (ScalarField, ScalarField) {
    let n = chart.dimension();
    let (f2, c2) = (f.clone(), chart.clone());
    let u2 = ScalarField::analytic(&format!("grad_norm_sq({})", f.label()), n, move |p| {
        match derived_values_and_gradients(&f2, &c2, p) {
            Ok((_, (v, dv), _)) => Jet3 {
                value: v,
                grad: dv,
                hess: DMatrix::zeros(n, n),
                third: crate::tensor::Tensor3::zeros(n),
            },
            Err(_) => Jet3::constant(n, f64::NAN),
        }
    });
    let (f3, c3) = (f.clone(), chart.clone());
    let u3 = ScalarField::analytic(&format!("laplacian({})", f.label()), n, move |p| {
        match derived_values_and_gradients(&f3, &c3, p) {
            Ok((_, _, (v, dv))) => Jet3 {
                value: v,
                grad: dv,
                hess: DMatrix::zeros(n, n),
                third: crate::tensor::Tensor3::zeros(n),
            },
            Err(_) => Jet3::constant(n, f64::NAN),
        }
    });
    (u2, u3)
}

/// Equilibrium-function test: f, |grad f|^2 and Laplace f must agree
/// fibrewise, i.e. the 3 x n stacked-gradient matrix has rank <= 1 at every
/// sample. Exactly the m = 1 case of `m_equilibrium_test`.
pub fn equilibrium_test(
    f: &ScalarField,
    chart: &MetricChart,
    cloud: &SampleCloud,
    tol: f64,
) -> Result<FibrewiseReport> {
    m_equilibrium_test(std::slice::from_ref(f), chart, cloud, tol)
}

/// m-function generalization: stacks the coordinate gradients of all 3m
/// derived scalars (f_i, |grad f_i|^2, Laplace f_i) and requires numerical
/// rank <= m at every sample.
pub fn m_equilibrium_test(
    fields: &[ScalarField],
    chart: &MetricChart,
    cloud: &SampleCloud,
    tol: f64,
) -> Result<FibrewiseReport> {
    let m = fields.len();
    let n = chart.dimension();
    if m == 0 || m >= n {
        return Err(Error::UnsupportedDimension(format!(
            "m-equilibrium test needs 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    stacked_rank_report(cloud, m, tol, |p| {
        let mut rows = Vec::with_capacity(3 * m);
        for f in fields {
            let (jet, (_, du2), (_, du3)) = derived_values_and_gradients(f, chart, p)?;
            rows.push(jet.grad);
            rows.push(du2);
            rows.push(du3);
        }
        Ok(rows)
    })
}

#[derive(Debug, Clone)]
pub struct EquilibriumProfile {
    /// Bin centers: mean f per equal-count bin, ascending.
    pub levels: Vec<f64>,
    /// Bin means of |grad f|^2.
    pub omega: Vec<f64>,
    /// Within-bin constancy witness for omega: coefficient of variation of
    /// the linearly detrended residuals (insensitive to the profile's slope
    /// across the bin width).
    pub omega_cv: Vec<f64>,
    /// Bin means of Laplace f.
    pub psi: Vec<f64>,
    pub psi_cv: Vec<f64>,
    /// d omega / df over bin centers (non-uniform central differences).
    pub omega_prime: Vec<f64>,
    /// Precondition flag: the equilibrium test verdict on the same cloud.
    pub equilibrium_passed: bool,
    pub max_cv: f64,
}

impl EquilibriumProfile {
    pub fn level_range(&self) -> (f64, f64) {
        (self.levels[0], *self.levels.last().unwrap())
    }

    fn interp(&self, table: &[f64], level: f64) -> Result<f64> {
        let ls = &self.levels;
        if level < ls[0] || level > *ls.last().unwrap() {
            return Err(Error::ProfileRange { lo: level, hi: level });
        }
        let i = match ls.binary_search_by(|x| x.partial_cmp(&level).unwrap()) {
            Ok(i) => return Ok(table[i]),
            Err(i) => i.clamp(1, ls.len() - 1),
        };
        let t = (level - ls[i - 1]) / (ls[i] - ls[i - 1]);
        Ok(table[i - 1] * (1.0 - t) + table[i] * t)
    }

    pub fn omega_at(&self, level: f64) -> Result<f64> {
        self.interp(&self.omega, level)
    }

    pub fn psi_at(&self, level: f64) -> Result<f64> {
        self.interp(&self.psi, level)
    }

    pub fn omega_prime_at(&self, level: f64) -> Result<f64> {
        self.interp(&self.omega_prime, level)
    }
}

/// Recover omega(f) = |grad f|^2 and psi(f) = Laplace f as tabulated profiles
/// by equal-count binning of the cloud samples.
pub fn recover_profiles(
    f: &ScalarField,
    chart: &MetricChart,
    cloud: &SampleCloud,
    bins: usize,
) -> Result<EquilibriumProfile> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let count = cloud.points.len();
    if count < 3 * bins {
        return Err(Error::InsufficientSampling { needed: 3 * bins, got: count / bins.max(1) });
    }
    let tol = default_rank_tol(&[f]);
    let equilibrium_passed = equilibrium_test(f, chart, cloud, tol)?.pass;

    let mut samples: Vec<(f64, f64, f64)> = Vec::with_capacity(count);
    for p in &cloud.points {
        let (jet, (u2, _), (u3, _)) = derived_values_and_gradients(f, chart, p)?;
        samples.push((jet.value, u2, u3));
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let base = count / bins;
    let extra = count % bins;
    let mut levels = Vec::with_capacity(bins);
    let mut omega = Vec::with_capacity(bins);
    let mut omega_cv = Vec::with_capacity(bins);
    let mut psi = Vec::with_capacity(bins);
    let mut psi_cv = Vec::with_capacity(bins);
    let mut start = 0usize;
    for b in 0..bins {
        let size = base + if b < extra { 1 } else { 0 };
        let bin = &samples[start..start + size];
        start += size;
        let fs: Vec<f64> = bin.iter().map(|s| s.0).collect();
        let f_mean = mean(&fs);
        levels.push(f_mean);
        let (m2, cv2) = detrended_stats(&fs, &bin.iter().map(|s| s.1).collect::<Vec<_>>());
        let (m3, cv3) = detrended_stats(&fs, &bin.iter().map(|s| s.2).collect::<Vec<_>>());
        omega.push(m2);
        omega_cv.push(cv2);
        psi.push(m3);
        psi_cv.push(cv3);
    }

    let omega_prime = nonuniform_derivative(&levels, &omega);
    let max_cv = omega_cv
        .iter()
        .chain(&psi_cv)
        .fold(0.0f64, |a, &b| a.max(b));
    Ok(EquilibriumProfile {
        levels,
        omega,
        omega_cv,
        psi,
        psi_cv,
        omega_prime,
        equilibrium_passed,
        max_cv,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of `v` and the coefficient of variation of the residuals after a
/// least-squares linear fit in `x` — a slope-insensitive constancy witness.
fn detrended_stats(x: &[f64], v: &[f64]) -> (f64, f64) {
    let k = v.len();
    let xm = mean(x);
    let vm = mean(v);
    let mut sxx = 0.0;
    let mut sxv = 0.0;
    for i in 0..k {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxv += (x[i] - xm) * (v[i] - vm);
    }
    let beta = if sxx > 0.0 { sxv / sxx } else { 0.0 };
    let mut ss = 0.0;
    for i in 0..k {
        let r = v[i] - vm - beta * (x[i] - xm);
        ss += r * r;
    }
    let std = (ss / (k.max(2) - 1) as f64).sqrt();
    let cv = if std == 0.0 { 0.0 } else { std / vm.abs().max(1e-300) };
    (vm, cv)
}

/// First derivative of a table over non-uniform abscissae: 3-point parabolic
/// in the interior, 2-point one-sided at the ends.
fn nonuniform_derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    if n == 1 {
        return d;
    }
    d[0] = (y[1] - y[0]) / (x[1] - x[0]);
    d[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
    for i in 1..n - 1 {
        let hm = x[i] - x[i - 1];
        let hp = x[i + 1] - x[i];
        d[i] = (hm / (hp * (hm + hp))) * (y[i + 1] - y[i])
            + (hp / (hm * (hm + hp))) * (y[i] - y[i - 1]);
    }
    d
}

// ---------------------------------------------------------------------------
// Free-boundary elliptic residual checker
// ---------------------------------------------------------------------------

type Fn3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The free-boundary elliptic system: Laplace f1 = F(f1,f2,f3) and
/// H(f1) grad f3 + G(f2,f3) grad f1 = 0 on Omega = {mask > 0}, Laplace f1 = 0
/// outside, f1 = c on the free boundary.
#[derive(Clone)]
pub struct P1Problem {
    pub f_rhs: Fn3,
    pub g_coef: Fn2,
    pub h_coef: Fn1,
    pub omega_mask: ScalarField,
    pub boundary_level: f64,
}

impl P1Problem {
    pub fn new(
        f_rhs: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        g_coef: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        h_coef: impl Fn(f64) -> f64 + Send + Sync + 'static,
        omega_mask: ScalarField,
        boundary_level: f64,
    ) -> Self {
        P1Problem {
            f_rhs: Arc::new(f_rhs),
            g_coef: Arc::new(g_coef),
            h_coef: Arc::new(h_coef),
            omega_mask,
            boundary_level,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormPair {
    pub sup: f64,
    pub l2: f64,
}

#[derive(Debug, Clone)]
pub struct P1Report {
    /// |Laplace f1 - F(f1,f2,f3)| on Omega.
    pub interior_pde: NormPair,
    /// |H(f1) grad f3 + G(f2,f3) grad f1|_g on Omega.
    pub gradient_relation: NormPair,
    /// |Laplace f1| on the complement of closure(Omega).
    pub exterior_harmonic: NormPair,
    /// |f1 - c| at bisected free-boundary crossings.
    pub boundary_deviation: f64,
    pub boundary_crossings: usize,
    pub omega_nodes: usize,
    pub exterior_nodes: usize,
    /// Pairwise fibrewise verdicts among (f1,f2,f3) on Omega; None when no
    /// usable cloud exists (all fields critical on Omega).
    pub fibrewise_12: Option<FibrewiseReport>,
    pub fibrewise_13: Option<FibrewiseReport>,
    pub fibrewise_23: Option<FibrewiseReport>,
    /// Nondegeneracy data, reported but not enforced.
    pub g_partials_nonvanishing: bool,
    pub f2_max_abs: f64,
    pub f3_spread: f64,
}

/// Evaluation grid: `cells` cells per axis over the chart box.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub cells: usize,
}

pub fn p1_residuals(
    f1: &ScalarField,
    f2: &ScalarField,
    f3: &ScalarField,
    problem: &P1Problem,
    chart: &MetricChart,
    grid: GridSpec,
) -> Result<P1Report> {
    let n = chart.dimension();
    let domain = chart.domain();
    let res = grid.cells;
    if res < 2 {
        return Err(Error::Config("grid must have at least 2 cells per axis".into()));
    }
    let nodes_per_axis = res + 1;
    let steps: Vec<f64> = domain.iter().map(|r| (r[1] - r[0]) / res as f64).collect();
    let cell_volume: f64 = steps.iter().product();

    let node_coord = |idx: &[usize]| -> Vec<f64> {
        (0..n).map(|a| domain[a][0] + steps[a] * idx[a] as f64).collect()
    };

    let total: usize = nodes_per_axis.pow(n as u32);
    let unravel = |mut flat: usize| -> Vec<usize> {
        let mut idx = vec![0usize; n];
        for a in (0..n).rev() {
            idx[a] = flat % nodes_per_axis;
            flat /= nodes_per_axis;
        }
        idx
    };

    // classify nodes by the mask
    let mut mask_vals = vec![0.0f64; total];
    for flat in 0..total {
        let idx = unravel(flat);
        mask_vals[flat] = problem.omega_mask.eval(&node_coord(&idx));
    }

    let mut interior_sup = 0.0f64;
    let mut interior_ss = 0.0f64;
    let mut grad_sup = 0.0f64;
    let mut grad_ss = 0.0f64;
    let mut exterior_sup = 0.0f64;
    let mut exterior_ss = 0.0f64;
    let mut omega_nodes = 0usize;
    let mut exterior_nodes = 0usize;
    let mut f2_max_abs = 0.0f64;
    let mut f3_min = f64::INFINITY;
    let mut f3_max = f64::NEG_INFINITY;
    let mut f2_range = (f64::INFINITY, f64::NEG_INFINITY);

    for flat in 0..total {
        let idx = unravel(flat);
        let p = node_coord(&idx);
        let inside = mask_vals[flat] > 0.0;
        if inside {
            omega_nodes += 1;
            let j1 = f1.jet_at(&p)?;
            let j2 = f2.jet_at(&p)?;
            let j3 = f3.jet_at(&p)?;
            let mj = chart.metric_jet(&p)?;
            let lap = laplace_from_jets(&mj, &j1);
            let r31 = lap - (problem.f_rhs)(j1.value, j2.value, j3.value);
            interior_sup = interior_sup.max(r31.abs());
            let sqrt_det = mj.g.determinant().max(0.0).sqrt();
            interior_ss += r31 * r31 * cell_volume * sqrt_det;

            let h = (problem.h_coef)(j1.value);
            let g = (problem.g_coef)(j2.value, j3.value);
            let mut v = DVector::zeros(n);
            for a in 0..n {
                v[a] = h * j3.grad[a] + g * j1.grad[a];
            }
            let r32 = (&mj.g_inv * &v).dot(&v).max(0.0).sqrt();
            grad_sup = grad_sup.max(r32);
            grad_ss += r32 * r32 * cell_volume * sqrt_det;

            f2_max_abs = f2_max_abs.max(j2.value.abs());
            f3_min = f3_min.min(j3.value);
            f3_max = f3_max.max(j3.value);
            f2_range.0 = f2_range.0.min(j2.value);
            f2_range.1 = f2_range.1.max(j2.value);
        } else if mask_vals[flat] < 0.0 {
            exterior_nodes += 1;
            let j1 = f1.jet_at(&p)?;
            let mj = chart.metric_jet(&p)?;
            let lap = laplace_from_jets(&mj, &j1);
            exterior_sup = exterior_sup.max(lap.abs());
            let sqrt_det = mj.g.determinant().max(0.0).sqrt();
            exterior_ss += lap * lap * cell_volume * sqrt_det;
        }
    }

    if omega_nodes == 0 {
        return Err(Error::Geometry("the region {mask > 0} contains no grid nodes".into()));
    }

    // free-boundary crossings: bisect every sign-flipping grid edge
    let mut boundary_deviation = 0.0f64;
    let mut boundary_crossings = 0usize;
    // face contact is benign only in a translation-invariant direction
    let mut face_contact = vec![false; 2 * n];
    for flat in 0..total {
        let idx = unravel(flat);
        for axis in 0..n {
            if idx[axis] + 1 >= nodes_per_axis {
                continue;
            }
            let mut jdx = idx.clone();
            jdx[axis] += 1;
            let mut nf = 0usize;
            for a in 0..n {
                nf = nf * nodes_per_axis + jdx[a];
            }
            let a_in = mask_vals[flat] > 0.0;
            let b_in = mask_vals[nf] > 0.0;
            if a_in == b_in {
                continue;
            }
            // the region {mask > 0} must never end flush against the chart
            // boundary: a crossing edge whose inside endpoint sits on the
            // perpendicular face means the box truncates the region
            if (a_in && idx[axis] == 0) || (b_in && jdx[axis] == nodes_per_axis - 1) {
                return Err(Error::Geometry(
                    "free boundary of {mask > 0} touches the chart boundary".into(),
                ));
            }
            for a in 0..n {
                if a == axis {
                    continue;
                }
                if idx[a] == 0 {
                    face_contact[2 * a] = true;
                }
                if idx[a] == nodes_per_axis - 1 {
                    face_contact[2 * a + 1] = true;
                }
            }
            let pa = node_coord(&idx);
            let pb = node_coord(&jdx);
            let crossing = bisect_predicate(
                |t| {
                    let x: Vec<f64> =
                        (0..n).map(|a| pa[a] + t * (pb[a] - pa[a])).collect();
                    problem.omega_mask.eval(&x) > 0.0
                },
                a_in,
            );
            let x: Vec<f64> = (0..n).map(|a| pa[a] + crossing * (pb[a] - pa[a])).collect();
            let dev = (f1.eval(&x) - problem.boundary_level).abs();
            boundary_deviation = boundary_deviation.max(dev);
            boundary_crossings += 1;
        }
    }

    // A face cut by the free boundary is tolerated only when the in/out
    // pattern repeats on the adjacent interior layer: the region passes
    // straight through (cylinder or slab axis) rather than being truncated.
    let stride = |a: usize| nodes_per_axis.pow((n - 1 - a) as u32);
    for a in 0..n {
        for (side, layer) in [(0usize, 0usize), (1usize, nodes_per_axis - 1)] {
            if !face_contact[2 * a + side] {
                continue;
            }
            let inner_offset = if side == 0 { stride(a) as isize } else { -(stride(a) as isize) };
            for flat in 0..total {
                let idx = unravel(flat);
                if idx[a] != layer {
                    continue;
                }
                let inner = (flat as isize + inner_offset) as usize;
                if (mask_vals[flat] > 0.0) != (mask_vals[inner] > 0.0) {
                    return Err(Error::Geometry(
                        "free boundary of {mask > 0} touches the chart boundary".into(),
                    ));
                }
            }
        }
    }

    // Lemma: the triplet must agree pairwise fibrewise on Omega.
    let cloud = omega_cloud(&problem.omega_mask, f1, chart, 400, 2024)?;
    let (fib12, fib13, fib23) = match &cloud {
        Some(c) => {
            let tol = default_rank_tol(&[f1, f2, f3]);
            (
                Some(fibrewise_agree(f1, f2, chart, c, tol)?),
                Some(fibrewise_agree(f1, f3, chart, c, tol)?),
                Some(fibrewise_agree(f2, f3, chart, c, tol)?),
            )
        }
        None => (None, None, None),
    };

    // G-partials nondegeneracy over the sampled (f2, f3) rectangle.
    let g_partials_nonvanishing = {
        let (lo2, hi2) = f2_range;
        let (lo3, hi3) = (f3_min, f3_max);
        let du = (hi2 - lo2).max(1e-6) * 1e-4;
        let dv = (hi3 - lo3).max(1e-6) * 1e-4;
        let mut ok_u = true;
        let mut ok_v = true;
        for i in 0..3 {
            for j in 0..3 {
                let u = lo2 + (hi2 - lo2) * i as f64 / 2.0;
                let v = lo3 + (hi3 - lo3) * j as f64 / 2.0;
                let gu = ((problem.g_coef)(u + du, v) - (problem.g_coef)(u - du, v)) / (2.0 * du);
                let gv = ((problem.g_coef)(u, v + dv) - (problem.g_coef)(u, v - dv)) / (2.0 * dv);
                if gu.abs() < 1e-10 {
                    ok_u = false;
                }
                if gv.abs() < 1e-10 {
                    ok_v = false;
                }
            }
        }
        ok_u && ok_v
    };

    let norm = |ss: f64| ss.max(0.0).sqrt();
    Ok(P1Report {
        interior_pde: NormPair { sup: interior_sup, l2: norm(interior_ss) },
        gradient_relation: NormPair { sup: grad_sup, l2: norm(grad_ss) },
        exterior_harmonic: NormPair { sup: exterior_sup, l2: norm(exterior_ss) },
        boundary_deviation,
        boundary_crossings,
        omega_nodes,
        exterior_nodes,
        fibrewise_12: fib12,
        fibrewise_13: fib13,
        fibrewise_23: fib23,
        g_partials_nonvanishing,
        f2_max_abs,
        f3_spread: if f3_max >= f3_min { f3_max - f3_min } else { 0.0 },
    })
}

/// Parameter t in [0,1] where the boolean predicate flips, by bisection
/// (works for smooth sign changes and hard indicator jumps alike).
fn bisect_predicate(pred: impl Fn(f64) -> bool, at_zero: bool) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if pred(mid) == at_zero {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Halton cloud restricted to {mask > 0}, rejecting near-critical points of
/// `grad_ref`. Returns None instead of failing when the field is critical on
/// essentially all of Omega (e.g. identically constant data).
fn omega_cloud(
    mask: &ScalarField,
    grad_ref: &ScalarField,
    chart: &MetricChart,
    count: usize,
    seed: u64,
) -> Result<Option<SampleCloud>> {
    let eps_grad = 1e-9;
    let mut sampler = BoxSampler::new(chart.domain(), seed);
    let mut p = Vec::new();
    let mut points = Vec::with_capacity(count);
    let mut in_omega: u64 = 0;
    let budget = (count as u64) * 400 + 2000;
    for _ in 0..budget {
        if points.len() >= count {
            break;
        }
        sampler.next_point(&mut p);
        if mask.eval(&p) <= 0.0 {
            continue;
        }
        in_omega += 1;
        let jet = match grad_ref.jet_at(&p) {
            Ok(j) => j,
            Err(_) => continue,
        };
        match chart.grad_norm_sq(&jet, &p) {
            Ok(g2) if g2.sqrt() >= eps_grad => points.push(p.clone()),
            _ => continue,
        }
    }
    if points.len() < 8 {
        if in_omega > 0 {
            return Ok(None); // Omega exists but the reference field is critical there
        }
        return Err(Error::Geometry("the region {mask > 0} contains no sample points".into()));
    }
    Ok(Some(SampleCloud { points, exclusion_radius: 0.0, seed, eps_grad }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_domain;
    use crate::jet::Profile1d;
    use crate::tensor::Tensor3;
    use approx::assert_relative_eq;

    fn flat3() -> MetricChart {
        MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3])
    }

    fn cloud_for(f: &ScalarField, chart: &MetricChart, n: usize) -> SampleCloud {
        sample_domain(f, chart, n, 7, 1e-3).unwrap()
    }

    #[test]
    fn fibrewise_dependent_pair_passes() {
        let chart = flat3();
        let f = ScalarField::norm_sq(3);
        let g = f.compose(&Profile1d::new("t^2", |t| {
            [t * t, 2.0 * t, 2.0, 0.0]
        })); // |x|^4
        let cloud = cloud_for(&f, &chart, 500);
        let rep = fibrewise_agree(&f, &g, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        assert!(rep.pass);
        assert!(rep.max_rank_ratio < 1e-10, "ratio = {}", rep.max_rank_ratio);
        assert_eq!(rep.fraction_failing, 0.0);
    }

    #[test]
    fn fibrewise_independent_coordinates_fail_maximally() {
        let chart = flat3();
        let f = ScalarField::coordinate(0, 3);
        let g = ScalarField::coordinate(1, 3);
        let cloud = cloud_for(&f, &chart, 200);
        let rep = fibrewise_agree(&f, &g, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        assert!(!rep.pass);
        assert_relative_eq!(rep.max_rank_ratio, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rep.fraction_failing, 1.0);
    }

    #[test]
    fn fibrewise_cross_term_perturbation_fails() {
        let chart = flat3();
        let f = ScalarField::cyl_r2(3);
        let g = ScalarField::analytic("cyl+xy", 3, |p| {
            let value = p[0] * p[0] + p[1] * p[1] + 0.1 * p[0] * p[1];
            let grad = DVector::from_column_slice(&[
                2.0 * p[0] + 0.1 * p[1],
                2.0 * p[1] + 0.1 * p[0],
                0.0,
            ]);
            let mut hess = DMatrix::zeros(3, 3);
            hess[(0, 0)] = 2.0;
            hess[(1, 1)] = 2.0;
            hess[(0, 1)] = 0.1;
            hess[(1, 0)] = 0.1;
            Jet3 { value, grad, hess, third: Tensor3::zeros(3) }
        });
        let cloud = cloud_for(&f, &chart, 300);
        let rep = fibrewise_agree(&f, &g, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        assert!(!rep.pass);
        assert!(rep.fraction_failing > 0.5);
    }

    #[test]
    fn fibrewise_empty_cloud_errors() {
        let chart = flat3();
        let f = ScalarField::norm_sq(3);
        let empty = SampleCloud { points: vec![], exclusion_radius: 0.0, seed: 0, eps_grad: 1e-3 };
        match fibrewise_agree(&f, &f, &chart, &empty, 1e-6) {
            Err(Error::EmptyCloud) => {}
            other => panic!("expected EmptyCloud, got {other:?}"),
        }
    }

    #[test]
    fn equilibrium_catalog_passes_on_flat_chart() {
        let chart = flat3();
        for f in [
            ScalarField::linear(&[1.0, -2.0, 0.5]),
            ScalarField::norm_sq(3),
            ScalarField::cyl_r2(3),
            ScalarField::z_cubed(3),
            ScalarField::exp_cyl(3),
        ] {
            let cloud = cloud_for(&f, &chart, 500);
            let rep = equilibrium_test(&f, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
            assert!(rep.pass, "{} failed: ratio {}", f.label(), rep.max_rank_ratio);
        }
    }

    #[test]
    fn equilibrium_anisotropic_quadratic_fails() {
        let chart = flat3();
        let f = ScalarField::analytic("x^2+2y^2", 3, |p| {
            let value = p[0] * p[0] + 2.0 * p[1] * p[1];
            let grad = DVector::from_column_slice(&[2.0 * p[0], 4.0 * p[1], 0.0]);
            let mut hess = DMatrix::zeros(3, 3);
            hess[(0, 0)] = 2.0;
            hess[(1, 1)] = 4.0;
            Jet3 { value, grad, hess, third: Tensor3::zeros(3) }
        });
        let cloud = cloud_for(&f, &chart, 400);
        let rep = equilibrium_test(&f, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        assert!(!rep.pass);
        assert!(rep.fraction_failing > 0.5, "fraction = {}", rep.fraction_failing);
        assert!(rep.max_rank_ratio > 1e-2);
    }

    #[test]
    fn equilibrium_on_curved_charts() {
        // |x|^2 is an equilibrium function on the rotationally symmetric
        // curved models: all derived scalars are radial.
        for chart in [
            MetricChart::stereographic_sphere(1.0, 3).with_domain(vec![[-1.5, 1.5]; 3]),
            MetricChart::poincare_ball(-1.0, 3),
        ] {
            let f = ScalarField::norm_sq(3);
            let cloud = cloud_for(&f, &chart, 400);
            let rep = equilibrium_test(&f, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
            assert!(rep.pass, "{} ratio {}", chart.label(), rep.max_rank_ratio);
        }
    }

    #[test]
    fn derived_gradients_match_finite_differences_on_curved_chart() {
        // The exact du2/du3 formulas against brute finite differences of the
        // pointwise-evaluated scalars, on a chart with nontrivial dg/d2g.
        let chart = MetricChart::stereographic_sphere(1.0, 3).with_domain(vec![[-1.5, 1.5]; 3]);
        let f = ScalarField::norm_sq(3);
        let p = [0.4, -0.3, 0.6];
        let (_, (u2, du2), (u3, du3)) = derived_values_and_gradients(&f, &chart, &p).unwrap();
        let h = 1e-4;
        for a in 0..3 {
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[a] += h;
            pm[a] -= h;
            let (_, (u2p, _), (u3p, _)) = derived_values_and_gradients(&f, &chart, &pp).unwrap();
            let (_, (u2m, _), (u3m, _)) = derived_values_and_gradients(&f, &chart, &pm).unwrap();
            assert_relative_eq!(du2[a], (u2p - u2m) / (2.0 * h), epsilon = 1e-6);
            assert_relative_eq!(du3[a], (u3p - u3m) / (2.0 * h), epsilon = 1e-6);
        }
        assert!(u2 > 0.0);
        assert!(u3.is_finite());
    }

    #[test]
    fn m_equals_one_is_bit_identical_to_equilibrium() {
        let chart = flat3();
        for f in [
            ScalarField::linear(&[0.3, 1.0, 0.0]),
            ScalarField::norm_sq(3),
            ScalarField::cyl_r2(3),
            ScalarField::z_cubed(3),
            ScalarField::exp_cyl(3),
            ScalarField::coordinate(2, 3),
        ] {
            let cloud = cloud_for(&f, &chart, 200);
            let a = equilibrium_test(&f, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
            let b =
                m_equilibrium_test(std::slice::from_ref(&f), &chart, &cloud, RANK_TOL_ANALYTIC)
                    .unwrap();
            assert_eq!(a.pass, b.pass);
            assert_eq!(a.max_rank_ratio.to_bits(), b.max_rank_ratio.to_bits());
            assert_eq!(a.worst_point, b.worst_point);
            assert_eq!(a.fraction_failing.to_bits(), b.fraction_failing.to_bits());
        }
    }

    #[test]
    fn m_two_cylinder_and_height_pass() {
        let chart = flat3();
        let f1 = ScalarField::cyl_r2(3);
        let f2 = ScalarField::coordinate(2, 3);
        let cloud = cloud_for(&f1, &chart, 300);
        let rep =
            m_equilibrium_test(&[f1, f2], &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        assert!(rep.pass, "ratio {}", rep.max_rank_ratio);
        assert_eq!(rep.rank_bound, 2);
    }

    #[test]
    fn m_two_coordinate_and_cubic_shear_rank_oracle() {
        // (f1, f2) = (x, y + x^3). Brute-force oracle: all six stacked
        // gradients lie in the z = 0 coordinate plane —
        //   grad f1 = (1,0,0); grad |grad f1|^2 = 0; grad(Lap f1) = 0;
        //   grad f2 = (3x^2,1,0); grad |grad f2|^2 = (36x^3,0,0);
        //   grad(Lap f2) = (6,0,0)
        // — so the third singular value is exactly zero and rank <= 2 holds
        // everywhere: the test passes.
        let chart = flat3();
        let f1 = ScalarField::coordinate(0, 3);
        let f2 = ScalarField::analytic("y+x^3", 3, |p| {
            let value = p[1] + p[0] * p[0] * p[0];
            let grad = DVector::from_column_slice(&[3.0 * p[0] * p[0], 1.0, 0.0]);
            let mut hess = DMatrix::zeros(3, 3);
            hess[(0, 0)] = 6.0 * p[0];
            let mut third = Tensor3::zeros(3);
            third.set(0, 0, 0, 6.0);
            Jet3 { value, grad, hess, third }
        });
        let cloud = cloud_for(&f1, &chart, 100);

        // independent oracle: SVD of the hand-written stack at every point
        for p in &cloud.points {
            let x = p[0];
            let rows = [
                [1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
                [3.0 * x * x, 1.0, 0.0],
                [36.0 * x * x * x, 0.0, 0.0],
                [6.0, 0.0, 0.0],
            ];
            let m = DMatrix::from_fn(6, 3, |i, j| rows[i][j]);
            let mut sv: Vec<f64> =
                m.svd(false, false).singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(sv[2] <= 1e-12 * sv[0].max(1.0), "oracle rank 3 at x = {x}");
        }

        let rep = m_equilibrium_test(&[f1, f2], &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        assert!(rep.pass, "oracle says rank <= 2 everywhere, ratio {}", rep.max_rank_ratio);
        assert!(rep.max_rank_ratio < 1e-10);
    }

    #[test]
    fn m_must_be_below_dimension() {
        let chart = flat3();
        let fs = vec![
            ScalarField::coordinate(0, 3),
            ScalarField::coordinate(1, 3),
            ScalarField::coordinate(2, 3),
        ];
        let cloud = cloud_for(&fs[0], &chart, 50);
        match m_equilibrium_test(&fs, &chart, &cloud, 1e-6) {
            Err(Error::UnsupportedDimension(_)) => {}
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn monotone_reparameterization_preserves_verdicts() {
        let chart = flat3();
        let cases: Vec<(ScalarField, bool)> = vec![
            (ScalarField::norm_sq(3), true),
            (ScalarField::cyl_r2(3), true),
            (
                ScalarField::analytic("x^2+2y^2", 3, |p| {
                    let value = p[0] * p[0] + 2.0 * p[1] * p[1];
                    let grad =
                        DVector::from_column_slice(&[2.0 * p[0], 4.0 * p[1], 0.0]);
                    let mut hess = DMatrix::zeros(3, 3);
                    hess[(0, 0)] = 2.0;
                    hess[(1, 1)] = 4.0;
                    Jet3 { value, grad, hess, third: Tensor3::zeros(3) }
                }),
                false,
            ),
        ];
        for (f, expect_pass) in cases {
            for tau in [Profile1d::cubic_plus_t(), Profile1d::exp()] {
                let g = f.compose(&tau);
                let cloud = cloud_for(&f, &chart, 300);
                let rep = equilibrium_test(&g, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
                assert_eq!(
                    rep.pass,
                    expect_pass,
                    "{} with {} gave ratio {}",
                    f.label(),
                    g.label(),
                    rep.max_rank_ratio
                );
            }
        }
    }

    #[test]
    fn equilibrium_implies_pairwise_fibrewise_with_derived_fields() {
        let chart = flat3();
        let f = ScalarField::exp_cyl(3);
        let cloud = cloud_for(&f, &chart, 300);
        assert!(equilibrium_test(&f, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap().pass);
        let (u2, u3) = derived_fields(&f, &chart);
        assert!(fibrewise_agree(&f, &u2, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap().pass);
        assert!(fibrewise_agree(&f, &u3, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap().pass);
    }

    #[test]
    fn profiles_of_norm_sq_match_closed_form() {
        let chart = flat3();
        let f = ScalarField::norm_sq(3);
        let cloud = cloud_for(&f, &chart, 2000);
        let prof = recover_profiles(&f, &chart, &cloud, 32).unwrap();
        assert!(prof.equilibrium_passed);
        assert_eq!(prof.levels.len(), 32);
        for i in 0..32 {
            assert_relative_eq!(prof.omega[i], 4.0 * prof.levels[i], epsilon = 1e-9);
            assert_relative_eq!(prof.psi[i], 6.0, epsilon = 1e-9);
            assert!(prof.omega_cv[i] < 1e-6, "omega cv {} at bin {i}", prof.omega_cv[i]);
            assert!(prof.psi_cv[i] < 1e-6);
        }
        // interior omega' = 4
        for i in 2..30 {
            assert_relative_eq!(prof.omega_prime[i], 4.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn profiles_of_cubed_coordinate_match_closed_form() {
        // omega(f) = 9 f^{4/3}, psi(f) = 6 f^{1/3}; validated away from the
        // critical value 0 where bins are irreducibly nonlinear.
        let chart = flat3();
        let f = ScalarField::z_cubed(3);
        let cloud = cloud_for(&f, &chart, 4000);
        let prof = recover_profiles(&f, &chart, &cloud, 32).unwrap();
        assert!(prof.equilibrium_passed);
        for i in 0..32 {
            let level = prof.levels[i];
            if level.abs() < 0.5 {
                continue;
            }
            let t = level.cbrt();
            assert_relative_eq!(prof.omega[i], 9.0 * t.powi(4), max_relative = 1e-2);
            assert_relative_eq!(prof.psi[i], 6.0 * t, max_relative = 1e-2);
        }
    }

    #[test]
    fn profiles_require_enough_samples() {
        let chart = flat3();
        let f = ScalarField::norm_sq(3);
        let cloud = cloud_for(&f, &chart, 50);
        match recover_profiles(&f, &chart, &cloud, 32) {
            Err(Error::InsufficientSampling { .. }) => {}
            other => panic!("expected InsufficientSampling, got {other:?}"),
        }
    }

    #[test]
    fn p1_zero_fields_whole_box_region() {
        // Omega = whole box: complement empty, so the exterior-harmonic
        // residual is exactly zero; all interior residuals vanish for the
        // zero solution of Laplace f1 = f2.
        let chart = flat3();
        let zero = ScalarField::analytic("zero", 3, |_| Jet3::constant(3, 0.0));
        let mask = ScalarField::analytic("one", 3, |_| Jet3::constant(3, 1.0));
        let prob = P1Problem::new(|_, f2, _| f2, |f2, _| f2, |_| 1.0, mask, 0.0);
        let rep =
            p1_residuals(&zero, &zero, &zero, &prob, &chart, GridSpec { cells: 8 }).unwrap();
        assert_eq!(rep.exterior_nodes, 0);
        assert_eq!(rep.exterior_harmonic.sup, 0.0);
        assert_eq!(rep.interior_pde.sup, 0.0);
        assert_eq!(rep.gradient_relation.sup, 0.0);
        assert_eq!(rep.boundary_crossings, 0);
        assert!(rep.fibrewise_12.is_none(), "zero fields have no usable cloud");
        assert!(!rep.g_partials_nonvanishing); // G = f2 constant in second arg
    }

    #[test]
    fn p1_detects_nonharmonic_exterior() {
        // f1 = |x|^2 declared harmonic outside the unit ball: residual 6.
        let chart = flat3();
        let f1 = ScalarField::norm_sq(3);
        let mask = ScalarField::analytic("ball", 3, |p| {
            let r2: f64 = p.iter().map(|v| v * v).sum();
            Jet3::constant(3, 1.0 - r2)
        });
        let prob = P1Problem::new(|_, _, _| 6.0, |f2, f3| f2 + f3, |_| 1.0, mask, 1.0);
        let f2 = ScalarField::norm_sq(3);
        let f3 = ScalarField::norm_sq(3);
        let rep = p1_residuals(&f1, &f2, &f3, &prob, &chart, GridSpec { cells: 16 }).unwrap();
        assert_relative_eq!(rep.exterior_harmonic.sup, 6.0, epsilon = 1e-12);
        assert!(rep.exterior_nodes > 0);
        assert!(rep.omega_nodes > 0);
        // interior PDE holds: Lap |x|^2 = 6 = F
        assert!(rep.interior_pde.sup < 1e-12);
        // boundary |f1 - 1| = 0 on the bisected sphere r = 1
        assert!(rep.boundary_crossings > 0);
        assert!(rep.boundary_deviation < 1e-10, "dev {}", rep.boundary_deviation);
        // f1 = f2 = f3: pairwise fibrewise trivially passes
        assert!(rep.fibrewise_12.as_ref().unwrap().pass);
    }

    #[test]
    fn p1_omega_empty_is_an_error() {
        let chart = flat3();
        let zero = ScalarField::analytic("zero", 3, |_| Jet3::constant(3, 0.0));
        let mask = ScalarField::analytic("neg", 3, |_| Jet3::constant(3, -1.0));
        let prob = P1Problem::new(|_, _, _| 0.0, |a, _| a, |_| 1.0, mask, 0.0);
        match p1_residuals(&zero, &zero, &zero, &prob, &chart, GridSpec { cells: 8 }) {
            Err(Error::Geometry(_)) => {}
            other => panic!("expected geometry error, got {other:?}"),
        }
    }

    #[test]
    fn p1_truncated_region_is_an_error() {
        // A ball poking out through the +x face is truncated by the box and
        // must be rejected; a half-space whose boundary plane passes straight
        // through (translation-invariant directions) is checkable.
        let chart = flat3();
        let f1 = ScalarField::coordinate(0, 3);
        let ball = ScalarField::analytic("offset_ball", 3, |p| {
            Jet3::constant(3, 2.25 - (p[0] - 1.0).powi(2) - p[1] * p[1] - p[2] * p[2])
        });
        let prob = P1Problem::new(|_, _, _| 0.0, |a, _| a, |_| 1.0, ball, 0.0);
        match p1_residuals(&f1, &f1, &f1, &prob, &chart, GridSpec { cells: 8 }) {
            Err(Error::Geometry(msg)) => {
                assert!(msg.contains("chart boundary"), "{msg}");
            }
            other => panic!("expected geometry error, got {other:?}"),
        }

        let half = ScalarField::analytic("half", 3, |p| Jet3::constant(3, -p[0]));
        let prob = P1Problem::new(|_, _, _| 0.0, |a, _| a, |_| 1.0, half, 0.0);
        let rep = p1_residuals(&f1, &f1, &f1, &prob, &chart, GridSpec { cells: 8 }).unwrap();
        assert!(rep.boundary_crossings > 0);
        assert_eq!(rep.boundary_deviation, 0.0);
    }
}
