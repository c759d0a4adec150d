//! Static self-gravitating polytropic fluid with a free boundary, under the
//! three symmetric ansatz classes (spherical q=2, cylindrical q=1, planar
//! q=0): dimensionless Lane–Emden reduction, physical scaling, interior /
//! exterior C¹ matching, and verification of the equilibrium-partition
//! property of the resulting potential. Also a residual checker for the
//! relativistic static system on a supplied spatial metric.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fibergeom::{classify_fiber, extract_fiber, ClassificationReport, FiberClass};
use crate::field::{SampleCloud, ScalarField};
use crate::geometry::{curvature_at, laplace_from_jets, MetricChart};
use crate::halton::BoxSampler;
use crate::jet::Jet3;
use crate::ode::{first_zero_crossing, integrate, OdeOptions, OdeSolution};
use crate::partition::{
    equilibrium_test, p1_residuals, FibrewiseReport, GridSpec, NormPair, P1Problem,
    P1Report, RANK_TOL_NUMERIC,
};

/// Search horizon for the first density zero; m=5, q=2 never crosses.
pub const XI_MAX: f64 = 50.0;

/// Dimensionless density profile: θ″ + (q/ξ)θ′ + θ^m = 0, θ(0)=1, θ′(0)=0.
#[derive(Debug, Clone)]
pub struct LaneEmdenSolution {
    pub index: f64,
    pub symmetry: u32,
    /// First zero of θ.
    pub xi1: f64,
    /// θ′ at the first zero (negative).
    pub theta_prime_boundary: f64,
    sol: OdeSolution,
    xi0: f64,
    a2: f64,
    a4: f64,
}

fn theta_pow(theta: f64, m: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else {
        theta.max(0.0).powf(m)
    }
}

impl LaneEmdenSolution {
    pub fn theta(&self, xi: f64) -> f64 {
        if xi >= self.xi1 {
            return 0.0;
        }
        if xi < self.xi0 {
            let x2 = xi * xi;
            return 1.0 + self.a2 * x2 + self.a4 * x2 * x2;
        }
        let mut buf = [0.0; 2];
        self.sol.eval(xi, &mut buf);
        buf[0].max(0.0)
    }

    pub fn theta_deriv(&self, xi: f64) -> f64 {
        if xi >= self.xi1 {
            return self.theta_prime_boundary;
        }
        if xi < self.xi0 {
            return 2.0 * self.a2 * xi + 4.0 * self.a4 * xi * xi * xi;
        }
        let mut buf = [0.0; 2];
        self.sol.eval(xi, &mut buf);
        buf[1]
    }

    /// θ″ from the equation itself (exact given θ, θ′).
    pub fn theta_second(&self, xi: f64) -> f64 {
        if xi < 1e-300 {
            return 2.0 * self.a2;
        }
        let q = self.symmetry as f64;
        -q / xi * self.theta_deriv(xi) - theta_pow(self.theta(xi), self.index)
    }

    /// θ‴ by differentiating the equation; the θ^{m−1} factor is guarded so
    /// integer indices stay exact at the boundary.
    pub fn theta_third(&self, xi: f64) -> f64 {
        let q = self.symmetry as f64;
        let m = self.index;
        let t = self.theta(xi);
        let tp = self.theta_deriv(xi);
        let tpp = self.theta_second(xi);
        let chain = if m == 0.0 {
            0.0
        } else if m == 1.0 {
            tp
        } else {
            m * t.max(1e-300).powf(m - 1.0) * tp
        };
        if xi < 1e-300 {
            return 0.0;
        }
        -q / xi * tpp + q / (xi * xi) * tp - chain
    }
}

/// Integrate the Lane–Emden equation out to its first zero (series start at
/// ξ₀, adaptive RK5(4), zero refined by re-integration bisection).
pub fn lane_emden_solve(index: f64, symmetry: u32, tol: f64) -> Result<LaneEmdenSolution> {
    if !(index >= 0.0) {
        return Err(Error::Config(format!("polytrope index must be >= 0, got {index}")));
    }
    if symmetry > 2 {
        return Err(Error::Config(format!(
            "symmetry must be 0 (planar), 1 (cylindrical) or 2 (spherical), got {symmetry}"
        )));
    }
    let q = symmetry as f64;
    let m = index;
    let a2 = -1.0 / (2.0 * (q + 1.0));
    let a4 = m / (8.0 * (q + 1.0) * (q + 3.0));
    let xi0 = 1e-4;
    let y0 = [
        1.0 + a2 * xi0 * xi0 + a4 * xi0.powi(4),
        2.0 * a2 * xi0 + 4.0 * a4 * xi0.powi(3),
    ];

    let rhs = move |xi: f64, y: &[f64], out: &mut [f64]| {
        out[0] = y[1];
        out[1] = -q / xi * y[1] - theta_pow(y[0], m);
    };
    let opts = OdeOptions {
        rtol: tol.max(1e-13),
        atol: tol.max(1e-13) * 1e-2,
        ..OdeOptions::default()
    };

    // integrate in unit chunks until theta crosses zero
    let mut steps = Vec::new();
    let mut t = xi0;
    let mut y = y0.to_vec();
    while t < XI_MAX {
        let t_next = (t + 1.0).min(XI_MAX);
        let chunk = integrate(&rhs, t, &y, t_next, &opts)?;
        t = chunk.t_end();
        y = chunk.y_end().to_vec();
        steps.extend(chunk.steps);
        if y[0] <= 0.0 {
            break;
        }
    }
    let sol = OdeSolution { steps };
    let Some((xi1, y1)) = first_zero_crossing(&rhs, &sol, 0, &opts)? else {
        return Err(Error::UnboundedSupport { xi_max: XI_MAX });
    };

    Ok(LaneEmdenSolution {
        index,
        symmetry,
        xi1,
        theta_prime_boundary: y1[1],
        sol,
        xi0,
        a2,
        a4,
    })
}

/// Polytropic equation of state p = K·ρ^{1+1/m} with central density ρ_c,
/// solved under the symmetry class q.
#[derive(Debug, Clone, Copy)]
pub struct PolytropeConfig {
    pub index: f64,
    /// EOS constant; for index 0 (uniform density) the exponent degenerates
    /// and this is read as the central pressure directly.
    pub k_eos: f64,
    pub rho_c: f64,
    pub symmetry: u32,
    pub tolerance: f64,
}

/// Harmonic exterior of the q-appropriate symmetry.
#[derive(Debug, Clone, Copy)]
pub struct ExteriorPotential {
    pub symmetry: u32,
    /// Flux coefficient (q=2: −a/r + b; q=1: a·ln r + b; q=0: a·r + b).
    pub a: f64,
    pub b: f64,
}

impl ExteriorPotential {
    pub fn eval(&self, r: f64) -> f64 {
        match self.symmetry {
            2 => -self.a / r + self.b,
            1 => self.a * r.ln() + self.b,
            _ => self.a * r + self.b,
        }
    }

    pub fn deriv(&self, r: f64) -> f64 {
        match self.symmetry {
            2 => self.a / (r * r),
            1 => self.a / r,
            _ => self.a,
        }
    }

    fn second(&self, r: f64) -> f64 {
        match self.symmetry {
            2 => -2.0 * self.a / (r * r * r),
            1 => -self.a / (r * r),
            _ => 0.0,
        }
    }

    fn third(&self, r: f64) -> f64 {
        match self.symmetry {
            2 => 6.0 * self.a / (r * r * r * r),
            1 => 2.0 * self.a / (r * r * r),
            _ => 0.0,
        }
    }
}

/// A solved free-boundary fluid: radial profiles, boundary data, exterior.
#[derive(Clone)]
pub struct FluidSolution {
    pub config: PolytropeConfig,
    pub lane_emden: Arc<LaneEmdenSolution>,
    /// Length scale r = α·ξ.
    pub alpha: f64,
    pub boundary_radius: f64,
    /// Boundary potential c = V(r_b).
    pub boundary_potential: f64,
    pub exterior: ExteriorPotential,
    /// Flux mass: equals the ρ-integral over Ω by Gauss's theorem.
    pub mass: f64,
    /// Sampled profile table (r, V, ρ, p) for export.
    pub table: Vec<[f64; 4]>,
    /// Enthalpy scale W = (m+1)p_c/ρ_c; V_int = c − W·θ.
    w: f64,
    p_c: f64,
}

impl std::fmt::Debug for FluidSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FluidSolution")
            .field("config", &self.config)
            .field("boundary_radius", &self.boundary_radius)
            .field("boundary_potential", &self.boundary_potential)
            .field("mass", &self.mass)
            .finish()
    }
}

pub fn solve_p2(config: &PolytropeConfig) -> Result<FluidSolution> {
    if !(config.k_eos > 0.0) || !(config.rho_c > 0.0) {
        return Err(Error::Config("EOS constant and central density must be positive".into()));
    }
    let le = lane_emden_solve(config.index, config.symmetry, config.tolerance)?;
    let m = config.index;
    let rho_c = config.rho_c;
    // central pressure; for m=0 the EOS constant plays this role directly
    let p_c = if m == 0.0 { config.k_eos } else { config.k_eos * rho_c.powf(1.0 + 1.0 / m) };
    let w = (m + 1.0) * p_c / rho_c;
    let alpha = (w / rho_c).sqrt();
    let r_b = alpha * le.xi1;
    let slope = -w * le.theta_prime_boundary / alpha; // dV/dr at r_b, positive

    // exterior coefficients from C¹ matching; q=2 is normalized to vanish at
    // infinity, the unbounded shapes fix the additive constant by V(r_b)=0
    let (a, b, c) = match config.symmetry {
        2 => {
            let a = slope * r_b * r_b;
            (a, 0.0, -a / r_b)
        }
        1 => {
            let a = slope * r_b;
            (a, -a * r_b.ln(), 0.0)
        }
        _ => (slope, -slope * r_b, 0.0),
    };
    let exterior = ExteriorPotential { symmetry: config.symmetry, a, b };

    let mut table = Vec::with_capacity(513);
    for i in 0..=512usize {
        let r = r_b * i as f64 / 512.0;
        let theta = le.theta(r / alpha);
        table.push([
            r,
            c - w * theta,
            rho_c * theta_pow(theta, m),
            p_c * theta_pow(theta, m + 1.0),
        ]);
    }

    Ok(FluidSolution {
        config: *config,
        lane_emden: Arc::new(le),
        alpha,
        boundary_radius: r_b,
        boundary_potential: c,
        exterior,
        mass: a,
        table,
        w,
        p_c,
    })
}

impl FluidSolution {
    pub fn v_at(&self, r: f64) -> f64 {
        if r <= self.boundary_radius {
            self.boundary_potential - self.w * self.lane_emden.theta(r / self.alpha)
        } else {
            self.exterior.eval(r)
        }
    }

    pub fn v_deriv_at(&self, r: f64) -> f64 {
        if r <= self.boundary_radius {
            -self.w * self.lane_emden.theta_deriv(r / self.alpha) / self.alpha
        } else {
            self.exterior.deriv(r)
        }
    }

    pub fn rho_at(&self, r: f64) -> f64 {
        if r <= self.boundary_radius {
            self.config.rho_c * theta_pow(self.lane_emden.theta(r / self.alpha), self.config.index)
        } else {
            0.0
        }
    }

    pub fn p_at(&self, r: f64) -> f64 {
        if r <= self.boundary_radius {
            self.p_c * theta_pow(self.lane_emden.theta(r / self.alpha), self.config.index + 1.0)
        } else {
            0.0
        }
    }

    /// Radial value and first three derivatives of V.
    fn v_profile(&self, r: f64) -> [f64; 4] {
        if r <= self.boundary_radius {
            let le = &self.lane_emden;
            let a = self.alpha;
            let xi = r / a;
            [
                self.boundary_potential - self.w * le.theta(xi),
                -self.w * le.theta_deriv(xi) / a,
                -self.w * le.theta_second(xi) / (a * a),
                -self.w * le.theta_third(xi) / (a * a * a),
            ]
        } else {
            [
                self.exterior.eval(r),
                self.exterior.deriv(r),
                self.exterior.second(r),
                self.exterior.third(r),
            ]
        }
    }

    fn rho_profile(&self, r: f64) -> [f64; 4] {
        if r > self.boundary_radius {
            return [0.0; 4];
        }
        let m = self.config.index;
        let le = &self.lane_emden;
        let a = self.alpha;
        let xi = r / a;
        let t = le.theta(xi);
        let tp = le.theta_deriv(xi);
        let tpp = le.theta_second(xi);
        let tppp = le.theta_third(xi);
        let rc = self.config.rho_c;
        [
            rc * theta_pow(t, m),
            rc * guarded_term(m, t, m - 1.0) * tp / a,
            rc * (guarded_term(m * (m - 1.0), t, m - 2.0) * tp * tp
                + guarded_term(m, t, m - 1.0) * tpp)
                / (a * a),
            rc * (guarded_term(m * (m - 1.0) * (m - 2.0), t, m - 3.0) * tp * tp * tp
                + 3.0 * guarded_term(m * (m - 1.0), t, m - 2.0) * tp * tpp
                + guarded_term(m, t, m - 1.0) * tppp)
                / (a * a * a),
        ]
    }

    fn p_profile(&self, r: f64) -> [f64; 4] {
        if r > self.boundary_radius {
            return [0.0; 4];
        }
        let e = self.config.index + 1.0;
        let le = &self.lane_emden;
        let a = self.alpha;
        let xi = r / a;
        let t = le.theta(xi);
        let tp = le.theta_deriv(xi);
        let tpp = le.theta_second(xi);
        let tppp = le.theta_third(xi);
        let pc = self.p_c;
        [
            pc * theta_pow(t, e),
            pc * guarded_term(e, t, e - 1.0) * tp / a,
            pc * (guarded_term(e * (e - 1.0), t, e - 2.0) * tp * tp
                + guarded_term(e, t, e - 1.0) * tpp)
                / (a * a),
            pc * (guarded_term(e * (e - 1.0) * (e - 2.0), t, e - 3.0) * tp * tp * tp
                + 3.0 * guarded_term(e * (e - 1.0), t, e - 2.0) * tp * tpp
                + guarded_term(e, t, e - 1.0) * tppp)
                / (a * a * a),
        ]
    }

    /// 3-dimensional potential field with exact one-sided radial jets.
    pub fn potential_field(&self) -> ScalarField {
        let this = self.clone();
        lift_radial(
            &format!("fluid_potential_m{}_q{}", self.config.index, self.config.symmetry),
            self.config.symmetry,
            self.boundary_radius,
            move |r| this.v_profile(r),
        )
    }

    pub fn density_field(&self) -> ScalarField {
        let this = self.clone();
        lift_radial(
            &format!("fluid_density_m{}_q{}", self.config.index, self.config.symmetry),
            self.config.symmetry,
            self.boundary_radius,
            move |r| this.rho_profile(r),
        )
    }

    pub fn pressure_field(&self) -> ScalarField {
        let this = self.clone();
        lift_radial(
            &format!("fluid_pressure_m{}_q{}", self.config.index, self.config.symmetry),
            self.config.symmetry,
            self.boundary_radius,
            move |r| this.p_profile(r),
        )
    }

    /// Positive inside the fluid, negative outside.
    pub fn omega_mask(&self) -> ScalarField {
        let r_b = self.boundary_radius;
        let q = self.config.symmetry;
        ScalarField::numeric(
            "fluid_omega_mask",
            3,
            move |x| r_b - symmetry_radius(q, x),
            1e-3,
        )
    }

    /// Quadrature of the density over Ω in the symmetry-reduced measure
    /// (∫ ρ ξ^q-weighted): by Gauss's theorem it must reproduce the flux
    /// coefficient. Uses composite Simpson on the dense profile.
    pub fn mass_quadrature(&self) -> f64 {
        let le = &self.lane_emden;
        let m = self.config.index;
        let q = self.config.symmetry as i32;
        let n = 4000usize;
        let h = le.xi1 / n as f64;
        let f = |xi: f64| theta_pow(le.theta(xi), m) * xi.powi(q);
        let mut acc = f(0.0) + f(le.xi1);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        let integral = acc * h / 3.0;
        self.config.rho_c * self.alpha.powi(q + 1) * integral
    }

    /// |A_flux − ∫ρ| / |A_flux|.
    pub fn gauss_residual(&self) -> f64 {
        (self.mass - self.mass_quadrature()).abs() / self.mass.abs().max(1e-300)
    }

    /// |V_int − V_ext| + |V′_int − V′_ext| at the boundary, scale-relative.
    pub fn c1_mismatch(&self) -> f64 {
        let r_b = self.boundary_radius;
        let v_in = self.boundary_potential
            - self.w * self.lane_emden.theta(self.lane_emden.xi1);
        let vp_in = -self.w * self.lane_emden.theta_prime_boundary / self.alpha;
        let scale = self.w.abs().max(vp_in.abs());
        ((v_in - self.exterior.eval(r_b)).abs() + (vp_in - self.exterior.deriv(r_b)).abs())
            / scale
    }
}

fn guarded_term(coef: f64, base: f64, exponent: f64) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    coef * base.max(1e-300).powf(exponent)
}

fn symmetry_radius(q: u32, x: &[f64]) -> f64 {
    match q {
        2 => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt(),
        1 => (x[0] * x[0] + x[1] * x[1]).sqrt(),
        _ => x[0].abs(),
    }
}

/// Lift a radial profile r ↦ (v, v′, v″, v‴) to a 3-dimensional field with
/// analytic jets under the symmetry class: spherical (r = ‖x‖), cylindrical
/// (r = ‖(x₁,x₂)‖), or planar (r = |x₁|).
fn lift_radial(
    label: &str,
    q: u32,
    scale: f64,
    profile: impl Fn(f64) -> [f64; 4] + Send + Sync + 'static,
) -> ScalarField {
    let active: usize = match q {
        2 => 3,
        1 => 2,
        _ => 1,
    };
    let r_tiny = 1e-9 * scale;
    ScalarField::analytic(label, 3, move |x| {
        let r = symmetry_radius(q, x);
        let mut jet = Jet3::constant(3, 0.0);
        if r < r_tiny {
            // symmetric center: grad vanishes, hessian isotropic on the
            // active coordinates with trace = Laplacian there
            let p = profile(0.0);
            jet.value = p[0];
            let vpp0 = profile(r_tiny)[2];
            for a in 0..active {
                jet.hess[(a, a)] = vpp0;
            }
            return jet;
        }
        let p = profile(r);
        let (v, vp, vpp, vppp) = (p[0], p[1], p[2], p[3]);
        jet.value = v;
        if q == 0 {
            let s = x[0].signum();
            jet.grad[0] = s * vp;
            jet.hess[(0, 0)] = vpp;
            jet.third.set(0, 0, 0, s * vppp);
            return jet;
        }
        let mut u = [0.0f64; 3];
        for a in 0..active {
            u[a] = x[a] / r;
        }
        let proj = |a: usize, b: usize| -> f64 {
            let d = if a == b && a < active { 1.0 } else { 0.0 };
            d - u[a] * u[b]
        };
        for a in 0..active {
            jet.grad[a] = vp * u[a];
        }
        let dcoef = (vpp - vp / r) / r;
        for a in 0..active {
            for b in 0..active {
                jet.hess[(a, b)] = vpp * u[a] * u[b] + vp / r * proj(a, b);
            }
        }
        for a in 0..active {
            for b in 0..active {
                for c in 0..active {
                    let t3 = vppp * u[a] * u[b] * u[c]
                        + dcoef
                            * (u[a] * proj(b, c) + u[b] * proj(a, c) + u[c] * proj(a, b));
                    jet.third.set(a, b, c, t3);
                }
            }
        }
        jet
    })
}

/// Verification gathered from one solved fluid: PDE residuals, the
/// equilibrium rank test across the free boundary, and the shape of the
/// boundary / interior / exterior equipotentials.
#[derive(Debug, Clone)]
pub struct FluidVerification {
    pub p1: P1Report,
    pub equilibrium: FibrewiseReport,
    pub boundary_class: ClassificationReport,
    pub interior_class: ClassificationReport,
    pub exterior_class: ClassificationReport,
    pub c1_mismatch: f64,
    /// |dV/dr| at the boundary (must be nonzero).
    pub boundary_gradient: f64,
    pub gauss_residual: f64,
    pub flags: Vec<String>,
    pub passed: bool,
}

fn expected_class(q: u32) -> FiberClass {
    match q {
        2 => FiberClass::Sphere,
        1 => FiberClass::Cylinder,
        _ => FiberClass::Plane,
    }
}

/// Sample a Halton cloud restricted to the shell 0.8·r_b ≤ r_sym ≤ 1.2·r_b.
fn straddling_cloud(
    chart: &MetricChart,
    q: u32,
    r_b: f64,
    count: usize,
    seed: u64,
) -> Result<SampleCloud> {
    let mut sampler = BoxSampler::new(chart.domain(), seed);
    let mut points = Vec::with_capacity(count);
    let mut point = Vec::new();
    for _ in 0..200 * count {
        sampler.next_point(&mut point);
        let r = symmetry_radius(q, &point);
        if r >= 0.8 * r_b && r <= 1.2 * r_b {
            points.push(point.clone());
            if points.len() == count {
                break;
            }
        }
    }
    if points.len() < count / 2 {
        return Err(Error::Config(
            "chart box too small to sample a shell around the free boundary".into(),
        ));
    }
    Ok(SampleCloud { points, exclusion_radius: 0.0, seed, eps_grad: 1e-8 })
}

pub fn verify_solution(
    sol: &FluidSolution,
    chart: &MetricChart,
    grid: GridSpec,
) -> Result<FluidVerification> {
    if chart.dimension() != 3 || !chart.is_flat() {
        return Err(Error::Geometry(
            "fluid verification runs on a flat 3-dimensional chart".into(),
        ));
    }
    let r_b = sol.boundary_radius;
    let domain = chart.domain();
    let max_cell = domain
        .iter()
        .map(|r| (r[1] - r[0]) / grid.cells as f64)
        .fold(0.0f64, f64::max);
    if max_cell > r_b / 4.0 {
        return Err(Error::ResolutionTooCoarse { cell: max_cell, r_b });
    }

    let v = sol.potential_field();
    let rho = sol.density_field();
    let p = sol.pressure_field();
    let q = sol.config.symmetry;

    // free-boundary elliptic system: ΔV = ρ inside, ∇p + ρ∇V = 0,
    // V = c on ∂Ω, harmonic outside
    let problem = P1Problem::new(
        |_f1, f2, _f3| f2,
        |f2, _f3| f2,
        |_f1| 1.0,
        sol.omega_mask(),
        sol.boundary_potential,
    );
    let p1_cells = grid.cells.min(40);
    let p1 = p1_residuals(&v, &rho, &p, &problem, chart, GridSpec { cells: p1_cells })?;

    let cloud = straddling_cloud(chart, q, r_b, 600, 7)?;
    let equilibrium = equilibrium_test(&v, chart, &cloud, RANK_TOL_NUMERIC)?;

    // equipotential shapes: the free boundary and one fiber on each side
    let classify_level = |level: f64| -> Result<ClassificationReport> {
        let mesh = extract_fiber(&v, chart, level, grid.cells)?;
        let comp = mesh
            .components
            .iter()
            .max_by_key(|c| c.vertices.len())
            .ok_or(Error::EmptyFiber { level })?;
        Ok(classify_fiber(comp, chart))
    };
    let boundary_class = classify_level(sol.boundary_potential)?;
    let interior_class = classify_level(sol.v_at(0.75 * r_b))?;
    let exterior_class = classify_level(sol.v_at(1.25 * r_b))?;

    let c1 = sol.c1_mismatch();
    let boundary_gradient = sol.v_deriv_at(r_b).abs();
    let gauss = sol.gauss_residual();

    let mut flags = Vec::new();
    if p1.interior_pde.sup > 1e-6 {
        flags.push(format!("interior PDE residual {:.3e}", p1.interior_pde.sup));
    }
    if p1.gradient_relation.sup > 1e-6 {
        flags.push(format!("hydrostatic residual {:.3e}", p1.gradient_relation.sup));
    }
    if p1.exterior_harmonic.sup > 1e-6 {
        flags.push(format!("exterior harmonic residual {:.3e}", p1.exterior_harmonic.sup));
    }
    if p1.boundary_deviation > 1e-6 * sol.w.abs() {
        flags.push(format!("free-boundary level deviation {:.3e}", p1.boundary_deviation));
    }
    if !equilibrium.pass {
        flags.push(format!(
            "equilibrium rank test failed (max ratio {:.3e})",
            equilibrium.max_rank_ratio
        ));
    }
    let expected = expected_class(q);
    for (name, class) in [
        ("boundary", &boundary_class),
        ("interior", &interior_class),
        ("exterior", &exterior_class),
    ] {
        if class.label != expected {
            flags.push(format!("{name} equipotential classified {} (expected {expected})", class.label));
        }
    }
    if c1 > 1e-8 {
        flags.push(format!("C1 matching mismatch {c1:.3e}"));
    }
    if boundary_gradient < 1e-10 {
        flags.push("boundary gradient vanishes".into());
    }
    if gauss > 1e-6 {
        flags.push(format!("Gauss mass residual {gauss:.3e}"));
    }

    let passed = flags.is_empty();
    Ok(FluidVerification {
        p1,
        equilibrium,
        boundary_class,
        interior_class,
        exterior_class,
        c1_mismatch: c1,
        boundary_gradient,
        gauss_residual: gauss,
        flags,
        passed,
    })
}

/// Residuals of the relativistic static system on supplied data: the
/// interior equation ΔV = 4πV(ρ+3p), the Euler relation V∇p + (ρ+p)∇V = 0,
/// the exterior harmonicity, and the metric coupling
/// R_ab = V⁻¹ V_{;ab} + 4π(ρ−p) g_ab. Checker only; solving is out of scope.
#[derive(Debug, Clone)]
pub struct P3Report {
    pub interior_pde: NormPair,
    pub euler: NormPair,
    pub exterior_harmonic: NormPair,
    /// Componentwise sup / L² of the coupling residual over all nodes.
    pub coupling: NormPair,
    pub omega_nodes: usize,
    pub exterior_nodes: usize,
}

pub fn p3_residuals(
    v: &ScalarField,
    chart: &MetricChart,
    rho: &ScalarField,
    p: &ScalarField,
    omega_mask: &ScalarField,
    grid: GridSpec,
) -> Result<P3Report> {
    let n = chart.dimension();
    if v.dimension() != n || rho.dimension() != n || p.dimension() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.dimension() });
    }
    if grid.cells < 2 {
        return Err(Error::Config("grid must have at least 2 cells per axis".into()));
    }
    let domain = chart.domain();
    let nodes_per_axis = grid.cells + 1;
    let steps: Vec<f64> =
        domain.iter().map(|r| (r[1] - r[0]) / grid.cells as f64).collect();
    let cell_volume: f64 = steps.iter().product();
    let four_pi = 4.0 * std::f64::consts::PI;

    let total: usize = nodes_per_axis.pow(n as u32);
    let mut interior = (0.0f64, 0.0f64);
    let mut euler = (0.0f64, 0.0f64);
    let mut exterior = (0.0f64, 0.0f64);
    let mut coupling = (0.0f64, 0.0f64);
    let mut omega_nodes = 0usize;
    let mut exterior_nodes = 0usize;

    for flat in 0..total {
        let mut idx = flat;
        let mut point = vec![0.0f64; n];
        for a in (0..n).rev() {
            point[a] = domain[a][0] + steps[a] * (idx % nodes_per_axis) as f64;
            idx /= nodes_per_axis;
        }
        let mask = omega_mask.eval(&point);
        if mask == 0.0 {
            continue;
        }
        let inside = mask > 0.0;

        let jv = v.jet_at(&point)?;
        let mj = chart.metric_jet(&point)?;
        let sqrt_det = mj.g.determinant().max(0.0).sqrt();
        let weight = cell_volume * sqrt_det;
        let lap = laplace_from_jets(&mj, &jv);

        if inside {
            omega_nodes += 1;
            let jr = rho.jet_at(&point)?;
            let jp = p.jet_at(&point)?;
            let r1 = lap - four_pi * jv.value * (jr.value + 3.0 * jp.value);
            interior.0 = interior.0.max(r1.abs());
            interior.1 += r1 * r1 * weight;

            let mut rel = DVector::zeros(n);
            for a in 0..n {
                rel[a] = jv.value * jp.grad[a] + (jr.value + jp.value) * jv.grad[a];
            }
            let r2 = (&mj.g_inv * &rel).dot(&rel).max(0.0).sqrt();
            euler.0 = euler.0.max(r2);
            euler.1 += r2 * r2 * weight;
        } else {
            exterior_nodes += 1;
            exterior.0 = exterior.0.max(lap.abs());
            exterior.1 += lap * lap * weight;
        }

        // coupling residual everywhere (vacuum reads ρ = p = 0 outside)
        if jv.value.abs() > 1e-8 {
            let curv = curvature_at(chart, &point)?;
            let gamma = crate::geometry::christoffel_from_jet(&mj);
            let (rho_v, p_v) = if inside {
                (rho.eval(&point), p.eval(&point))
            } else {
                (0.0, 0.0)
            };
            let mut hess_cov = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let mut h = jv.hess[(a, b)];
                    for c in 0..n {
                        h -= gamma.get(c, a, b) * jv.grad[c];
                    }
                    hess_cov[(a, b)] = h;
                }
            }
            let mut worst = 0.0f64;
            let mut ss = 0.0f64;
            for a in 0..n {
                for b in 0..n {
                    let res = curv.ricci[(a, b)]
                        - hess_cov[(a, b)] / jv.value
                        - four_pi * (rho_v - p_v) * mj.g[(a, b)];
                    worst = worst.max(res.abs());
                    ss += res * res;
                }
            }
            coupling.0 = coupling.0.max(worst);
            coupling.1 += ss * weight;
        }
    }

    let pair = |acc: (f64, f64)| NormPair { sup: acc.0, l2: acc.1.sqrt() };
    Ok(P3Report {
        interior_pde: pair(interior),
        euler: pair(euler),
        exterior_harmonic: pair(exterior),
        coupling: pair(coupling),
        omega_nodes,
        exterior_nodes,
    })
}

/// Closed-form static vacuum data in isotropic coordinates: conformally flat
/// spatial slice with conformal factor (1 + s/r)², s = m/2, potential
/// V = (1 − s/r)/(1 + s/r). Solves the vacuum case of the static system.
pub fn isotropic_vacuum(mass: f64, domain: Vec<[f64; 2]>) -> (MetricChart, ScalarField) {
    let s = 0.5 * mass;
    let phi = lift_radial("isotropic_conformal_exponent", 2, 1.0, move |r| {
        let d = r * (r + s);
        [
            2.0 * (1.0 + s / r).ln(),
            -2.0 * s / d,
            2.0 * s * (2.0 * r + s) / (d * d),
            -4.0 * s * (3.0 * r * r + 3.0 * r * s + s * s) / (d * d * d),
        ]
    });
    let v = lift_radial("isotropic_vacuum_potential", 2, 1.0, move |r| {
        let d = r + s;
        [
            (r - s) / d,
            2.0 * s / (d * d),
            -4.0 * s / (d * d * d),
            12.0 * s / (d * d * d * d),
        ]
    });
    (MetricChart::conformally_flat(phi, domain), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT6: f64 = 2.449489742783178;

    /// Independent Bessel J₀ first zero: power series + bisection.
    fn bessel_j0_first_zero() -> f64 {
        let j0 = |x: f64| -> f64 {
            let q = x * x / 4.0;
            let mut term = 1.0f64;
            let mut acc = 1.0f64;
            for k in 1..40 {
                term *= -q / ((k * k) as f64);
                acc += term;
            }
            acc
        };
        let (mut lo, mut hi) = (2.0f64, 3.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if j0(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn uniform_sphere_boundary_is_sqrt_six() {
        let le = lane_emden_solve(0.0, 2, 1e-12).unwrap();
        assert!((le.xi1 - SQRT6).abs() < 1e-10, "xi1 = {}", le.xi1);
        // theta' at the zero: closed form -xi/3
        assert!((le.theta_prime_boundary + SQRT6 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn isothermal_like_index_one_matches_closed_forms() {
        let sph = lane_emden_solve(1.0, 2, 1e-12).unwrap();
        assert!((sph.xi1 - std::f64::consts::PI).abs() < 1e-8, "{}", sph.xi1);
        // theta = sin(xi)/xi along the way
        for &xi in &[0.5, 1.0, 2.0, 3.0] {
            assert!((sph.theta(xi) - xi.sin() / xi).abs() < 1e-9);
        }
        let planar = lane_emden_solve(1.0, 0, 1e-12).unwrap();
        assert!((planar.xi1 - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
        for &xi in &[0.3, 0.9, 1.4] {
            assert!((planar.theta(xi) - xi.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn cylindrical_boundary_is_the_bessel_zero() {
        let le = lane_emden_solve(1.0, 1, 1e-12).unwrap();
        let oracle = bessel_j0_first_zero();
        assert!((le.xi1 - oracle).abs() < 1e-8, "{} vs {oracle}", le.xi1);
    }

    #[test]
    fn index_five_sphere_has_unbounded_support() {
        match lane_emden_solve(5.0, 2, 1e-10) {
            Err(Error::UnboundedSupport { .. }) => {}
            other => panic!("expected UnboundedSupport, got {other:?}"),
        }
    }

    #[test]
    fn scaling_law_and_invariance_of_the_profile() {
        let base = solve_p2(&PolytropeConfig {
            index: 1.0,
            k_eos: 1.0,
            rho_c: 1.0,
            symmetry: 2,
            tolerance: 1e-12,
        })
        .unwrap();
        // alpha^2 = (m+1)K rho_c^{1/m - 1} = 2, so r_b = pi*sqrt(2)
        assert!(
            (base.boundary_radius - std::f64::consts::PI * 2.0f64.sqrt()).abs() < 1e-8
        );
        // nontrivial alpha law: for m=3, alpha ~ rho_c^{-1/3}
        let cubic = solve_p2(&PolytropeConfig {
            index: 3.0,
            ..base.config
        })
        .unwrap();
        let lambda = 3.7;
        let scaled = solve_p2(&PolytropeConfig {
            rho_c: lambda,
            ..cubic.config
        })
        .unwrap();
        // xi1 invariant, r_b follows the alpha law exactly
        assert!((scaled.lane_emden.xi1 - cubic.lane_emden.xi1).abs() < 1e-12);
        let ratio = scaled.boundary_radius / cubic.boundary_radius;
        let alpha_law = lambda.powf(0.5 * (1.0 / 3.0 - 1.0));
        assert!(
            (ratio - alpha_law).abs() < 1e-8,
            "ratio {ratio} vs {alpha_law}"
        );
    }

    #[test]
    fn uniform_ball_potential_matches_the_closed_form() {
        let sol = solve_p2(&PolytropeConfig {
            index: 0.0,
            k_eos: 1.0,
            rho_c: 1.0,
            symmetry: 2,
            tolerance: 1e-12,
        })
        .unwrap();
        assert!((sol.boundary_radius - SQRT6).abs() < 1e-10);
        assert!(sol.c1_mismatch() < 1e-10);
        // V_int = -3 + r^2/6, V_ext = -2*sqrt(6)/r
        for &r in &[0.0, 0.7, 1.3, 2.0] {
            assert!((sol.v_at(r) - (-3.0 + r * r / 6.0)).abs() < 1e-9, "r={r}");
        }
        for &r in &[2.6, 3.0, 4.0] {
            assert!((sol.v_at(r) - (-2.0 * SQRT6 / r)).abs() < 1e-9, "r={r}");
        }
        assert!((sol.mass - 2.0 * SQRT6).abs() < 1e-9);
        assert!(sol.gauss_residual() < 1e-6);
    }

    #[test]
    fn gauss_identity_holds_for_all_symmetries() {
        for q in [0u32, 1, 2] {
            let sol = solve_p2(&PolytropeConfig {
                index: 1.0,
                k_eos: 1.0,
                rho_c: 1.0,
                symmetry: q,
                tolerance: 1e-12,
            })
            .unwrap();
            assert!(sol.gauss_residual() < 1e-6, "q={q}: {}", sol.gauss_residual());
            assert!(sol.p_at(sol.boundary_radius) == 0.0);
            assert!(sol.p_at(0.5 * sol.boundary_radius) > 0.0);
            assert!(sol.v_deriv_at(sol.boundary_radius).abs() > 1e-3);
        }
    }

    #[test]
    fn lifted_jets_match_finite_differences() {
        let sol = solve_p2(&PolytropeConfig {
            index: 1.0,
            k_eos: 1.0,
            rho_c: 1.0,
            symmetry: 2,
            tolerance: 1e-12,
        })
        .unwrap();
        let v = sol.potential_field();
        let h = 1e-4;
        // a point inside, a point outside; away from the kink at r_b
        for point in [[1.0, 0.7, -0.4], [3.5, 1.0, 2.0]] {
            let jet = v.jet_at(&point).unwrap();
            for a in 0..3 {
                let mut pp = point;
                let mut pm = point;
                pp[a] += h;
                pm[a] -= h;
                let fd = (v.eval(&pp) - v.eval(&pm)) / (2.0 * h);
                assert!((fd - jet.grad[a]).abs() < 1e-6, "grad[{a}]");
                for b in 0..3 {
                    let mut px = point;
                    px[a] += h;
                    px[b] += h;
                    let mut py = point;
                    py[a] += h;
                    py[b] -= h;
                    let mut pz = point;
                    pz[a] -= h;
                    pz[b] += h;
                    let mut pw = point;
                    pw[a] -= h;
                    pw[b] -= h;
                    let fd2 = (v.eval(&px) - v.eval(&py) - v.eval(&pz) + v.eval(&pw))
                        / (4.0 * h * h);
                    assert!((fd2 - jet.hess[(a, b)]).abs() < 1e-5, "hess[{a}{b}]");
                }
            }
        }
    }

    #[test]
    fn spherical_solution_verifies_at_desk_resolution() {
        let sol = solve_p2(&PolytropeConfig {
            index: 1.0,
            k_eos: 1.0,
            rho_c: 1.0,
            symmetry: 2,
            tolerance: 1e-12,
        })
        .unwrap();
        let half = 1.5 * sol.boundary_radius;
        let chart = MetricChart::euclidean(3, vec![[-half, half]; 3]);
        let rep = verify_solution(&sol, &chart, GridSpec { cells: 48 }).unwrap();
        assert!(rep.passed, "flags: {:?}", rep.flags);
        assert_eq!(rep.boundary_class.label, FiberClass::Sphere);
        let b = rep.boundary_class.b.unwrap();
        assert!((b - sol.boundary_radius).abs() / sol.boundary_radius < 1e-3, "b = {b}");
        assert!(rep.equilibrium.max_rank_ratio < 1e-6);
    }

    #[test]
    fn cylindrical_and_planar_solutions_verify() {
        // The domain runs through the chart box along its flat directions;
        // every equipotential must carry the symmetry's model label.
        for (q, class) in [(1u32, FiberClass::Cylinder), (0u32, FiberClass::Plane)] {
            let sol = solve_p2(&PolytropeConfig {
                index: 1.0,
                k_eos: 1.0,
                rho_c: 1.0,
                symmetry: q,
                tolerance: 1e-12,
            })
            .unwrap();
            let half = 1.5 * sol.boundary_radius;
            let chart = MetricChart::euclidean(3, vec![[-half, half]; 3]);
            let rep = verify_solution(&sol, &chart, GridSpec { cells: 48 }).unwrap();
            assert!(rep.passed, "q={q} flags: {:?}", rep.flags);
            assert_eq!(rep.boundary_class.label, class, "q={q}");
            assert_eq!(rep.interior_class.label, class, "q={q}");
            assert_eq!(rep.exterior_class.label, class, "q={q}");
            assert!(rep.equilibrium.pass, "q={q}");
        }
    }

    #[test]
    fn corrupted_exterior_coefficient_is_flagged() {
        let mut sol = solve_p2(&PolytropeConfig {
            index: 1.0,
            k_eos: 1.0,
            rho_c: 1.0,
            symmetry: 2,
            tolerance: 1e-12,
        })
        .unwrap();
        sol.exterior.a *= 1.01;
        let half = 1.5 * sol.boundary_radius;
        let chart = MetricChart::euclidean(3, vec![[-half, half]; 3]);
        let rep = verify_solution(&sol, &chart, GridSpec { cells: 32 }).unwrap();
        assert!(!rep.passed);
        assert!(rep.c1_mismatch > 1e-4);
        assert!(rep.flags.iter().any(|f| f.contains("C1 matching")));
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let sol = solve_p2(&PolytropeConfig {
            index: 1.0,
            k_eos: 1.0,
            rho_c: 1.0,
            symmetry: 2,
            tolerance: 1e-10,
        })
        .unwrap();
        let half = 10.0 * sol.boundary_radius;
        let chart = MetricChart::euclidean(3, vec![[-half, half]; 3]);
        match verify_solution(&sol, &chart, GridSpec { cells: 8 }) {
            Err(Error::ResolutionTooCoarse { .. }) => {}
            other => panic!("expected ResolutionTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn trivial_flat_data_has_exactly_zero_p3_residuals() {
        let chart = MetricChart::euclidean(3, vec![[0.5, 1.5]; 3]);
        let v = ScalarField::analytic("unit_potential", 3, |_x| Jet3::constant(3, 1.0));
        let zero = ScalarField::analytic("zero", 3, |_x| Jet3::constant(3, 0.0));
        let mask = ScalarField::numeric("nowhere", 3, |_x| -1.0, 1e-2);
        let rep = p3_residuals(&v, &chart, &zero, &zero, &mask, GridSpec { cells: 6 })
            .unwrap();
        assert_eq!(rep.interior_pde.sup, 0.0);
        assert_eq!(rep.exterior_harmonic.sup, 0.0);
        assert_eq!(rep.coupling.sup, 0.0);
        assert_eq!(rep.omega_nodes, 0);
    }

    #[test]
    fn static_vacuum_closed_form_passes_the_coupling_check() {
        let (chart, v) = isotropic_vacuum(0.5, vec![[0.8, 1.6]; 3]);
        let zero = ScalarField::analytic("zero", 3, |_x| Jet3::constant(3, 0.0));
        let mask = ScalarField::numeric("nowhere", 3, |_x| -1.0, 1e-2);
        let rep = p3_residuals(&v, &chart, &zero, &zero, &mask, GridSpec { cells: 10 })
            .unwrap();
        assert!(rep.exterior_harmonic.sup < 1e-6, "harmonic {:?}", rep.exterior_harmonic);
        assert!(rep.coupling.sup < 1e-6, "coupling {:?}", rep.coupling);
    }

    #[test]
    fn vacuum_potential_on_a_flat_metric_is_flagged() {
        let (_, v) = isotropic_vacuum(0.5, vec![[0.8, 1.6]; 3]);
        let flat = MetricChart::euclidean(3, vec![[0.8, 1.6]; 3]);
        let zero = ScalarField::analytic("zero", 3, |_x| Jet3::constant(3, 0.0));
        let mask = ScalarField::numeric("nowhere", 3, |_x| -1.0, 1e-2);
        let rep = p3_residuals(&v, &flat, &zero, &zero, &mask, GridSpec { cells: 8 })
            .unwrap();
        // the Hessian term has no curvature to balance it
        assert!(rep.coupling.sup > 1e-3, "coupling {:?}", rep.coupling);
    }
}
