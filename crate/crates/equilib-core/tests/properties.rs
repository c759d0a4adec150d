//! Randomized invariants over the public API: derivative supplies agree,
//! curvature tensors keep their symmetries, verdicts survive monotone
//! reparameterization, the bracket algebra is exact, and sampling is
//! reproducible.

use proptest::prelude::*;

use equilib_core::isometry::{bracket, LieElement};
use equilib_core::partition::{equilibrium_test, fibrewise_agree, RANK_TOL_ANALYTIC};
use equilib_core::{
    curvature_at, fd_jet3, laplace_beltrami, sample_domain, sectional_curvature, MetricChart,
    Profile1d, ScalarField,
};

fn flat3() -> MetricChart {
    MetricChart::euclidean(3, vec![[-2.0, 2.0]; 3])
}

fn catalog_field(ix: usize) -> ScalarField {
    match ix % 5 {
        0 => ScalarField::linear(&[1.0, -0.5, 0.25]),
        1 => ScalarField::norm_sq(3),
        2 => ScalarField::cyl_r2(3),
        3 => ScalarField::z_cubed(3),
        _ => ScalarField::exp_cyl(3),
    }
}

/// Map unit-cube coordinates into the interior of a chart's domain.
fn into_domain(chart: &MetricChart, u: &[f64]) -> Vec<f64> {
    chart
        .domain()
        .iter()
        .zip(u)
        .map(|(r, t)| {
            let mid = 0.5 * (r[0] + r[1]);
            let half = 0.5 * (r[1] - r[0]);
            mid + 0.85 * half * t
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Finite-difference jets track analytic jets at the stencil's accuracy.
    #[test]
    fn finite_difference_jets_track_analytic_jets(
        ix in 0usize..5,
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
        z in -1.0f64..1.0,
    ) {
        let f = catalog_field(ix);
        let p = [x, y, z];
        let a = f.jet_at(&p).unwrap();
        let eval = |q: &[f64]| f.eval(q);
        let fd = fd_jet3(&eval, &p, 1e-2);
        prop_assert!((fd.value - a.value).abs() < 1e-12);
        for i in 0..3 {
            prop_assert!(
                (fd.grad[i] - a.grad[i]).abs() < 1e-5 * (1.0 + a.grad[i].abs()),
                "grad[{i}]: {} vs {}", fd.grad[i], a.grad[i]
            );
            for j in 0..3 {
                prop_assert!(
                    (fd.hess[(i, j)] - a.hess[(i, j)]).abs()
                        < 1e-4 * (1.0 + a.hess[(i, j)].abs()),
                    "hess[{i}{j}]: {} vs {}", fd.hess[(i, j)], a.hess[(i, j)]
                );
                for k in 0..3 {
                    prop_assert!(
                        (fd.third.get(i, j, k) - a.third.get(i, j, k)).abs()
                            < 1e-2 * (1.0 + a.third.get(i, j, k).abs()),
                        "third[{i}{j}{k}]: {} vs {}",
                        fd.third.get(i, j, k), a.third.get(i, j, k)
                    );
                }
            }
        }
    }

    /// Profile composition obeys the chain rule through third order.
    #[test]
    fn composed_jets_match_finite_differences(
        a in -0.5f64..0.5,
        b in -0.5f64..0.5,
        c in -0.5f64..0.5,
        exp_profile in any::<bool>(),
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
        z in -1.0f64..1.0,
    ) {
        let base = ScalarField::linear(&[a, b, c]);
        let prof = Profile1d::by_name(if exp_profile { "e^t" } else { "t^3+t" }).unwrap();
        let f = base.compose(&prof);
        let p = [x, y, z];
        let jet = f.jet_at(&p).unwrap();
        let eval = |q: &[f64]| f.eval(q);
        let fd = fd_jet3(&eval, &p, 1e-2);
        prop_assert!((fd.value - jet.value).abs() < 1e-12);
        for i in 0..3 {
            prop_assert!((fd.grad[i] - jet.grad[i]).abs() < 1e-5 * (1.0 + jet.grad[i].abs()));
            for j in 0..3 {
                prop_assert!(
                    (fd.hess[(i, j)] - jet.hess[(i, j)]).abs()
                        < 1e-4 * (1.0 + jet.hess[(i, j)].abs())
                );
                for k in 0..3 {
                    prop_assert!(
                        (fd.third.get(i, j, k) - jet.third.get(i, j, k)).abs()
                            < 1e-2 * (1.0 + jet.third.get(i, j, k).abs())
                    );
                }
            }
        }
    }
}

fn random_chart(sel: usize, a: f64, b: f64, c: f64) -> MetricChart {
    match sel % 4 {
        0 => MetricChart::stereographic_sphere(1.0 + a.abs(), 3)
            .with_domain(vec![[-1.0, 1.0]; 3]),
        1 => MetricChart::poincare_ball(-(0.5 + a.abs()), 3),
        2 => {
            // log(1 + linear^2 + shift): analytic, bounded exponent
            let lin = ScalarField::linear(&[a, b, c]);
            let prof = Profile1d::by_name("log(t+2)").unwrap();
            MetricChart::conformally_flat(lin.compose(&prof), vec![[-1.0, 1.0]; 3])
        }
        _ => {
            let prof = Profile1d::by_name("log(t+2)").unwrap();
            MetricChart::conformally_flat(
                ScalarField::norm_sq(3).compose(&prof),
                vec![[-1.0, 1.0]; 3],
            )
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The covariant Riemann tensor keeps its algebraic symmetries on every
    /// built-in chart family with analytic metric jets.
    #[test]
    fn riemann_symmetries_hold_on_random_charts(
        sel in 0usize..4,
        a in -0.5f64..0.5,
        b in -0.5f64..0.5,
        c in -0.5f64..0.5,
        ux in -1.0f64..1.0,
        uy in -1.0f64..1.0,
        uz in -1.0f64..1.0,
    ) {
        let chart = random_chart(sel, a, b, c);
        let p = into_domain(&chart, &[ux, uy, uz]);
        let cur = curvature_at(&chart, &p).unwrap();
        let mut scale = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        scale = scale.max(cur.riemann.get(i, j, k, l).abs());
                    }
                }
            }
        }
        let tol = 1e-8 * (1.0 + scale);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let r = cur.riemann.get(i, j, k, l);
                        prop_assert!((r + cur.riemann.get(j, i, k, l)).abs() < tol);
                        prop_assert!((r + cur.riemann.get(i, j, l, k)).abs() < tol);
                        prop_assert!((r - cur.riemann.get(k, l, i, j)).abs() < tol);
                    }
                }
            }
        }
    }

    /// Constant-curvature charts report the same sectional curvature for
    /// every point and tangent plane.
    #[test]
    fn constant_curvature_charts_have_constant_sectional(
        round in any::<bool>(),
        mag in 0.5f64..2.0,
        ux in -1.0f64..1.0,
        uy in -1.0f64..1.0,
        uz in -1.0f64..1.0,
        u in prop::array::uniform3(-1.0f64..1.0),
        v in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let (chart, expected) = if round {
            let radius = mag;
            (
                MetricChart::stereographic_sphere(radius, 3)
                    .with_domain(vec![[-1.0, 1.0]; 3]),
                1.0 / (radius * radius),
            )
        } else {
            (MetricChart::poincare_ball(-mag, 3), -mag)
        };
        // reject nearly collinear plane spans
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let area2: f64 = cross.iter().map(|t| t * t).sum();
        prop_assume!(area2 > 1e-2);
        let p = into_domain(&chart, &[ux, uy, uz]);
        let k = sectional_curvature(&chart, &p, &u, &v).unwrap();
        prop_assert!(
            (k - expected).abs() < 1e-6 * (1.0 + expected.abs()),
            "K = {k}, expected {expected}"
        );
    }

    /// On the euclidean chart the Laplace–Beltrami operator is the
    /// coordinate Laplacian.
    #[test]
    fn euclidean_laplacian_is_the_coordinate_trace(
        ix in 0usize..5,
        x in -1.5f64..1.5,
        y in -1.5f64..1.5,
        z in -1.5f64..1.5,
    ) {
        let chart = flat3();
        let f = catalog_field(ix);
        let p = [x, y, z];
        let jet = f.jet_at(&p).unwrap();
        let trace: f64 = (0..3).map(|a| jet.hess[(a, a)]).sum();
        let lap = laplace_beltrami(&chart, &jet, &p).unwrap();
        prop_assert!((lap - trace).abs() < 1e-12 * (1.0 + trace.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The equilibrium verdict is invariant under strictly monotone analytic
    /// reparameterization of the field values, pass and fail alike.
    #[test]
    fn monotone_reparameterization_preserves_verdict(
        ix in 0usize..4,
        exp_profile in any::<bool>(),
        coupling in 0.2f64..0.8,
    ) {
        let chart = flat3();
        let prof = Profile1d::by_name(if exp_profile { "e^t" } else { "t^3+t" }).unwrap();

        let f = catalog_field(ix); // exp_cyl excluded: e^(e^t) overflows
        let cloud = sample_domain(&f, &chart, 300, 7, 1e-3).unwrap();
        let base = equilibrium_test(&f, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        let rep = equilibrium_test(&f.compose(&prof), &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        prop_assert!(base.pass && rep.pass, "pass verdict changed under reparameterization");

        let src = format!("x1^2 + x2^2 + {coupling}*x1*x2");
        let g = ScalarField::from_expr(&src, 3, 1e-3).unwrap();
        let cloud = sample_domain(&g, &chart, 300, 7, 1e-3).unwrap();
        let base = equilibrium_test(&g, &chart, &cloud, 1e-3).unwrap();
        let rep = equilibrium_test(&g.compose(&prof), &chart, &cloud, 1e-3).unwrap();
        prop_assert!(!base.pass && !rep.pass, "fail verdict changed under reparameterization");
    }

    /// A field that passes the equilibrium predicate agrees fibrewise with
    /// its own derived scalars.
    #[test]
    fn equilibrium_fields_agree_with_their_derived_scalars(
        ix in 0usize..5,
        scale in 0.5f64..2.0,
    ) {
        let chart = flat3();
        let f = catalog_field(ix);
        let cloud = sample_domain(&f, &chart, 200, 11, 1e-3).unwrap();
        let rep = equilibrium_test(&f, &chart, &cloud, RANK_TOL_ANALYTIC).unwrap();
        prop_assert!(rep.pass);

        let fg = f.clone();
        let grad_sq = ScalarField::numeric(
            "grad_sq",
            3,
            move |p| fg.jet_at(p).map(|j| scale * j.grad.norm_squared()).unwrap_or(f64::NAN),
            1e-3,
        );
        let fl = f.clone();
        let lap = ScalarField::numeric(
            "laplacian",
            3,
            move |p| {
                fl.jet_at(p)
                    .map(|j| scale * (0..3).map(|a| j.hess[(a, a)]).sum::<f64>())
                    .unwrap_or(f64::NAN)
            },
            1e-3,
        );
        let r1 = fibrewise_agree(&f, &grad_sq, &chart, &cloud, 1e-3).unwrap();
        prop_assert!(r1.pass, "gradient-norm field disagrees: {:.3e}", r1.max_rank_ratio);
        let r2 = fibrewise_agree(&f, &lap, &chart, &cloud, 1e-3).unwrap();
        prop_assert!(r2.pass, "Laplacian field disagrees: {:.3e}", r2.max_rank_ratio);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The bracket algebra closes exactly: Jacobi identity at coefficient
    /// level for random triples.
    #[test]
    fn lie_bracket_satisfies_jacobi(
        cx in prop::array::uniform6(-2.0f64..2.0),
        cy in prop::array::uniform6(-2.0f64..2.0),
        cz in prop::array::uniform6(-2.0f64..2.0),
    ) {
        let x = LieElement::new(3, cx.to_vec()).unwrap();
        let y = LieElement::new(3, cy.to_vec()).unwrap();
        let z = LieElement::new(3, cz.to_vec()).unwrap();
        let t1 = bracket(&bracket(&x, &y).unwrap(), &z).unwrap();
        let t2 = bracket(&bracket(&y, &z).unwrap(), &x).unwrap();
        let t3 = bracket(&bracket(&z, &x).unwrap(), &y).unwrap();
        for i in 0..t1.coefficients().len() {
            let s = t1.coefficients()[i] + t2.coefficients()[i] + t3.coefficients()[i];
            prop_assert!(s.abs() < 1e-12, "Jacobi coefficient {i}: {s:.3e}");
        }
    }

    /// Identical (seed, count) reproduce the sample cloud bit for bit.
    #[test]
    fn sampling_is_deterministic(seed in 0u64..1000, count in 50usize..200) {
        let f = ScalarField::norm_sq(3);
        let chart = flat3();
        let a = sample_domain(&f, &chart, count, seed, 1e-3).unwrap();
        let b = sample_domain(&f, &chart, count, seed, 1e-3).unwrap();
        prop_assert_eq!(&a.points, &b.points);
        prop_assert_eq!(a.exclusion_radius, b.exclusion_radius);
    }
}
