//! Property tests and the slower cross-module checks.

use proptest::prelude::*;

use symmfem::analysis::{error_norms, log_log_slope, DEFAULT_ERROR_QUAD_ORDER as ERROR_QUAD_ORDER};
use symmfem::assembly::{
    assemble_load, assemble_mass, assemble_stiffness, evaluate_fe, QuadratureRule,
};
use symmfem::grid::{BoundaryMode, GridSpec, NodalVector};
use symmfem::problems;
use symmfem::solvers::{residual_norm, solve_linear, solve_smallest_eigenpair, EigenConfig, SolverConfig};
use symmfem::symmetrize::{transform, Permutation};
use symmfem::two_scale::{combine, sym_two_scale_source, ScalePair};

fn arb_permutation(d: usize) -> impl Strategy<Value = Permutation> {
    Just(()).prop_perturb(move |_, mut rng| {
        let mut image: Vec<usize> = (1..=d).collect();
        for i in (1..d).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            image.swap(i, j);
        }
        Permutation::from_image(&image).unwrap()
    })
}

fn arb_spec(d: usize) -> impl Strategy<Value = GridSpec> {
    let counts = proptest::collection::vec(1usize..6, d);
    (counts, proptest::bool::ANY).prop_map(|(subs, interior)| {
        if interior {
            let subs = subs.iter().map(|&n| n + 1).collect();
            GridSpec::cube(-1.5, 2.5, subs, BoundaryMode::Interior).unwrap()
        } else {
            GridSpec::cube(-1.5, 2.5, subs, BoundaryMode::Inclusive).unwrap()
        }
    })
}

fn counting(spec: &GridSpec) -> NodalVector {
    NodalVector::from_values(spec.clone(), (1..=spec.n_dof()).map(|v| v as f64).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn index_map_round_trips(spec in arb_spec(3)) {
        let n = spec.n_dof();
        prop_assert!(n <= 10_000);
        for lin in 1..=n {
            let lin = symmfem::grid::LinearIndex::new(lin);
            let idx = spec.inverse_index(lin).unwrap();
            prop_assert_eq!(spec.linear_index(&idx).unwrap(), lin);
        }
    }

    #[test]
    fn transform_group_action(spec in arb_spec(3), sigma in arb_permutation(3), tau in arb_permutation(3)) {
        let u = counting(&spec);
        let (step, _) = transform(&u, &tau).unwrap();
        let (two_step, _) = transform(&step, &sigma).unwrap();
        let (direct, _) = transform(&u, &tau.compose(&sigma).unwrap()).unwrap();
        prop_assert_eq!(two_step.values(), direct.values());
        prop_assert_eq!(two_step.spec(), direct.spec());
    }

    #[test]
    fn transform_involution(spec in arb_spec(4), sigma in arb_permutation(4)) {
        let u = counting(&spec);
        let (fwd, stats) = transform(&u, &sigma).unwrap();
        prop_assert_eq!(stats.elements_moved, spec.n_dof());
        let (back, _) = transform(&fwd, &sigma.inverse()).unwrap();
        prop_assert_eq!(back.values(), u.values());
    }

    // Sampling then transforming equals sampling the argument-permuted
    // function on the permuted grid, bit for bit.
    #[test]
    fn transform_consistent_with_sampling(spec in arb_spec(3), sigma in arb_permutation(3)) {
        let g = |x: &[f64]| (1.3 * x[0] + 0.7).sin() * (2.9 * x[1] - 0.2).cos() + 0.37 * x[2] * x[2];
        let u = NodalVector::sample(&spec, g);
        let (moved, _) = transform(&u, &sigma).unwrap();
        let inv = sigma.inverse();
        let permuted_spec = spec.permuted(&sigma).unwrap();
        let resampled = NodalVector::sample(&permuted_spec, |y: &[f64]| {
            let mut arg = [0.0; 3];
            for (k, a) in arg.iter_mut().enumerate() {
                *a = y[inv.apply(k + 1) - 1];
            }
            g(&arg)
        });
        prop_assert_eq!(moved.values(), resampled.values());
    }

    #[test]
    fn eoc_is_scale_invariant(e1 in 1e-9f64..1e3, ratio in 1e-3f64..1e3, c in 1e-6f64..1e6) {
        let e2 = e1 * ratio;
        let a = symmfem::analysis::eoc(e1, e2, 0.5, 0.125).unwrap();
        let b = symmfem::analysis::eoc(c * e1, c * e2, 0.5, 0.125).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn transform_cost_scales_linearly() {
    // wall time of the transform over a 64x size range; least-squares slope
    // of log(time) vs log(n_dof) must sit in [0.8, 1.2]
    let sigma = Permutation::transposition(1, 2, 3).unwrap();
    let mut sizes = Vec::new();
    let mut times = Vec::new();
    for scale in [1usize, 2, 4, 8] {
        let n1 = 64 * scale;
        let spec = GridSpec::unit(vec![n1, 32 * scale, 16], BoundaryMode::Inclusive).unwrap();
        let u = counting(&spec);
        // warm-up, then best of five
        let _ = transform(&u, &sigma).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let (_, stats) = transform(&u, &sigma).unwrap();
            best = best.min(stats.seconds());
        }
        sizes.push(spec.n_dof() as f64);
        times.push(best.max(1e-9));
    }
    let slope = log_log_slope(&sizes, &times).unwrap();
    assert!(
        (0.8..=1.2).contains(&slope),
        "slope {slope}; sizes {sizes:?} times {times:?}"
    );
}

#[test]
fn galerkin_residual_orthogonality() {
    let p = problems::poisson2d_sym();
    let spec = p.grid(vec![12, 12]).unwrap();
    let rule = QuadratureRule::gauss_legendre(3).unwrap();
    let a = assemble_stiffness(&spec, &p, &rule).unwrap();
    let f = assemble_load(&spec, &**p.source.as_ref().unwrap(), &rule).unwrap();
    let cfg = SolverConfig::default();
    let u = solve_linear(&a, &f, &cfg).unwrap();
    // residual against every basis function
    let au = a.matvec(&u);
    let f_norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let max_defect = au
        .iter()
        .zip(&f)
        .map(|(l, r)| (l - r).abs())
        .fold(0.0f64, f64::max);
    assert!(max_defect <= 10.0 * cfg.rel_tol * f_norm);
    assert!(residual_norm(&a, &u, &f) <= cfg.rel_tol * f_norm * 1.0001);
}

#[test]
fn quadrature_order_sanity_for_assembly() {
    // raising the assembly rule from q=3 to q=5 must shift example 2's
    // solution by far less than its discretization error
    let p = problems::example2();
    let spec = p.grid(vec![4, 4, 4]).unwrap();
    let cfg = SolverConfig::default();
    let u3 = symmfem::two_scale::solve_source_on(&spec, &p, 3, &cfg).unwrap();
    let u5 = symmfem::two_scale::solve_source_on(&spec, &p, 5, &cfg).unwrap();
    let shift = u3.max_abs_diff(&u5);
    let err = error_norms(&u3, p.exact.as_ref().unwrap(), 2).unwrap();
    println!("quadrature sanity: nodal shift {shift:.3e}, discretization error {:.3e}", err.l2);
    assert!(shift < err.l2, "quadrature shift {shift} not below discretization error {}", err.l2);
}

#[test]
fn error_quadrature_order_is_converged() {
    // doubling the error-integration order changes reported norms by < 0.1%
    let p = problems::example1();
    let s = ScalePair::new(36, 6).unwrap();
    let run = sym_two_scale_source(&p, &s, 3, &SolverConfig::default()).unwrap();
    let exact = p.exact.as_ref().unwrap();
    let e3 = error_norms(&run.combined, exact, ERROR_QUAD_ORDER).unwrap();
    let e6 = error_norms(&run.combined, exact, 2 * ERROR_QUAD_ORDER).unwrap();
    let dl2 = (e3.l2 - e6.l2).abs() / e6.l2;
    let dh1 = (e3.h1 - e6.h1).abs() / e6.h1;
    assert!(dl2 < 1e-3, "l2 drift {dl2}");
    assert!(dh1 < 1e-3, "h1 drift {dh1}");
}

#[test]
fn combined_interpolation_triangle_bound() {
    // interpolation samples of the first example's exact solution: the
    // combination error is bounded by the sum of component errors
    let p = problems::example1();
    let exact = p.exact.as_ref().unwrap();
    let value = exact.value.clone();
    let s = ScalePair::new(16, 4).unwrap();
    let coarse_spec = p.grid(vec![4, 4, 4]).unwrap();
    let coarse = NodalVector::sample(&coarse_spec, |x| value(x));
    let mut fine = Vec::new();
    for dir in 0..3 {
        let mut subs = vec![s.coarse(); 3];
        subs[dir] = s.fine();
        let spec = p.grid(subs).unwrap();
        fine.push(NodalVector::sample(&spec, |x| value(x)));
    }
    let mut bound = 2.0 * error_norms(&coarse, exact, 2).unwrap().l2;
    for comp in &fine {
        bound += error_norms(comp, exact, 2).unwrap().l2;
    }
    let combined = combine(fine, coarse).unwrap();
    let err = error_norms(&combined, exact, 2).unwrap().l2;
    assert!(err <= bound * (1.0 + 1e-12), "combined {err} vs triangle bound {bound}");
}

#[test]
fn harmonic_oscillator_eigenvalue_above_exact() {
    let p = problems::example3();
    let spec = p.grid(vec![20, 20, 20]).unwrap();
    let rule = QuadratureRule::gauss_legendre(3).unwrap();
    let a = assemble_stiffness(&spec, &p, &rule).unwrap();
    let m = assemble_mass(&spec, &rule).unwrap();
    let sol = solve_smallest_eigenpair(&a, &m, &EigenConfig::default(), None).unwrap();
    assert!(sol.eigenvalue > 1.5, "lambda_h = {}", sol.eigenvalue);
    assert!(sol.eigenvalue < 1.6, "lambda_h = {} looks wrong", sol.eigenvalue);
}

#[test]
fn symmetry_guard_flags_asymmetric_problems() {
    // an asymmetric source must trip the advisory warning, not fail the run
    let mut p = problems::poisson2d_sym();
    p.source = Some(std::sync::Arc::new(|x: &[f64]| x[0]));
    p.exact = None;
    let s = ScalePair::new(8, 4).unwrap();
    let run = sym_two_scale_source(&p, &s, 3, &SolverConfig::default()).unwrap();
    assert!(run.symmetry_warning.is_some());
}

#[test]
fn stage_timings_account_for_total() {
    let p = problems::example1();
    let s = ScalePair::new(16, 4).unwrap();
    let run = sym_two_scale_source(&p, &s, 3, &SolverConfig::default()).unwrap();
    let sum = run.timings.sum_stages();
    let total = run.timings.total;
    assert!(total > 0.0);
    assert!(
        (total - sum).abs() <= 0.05 * total,
        "stages {sum} vs total {total}"
    );
    assert_eq!(run.dof_coarse, 27);
    assert_eq!(run.dof_fine, 15 * 9);
}

#[test]
fn interior_sample_equals_fe_interpolant_of_dirichlet_function() {
    // nodal samples of a function vanishing on the boundary coincide with
    // its Q1 interpolant, so evaluate_fe reproduces it at the nodes
    let p = problems::example1();
    let value = p.exact.as_ref().unwrap().value.clone();
    let spec = p.grid(vec![4, 3, 3]).unwrap();
    let u = NodalVector::sample(&spec, |x| value(x));
    let mut probe = vec![0usize; 3];
    probe[0] = 1;
    let x = spec.node_coords(&probe).unwrap();
    let lin = spec.linear_index(&probe).unwrap();
    assert!((evaluate_fe(&u, &x).unwrap() - u.get(lin)).abs() < 1e-15);
}
