//! The acceptance suite: every shipped claim about accuracy, exactness and
//! cost structure, runnable both from tests and from the CLI's `verify`
//! subcommand. Each criterion prints one pass/fail line.

use rayon::prelude::*;

use crate::analysis::{error_norms, log_log_slope, DEFAULT_ERROR_QUAD_ORDER};
use crate::assembly::{assemble_mass, assemble_stiffness, DiffusionCoeff, ProblemDef, QuadratureRule, SparseMatrix};
use crate::error::Result;
use crate::grid::{BoundaryMode, GridSpec, NodalVector};
use crate::problems;
use crate::solvers::{solve_smallest_eigenpair, EigenConfig, SolverConfig};
use crate::symmetrize::{transform, Permutation};
use crate::two_scale::{
    combine, plain_two_scale_source, solve_source_on, sym_two_scale_eigen, sym_two_scale_source, ScalePair,
};

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "{} criterion-{} ({}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.details
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct AcceptanceOptions {
    /// Run the eigenvalue criterion over all four grids instead of the two
    /// that suffice for CI.
    pub full_eigen_sequence: bool,
}

pub fn all_passed(reports: &[CriterionReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionReport> {
    vec![
        criterion_1_figure_identities(),
        criterion_2_transform_vs_resolve(),
        criterion_3_source_convergence(),
        criterion_4_eigen_accuracy(opts.full_eigen_sequence),
        criterion_5_cost_structure(),
        criterion_6_assembly_oracle(),
        criterion_7_invariants(),
    ]
}

fn wrap(id: usize, name: &'static str, outcome: Result<(bool, String)>) -> CriterionReport {
    match outcome {
        Ok((passed, details)) => CriterionReport { id, name, passed, details },
        Err(e) => CriterionReport {
            id,
            name,
            passed: false,
            details: format!("errored: {e}"),
        },
    }
}

/// Criterion 1: the five index identities read off the grid figures hold
/// bit-exactly through `linear_index` and `transform`.
pub fn criterion_1_figure_identities() -> CriterionReport {
    wrap(1, "figure-caption index identities", (|| {
        let mut failures = Vec::new();

        let counting = |spec: &GridSpec| {
            NodalVector::from_values(spec.clone(), (1..=spec.n_dof()).map(|v| v as f64).collect()).unwrap()
        };

        // h = (1/2, 1): output 2 <- input 4 under (1,2)
        let g = GridSpec::unit(vec![2, 1], BoundaryMode::Inclusive)?;
        let (out, _) = transform(&counting(&g), &Permutation::transposition(1, 2, 2)?)?;
        if out.values()[1] != 4.0 {
            failures.push(format!("fig-1: output 2 holds {}, want input 4", out.values()[1]));
        }

        // h = (1/4, 1/2): output 11 <- input 9
        let g = GridSpec::unit(vec![4, 2], BoundaryMode::Inclusive)?;
        let (out, _) = transform(&counting(&g), &Permutation::transposition(1, 2, 2)?)?;
        if out.values()[10] != 9.0 {
            failures.push(format!("fig-2: output 11 holds {}, want input 9", out.values()[10]));
        }

        // I(3,1,1) = 24 on N = (4,2,2)
        let g3 = GridSpec::unit(vec![4, 2, 2], BoundaryMode::Inclusive)?;
        let lin = g3.linear_index(&[3, 1, 1])?.get();
        if lin != 24 {
            failures.push(format!("fig-3: I(3,1,1) = {lin}, want 24"));
        }

        // output 25 <- input 19 under (1,2); output 16 <- input 12 under (1,3)
        let (out, _) = transform(&counting(&g3), &Permutation::transposition(1, 2, 3)?)?;
        if out.values()[24] != 19.0 {
            failures.push(format!("fig-4: output 25 holds {}, want input 19", out.values()[24]));
        }
        let (out, _) = transform(&counting(&g3), &Permutation::transposition(1, 3, 3)?)?;
        if out.values()[15] != 12.0 {
            failures.push(format!("fig-5: output 16 holds {}, want input 12", out.values()[15]));
        }

        if failures.is_empty() {
            Ok((true, "all five identities hold exactly".into()))
        } else {
            Ok((false, failures.join("; ")))
        }
    })())
}

/// Criterion 2: transform-produced anisotropic solutions agree with direct
/// re-solves to 1e-8 in the max norm (solver rel_tol 1e-10).
pub fn criterion_2_transform_vs_resolve() -> CriterionReport {
    wrap(2, "transform vs re-solve oracle", (|| {
        let p = problems::example1();
        let cfg = SolverConfig::default();
        let mut worst = 0.0f64;
        for (n, big_n) in [(16usize, 4usize), (36, 6)] {
            let fine_spec = p.grid(vec![n, big_n, big_n])?;
            let u1 = solve_source_on(&fine_spec, &p, 3, &cfg)?;
            for i in 2..=3 {
                let sigma = Permutation::transposition(1, i, 3)?;
                let (moved, _) = transform(&u1, &sigma)?;
                let resolved = solve_source_on(moved.spec(), &p, 3, &cfg)?;
                worst = worst.max(moved.max_abs_diff(&resolved));
            }
        }
        Ok((worst <= 1e-8, format!("max |transform - resolve| = {worst:.3e} (limit 1e-8)")))
    })())
}

const SOURCE_GRIDS: [(usize, usize); 5] = [(16, 4), (36, 6), (64, 8), (100, 10), (144, 12)];

/// Criterion 3: least-squares convergence orders of the symmetrized
/// two-scale solution for the two source examples.
pub fn criterion_3_source_convergence() -> CriterionReport {
    wrap(3, "source convergence orders", (|| {
        let cfg = SolverConfig::default();
        let mut details = Vec::new();
        let mut ok = true;
        for (label, p) in [("ex1", problems::example1()), ("ex2", problems::example2())] {
            let side = p.hi[0] - p.lo[0];
            let mut hs = Vec::new();
            let mut l2s = Vec::new();
            let mut h1s = Vec::new();
            for (n, big_n) in SOURCE_GRIDS {
                let s = ScalePair::new(n, big_n)?;
                let run = sym_two_scale_source(&p, &s, 3, &cfg)?;
                let err = error_norms(&run.combined, p.exact.as_ref().unwrap(), DEFAULT_ERROR_QUAD_ORDER)?;
                hs.push(side / big_n as f64);
                l2s.push(err.l2);
                h1s.push(err.h1);
            }
            let sl2 = log_log_slope(&hs, &l2s).unwrap_or(f64::NAN);
            let sh1 = log_log_slope(&hs, &h1s).unwrap_or(f64::NAN);
            if !(sl2 >= 3.2 && sh1 >= 1.6) {
                ok = false;
            }
            details.push(format!("{label}: slope_l2 = {sl2:.2} (>= 3.2), slope_h1 = {sh1:.2} (>= 1.6)"));
        }
        Ok((ok, details.join("; ")))
    })())
}

const EIGEN_GRIDS: [(usize, usize); 4] = [(40, 20), (62, 25), (90, 30), (122, 35)];

/// Criterion 4: the combined eigenvalue beats the coarse one at every grid
/// and its error decreases monotonically along the sequence.
pub fn criterion_4_eigen_accuracy(full_sequence: bool) -> CriterionReport {
    wrap(4, "eigenvalue accuracy", (|| {
        let p = problems::example3();
        let exact = p.exact_eigen.as_ref().unwrap().eigenvalue;
        let cfg = EigenConfig::default();
        let grids: &[(usize, usize)] = if full_sequence { &EIGEN_GRIDS } else { &EIGEN_GRIDS[..2] };
        let mut ok = true;
        let mut prev_err = f64::INFINITY;
        let mut details = Vec::new();
        for (gi, &(n, big_n)) in grids.iter().enumerate() {
            let s = ScalePair::new(n, big_n)?;
            let run = sym_two_scale_eigen(&p, &s, 3, &cfg)?;
            let b = run.eigenvalue.unwrap();
            let coarse = run.coarse_eigenvalue.unwrap();
            let b_err = (b - exact).abs();
            let c_err = (coarse - exact).abs();
            if !(b_err < c_err && b_err < prev_err) {
                ok = false;
            }
            details.push(format!("({n},{big_n}): |B l - {exact}| = {b_err:.3e}, coarse {c_err:.3e}"));
            prev_err = b_err;
            if gi == 0 {
                // the combined eigenfunction is only approximately unit;
                // the deviation is of the coarse-interpolation order H^2
                let norm = crate::analysis::function_norms(&run.combined, 2)?.l2;
                let h_coarse = (p.hi[0] - p.lo[0]) / big_n as f64;
                if (norm - 1.0).abs() > h_coarse * h_coarse {
                    ok = false;
                    details.push(format!("|B u| = {norm:.6} strays beyond H^2 from 1"));
                } else {
                    details.push(format!("|B u| = {norm:.6}"));
                }
            }
        }
        let tag = if full_sequence { "full sequence" } else { "first two grids" };
        Ok((ok, format!("{tag}; {}", details.join("; "))))
    })())
}

/// Criterion 5: transforms are a vanishing fraction of the anisotropic
/// solve, and the symmetrized driver is well under the plain driver's cost.
pub fn criterion_5_cost_structure() -> CriterionReport {
    wrap(5, "cost structure", (|| {
        let p = problems::example1();
        let cfg = SolverConfig::default();
        // untimed warm-up at the smallest grid
        let warm = ScalePair::new(16, 4)?;
        let _ = sym_two_scale_source(&p, &warm, 3, &cfg)?;
        let _ = plain_two_scale_source(&p, &warm, 3, &cfg)?;

        let s = ScalePair::new(144, 12)?;
        let sym = sym_two_scale_source(&p, &s, 3, &cfg)?;
        let plain = plain_two_scale_source(&p, &s, 3, &cfg)?;
        let t_transform = sym.timings.transforms;
        let t_fine = sym.timings.fine_solves[0];
        let ratio_transform = t_transform / t_fine;
        let ratio_total = sym.timings.total / plain.timings.total;
        let ok = ratio_transform <= 0.05 && ratio_total <= 0.6;
        Ok((
            ok,
            format!(
                "transform/fine-solve = {ratio_transform:.4} (limit 0.05); sym/plain total = {ratio_total:.3} (limit 0.6; sym {:.3}s, plain {:.3}s)",
                sym.timings.total, plain.timings.total
            ),
        ))
    })())
}

/// Independent dense assembly used as the oracle for criterion 6. Evaluates
/// global hat functions directly; shares nothing with the sparse path but
/// the quadrature rule.
pub mod dense {
    use super::*;

    // value and derivative of the 1d hat centered at inclusive node t
    fn hat(spec: &GridSpec, k: usize, t: usize, x: f64) -> (f64, f64) {
        let node = spec.coord(k, t);
        if x <= node {
            if t == 0 {
                return (if x == node { 1.0 } else { 0.0 }, 0.0);
            }
            let left = spec.coord(k, t - 1);
            if x < left {
                (0.0, 0.0)
            } else {
                ((x - left) / (node - left), 1.0 / (node - left))
            }
        } else {
            if t == spec.subdivisions()[k] {
                return (0.0, 0.0);
            }
            let right = spec.coord(k, t + 1);
            if x > right {
                (0.0, 0.0)
            } else {
                ((right - x) / (right - node), -1.0 / (right - node))
            }
        }
    }

    /// Row-major dense Galerkin matrix; `p = None` assembles the mass form.
    pub fn assemble_dense(spec: &GridSpec, p: Option<&ProblemDef>, rule: &QuadratureRule) -> Result<Vec<f64>> {
        let d = spec.dim();
        let n = spec.n_dof();
        let shift = match spec.mode() {
            BoundaryMode::Inclusive => 0usize,
            BoundaryMode::Interior => 1usize,
        };
        let mut a = vec![0.0f64; n * n];
        let n_cells: usize = spec.subdivisions().iter().product();
        let q = rule.order();
        let qpd = q.pow(d as u32);

        let mut vals = vec![0.0f64; n];
        let mut grads = vec![0.0f64; n * d];
        let mut x = vec![0.0f64; d];
        let mut amat = vec![0.0f64; d * d];
        let mut bvec = vec![0.0f64; d];
        let mut cell = vec![0usize; d];

        for flat_cell in 0..n_cells {
            let mut rem = flat_cell;
            for k in 0..d {
                cell[k] = rem % spec.subdivisions()[k];
                rem /= spec.subdivisions()[k];
            }
            for qp in 0..qpd {
                let mut w = 1.0;
                let mut rem = qp;
                for k in 0..d {
                    let g = rem % q;
                    rem /= q;
                    let a_k = spec.coord(k, cell[k]);
                    let b_k = spec.coord(k, cell[k] + 1);
                    x[k] = a_k + rule.points()[g] * (b_k - a_k);
                    w *= rule.weights()[g] * (b_k - a_k);
                }

                // all global basis values and gradients at x
                for dof in 0..n {
                    let mut rem = dof;
                    let mut v = 1.0;
                    let mut partt = [0.0f64; 16];
                    let mut hats = [0.0f64; 16];
                    for k in 0..d {
                        let c = spec.node_count(k);
                        let idx = rem % c;
                        rem /= c;
                        let (hv, hd) = hat(spec, k, idx + shift, x[k]);
                        hats[k] = hv;
                        partt[k] = hd;
                        v *= hv;
                    }
                    vals[dof] = v;
                    for k in 0..d {
                        let mut g = partt[k];
                        for m in 0..d {
                            if m != k {
                                g *= hats[m];
                            }
                        }
                        grads[dof * d + k] = g;
                    }
                }

                let mut pot = 0.0;
                let mut has_b = false;
                if let Some(p) = p {
                    p.diffusion_at(&x, &mut amat)?;
                    if let Some(b) = &p.advection {
                        b(&x, &mut bvec);
                        has_b = true;
                    }
                    if let Some(v) = &p.potential {
                        pot = v(&x);
                    }
                }

                for r in 0..n {
                    let vr = vals[r];
                    let gr = &grads[r * d..r * d + d];
                    if vr == 0.0 && gr.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    for c in 0..n {
                        let vc = vals[c];
                        let gc = &grads[c * d..c * d + d];
                        let term = match p {
                            None => vc * vr,
                            Some(pd) => {
                                let mut t = 0.0;
                                match &pd.diffusion {
                                    DiffusionCoeff::ScaledIdentity(cc) => {
                                        for i in 0..d {
                                            t += cc * gc[i] * gr[i];
                                        }
                                    }
                                    DiffusionCoeff::Full(_) => {
                                        for i in 0..d {
                                            for j in 0..d {
                                                t += amat[i * d + j] * gc[i] * gr[j];
                                            }
                                        }
                                    }
                                }
                                if has_b {
                                    let mut s = 0.0;
                                    for i in 0..d {
                                        s += bvec[i] * gc[i];
                                    }
                                    t += s * vr;
                                }
                                t + pot * vc * vr
                            }
                        };
                        a[r * n + c] += w * term;
                    }
                }
            }
        }
        Ok(a)
    }
}

fn full_coefficient_problem(d: usize) -> ProblemDef {
    use std::sync::Arc;
    let diffusion = DiffusionCoeff::Full(Arc::new(move |x: &[f64], a: &mut [f64]| {
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = if i == j {
                    1.5 + (i as f64 + 1.0) * 0.3 + x[i] * x[i]
                } else {
                    0.2 / (1.0 + (i as f64 - j as f64).abs())
                };
            }
        }
    }));
    let advection = Arc::new(move |_: &[f64], b: &mut [f64]| {
        for (i, v) in b.iter_mut().enumerate() {
            *v = 0.4 - 0.25 * i as f64;
        }
    });
    ProblemDef {
        dim: d,
        lo: vec![0.0; d],
        hi: vec![1.0; d],
        diffusion,
        advection: Some(advection),
        potential: Some(Arc::new(|x: &[f64]| 1.0 + x.iter().product::<f64>())),
        source: None,
        exact: None,
        exact_eigen: None,
    }
}

fn compare_entrywise(sparse: &SparseMatrix, dense: &[f64], n: usize) -> Option<String> {
    // entries that cancel to zero carry only rounding residue; compare those
    // against the matrix scale instead of their own magnitude
    let matrix_scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for r in 0..n {
        for c in 0..n {
            let s = sparse.get(r, c);
            let d = dense[r * n + c];
            let tol = 1e-13 * s.abs().max(d.abs()).max(matrix_scale);
            if (s - d).abs() > tol {
                return Some(format!("entry ({r},{c}): sparse {s:.16e} vs dense {d:.16e}"));
            }
        }
    }
    None
}

/// Criterion 6: sparse assembly equals an independently coded dense
/// assembly entry-wise to 1e-13 relative on every small grid.
pub fn criterion_6_assembly_oracle() -> CriterionReport {
    wrap(6, "brute-force assembly oracle", (|| {
        let rule = QuadratureRule::gauss_legendre(3)?;
        let mut cases: Vec<(GridSpec, ProblemDef)> = Vec::new();
        for n1 in 2..=9usize {
            for n2 in 2..=9usize {
                if (n1 - 1) * (n2 - 1) <= 64 {
                    let spec = GridSpec::unit(vec![n1, n2], BoundaryMode::Interior)?;
                    cases.push((spec, full_coefficient_problem(2)));
                }
            }
        }
        for n1 in 2..=5usize {
            for n2 in 2..=5usize {
                for n3 in 2..=5usize {
                    if (n1 - 1) * (n2 - 1) * (n3 - 1) <= 64 {
                        let spec = GridSpec::unit(vec![n1, n2, n3], BoundaryMode::Interior)?;
                        cases.push((spec, full_coefficient_problem(3)));
                    }
                }
            }
        }
        // the paper's variable-coefficient example on its own box
        let ex2 = problems::example2();
        for subs in [vec![2, 2, 2], vec![3, 2, 2], vec![3, 3, 3], vec![5, 3, 2]] {
            cases.push((ex2.grid(subs)?, ex2.clone()));
        }

        let outcomes: Vec<Option<String>> = cases
            .par_iter()
            .map(|(spec, p)| -> Result<Option<String>> {
                let n = spec.n_dof();
                let sparse_a = assemble_stiffness(spec, p, &rule)?;
                let dense_a = dense::assemble_dense(spec, Some(p), &rule)?;
                if let Some(err) = compare_entrywise(&sparse_a, &dense_a, n) {
                    return Ok(Some(format!("stiffness {:?}: {err}", spec.subdivisions())));
                }
                let sparse_m = assemble_mass(spec, &rule)?;
                let dense_m = dense::assemble_dense(spec, None, &rule)?;
                if let Some(err) = compare_entrywise(&sparse_m, &dense_m, n) {
                    return Ok(Some(format!("mass {:?}: {err}", spec.subdivisions())));
                }
                Ok(None)
            })
            .collect::<Result<Vec<_>>>()?;

        let n_cases = cases.len();
        match outcomes.into_iter().flatten().next() {
            Some(first) => Ok((false, first)),
            None => Ok((true, format!("{n_cases} grids matched entry-wise to 1e-13 relative"))),
        }
    })())
}

/// Criterion 7: invariant suite (group action, involution, affine
/// reproduction, Rayleigh bound, manufactured right-hand sides).
pub fn criterion_7_invariants() -> CriterionReport {
    wrap(7, "invariant suites", (|| {
        let mut failures: Vec<String> = Vec::new();

        // permutation group action and involution, exact
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move |m: usize| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 33) as usize % m
        };
        for d in 2..=4usize {
            let subs: Vec<usize> = (0..d).map(|k| 2 + (k + 1) % 3).collect();
            let spec = GridSpec::unit(subs, BoundaryMode::Inclusive)?;
            let u = NodalVector::from_values(
                spec.clone(),
                (1..=spec.n_dof()).map(|v| v as f64).collect(),
            )?;
            for _ in 0..6 {
                let mut image: Vec<usize> = (1..=d).collect();
                for i in (1..d).rev() {
                    image.swap(i, next(i + 1));
                }
                let sigma = Permutation::from_image(&image)?;
                let mut image2: Vec<usize> = (1..=d).collect();
                for i in (1..d).rev() {
                    image2.swap(i, next(i + 1));
                }
                let tau = Permutation::from_image(&image2)?;

                let (step1, _) = transform(&u, &tau)?;
                let (two_step, _) = transform(&step1, &sigma)?;
                let (direct, _) = transform(&u, &tau.compose(&sigma)?)?;
                if two_step.values() != direct.values() || two_step.spec() != direct.spec() {
                    failures.push(format!("group action violated for d={d}"));
                }

                let (fwd, _) = transform(&u, &sigma)?;
                let (back, _) = transform(&fwd, &sigma.inverse())?;
                if back.values() != u.values() {
                    failures.push(format!("involution violated for d={d}"));
                }
            }
        }

        // affine reproduction of the combination
        for d in [2usize, 3] {
            let s = ScalePair::new(6, 2)?;
            let g = |x: &[f64]| 0.5 + x.iter().enumerate().map(|(k, v)| (1.0 + k as f64) * v).sum::<f64>();
            let coarse_spec = GridSpec::unit(vec![s.coarse(); d], BoundaryMode::Inclusive)?;
            let coarse = NodalVector::sample(&coarse_spec, g);
            let fine: Vec<NodalVector> = (0..d)
                .map(|dir| {
                    let mut subs = vec![s.coarse(); d];
                    subs[dir] = s.fine();
                    NodalVector::sample(&GridSpec::unit(subs, BoundaryMode::Inclusive).unwrap(), g)
                })
                .collect();
            let c = combine(fine, coarse)?;
            for t in [0.13f64, 0.5, 0.86] {
                let x = vec![t; d];
                let v = c.evaluate(&x)?;
                if (v - g(&x)).abs() > 1e-13 {
                    failures.push(format!("affine reproduction off by {:.2e} (d={d})", (v - g(&x)).abs()));
                }
            }
        }

        // Rayleigh bound for the planar Dirichlet Laplacian
        let exact = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        let p2 = ProblemDef {
            dim: 2,
            lo: vec![0.0; 2],
            hi: vec![1.0; 2],
            diffusion: DiffusionCoeff::ScaledIdentity(1.0),
            advection: None,
            potential: None,
            source: None,
            exact: None,
            exact_eigen: None,
        };
        let rule = QuadratureRule::gauss_legendre(3)?;
        for n in [2usize, 4, 8] {
            let spec = GridSpec::unit(vec![n, n], BoundaryMode::Interior)?;
            let a = assemble_stiffness(&spec, &p2, &rule)?;
            let m = assemble_mass(&spec, &rule)?;
            let sol = solve_smallest_eigenpair(&a, &m, &EigenConfig::default(), None)?;
            if sol.eigenvalue < exact {
                failures.push(format!("Rayleigh bound violated at N={n}: {} < {exact}", sol.eigenvalue));
            }
            if n == 2 && (sol.eigenvalue - 24.0).abs() > 1e-8 {
                failures.push(format!("N=2 eigenvalue {} != 24", sol.eigenvalue));
            }
        }

        // manufactured right-hand sides against finite differences
        for (label, p) in [("ex1", problems::example1()), ("ex2", problems::example2())] {
            let worst = problems::validate_manufactured_rhs(&p, 1000, 1e-4)?;
            if worst > 1e-5 {
                failures.push(format!("{label} rhs mismatch {worst:.3e} > 1e-5"));
            }
        }

        if failures.is_empty() {
            Ok((true, "group action, involution, affine reproduction, Rayleigh bound, manufactured rhs".into()))
        } else {
            Ok((false, failures.join("; ")))
        }
    })())
}
