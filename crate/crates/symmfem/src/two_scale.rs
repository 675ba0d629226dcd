//! The two-scale combination operator and its drivers.
//!
//! The combined approximation is `sum_i w_i - (d-1) w_coarse`, where `w_i`
//! lives on the grid that is fine in direction `i` and coarse elsewhere.
//! The plain drivers solve all `d` anisotropic problems; the symmetrized
//! drivers solve only the first and produce the rest by the index transform,
//! which is valid when the continuous solution is symmetric.

use std::time::Instant;

use crate::analysis::FeFunction;
use crate::assembly::{
    assemble_load, assemble_mass, assemble_stiffness, eval_slice, evaluate_fe, ProblemDef,
    QuadratureRule,
};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, NodalVector};
use crate::solvers::{solve_linear, solve_smallest_eigenpair, EigenConfig, SignRule, SolverConfig};
use crate::symmetrize::{is_symmetric_sample, transform, Permutation};

/// Coarse/fine subdivision pair `(N, n)`. The paper's theory assumes `n/N`
/// is an integer; the drivers only require `n >= 2N` and expose
/// [`nested`](Self::nested) so callers can tell the cases apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalePair {
    fine: usize,
    coarse: usize,
}

impl ScalePair {
    pub fn new(fine: usize, coarse: usize) -> Result<Self> {
        if coarse < 2 {
            return Err(Error::InvalidScalePair {
                reason: format!("coarse count must be at least 2, got {coarse}"),
            });
        }
        if fine < 2 * coarse {
            return Err(Error::InvalidScalePair {
                reason: format!("fine count {fine} must be at least twice the coarse count {coarse}"),
            });
        }
        Ok(ScalePair { fine, coarse })
    }

    /// Pair with `h` close to `H^2` on a box of the given side length:
    /// `n = round(N^2 / side)`.
    pub fn matched(coarse: usize, side: f64) -> Result<Self> {
        let fine = ((coarse * coarse) as f64 / side).round() as usize;
        ScalePair::new(fine, coarse)
    }

    pub fn fine(&self) -> usize {
        self.fine
    }

    pub fn coarse(&self) -> usize {
        self.coarse
    }

    /// True when the coarse grid nests in the fine one (`n/N` integer).
    pub fn nested(&self) -> bool {
        self.fine.is_multiple_of(self.coarse)
    }

    pub fn ratio(&self) -> f64 {
        self.fine as f64 / self.coarse as f64
    }
}

/// Weighted sum of the anisotropic solutions and the coarse solution.
/// Stored as components; evaluation sums `d + 1` multilinear interpolations
/// rather than prolongating onto the full fine tensor grid.
pub struct CombinedFunction {
    fine: Vec<NodalVector>,
    coarse: NodalVector,
}

/// Builds the combination from `d` anisotropic components (fine in
/// directions `1..=d` respectively) and the coarse solution; weights are
/// `+1` each and `-(d-1)`.
pub fn combine(fine: Vec<NodalVector>, coarse: NodalVector) -> Result<CombinedFunction> {
    CombinedFunction::new(fine, coarse)
}

impl CombinedFunction {
    pub fn new(fine: Vec<NodalVector>, coarse: NodalVector) -> Result<Self> {
        let d = coarse.spec().dim();
        if fine.len() != d {
            return Err(Error::InconsistentComponents {
                reason: format!("expected {d} fine components, got {}", fine.len()),
            });
        }
        let cs = coarse.spec();
        let big_n = cs.subdivisions()[0];
        if cs.subdivisions().iter().any(|&v| v != big_n) {
            return Err(Error::InconsistentComponents {
                reason: "coarse component is not isotropic".into(),
            });
        }
        if !cs.is_cubic_box() {
            return Err(Error::InconsistentComponents {
                reason: "combination requires a cubic box".into(),
            });
        }
        let little_n = fine[0].spec().subdivisions()[0];
        for (i, comp) in fine.iter().enumerate() {
            let s = comp.spec();
            if s.dim() != d || s.lo() != cs.lo() || s.hi() != cs.hi() || s.mode() != cs.mode() {
                return Err(Error::InconsistentComponents {
                    reason: format!("component {} does not match the coarse grid's box or mode", i + 1),
                });
            }
            for k in 0..d {
                let expect = if k == i { little_n } else { big_n };
                if s.subdivisions()[k] != expect {
                    return Err(Error::InconsistentComponents {
                        reason: format!(
                            "component {} has {} subdivisions in direction {}, expected {expect}",
                            i + 1,
                            s.subdivisions()[k],
                            k + 1
                        ),
                    });
                }
            }
        }
        if little_n <= big_n {
            return Err(Error::InconsistentComponents {
                reason: format!("fine count {little_n} does not exceed coarse count {big_n}"),
            });
        }
        Ok(CombinedFunction { fine, coarse })
    }

    pub fn dim(&self) -> usize {
        self.coarse.spec().dim()
    }

    pub fn fine_components(&self) -> &[NodalVector] {
        &self.fine
    }

    pub fn coarse_component(&self) -> &NodalVector {
        &self.coarse
    }

    pub fn coarse_weight(&self) -> f64 {
        -((self.dim() - 1) as f64)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for comp in &self.fine {
            v += evaluate_fe(comp, x)?;
        }
        v += self.coarse_weight() * evaluate_fe(&self.coarse, x)?;
        Ok(v)
    }
}

impl FeFunction for CombinedFunction {
    fn dim(&self) -> usize {
        self.coarse.spec().dim()
    }

    fn lo(&self) -> &[f64] {
        self.coarse.spec().lo()
    }

    fn hi(&self) -> &[f64] {
        self.coarse.spec().hi()
    }

    fn breakpoints(&self, k: usize) -> Vec<f64> {
        let mut pts = Vec::new();
        for comp in &self.fine {
            pts.extend(FeFunction::breakpoints(comp, k));
        }
        pts.extend(FeFunction::breakpoints(&self.coarse, k));
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let span = self.hi()[k] - self.lo()[k];
        let tol = span * 1e-9;
        let mut merged: Vec<f64> = Vec::with_capacity(pts.len());
        for p in pts {
            if merged.last().is_none_or(|&last| p - last > tol) {
                merged.push(p);
            }
        }
        merged
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d = self.dim();
        debug_assert!(d <= 16);
        let mut tmp = [0.0f64; 16];
        grad[..d].fill(0.0);
        let mut v = 0.0;
        for comp in &self.fine {
            v += eval_slice(comp.spec(), comp.values(), x, Some(&mut tmp[..d]))?;
            for k in 0..d {
                grad[k] += tmp[k];
            }
        }
        let w = self.coarse_weight();
        v += w * eval_slice(self.coarse.spec(), self.coarse.values(), x, Some(&mut tmp[..d]))?;
        for k in 0..d {
            grad[k] += w * tmp[k];
        }
        Ok(v)
    }

    fn dofs(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.fine.iter().map(|c| c.spec().n_dof()).collect();
        d.push(self.coarse.spec().n_dof());
        d
    }

    fn components(&self) -> Option<Vec<(f64, &NodalVector)>> {
        let mut parts: Vec<(f64, &NodalVector)> = self.fine.iter().map(|c| (1.0, c)).collect();
        parts.push((self.coarse_weight(), &self.coarse));
        Some(parts)
    }
}

/// Wall-clock seconds per stage. The plain drivers record one fine-solve
/// entry per direction, the symmetrized ones a single entry.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub coarse_solve: f64,
    pub fine_solves: Vec<f64>,
    pub transforms: f64,
    pub combine: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn sum_stages(&self) -> f64 {
        self.coarse_solve + self.fine_solves.iter().sum::<f64>() + self.transforms + self.combine
    }

    pub fn fine_total(&self) -> f64 {
        self.fine_solves.iter().sum()
    }
}

/// Result of one two-scale run.
pub struct TwoScaleResult {
    pub combined: CombinedFunction,
    /// Combined eigenvalue approximation, eigen drivers only.
    pub eigenvalue: Option<f64>,
    pub coarse_eigenvalue: Option<f64>,
    pub fine_eigenvalues: Vec<f64>,
    pub timings: StageTimings,
    pub dof_coarse: usize,
    pub dof_fine: usize,
    /// Set when the coarse solution fails the symmetry guard.
    pub symmetry_warning: Option<String>,
}

const SYMMETRY_GUARD_TOL: f64 = 1e-8;

fn require_cubic_box(p: &ProblemDef) -> Result<()> {
    if p.lo.iter().any(|&v| v != p.lo[0]) || p.hi.iter().any(|&v| v != p.hi[0]) {
        return Err(Error::AsymmetricDomain {
            reason: "two-scale drivers require a cubic box".into(),
        });
    }
    Ok(())
}

fn anisotropic_subdivisions(d: usize, s: &ScalePair, fine_dir: usize) -> Vec<usize> {
    let mut subs = vec![s.coarse(); d];
    subs[fine_dir] = s.fine();
    subs
}

/// Galerkin solve of the source problem on one grid.
pub fn solve_source_on(
    spec: &GridSpec,
    p: &ProblemDef,
    quad_order: usize,
    cfg: &SolverConfig,
) -> Result<NodalVector> {
    let source = p.source.as_ref().ok_or_else(|| Error::InvalidConfig {
        reason: "problem has no source term".into(),
    })?;
    let rule = QuadratureRule::gauss_legendre(quad_order)?;
    let a = assemble_stiffness(spec, p, &rule)?;
    let f = assemble_load(spec, &**source, &rule)?;
    let u = solve_linear(&a, &f, cfg)?;
    NodalVector::from_values(spec.clone(), u)
}

/// Galerkin eigen-solve on one grid; the eigenvector is M-normalized and
/// oriented positive at the box center.
pub fn solve_eigen_on(
    spec: &GridSpec,
    p: &ProblemDef,
    quad_order: usize,
    cfg: &EigenConfig,
) -> Result<(f64, NodalVector)> {
    if p.advection.is_some() {
        return Err(Error::InvalidConfig {
            reason: "eigenvalue path requires b = 0 (symmetric form)".into(),
        });
    }
    let rule = QuadratureRule::gauss_legendre(quad_order)?;
    let a = assemble_stiffness(spec, p, &rule)?;
    let m = assemble_mass(spec, &rule)?;
    let center: Vec<f64> = (0..p.dim).map(|k| 0.5 * (p.lo[k] + p.hi[k])).collect();
    let orient = move |v: &[f64]| eval_slice(spec, v, &center, None).unwrap_or(0.0);
    let sol = match cfg.sign_rule {
        SignRule::PositiveAtCenter => solve_smallest_eigenpair(&a, &m, cfg, Some(&orient))?,
        SignRule::LargestComponentPositive => solve_smallest_eigenpair(&a, &m, cfg, None)?,
    };
    Ok((sol.eigenvalue, NodalVector::from_values(spec.clone(), sol.eigenvector)?))
}

/// Standard FEM on the isotropic grid with `n` subdivisions per direction;
/// returns the solution and the wall time of the solve.
pub fn fem_source(p: &ProblemDef, n: usize, quad_order: usize, cfg: &SolverConfig) -> Result<(NodalVector, f64)> {
    let spec = p.grid(vec![n; p.dim])?;
    let start = Instant::now();
    let u = solve_source_on(&spec, p, quad_order, cfg)?;
    Ok((u, start.elapsed().as_secs_f64()))
}

/// Standard FEM eigen-solve on the isotropic fine grid.
pub fn fem_eigen(p: &ProblemDef, n: usize, quad_order: usize, cfg: &EigenConfig) -> Result<(f64, NodalVector, f64)> {
    let spec = p.grid(vec![n; p.dim])?;
    let start = Instant::now();
    let (lambda, u) = solve_eigen_on(&spec, p, quad_order, cfg)?;
    Ok((lambda, u, start.elapsed().as_secs_f64()))
}

fn guard_symmetry(coarse: &NodalVector) -> Option<String> {
    match is_symmetric_sample(coarse, SYMMETRY_GUARD_TOL) {
        Ok(true) => None,
        Ok(false) => Some(format!(
            "coarse solution is not symmetric within {SYMMETRY_GUARD_TOL:.0e}; the transform-produced components may be wrong"
        )),
        Err(e) => Some(format!("symmetry guard not applicable: {e}")),
    }
}

fn transform_components(u1: &NodalVector, d: usize) -> Result<(Vec<NodalVector>, usize)> {
    let mut comps = Vec::with_capacity(d);
    let mut moved = 0;
    comps.push(u1.clone());
    for i in 2..=d {
        let sigma = Permutation::transposition(1, i, d)?;
        let (comp, stats) = transform(u1, &sigma)?;
        moved += stats.elements_moved;
        comps.push(comp);
    }
    Ok((comps, moved))
}

/// Symmetrized two-scale method for the source problem: one coarse solve,
/// one anisotropic solve, `d - 1` transforms, then the combination.
pub fn sym_two_scale_source(
    p: &ProblemDef,
    s: &ScalePair,
    quad_order: usize,
    cfg: &SolverConfig,
) -> Result<TwoScaleResult> {
    require_cubic_box(p)?;
    let d = p.dim;
    let total_start = Instant::now();

    let coarse_spec = p.grid(vec![s.coarse(); d])?;
    let t = Instant::now();
    let coarse = solve_source_on(&coarse_spec, p, quad_order, cfg)?;
    let t_coarse = t.elapsed().as_secs_f64();

    let fine_spec = p.grid(anisotropic_subdivisions(d, s, 0))?;
    let t = Instant::now();
    let u1 = solve_source_on(&fine_spec, p, quad_order, cfg)?;
    let t_fine = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (comps, _) = transform_components(&u1, d)?;
    let t_transform = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let symmetry_warning = guard_symmetry(&coarse);
    let dof_coarse = coarse.spec().n_dof();
    let dof_fine = u1.spec().n_dof();
    let combined = combine(comps, coarse)?;
    let t_combine = t.elapsed().as_secs_f64();

    Ok(TwoScaleResult {
        combined,
        eigenvalue: None,
        coarse_eigenvalue: None,
        fine_eigenvalues: vec![],
        timings: StageTimings {
            coarse_solve: t_coarse,
            fine_solves: vec![t_fine],
            transforms: t_transform,
            combine: t_combine,
            total: total_start.elapsed().as_secs_f64(),
        },
        dof_coarse,
        dof_fine,
        symmetry_warning,
    })
}

/// Plain two-scale method: all `d` anisotropic problems solved directly.
pub fn plain_two_scale_source(
    p: &ProblemDef,
    s: &ScalePair,
    quad_order: usize,
    cfg: &SolverConfig,
) -> Result<TwoScaleResult> {
    require_cubic_box(p)?;
    let d = p.dim;
    let total_start = Instant::now();

    let coarse_spec = p.grid(vec![s.coarse(); d])?;
    let t = Instant::now();
    let coarse = solve_source_on(&coarse_spec, p, quad_order, cfg)?;
    let t_coarse = t.elapsed().as_secs_f64();

    let mut comps = Vec::with_capacity(d);
    let mut fine_times = Vec::with_capacity(d);
    for dir in 0..d {
        let spec = p.grid(anisotropic_subdivisions(d, s, dir))?;
        let t = Instant::now();
        comps.push(solve_source_on(&spec, p, quad_order, cfg)?);
        fine_times.push(t.elapsed().as_secs_f64());
    }

    let t = Instant::now();
    let dof_coarse = coarse.spec().n_dof();
    let dof_fine = comps[0].spec().n_dof();
    let combined = combine(comps, coarse)?;
    let t_combine = t.elapsed().as_secs_f64();

    Ok(TwoScaleResult {
        combined,
        eigenvalue: None,
        coarse_eigenvalue: None,
        fine_eigenvalues: vec![],
        timings: StageTimings {
            coarse_solve: t_coarse,
            fine_solves: fine_times,
            transforms: 0.0,
            combine: t_combine,
            total: total_start.elapsed().as_secs_f64(),
        },
        dof_coarse,
        dof_fine,
        symmetry_warning: None,
    })
}

/// Combined eigenvalue `d lambda_fine - (d-1) lambda_coarse`; this is the
/// general combination with all anisotropic eigenvalues set equal to the
/// first one.
pub fn combined_eigenvalue(d: usize, lambda_fine: f64, lambda_coarse: f64) -> f64 {
    d as f64 * lambda_fine - (d as f64 - 1.0) * lambda_coarse
}

/// Symmetrized two-scale method for the eigenvalue problem.
pub fn sym_two_scale_eigen(
    p: &ProblemDef,
    s: &ScalePair,
    quad_order: usize,
    cfg: &EigenConfig,
) -> Result<TwoScaleResult> {
    require_cubic_box(p)?;
    let d = p.dim;
    let total_start = Instant::now();

    let coarse_spec = p.grid(vec![s.coarse(); d])?;
    let t = Instant::now();
    let (lambda_coarse, coarse) = solve_eigen_on(&coarse_spec, p, quad_order, cfg)?;
    let t_coarse = t.elapsed().as_secs_f64();

    let fine_spec = p.grid(anisotropic_subdivisions(d, s, 0))?;
    let t = Instant::now();
    let (lambda_fine, u1) = solve_eigen_on(&fine_spec, p, quad_order, cfg)?;
    let t_fine = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (comps, _) = transform_components(&u1, d)?;
    let t_transform = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let symmetry_warning = guard_symmetry(&coarse);
    let dof_coarse = coarse.spec().n_dof();
    let dof_fine = u1.spec().n_dof();
    let combined = combine(comps, coarse)?;
    let t_combine = t.elapsed().as_secs_f64();

    Ok(TwoScaleResult {
        combined,
        eigenvalue: Some(combined_eigenvalue(d, lambda_fine, lambda_coarse)),
        coarse_eigenvalue: Some(lambda_coarse),
        fine_eigenvalues: vec![lambda_fine],
        timings: StageTimings {
            coarse_solve: t_coarse,
            fine_solves: vec![t_fine],
            transforms: t_transform,
            combine: t_combine,
            total: total_start.elapsed().as_secs_f64(),
        },
        dof_coarse,
        dof_fine,
        symmetry_warning,
    })
}

/// Plain two-scale eigen driver with all `d` anisotropic eigen-solves;
/// `B lambda = sum_i lambda_i - (d-1) lambda_coarse`.
pub fn plain_two_scale_eigen(
    p: &ProblemDef,
    s: &ScalePair,
    quad_order: usize,
    cfg: &EigenConfig,
) -> Result<TwoScaleResult> {
    require_cubic_box(p)?;
    let d = p.dim;
    let total_start = Instant::now();

    let coarse_spec = p.grid(vec![s.coarse(); d])?;
    let t = Instant::now();
    let (lambda_coarse, coarse) = solve_eigen_on(&coarse_spec, p, quad_order, cfg)?;
    let t_coarse = t.elapsed().as_secs_f64();

    let mut comps = Vec::with_capacity(d);
    let mut lambdas = Vec::with_capacity(d);
    let mut fine_times = Vec::with_capacity(d);
    for dir in 0..d {
        let spec = p.grid(anisotropic_subdivisions(d, s, dir))?;
        let t = Instant::now();
        let (lambda, u) = solve_eigen_on(&spec, p, quad_order, cfg)?;
        fine_times.push(t.elapsed().as_secs_f64());
        comps.push(u);
        lambdas.push(lambda);
    }

    let t = Instant::now();
    let dof_coarse = coarse.spec().n_dof();
    let dof_fine = comps[0].spec().n_dof();
    let combined = combine(comps, coarse)?;
    let t_combine = t.elapsed().as_secs_f64();

    let b_lambda = lambdas.iter().sum::<f64>() - (d as f64 - 1.0) * lambda_coarse;
    Ok(TwoScaleResult {
        combined,
        eigenvalue: Some(b_lambda),
        coarse_eigenvalue: Some(lambda_coarse),
        fine_eigenvalues: lambdas,
        timings: StageTimings {
            coarse_solve: t_coarse,
            fine_solves: fine_times,
            transforms: 0.0,
            combine: t_combine,
            total: total_start.elapsed().as_secs_f64(),
        },
        dof_coarse,
        dof_fine,
        symmetry_warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{error_norms, function_norms};
    use crate::grid::BoundaryMode;
    use crate::problems::poisson2d_sym;

    #[test]
    fn scale_pair_validation() {
        let s = ScalePair::new(16, 4).unwrap();
        assert!(s.nested());
        assert_eq!(s.ratio(), 4.0);
        assert!(ScalePair::new(3, 2).is_err());
        assert!(ScalePair::new(4, 1).is_err());
        let odd = ScalePair::new(62, 25).unwrap();
        assert!(!odd.nested());
        assert_eq!(ScalePair::matched(4, 1.0).unwrap(), ScalePair::new(16, 4).unwrap());
        assert_eq!(ScalePair::matched(20, 10.0).unwrap(), ScalePair::new(40, 20).unwrap());
    }

    fn sample_components(
        g: impl Fn(&[f64]) -> f64 + Copy,
        s: &ScalePair,
        d: usize,
        mode: BoundaryMode,
    ) -> (Vec<NodalVector>, NodalVector) {
        let coarse_spec = GridSpec::unit(vec![s.coarse(); d], mode).unwrap();
        let coarse = NodalVector::sample(&coarse_spec, g);
        let fine = (0..d)
            .map(|dir| {
                let spec = GridSpec::unit(anisotropic_subdivisions(d, s, dir), mode).unwrap();
                NodalVector::sample(&spec, g)
            })
            .collect();
        (fine, coarse)
    }

    #[test]
    fn combine_reproduces_multilinear_samples() {
        let s = ScalePair::new(4, 2).unwrap();
        for d in [2usize, 3] {
            let g = |x: &[f64]| 1.0 + x.iter().enumerate().map(|(k, v)| (k as f64 + 1.0) * v).sum::<f64>();
            let (fine, coarse) = sample_components(g, &s, d, BoundaryMode::Inclusive);
            let c = combine(fine, coarse).unwrap();
            let pts: Vec<Vec<f64>> = vec![vec![0.3; d], vec![0.71; d], {
                let mut p = vec![0.1; d];
                p[0] = 0.95;
                p
            }];
            for x in &pts {
                let v = c.evaluate(x).unwrap();
                assert!((v - g(x)).abs() < 1e-13, "d={d} at {x:?}: {v} vs {}", g(x));
            }
        }
    }

    #[test]
    fn combine_of_zeros_is_zero() {
        let s = ScalePair::new(4, 2).unwrap();
        let (fine, coarse) = sample_components(|_| 0.0, &s, 2, BoundaryMode::Interior);
        let c = combine(fine, coarse).unwrap();
        assert_eq!(c.evaluate(&[0.4, 0.6]).unwrap(), 0.0);
        assert_eq!(c.coarse_weight(), -1.0);
    }

    #[test]
    fn combine_rejects_mismatched_grids() {
        let s = ScalePair::new(4, 2).unwrap();
        let (fine, _) = sample_components(|_| 1.0, &s, 2, BoundaryMode::Interior);
        let coarse_bad = NodalVector::sample(
            &GridSpec::unit(vec![3, 3], BoundaryMode::Interior).unwrap(),
            |_| 1.0,
        );
        assert!(matches!(
            combine(fine, coarse_bad),
            Err(Error::InconsistentComponents { .. })
        ));
    }

    #[test]
    fn combined_eigenvalue_reduces_to_equal_inputs() {
        assert_eq!(combined_eigenvalue(3, 1.5, 1.5), 1.5);
        assert_eq!(combined_eigenvalue(2, 2.0, 1.0), 3.0);
    }

    #[test]
    fn sym_matches_plain_for_symmetric_source() {
        let p = poisson2d_sym();
        let s = ScalePair::new(4, 2).unwrap();
        let cfg = SolverConfig::default();
        let sym = sym_two_scale_source(&p, &s, 3, &cfg).unwrap();
        let plain = plain_two_scale_source(&p, &s, 3, &cfg).unwrap();
        assert!(sym.symmetry_warning.is_none());
        for (a, b) in sym
            .combined
            .fine_components()
            .iter()
            .zip(plain.combined.fine_components())
        {
            assert!(a.max_abs_diff(b) <= 10.0 * cfg.rel_tol, "diff {}", a.max_abs_diff(b));
        }
        assert_eq!(sym.timings.fine_solves.len(), 1);
        assert_eq!(plain.timings.fine_solves.len(), 2);
        assert_eq!(plain.timings.transforms, 0.0);
    }

    #[test]
    fn transform_vs_resolve_oracle_2d() {
        let p = poisson2d_sym();
        let cfg = SolverConfig::default();
        let fine_spec = p.grid(vec![8, 4]).unwrap();
        let u1 = solve_source_on(&fine_spec, &p, 3, &cfg).unwrap();
        let sigma = Permutation::transposition(1, 2, 2).unwrap();
        let (moved, _) = transform(&u1, &sigma).unwrap();
        let other_spec = p.grid(vec![4, 8]).unwrap();
        let u2 = solve_source_on(&other_spec, &p, 3, &cfg).unwrap();
        let diff = moved.max_abs_diff(&u2);
        assert!(diff <= 10.0 * cfg.rel_tol, "diff {diff}");
    }

    #[test]
    fn combined_beats_coarse_in_h1_for_source() {
        let p = poisson2d_sym();
        let s = ScalePair::new(16, 4).unwrap();
        let cfg = SolverConfig::default();
        let sym = sym_two_scale_source(&p, &s, 3, &cfg).unwrap();
        let exact = p.exact.as_ref().unwrap();
        let combined_err = error_norms(&sym.combined, exact, 2).unwrap();
        let coarse_err = error_norms(sym.combined.coarse_component(), exact, 2).unwrap();
        assert!(
            combined_err.h1 < coarse_err.h1,
            "combined {} vs coarse {}",
            combined_err.h1,
            coarse_err.h1
        );
    }

    #[test]
    fn eigen_two_scale_improves_on_coarse_2d() {
        let p = poisson2d_sym();
        let s = ScalePair::new(16, 4).unwrap();
        let cfg = EigenConfig::default();
        let r = sym_two_scale_eigen(&p, &s, 3, &cfg).unwrap();
        let exact = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        let b_err = (r.eigenvalue.unwrap() - exact).abs();
        let coarse_err = (r.coarse_eigenvalue.unwrap() - exact).abs();
        assert!(b_err < coarse_err, "B {b_err} vs coarse {coarse_err}");
        // the combined eigenfunction stays near unit norm
        let norm = function_norms(&r.combined, 2).unwrap().l2;
        assert!((norm - 1.0).abs() < 0.05, "norm {norm}");

        let plain = plain_two_scale_eigen(&p, &s, 3, &cfg).unwrap();
        assert_eq!(plain.fine_eigenvalues.len(), 2);
        let plain_b = plain.eigenvalue.unwrap();
        assert!((plain_b - r.eigenvalue.unwrap()).abs() < 1e-6);
    }
}
