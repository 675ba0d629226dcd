//! Built-in problem definitions with exact solutions for error measurement.

use std::sync::Arc;

use crate::assembly::{DiffusionCoeff, ExactEigen, ExactSolution, ProblemDef, ScalarFn};
use crate::error::{Error, Result};

/// Keys understood by the CLI's `--problem` flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKey {
    Ex1,
    Ex2,
    Ex3,
    Poisson2d,
    Custom,
}

impl ProblemKey {
    pub fn parse(s: &str) -> Option<ProblemKey> {
        match s {
            "ex1" => Some(ProblemKey::Ex1),
            "ex2" => Some(ProblemKey::Ex2),
            "ex3" => Some(ProblemKey::Ex3),
            "poisson2d" => Some(ProblemKey::Poisson2d),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKey::Ex1 => "ex1",
            ProblemKey::Ex2 => "ex2",
            ProblemKey::Ex3 => "ex3",
            ProblemKey::Poisson2d => "poisson2d",
            ProblemKey::Custom => "custom",
        }
    }
}

/// A problem definition together with its CLI key.
#[derive(Clone)]
pub struct NamedProblem {
    pub key: ProblemKey,
    pub def: ProblemDef,
}

pub fn named(key: ProblemKey) -> Result<NamedProblem> {
    let def = match key {
        ProblemKey::Ex1 => example1(),
        ProblemKey::Ex2 => example2(),
        ProblemKey::Ex3 => example3(),
        ProblemKey::Poisson2d => poisson2d_sym(),
        ProblemKey::Custom => {
            return Err(Error::InvalidConfig {
                reason: "custom problems carry their own definition".into(),
            })
        }
    };
    Ok(NamedProblem { key, def })
}

pub fn by_key(key: &str) -> Option<ProblemDef> {
    Some(named(ProblemKey::parse(key)?).ok()?.def)
}

// 1d factor of the first exact solution: t (1 - t) e^t
fn phi(t: f64) -> f64 {
    t * (1.0 - t) * t.exp()
}

fn phi_p(t: f64) -> f64 {
    (1.0 - t - t * t) * t.exp()
}

fn phi_pp(t: f64) -> f64 {
    -t * (3.0 + t) * t.exp()
}

/// Source problem with a singular potential on the unit cube:
/// `-Lap u - u / |x| + x1 x2 x3 u = f`, exact solution
/// `u = 2 x1 x2 x3 (1-x1)(1-x2)(1-x3) e^(x1+x2+x3)`.
pub fn example1() -> ProblemDef {
    let value: ScalarFn =
        Arc::new(|x: &[f64]| 2.0 * phi(x[0]) * phi(x[1]) * phi(x[2]));
    let gradient = Arc::new(|x: &[f64], g: &mut [f64]| {
        let p = [phi(x[0]), phi(x[1]), phi(x[2])];
        g[0] = 2.0 * phi_p(x[0]) * p[1] * p[2];
        g[1] = 2.0 * p[0] * phi_p(x[1]) * p[2];
        g[2] = 2.0 * p[0] * p[1] * phi_p(x[2]);
    });
    let potential: ScalarFn = Arc::new(|x: &[f64]| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        -1.0 / r + x[0] * x[1] * x[2]
    });
    let pot = potential.clone();
    let uval = value.clone();
    let source = Arc::new(move |x: &[f64]| {
        let p = [phi(x[0]), phi(x[1]), phi(x[2])];
        let lap = 2.0
            * (phi_pp(x[0]) * p[1] * p[2] + p[0] * phi_pp(x[1]) * p[2] + p[0] * p[1] * phi_pp(x[2]));
        -lap + pot(x) * uval(x)
    });
    ProblemDef {
        dim: 3,
        lo: vec![0.0; 3],
        hi: vec![1.0; 3],
        diffusion: DiffusionCoeff::ScaledIdentity(1.0),
        advection: None,
        potential: Some(potential),
        source: Some(source),
        exact: Some(ExactSolution { value, gradient }),
        exact_eigen: None,
    }
}

// 1d boundary factor of the second exact solution: (1 - t)(2 - t) e^t
fn psi(t: f64) -> f64 {
    (1.0 - t) * (2.0 - t) * t.exp()
}

fn psi_p(t: f64) -> f64 {
    (t * t - t - 1.0) * t.exp()
}

fn psi_pp(t: f64) -> f64 {
    (t + 2.0) * (t - 1.0) * t.exp()
}

// partial derivatives of u = psi(x1) psi(x2) psi(x3) sin(sqrt(x1 x2 x3)),
// valid on (1,2)^3 where all coordinates stay away from zero
struct Ex2Derivs {
    u: f64,
    du: [f64; 3],
    d2: [[f64; 3]; 3],
}

fn ex2_derivs(x: &[f64]) -> Ex2Derivs {
    let ps = [psi(x[0]), psi(x[1]), psi(x[2])];
    let dp = [psi_p(x[0]), psi_p(x[1]), psi_p(x[2])];
    let w = ps[0] * ps[1] * ps[2];
    let q = (x[0] * x[1] * x[2]).sqrt();
    let s = q.sin();
    let c = q.cos();

    // q_i = q / (2 x_i); q_ii = -q / (4 x_i^2); q_ij = q / (4 x_i x_j)
    let mut qd = [0.0; 3];
    for i in 0..3 {
        qd[i] = q / (2.0 * x[i]);
    }
    let sd: [f64; 3] = [c * qd[0], c * qd[1], c * qd[2]];
    let mut sdd = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let qij = if i == j {
                -q / (4.0 * x[i] * x[i])
            } else {
                q / (4.0 * x[i] * x[j])
            };
            sdd[i][j] = -s * qd[i] * qd[j] + c * qij;
        }
    }

    // products of psi factors excluding one or two directions
    let excl = |i: usize| -> f64 {
        let mut v = 1.0;
        for (k, &pk) in ps.iter().enumerate() {
            if k != i {
                v *= pk;
            }
        }
        v
    };
    let excl2 = |i: usize, j: usize| -> f64 {
        let mut v = 1.0;
        for (k, &pk) in ps.iter().enumerate() {
            if k != i && k != j {
                v *= pk;
            }
        }
        v
    };

    let mut du = [0.0; 3];
    for i in 0..3 {
        du[i] = dp[i] * excl(i) * s + w * sd[i];
    }
    let mut d2 = [[0.0; 3]; 3];
    for i in 0..3 {
        d2[i][i] = psi_pp(x[i]) * excl(i) * s + 2.0 * dp[i] * excl(i) * sd[i] + w * sdd[i][i];
        for j in 0..3 {
            if j != i {
                d2[i][j] = dp[i] * dp[j] * excl2(i, j) * s
                    + dp[i] * excl(i) * sd[j]
                    + dp[j] * excl(j) * sd[i]
                    + w * sdd[i][j];
            }
        }
    }
    Ex2Derivs { u: w * s, du, d2 }
}

/// Nonsymmetric source problem on `(1,2)^3` with exponential diagonal
/// diffusion, constant off-diagonal coupling, weak advection
/// `b = (0.001, 0.001, 0.001)` and unit potential; the exact solution is
/// symmetric.
pub fn example2() -> ProblemDef {
    let value: ScalarFn = Arc::new(|x: &[f64]| ex2_derivs(x).u);
    let gradient = Arc::new(|x: &[f64], g: &mut [f64]| {
        g.copy_from_slice(&ex2_derivs(x).du);
    });
    let diffusion = DiffusionCoeff::Full(Arc::new(|x: &[f64], a: &mut [f64]| {
        a.copy_from_slice(&[
            x[0].exp(),
            1.0,
            1.0,
            1.0,
            x[1].exp(),
            1.0,
            1.0,
            1.0,
            x[2].exp(),
        ]);
    }));
    const B: f64 = 0.001;
    let advection = Arc::new(|_: &[f64], b: &mut [f64]| b.fill(B));
    let potential: ScalarFn = Arc::new(|_: &[f64]| 1.0);
    // f = -sum_i e^{x_i} (u_i + u_ii) - sum_{i != j} u_ij + b . grad u + u
    let source = Arc::new(|x: &[f64]| {
        let dv = ex2_derivs(x);
        let mut f = dv.u;
        for i in 0..3 {
            f -= x[i].exp() * (dv.du[i] + dv.d2[i][i]);
            f += B * dv.du[i];
            for j in 0..3 {
                if j != i {
                    f -= dv.d2[i][j];
                }
            }
        }
        f
    });
    ProblemDef {
        dim: 3,
        lo: vec![1.0; 3],
        hi: vec![2.0; 3],
        diffusion,
        advection: Some(advection),
        potential: Some(potential),
        source: Some(source),
        exact: Some(ExactSolution { value, gradient }),
        exact_eigen: None,
    }
}

/// Quantum harmonic oscillator truncated to `[-5, 5]^3`:
/// `(-1/2 Lap + r^2/2) u = lambda u`, smallest eigenvalue `3/2` with
/// Gaussian eigenfunction `pi^(-3/4) e^(-r^2/2)`.
pub fn example3() -> ProblemDef {
    let norm = std::f64::consts::PI.powf(-0.75);
    let value: ScalarFn = Arc::new(move |x: &[f64]| {
        let r2 = x.iter().map(|v| v * v).sum::<f64>();
        norm * (-0.5 * r2).exp()
    });
    let val = value.clone();
    let gradient = Arc::new(move |x: &[f64], g: &mut [f64]| {
        let u = val(x);
        for k in 0..3 {
            g[k] = -x[k] * u;
        }
    });
    ProblemDef {
        dim: 3,
        lo: vec![-5.0; 3],
        hi: vec![5.0; 3],
        diffusion: DiffusionCoeff::ScaledIdentity(0.5),
        advection: None,
        potential: Some(Arc::new(|x: &[f64]| {
            0.5 * x.iter().map(|v| v * v).sum::<f64>()
        })),
        source: None,
        exact: None,
        exact_eigen: Some(ExactEigen {
            eigenvalue: 1.5,
            value,
            gradient,
        }),
    }
}

/// Small planar Poisson problem with symmetric manufactured solution
/// `u = sin(pi x1) sin(pi x2)`, for oracles and fast tests.
pub fn poisson2d_sym() -> ProblemDef {
    use std::f64::consts::PI;
    let value: ScalarFn =
        Arc::new(|x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin());
    let gradient = Arc::new(|x: &[f64], g: &mut [f64]| {
        g[0] = PI * (PI * x[0]).cos() * (PI * x[1]).sin();
        g[1] = PI * (PI * x[0]).sin() * (PI * x[1]).cos();
    });
    let val = value.clone();
    let source = Arc::new(move |x: &[f64]| 2.0 * PI * PI * val(x));
    ProblemDef {
        dim: 2,
        lo: vec![0.0; 2],
        hi: vec![1.0; 2],
        diffusion: DiffusionCoeff::ScaledIdentity(1.0),
        advection: None,
        potential: None,
        source: Some(source),
        exact: Some(ExactSolution { value, gradient }),
        exact_eigen: None,
    }
}

/// Validates a hand-derived source term against a central finite-difference
/// application of the operator to the exact solution, at pseudo-random
/// interior points. Returns the largest relative mismatch.
pub fn validate_manufactured_rhs(p: &ProblemDef, n_points: usize, step: f64) -> Result<f64> {
    let exact = p.exact.as_ref().ok_or_else(|| Error::InvalidConfig {
        reason: "problem has no exact solution to validate against".into(),
    })?;
    let source = p.source.as_ref().ok_or_else(|| Error::InvalidConfig {
        reason: "problem has no source term to validate".into(),
    })?;
    let d = p.dim;
    let u = &exact.value;

    let mut amat = vec![0.0; d * d];
    let mut ap = vec![0.0; d * d];
    let mut am = vec![0.0; d * d];
    let mut bvec = vec![0.0; d];

    // xorshift-style deterministic points, kept a margin away from the
    // boundary so stencils stay inside and singular corners are avoided
    let mut state = 0x243f6a8885a308d3u64;
    let mut unit = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let margin = 0.05;

    let mut worst = 0.0f64;
    for _ in 0..n_points {
        let x: Vec<f64> = (0..d)
            .map(|k| {
                let w = p.hi[k] - p.lo[k];
                p.lo[k] + w * (margin + (1.0 - 2.0 * margin) * unit())
            })
            .collect();

        let mut xp = x.clone();
        let mut xm = x.clone();
        let mut du = vec![0.0; d];
        let mut d2 = vec![0.0; d * d];
        for i in 0..d {
            let h = step * (p.hi[i] - p.lo[i]);
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            let up = u(&xp);
            let um = u(&xm);
            du[i] = (up - um) / (2.0 * h);
            d2[i * d + i] = (up - 2.0 * u(&x) + um) / (h * h);
            xp[i] = x[i];
            xm[i] = x[i];
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let hi_ = step * (p.hi[i] - p.lo[i]);
                let hj = step * (p.hi[j] - p.lo[j]);
                let mut xx = x.clone();
                let eval = |si: f64, sj: f64, xx: &mut Vec<f64>| {
                    xx[i] = x[i] + si * hi_;
                    xx[j] = x[j] + sj * hj;
                    u(xx)
                };
                let v = (eval(1.0, 1.0, &mut xx) - eval(1.0, -1.0, &mut xx)
                    - eval(-1.0, 1.0, &mut xx)
                    + eval(-1.0, -1.0, &mut xx))
                    / (4.0 * hi_ * hj);
                d2[i * d + j] = v;
                d2[j * d + i] = v;
            }
        }

        // -sum_ij [ (d_i a_ij) u_j + a_ij u_ij ] + b . grad u + V u
        p.diffusion_at(&x, &mut amat)?;
        let mut lu = 0.0;
        for i in 0..d {
            let h = step * (p.hi[i] - p.lo[i]);
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            p.diffusion_at(&xp, &mut ap)?;
            p.diffusion_at(&xm, &mut am)?;
            for j in 0..d {
                let da = (ap[i * d + j] - am[i * d + j]) / (2.0 * h);
                lu -= da * du[j] + amat[i * d + j] * d2[i * d + j];
            }
            xp[i] = x[i];
            xm[i] = x[i];
        }
        if let Some(b) = &p.advection {
            b(&x, &mut bvec);
            for i in 0..d {
                lu += bvec[i] * du[i];
            }
        }
        if let Some(v) = &p.potential {
            lu += v(&x) * u(&x);
        }

        let f_closed = source(&x);
        let denom = f_closed.abs().max(lu.abs()).max(1.0);
        worst = worst.max((f_closed - lu).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMode, GridSpec, NodalVector};
    use crate::symmetrize::is_symmetric_sample;

    #[test]
    fn example1_exact_values() {
        let p = example1();
        let u = &p.exact.as_ref().unwrap().value;
        let expected = 1.5f64.exp() / 32.0;
        assert!((u(&[0.5, 0.5, 0.5]) - expected).abs() < 1e-15);
        // vanishes on the boundary
        assert_eq!(u(&[0.0, 0.3, 0.7]), 0.0);
        assert_eq!(u(&[0.3, 1.0, 0.7]), 0.0);
        // symmetric at random points
        let mut state = 1u64;
        let mut unit = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let (a, b, c) = (unit(), unit(), unit());
            assert!((u(&[a, b, c]) - u(&[b, a, c])).abs() < 1e-15);
            assert!((u(&[a, b, c]) - u(&[c, b, a])).abs() < 1e-14);
        }
        p.check_ellipticity(4).unwrap();
    }

    #[test]
    fn example2_exact_values() {
        let p = example2();
        // a(1,1,1) has diagonal (e,e,e) and unit off-diagonal entries;
        // eigenvalues e - 1 (twice) and e + 2, all positive
        let mut a = vec![0.0; 9];
        p.diffusion_at(&[1.0, 1.0, 1.0], &mut a).unwrap();
        let e = 1.0f64.exp();
        assert!((a[0] - e).abs() < 1e-15 && (a[4] - e).abs() < 1e-15 && (a[8] - e).abs() < 1e-15);
        assert!(a[1] == 1.0 && a[2] == 1.0 && a[3] == 1.0 && a[5] == 1.0);
        p.check_ellipticity(4).unwrap();

        let u = &p.exact.as_ref().unwrap().value;
        assert_eq!(u(&[1.0, 1.3, 1.7]), 0.0);
        assert_eq!(u(&[1.3, 2.0, 1.7]), 0.0);
        let mut state = 3u64;
        let mut unit = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            1.0 + (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let (a, b, c) = (unit(), unit(), unit());
            assert!((u(&[a, b, c]) - u(&[b, a, c])).abs() < 1e-13);
        }
    }

    #[test]
    fn example3_exact_values() {
        let p = example3();
        let v = p.potential.as_ref().unwrap();
        assert_eq!(v(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(v(&[5.0, 5.0, 5.0]), 37.5);
        let eig = p.exact_eigen.as_ref().unwrap();
        assert_eq!(eig.eigenvalue, 1.5);

        // 1d Gaussian integral oracle: the squared L2 norm over the box is
        // (int_-5^5 e^{-t^2} dt / sqrt(pi))^3
        let rule = crate::assembly::QuadratureRule::gauss_legendre(48).unwrap();
        let mut one_d = 0.0;
        for (xi, w) in rule.points().iter().zip(rule.weights()) {
            let t = -5.0 + 10.0 * xi;
            one_d += w * 10.0 * (-t * t).exp();
        }
        one_d /= std::f64::consts::PI.sqrt();
        let box_norm_sq = one_d.powi(3);
        assert!(box_norm_sq <= 1.0 + 1e-12);
        assert!(box_norm_sq.sqrt() >= 0.999);
    }

    #[test]
    fn poisson2d_values() {
        let p = poisson2d_sym();
        let u = &p.exact.as_ref().unwrap().value;
        let f = p.source.as_ref().unwrap();
        assert!((u(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
        let x = [0.3, 0.7];
        assert!((f(&x) / u(&x) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!((u(&[0.3, 0.7]) - u(&[0.7, 0.3])).abs() < 1e-15);
    }

    #[test]
    fn manufactured_rhs_matches_finite_differences() {
        for p in [example1(), example2()] {
            let worst = validate_manufactured_rhs(&p, 1000, 1e-4).unwrap();
            assert!(worst <= 1e-5, "relative mismatch {worst}");
        }
        let worst = validate_manufactured_rhs(&poisson2d_sym(), 200, 1e-4).unwrap();
        assert!(worst <= 1e-5);
    }

    #[test]
    fn exact_solutions_sample_symmetrically() {
        for p in [example1(), example2()] {
            let spec = GridSpec::cube(p.lo[0], p.hi[0], vec![4; 3], BoundaryMode::Inclusive).unwrap();
            let value = p.exact.as_ref().unwrap().value.clone();
            let s = NodalVector::sample(&spec, |x| value(x));
            assert!(is_symmetric_sample(&s, 1e-12).unwrap());
        }
        let p = example3();
        let spec = GridSpec::cube(-5.0, 5.0, vec![4; 3], BoundaryMode::Inclusive).unwrap();
        let value = p.exact_eigen.as_ref().unwrap().value.clone();
        let s = NodalVector::sample(&spec, |x| value(x));
        assert!(is_symmetric_sample(&s, 1e-12).unwrap());
    }

    #[test]
    fn key_round_trip() {
        for key in ["ex1", "ex2", "ex3", "poisson2d"] {
            assert_eq!(ProblemKey::parse(key).unwrap().as_str(), key);
            assert!(by_key(key).is_some());
        }
        assert!(ProblemKey::parse("nope").is_none());
    }
}
