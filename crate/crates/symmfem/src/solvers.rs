//! Iterative linear solvers and a smallest-eigenpair solver for the
//! generalized problem `A u = lambda M u`.

use rayon::prelude::*;

use crate::assembly::SparseMatrix;
use crate::error::{Error, Result};

/// Sign functional for eigenvector orientation.
pub type OrientFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preconditioner {
    None,
    Jacobi,
    /// Symmetric SOR with relaxation factor `omega` in (0, 2).
    Ssor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cg,
    BiCgStab,
    /// Pick CG when the matrix is numerically symmetric, BiCGSTAB otherwise.
    Auto,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-10,
            max_iter: 20_000,
            preconditioner: Preconditioner::Jacobi,
            method: Method::Auto,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!("rel_tol must lie in (0, 1), got {}", self.rel_tol),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig {
                reason: "max_iter must be positive".into(),
            });
        }
        if let Preconditioner::Ssor(w) = self.preconditioner {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::InvalidConfig {
                    reason: format!("SSOR omega must lie in (0, 2), got {w}"),
                });
            }
        }
        Ok(())
    }
}

// Fixed-size chunked reductions keep dot products bit-deterministic for any
// thread count.
const DOT_CHUNK: usize = 4096;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= 2 * DOT_CHUNK {
        let partials: Vec<f64> = a
            .par_chunks(DOT_CHUNK)
            .zip(b.par_chunks(DOT_CHUNK))
            .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
            .collect();
        partials.iter().sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

enum Prec {
    Identity,
    Jacobi(Vec<f64>),
    Ssor(f64),
}

impl Prec {
    fn build(kind: Preconditioner, a: &SparseMatrix) -> Result<Prec> {
        match kind {
            Preconditioner::None => Ok(Prec::Identity),
            Preconditioner::Jacobi => {
                let mut inv = a.diagonal();
                for (i, v) in inv.iter_mut().enumerate() {
                    if *v == 0.0 || !v.is_finite() {
                        return Err(Error::InvalidConfig {
                            reason: format!("zero or non-finite diagonal at row {i}; Jacobi unusable"),
                        });
                    }
                    *v = 1.0 / *v;
                }
                Ok(Prec::Jacobi(inv))
            }
            Preconditioner::Ssor(w) => Ok(Prec::Ssor(w)),
        }
    }

    fn apply(&self, a: &SparseMatrix, r: &[f64], z: &mut [f64]) {
        match self {
            Prec::Identity => z.copy_from_slice(r),
            Prec::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Prec::Ssor(w) => {
                let n = a.n_rows();
                // forward sweep: (D/w + L) y = r
                for i in 0..n {
                    let (cols, vals) = a.row(i);
                    let mut s = r[i];
                    let mut diag = 0.0;
                    for (&c, &v) in cols.iter().zip(vals) {
                        if c < i {
                            s -= v * z[c];
                        } else if c == i {
                            diag = v;
                        }
                    }
                    z[i] = s * w / diag;
                }
                // scale: y <- ((2 - w)/w) D y
                for i in 0..n {
                    z[i] *= (2.0 - w) / w * a.get(i, i);
                }
                // backward sweep: (D/w + U) z = y
                for i in (0..n).rev() {
                    let (cols, vals) = a.row(i);
                    let mut s = z[i];
                    let mut diag = 0.0;
                    for (&c, &v) in cols.iter().zip(vals) {
                        if c > i {
                            s -= v * z[c];
                        } else if c == i {
                            diag = v;
                        }
                    }
                    z[i] = s * w / diag;
                }
            }
        }
    }
}

/// Solves `A u = f` to `|A u - f|_2 <= rel_tol |f|_2`.
pub fn solve_linear(a: &SparseMatrix, f: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    solve_linear_from(a, f, None, cfg)
}

/// Same as [`solve_linear`] but warm-started from `x0`.
pub fn solve_linear_from(
    a: &SparseMatrix,
    f: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch {
            left: a.n_rows(),
            right: a.n_cols(),
        });
    }
    if f.len() != a.n_rows() {
        return Err(Error::DimensionMismatch {
            left: f.len(),
            right: a.n_rows(),
        });
    }
    let f_norm = norm2(f);
    if f_norm == 0.0 {
        return Ok(vec![0.0; f.len()]);
    }
    let method = match cfg.method {
        Method::Cg => Method::Cg,
        Method::BiCgStab => Method::BiCgStab,
        Method::Auto => {
            if a.is_symmetric(1e-12) {
                Method::Cg
            } else {
                Method::BiCgStab
            }
        }
    };
    let prec = Prec::build(cfg.preconditioner, a)?;
    let target = cfg.rel_tol * f_norm;
    match method {
        Method::Cg => cg(a, f, x0, &prec, target, cfg.max_iter),
        Method::BiCgStab => bicgstab(a, f, x0, &prec, target, cfg.max_iter),
        Method::Auto => unreachable!(),
    }
}

fn initial_state(a: &SparseMatrix, f: &[f64], x0: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    match x0 {
        None => (vec![0.0; f.len()], f.to_vec()),
        Some(x0) => {
            let x = x0.to_vec();
            let ax = a.matvec(&x);
            let r = f.iter().zip(&ax).map(|(fi, ai)| fi - ai).collect();
            (x, r)
        }
    }
}

fn cg(
    a: &SparseMatrix,
    f: &[f64],
    x0: Option<&[f64]>,
    prec: &Prec,
    target: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = f.len();
    let (mut x, mut r) = initial_state(a, f, x0);
    let mut z = vec![0.0; n];
    prec.apply(a, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut last_residual = norm2(&r);
    if last_residual <= target {
        return Ok(x);
    }

    for it in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: last_residual,
                target,
            });
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rnorm = norm2(&r);
        last_residual = rnorm;
        if rnorm <= target {
            // recursive residual can drift; confirm with the true one
            let ax = a.matvec(&x);
            let mut true_r: Vec<f64> = f.iter().zip(&ax).map(|(fi, ai)| fi - ai).collect();
            let true_norm = norm2(&true_r);
            if true_norm <= target {
                return Ok(x);
            }
            r = std::mem::take(&mut true_r);
            last_residual = true_norm;
        }
        prec.apply(a, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    Err(Error::SolverStalled {
        iterations: max_iter,
        residual: last_residual,
        target,
    })
}

fn bicgstab(
    a: &SparseMatrix,
    f: &[f64],
    x0: Option<&[f64]>,
    prec: &Prec,
    target: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = f.len();
    let (mut x, mut r) = initial_state(a, f, x0);
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut last_residual = norm2(&r);
    if last_residual <= target {
        return Ok(x);
    }

    for it in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: last_residual,
                target,
            });
        }
        if it == 0 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        rho = rho_new;
        prec.apply(a, &p, &mut phat);
        a.matvec_into(&phat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: last_residual,
                target,
            });
        }
        alpha = rho / denom;
        // s = r - alpha v (reuse r)
        axpy(&mut r, -alpha, &v);
        if norm2(&r) <= target {
            axpy(&mut x, alpha, &phat);
            let ax = a.matvec(&x);
            let true_r: Vec<f64> = f.iter().zip(&ax).map(|(fi, ai)| fi - ai).collect();
            last_residual = norm2(&true_r);
            if last_residual <= target {
                return Ok(x);
            }
            r = true_r;
            continue;
        }
        prec.apply(a, &r, &mut shat);
        a.matvec_into(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: last_residual,
                target,
            });
        }
        omega = dot(&t, &r) / tt;
        axpy(&mut x, alpha, &phat);
        axpy(&mut x, omega, &shat);
        axpy(&mut r, -omega, &t);
        let rnorm = norm2(&r);
        last_residual = rnorm;
        if rnorm <= target {
            let ax = a.matvec(&x);
            let true_r: Vec<f64> = f.iter().zip(&ax).map(|(fi, ai)| fi - ai).collect();
            let true_norm = norm2(&true_r);
            if true_norm <= target {
                return Ok(x);
            }
            r = true_r;
            last_residual = true_norm;
        }
        if omega == 0.0 {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: last_residual,
                target,
            });
        }
    }
    Err(Error::SolverStalled {
        iterations: max_iter,
        residual: last_residual,
        target,
    })
}

/// Eigenvector sign convention. Combining eigenvectors from different grids
/// only makes sense when they all carry the same sign, so the drivers fix
/// it deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignRule {
    /// Flip so the function value at the box center is positive.
    #[default]
    PositiveAtCenter,
    /// Flip so the component of largest magnitude is positive.
    LargestComponentPositive,
}

/// Convergence control for the inverse power iteration.
#[derive(Debug, Clone)]
pub struct EigenConfig {
    /// Relative stagnation tolerance on the Rayleigh quotient.
    pub rel_tol: f64,
    pub max_outer: usize,
    pub inner: SolverConfig,
    pub sign_rule: SignRule,
    /// Deterministic start vector; all ones when absent.
    pub initial_guess: Option<Vec<f64>>,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            rel_tol: 1e-10,
            max_outer: 400,
            inner: SolverConfig::default(),
            sign_rule: SignRule::default(),
            initial_guess: None,
        }
    }
}

/// Smallest eigenpair result; the Rayleigh history is recorded for
/// diagnostics and property checks.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub eigenvalue: f64,
    pub eigenvector: Vec<f64>,
    pub rayleigh_history: Vec<f64>,
    pub outer_iterations: usize,
}

/// Inverse power iteration for the smallest eigenpair of `A u = lambda M u`
/// with symmetric `A` and SPD `M`.
///
/// The returned vector is M-normalized. Its sign is fixed by `orient`: the
/// vector is flipped so that `orient(u) > 0`. Without an orientation
/// functional the component of largest magnitude is made positive.
pub fn solve_smallest_eigenpair(
    a: &SparseMatrix,
    m: &SparseMatrix,
    cfg: &EigenConfig,
    orient: Option<OrientFn<'_>>,
) -> Result<EigenSolution> {
    if !(cfg.rel_tol > 0.0 && cfg.rel_tol < 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("eigen rel_tol must lie in (0, 1), got {}", cfg.rel_tol),
        });
    }
    if a.n_rows() != a.n_cols() || m.n_rows() != m.n_cols() || a.n_rows() != m.n_rows() {
        return Err(Error::DimensionMismatch {
            left: a.n_rows(),
            right: m.n_rows(),
        });
    }
    let n = a.n_rows();
    let mut u = match &cfg.initial_guess {
        Some(g) => {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    left: g.len(),
                    right: n,
                });
            }
            g.clone()
        }
        None => vec![1.0; n],
    };

    let m_normalize = |v: &mut Vec<f64>| -> Result<f64> {
        let mv = m.matvec(v);
        let nrm2 = dot(v, &mv);
        if nrm2 <= 0.0 || !nrm2.is_finite() {
            return Err(Error::EigenStalled {
                iterations: 0,
                reason: "candidate vector has non-positive M-norm".into(),
            });
        }
        let nrm = nrm2.sqrt();
        for vi in v.iter_mut() {
            *vi /= nrm;
        }
        Ok(nrm)
    };

    m_normalize(&mut u)?;
    let mut lambda = f64::INFINITY;
    let mut history = Vec::new();
    let mut warm: Option<Vec<f64>> = None;

    for outer in 1..=cfg.max_outer {
        let mu = m.matvec(&u);
        let mut z = solve_linear_from(a, &mu, warm.as_deref(), &cfg.inner).map_err(|e| {
            Error::EigenStalled {
                iterations: outer,
                reason: format!("inner solve failed: {e}"),
            }
        })?;
        m_normalize(&mut z)?;
        let az = a.matvec(&z);
        let new_lambda = dot(&z, &az);
        history.push(new_lambda);

        // eigen-residual relative to |A u|
        let mz = m.matvec(&z);
        let mut res = 0.0;
        for i in 0..n {
            let v = az[i] - new_lambda * mz[i];
            res += v * v;
        }
        let res = res.sqrt();
        let az_norm = norm2(&az);
        let stagnated = (lambda - new_lambda).abs() <= cfg.rel_tol * new_lambda.abs().max(f64::MIN_POSITIVE);
        let residual_ok = res <= 100.0 * cfg.rel_tol * az_norm;

        lambda = new_lambda;
        // warm-start the next inner solve near the expected solution z/lambda
        warm = Some(z.iter().map(|&v| v / new_lambda).collect());
        u = z;

        if stagnated && residual_ok {
            apply_sign(&mut u, orient);
            return Ok(EigenSolution {
                eigenvalue: lambda,
                eigenvector: u,
                rayleigh_history: history,
                outer_iterations: outer,
            });
        }
    }
    Err(Error::EigenStalled {
        iterations: cfg.max_outer,
        reason: format!(
            "Rayleigh quotient did not stagnate below rel_tol {} (last {lambda:.12e})",
            cfg.rel_tol
        ),
    })
}

fn apply_sign(u: &mut [f64], orient: Option<OrientFn<'_>>) {
    let s = match orient {
        Some(f) => f(u),
        None => {
            let mut best = 0.0f64;
            for &v in u.iter() {
                if v.abs() > best.abs() {
                    best = v;
                }
            }
            best
        }
    };
    if s < 0.0 {
        for v in u.iter_mut() {
            *v = -*v;
        }
    }
}

/// `|A u - f|_2`, for independent post-checks.
pub fn residual_norm(a: &SparseMatrix, u: &[f64], f: &[f64]) -> f64 {
    let au = a.matvec(u);
    let mut s = 0.0;
    for i in 0..f.len() {
        let v = f[i] - au[i];
        s += v * v;
    }
    s.sqrt()
}
