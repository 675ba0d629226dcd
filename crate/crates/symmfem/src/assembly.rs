//! Sparse Galerkin assembly of the bilinear form
//! `a(u,v) = int sum_ij a_ij du/dx_i dv/dx_j + sum_i b_i du/dx_i v + V u v`
//! for multilinear (Q1) elements on anisotropic tensor grids, with tensor
//! Gauss quadrature, plus point evaluation of the assembled functions.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BoundaryMode, GridSpec, NodalVector};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes a length-`d` vector at `x` into the output slice.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Writes a row-major `d x d` matrix at `x` into the output slice.
pub type MatrixFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Diffusion coefficient `a(x)`.
#[derive(Clone)]
pub enum DiffusionCoeff {
    /// `a = c * I`.
    ScaledIdentity(f64),
    /// Full matrix-valued coefficient.
    Full(MatrixFn),
}

/// Exact solution with gradient, for error measurement.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: ScalarFn,
    pub gradient: VectorFn,
}

/// Known smallest eigenpair.
#[derive(Clone)]
pub struct ExactEigen {
    pub eigenvalue: f64,
    pub value: ScalarFn,
    pub gradient: VectorFn,
}

/// Coefficients and data of one elliptic problem
/// `-div(a grad u) + b . grad u + V u = f` with zero Dirichlet data.
#[derive(Clone)]
pub struct ProblemDef {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub diffusion: DiffusionCoeff,
    pub advection: Option<VectorFn>,
    pub potential: Option<ScalarFn>,
    pub source: Option<ScalarFn>,
    pub exact: Option<ExactSolution>,
    pub exact_eigen: Option<ExactEigen>,
}

impl ProblemDef {
    /// Interior-mode grid over this problem's box.
    pub fn grid(&self, subdivisions: Vec<usize>) -> Result<GridSpec> {
        GridSpec::new(self.lo.clone(), self.hi.clone(), subdivisions, BoundaryMode::Interior)
    }

    /// Samples `a(x)` on a lattice over the closed box (corners included)
    /// and verifies positive definiteness of the symmetric part via Cholesky.
    pub fn check_ellipticity(&self, samples_per_dir: usize) -> Result<()> {
        let d = self.dim;
        let m = samples_per_dir.max(2);
        let mut amat = vec![0.0; d * d];
        let mut x = vec![0.0; d];
        let total = m.pow(d as u32);
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..d {
                let t = rem % m;
                rem /= m;
                x[k] = self.lo[k] + (self.hi[k] - self.lo[k]) * (t as f64 / (m - 1) as f64);
            }
            self.diffusion_at(&x, &mut amat)?;
            // symmetric part
            let mut s = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    s[i * d + j] = 0.5 * (amat[i * d + j] + amat[j * d + i]);
                }
            }
            if !cholesky_in_place(&mut s, d) {
                return Err(Error::InvalidConfig {
                    reason: format!("diffusion coefficient not positive definite at {x:?}"),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn diffusion_at(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        match &self.diffusion {
            DiffusionCoeff::ScaledIdentity(c) => {
                out[..d * d].fill(0.0);
                for i in 0..d {
                    out[i * d + i] = *c;
                }
            }
            DiffusionCoeff::Full(f) => {
                f(x, &mut out[..d * d]);
                for v in &out[..d * d] {
                    if !v.is_finite() {
                        return Err(Error::NonFiniteSample {
                            what: "diffusion coefficient",
                            point: x.to_vec(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for k in 0..n {
        let mut s = a[k * n + k];
        for j in 0..k {
            s -= a[k * n + j] * a[k * n + j];
        }
        if s <= 0.0 || !s.is_finite() {
            return false;
        }
        let lkk = s.sqrt();
        a[k * n + k] = lkk;
        for i in (k + 1)..n {
            let mut v = a[i * n + k];
            for j in 0..k {
                v -= a[i * n + j] * a[k * n + j];
            }
            a[i * n + k] = v / lkk;
        }
    }
    true
}

/// Gauss-Legendre rule on `[0, 1]`; weights sum to one, exact for
/// polynomials of degree `2q - 1`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_legendre(q: usize) -> Result<Self> {
        if q == 0 || q > 64 {
            return Err(Error::InvalidConfig {
                reason: format!("quadrature order {q} out of supported range 1..=64"),
            });
        }
        let mut points = Vec::with_capacity(q);
        let mut weights = Vec::with_capacity(q);
        for k in 0..q {
            // Newton iteration on P_q over [-1, 1]
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(q, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (_, d2) = legendre_with_derivative(q, x);
                    dp = d2;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points.push(0.5 * (x + 1.0));
            weights.push(0.5 * w);
        }
        // initial guesses come out descending in x
        points.reverse();
        weights.reverse();
        Ok(QuadratureRule { points, weights })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1
            || col_indices.len() != values.len()
            || *row_offsets.last().unwrap_or(&0) != col_indices.len()
        {
            return Err(Error::InvalidConfig {
                reason: "inconsistent CSR arrays".into(),
            });
        }
        for r in 0..n_rows {
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidConfig {
                        reason: format!("row {r} columns not sorted/unique"),
                    });
                }
            }
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::InvalidConfig {
                    reason: format!("row {r} has column out of range"),
                });
            }
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, r)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows)
            .map(|r| self.row_offsets[r + 1] - self.row_offsets[r])
            .max()
            .unwrap_or(0)
    }

    /// `|A - A^T|_max <= rel_tol * |A|_max`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if (v - self.get(c, r)).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        let row_dot = |r: usize| -> f64 {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c];
            }
            s
        };
        if self.n_rows >= 8192 {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row_dot(r));
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = row_dot(r);
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }
}

enum Form<'a> {
    Operator(&'a ProblemDef),
    Mass,
}

/// Galerkin matrix of the problem's bilinear form on an interior-mode grid.
/// Row `r`, column `c` holds `a(phi_c, phi_r)`.
pub fn assemble_stiffness(spec: &GridSpec, p: &ProblemDef, rule: &QuadratureRule) -> Result<SparseMatrix> {
    if spec.mode() != BoundaryMode::Interior {
        return Err(Error::InvalidGrid {
            reason: "stiffness assembly requires an interior-mode grid".into(),
        });
    }
    if spec.dim() != p.dim {
        return Err(Error::DimensionMismatch {
            left: spec.dim(),
            right: p.dim,
        });
    }
    assemble_form(spec, Form::Operator(p), rule)
}

/// Mass matrix of the L2 inner product; either boundary mode.
pub fn assemble_mass(spec: &GridSpec, rule: &QuadratureRule) -> Result<SparseMatrix> {
    assemble_form(spec, Form::Mass, rule)
}

struct CellGeometry {
    d: usize,
    shift: usize,
    dof_counts: Vec<usize>,
    dof_strides: Vec<usize>,
    subdivisions: Vec<usize>,
    h: Vec<f64>,
    // shared 1d basis values at quadrature points: basis[g][bit]
    basis: Vec<[f64; 2]>,
    // tensor quadrature: digit list and scaled weight per point
    q_digits: Vec<Vec<usize>>,
    q_weight: Vec<f64>,
    // slot offset per (cell corner choice, basis corner): sum (bit_k + kappa_k) 3^k
    slot_table: Vec<Vec<usize>>,
    pow3: Vec<usize>,
}

impl CellGeometry {
    fn new(spec: &GridSpec, rule: &QuadratureRule) -> Self {
        let d = spec.dim();
        let shift = match spec.mode() {
            BoundaryMode::Inclusive => 0,
            BoundaryMode::Interior => 1,
        };
        let dof_counts = spec.node_counts();
        let dof_strides = spec.strides();
        let h = spec.mesh_sizes();
        let vol: f64 = h.iter().product();

        let q = rule.order();
        let basis: Vec<[f64; 2]> = rule.points().iter().map(|&xi| [1.0 - xi, xi]).collect();

        let n_qp = q.pow(d as u32);
        let mut q_digits = Vec::with_capacity(n_qp);
        let mut q_weight = Vec::with_capacity(n_qp);
        let mut digits = vec![0usize; d];
        for _ in 0..n_qp {
            let w: f64 = digits.iter().map(|&g| rule.weights()[g]).product();
            q_digits.push(digits.clone());
            q_weight.push(w * vol);
            for k in 0..d {
                digits[k] += 1;
                if digits[k] < q {
                    break;
                }
                digits[k] = 0;
            }
        }

        let mut pow3 = vec![1usize; d];
        for k in 1..d {
            pow3[k] = pow3[k - 1] * 3;
        }
        let corners = 1usize << d;
        let slot_table = (0..corners)
            .map(|cell_bits| {
                (0..corners)
                    .map(|kappa| {
                        (0..d)
                            .map(|k| (((cell_bits >> k) & 1) + ((kappa >> k) & 1)) * pow3[k])
                            .sum()
                    })
                    .collect()
            })
            .collect();

        CellGeometry {
            d,
            shift,
            dof_counts,
            dof_strides,
            subdivisions: spec.subdivisions().to_vec(),
            h,
            basis,
            q_digits,
            q_weight,
            slot_table,
            pow3,
        }
    }

    fn decode_row(&self, mut off: usize, p_digits: &mut [usize]) {
        for k in 0..self.d {
            p_digits[k] = off % self.dof_counts[k];
            off /= self.dof_counts[k];
        }
    }
}

fn assemble_form(spec: &GridSpec, form: Form<'_>, rule: &QuadratureRule) -> Result<SparseMatrix> {
    let geo = CellGeometry::new(spec, rule);
    let d = geo.d;
    let n = spec.n_dof();
    let corners = 1usize << d;
    let n_slots = geo.pow3[d - 1] * 3;

    let p_ref = match &form {
        Form::Operator(p) => Some(*p),
        Form::Mass => None,
    };

    const ROW_CHUNK: usize = 128;
    let n_chunks = n.div_ceil(ROW_CHUNK);

    struct ChunkOut {
        row_lens: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    }

    let run_chunk = |chunk: usize| -> Result<ChunkOut> {
        let row_lo = chunk * ROW_CHUNK;
        let row_hi = (row_lo + ROW_CHUNK).min(n);
        let mut out = ChunkOut {
            row_lens: Vec::with_capacity(row_hi - row_lo),
            cols: Vec::new(),
            vals: Vec::new(),
        };
        let mut p_digits = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        let mut amat = vec![0.0f64; d * d];
        let mut bvec = vec![0.0f64; d];
        let mut grad_r = vec![0.0f64; d];
        let mut grad_c = vec![0.0f64; d];
        let mut acc = vec![0.0f64; n_slots];

        for row in row_lo..row_hi {
            geo.decode_row(row, &mut p_digits);
            acc.fill(0.0);

            for cell_bits in 0..corners {
                // cell c_k = i_k - 1 + bit_k with i the inclusive node index
                let mut valid = true;
                for k in 0..d {
                    let i = p_digits[k] + geo.shift;
                    let bit = (cell_bits >> k) & 1;
                    if i + bit == 0 || i + bit > geo.subdivisions[k] {
                        valid = false;
                        break;
                    }
                }
                if !valid {
                    continue;
                }

                for (qp, digits) in geo.q_digits.iter().enumerate() {
                    let w = geo.q_weight[qp];
                    for k in 0..d {
                        let i = p_digits[k] + geo.shift;
                        let bit = (cell_bits >> k) & 1;
                        let c = i + bit - 1;
                        let lo = spec.lo()[k];
                        let hi = spec.hi()[k];
                        let nk = geo.subdivisions[k] as f64;
                        let left = lo + (hi - lo) * (c as f64 / nk);
                        x[k] = left + rule.points()[digits[k]] * geo.h[k];
                    }

                    let mut pot = 0.0;
                    let mut has_b = false;
                    if let Some(p) = p_ref {
                        p.diffusion_at(&x, &mut amat)?;
                        if let Some(b) = &p.advection {
                            b(&x, &mut bvec);
                            has_b = true;
                            for v in &bvec {
                                if !v.is_finite() {
                                    return Err(Error::NonFiniteSample {
                                        what: "advection coefficient",
                                        point: x.clone(),
                                    });
                                }
                            }
                        }
                        if let Some(vf) = &p.potential {
                            pot = vf(&x);
                            if !pot.is_finite() {
                                return Err(Error::NonFiniteSample {
                                    what: "potential coefficient",
                                    point: x.clone(),
                                });
                            }
                        }
                    }

                    // test function: the row node's corner in this cell
                    let mut val_r = 1.0;
                    for k in 0..d {
                        let bit = (cell_bits >> k) & 1;
                        val_r *= geo.basis[digits[k]][1 - bit];
                    }
                    for k in 0..d {
                        let mut g = 1.0;
                        for m in 0..d {
                            let r_bit = 1 - ((cell_bits >> m) & 1);
                            if m == k {
                                g *= if r_bit == 1 { 1.0 / geo.h[m] } else { -1.0 / geo.h[m] };
                            } else {
                                g *= geo.basis[digits[m]][r_bit];
                            }
                        }
                        grad_r[k] = g;
                    }

                    for kappa in 0..corners {
                        let mut val_c = 1.0;
                        for k in 0..d {
                            val_c *= geo.basis[digits[k]][(kappa >> k) & 1];
                        }
                        let term = match p_ref {
                            None => val_c * val_r,
                            Some(p) => {
                                for k in 0..d {
                                    let mut g = 1.0;
                                    for m in 0..d {
                                        let c_bit = (kappa >> m) & 1;
                                        if m == k {
                                            g *= if c_bit == 1 { 1.0 / geo.h[m] } else { -1.0 / geo.h[m] };
                                        } else {
                                            g *= geo.basis[digits[m]][c_bit];
                                        }
                                    }
                                    grad_c[k] = g;
                                }
                                let mut t = match &p.diffusion {
                                    DiffusionCoeff::ScaledIdentity(cc) => {
                                        let mut s = 0.0;
                                        for i in 0..d {
                                            s += grad_c[i] * grad_r[i];
                                        }
                                        cc * s
                                    }
                                    DiffusionCoeff::Full(_) => {
                                        let mut s = 0.0;
                                        for i in 0..d {
                                            for j in 0..d {
                                                s += amat[i * d + j] * grad_c[i] * grad_r[j];
                                            }
                                        }
                                        s
                                    }
                                };
                                if has_b {
                                    let mut s = 0.0;
                                    for i in 0..d {
                                        s += bvec[i] * grad_c[i];
                                    }
                                    t += s * val_r;
                                }
                                t + pot * val_c * val_r
                            }
                        };
                        acc[geo.slot_table[cell_bits][kappa]] += w * term;
                    }
                }
            }

            // emit valid columns in ascending order
            let mut len = 0usize;
            for slot in 0..n_slots {
                let mut col = 0usize;
                let mut ok = true;
                let mut rem = slot;
                for k in 0..d {
                    let t = rem % 3;
                    rem /= 3;
                    let q = p_digits[k] as isize + t as isize - 1;
                    if q < 0 || q as usize >= geo.dof_counts[k] {
                        ok = false;
                        break;
                    }
                    col += q as usize * geo.dof_strides[k];
                }
                if ok {
                    out.cols.push(col);
                    out.vals.push(acc[slot]);
                    len += 1;
                }
            }
            out.row_lens.push(len);
        }
        Ok(out)
    };

    let chunks: Vec<ChunkOut> = (0..n_chunks)
        .into_par_iter()
        .map(run_chunk)
        .collect::<Result<Vec<_>>>()?;

    let total_nnz: usize = chunks.iter().map(|c| c.cols.len()).sum();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(total_nnz);
    let mut values = Vec::with_capacity(total_nnz);
    row_offsets.push(0);
    for c in chunks {
        for len in c.row_lens {
            row_offsets.push(row_offsets.last().unwrap() + len);
        }
        col_indices.extend_from_slice(&c.cols);
        values.extend_from_slice(&c.vals);
    }
    SparseMatrix::from_csr(n, n, row_offsets, col_indices, values)
}

/// Load vector `F[r] = int f phi_r` on an interior-mode grid.
pub fn assemble_load(
    spec: &GridSpec,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    if spec.mode() != BoundaryMode::Interior {
        return Err(Error::InvalidGrid {
            reason: "load assembly requires an interior-mode grid".into(),
        });
    }
    let geo = CellGeometry::new(spec, rule);
    let d = geo.d;
    let n = spec.n_dof();
    let corners = 1usize << d;

    const ROW_CHUNK: usize = 512;
    let n_chunks = n.div_ceil(ROW_CHUNK);
    let run_chunk = |chunk: usize| -> Result<Vec<f64>> {
        let row_lo = chunk * ROW_CHUNK;
        let row_hi = (row_lo + ROW_CHUNK).min(n);
        let mut out = Vec::with_capacity(row_hi - row_lo);
        let mut p_digits = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        for row in row_lo..row_hi {
            geo.decode_row(row, &mut p_digits);
            let mut entry = 0.0;
            for cell_bits in 0..corners {
                let mut valid = true;
                for k in 0..d {
                    let i = p_digits[k] + geo.shift;
                    let bit = (cell_bits >> k) & 1;
                    if i + bit == 0 || i + bit > geo.subdivisions[k] {
                        valid = false;
                        break;
                    }
                }
                if !valid {
                    continue;
                }
                for (qp, digits) in geo.q_digits.iter().enumerate() {
                    let mut val_r = 1.0;
                    for k in 0..d {
                        let i = p_digits[k] + geo.shift;
                        let bit = (cell_bits >> k) & 1;
                        let c = i + bit - 1;
                        let lo = spec.lo()[k];
                        let hi = spec.hi()[k];
                        let nk = geo.subdivisions[k] as f64;
                        x[k] = lo + (hi - lo) * (c as f64 / nk) + rule.points()[digits[k]] * geo.h[k];
                        val_r *= geo.basis[digits[k]][1 - bit];
                    }
                    let fv = f(&x);
                    if !fv.is_finite() {
                        return Err(Error::NonFiniteSample {
                            what: "source term",
                            point: x.clone(),
                        });
                    }
                    entry += geo.q_weight[qp] * fv * val_r;
                }
            }
            out.push(entry);
        }
        Ok(out)
    };

    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(run_chunk)
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.concat())
}

/// Multilinear point evaluation of a nodal vector; interior-mode vectors are
/// extended by zero on the boundary.
pub fn evaluate_fe(u: &NodalVector, x: &[f64]) -> Result<f64> {
    eval_slice(u.spec(), u.values(), x, None)
}

/// Point evaluation together with the (cellwise) gradient.
pub fn evaluate_fe_with_grad(u: &NodalVector, x: &[f64], grad: &mut [f64]) -> Result<f64> {
    eval_slice(u.spec(), u.values(), x, Some(grad))
}

pub(crate) fn eval_slice(
    spec: &GridSpec,
    values: &[f64],
    x: &[f64],
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let d = spec.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { left: x.len(), right: d });
    }
    let shift = match spec.mode() {
        BoundaryMode::Inclusive => 0usize,
        BoundaryMode::Interior => 1usize,
    };
    let counts = spec.node_counts();
    let strides = spec.strides();

    // locate the containing cell and local coordinate per direction
    debug_assert!(d <= 16);
    let mut cell = [0usize; 16];
    let mut xi = [0.0f64; 16];
    let mut h = [0.0f64; 16];
    for k in 0..d {
        let lo = spec.lo()[k];
        let hi = spec.hi()[k];
        if x[k] < lo || x[k] > hi {
            return Err(Error::PointOutsideBox {
                direction: k + 1,
                value: x[k],
                lo,
                hi,
            });
        }
        let nk = spec.subdivisions()[k];
        let t = (x[k] - lo) / (hi - lo) * nk as f64;
        let c = (t.floor() as usize).min(nk - 1);
        cell[k] = c;
        xi[k] = (t - c as f64).clamp(0.0, 1.0);
        h[k] = spec.mesh_size(k);
    }

    // coefficient of the inclusive corner node, honoring zero extension
    let coef = |corner: usize| -> f64 {
        let mut off = 0usize;
        for k in 0..d {
            let node = cell[k] + ((corner >> k) & 1);
            if shift == 1 {
                if node == 0 || node == spec.subdivisions()[k] {
                    return 0.0;
                }
                off += (node - 1) * strides[k];
            } else {
                debug_assert!(node < counts[k]);
                off += node * strides[k];
            }
        }
        values[off]
    };

    let corners = 1usize << d;
    let mut value = 0.0;
    match grad {
        None => {
            for corner in 0..corners {
                let c = coef(corner);
                if c == 0.0 {
                    continue;
                }
                let mut w = c;
                for k in 0..d {
                    w *= if (corner >> k) & 1 == 1 { xi[k] } else { 1.0 - xi[k] };
                }
                value += w;
            }
        }
        Some(g) => {
            g[..d].fill(0.0);
            for corner in 0..corners {
                let c = coef(corner);
                if c == 0.0 {
                    continue;
                }
                let mut w = c;
                for k in 0..d {
                    w *= if (corner >> k) & 1 == 1 { xi[k] } else { 1.0 - xi[k] };
                }
                value += w;
                for k in 0..d {
                    let mut gk = c;
                    for m in 0..d {
                        if m == k {
                            gk *= if (corner >> m) & 1 == 1 { 1.0 / h[m] } else { -1.0 / h[m] };
                        } else {
                            gk *= if (corner >> m) & 1 == 1 { xi[m] } else { 1.0 - xi[m] };
                        }
                    }
                    g[k] += gk;
                }
            }
        }
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMode, GridSpec, NodalVector};

    fn laplace_problem(d: usize) -> ProblemDef {
        ProblemDef {
            dim: d,
            lo: vec![0.0; d],
            hi: vec![1.0; d],
            diffusion: DiffusionCoeff::ScaledIdentity(1.0),
            advection: None,
            potential: None,
            source: None,
            exact: None,
            exact_eigen: None,
        }
    }

    #[test]
    fn gauss_legendre_nodes_and_exactness() {
        let r = QuadratureRule::gauss_legendre(2).unwrap();
        let s = 0.5 / 3.0f64.sqrt();
        assert!((r.points()[0] - (0.5 - s)).abs() < 1e-14);
        assert!((r.points()[1] - (0.5 + s)).abs() < 1e-14);
        for q in 1..=8 {
            let r = QuadratureRule::gauss_legendre(q).unwrap();
            let wsum: f64 = r.weights().iter().sum();
            assert!((wsum - 1.0).abs() < 1e-13, "q={q} weight sum {wsum}");
            for m in 0..(2 * q) {
                let int: f64 = r
                    .points()
                    .iter()
                    .zip(r.weights())
                    .map(|(&x, &w)| w * x.powi(m as i32))
                    .sum();
                let exact = 1.0 / (m as f64 + 1.0);
                assert!((int - exact).abs() < 1e-12, "q={q} m={m}");
            }
        }
    }

    #[test]
    fn laplacian_single_interior_node() {
        let spec = GridSpec::unit(vec![2, 2], BoundaryMode::Interior).unwrap();
        let rule = QuadratureRule::gauss_legendre(3).unwrap();
        let a = assemble_stiffness(&spec, &laplace_problem(2), &rule).unwrap();
        assert_eq!(a.n_rows(), 1);
        assert!((a.get(0, 0) - 8.0 / 3.0).abs() < 1e-13);

        let m = assemble_mass(&spec, &rule).unwrap();
        assert!((m.get(0, 0) - 1.0 / 9.0).abs() < 1e-14);

        let f = assemble_load(&spec, &|_: &[f64]| 1.0, &rule).unwrap();
        assert!((f[0] - 0.25).abs() < 1e-14);
        let z = assemble_load(&spec, &|_: &[f64]| 0.0, &rule).unwrap();
        assert_eq!(z, vec![0.0]);
    }

    #[test]
    fn stiffness_symmetric_for_selfadjoint_problems() {
        let spec = GridSpec::unit(vec![4, 3, 3], BoundaryMode::Interior).unwrap();
        let rule = QuadratureRule::gauss_legendre(3).unwrap();
        let a = assemble_stiffness(&spec, &laplace_problem(3), &rule).unwrap();
        assert!(a.is_symmetric(1e-15));
        assert!(a.max_row_nnz() <= 27);
    }

    #[test]
    fn inclusive_mass_sums_to_volume() {
        let spec = GridSpec::cube(1.0, 2.5, vec![3, 4], BoundaryMode::Inclusive).unwrap();
        let rule = QuadratureRule::gauss_legendre(3).unwrap();
        let m = assemble_mass(&spec, &rule).unwrap();
        let ones = vec![1.0; m.n_rows()];
        let total: f64 = m.matvec(&ones).iter().sum();
        let volume = 1.5 * 1.5;
        assert!((total - volume).abs() < 1e-12, "total {total}");
        assert!(m.is_symmetric(1e-15));
        assert!(m.diagonal().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn load_of_hat_function_equals_mass_column() {
        let spec = GridSpec::unit(vec![4, 3], BoundaryMode::Interior).unwrap();
        let rule = QuadratureRule::gauss_legendre(3).unwrap();
        let m = assemble_mass(&spec, &rule).unwrap();
        let r = 4usize;
        let mut hat = NodalVector::zeros(spec.clone());
        hat.values_mut()[r] = 1.0;
        let f = assemble_load(&spec, &|x: &[f64]| evaluate_fe(&hat, x).unwrap(), &rule).unwrap();
        for c in 0..m.n_rows() {
            assert!((f[c] - m.get(c, r)).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_coefficient_reports_point() {
        let spec = GridSpec::unit(vec![2, 2], BoundaryMode::Interior).unwrap();
        let rule = QuadratureRule::gauss_legendre(2).unwrap();
        let mut p = laplace_problem(2);
        p.potential = Some(Arc::new(
            |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { 1.0 },
        ));
        match assemble_stiffness(&spec, &p, &rule) {
            Err(Error::NonFiniteSample { what, point }) => {
                assert_eq!(what, "potential coefficient");
                assert!(point[0] > 0.5);
            }
            Ok(_) => panic!("expected NonFiniteSample"),
            Err(other) => panic!("expected NonFiniteSample, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_fe_reproduces_multilinear() {
        let spec = GridSpec::cube(-1.0, 3.0, vec![3, 5], BoundaryMode::Inclusive).unwrap();
        let g = |x: &[f64]| 2.0 + 0.5 * x[0] - 1.5 * x[1] + 0.25 * x[0] * x[1];
        let u = NodalVector::sample(&spec, g);
        for &pt in &[[0.1, 0.2], [-0.99, 2.7], [1.23, 0.0], [3.0, 3.0]] {
            let v = evaluate_fe(&u, &pt).unwrap();
            assert!((v - g(&pt)).abs() < 1e-13, "at {pt:?}: {v}");
        }
        // node values are reproduced
        let xn = spec.node_coords(&[2, 4]).unwrap();
        let lin = spec.linear_index(&[2, 4]).unwrap();
        assert!((evaluate_fe(&u, &xn).unwrap() - u.get(lin)).abs() < 1e-14);
        // gradient of the interpolant of x_1
        let ux = NodalVector::sample(&spec, |x| x[0]);
        let mut grad = [0.0; 2];
        let v = evaluate_fe_with_grad(&ux, &[0.4, 1.0], &mut grad).unwrap();
        assert!((v - 0.4).abs() < 1e-14);
        assert!((grad[0] - 1.0).abs() < 1e-13 && grad[1].abs() < 1e-13);
        // outside the box
        assert!(matches!(
            evaluate_fe(&u, &[4.0, 0.0]),
            Err(Error::PointOutsideBox { .. })
        ));
    }

    #[test]
    fn interior_mode_extends_by_zero() {
        let spec = GridSpec::unit(vec![2, 2], BoundaryMode::Interior).unwrap();
        let u = NodalVector::from_values(spec, vec![1.0]).unwrap();
        assert!((evaluate_fe(&u, &[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(evaluate_fe(&u, &[0.0, 0.5]).unwrap(), 0.0);
        assert!((evaluate_fe(&u, &[0.25, 0.5]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ellipticity_check_flags_indefinite_coefficient() {
        let mut p = laplace_problem(2);
        p.check_ellipticity(4).unwrap();
        p.diffusion = DiffusionCoeff::Full(Arc::new(|x: &[f64], a: &mut [f64]| {
            a.copy_from_slice(&[x[0] - 0.5, 0.0, 0.0, 1.0]);
        }));
        assert!(p.check_ellipticity(4).is_err());
    }
}
