//! Error norms against exact solutions, empirical convergence orders, and
//! table construction.

use rayon::prelude::*;

use crate::assembly::{eval_slice, ExactSolution, QuadratureRule};
use crate::error::Result;
use crate::grid::NodalVector;

/// Default Gauss order for error integration. Squared interpolation-error
/// bubbles are quartic per direction; two points misintegrate them by a few
/// percent, three are converged well below the 0.1% stability contract.
pub const DEFAULT_ERROR_QUAD_ORDER: usize = 3;

/// Anything that can be evaluated (with gradient) over a tensor-product
/// breakpoint structure. Norm integration walks the finest per-direction
/// refinement of all breakpoints.
pub trait FeFunction: Sync {
    fn dim(&self) -> usize;
    fn lo(&self) -> &[f64];
    fn hi(&self) -> &[f64];
    /// Sorted cell boundaries along direction `k`, endpoints included.
    fn breakpoints(&self, k: usize) -> Vec<f64>;
    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
    /// Degree-of-freedom count per stored component.
    fn dofs(&self) -> Vec<usize> {
        vec![]
    }
    /// Weighted multilinear components, when the function is a combination
    /// of nodal vectors; enables the tensorized integration fast path.
    fn components(&self) -> Option<Vec<(f64, &NodalVector)>> {
        None
    }
}

impl FeFunction for NodalVector {
    fn dim(&self) -> usize {
        self.spec().dim()
    }

    fn lo(&self) -> &[f64] {
        self.spec().lo()
    }

    fn hi(&self) -> &[f64] {
        self.spec().hi()
    }

    fn breakpoints(&self, k: usize) -> Vec<f64> {
        let spec = self.spec();
        (0..=spec.subdivisions()[k]).map(|t| spec.coord(k, t)).collect()
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        eval_slice(self.spec(), self.values(), x, Some(grad))
    }

    fn dofs(&self) -> Vec<usize> {
        vec![self.spec().n_dof()]
    }

    fn components(&self) -> Option<Vec<(f64, &NodalVector)>> {
        Some(vec![(1.0, self)])
    }
}

/// L2 and H1 errors (the `h1` field is the full norm
/// `sqrt(seminorm^2 + l2^2)`).
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub l2: f64,
    pub h1: f64,
    pub h1_semi: f64,
    pub dofs: Vec<usize>,
    pub seconds: f64,
}

/// Errors of `f` against an exact solution, integrated with a tensor Gauss
/// rule over the union of all component breakpoints.
pub fn error_norms<F: FeFunction>(f: &F, exact: &ExactSolution, quad_order: usize) -> Result<ErrorReport> {
    integrate_norms(f, Some(exact), quad_order)
}

/// Norms of `f` itself.
pub fn function_norms<F: FeFunction>(f: &F, quad_order: usize) -> Result<ErrorReport> {
    integrate_norms(f, None, quad_order)
}

fn integrate_norms<F: FeFunction>(
    f: &F,
    exact: Option<&ExactSolution>,
    quad_order: usize,
) -> Result<ErrorReport> {
    match f.components() {
        Some(parts) => integrate_norms_tensorized(f, &parts, exact, quad_order),
        None => integrate_norms_generic(f, exact, quad_order),
    }
}

// per-direction tables for one component: union-cell -> component-cell
// corner offsets (negative = Dirichlet zero) and 1d basis values at the
// mapped quadrature points
struct DirTable {
    corner_off: Vec<[i64; 2]>,
    basis: Vec<[f64; 2]>,
    dscale: f64,
}

fn direction_table(
    comp: &NodalVector,
    k: usize,
    breaks: &[f64],
    rule: &QuadratureRule,
) -> DirTable {
    let spec = comp.spec();
    let q = rule.order();
    let n_k = spec.subdivisions()[k];
    let lo = spec.lo()[k];
    let hi = spec.hi()[k];
    let stride = spec.strides()[k] as i64;
    let interior = spec.mode() == crate::grid::BoundaryMode::Interior;
    let n_cells = breaks.len() - 1;

    let mut corner_off = Vec::with_capacity(n_cells);
    let mut basis = Vec::with_capacity(n_cells * q);
    for m in 0..n_cells {
        let (a, b) = (breaks[m], breaks[m + 1]);
        let mid = 0.5 * (a + b);
        let cc = (((mid - lo) / (hi - lo) * n_k as f64).floor() as usize).min(n_k - 1);
        let off = |node: usize| -> i64 {
            if interior {
                if node == 0 || node == n_k {
                    return -1;
                }
                (node - 1) as i64 * stride
            } else {
                node as i64 * stride
            }
        };
        corner_off.push([off(cc), off(cc + 1)]);
        let (ca, cb) = (spec.coord(k, cc), spec.coord(k, cc + 1));
        for &xi in rule.points() {
            let x = a + xi * (b - a);
            let t = ((x - ca) / (cb - ca)).clamp(0.0, 1.0);
            basis.push([1.0 - t, t]);
        }
    }
    DirTable {
        corner_off,
        basis,
        dscale: 1.0 / spec.mesh_size(k),
    }
}

fn integrate_norms_tensorized<F: FeFunction>(
    f: &F,
    parts: &[(f64, &NodalVector)],
    exact: Option<&ExactSolution>,
    quad_order: usize,
) -> Result<ErrorReport> {
    let start = std::time::Instant::now();
    let d = f.dim();
    debug_assert!(d <= 16);
    let rule = QuadratureRule::gauss_legendre(quad_order)?;
    let q = rule.order();

    let breaks: Vec<Vec<f64>> = (0..d).map(|k| f.breakpoints(k)).collect();
    let cells_per_dir: Vec<usize> = breaks.iter().map(|b| b.len() - 1).collect();
    let n_cells: usize = cells_per_dir.iter().product();
    let qpd = q.pow(d as u32);

    // tables[c][k]
    let tables: Vec<Vec<DirTable>> = parts
        .iter()
        .map(|(_, comp)| (0..d).map(|k| direction_table(comp, k, &breaks[k], &rule)).collect())
        .collect();

    const CELL_CHUNK: usize = 1024;
    let n_chunks = n_cells.div_ceil(CELL_CHUNK);

    let chunk_sums = |chunk: usize| -> Result<(f64, f64)> {
        let lo_cell = chunk * CELL_CHUNK;
        let hi_cell = (lo_cell + CELL_CHUNK).min(n_cells);
        let mut l2 = 0.0f64;
        let mut h1 = 0.0f64;
        let mut cell_idx = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        let mut gf = [0.0f64; 16];
        let mut ge = vec![0.0f64; d];
        let corners = 1usize << d;

        for flat in lo_cell..hi_cell {
            let mut rem = flat;
            for k in 0..d {
                cell_idx[k] = rem % cells_per_dir[k];
                rem /= cells_per_dir[k];
            }
            let mut vol = 1.0;
            for k in 0..d {
                vol *= breaks[k][cell_idx[k] + 1] - breaks[k][cell_idx[k]];
            }
            if vol <= 0.0 {
                continue;
            }
            for qp in 0..qpd {
                let mut w = vol;
                let mut gdig = [0usize; 16];
                let mut rem = qp;
                for k in 0..d {
                    let g = rem % q;
                    rem /= q;
                    gdig[k] = g;
                    let a = breaks[k][cell_idx[k]];
                    let b = breaks[k][cell_idx[k] + 1];
                    x[k] = a + rule.points()[g] * (b - a);
                    w *= rule.weights()[g];
                }

                let mut fv = 0.0f64;
                gf[..d].fill(0.0);
                for (ci, (weight, comp)) in parts.iter().enumerate() {
                    let vals = comp.values();
                    let tab = &tables[ci];
                    for corner in 0..corners {
                        let mut off: i64 = 0;
                        let mut missing = false;
                        for k in 0..d {
                            let o = tab[k].corner_off[cell_idx[k]][(corner >> k) & 1];
                            if o < 0 {
                                missing = true;
                                break;
                            }
                            off += o;
                        }
                        if missing {
                            continue;
                        }
                        let coef = vals[off as usize];
                        if coef == 0.0 {
                            continue;
                        }
                        let cw = coef * weight;
                        let mut prod = cw;
                        for k in 0..d {
                            prod *= tab[k].basis[cell_idx[k] * q + gdig[k]][(corner >> k) & 1];
                        }
                        fv += prod;
                        for k in 0..d {
                            let mut g = cw;
                            for m in 0..d {
                                let bit = (corner >> m) & 1;
                                if m == k {
                                    g *= if bit == 1 { tab[m].dscale } else { -tab[m].dscale };
                                } else {
                                    g *= tab[m].basis[cell_idx[m] * q + gdig[m]][bit];
                                }
                            }
                            gf[k] += g;
                        }
                    }
                }

                let (ev, diff_grad_sq) = match exact {
                    Some(ex) => {
                        let ev = (ex.value)(&x);
                        (ex.gradient)(&x, &mut ge);
                        let mut s = 0.0;
                        for k in 0..d {
                            let dg = gf[k] - ge[k];
                            s += dg * dg;
                        }
                        (ev, s)
                    }
                    None => (0.0, gf[..d].iter().map(|v| v * v).sum()),
                };
                let dv = fv - ev;
                l2 += w * dv * dv;
                h1 += w * diff_grad_sq;
            }
        }
        Ok((l2, h1))
    };

    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(chunk_sums)
        .collect::<Result<Vec<_>>>()?;
    let mut l2_sq = 0.0;
    let mut semi_sq = 0.0;
    for (a, b) in partials {
        l2_sq += a;
        semi_sq += b;
    }
    let l2 = l2_sq.max(0.0).sqrt();
    let h1_semi = semi_sq.max(0.0).sqrt();
    Ok(ErrorReport {
        l2,
        h1: (l2_sq + semi_sq).max(0.0).sqrt(),
        h1_semi,
        dofs: f.dofs(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn integrate_norms_generic<F: FeFunction>(
    f: &F,
    exact: Option<&ExactSolution>,
    quad_order: usize,
) -> Result<ErrorReport> {
    let start = std::time::Instant::now();
    let d = f.dim();
    let rule = QuadratureRule::gauss_legendre(quad_order)?;
    let q = rule.order();

    let breaks: Vec<Vec<f64>> = (0..d).map(|k| f.breakpoints(k)).collect();
    let cells_per_dir: Vec<usize> = breaks.iter().map(|b| b.len() - 1).collect();
    let n_cells: usize = cells_per_dir.iter().product();
    let qpd = q.pow(d as u32);

    // partial sums per fixed-size chunk keep the reduction deterministic
    const CELL_CHUNK: usize = 1024;
    let n_chunks = n_cells.div_ceil(CELL_CHUNK);

    let chunk_sums = |chunk: usize| -> Result<(f64, f64)> {
        let lo_cell = chunk * CELL_CHUNK;
        let hi_cell = (lo_cell + CELL_CHUNK).min(n_cells);
        let mut l2 = 0.0f64;
        let mut h1 = 0.0f64;
        let mut cell_idx = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        let mut gf = vec![0.0f64; d];
        let mut ge = vec![0.0f64; d];
        for flat in lo_cell..hi_cell {
            let mut rem = flat;
            for k in 0..d {
                cell_idx[k] = rem % cells_per_dir[k];
                rem /= cells_per_dir[k];
            }
            let mut vol = 1.0;
            for k in 0..d {
                vol *= breaks[k][cell_idx[k] + 1] - breaks[k][cell_idx[k]];
            }
            if vol <= 0.0 {
                continue;
            }
            for qp in 0..qpd {
                let mut w = vol;
                let mut rem = qp;
                for k in 0..d {
                    let g = rem % q;
                    rem /= q;
                    let a = breaks[k][cell_idx[k]];
                    let b = breaks[k][cell_idx[k] + 1];
                    x[k] = a + rule.points()[g] * (b - a);
                    w *= rule.weights()[g];
                }
                let fv = f.eval_grad(&x, &mut gf)?;
                let (ev, diff_grad_sq) = match exact {
                    Some(ex) => {
                        let ev = (ex.value)(&x);
                        (ex.gradient)(&x, &mut ge);
                        let mut s = 0.0;
                        for k in 0..d {
                            let dg = gf[k] - ge[k];
                            s += dg * dg;
                        }
                        (ev, s)
                    }
                    None => (0.0, gf.iter().map(|v| v * v).sum()),
                };
                let dv = fv - ev;
                l2 += w * dv * dv;
                h1 += w * diff_grad_sq;
            }
        }
        Ok((l2, h1))
    };

    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(chunk_sums)
        .collect::<Result<Vec<_>>>()?;
    let mut l2_sq = 0.0;
    let mut semi_sq = 0.0;
    for (a, b) in partials {
        l2_sq += a;
        semi_sq += b;
    }
    let l2 = l2_sq.max(0.0).sqrt();
    let h1_semi = semi_sq.max(0.0).sqrt();
    Ok(ErrorReport {
        l2,
        h1: (l2_sq + semi_sq).max(0.0).sqrt(),
        h1_semi,
        dofs: f.dofs(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Empirical order of convergence between two grids; `None` when a
/// nonpositive error or mesh ratio makes the order undefined.
pub fn eoc(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    if e_coarse <= 0.0 || e_fine <= 0.0 || h_coarse <= h_fine || h_fine <= 0.0 {
        return None;
    }
    Some((e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
}

/// Least-squares slope of `log e` against `log h`.
pub fn log_log_slope(h: &[f64], e: &[f64]) -> Option<f64> {
    if h.len() != e.len() || h.len() < 2 {
        return None;
    }
    if h.iter().any(|&v| v <= 0.0) || e.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// One measured grid in a convergence study.
#[derive(Debug, Clone)]
pub struct TableRow {
    /// Coarse mesh size used for ordering and EOC.
    pub h: f64,
    pub fine: usize,
    pub coarse: Option<usize>,
    pub l2: f64,
    pub h1: f64,
    pub eig_error: Option<f64>,
    pub eoc_l2: Option<f64>,
    pub eoc_h1: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<TableRow>,
}

/// Sorts rows by decreasing `h` and fills the EOC columns between
/// consecutive rows.
pub fn build_table(mut rows: Vec<TableRow>) -> ConvergenceTable {
    rows.sort_by(|a, b| b.h.partial_cmp(&a.h).unwrap_or(std::cmp::Ordering::Equal));
    for i in 0..rows.len() {
        if i == 0 {
            rows[i].eoc_l2 = None;
            rows[i].eoc_h1 = None;
        } else {
            let (hc, hf) = (rows[i - 1].h, rows[i].h);
            rows[i].eoc_l2 = eoc(rows[i - 1].l2, rows[i].l2, hc, hf);
            rows[i].eoc_h1 = eoc(rows[i - 1].h1, rows[i].h1, hc, hf);
        }
    }
    ConvergenceTable { rows }
}

impl std::fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:>10} {:>6} {:>6} {:>13} {:>13} {:>7} {:>7} {:>13}",
            "H", "n", "N", "l2_error", "h1_error", "eoc_l2", "eoc_h1", "eig_error"
        )?;
        for r in &self.rows {
            let fmt_opt = |v: Option<f64>| match v {
                Some(v) => format!("{v:.2}"),
                None => "-".to_string(),
            };
            writeln!(
                f,
                "{:>10.5} {:>6} {:>6} {:>13.5e} {:>13.5e} {:>7} {:>7} {:>13}",
                r.h,
                r.fine,
                r.coarse.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
                r.l2,
                r.h1,
                fmt_opt(r.eoc_l2),
                fmt_opt(r.eoc_h1),
                r.eig_error.map(|v| format!("{v:.5e}")).unwrap_or_else(|| "-".into()),
            )?;
        }
        Ok(())
    }
}
