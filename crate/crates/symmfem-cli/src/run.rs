//! Experiment execution: drives the chosen method over the grid sequence,
//! measures errors, and writes `convergence.csv`, `timings.csv` and a
//! gnuplot script.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use symmfem::analysis::{eoc, error_norms, ConvergenceTable, ErrorReport, TableRow};
use symmfem::assembly::{ExactSolution, ProblemDef};
use symmfem::error::Error as FemError;
use symmfem::problems;
use symmfem::solvers::{EigenConfig, SolverConfig};
use symmfem::two_scale::{
    fem_eigen, fem_source, plain_two_scale_eigen, plain_two_scale_source, sym_two_scale_eigen,
    sym_two_scale_source, ScalePair, StageTimings,
};

use crate::config::{MethodKind, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Solver(#[from] FemError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("grid {fine}x{coarse} failed: {source}")]
    Grid {
        fine: usize,
        coarse: usize,
        #[source]
        source: FemError,
    },
}

/// One measured grid; metric fields are `None` on failure.
#[derive(Debug, Clone, Default)]
pub struct Row {
    pub fine: usize,
    pub coarse: Option<usize>,
    pub dof_coarse: Option<usize>,
    pub dof_fine: Option<usize>,
    pub l2: Option<f64>,
    pub h1: Option<f64>,
    pub eig_error: Option<f64>,
    pub eoc_l2: Option<f64>,
    pub eoc_h1: Option<f64>,
    pub t_coarse: Option<f64>,
    pub t_fine: Vec<f64>,
    pub t_transform: Option<f64>,
    pub t_combine: Option<f64>,
    pub t_total: Option<f64>,
    pub warning: Option<String>,
}

pub struct RunOutput {
    pub rows: Vec<Row>,
    pub convergence_csv: PathBuf,
    pub timings_csv: PathBuf,
    pub plot_script: PathBuf,
    pub failed: bool,
}

fn toward_eigen(p: &ProblemDef) -> bool {
    p.source.is_none() && p.exact_eigen.is_some()
}

fn eigen_exact(p: &ProblemDef) -> Option<ExactSolution> {
    p.exact_eigen.as_ref().map(|e| ExactSolution {
        value: e.value.clone(),
        gradient: e.gradient.clone(),
    })
}

fn measure_errors<F: symmfem::analysis::FeFunction>(
    f: &F,
    exact: Option<&ExactSolution>,
    quad_error: usize,
) -> Result<Option<ErrorReport>, FemError> {
    match exact {
        Some(ex) => Ok(Some(error_norms(f, ex, quad_error)?)),
        None => Ok(None),
    }
}

fn run_grid(p: &ProblemDef, cfg: &RunConfig, fine: usize, coarse: usize) -> Result<Row, FemError> {
    let solver = SolverConfig {
        rel_tol: cfg.tol,
        ..SolverConfig::default()
    };
    let eigen_cfg = EigenConfig {
        rel_tol: cfg.tol,
        inner: solver.clone(),
        ..EigenConfig::default()
    };
    let mut row = Row {
        fine,
        coarse: (cfg.method != MethodKind::Fem).then_some(coarse),
        ..Row::default()
    };

    match cfg.method {
        MethodKind::Fem => {
            if toward_eigen(p) {
                let (lambda, u, secs) = fem_eigen(p, fine, cfg.quad_assembly, &eigen_cfg)?;
                let exact = eigen_exact(p);
                if let Some(r) = measure_errors(&u, exact.as_ref(), cfg.quad_error)? {
                    row.l2 = Some(r.l2);
                    row.h1 = Some(r.h1);
                }
                row.eig_error = Some((lambda - p.exact_eigen.as_ref().unwrap().eigenvalue).abs());
                row.dof_fine = Some(u.spec().n_dof());
                row.t_fine = vec![secs];
                row.t_total = Some(secs);
            } else {
                let (u, secs) = fem_source(p, fine, cfg.quad_assembly, &solver)?;
                if let Some(r) = measure_errors(&u, p.exact.as_ref(), cfg.quad_error)? {
                    row.l2 = Some(r.l2);
                    row.h1 = Some(r.h1);
                }
                row.dof_fine = Some(u.spec().n_dof());
                row.t_fine = vec![secs];
                row.t_total = Some(secs);
            }
        }
        MethodKind::TwoScale | MethodKind::SymTwoScale => {
            let s = ScalePair::new(fine, coarse)?;
            let sym = cfg.method == MethodKind::SymTwoScale;
            let result = if toward_eigen(p) {
                if sym {
                    sym_two_scale_eigen(p, &s, cfg.quad_assembly, &eigen_cfg)?
                } else {
                    plain_two_scale_eigen(p, &s, cfg.quad_assembly, &eigen_cfg)?
                }
            } else if sym {
                sym_two_scale_source(p, &s, cfg.quad_assembly, &solver)?
            } else {
                plain_two_scale_source(p, &s, cfg.quad_assembly, &solver)?
            };
            let exact = if toward_eigen(p) { eigen_exact(p) } else { p.exact.clone() };
            if let Some(r) = measure_errors(&result.combined, exact.as_ref(), cfg.quad_error)? {
                row.l2 = Some(r.l2);
                row.h1 = Some(r.h1);
            }
            if let (Some(b), Some(e)) = (result.eigenvalue, p.exact_eigen.as_ref()) {
                row.eig_error = Some((b - e.eigenvalue).abs());
            }
            let StageTimings {
                coarse_solve,
                fine_solves,
                transforms,
                combine,
                total,
            } = result.timings;
            row.dof_coarse = Some(result.dof_coarse);
            row.dof_fine = Some(result.dof_fine);
            row.t_coarse = Some(coarse_solve);
            row.t_fine = fine_solves;
            row.t_transform = sym.then_some(transforms);
            row.t_combine = Some(combine);
            row.t_total = Some(total);
            row.warning = result.symmetry_warning;
        }
    }
    Ok(row)
}

/// Executes the configured experiment. Completed rows are always flushed to
/// the CSV files; a failing grid contributes a row with empty metric fields
/// and stops the sequence.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate().map_err(|e| RunError::Io(std::io::Error::other(e.to_string())))?;
    let p = problems::by_key(cfg.problem.as_str()).ok_or_else(|| {
        RunError::Io(std::io::Error::other(format!(
            "problem '{}' has no built-in definition",
            cfg.problem.as_str()
        )))
    })?;
    p.check_ellipticity(4).map_err(RunError::Solver)?;

    for (n, big_n) in cfg.non_nested_pairs() {
        eprintln!("note: pair {n}:{big_n} has non-integer ratio; the nesting assumption of the theory does not hold");
    }

    // one untimed warm-up at the smallest grid; failures surface in the
    // timed loop where они are recorded in the CSV
    if let Some(&(n, big_n)) = cfg.grids.iter().min_by_key(|(n, _)| *n) {
        let _ = run_grid(&p, cfg, n, big_n);
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut failure: Option<RunError> = None;
    for &(fine, coarse) in &cfg.grids {
        match run_grid(&p, cfg, fine, coarse) {
            Ok(row) => {
                if let Some(w) = &row.warning {
                    eprintln!("warning ({fine}:{coarse}): {w}");
                }
                rows.push(row);
            }
            Err(e) => {
                rows.push(Row {
                    fine,
                    coarse: (cfg.method != MethodKind::Fem).then_some(coarse),
                    ..Row::default()
                });
                failure = Some(RunError::Grid {
                    fine,
                    coarse,
                    source: e,
                });
                break;
            }
        }
    }

    fill_eoc(&mut rows, &p);

    fs::create_dir_all(&cfg.out)?;
    let convergence_csv = cfg.out.join("convergence.csv");
    let timings_csv = cfg.out.join("timings.csv");
    let plot_script = cfg.out.join("plot.gp");
    fs::write(&convergence_csv, convergence_csv_text(cfg, &p, &rows))?;
    fs::write(&timings_csv, timings_csv_text(cfg, &p, &rows))?;
    fs::write(&plot_script, plot_script_text(cfg))?;

    let output = RunOutput {
        rows,
        convergence_csv,
        timings_csv,
        plot_script,
        failed: failure.is_some(),
    };
    match failure {
        Some(e) => Err(e),
        None => Ok(output),
    }
}

fn mesh_parameter(p: &ProblemDef, row: &Row) -> f64 {
    let side = p.hi[0] - p.lo[0];
    match row.coarse {
        Some(c) => side / c as f64,
        None => side / row.fine as f64,
    }
}

fn fill_eoc(rows: &mut [Row], p: &ProblemDef) {
    for i in 1..rows.len() {
        let hc = mesh_parameter(p, &rows[i - 1]);
        let hf = mesh_parameter(p, &rows[i]);
        if let (Some(ec), Some(ef)) = (rows[i - 1].l2, rows[i].l2) {
            rows[i].eoc_l2 = eoc(ec, ef, hc, hf);
        }
        if let (Some(ec), Some(ef)) = (rows[i - 1].h1, rows[i].h1) {
            rows[i].eoc_h1 = eoc(ec, ef, hc, hf);
        }
    }
}

fn fmt_opt_e(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6e}")).unwrap_or_default()
}

fn fmt_opt_f(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn fmt_opt_u(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const CONVERGENCE_HEADER: &str = "problem,method,d,N,n,dof_coarse,dof_fine,l2_error,h1_error,eig_error,eoc_l2,eoc_h1,t_coarse,t_fine,t_transform,t_combine,t_total";

fn convergence_csv_text(cfg: &RunConfig, p: &ProblemDef, rows: &[Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CONVERGENCE_HEADER}");
    for row in rows {
        let t_fine_total = (!row.t_fine.is_empty()).then(|| row.t_fine.iter().sum::<f64>());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            cfg.problem.as_str(),
            cfg.method.as_str(),
            p.dim,
            fmt_opt_u(row.coarse),
            row.fine,
            fmt_opt_u(row.dof_coarse),
            fmt_opt_u(row.dof_fine),
            fmt_opt_e(row.l2),
            fmt_opt_e(row.h1),
            fmt_opt_e(row.eig_error),
            fmt_opt_e(row.eoc_l2),
            fmt_opt_e(row.eoc_h1),
            fmt_opt_f(row.t_coarse),
            fmt_opt_f(t_fine_total),
            fmt_opt_f(row.t_transform),
            fmt_opt_f(row.t_combine),
            fmt_opt_f(row.t_total),
        );
    }
    s
}

pub const TIMINGS_HEADER: &str = "problem,method,d,N,n,t_coarse,t_fine_1,t_fine_2,t_fine_3,t_transform,t_combine,t_total";

fn timings_csv_text(cfg: &RunConfig, p: &ProblemDef, rows: &[Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TIMINGS_HEADER}");
    for row in rows {
        let fine = |i: usize| fmt_opt_f(row.t_fine.get(i).copied());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            cfg.problem.as_str(),
            cfg.method.as_str(),
            p.dim,
            fmt_opt_u(row.coarse),
            row.fine,
            fmt_opt_f(row.t_coarse),
            fine(0),
            fine(1),
            fine(2),
            fmt_opt_f(row.t_transform),
            fmt_opt_f(row.t_combine),
            fmt_opt_f(row.t_total),
        );
    }
    s
}

fn plot_script_text(cfg: &RunConfig) -> String {
    format!(
        r#"# gnuplot script: log-log error and time curves for {problem} / {method}
# run from this directory:  gnuplot plot.gp
set datafile separator ","
set datafile missing ""
set key autotitle columnhead left bottom
set logscale xy

set terminal svg size 800,600
set output "error.svg"
set xlabel "coarse subdivisions N (mesh size H = side/N)"
set ylabel "error"
plot "convergence.csv" using 4:8 with linespoints title "L2", \
     "convergence.csv" using 4:9 with linespoints title "H1", \
     "convergence.csv" using 4:10 with linespoints title "eigenvalue"

set output "time.svg"
set xlabel "fine degrees of freedom"
set ylabel "seconds"
plot "convergence.csv" using 7:17 with linespoints title "total time"
"#,
        problem = cfg.problem.as_str(),
        method = cfg.method.as_str(),
    )
}

/// Pretty table for stdout.
pub fn to_table(p: &ProblemDef, rows: &[Row]) -> ConvergenceTable {
    let table_rows: Vec<TableRow> = rows
        .iter()
        .filter(|r| r.l2.is_some() || r.eig_error.is_some())
        .map(|r| TableRow {
            h: mesh_parameter(p, r),
            fine: r.fine,
            coarse: r.coarse,
            l2: r.l2.unwrap_or(f64::NAN),
            h1: r.h1.unwrap_or(f64::NAN),
            eig_error: r.eig_error,
            eoc_l2: r.eoc_l2,
            eoc_h1: r.eoc_h1,
        })
        .collect();
    symmfem::analysis::build_table(table_rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers_are_stable() {
        assert_eq!(CONVERGENCE_HEADER.split(',').count(), 17);
        assert_eq!(TIMINGS_HEADER.split(',').count(), 12);
        assert!(CONVERGENCE_HEADER.starts_with("problem,method,d,N,n,"));
    }

    #[test]
    fn empty_fields_preserve_column_count() {
        let cfg = RunConfig::default();
        let p = problems::example1();
        let rows = vec![Row {
            fine: 16,
            coarse: Some(4),
            ..Row::default()
        }];
        let text = convergence_csv_text(&cfg, &p, &rows);
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line.split(',').count(), 17);
        assert!(line.starts_with("ex1,sym-two-scale,3,4,16,"));
    }
}
