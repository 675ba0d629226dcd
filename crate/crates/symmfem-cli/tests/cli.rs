//! End-to-end tests against the built binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_symmfem"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Timing columns vary run to run; everything else must be byte-identical.
fn mask_timing_columns(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let fields: Vec<&str> = line.split(',').collect();
            // t_coarse..t_total are the last five columns
            let keep = fields.len() - 5;
            out.push_str(&fields[..keep].join(","));
        }
        out.push('\n');
    }
    out
}

#[test]
fn run_writes_schema_stable_csv() {
    let dir = std::env::temp_dir().join("symmfem-cli-test-basic");
    let _ = std::fs::remove_dir_all(&dir);
    let status = bin()
        .args([
            "run",
            "--problem",
            "poisson2d",
            "--method",
            "sym-two-scale",
            "--grids",
            "16:4,36:6",
            "--threads",
            "2",
            "--out",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());

    let conv = read(&dir.join("convergence.csv"));
    let mut lines = conv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "problem,method,d,N,n,dof_coarse,dof_fine,l2_error,h1_error,eig_error,eoc_l2,eoc_h1,t_coarse,t_fine,t_transform,t_combine,t_total"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row.split(',').count(), 17);
        assert!(row.starts_with("poisson2d,sym-two-scale,2,"));
    }
    // eig_error column empty for source problems
    assert_eq!(rows[0].split(',').nth(9).unwrap(), "");
    // errors decrease down the sequence
    let l2: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert!(l2[1] < l2[0]);
    // second row carries the eoc entries
    assert!(!rows[1].split(',').nth(10).unwrap().is_empty());

    assert!(dir.join("timings.csv").exists());
    let plot = read(&dir.join("plot.gp"));
    assert!(plot.contains("convergence.csv"));
    assert!(plot.contains("logscale"));
    // LF endings only
    assert!(!conv.contains('\r'));
}

#[test]
fn run_is_deterministic_outside_timings() {
    let dir_a = std::env::temp_dir().join("symmfem-cli-test-det-a");
    let dir_b = std::env::temp_dir().join("symmfem-cli-test-det-b");
    for dir in [&dir_a, &dir_b] {
        let _ = std::fs::remove_dir_all(dir);
        let status = bin()
            .args([
                "run",
                "--problem",
                "poisson2d",
                "--method",
                "two-scale",
                "--grids",
                "8:4,16:8",
                "--threads",
                "2",
                "--out",
            ])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = mask_timing_columns(&read(&dir_a.join("convergence.csv")));
    let b = mask_timing_columns(&read(&dir_b.join("convergence.csv")));
    assert_eq!(a, b);
}

#[test]
fn eigen_problem_populates_eig_error() {
    let dir = std::env::temp_dir().join("symmfem-cli-test-eig");
    let _ = std::fs::remove_dir_all(&dir);
    let status = bin()
        .args([
            "run", "--problem", "ex3", "--method", "fem", "--grids", "6:2", "--threads", "2", "--out",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let conv = read(&dir.join("convergence.csv"));
    let row = conv.lines().nth(1).unwrap();
    let eig = row.split(',').nth(9).unwrap();
    let lambda_err: f64 = eig.parse().unwrap();
    assert!(lambda_err > 0.0 && lambda_err < 10.0);
    // no coarse grid for plain fem
    assert_eq!(row.split(',').nth(3).unwrap(), "");
}

#[test]
fn solver_failure_flushes_partial_csv_and_exits_nonzero() {
    let dir = std::env::temp_dir().join("symmfem-cli-test-fail");
    let _ = std::fs::remove_dir_all(&dir);
    let out = bin()
        .args([
            "run",
            "--problem",
            "poisson2d",
            "--method",
            "sym-two-scale",
            "--grids",
            "8:4",
            "--tol",
            "1e-300",
            "--threads",
            "2",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let conv = read(&dir.join("convergence.csv"));
    let row = conv.lines().nth(1).unwrap();
    assert_eq!(row.split(',').count(), 17);
    assert!(row.starts_with("poisson2d,sym-two-scale,2,4,8,"));
    // metric fields empty on the failure row
    assert_eq!(row.split(',').nth(7).unwrap(), "");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = std::env::temp_dir().join("symmfem-cli-test-cfg");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("run.cfg");
    std::fs::write(
        &cfg_path,
        "# experiment config\nproblem = poisson2d\nmethod = sym-two-scale\ngrids = 64:8\nthreads = 2\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--grids", "8:4", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let conv = read(&out_dir.join("convergence.csv"));
    let row = conv.lines().nth(1).unwrap();
    // the flag's 8:4 overrode the file's 64:8
    assert!(row.starts_with("poisson2d,sym-two-scale,2,4,8,"));
}

#[test]
fn rejects_invalid_configuration() {
    let out = bin()
        .args(["run", "--problem", "bogus", "--grids", "8:4"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("problem"));

    let out = bin()
        .args(["run", "--problem", "poisson2d", "--method", "sym-two-scale", "--grids", "6:4"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
