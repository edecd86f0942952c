use std::fmt::Write;

use super::RunManifest;
use crate::benchmarks::{Benchmark, ConvergenceReport};
use crate::control::ControlPath;

/// 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t, u_num_1..u_num_m, u_exact_1..u_exact_m`, one row per node.
pub fn write_control_csv(manifest: &RunManifest, bench: &Benchmark, control: &ControlPath) -> String {
    let m = control.dim();
    let mut out = manifest.to_string();
    let mut header = vec!["t".to_owned()];
    header.extend((1..=m).map(|i| format!("u_num_{i}")));
    header.extend((1..=m).map(|i| format!("u_exact_{i}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for (t, u) in control.grid().nodes().zip(control.values()) {
        let exact = bench.exact_control(t);
        let row: Vec<String> =
            std::iter::once(t).chain(u.iter().copied()).chain(exact.iter().copied()).map(num).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `N, K, runs, rmse_mean, rmse_std` rows, then a footer
/// `slope,<slope>,<slope_stderr>,,`.
pub fn write_converge_csv(manifest: &RunManifest, report: &ConvergenceReport) -> String {
    let mut out = manifest.to_string();
    out.push_str("N,K,runs,rmse_mean,rmse_std\n");
    for r in &report.rows {
        writeln!(out, "{},{},{},{},{}", r.steps, r.iterations, r.runs, num(r.rmse_mean), num(r.rmse_std)).unwrap();
    }
    writeln!(out, "slope,{},{},,", num(report.slope), num(report.slope_stderr)).unwrap();
    out
}
