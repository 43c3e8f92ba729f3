//! Runs every acceptance check, prints one line per check and exits non-zero
//! if any check fails.

use anyhow::Result;
use solver_acceptance::*;

fn report(k: usize, name: &str, v: Result<Verdict>) -> bool {
    match v {
        Ok(v) => {
            let tag = if v.passed { "PASS" } else { "FAIL" };
            println!("criterion {k:>2} [{tag}] {name}: {} ({:.2} s)", v.detail, v.seconds);
            v.passed
        }
        Err(e) => {
            println!("criterion {k:>2} [FAIL] {name}: error: {e:#}");
            false
        }
    }
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut log = PartitionLog::default();
    let results = [
        report(1, "linear exactness", linear_exactness()),
        report(2, "resolvent vs dense oracle", resolvent_oracle(&mut log)),
        report(3, "superlinear convergence", superlinear_convergence(&mut log)),
        report(4, "amplitude scaling", amplitude_scaling(&mut log)),
        report(5, "uniqueness", uniqueness(&mut log)),
        report(6, "measure estimate", measure_estimate(&mut log)),
        report(7, "smoothing and norm properties", norm_properties()),
        report(8, "block-matrix structure", block_structure()),
        report(9, "clustering soundness", Ok(clustering_soundness(&log))),
        report(10, "determinism", determinism(scratch.path())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
