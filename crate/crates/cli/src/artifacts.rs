//! Output files: atomic writes, the history table and the report envelope.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nmcore::nash_moser::IterationReport;
use serde::Serialize;

/// Bumped whenever a column or report field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const HISTORY_HEADER: &str = "i,N_i,res_norm,sol_norm,path,seconds";

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
    Ok(target)
}

/// `history.csv`: one row per step. `seconds` stays empty unless `timing`
/// is set, so identical runs produce identical files.
pub fn history_csv(report: &IterationReport, timing: bool) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for s in &report.steps {
        let path = s.path.map_or("initial", |p| p.as_str());
        let seconds = if timing { format!("{:e}", s.seconds) } else { String::new() };
        out.push_str(&format!("{},{},{:e},{:e},{},{}\n", s.i, s.n_i, s.res_norm, s.sol_norm, path, seconds));
    }
    out
}

#[derive(Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize, T: Serialize> {
    pub generator: &'static str,
    pub version: &'static str,
    pub schema: u32,
    pub experiment: &'static str,
    pub config: &'a C,
    pub resolved: &'a R,
    pub result: &'a T,
}

pub fn envelope<'a, C: Serialize, R: Serialize, T: Serialize>(
    experiment: &'static str,
    config: &'a C,
    resolved: &'a R,
    result: &'a T,
) -> Envelope<'a, C, R, T> {
    Envelope {
        generator: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        schema: SCHEMA_VERSION,
        experiment,
        config,
        resolved,
        result,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}
