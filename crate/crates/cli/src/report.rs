//! Collects every trace CSV under a directory into one summary table.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use scrcd_core::trace::{ConvergenceTrace, TRACE_HEADER};

pub const REPORT_HEADER: &str = "trace,iterations,epochs,final_rel_residual,best_rel_residual";

fn is_trace(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "csv")
        && fs::read_to_string(path).is_ok_and(|t| t.lines().next() == Some(TRACE_HEADER))
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else if is_trace(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Report text for all traces under `dir`, sorted by relative path.
pub fn build(dir: &Path) -> Result<String> {
    let mut paths = Vec::new();
    collect(dir, &mut paths)?;
    paths.sort();
    let mut text = format!("{REPORT_HEADER}\n");
    for path in paths {
        let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
        let trace = ConvergenceTrace::read_csv(&path, rel.clone())?;
        let best = trace.records.iter().map(|r| r.rel_residual).fold(f64::INFINITY, f64::min);
        text.push_str(&format!(
            "{rel},{},{},{:e},{best:e}\n",
            trace.iterations(),
            trace.epochs(),
            trace.final_rel_residual()
        ));
    }
    Ok(text)
}

pub fn write(dir: &Path, out: &Path) -> Result<()> {
    let text = build(dir)?;
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collects_only_traces() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("run");
        fs::create_dir(&sub).unwrap();
        fs::write(sub.join("0_cg.csv"), format!("{TRACE_HEADER}\n0,0,1,0\n3,3,0.001,0\n")).unwrap();
        fs::write(dir.path().join("spectrum.csv"), "index,matrix,eigenvalue\n1,A,1\n").unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let text = build(dir.path()).unwrap();
        assert_eq!(text, format!("{REPORT_HEADER}\nrun/0_cg.csv,3,3,1e-3,1e-3\n"));
    }
}
