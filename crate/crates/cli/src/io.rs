//! File emitters. Everything is written through strings built with the
//! default float formatting (shortest round-trip), so identical runs produce
//! byte-identical files.

use std::path::Path;

use cpt_core::bayes::ProbabilityGrid;
use cpt_core::{AdaptationResult, SpectrumRaw};

use crate::CliError;

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("mkdir {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("write {}: {e}", path.display())))
}

pub fn spectrum_csv(spectrum: &SpectrumRaw) -> String {
    let mut out = String::from("detuning_hz,signal\n");
    for &(f, s) in &spectrum.points {
        out.push_str(&format!("{f},{s}\n"));
    }
    out
}

pub fn trace_csv(result: &AdaptationResult) -> String {
    let mut out = String::from("k,U_k,eps_hz,w_hz,flipped,mean_hz,std_hz,s,h,U_next,fit_ok\n");
    for r in &result.records {
        let (eps, w) = match &r.fit {
            Some(fit) => (fit.eps.to_string(), fit.w.to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.k, r.u_k, eps, w, r.flipped, r.mean_hz, r.std_hz, r.s, r.h, r.u_next, r.fit_ok
        ));
    }
    out
}

pub fn posterior_csv(grid: &ProbabilityGrid) -> String {
    let mut out = String::from("freq_hz,pdf\n");
    for (f, p) in grid.freqs().iter().zip(grid.pdf()) {
        out.push_str(&format!("{f},{p}\n"));
    }
    out
}

pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}
