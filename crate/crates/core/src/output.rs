//! Files written by the study: everything lands under one output directory.
//!
//! | file | content |
//! |---|---|
//! | `study.csv` | one [`ConvergenceRecord`] per epsilon |
//! | `distances.csv` | final-time L1 distances per epsilon |
//! | `entropy_eps<k>.csv` | relative-entropy samples of run `k` |
//! | `ledger_eps<k>.csv` | kinetic energy ledger of run `k` |
//! | `final_eps<k>.bin` | final kinetic snapshot of run `k` |
//! | `macro_ledger.csv` | macro energy ledger |
//! | `config.toml` | the configuration that produced the run |
//! | `summary.txt` | rate fit and check outcomes |
//!
//! `k` is the position of the epsilon in the configured list.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::entropy::{ConvergenceRecord, RateFit};
use crate::error::{Error, Result};
use crate::kinetic::snapshot::write_binary;
use crate::study::StudyOutcome;

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    w.write_record(header).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const STUDY_COLUMNS: [&str; 8] = [
    "epsilon",
    "sup_rel_entropy",
    "h_part_sup",
    "kinetic_part_sup",
    "gap_time_integral",
    "energy_residual",
    "lambda_theory",
    "notes",
];

/// Header plus one row per record; an empty list gives a header-only file.
pub fn write_study_csv(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    write_rows(path, records, &STUDY_COLUMNS)
}

pub fn read_study_csv(path: &Path) -> Result<Vec<ConvergenceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    let headers = r.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if headers.iter().ne(STUDY_COLUMNS) {
        return Err(Error::format(path, format!("unexpected columns {headers:?}")));
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<ConvergenceRecord>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Plain-text report of a finished study.
pub fn summary_text(outcome: &StudyOutcome) -> String {
    let cfg = &outcome.config;
    let mut s = String::new();
    let flag = |ok: bool| if ok { "pass" } else { "FAIL" };
    let _ = writeln!(s, "n_x {} n_v {} t_end {} alpha {} beta {}", cfg.n_x, cfg.n_v, cfg.t_end, cfg.alpha, cfg.beta);
    let wp = &outcome.well_prepared;
    let _ = writeln!(s, "well-prepared: h1 {:.3e} h2 {:.3e} {}", wp.h1, wp.h2, flag(wp.ok));
    let _ = writeln!(
        s,
        "macro: {} steps, free-energy budget residual {:.3e}, shock warning {}",
        outcome.macro_run.steps,
        outcome.macro_run.budget_residual(),
        outcome.macro_run.shock_warning
    );
    for run in &outcome.runs {
        let r = &run.record;
        let lb_ok = run.entropy.iter().all(|e| e.lower_bound_margin >= -1e-12);
        let _ = writeln!(
            s,
            "eps {:<8} sup_E {:.4e} gap {:.4e} energy residual {:.3e} ({}) lower bound {} rho L1 {:.3e} momentum L1 {:.3e}",
            r.epsilon,
            r.sup_rel_entropy,
            r.gap_time_integral,
            r.energy_residual,
            flag(r.energy_residual <= cfg.budget_tol),
            flag(lb_ok),
            run.distance.rho_l1,
            run.distance.momentum_l1
        );
    }
    let records = outcome.records();
    let decreasing = records.windows(2).all(|w| w[1].sup_rel_entropy < w[0].sup_rel_entropy);
    let _ = writeln!(s, "sup_E strictly decreasing in eps: {}", flag(decreasing));
    match &outcome.fit {
        Some(RateFit {
            slope,
            lambda_theory,
            meets_theory,
            ..
        }) => {
            let _ = writeln!(
                s,
                "lambda_theory {lambda_theory:.4} fitted slope {slope:.4} slope >= lambda_theory - 0.1: {}",
                flag(*meets_theory)
            );
        }
        None => {
            let _ = writeln!(s, "rate fit skipped (needs at least 3 epsilon values)");
        }
    }
    s
}

/// Writes every study artifact; returns the paths in write order.
pub fn emit_results(outcome: &StudyOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    write_study_csv(&put("study.csv".into()), &outcome.records())?;
    let distances: Vec<_> = outcome.runs.iter().map(|r| r.distance).collect();
    write_rows(&put("distances.csv".into()), &distances, &["epsilon", "rho_l1", "momentum_l1"])?;
    for (k, run) in outcome.runs.iter().enumerate() {
        write_rows(
            &put(format!("entropy_eps{k}.csv")),
            &run.entropy,
            &["rel_entropy", "h_part", "kinetic_part", "lower_bound_margin", "time"],
        )?;
        run.ledger.write_csv(&put(format!("ledger_eps{k}.csv")))?;
        write_binary(&put(format!("final_eps{k}.bin")), &run.final_snapshot)?;
    }
    outcome.macro_run.write_ledger_csv(&put("macro_ledger.csv".into()))?;
    let cfg_path = put("config.toml".into());
    fs::write(&cfg_path, outcome.config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    let sum_path = put("summary.txt".into());
    fs::write(&sum_path, summary_text(outcome)).map_err(|e| Error::io(&sum_path, e))?;
    Ok(written)
}
