use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ddqnfit::EpisodeRecord;

/// Fitting accuracy of one model against the reference, per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub model: String,
    pub rmse_p: f64,
    pub rmse_q: f64,
}

/// `model,rmse_p,rmse_q` with six significant digits.
pub fn emit_fit_table(rows: &[FitRow]) -> String {
    let mut out = String::from("model,rmse_p,rmse_q\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6e},{:.6e}", r.model, r.rmse_p, r.rmse_q);
    }
    out
}

/// Aligned text version of [`emit_fit_table`].
pub fn fit_table_text(rows: &[FitRow]) -> String {
    let w = rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max("model".len());
    let mut out = format!("{:<w$}  {:>10}  {:>10}\n", "model", "RMSE_P", "RMSE_Q");
    for r in rows {
        let _ = writeln!(out, "{:<w$}  {:>10.4}  {:>10.4}", r.model, r.rmse_p, r.rmse_q);
    }
    out
}

/// `episode,reward,running_best`, one row per episode.
pub fn emit_convergence_csv(trace: &[EpisodeRecord]) -> String {
    let mut out = String::from("episode,reward,running_best\n");
    for e in trace {
        let _ = writeln!(out, "{},{:.9e},{:.9e}", e.episode, e.reward, e.running_best);
    }
    out
}
