use std::io::Write;

use serde_json::{json, Value};

use super::RateTable;
use crate::error::Result;

pub const RATE_HEADER: &str = "resolution,mean_cost,mean_cost_stderr,error_lp,error_stderr,slope_partial";
pub const COST_HEADER: &str = "delta,mean_cost,mean_cost_times_delta,max_cost,frac_coarse,frac_annulus,frac_inner";

/// One row per resolution; `slope_partial` is the slope of `log(error)`
/// against `log(δ)` from the previous row and empty on the first.
pub fn write_rate_csv(table: &RateTable, mut out: impl Write) -> Result<()> {
    writeln!(out, "{RATE_HEADER}")?;
    for (r, s) in table.rows.iter().zip(table.partial_slopes()) {
        let s = s.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{s}",
            r.resolution, r.mean_cost, r.mean_cost_stderr, r.error_lp, r.error_stderr
        )?;
    }
    Ok(())
}

pub fn write_cost_csv(table: &RateTable, mut out: impl Write) -> Result<()> {
    writeln!(out, "{COST_HEADER}")?;
    for r in &table.rows {
        let [a, b, c] = r.branch_fractions;
        writeln!(
            out,
            "{},{},{},{},{a},{b},{c}",
            r.delta,
            r.mean_cost,
            r.cost_times_delta(),
            r.max_cost
        )?;
    }
    Ok(())
}

/// Fitted slopes, the rows and the echoed experiment description.
pub fn summary_json(tables: &[RateTable], spec: Value) -> Value {
    let tables: Vec<Value> = tables
        .iter()
        .map(|t| {
            let cost_delta: Vec<f64> = t.rows.iter().map(|r| r.cost_times_delta()).collect();
            let finite = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
            let ratio = cost_delta.iter().copied().fold(0.0, f64::max)
                / cost_delta.iter().copied().fold(f64::INFINITY, f64::min);
            json!({
                "method": t.method,
                "mode": t.mode,
                "mode_label": t.mode.label(),
                "p": t.p,
                "paths": t.paths,
                "delta_ref": t.delta_ref,
                "slope_vs_delta": t.fit_delta,
                "slope_vs_cost": t.fit_cost,
                "cost_times_delta_ratio": finite(ratio),
                "rows": t.rows.iter().map(|r| json!({
                    "resolution": r.resolution,
                    "delta": r.delta,
                    "mean_cost": r.mean_cost,
                    "mean_cost_stderr": r.mean_cost_stderr,
                    "error_lp": finite(r.error_lp),
                    "error_stderr": finite(r.error_stderr),
                    "max_cost": r.max_cost,
                    "branch_fractions": r.branch_fractions,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "tables": tables, "spec": spec })
}
