//! CSV rendering of sweep results.
//!
//! Times are written in seconds with nanosecond precision, which is exact
//! for the integer-nanosecond clock, so output is byte-stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Mode, SweepResult};

pub const SWEEP_CSV_HEADER: &str = "mode,switches,producers,consumers_per_producer,setup_time_s";

fn sorted(results: &[SweepResult]) -> Vec<&SweepResult> {
    let mut rows: Vec<&SweepResult> = results.iter().collect();
    rows.sort_by_key(|r| (r.mode, r.switches, r.producers, r.consumers));
    rows
}

/// Master table, one row per run.
pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::with_capacity(48 * (results.len() + 1));
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in sorted(results) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.mode,
            r.switches,
            r.producers,
            r.consumers,
            r.setup_time().to_seconds_string()
        );
    }
    out
}

pub fn series_file_name(mode: Mode, switches: usize, consumers: usize) -> String {
    format!("{mode}_S={switches}_C={consumers}.csv")
}

/// One `x,y` file per (mode, switches, consumers) curve, keyed by file name;
/// x is the producer count and y the setup time in seconds.
pub fn series_csv(results: &[SweepResult]) -> BTreeMap<String, String> {
    let mut curves: BTreeMap<(Mode, usize, usize), String> = BTreeMap::new();
    for r in sorted(results) {
        let body = curves
            .entry((r.mode, r.switches, r.consumers))
            .or_insert_with(|| String::from("x,y\n"));
        let _ = writeln!(body, "{},{}", r.producers, r.setup_time().to_seconds_string());
    }
    curves
        .into_iter()
        .map(|((mode, s, c), body)| (series_file_name(mode, s, c), body))
        .collect()
}
