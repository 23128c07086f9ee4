//! Run metrics and report rendering (CSV schema v1 plus a human summary).

/// Per-bulk measurements.
#[derive(Clone, Debug)]
pub struct BulkMetrics {
    pub index: u64,
    pub strategy: String,
    pub size: usize,
    pub committed: usize,
    pub aborted: usize,
    pub rolled_back: usize,
    pub gen_us: u64,
    pub exec_us: u64,
    pub rounds: u32,
    pub divergence: u64,
}

/// Whole-run report: per-bulk rows plus the summary.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub strategy: String,
    pub bulks: Vec<BulkMetrics>,
    pub total_txns: usize,
    pub committed: usize,
    pub aborted: usize,
    pub rolled_back: usize,
    /// Independent wall measurement of the whole consumer loop.
    pub wall_us: u64,
    /// Summed component timers; they must agree with `wall_us` up to loop
    /// overhead.
    pub gen_us: u64,
    pub exec_us: u64,
    /// Inter-bulk work: merges and recovery.
    pub inter_us: u64,
    /// Time spent waiting on the submission producer.
    pub wait_us: u64,
    /// Committed transactions per wall second, in thousands.
    pub throughput_ktps: f64,
    /// Mean of (logical bulk wait + execution wall) per transaction, in us.
    pub avg_response_us: f64,
    /// Some(err) when the run died (watchdog); metrics are partial.
    pub failed: Option<String>,
    /// Oracle gate outcome, when verification ran.
    pub verified: Option<bool>,
}

impl RunReport {
    pub fn recompute_totals(&mut self) {
        self.total_txns = self.bulks.iter().map(|b| b.size).sum();
        self.committed = self.bulks.iter().map(|b| b.committed).sum();
        self.aborted = self.bulks.iter().map(|b| b.aborted).sum();
        self.rolled_back = self.bulks.iter().map(|b| b.rolled_back).sum();
        self.gen_us = self.bulks.iter().map(|b| b.gen_us).sum();
        self.exec_us = self.bulks.iter().map(|b| b.exec_us).sum();
        if self.wall_us > 0 {
            self.throughput_ktps =
                self.committed as f64 / (self.wall_us as f64 / 1_000_000.0) / 1000.0;
        }
    }
}

pub const CSV_HEADER: &str = "# bulktx-report v1\nrow,bulk,strategy,size,committed,aborted,rolled_back,gen_us,exec_us,rounds,divergence,wall_us,inter_us,wait_us,throughput_ktps,avg_response_us,verified,failed";

/// Machine-readable report: one row per bulk plus a summary row carrying the
/// run-level columns.
pub fn to_csv(r: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for b in &r.bulks {
        out.push_str(&format!(
            "bulk,{},{},{},{},{},{},{},{},{},{},,,,,,,\n",
            b.index,
            b.strategy,
            b.size,
            b.committed,
            b.aborted,
            b.rolled_back,
            b.gen_us,
            b.exec_us,
            b.rounds,
            b.divergence
        ));
    }
    out.push_str(&format!(
        "summary,,{},{},{},{},{},{},{},,,{},{},{},{:.3},{:.1},{},{}\n",
        r.strategy,
        r.total_txns,
        r.committed,
        r.aborted,
        r.rolled_back,
        r.gen_us,
        r.exec_us,
        r.wall_us,
        r.inter_us,
        r.wait_us,
        r.throughput_ktps,
        r.avg_response_us,
        r.verified.map(|v| v.to_string()).unwrap_or_default(),
        r.failed.clone().unwrap_or_default()
    ));
    out
}

/// Human summary.
pub fn to_text(r: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "strategy {}: {} txns in {} bulks, {} committed / {} aborted / {} rolled back\n",
        r.strategy,
        r.total_txns,
        r.bulks.len(),
        r.committed,
        r.aborted,
        r.rolled_back
    ));
    out.push_str(&format!(
        "wall {:.3} ms (gen {:.3} ms, exec {:.3} ms, inter-bulk {:.3} ms, wait {:.3} ms)\n",
        r.wall_us as f64 / 1000.0,
        r.gen_us as f64 / 1000.0,
        r.exec_us as f64 / 1000.0,
        r.inter_us as f64 / 1000.0,
        r.wait_us as f64 / 1000.0
    ));
    out.push_str(&format!(
        "throughput {:.3} ktps, avg response {:.1} us\n",
        r.throughput_ktps, r.avg_response_us
    ));
    match r.verified {
        Some(true) => out.push_str("oracle check: ok\n"),
        Some(false) => out.push_str("oracle check: FAILED\n"),
        None => out.push_str("oracle check: skipped\n"),
    }
    if let Some(f) = &r.failed {
        out.push_str(&format!("RUN FAILED: {f}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_is_header_plus_summary() {
        let mut r = RunReport {
            strategy: "kset".into(),
            ..Default::default()
        };
        r.recompute_totals();
        let csv = to_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3); // version comment, header, summary
        assert!(lines[0].starts_with("# bulktx-report v1"));
        assert!(lines[2].starts_with("summary,,kset,0,0"));
    }

    #[test]
    fn totals_roll_up() {
        let mut r = RunReport {
            strategy: "tpl".into(),
            bulks: vec![
                BulkMetrics {
                    index: 0,
                    strategy: "tpl".into(),
                    size: 10,
                    committed: 9,
                    aborted: 1,
                    rolled_back: 0,
                    gen_us: 5,
                    exec_us: 20,
                    rounds: 1,
                    divergence: 3,
                },
                BulkMetrics {
                    index: 1,
                    strategy: "tpl".into(),
                    size: 4,
                    committed: 4,
                    aborted: 0,
                    rolled_back: 0,
                    gen_us: 2,
                    exec_us: 8,
                    rounds: 1,
                    divergence: 0,
                },
            ],
            wall_us: 1000,
            ..Default::default()
        };
        r.recompute_totals();
        assert_eq!(r.total_txns, 14);
        assert_eq!(r.committed, 13);
        assert!((r.throughput_ktps - 13.0).abs() < 1e-9);
        let csv = to_csv(&r);
        assert_eq!(csv.lines().count(), 5);
    }
}
