//! Run reports: per-epoch metrics TSV, probe TSV and a readable summary.
//!
//! The TSV files contain no timing data, so two runs with the same inputs
//! write identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{io_err, Result};

use super::probe::ProbeSummary;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-anchor loss over the epoch.
    pub loss: f64,
    pub val_acc: Option<f64>,
    /// Set on epochs where the contrast sets were rebuilt.
    pub rebuild: Option<RebuildStats>,
}

/// Aggregate numbers from one contrast-set rebuild.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RebuildStats {
    pub anchors: usize,
    pub transferred: usize,
    /// Transferred nodes whose label equals the anchor's.
    pub transferred_same_label: usize,
    pub mean_negatives: f64,
    /// Anchors whose DPP kernel rank was below the requested size.
    pub rank_shortfalls: usize,
}

impl RebuildStats {
    pub fn purity(&self) -> Option<f64> {
        (self.transferred > 0).then(|| self.transferred_same_label as f64 / self.transferred as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config_hash: String,
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned checkpoint (0 = initialization).
    pub best_epoch: usize,
    pub best_val: Option<f64>,
    pub stopped_early: bool,
    pub probe: Option<ProbeSummary>,
    pub wall_clock_secs: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

impl RunReport {
    pub fn loss_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn metrics_tsv(&self) -> String {
        let mut s = String::from("epoch\tloss\tval_acc\ttransferred\tpurity\tmean_negatives\n");
        for e in &self.epochs {
            let (t, p, m) = match &e.rebuild {
                Some(r) => (r.transferred.to_string(), opt(r.purity()), format!("{:.3}", r.mean_negatives)),
                None => ("NA".into(), "NA".into(), "NA".into()),
            };
            let _ = writeln!(s, "{}\t{:.12e}\t{}\t{t}\t{p}\t{m}", e.epoch, e.loss, opt(e.val_acc));
        }
        s
    }

    pub fn eval_tsv(&self) -> String {
        let mut s = String::from("run\tval_acc\ttest_acc\tbest_step\n");
        if let Some(p) = &self.probe {
            for (i, r) in p.runs.iter().enumerate() {
                let _ = writeln!(s, "{i}\t{:.6}\t{:.6}\t{}", r.val_acc, r.test_acc, r.best_step);
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config_hash  {}", self.config_hash);
        let _ = writeln!(s, "epochs_run   {}", self.epochs.len());
        let _ = writeln!(s, "best_epoch   {}", self.best_epoch);
        let _ = writeln!(s, "best_val     {}", opt(self.best_val));
        let _ = writeln!(s, "early_stop   {}", self.stopped_early);
        if let Some(p) = &self.probe {
            let _ = writeln!(
                s,
                "test_acc     {:.4} ± {:.4} over {} runs",
                p.mean,
                p.std,
                p.runs.len()
            );
        }
        let _ = writeln!(s, "wall_clock   {:.1}s", self.wall_clock_secs);
        s
    }

    /// Writes `metrics.tsv`, `eval.tsv` and `summary.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, body) in [
            ("metrics.tsv", self.metrics_tsv()),
            ("eval.tsv", self.eval_tsv()),
            ("summary.txt", self.summary()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(io_err(&p))?;
        }
        Ok(())
    }
}
