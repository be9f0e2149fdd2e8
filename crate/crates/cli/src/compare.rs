//! Single- vs multi-head comparison tables with signed deltas and percent
//! improvements.
//!
//! Sign convention: lower is better for cd/emd/hd, higher for f1. The
//! `improved` markers follow that convention, and percent improvement is
//! `100·(single−multi)/single` for the distance metrics and
//! `100·(multi−single)/single` for f1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use prae_core::metrics::MetricsReport;

use crate::evalcmd::Scales;
use crate::runrecord::RunRecord;
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub cd: f64,
    pub emd: Option<f64>,
    pub hd: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub backbone: String,
    pub depth: usize,
    pub single_heads: usize,
    pub multi_heads: usize,
    pub single: MetricsReport,
    pub multi: MetricsReport,
    /// multi − single, per metric.
    pub delta: MetricDeltas,
    pub pct_improvement: MetricDeltas,
}

impl ComparisonRow {
    pub fn improved_cd(&self) -> bool {
        self.delta.cd < 0.0
    }

    pub fn improved_hd(&self) -> bool {
        self.delta.hd < 0.0
    }

    pub fn improved_f1(&self) -> bool {
        self.delta.f1 > 0.0
    }

    pub fn improved_emd(&self) -> Option<bool> {
        self.delta.emd.map(|d| d < 0.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// Mean percent improvement over rows, per metric.
    pub mean_pct_improvement: MetricDeltas,
}

fn pct_lower_better(single: f64, multi: f64) -> f64 {
    100.0 * (single - multi) / single
}

fn pct_higher_better(single: f64, multi: f64) -> f64 {
    100.0 * (multi - single) / single
}

pub fn compare_reports(single: &MetricsReport, multi: &MetricsReport) -> (MetricDeltas, MetricDeltas) {
    let delta = MetricDeltas {
        cd: multi.cd - single.cd,
        emd: match (single.emd, multi.emd) {
            (Some(s), Some(m)) => Some(m - s),
            _ => None,
        },
        hd: multi.hd - single.hd,
        f1: multi.f1 - single.f1,
    };
    let pct = MetricDeltas {
        cd: pct_lower_better(single.cd, multi.cd),
        emd: match (single.emd, multi.emd) {
            (Some(s), Some(m)) => Some(pct_lower_better(s, m)),
            _ => None,
        },
        hd: pct_lower_better(single.hd, multi.hd),
        f1: pct_higher_better(single.f1, multi.f1),
    };
    (delta, pct)
}

/// Pairs single- and multi-head records by (backbone, depth) and builds the
/// comparison. Every record must find its partner.
pub fn build_comparison(singles: &[RunRecord], multis: &[RunRecord]) -> CliResult<ComparisonTable> {
    if singles.is_empty() {
        return Err(CliError::Config("no single-head records".into()));
    }
    let mut rows = Vec::new();
    for single in singles {
        let key = (single.config.encoder, single.config.depth);
        let multi = multis
            .iter()
            .find(|m| (m.config.encoder, m.config.depth) == key)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "no multi-head record pairs with {:?} depth {}",
                    key.0, key.1
                ))
            })?;
        let (delta, pct) = compare_reports(&single.best, &multi.best);
        rows.push(ComparisonRow {
            backbone: single.config.backbone().name().to_string(),
            depth: single.config.depth,
            single_heads: single.config.heads,
            multi_heads: multi.config.heads,
            single: single.best,
            multi: multi.best,
            delta,
            pct_improvement: pct,
        });
    }
    for multi in multis {
        let key = (multi.config.encoder, multi.config.depth);
        if !singles
            .iter()
            .any(|s| (s.config.encoder, s.config.depth) == key)
        {
            return Err(CliError::Config(format!(
                "no single-head record pairs with {:?} depth {}",
                key.0, key.1
            )));
        }
    }
    rows.sort_by(|a, b| (a.backbone.clone(), a.depth).cmp(&(b.backbone.clone(), b.depth)));

    let n = rows.len() as f64;
    let mut mean = MetricDeltas::default();
    let mut emd_sum = 0.0;
    let mut emd_n = 0usize;
    for r in &rows {
        mean.cd += r.pct_improvement.cd;
        mean.hd += r.pct_improvement.hd;
        mean.f1 += r.pct_improvement.f1;
        if let Some(e) = r.pct_improvement.emd {
            emd_sum += e;
            emd_n += 1;
        }
    }
    mean.cd /= n;
    mean.hd /= n;
    mean.f1 /= n;
    mean.emd = if emd_n > 0 { Some(emd_sum / emd_n as f64) } else { None };

    Ok(ComparisonTable {
        rows,
        mean_pct_improvement: mean,
    })
}

fn arrow(improved: bool) -> &'static str {
    if improved {
        "improved"
    } else {
        "declined"
    }
}

pub fn render_table(table: &ComparisonTable, scales: &Scales) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>5} | {:>9} {:>9} {:>8} {:>10} | {:>9} {:>9} {:>8} {:>10}\n",
        "backbone", "depth", "cd(s)", "cd(m)", "Δcd", "cd%", "hd(s)", "hd(m)", "Δhd", "hd%"
    ));
    for r in &table.rows {
        out.push_str(&format!(
            "{:<10} {:>5} | {:>9.2} {:>9.2} {:>+8.2} {:>+9.2}% | {:>9.2} {:>9.2} {:>+8.2} {:>+9.2}%\n",
            r.backbone,
            r.depth,
            r.single.cd * scales.cd,
            r.multi.cd * scales.cd,
            r.delta.cd * scales.cd,
            r.pct_improvement.cd,
            r.single.hd * scales.hd,
            r.multi.hd * scales.hd,
            r.delta.hd * scales.hd,
            r.pct_improvement.hd,
        ));
        let emd_line = match (r.single.emd, r.multi.emd, r.delta.emd, r.pct_improvement.emd) {
            (Some(s), Some(m), Some(d), Some(p)) => format!(
                "emd {:.2} -> {:.2} ({:+.2}, {:+.2}%, {})",
                s * scales.emd,
                m * scales.emd,
                d * scales.emd,
                p,
                arrow(d < 0.0)
            ),
            _ => "emd n/a".to_string(),
        };
        out.push_str(&format!(
            "{:<10} {:>5} | {emd_line}; f1 {:.2} -> {:.2} ({:+.2}, {:+.2}%, {})\n",
            "",
            "",
            r.single.f1 * 100.0,
            r.multi.f1 * 100.0,
            r.delta.f1 * 100.0,
            r.pct_improvement.f1,
            arrow(r.delta.f1 > 0.0)
        ));
    }
    let m = &table.mean_pct_improvement;
    let emd = m
        .emd
        .map(|v| format!("{v:+.2}%"))
        .unwrap_or_else(|| "n/a".to_string());
    out.push_str(&format!(
        "mean improvement: cd {:+.2}%  emd {}  hd {:+.2}%  f1 {:+.2}%\n",
        m.cd, emd, m.hd, m.f1
    ));
    out
}

pub fn write_csv(table: &ComparisonTable, path: &Path) -> CliResult<()> {
    let mut csv = String::from(
        "backbone,depth,single_cd,multi_cd,delta_cd,pct_cd,single_emd,multi_emd,delta_emd,pct_emd,\
         single_hd,multi_hd,delta_hd,pct_hd,single_f1,multi_f1,delta_f1,pct_f1\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.backbone,
            r.depth,
            r.single.cd,
            r.multi.cd,
            r.delta.cd,
            r.pct_improvement.cd,
            opt(r.single.emd),
            opt(r.multi.emd),
            opt(r.delta.emd),
            opt(r.pct_improvement.emd),
            r.single.hd,
            r.multi.hd,
            r.delta.hd,
            r.pct_improvement.hd,
            r.single.f1,
            r.multi.f1,
            r.delta.f1,
            r.pct_improvement.f1,
        ));
    }
    let m = &table.mean_pct_improvement;
    csv.push_str(&format!(
        "mean,,,,,{},,,,{},,,,{},,,,{}\n",
        m.cd,
        opt(m.emd),
        m.hd,
        m.f1
    ));
    std::fs::write(path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(cd: f64, emd: f64, hd: f64, f1: f64) -> MetricsReport {
        MetricsReport {
            cd,
            emd: Some(emd),
            hd,
            f1,
            precision: f1,
            recall: f1,
            threshold: 0.01,
        }
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let r = report(3.0, 100.0, 15.0, 0.25);
        let (delta, pct) = compare_reports(&r, &r);
        assert_eq!(delta.cd, 0.0);
        assert_eq!(delta.hd, 0.0);
        assert_eq!(delta.f1, 0.0);
        assert_eq!(delta.emd, Some(0.0));
        assert_eq!(pct.cd, 0.0);
    }

    #[test]
    fn reference_depth3_row_reproduces_published_arithmetic() {
        // Scaled values 3.29 -> 3.18 correspond to a -0.11 delta and a
        // +3.34% improvement.
        let single = report(3.29e-3, 138.40, 0.1579, 0.2603);
        let multi = report(3.18e-3, 103.92, 0.1577, 0.2683);
        let (delta, pct) = compare_reports(&single, &multi);
        assert!((delta.cd * 1e3 - (-0.11)).abs() < 1e-9);
        assert!((pct.cd - 3.34).abs() < 5e-3, "pct {}", pct.cd);
    }

    #[test]
    fn two_row_fixture_matches_hand_arithmetic() {
        let s1 = report(2.0, 100.0, 10.0, 0.20);
        let m1 = report(1.5, 80.0, 11.0, 0.25);
        let s2 = report(4.0, 200.0, 20.0, 0.40);
        let m2 = report(4.4, 150.0, 18.0, 0.38);
        let (_, p1) = compare_reports(&s1, &m1);
        let (_, p2) = compare_reports(&s2, &m2);
        // Spreadsheet recomputation.
        assert!((p1.cd - 25.0).abs() < 1e-9);
        assert!((p1.emd.unwrap() - 20.0).abs() < 1e-9);
        assert!((p1.hd - (-10.0)).abs() < 1e-9);
        assert!((p1.f1 - 25.0).abs() < 1e-9);
        assert!((p2.cd - (-10.0)).abs() < 1e-9);
        assert!((p2.emd.unwrap() - 25.0).abs() < 1e-9);
        assert!((p2.hd - 10.0).abs() < 1e-9);
        assert!((p2.f1 - (-5.0)).abs() < 1e-9);
    }
}
