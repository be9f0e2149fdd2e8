//! Decoder parameter-count audit against the published reference budgets.

use std::path::Path;

use prae_core::arch::{decoder_param_count, Backbone};

use crate::{CliError, CliResult};

/// Published decoder parameter budgets in millions, (single-head,
/// two-head), for depths 1..=5 at 2048 output points.
const REFERENCE_LIGHT: [(f64, f64); 5] = [(0.79, 0.79), (1.61, 1.65), (3.31, 3.48), (6.99, 7.68), (8.04, 9.78)];
const REFERENCE_DEEP: [(f64, f64); 5] = [(6.30, 6.30), (3.67, 4.20), (7.35, 8.40), (8.40, 10.50), (9.45, 12.60)];
const REFERENCE_PTV3: [(f64, f64); 5] = [(3.15, 3.15), (1.71, 1.84), (3.41, 3.68), (7.09, 7.87), (8.14, 9.97)];

pub const AUDIT_POINTS: usize = 2048;
/// Tolerance in millions after rounding to two decimals; covers the
/// reference tables' rounding convention.
pub const TOLERANCE_MILLIONS: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct AuditRow {
    pub backbone: Backbone,
    pub depth: usize,
    pub heads: usize,
    pub computed: u64,
    pub computed_millions: f64,
    pub reference_millions: f64,
    pub within_tolerance: bool,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// All 30 configurations: 3 backbones × 5 depths × {1, 2} heads.
pub fn audit_rows() -> Vec<AuditRow> {
    let mut rows = Vec::with_capacity(30);
    for (backbone, reference) in [
        (Backbone::LightAe, &REFERENCE_LIGHT),
        (Backbone::DeepAe, &REFERENCE_DEEP),
        (Backbone::Ptv3, &REFERENCE_PTV3),
    ] {
        for depth in 1..=5 {
            let (single, double) = reference[depth - 1];
            for (heads, reference_millions) in [(1usize, single), (2, double)] {
                let computed =
                    decoder_param_count(backbone, depth, AUDIT_POINTS, heads).expect("table configurations are valid");
                let computed_millions = round2(computed as f64 / 1e6);
                let within_tolerance =
                    (computed_millions - reference_millions).abs() <= TOLERANCE_MILLIONS + 1e-9;
                rows.push(AuditRow {
                    backbone,
                    depth,
                    heads,
                    computed,
                    computed_millions,
                    reference_millions,
                    within_tolerance,
                });
            }
        }
    }
    rows
}

pub fn render(rows: &[AuditRow]) -> String {
    let mut out = String::from("backbone   depth  heads    scalars  computed(M)  reference(M)  status\n");
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>5} {:>6} {:>10} {:>12.2} {:>13.2}  {}\n",
            r.backbone.name(),
            r.depth,
            r.heads,
            r.computed,
            r.computed_millions,
            r.reference_millions,
            if r.within_tolerance { "ok" } else { "MISMATCH" }
        ));
    }
    out
}

pub fn write_csv(rows: &[AuditRow], path: &Path) -> CliResult<()> {
    let mut csv = String::from("backbone,depth,heads,computed,computed_millions,reference_millions,ok\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.backbone.name(),
            r.depth,
            r.heads,
            r.computed,
            r.computed_millions,
            r.reference_millions,
            r.within_tolerance
        ));
    }
    std::fs::write(path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Prints the audit; returns whether every row is within tolerance.
pub fn run_audit(csv_out: Option<&Path>) -> CliResult<bool> {
    let rows = audit_rows();
    print!("{}", render(&rows));
    let all_ok = rows.iter().all(|r| r.within_tolerance);
    let flagged = rows.iter().filter(|r| !r.within_tolerance).count();
    if flagged > 0 {
        println!("{flagged} of {} rows exceed the ±{TOLERANCE_MILLIONS} M tolerance", rows.len());
    } else {
        println!("all {} rows within ±{TOLERANCE_MILLIONS} M", rows.len());
    }
    if let Some(path) = csv_out {
        write_csv(&rows, path)?;
    }
    Ok(all_ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(backbone: Backbone, depth: usize, heads: usize) -> AuditRow {
        audit_rows()
            .into_iter()
            .find(|r| r.backbone == backbone && r.depth == depth && r.heads == heads)
            .unwrap()
    }

    #[test]
    fn spot_anchors_match_the_reference() {
        assert_eq!(row(Backbone::LightAe, 5, 1).computed_millions, 8.04);
        assert_eq!(row(Backbone::Ptv3, 2, 2).computed_millions, 1.84);
        assert_eq!(row(Backbone::DeepAe, 5, 2).reference_millions, 12.60);
        assert!(row(Backbone::DeepAe, 5, 2).within_tolerance);
    }

    #[test]
    fn all_thirty_rows_are_within_tolerance() {
        let rows = audit_rows();
        assert_eq!(rows.len(), 30);
        for r in &rows {
            assert!(
                r.within_tolerance,
                "{} depth {} heads {}: computed {} vs reference {}",
                r.backbone.name(),
                r.depth,
                r.heads,
                r.computed_millions,
                r.reference_millions
            );
        }
    }
}
