//! Offline/online verdicts, the agreement table and report files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::matching::{consistency, MatchResult, DEFAULT_CONSISTENCY_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub mae: f64,
    pub mdcl: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { mae: 0.1, mdcl: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub scenario_id: String,
    pub mae: f64,
    pub mdcl_normalized: f64,
    pub offline_acceptable: bool,
    pub online_acceptable: bool,
    pub in_agreement: bool,
}

/// Acceptable means strictly below the threshold.
pub fn classify(scenario_id: impl Into<String>, mae: f64, mdcl: f64, t: &Thresholds) -> AgreementRecord {
    let offline_acceptable = mae < t.mae;
    let online_acceptable = mdcl < t.mdcl;
    AgreementRecord {
        scenario_id: scenario_id.into(),
        mae,
        mdcl_normalized: mdcl,
        offline_acceptable,
        online_acceptable,
        in_agreement: offline_acceptable == online_acceptable,
    }
}

/// Rows are the online verdict, columns the offline one: `n12` counts
/// online-acceptable scenarios that fail offline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub n11: usize,
    pub n12: usize,
    pub n21: usize,
    pub n22: usize,
    pub total: usize,
    /// Set when the `n12` cell is populated.
    pub warning: bool,
}

impl ContingencyTable {
    pub fn disagreements(&self) -> usize {
        self.n12 + self.n21
    }

    pub fn disagreement_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.disagreements() as f64 / self.total as f64
        }
    }

    /// Offline never flagged a scenario online passed, yet passed some
    /// that online failed.
    pub fn offline_more_optimistic(&self) -> bool {
        self.n12 == 0 && self.n21 > 0
    }
}

pub fn contingency(records: &[AgreementRecord]) -> ContingencyTable {
    let mut t = ContingencyTable {
        n11: 0,
        n12: 0,
        n21: 0,
        n22: 0,
        total: records.len(),
        warning: false,
    };
    for r in records {
        match (r.online_acceptable, r.offline_acceptable) {
            (true, true) => t.n11 += 1,
            (true, false) => t.n12 += 1,
            (false, true) => t.n21 += 1,
            (false, false) => t.n22 += 1,
        }
    }
    t.warning = t.n12 > 0;
    t
}

/// One generated dataset matched against a recording, with both offline scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub sim_id: String,
    pub real_id: String,
    pub result: MatchResult,
    pub mae_sim: f64,
    pub mae_real: f64,
}

impl MatchRecord {
    pub fn consistent(&self) -> bool {
        consistency(self.mae_sim, self.mae_real, DEFAULT_CONSISTENCY_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq0Summary {
    pub scenarios: usize,
    pub comparable: usize,
    pub comparable_rate: f64,
    /// Over comparable pairs only.
    pub mean_abs_mae_difference: Option<f64>,
    pub consistent: usize,
    pub pairs: Vec<MatchRecord>,
}

impl Rq0Summary {
    pub fn new(matches: &[MatchRecord]) -> Self {
        let comparable: Vec<&MatchRecord> = matches.iter().filter(|m| m.result.comparable).collect();
        let mean_abs_mae_difference = (!comparable.is_empty()).then(|| {
            comparable.iter().map(|m| (m.mae_sim - m.mae_real).abs()).sum::<f64>() / comparable.len() as f64
        });
        Self {
            scenarios: matches.len(),
            comparable: comparable.len(),
            comparable_rate: if matches.is_empty() {
                0.0
            } else {
                comparable.len() as f64 / matches.len() as f64
            },
            mean_abs_mae_difference,
            consistent: comparable.iter().filter(|m| m.consistent()).count(),
            pairs: matches.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Findings {
    pub offline_more_optimistic: bool,
    pub online_pass_offline_fail_observed: bool,
    pub disagreements: usize,
    pub disagreement_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub thresholds: Thresholds,
    pub records: Vec<AgreementRecord>,
    pub table: ContingencyTable,
    pub summary: Findings,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rq0: Option<Rq0Summary>,
}

impl Report {
    pub fn new(records: &[AgreementRecord], matches: &[MatchRecord], thresholds: Thresholds) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("agreement records"));
        }
        let mut records = records.to_vec();
        records.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
        let table = contingency(&records);
        let mut matches = matches.to_vec();
        matches.sort_by(|a, b| a.sim_id.cmp(&b.sim_id));
        Ok(Self {
            thresholds,
            summary: Findings {
                offline_more_optimistic: table.offline_more_optimistic(),
                online_pass_offline_fail_observed: table.warning,
                disagreements: table.disagreements(),
                disagreement_rate: table.disagreement_rate(),
            },
            records,
            table,
            rq0: (!matches.is_empty()).then(|| Rq0Summary::new(&matches)),
        })
    }
}

/// Writes `report.json`, `scatter.svg` and `errors_hist.svg` under `out_dir`.
pub fn emit_report(
    records: &[AgreementRecord],
    matches: &[MatchRecord],
    thresholds: Thresholds,
    out_dir: &Path,
) -> Result<Report> {
    let report = Report::new(records, matches, thresholds)?;
    std::fs::create_dir_all(out_dir)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    std::fs::write(out_dir.join("report.json"), json)?;
    std::fs::write(out_dir.join("scatter.svg"), scatter_svg(&report.records, &thresholds))?;
    std::fs::write(out_dir.join("errors_hist.svg"), histogram_svg(&report.records, &thresholds))?;
    Ok(report)
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
}

fn axis_labels(out: &mut String, x_label: &str, y_label: &str, x_max: f64, y_max: f64) {
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}" text-anchor="middle">0</text>"#, H - PAD + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_max:.2}</text>"#, W - PAD, H - PAD + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{y_max:.2}</text>"#, PAD - 4.0, PAD + 4.0);
}

fn scatter_svg(records: &[AgreementRecord], t: &Thresholds) -> String {
    let x_max = records
        .iter()
        .map(|r| r.mae)
        .fold(t.mae * 2.0, f64::max)
        .max(1e-9)
        * 1.05;
    let y_max = 1.0;
    let px = |v: f64| PAD + v / x_max * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - v / y_max * (H - 2.0 * PAD);
    let mut out = String::new();
    svg_open(&mut out, "Offline MAE vs online MDCL");
    let _ = writeln!(
        out,
        r#"<line class="threshold" x1="{0:.2}" y1="{PAD}" x2="{0:.2}" y2="{1}" stroke="red" stroke-dasharray="4 3"/>"#,
        px(t.mae),
        H - PAD
    );
    let _ = writeln!(
        out,
        r#"<line class="threshold" x1="{PAD}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="red" stroke-dasharray="4 3"/>"#,
        py(t.mdcl),
        W - PAD
    );
    for r in records {
        let fill = if r.in_agreement { "steelblue" } else { "darkorange" };
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{fill}"><title>{}</title></circle>"#,
            px(r.mae),
            py(r.mdcl_normalized.clamp(0.0, 1.0)),
            r.scenario_id
        );
    }
    axis_labels(&mut out, "MAE", "MDCL", x_max, y_max);
    out.push_str("</svg>\n");
    out
}

fn histogram_svg(records: &[AgreementRecord], t: &Thresholds) -> String {
    const BINS: usize = 20;
    let x_max = records
        .iter()
        .map(|r| r.mae)
        .fold(t.mae * 2.0, f64::max)
        .max(1e-9)
        * 1.05;
    let mut counts = [0usize; BINS];
    for r in records {
        let bin = ((r.mae / x_max) * BINS as f64) as usize;
        counts[bin.min(BINS - 1)] += 1;
    }
    let y_max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let bar_w = (W - 2.0 * PAD) / BINS as f64;
    let mut out = String::new();
    svg_open(&mut out, "Offline MAE per scenario");
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let h = c as f64 / y_max * (H - 2.0 * PAD);
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="steelblue"/>"#,
            PAD + i as f64 * bar_w,
            H - PAD - h,
            bar_w - 1.0
        );
    }
    let tx = PAD + t.mae / x_max * (W - 2.0 * PAD);
    let _ = writeln!(
        out,
        r#"<line class="threshold" x1="{tx:.2}" y1="{PAD}" x2="{tx:.2}" y2="{}" stroke="red" stroke-dasharray="4 3"/>"#,
        H - PAD
    );
    axis_labels(&mut out, "MAE", "scenarios", x_max, y_max);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records_for(cells: [usize; 4]) -> Vec<AgreementRecord> {
        let t = Thresholds::default();
        let mut out = Vec::new();
        let verdicts = [(0.05, 0.3), (0.15, 0.3), (0.05, 1.0), (0.15, 1.0)];
        for (cell, (mae, mdcl)) in cells.iter().zip(verdicts) {
            for _ in 0..*cell {
                out.push(classify(format!("scn-{:03}", out.len()), mae, mdcl, &t));
            }
        }
        out
    }

    #[test]
    fn classify_examples() {
        let t = Thresholds::default();
        let r = classify("a", 0.05, 0.3, &t);
        assert!(r.offline_acceptable && r.online_acceptable && r.in_agreement);
        let r = classify("b", 0.05, 1.0, &t);
        assert!(r.offline_acceptable && !r.online_acceptable && !r.in_agreement);
        let r = classify("c", 0.15, 0.3, &t);
        assert!(!r.offline_acceptable && r.online_acceptable);
        let r = classify("d", 0.1, 0.7, &t);
        assert!(!r.offline_acceptable && !r.online_acceptable);
    }

    #[test]
    fn published_tables_reproduce() {
        let autumn = contingency(&records_for([4, 0, 22, 24]));
        assert_eq!((autumn.n11, autumn.n12, autumn.n21, autumn.n22, autumn.total), (4, 0, 22, 24, 50));
        assert!((autumn.disagreement_rate() - 0.44).abs() < 1e-12);
        assert!(autumn.offline_more_optimistic() && !autumn.warning);

        let chauffeur = contingency(&records_for([9, 0, 17, 24]));
        assert_eq!((chauffeur.n11, chauffeur.n12, chauffeur.n21, chauffeur.n22), (9, 0, 17, 24));
        assert!((chauffeur.disagreement_rate() - 0.34).abs() < 1e-12);

        let good = contingency(&records_for([7, 0, 0, 0]));
        assert_eq!((good.n11, good.n12, good.n21, good.n22), (7, 0, 0, 0));
        assert!(!good.offline_more_optimistic());

        assert!(contingency(&records_for([1, 2, 0, 0])).warning);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = records_for([4, 0, 22, 24]);
        records.reverse();
        let report = emit_report(&records, &[], Thresholds::default(), dir.path()).unwrap();
        assert_eq!(report.records[0].scenario_id, "scn-000");
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert!(json.get("rq0").is_none());
        assert_eq!(json["summary"]["offline_more_optimistic"], true);
        assert_eq!(json["table"]["n21"], 22);
        let svg = std::fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
        assert_eq!(svg.matches(r#"class="point""#).count(), 50);
        assert_eq!(svg.matches(r#"class="threshold""#).count(), 2);
        assert!(dir.path().join("errors_hist.svg").exists());

        let again = tempfile::tempdir().unwrap();
        emit_report(&records_for([4, 0, 22, 24]), &[], Thresholds::default(), again.path()).unwrap();
        for f in ["report.json", "scatter.svg", "errors_hist.svg"] {
            assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
        }
    }

    #[test]
    fn rq0_section_summarizes_matches() {
        let pair = |id: &str, comparable: bool, a: f64, b: f64| MatchRecord {
            sim_id: id.into(),
            real_id: "rec".into(),
            result: MatchResult {
                offset_x: 0,
                length_l: 10,
                mean_abs_angle_diff: if comparable { 0.05 } else { 0.2 },
                comparable,
                epsilon: 0.1,
            },
            mae_sim: a,
            mae_real: b,
        };
        let matches = vec![pair("a", true, 0.034, 0.061), pair("b", true, 0.02, 0.15), pair("c", false, 0.0, 0.5)];
        let report = Report::new(&records_for([1, 0, 0, 0]), &matches, Thresholds::default()).unwrap();
        let rq0 = report.rq0.unwrap();
        assert_eq!((rq0.scenarios, rq0.comparable, rq0.consistent), (3, 2, 1));
        assert!((rq0.mean_abs_mae_difference.unwrap() - (0.027 + 0.13) / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn classify_is_monotone(mae in 0.0f64..0.5, mdcl in 0.0f64..1.0, dm in 0.0f64..0.5, dd in 0.0f64..1.0) {
            let t = Thresholds::default();
            let a = classify("a", mae, mdcl, &t);
            let b = classify("a", mae + dm, (mdcl + dd).min(1.0), &t);
            prop_assert!(a.offline_acceptable || !b.offline_acceptable);
            prop_assert!(a.online_acceptable || !b.online_acceptable);
        }

        #[test]
        fn counts_are_permutation_invariant(
            points in prop::collection::vec((0.0f64..0.3, 0.0f64..1.0), 1..60),
            rot in 0usize..60,
        ) {
            let t = Thresholds::default();
            let recs: Vec<_> = points.iter().enumerate().map(|(i, (m, d))| classify(i.to_string(), *m, *d, &t)).collect();
            let mut shuffled = recs.clone();
            shuffled.rotate_left(rot % recs.len());
            shuffled.reverse();
            let a = contingency(&recs);
            prop_assert_eq!(a, contingency(&shuffled));
            prop_assert_eq!(a.n11 + a.n12 + a.n21 + a.n22, a.total);
        }
    }
}
