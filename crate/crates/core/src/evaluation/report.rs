use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvalEntry, Variant};
use crate::features::RoadScope;
use crate::models::ModelKind;
use crate::signals::Target;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<EvalReport, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn merge(&mut self, other: EvalReport) {
        self.entries.extend(other.entries);
        self.notes.extend(other.notes);
    }

    pub fn entry(&self, target: Target, model: ModelKind, variant: Variant, scope: RoadScope) -> Option<&EvalEntry> {
        self.entries
            .iter()
            .find(|e| e.target == target && e.model == model && e.variant == variant && e.road_scope == scope)
    }

    /// Wide table: one row per (variant, model, road scope), metric columns
    /// per target.
    pub fn to_csv(&self) -> String {
        let targets: BTreeSet<Target> = self.entries.iter().map(|e| e.target).collect();
        let mut header = vec!["variant".to_string(), "model".into(), "road_scope".into()];
        for t in &targets {
            if t.is_regression() {
                header.extend([format!("{t}_r"), format!("{t}_p"), format!("{t}_rmse")]);
            } else {
                header.push(format!("{t}_f1"));
            }
        }
        let mut rows: BTreeMap<(Variant, ModelKind, RoadScope), BTreeMap<Target, &EvalEntry>> = BTreeMap::new();
        for e in &self.entries {
            rows.entry((e.variant, e.model, e.road_scope)).or_default().insert(e.target, e);
        }
        let mut out = header.join(",");
        out.push('\n');
        for ((variant, model, scope), by_target) in rows {
            let mut fields = vec![variant.to_string(), model.to_string(), scope.to_string()];
            for t in &targets {
                let e = by_target.get(t).map(|e| &e.evaluation);
                if t.is_regression() {
                    fields.push(cell(e.and_then(|e| e.pearson_r)));
                    fields.push(cell(e.and_then(|e| e.p_value)));
                    fields.push(cell(e.and_then(|e| e.rmse)));
                } else {
                    fields.push(cell(e.and_then(|e| e.macro_f1)));
                }
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Predicted versus true score per driver, with the identity line.
pub fn scatter_svg(entry: &EvalEntry) -> String {
    const W: f64 = 360.0;
    const PAD: f64 = 40.0;
    let pts: Vec<(f64, f64)> = entry
        .evaluation
        .predictions
        .iter()
        .map(|p| (p.truth, p.prediction))
        .collect();
    let (lo, hi) = pts
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.max(0.0) + 1.0) };
    let map = |v: f64| PAD + (v - lo) / (hi - lo) * (W - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{W}" viewBox="0 0 {W} {W}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{W}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{a}" y1="{b}" x2="{b}" y2="{a}" stroke="gray" stroke-dasharray="4"/>"#,
        a = PAD,
        b = W - PAD
    );
    for (t, p) in &pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            map(*t),
            W - map(*p)
        );
    }
    let r = entry
        .evaluation
        .pearson_r
        .map(|r| format!(" r={r:.3}"))
        .unwrap_or_default();
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="12">{} {} {} {}{r}</text>"#,
        entry.target, entry.model, entry.variant, entry.road_scope
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">true</text>"#,
        W / 2.0,
        W - 8.0
    );
    s.push_str("</svg>\n");
    s
}
