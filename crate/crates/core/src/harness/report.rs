use super::compare::ComparisonTable;
use super::config::RegionScan;
use super::HarnessError;
use crate::nav::{turn_decision, ApproachRegion, TraceRecord, TurnDecision, TurnOutcome};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#d62728", "#1f1f1f", "#7f7f7f", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Linear map from data coordinates to the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = bounds(xs);
        let (y0, y1) = bounds(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        for (i, x) in ticks(self.x0, self.x1).into_iter().enumerate() {
            let _ = writeln!(
                out,
                r##"<text class="xtick" data-index="{i}" x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{x:.0}</text>"##,
                self.px(x),
                b + 16.0
            );
        }
        for (i, y) in ticks(self.y0, self.y1).into_iter().enumerate() {
            let _ = writeln!(
                out,
                r##"<text class="ytick" data-index="{i}" x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{y:.0}</text>"##,
                l - 6.0,
                self.py(y) + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{xlabel}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">{ylabel}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        );
    }

    fn polyline(&self, points: impl Iterator<Item = (f64, f64)>) -> String {
        let mut s = String::new();
        for (i, (x, y)) in points.enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", self.px(x), self.py(y));
        }
        s
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1.0);
    (lo - pad, hi + pad)
}

/// Round-number tick positions inside `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 {
        out.push(if t.abs() < 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Relative true, predicted and estimated positions against the true position, with the
/// approach region lines and the crossing points of `outcome`.
///
/// Markers: `b`/`b'` are the truth and the estimate when the truth crosses L1, `c`/`c'`
/// the same at L2, and `e` the estimate's own L1 crossing.
pub fn render_trace_svg(label: &str, trace: &[TraceRecord], outcome: &TurnOutcome) -> Result<String, HarnessError> {
    if trace.is_empty() {
        return Err(HarnessError::Empty(format!("trace {label}")));
    }
    let region = outcome.region;
    let xs = trace.iter().map(|r| r.y_true_rel).chain([region.l1, region.l2]);
    let ys = trace.iter().flat_map(|r| [r.y_true_rel, r.y_pred_rel, r.y_est_rel]);
    let f = Frame::new(xs, ys);
    let mut s = svg_open(&format!("patch: {label}"));
    f.axes(&mut s, "true position relative to intersection [m]", "relative position [m]");

    for (class, color, line) in [("l1", "#2ca02c", region.l1), ("l2", "#d62728", region.l2)] {
        let _ = writeln!(
            s,
            r#"<line class="{class}" data-value="{line}" x1="{x:.2}" x2="{x:.2}" y1="{t}" y2="{b}" stroke="{color}" stroke-width="1.5"/>"#,
            x = f.px(line),
            t = MARGIN,
            b = HEIGHT - MARGIN
        );
    }
    let curves: [(&str, &str, fn(&TraceRecord) -> f64); 3] = [
        ("true", "#1f77b4", |r| r.y_true_rel),
        ("predicted", "#7f7f7f", |r| r.y_pred_rel),
        ("estimated", "#e377c2", |r| r.y_est_rel),
    ];
    for (i, (name, color, get)) in curves.iter().enumerate() {
        let pts = f.polyline(trace.iter().map(|r| (r.y_true_rel, get(r))));
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-series="{name}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{:.2}" y="{ly:.2}" font-size="12" fill="{color}">{name}</text>"#,
            MARGIN + 8.0
        );
    }

    let at = |step: usize| trace.iter().find(|r| r.step == step);
    let mut markers: Vec<(&str, usize, f64, f64)> = Vec::new();
    if let Some(r) = outcome.true_crossing_l1.and_then(at) {
        markers.push(("b", r.step, r.y_true_rel, r.y_true_rel));
        markers.push(("b'", r.step, r.y_true_rel, r.y_est_rel));
    }
    if let Some(r) = outcome.true_crossing_l2.and_then(at) {
        markers.push(("c", r.step, r.y_true_rel, r.y_true_rel));
        markers.push(("c'", r.step, r.y_true_rel, r.y_est_rel));
    }
    if let Some(r) = outcome.est_crossing_l1.and_then(at) {
        markers.push(("e", r.step, r.y_true_rel, r.y_est_rel));
    }
    for (name, step, x, y) in markers {
        let (cx, cy) = (f.px(x), f.py(y));
        let _ = writeln!(
            s,
            r##"<circle class="marker" data-marker="{name}" data-step="{step}" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="none" stroke="#000"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{name}</text>"#,
            cx + 6.0,
            cy - 6.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="decision" x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">turn {}</text>"#,
        WIDTH - MARGIN - 8.0,
        MARGIN + 16.0,
        decision_str(outcome.decision)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn decision_str(d: TurnDecision) -> &'static str {
    match d {
        TurnDecision::Executed => "executed",
        TurnDecision::Missed => "missed",
    }
}

/// Estimated position of every patch relative to the black estimate, one labeled series
/// per table row.
pub fn render_comparison_svg(table: &ComparisonTable) -> Result<String, HarnessError> {
    let first = table
        .rows
        .first()
        .ok_or_else(|| HarnessError::Empty("comparison table".into()))?;
    let xs: Vec<f64> = first.trace.iter().map(|r| r.y_true_rel).collect();
    if xs.len() != first.relative_to_black.len() {
        return Err(HarnessError::Empty("comparison rows carry no traces".into()));
    }
    let ys = table.rows.iter().flat_map(|r| r.relative_to_black.iter().copied()).chain([0.0]);
    let f = Frame::new(xs.iter().copied().chain([table.region.l1, table.region.l2]), ys);
    let mut s = svg_open("estimated position relative to the black patch");
    f.axes(&mut s, "true position relative to intersection [m]", "estimate minus black estimate [m]");
    for (class, color, line) in [("l1", "#2ca02c", table.region.l1), ("l2", "#d62728", table.region.l2)] {
        let _ = writeln!(
            s,
            r#"<line class="{class}" data-value="{line}" x1="{x:.2}" x2="{x:.2}" y1="{t}" y2="{b}" stroke="{color}" stroke-dasharray="4 3"/>"#,
            x = f.px(line),
            t = MARGIN,
            b = HEIGHT - MARGIN
        );
    }
    for (i, row) in table.rows.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts = f.polyline(xs.iter().copied().zip(row.relative_to_black.iter().copied()));
        let label = escape(&row.label);
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{label}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" data-label="{label}" x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{label}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 + 16.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComparisonCsvRow<'a> {
    label: &'a str,
    decision: &'static str,
    true_crossing_l1: Option<usize>,
    est_crossing_l1: Option<usize>,
    true_crossing_l2: Option<usize>,
    mean_shift: f64,
    mean_backward_vs_black: f64,
    max_backward_shift: f64,
    trace_file: &'a str,
}

pub fn write_comparison_csv(table: &ComparisonTable, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &table.rows {
        w.serialize(ComparisonCsvRow {
            label: &r.label,
            decision: decision_str(r.outcome.decision),
            true_crossing_l1: r.outcome.true_crossing_l1,
            est_crossing_l1: r.outcome.est_crossing_l1,
            true_crossing_l2: r.outcome.true_crossing_l2,
            mean_shift: r.mean_shift,
            mean_backward_vs_black: r.mean_backward_vs_black,
            max_backward_shift: r.max_backward_shift,
            trace_file: &r.trace_file,
        })?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Step-by-step relative series: `step, y_true_rel, <label>...`.
fn write_relative_csv(table: &ComparisonTable, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "y_true_rel".to_string()];
    header.extend(table.rows.iter().map(|r| r.label.clone()));
    w.write_record(&header)?;
    if let Some(first) = table.rows.first() {
        for (i, rec) in first.trace.iter().enumerate() {
            let mut row = vec![rec.step.to_string(), rec.y_true_rel.to_string()];
            row.extend(table.rows.iter().map(|r| r.relative_to_black[i].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCandidate {
    pub l1: f64,
    pub l2: f64,
    pub target_missed: bool,
    pub baselines_executed: bool,
}

impl RegionCandidate {
    pub fn separates(&self) -> bool {
        self.target_missed && self.baselines_executed
    }
}

/// Evaluate every approach region on a `scan.step` grid with `l2 - l1 >= scan.min_gap`
/// inside the driven stretch: does `target` miss the turn while every other patch makes it?
pub fn region_scan(table: &ComparisonTable, target: &str, scan: &RegionScan) -> Result<Vec<RegionCandidate>, HarnessError> {
    let target_row = table
        .row(target)
        .ok_or_else(|| HarnessError::Comparison(format!("no patch labeled {target}")))?;
    let start = target_row
        .trace
        .first()
        .ok_or_else(|| HarnessError::Empty(format!("trace {target}")))?
        .y_true_rel;
    let step = scan.step;
    let lo = (start / step).ceil() as i64;
    let gap = (scan.min_gap / step).ceil() as i64;
    let mut out = Vec::new();
    for i in lo..=-gap {
        for j in (i + gap)..=0 {
            let region = ApproachRegion {
                l1: i as f64 * step,
                l2: j as f64 * step,
            };
            let mut target_missed = false;
            let mut baselines_executed = true;
            for row in &table.rows {
                let d = turn_decision(&row.trace, &region)?.decision;
                if row.label == target {
                    target_missed = d == TurnDecision::Missed;
                } else if d != TurnDecision::Executed {
                    baselines_executed = false;
                }
            }
            out.push(RegionCandidate {
                l1: region.l1,
                l2: region.l2,
                target_missed,
                baselines_executed,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub target: String,
    pub region: ApproachRegion,
    /// Target missed and all other patches executed under `region`.
    pub default_region_separates: bool,
    /// Widest scanned region that separates, when the default one does not.
    pub fallback_region: Option<ApproachRegion>,
    pub target_mean_backward_vs_black: f64,
    pub target_max_backward_shift: f64,
    pub black_noise: f64,
    pub decisions: Vec<(String, TurnDecision)>,
}

/// Write every plot and table for `table` into `dir`. `target` labels the crafted patch.
pub fn write_report(dir: &Path, table: &ComparisonTable, target: &str, scan: &RegionScan) -> Result<ReportSummary, HarnessError> {
    if table.rows.is_empty() {
        return Err(HarnessError::Empty("comparison table".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))
    };
    for row in &table.rows {
        write(&format!("trace_{}.svg", row.label), render_trace_svg(&row.label, &row.trace, &row.outcome)?)?;
    }
    write("comparison.svg", render_comparison_svg(table)?)?;
    write_comparison_csv(table, &dir.join("comparison.csv"))?;
    write_relative_csv(table, &dir.join("relative_to_black.csv"))?;

    let target_row = table
        .row(target)
        .ok_or_else(|| HarnessError::Comparison(format!("no patch labeled {target}")))?;
    let default_region_separates = target_row.outcome.decision == TurnDecision::Missed
        && table
            .rows
            .iter()
            .all(|r| r.label == target || r.outcome.decision == TurnDecision::Executed);
    let mut fallback_region = None;
    if scan.enabled {
        let candidates = region_scan(table, target, scan)?;
        let mut w = csv::Writer::from_path(dir.join("region_scan.csv"))?;
        for c in &candidates {
            w.serialize(c)?;
        }
        w.flush().map_err(|e| HarnessError::io(dir, e))?;
        if !default_region_separates {
            // widest first, then the one closest to the intersection
            fallback_region = candidates
                .iter()
                .filter(|c| c.separates())
                .max_by(|a, b| {
                    (a.l2 - a.l1)
                        .total_cmp(&(b.l2 - b.l1))
                        .then(a.l2.total_cmp(&b.l2))
                })
                .map(|c| ApproachRegion { l1: c.l1, l2: c.l2 });
        }
    }
    let summary = ReportSummary {
        target: target.to_string(),
        region: table.region,
        default_region_separates,
        fallback_region,
        target_mean_backward_vs_black: target_row.mean_backward_vs_black,
        target_max_backward_shift: target_row.max_backward_shift,
        black_noise: table.black_noise,
        decisions: table.rows.iter().map(|r| (r.label.clone(), r.outcome.decision)).collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write("summary.json", text)?;
    let mut text = serde_json::to_string_pretty(table)?;
    text.push('\n');
    write("comparison.json", text)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::compare::compare_traces;

    fn trace(shift: impl Fn(f64) -> f64) -> Vec<TraceRecord> {
        (0..=40)
            .map(|j| {
                let y = -200.0 + 5.0 * j as f64;
                let e = y + shift(y);
                TraceRecord {
                    step: j,
                    true_x: 0.0,
                    true_y: y,
                    pred_x: 0.0,
                    pred_y: e + 1.0,
                    est_x: 0.0,
                    est_y: e,
                    y_true_rel: y,
                    y_pred_rel: e + 1.0,
                    y_est_rel: e,
                }
            })
            .collect()
    }

    fn count(s: &str, pat: &str) -> usize {
        s.matches(pat).count()
    }

    fn attr<'a>(elem: &'a str, name: &str) -> &'a str {
        let key = format!("{name}=\"");
        let start = elem.find(&key).unwrap() + key.len();
        &elem[start..start + elem[start..].find('"').unwrap()]
    }

    #[test]
    fn trace_plot_has_three_curves_and_two_lines() {
        let t = trace(|_| -3.0);
        let outcome = turn_decision(&t, &ApproachRegion::default()).unwrap();
        let svg = render_trace_svg("black", &t, &outcome).unwrap();
        assert_eq!(count(&svg, "<polyline"), 3);
        for s in ["true", "predicted", "estimated"] {
            assert_eq!(count(&svg, &format!("data-series=\"{s}\"")), 1);
        }
        assert_eq!(count(&svg, "<line class=\"l1\""), 1);
        assert_eq!(count(&svg, "<line class=\"l2\""), 1);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn markers_agree_with_outcome_steps() {
        let t = trace(|y| if y > -80.0 { -45.0 } else { 0.0 });
        let outcome = turn_decision(&t, &ApproachRegion::default()).unwrap();
        let svg = render_trace_svg("adv", &t, &outcome).unwrap();
        let markers: Vec<(String, usize)> = svg
            .lines()
            .filter(|l| l.starts_with("<circle class=\"marker\""))
            .map(|l| (attr(l, "data-marker").to_string(), attr(l, "data-step").parse().unwrap()))
            .collect();
        let expect = |name: &str, step: Option<usize>| {
            let got: Vec<usize> = markers.iter().filter(|(n, _)| n == name).map(|(_, s)| *s).collect();
            assert_eq!(got, step.into_iter().collect::<Vec<_>>(), "marker {name}");
        };
        expect("b", outcome.true_crossing_l1);
        expect("b'", outcome.true_crossing_l1);
        expect("c", outcome.true_crossing_l2);
        expect("c'", outcome.true_crossing_l2);
        expect("e", outcome.est_crossing_l1);
        assert_eq!(outcome.decision, TurnDecision::Missed);
    }

    #[test]
    fn comparison_plot_has_one_series_per_patch() {
        let table = compare_traces(
            vec![
                ("adversarial".into(), trace(|y| if y > -60.0 { -30.0 } else { 0.0 })),
                ("black".into(), trace(|_| 0.0)),
                ("white".into(), trace(|_| 1.0)),
                ("random".into(), trace(|_| -1.0)),
            ],
            &ApproachRegion::default(),
        )
        .unwrap();
        let svg = render_comparison_svg(&table).unwrap();
        assert_eq!(count(&svg, "<polyline class=\"series\""), 4);
        for l in ["adversarial", "black", "white", "random"] {
            assert_eq!(count(&svg, &format!("class=\"legend\" data-label=\"{l}\"")), 1);
        }
    }

    #[test]
    fn empty_trace_is_rejected() {
        let t = trace(|_| 0.0);
        let outcome = turn_decision(&t, &ApproachRegion::default()).unwrap();
        assert!(render_trace_svg("x", &[], &outcome).is_err());
    }

    #[test]
    fn region_scan_finds_separating_regions() {
        // the target estimate lags 30 m over the last 100 m
        let table = compare_traces(
            vec![
                ("adversarial".into(), trace(|y| if y > -100.0 { -30.0 } else { 0.0 })),
                ("black".into(), trace(|_| 0.0)),
            ],
            &ApproachRegion::default(),
        )
        .unwrap();
        let scan = RegionScan::default();
        let cands = region_scan(&table, "adversarial", &scan).unwrap();
        assert!(cands.iter().all(|c| c.l2 - c.l1 >= scan.min_gap - 1e-9 && c.l1 >= -200.0 && c.l2 <= 0.0));
        for c in &cands {
            let r = ApproachRegion { l1: c.l1, l2: c.l2 };
            let adv = turn_decision(&table.rows[0].trace, &r).unwrap().decision;
            assert_eq!(c.target_missed, adv == TurnDecision::Missed);
        }
        let dir = tempfile::tempdir().unwrap();
        let summary = write_report(dir.path(), &table, "adversarial", &scan).unwrap();
        assert!(!summary.default_region_separates);
        let fb = summary.fallback_region.unwrap();
        // a 30 m lag separates every region narrower than 30 m
        assert_eq!(fb.l2 - fb.l1, 25.0);
        let r = turn_decision(&table.rows[0].trace, &fb).unwrap();
        assert_eq!(r.decision, TurnDecision::Missed);
        for f in ["comparison.svg", "comparison.csv", "relative_to_black.csv", "region_scan.csv", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
