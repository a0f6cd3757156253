//! Campaign and regulation reports: CSV/JSON writers and readers, formatted
//! statistic tables and SVG voltage-profile plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::campaign::{CampaignStats, CellStats, GroupStats, OutcomeRecord, Summary};
use crate::controller::{DispatchMode, RegulationOutcome, TraceRecord};
use crate::error::{Error, Result};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn outcomes_to_csv(records: &[OutcomeRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(OUTCOME_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const OUTCOME_HEADER: [&str; 14] = [
    "mode",
    "step_kw",
    "scenario",
    "status",
    "initial_load_kw",
    "initial_vpp_kw",
    "vpp_change_kw",
    "il_shed_kw",
    "iterations",
    "loop_passes",
    "passes",
    "initial_min_v",
    "final_min_v",
    "final_max_v",
];

pub fn outcomes_from_csv(text: &str) -> Result<Vec<OutcomeRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_outcomes(path: &Path, records: &[OutcomeRecord]) -> Result<()> {
    write_text(path, &outcomes_to_csv(records)?)
}

pub fn read_outcomes(path: &Path) -> Result<Vec<OutcomeRecord>> {
    outcomes_from_csv(&read_text(path)?)
}

pub fn write_stats_json(path: &Path, stats: &CampaignStats) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(stats)? + "\n"))
}

pub fn read_stats_json(path: &Path) -> Result<CampaignStats> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

const QUANTITIES: [&str; 6] = [
    "initial_load_kw",
    "initial_vpp_kw",
    "vpp_change_kw",
    "total_vpp_kw",
    "il_shed_kw",
    "iterations",
];

fn group_fields(g: &GroupStats) -> [&Summary; 6] {
    [
        &g.initial_load_kw,
        &g.initial_vpp_kw,
        &g.vpp_change_kw,
        &g.total_vpp_kw,
        &g.il_shed_kw,
        &g.iterations,
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| Error::Parse(format!("bad number {s:?}")))
    }
}

fn stats_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "mode",
        "step_kw",
        "runs",
        "successes",
        "failures",
        "discarded",
        "no_violation",
        "success_rate",
        "zero_change_fraction",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for group in ["success", "failure"] {
        for q in QUANTITIES {
            for f in ["count", "mean", "std", "max", "min"] {
                h.push(format!("{group}.{q}.{f}"));
            }
        }
    }
    h
}

/// One row per (mode, step) cell. Numbers use the shortest exact form, so
/// [`stats_from_csv`] reproduces the statistics bit for bit.
pub fn stats_to_csv(stats: &CampaignStats) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(stats_header())?;
    for c in &stats.cells {
        let mut row = vec![
            c.mode.as_str().to_string(),
            c.step_kw.to_string(),
            c.runs.to_string(),
            c.successes.to_string(),
            c.failures.to_string(),
            c.discarded.to_string(),
            c.no_violation.to_string(),
            c.success_rate.to_string(),
            c.zero_change_fraction.to_string(),
        ];
        for g in [&c.success, &c.failure] {
            for s in group_fields(g) {
                row.extend([s.count.to_string(), opt(s.mean), opt(s.std), opt(s.max), opt(s.min)]);
            }
        }
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn stats_from_csv(text: &str) -> Result<CampaignStats> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let expected = stats_header();
    if r.headers()?.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse("unexpected stats CSV header".into()));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
    let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("bad count {s:?}"))) };
    let mut cells = Vec::new();
    for row in r.records() {
        let row = row?;
        let f: Vec<&str> = row.iter().collect();
        let mode: DispatchMode = f[0].parse().map_err(Error::Parse)?;
        let mut at = 9;
        let mut group = || -> Result<GroupStats> {
            let mut s = Vec::new();
            for _ in QUANTITIES {
                s.push(Summary {
                    count: int(f[at])?,
                    mean: parse_opt(f[at + 1])?,
                    std: parse_opt(f[at + 2])?,
                    max: parse_opt(f[at + 3])?,
                    min: parse_opt(f[at + 4])?,
                });
                at += 5;
            }
            Ok(GroupStats {
                initial_load_kw: s[0],
                initial_vpp_kw: s[1],
                vpp_change_kw: s[2],
                total_vpp_kw: s[3],
                il_shed_kw: s[4],
                iterations: s[5],
            })
        };
        let success = group()?;
        let failure = group()?;
        cells.push(CellStats {
            mode,
            step_kw: num(f[1])?,
            runs: int(f[2])?,
            successes: int(f[3])?,
            failures: int(f[4])?,
            discarded: int(f[5])?,
            no_violation: int(f[6])?,
            success_rate: num(f[7])?,
            zero_change_fraction: num(f[8])?,
            success,
            failure,
        });
    }
    Ok(CampaignStats { cells })
}

fn cell_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn table(title: &str, g: &GroupStats, mode: DispatchMode, zero_fraction: Option<f64>) -> String {
    let mut cols: Vec<(&str, &Summary)> = vec![("Feeder initially", &g.initial_load_kw)];
    if mode == DispatchMode::Redispatch {
        cols.push(("VPP initially", &g.initial_vpp_kw));
    }
    cols.extend([
        ("VPP change", &g.vpp_change_kw),
        ("IL shed", &g.il_shed_kw),
        ("Iterations", &g.iterations),
    ]);
    let mut out = format!("{title}\n");
    let _ = write!(out, "{:<10}", "");
    for (name, _) in &cols {
        let _ = write!(out, "{name:>18}");
    }
    out.push('\n');
    let rows: [(&str, fn(&Summary) -> Option<f64>); 4] = [
        ("Average", |s| s.mean),
        ("Std. Dev.", |s| s.std),
        ("Maximum", |s| s.max),
        ("Minimum", |s| s.min),
    ];
    for (label, get) in rows {
        let _ = write!(out, "{label:<10}");
        for (name, s) in &cols {
            let mut v = cell_value(get(s));
            if label == "Minimum" && *name == "VPP change" {
                if let Some(z) = zero_fraction {
                    v = format!("{v} ({:.0}%)", 100.0 * z);
                }
            }
            let _ = write!(out, "{v:>18}");
        }
        out.push('\n');
    }
    out
}

/// Success and failure tables of one (mode, step) cell.
pub fn format_cell(c: &CellStats) -> String {
    let what = match c.mode {
        DispatchMode::Dispatch => "dispatching",
        DispatchMode::Redispatch => "re-dispatching",
    };
    let mut out = format!(
        "== {} kW {what} step: success {:.2}% ({} of {}, {} without violation, {} discarded)\n",
        c.step_kw,
        c.success_rate,
        c.successes,
        c.successes + c.failures,
        c.no_violation,
        c.discarded
    );
    out += &table("Successful runs (kW)", &c.success, c.mode, Some(c.zero_change_fraction));
    out += &table("Failed runs (kW)", &c.failure, c.mode, None);
    out
}

/// All cell tables plus the success-rate summary.
pub fn format_stats(stats: &CampaignStats) -> String {
    let mut out = String::new();
    for c in &stats.cells {
        out += &format_cell(c);
        out.push('\n');
    }
    out += "Success rate by step (%)\n";
    let mut modes: Vec<DispatchMode> = Vec::new();
    for c in &stats.cells {
        if !modes.contains(&c.mode) {
            modes.push(c.mode);
        }
    }
    for m in modes {
        let _ = write!(out, "{:<12}", m.as_str());
        for c in stats.cells.iter().filter(|c| c.mode == m) {
            let _ = write!(out, "  {:>6}: {:>6.2}", c.step_kw, c.success_rate);
        }
        out.push('\n');
    }
    out
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in trace {
        w.serialize(t)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn trace_from_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Line plot of main-body voltage magnitude against coordinate, one line
/// per profile. Each line carries its metric in a `data-metric` attribute.
pub fn profile_svg(title: &str, coords: &[f64], profiles: &[Vec<f64>], metrics: &[f64], v_min: f64) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 160.0, 30.0, 40.0);
    let x_max = coords.last().copied().unwrap_or(1.0).max(1e-9);
    let all = profiles.iter().flatten().copied().chain([v_min, 1.0]);
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = ((hi - lo) * 0.05).max(1e-3);
    let (y_lo, y_hi) = (lo - pad, hi + pad);
    let px = |x: f64| left + x / x_max * (w - left - right);
    let py = |y: f64| top + (y_hi - y) / (y_hi - y_lo) * (h - top - bottom);
    let palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, xml_escape(title));
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" fill="none"><line x1="{left}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{b}"/></g>"#,
        b = h - bottom,
        r = w - right
    );
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            left - 4.0,
            py(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">accumulated |Z| from feeder head (ohm)</text>"#,
        (left + w - right) / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        s,
        r#"<line class="limit" x1="{left}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        y = py(v_min),
        r = w - right
    );
    for (i, p) in profiles.iter().enumerate() {
        let pts: Vec<String> = coords
            .iter()
            .zip(p)
            .map(|(x, v)| format!("{:.2},{:.2}", px(*x), py(*v)))
            .collect();
        let metric = metrics.get(i).copied().unwrap_or(f64::NAN);
        let values: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="profile" data-step="{i}" data-metric="{metric}" data-values="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            values.join(" "),
            pts.join(" "),
            palette[i % palette.len()]
        );
        let label = if i == 0 { "initial".to_string() } else { format!("step {i}") };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{}">{label}: {metric:.5}</text>"#,
            w - right + 10.0,
            top + 14.0 * (i as f64 + 1.0),
            palette[i % palette.len()]
        );
    }
    let _ = writeln!(
        s,
        r#"<g class="coords" data-values="{}"/>"#,
        coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Profiles recovered from a plot written by [`profile_svg`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPlot {
    pub coords: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    pub metrics: Vec<f64>,
}

fn attr<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("{name}=\"");
    let start = line.find(&key)? + key.len();
    let end = line[start..].find('"')? + start;
    Some(&line[start..end])
}

fn floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|v| v.parse().map_err(|_| Error::Parse(format!("bad number {v:?} in plot"))))
        .collect()
}

pub fn parse_profile_svg(text: &str) -> Result<ParsedPlot> {
    if !text.trim_start().starts_with("<svg") {
        return Err(Error::Parse("not an SVG profile plot".into()));
    }
    let mut plot = ParsedPlot {
        coords: Vec::new(),
        profiles: Vec::new(),
        metrics: Vec::new(),
    };
    for line in text.lines() {
        if line.contains(r#"class="profile""#) {
            let metric = attr(line, "data-metric").ok_or_else(|| Error::Parse("profile without metric".into()))?;
            plot.metrics.push(metric.parse().map_err(|_| Error::Parse(format!("bad metric {metric:?}")))?);
            plot.profiles.push(floats(attr(line, "data-values").unwrap_or(""))?);
        } else if line.contains(r#"class="coords""#) {
            plot.coords = floats(attr(line, "data-values").unwrap_or(""))?;
        }
    }
    Ok(plot)
}

/// Writes `outcomes.csv`, `stats.json`, `stats.csv` and `tables.txt`.
pub fn emit_report(records: &[OutcomeRecord], stats: &CampaignStats, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let files = [
        ("outcomes.csv", outcomes_to_csv(records)?),
        ("stats.json", serde_json::to_string_pretty(stats)? + "\n"),
        ("stats.csv", stats_to_csv(stats)?),
        ("tables.txt", format_stats(stats)),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let p = outdir.join(name);
        write_text(&p, &text)?;
        written.push(p);
    }
    Ok(written)
}

/// Writes `trace.csv`, `outcome.json` and, when profiles were recorded,
/// `profile.svg` for one regulation run.
pub fn emit_regulation(outcome: &RegulationOutcome, coords: &[f64], v_min: f64, title: &str, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut written = Vec::new();
    let p = outdir.join("trace.csv");
    write_text(&p, &trace_to_csv(&outcome.trace)?)?;
    written.push(p);
    let p = outdir.join("outcome.json");
    write_text(&p, &(serde_json::to_string_pretty(outcome)? + "\n"))?;
    written.push(p);
    if !outcome.profiles.is_empty() {
        let p = outdir.join("profile.svg");
        write_text(&p, &profile_svg(title, coords, &outcome.profiles, &outcome.metric_trace, v_min))?;
        written.push(p);
    }
    Ok(written)
}

/// What `comvr report` found in a file.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportInput {
    Outcomes(Vec<OutcomeRecord>),
    Stats(CampaignStats),
    Trace(Vec<TraceRecord>),
    Regulation(Box<RegulationOutcome>),
    Plot(ParsedPlot),
    Tables(String),
}

/// Recognizes any file written by this module.
pub fn read_report_file(path: &Path) -> Result<ReportInput> {
    let text = read_text(path)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "svg" => Ok(ReportInput::Plot(parse_profile_svg(&text)?)),
        "json" => {
            if let Ok(stats) = serde_json::from_str::<CampaignStats>(&text) {
                Ok(ReportInput::Stats(stats))
            } else {
                Ok(ReportInput::Regulation(Box::new(serde_json::from_str(&text)?)))
            }
        }
        "csv" => {
            let header = text.lines().next().unwrap_or("");
            if header.starts_with("mode,step_kw,scenario") {
                Ok(ReportInput::Outcomes(outcomes_from_csv(&text)?))
            } else if header.starts_with("mode,step_kw,runs") {
                Ok(ReportInput::Stats(stats_from_csv(&text)?))
            } else if header.starts_with("iteration,") || (header.is_empty() && name.contains("trace")) {
                Ok(ReportInput::Trace(trace_from_csv(&text)?))
            } else {
                Err(Error::Parse(format!("{}: unrecognized CSV header", path.display())))
            }
        }
        "txt" if text.contains("Success rate by step") => Ok(ReportInput::Tables(text)),
        _ => Err(Error::Parse(format!("{}: not a report file", path.display()))),
    }
}
