//! Deterministic experiment outputs: a flat record table rendered to CSV,
//! a JSON summary, and an optional self-contained SVG line plot. All
//! renderers are pure functions of their inputs so identical runs produce
//! byte-identical files regardless of thread count or platform.

use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::OutputFormat;

/// One measured value. `metadata` is a free-form tag (e.g. the metric's
/// distance flavor or the fixture name); it must stay CSV-safe.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub replica: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
    pub metadata: String,
}

impl ResultRecord {
    pub fn new(
        experiment: impl Into<String>,
        replica: u64,
        step: u64,
        metric: impl Into<String>,
        value: f64,
        metadata: impl Into<String>,
    ) -> Result<Self> {
        let record = ResultRecord {
            experiment: experiment.into(),
            replica,
            step,
            metric: metric.into(),
            value,
            metadata: metadata.into(),
        };
        if !record.value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "record value for metric `{}` is not finite",
                record.metric
            )));
        }
        for (field, text) in [
            ("experiment", &record.experiment),
            ("metric", &record.metric),
            ("metadata", &record.metadata),
        ] {
            if text.contains(',') || text.contains('\n') || text.contains('\r') {
                return Err(Error::InvalidInput(format!(
                    "record {field} `{text}` contains a comma or newline"
                )));
            }
        }
        if record.experiment.is_empty() || record.metric.is_empty() {
            return Err(Error::InvalidInput(
                "record experiment and metric must be nonempty".into(),
            ));
        }
        Ok(record)
    }
}

/// Render records as CSV with a fixed header. Rows are sorted by
/// (replica, step, metric, metadata) so output is independent of the order
/// in which parallel workers produced them. Values print with Rust's
/// shortest-round-trip float formatting.
pub fn render_csv(records: &[ResultRecord]) -> String {
    let mut rows: Vec<&ResultRecord> = records.iter().collect();
    rows.sort_by(|x, y| {
        (x.replica, x.step, &x.metric, &x.metadata)
            .cmp(&(y.replica, y.step, &y.metric, &y.metadata))
    });
    let mut out = String::from("experiment,replica,step,metric,value,metadata\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.experiment, r.replica, r.step, r.metric, r.value, r.metadata
        );
    }
    out
}

/// Render the summary as pretty JSON with a trailing newline. Keys are
/// emitted in sorted order, so the bytes are deterministic.
pub fn render_summary(summary: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(summary)
        .expect("summary serialization cannot fail for finite values");
    text.push('\n');
    text
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 42.0;
const PALETTE: [&str; 6] = [
    "#1f6f8b", "#c05746", "#3a7d44", "#8a5ab5", "#b8860b", "#555555",
];

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Hand-rolled line plot: one polyline per named series on a fixed 640×400
/// canvas with axis ticks and a legend. Returns the SVG document text.
pub fn render_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (SVG_W - MARGIN_L - MARGIN_R);
    let py = |y: f64| SVG_H - MARGIN_B - (y - y0) / (y1 - y0) * (SVG_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">\n"
    );
    let _ = write!(
        svg,
        "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"#ffffff\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"20\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        SVG_W / 2.0,
        xml_escape(title)
    );
    // Axes.
    let _ = write!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"#222\" stroke-width=\"1\"/>\n",
        SVG_H - MARGIN_B
    );
    let _ = write!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#222\" stroke-width=\"1\"/>\n",
        SVG_H - MARGIN_B,
        SVG_W - MARGIN_R,
        SVG_H - MARGIN_B
    );
    // Ticks: 5 per axis.
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * f64::from(i) / 4.0;
        let fy = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let (tx, ty) = (px(fx), py(fy));
        let _ = write!(
            svg,
            "<line x1=\"{tx:.1}\" y1=\"{:.1}\" x2=\"{tx:.1}\" y2=\"{:.1}\" stroke=\"#222\" stroke-width=\"1\"/>\n",
            SVG_H - MARGIN_B,
            SVG_H - MARGIN_B + 4.0
        );
        let _ = write!(
            svg,
            "<text x=\"{tx:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            SVG_H - MARGIN_B + 16.0,
            fmt_tick(fx)
        );
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ty:.1}\" x2=\"{MARGIN_L}\" y2=\"{ty:.1}\" stroke=\"#222\" stroke-width=\"1\"/>\n",
            MARGIN_L - 4.0
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 7.0,
            ty + 3.0,
            fmt_tick(fy)
        );
    }
    // Series polylines and legend.
    for (idx, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut path = String::new();
        for (x, y) in s.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(path, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.trim_end()
        );
        let ly = MARGIN_T + 14.0 * idx as f64;
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            SVG_W - MARGIN_R - 120.0,
            SVG_W - MARGIN_R - 100.0
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\">{}</text>\n",
            SVG_W - MARGIN_R - 96.0,
            ly + 3.0,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Output directory precedence: CLI flag, then config field, then the
/// ERGOLAB_OUT environment variable, then the current directory.
pub fn resolve_out_dir(cfg_out: Option<&str>, cli_out: Option<&Path>) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = cfg_out {
        return PathBuf::from(p);
    }
    if let Ok(p) = std::env::var("ERGOLAB_OUT") {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    PathBuf::from(".")
}

/// Write the requested artifacts under `out_dir/stem.{csv,json,svg}` and
/// return the paths written, creating directories as needed.
pub fn write_outputs(
    out_dir: &Path,
    stem: &str,
    formats: &[OutputFormat],
    plot: bool,
    records: &[ResultRecord],
    summary: &serde_json::Value,
    plot_series: &[(String, Vec<(f64, f64)>)],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    };
    for fmt in formats {
        match fmt {
            OutputFormat::Csv => emit(format!("{stem}.csv"), render_csv(records))?,
            OutputFormat::Json => emit(format!("{stem}.json"), render_summary(summary))?,
        }
    }
    if plot {
        emit(format!("{stem}.svg"), render_svg(stem, plot_series))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn records_reject_nonfinite_values_and_unsafe_text() {
        assert!(ResultRecord::new("e", 0, 0, "m", f64::NAN, "").is_err());
        assert!(ResultRecord::new("e", 0, 0, "m", f64::INFINITY, "").is_err());
        assert!(ResultRecord::new("e", 0, 0, "m,x", 1.0, "").is_err());
        assert!(ResultRecord::new("e", 0, 0, "m", 1.0, "a\nb").is_err());
        assert!(ResultRecord::new("", 0, 0, "m", 1.0, "").is_err());
        assert!(ResultRecord::new("e", 0, 0, "m", 1.0, "tag").is_ok());
    }

    #[test]
    fn csv_is_sorted_and_round_trips_floats() {
        let records = vec![
            ResultRecord::new("e", 1, 0, "tv", 0.1 + 0.2, "b").unwrap(),
            ResultRecord::new("e", 0, 2, "tv", 1.0, "a").unwrap(),
            ResultRecord::new("e", 0, 1, "tv", 0.5, "a").unwrap(),
            ResultRecord::new("e", 0, 1, "bl", 2.0, "a").unwrap(),
        ];
        let csv = render_csv(&records);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "experiment,replica,step,metric,value,metadata");
        assert_eq!(lines[1], "e,0,1,bl,2,a");
        assert_eq!(lines[2], "e,0,1,tv,0.5,a");
        assert_eq!(lines[3], "e,0,2,tv,1,a");
        // Shortest round-trip form of 0.1+0.2 preserves the exact double.
        let v: f64 = lines[4].split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(v, 0.1 + 0.2);
    }

    #[test]
    fn csv_ordering_is_input_order_independent() {
        let a = ResultRecord::new("e", 3, 9, "m", 1.0, "x").unwrap();
        let b = ResultRecord::new("e", 1, 4, "m", 2.0, "y").unwrap();
        let c = ResultRecord::new("e", 1, 4, "a", 3.0, "y").unwrap();
        let fwd = render_csv(&[a.clone(), b.clone(), c.clone()]);
        let rev = render_csv(&[c, b, a]);
        assert_eq!(fwd, rev);
    }

    #[test]
    fn summary_json_has_sorted_keys_and_trailing_newline() {
        let text = render_summary(&json!({"zeta": 1, "alpha": 2}));
        assert!(text.ends_with('\n'));
        let za = text.find("zeta").unwrap();
        let al = text.find("alpha").unwrap();
        assert!(al < za);
    }

    #[test]
    fn svg_contains_a_polyline_per_series_and_escapes_text() {
        let series = vec![
            ("tv<1".to_string(), vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)]),
            ("bl".to_string(), vec![(0.0, 2.0), (1.0, 1.0)]),
        ];
        let svg = render_svg("decay & such", &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("decay &amp; such"));
        assert!(svg.contains("tv&lt;1"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_handles_degenerate_ranges() {
        let svg = render_svg("flat", &[("c".to_string(), vec![(1.0, 3.0), (1.0, 3.0)])]);
        assert!(!svg.contains("NaN"));
        let svg = render_svg("empty", &[]);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn out_dir_precedence_is_cli_then_config() {
        let cli = PathBuf::from("/tmp/cli");
        assert_eq!(
            resolve_out_dir(Some("cfg"), Some(&cli)),
            PathBuf::from("/tmp/cli")
        );
        assert_eq!(resolve_out_dir(Some("cfg"), None), PathBuf::from("cfg"));
    }

    #[test]
    fn write_outputs_creates_requested_files() {
        let dir = std::env::temp_dir().join(format!("ergolab-out-{}", std::process::id()));
        let records = vec![ResultRecord::new("e", 0, 0, "m", 1.5, "").unwrap()];
        let summary = json!({"ok": true});
        let series = vec![("m".to_string(), vec![(0.0, 1.5)])];
        let written = write_outputs(
            &dir,
            "demo",
            &[OutputFormat::Csv, OutputFormat::Json],
            true,
            &records,
            &summary,
            &series,
        )
        .unwrap();
        assert_eq!(written.len(), 3);
        for path in &written {
            assert!(path.exists(), "{}", path.display());
        }
        let csv = std::fs::read_to_string(dir.join("demo.csv")).unwrap();
        assert!(csv.starts_with("experiment,replica,step,metric,value,metadata\n"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
