//! Figures from a results CSV: mean across seeds with a 95% interval.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use thiserror::Error;

use crate::scenario::NA;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV has no {0:?} column")]
    MissingColumn(&'static str),
    #[error("CSV line {line}: bad {column} value {value:?}")]
    BadValue {
        line: u64,
        column: &'static str,
        value: String,
    },
    #[error("CSV has no data rows")]
    Empty,
    #[error("drawing {path}: {message}")]
    Draw { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub scenario: u8,
    pub policy: String,
    pub lambda_d: f64,
    pub lambda_v: f64,
    pub seed: u64,
    pub slice: String,
    pub throughput_mbps: f64,
    pub mean_latency_s: Option<f64>,
    pub blocking_prob: Option<f64>,
}

const COLUMNS: [&str; 9] = [
    "scenario",
    "policy",
    "lambda_d",
    "lambda_v",
    "seed",
    "slice",
    "throughput_mbps",
    "mean_latency_s",
    "blocking_prob",
];

pub fn parse_results(csv_text: &str) -> Result<Vec<Record>, PlotError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut index = [0usize; COLUMNS.len()];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(PlotError::MissingColumn(name))?;
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(index[i]).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str, line: u64, column: &'static str) -> Result<T, PlotError> {
            s.parse().map_err(|_| PlotError::BadValue {
                line,
                column,
                value: s.to_owned(),
            })
        }
        let opt = |i: usize| -> Result<Option<f64>, PlotError> {
            match field(i) {
                NA => Ok(None),
                s => num(s, line, COLUMNS[i]).map(Some),
            }
        };
        out.push(Record {
            scenario: num(field(0), line, COLUMNS[0])?,
            policy: field(1).to_owned(),
            lambda_d: num(field(2), line, COLUMNS[2])?,
            lambda_v: num(field(3), line, COLUMNS[3])?,
            seed: num(field(4), line, COLUMNS[4])?,
            slice: field(5).to_owned(),
            throughput_mbps: num(field(6), line, COLUMNS[6])?,
            mean_latency_s: opt(7)?,
            blocking_prob: opt(8)?,
        });
    }
    if out.is_empty() {
        return Err(PlotError::Empty);
    }
    Ok(out)
}

/// Mean and 95% half-width of a sample.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// x → (mean, half-width), one entry per series.
type Series = BTreeMap<String, Vec<(f64, f64, f64)>>;

fn key(x: f64) -> u64 {
    x.to_bits()
}

/// Collect `value` per (series, x) over seeds and reduce.
fn aggregate<'a>(
    records: impl Iterator<Item = &'a Record>,
    series: impl Fn(&Record) -> String,
    x: impl Fn(&Record) -> f64,
    value: impl Fn(&Record) -> Option<f64>,
) -> Series {
    let mut raw: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if let Some(v) = value(r) {
            raw.entry(series(r)).or_default().entry(key(x(r))).or_default().push(v);
        }
    }
    let mut out = Series::new();
    for (name, points) in raw {
        let mut pts: Vec<(f64, f64, f64)> = points
            .into_iter()
            .map(|(k, vs)| {
                let (m, h) = mean_ci(&vs);
                (f64::from_bits(k), m, h)
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.insert(name, pts);
    }
    out
}

/// The value of `fixed` shared by the most distinct values of `varying`;
/// picks out one sweep line from a CSV holding several.
fn main_line(records: &[&Record], fixed: fn(&Record) -> f64, varying: fn(&Record) -> f64) -> Option<f64> {
    let mut lines: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for r in records {
        lines.entry(key(fixed(r))).or_default().push(key(varying(r)));
    }
    lines
        .into_iter()
        .map(|(k, mut xs)| {
            xs.sort_unstable();
            xs.dedup();
            (xs.len(), std::cmp::Reverse(f64::from_bits(k).to_bits()), k)
        })
        .max()
        .map(|(_, _, k)| f64::from_bits(k))
}

struct Panel<'a> {
    path: PathBuf,
    title: &'a str,
    x_label: &'a str,
    y_label: &'a str,
    series: Series,
}

fn draw(panel: &Panel) -> Result<(), PlotError> {
    let err = |e: &dyn std::fmt::Display| PlotError::Draw {
        path: panel.path.clone(),
        message: e.to_string(),
    };
    let all: Vec<&(f64, f64, f64)> = panel.series.values().flatten().collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (0.0f64, f64::NEG_INFINITY);
    for (x, m, h) in &all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(m - h);
        y1 = y1.max(m + h);
    }
    if all.is_empty() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let root = SVGBackend::new(&panel.path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(panel.title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..(y1 + pad))
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc(panel.x_label)
        .y_desc(panel.y_label)
        .draw()
        .map_err(|e| err(&e))?;
    for (i, (name, pts)) in panel.series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().map(|(x, m, _)| (*x, *m)), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(
                pts.iter()
                    .map(|(x, m, h)| ErrorBar::new_vertical(*x, m - h, *m, m + h, color.filled(), 8)),
            )
            .map_err(|e| err(&e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

/// Write the panels the CSV supports: throughput and latency against the
/// data rate for RAT-selection results, slice throughput and blocking for
/// slicing results. Returns the files written.
pub fn emit_plots(csv_text: &str, dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let records = parse_results(csv_text)?;
    let mut panels = Vec::new();

    let one: Vec<&Record> = records.iter().filter(|r| r.scenario == 1).collect();
    if !one.is_empty() {
        // Total throughput per run, summed over slices.
        let mut totals: BTreeMap<(String, u64, u64, u64), Record> = BTreeMap::new();
        for r in &one {
            let e = totals
                .entry((r.policy.clone(), key(r.lambda_d), key(r.lambda_v), r.seed))
                .or_insert_with(|| Record {
                    throughput_mbps: 0.0,
                    ..(*r).clone()
                });
            e.throughput_mbps += r.throughput_mbps;
        }
        panels.push(Panel {
            path: dir.join("fig_a.svg"),
            title: "System throughput",
            x_label: "data user arrival rate (1/s)",
            y_label: "throughput (Mbps)",
            series: aggregate(totals.values(), |r| r.policy.clone(), |r| r.lambda_d, |r| Some(r.throughput_mbps)),
        });
        panels.push(Panel {
            path: dir.join("fig_b.svg"),
            title: "Data transfer latency",
            x_label: "data user arrival rate (1/s)",
            y_label: "mean latency (ms)",
            series: aggregate(
                one.iter().copied(),
                |r| r.policy.clone(),
                |r| r.lambda_d,
                |r| r.mean_latency_s.map(|s| 1e3 * s),
            ),
        });
    }

    let two: Vec<&Record> = records.iter().filter(|r| r.scenario == 2).collect();
    if !two.is_empty() {
        let video_line = main_line(&two, |r| r.lambda_v, |r| r.lambda_d);
        let data_line = main_line(&two, |r| r.lambda_d, |r| r.lambda_v);
        panels.push(Panel {
            path: dir.join("fig_c.svg"),
            title: "Slice throughput",
            x_label: "data user arrival rate (1/s)",
            y_label: "throughput (Mbps)",
            series: aggregate(
                two.iter().copied().filter(|r| Some(r.lambda_v) == video_line),
                |r| r.slice.clone(),
                |r| r.lambda_d,
                |r| Some(r.throughput_mbps),
            ),
        });
        panels.push(Panel {
            path: dir.join("fig_d.svg"),
            title: "Blocking probability",
            x_label: "video user arrival rate (1/s)",
            y_label: "blocking probability",
            series: aggregate(
                two.iter().copied().filter(|r| Some(r.lambda_d) == data_line),
                |r| r.slice.clone(),
                |r| r.lambda_v,
                |r| r.blocking_prob,
            ),
        });
    }

    std::fs::create_dir_all(dir).map_err(|e| PlotError::Draw {
        path: dir.to_owned(),
        message: e.to_string(),
    })?;
    let mut written = Vec::new();
    for p in &panels {
        draw(p)?;
        written.push(p.path.clone());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::CSV_HEADER;

    #[test]
    fn mean_ci_examples() {
        assert_eq!(mean_ci(&[2.0]), (2.0, 0.0));
        let (m, h) = mean_ci(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((h - 1.96 * (2.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_results("scenario,policy\n1,sdn-heuristic\n").unwrap_err();
        assert!(matches!(err, PlotError::MissingColumn("lambda_d")));
    }

    #[test]
    fn empty_csv_is_an_error() {
        assert!(matches!(parse_results(&format!("{CSV_HEADER}\n")), Err(PlotError::Empty)));
        assert!(parse_results("").is_err());
    }

    #[test]
    fn main_line_prefers_longest_sweep() {
        let text = format!(
            "{CSV_HEADER}\n\
             2,sdn-heuristic,0.1,0.1,1,video,1,NA,0,1,1,0\n\
             2,sdn-heuristic,0.2,0.1,1,video,1,NA,0,1,1,0\n\
             2,sdn-heuristic,0.1,0.5,1,video,1,NA,0,1,1,0\n"
        );
        let recs = parse_results(&text).unwrap();
        let refs: Vec<&Record> = recs.iter().collect();
        assert_eq!(main_line(&refs, |r| r.lambda_v, |r| r.lambda_d), Some(0.1));
        assert_eq!(main_line(&refs, |r| r.lambda_d, |r| r.lambda_v), Some(0.1));
    }
}
