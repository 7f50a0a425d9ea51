use super::aggregate::Aggregate;
use super::run::RunResult;
use super::HarnessError;
use crate::crlb::CrlbSequence;
use std::fmt::Write as _;
use std::io::{Read, Write};

pub const AGGREGATE_HEADER: [&str; 8] =
    ["t", "rmse_px", "rmse_py", "rmse_pos", "rmse_vel", "two_sigma_pos", "crlb_pos", "crlb_vel"];
pub const ESTIMATE_HEADER: [&str; 16] = [
    "t", "px", "py", "vx", "vy", "psi", "bax", "bay", "br", "bzx", "bzy", "ucx", "ucy", "sd_pos", "neff", "diverged",
];
pub const CRLB_HEADER: [&str; 6] = ["t", "sd_px", "sd_py", "sd_vx", "sd_vy", "sd_psi"];

fn num(x: f64) -> String {
    crate::vehicle_sim::fmt17(x)
}

pub fn write_aggregate_csv<W: Write>(agg: &Aggregate, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for j in 0..agg.len() {
        let row = [
            agg.t[j],
            agg.rmse_px[j],
            agg.rmse_py[j],
            agg.rmse_pos[j],
            agg.rmse_vel[j],
            agg.two_sigma_pos[j],
            agg.crlb_pos[j],
            agg.crlb_vel[j],
        ];
        w.write_record(row.map(num))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses an aggregate CSV into named columns, in header order.
pub fn read_aggregate_csv<R: Read>(input: R) -> Result<Vec<(String, Vec<f64>)>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let mut cols: Vec<(String, Vec<f64>)> = r.headers()?.iter().map(|h| (h.to_string(), Vec::new())).collect();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols.len() {
            return Err(HarnessError::Config(format!("row {} has {} fields, expected {}", line + 2, rec.len(), cols.len())));
        }
        for (col, field) in cols.iter_mut().zip(rec.iter()) {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|e| HarnessError::Config(format!("row {}: {e}", line + 2)))?;
            col.1.push(v);
        }
    }
    Ok(cols)
}

/// Per-tick point estimate of the particle filter for one run.
pub fn write_estimate_csv<W: Write>(run: &RunResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_HEADER)?;
    for tick in &run.ticks {
        let mut row = Vec::with_capacity(ESTIMATE_HEADER.len());
        row.push(num(tick.t));
        row.push(num(tick.mpf.p.x));
        row.push(num(tick.mpf.p.y));
        row.extend(tick.mpf.kf_mean.iter().map(|v| num(*v)));
        row.push(num((tick.mpf_pos_cov.trace() / 2.0).max(0.0).sqrt()));
        row.push(num(tick.neff));
        row.push(u8::from(tick.diverged).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Bound SDs at every `stride`-th step of the sequence.
pub fn write_crlb_csv<W: Write>(seq: &CrlbSequence, stride: usize, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CRLB_HEADER)?;
    for k in (0..seq.times.len()).step_by(stride.max(1)) {
        let sd = seq.sd(k);
        w.write_record([seq.times[k], sd[0], sd[1], sd[2], sd[3], sd[4]].map(num))?;
    }
    w.flush()?;
    Ok(())
}

pub struct Series<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// A plain SVG line chart with one polyline per series and a legend.
/// Non-finite points are skipped; `log_y` plots base-10 logarithms.
pub fn render_svg(series: &[Series], title: &str, x_label: &str, y_label: &str, log_y: bool) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (80.0, 170.0, 40.0, 60.0);
    let ty = |y: f64| if log_y { if y > 0.0 { y.log10() } else { f64::NAN } } else { y };
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (&x, &y) in s.x.iter().zip(s.y) {
            let y = ty(y);
            if x.is_finite() && y.is_finite() {
                xr = (xr.0.min(x), xr.1.max(x));
                yr = (yr.0.min(y), yr.1.max(y));
            }
        }
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
        yr = (0.0, 1.0);
    }
    if xr.1 <= xr.0 {
        xr.1 = xr.0 + 1.0;
    }
    if yr.1 <= yr.0 {
        yr.1 = yr.0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - xr.0) / (xr.1 - xr.0) * pw;
    let sy = |y: f64| top + ph - (y - yr.0) / (yr.1 - yr.0) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xr.0 + f * (xr.1 - xr.0);
        let yv = yr.0 + f * (yr.1 - yr.0);
        let ylab = if log_y { format!("{:.3}", 10f64.powf(yv)) } else { format!("{yv:.3}") };
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{xv:.2}</text>"#, sx(xv), top + ph + 16.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{ylab}</text>"#, left - 6.0, sy(yv) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 18.0, escape(x_label));
    let _ = writeln!(svg, r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#, top + ph / 2.0, top + ph / 2.0, escape(y_label));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for (&x, &y) in s.x.iter().zip(s.y) {
            let y = ty(y);
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
            }
        }
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.trim_end());
        let ly = top + 16.0 + 18.0 * i as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, lx + 26.0, ly + 4.0, escape(s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
