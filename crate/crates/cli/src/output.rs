//! Artifact writers: CSV tables, JSON documents and SVG plots. Every
//! artifact carries the tool version and configuration hash.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::TOOL;
use crate::CliError;

/// Nine evenly spaced stops of the viridis map, low to high.
pub const VIRIDIS: [&str; 9] = [
    "#440154", "#472D7B", "#3B528B", "#2C728E", "#21908C", "#27AD81", "#5DC863", "#AADC32", "#FDE725",
];

fn hex_rgb(s: &str) -> [f64; 3] {
    let c = |i: usize| u8::from_str_radix(&s[i..i + 2], 16).unwrap() as f64;
    [c(1), c(3), c(5)]
}

/// Colour of `t ∈ [0, 1]` by linear interpolation between the stops.
/// Values outside the range clamp; NaN maps to the lowest stop.
pub fn viridis(t: f64) -> String {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (hex_rgb(VIRIDIS[i]), hex_rgb(VIRIDIS[i + 1]));
    let ch = |k: usize| (a[k] + f * (b[k] - a[k])).round() as u8;
    format!("#{:02X}{:02X}{:02X}", ch(0), ch(1), ch(2))
}

/// JSON document with the provenance fields in front.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn json_string<T: Serialize>(hash: &str, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope {
        tool: TOOL,
        config_hash: hash,
        body,
    })
    .expect("report serialises");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, hash: &str, body: &T) -> Result<(), CliError> {
    write_file(path, json_string(hash, body).as_bytes())
}

/// CSV text: a `#` provenance line, the header, then rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(hash: &str, header: &[&str]) -> Self {
        let mut text = format!("# {TOOL} config_hash={hash}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: std::fmt::Display,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            write!(self.text, "{c}").unwrap();
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.text.as_bytes())
    }
}

fn svg_open(hash: &str, width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <!-- {TOOL} config_hash={hash} -->\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn colorbar(svg: &mut String, x: f64, y: f64, h: f64, lo: f64, hi: f64) {
    let n = 64;
    for k in 0..n {
        let t = 1.0 - (k as f64 + 0.5) / n as f64;
        writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{:.2}\" width=\"14\" height=\"{:.2}\" fill=\"{}\"/>",
            y + h * k as f64 / n as f64,
            h / n as f64 + 0.05,
            viridis(t)
        )
        .unwrap();
    }
    let label = |v: f64| format!("{v:.3}");
    writeln!(svg, "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>", x + 18.0, y + 10.0, label(hi)).unwrap();
    writeln!(svg, "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>", x + 18.0, y + h, label(lo)).unwrap();
}

/// Largest number of heatmap cells per axis; finer data is strided.
pub const HEATMAP_MAX_CELLS: usize = 200;

fn stride(n: usize) -> usize {
    n.div_ceil(HEATMAP_MAX_CELLS).max(1)
}

/// Heatmap of `rows[i][j]` with rows running up the vertical axis.
pub fn heatmap_svg(hash: &str, title: &str, x_label: &str, y_label: &str, rows: &[Vec<f64>]) -> String {
    let (sr, sc) = (stride(rows.len()), stride(rows.first().map_or(0, Vec::len)));
    let data: Vec<Vec<f64>> = rows.iter().step_by(sr).map(|r| r.iter().step_by(sc).copied().collect()).collect();
    let finite = data.iter().flatten().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, |a, b| a.min(*b));
    let hi = finite.fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };

    let (plot_w, plot_h, left, top) = (480.0, 360.0, 60.0, 40.0);
    let mut svg = svg_open(hash, left + plot_w + 90.0, top + plot_h + 50.0);
    writeln!(svg, "<text x=\"{left}\" y=\"24\" font-size=\"14\">{title}</text>").unwrap();
    let nr = data.len().max(1);
    let nc = data.first().map_or(1, |r| r.len().max(1));
    let (cw, ch) = (plot_w / nc as f64, plot_h / nr as f64);
    for (i, row) in data.iter().enumerate() {
        let y = top + plot_h - (i + 1) as f64 * ch;
        for (j, v) in row.iter().enumerate() {
            writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                left + j as f64 * cw,
                y,
                cw + 0.05,
                ch + 0.05,
                viridis((v - lo) / span)
            )
            .unwrap();
        }
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>",
        left + plot_w / 2.0,
        top + plot_h + 30.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"20\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{y_label}</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    )
    .unwrap();
    colorbar(&mut svg, left + plot_w + 16.0, top, plot_h, lo, hi);
    svg.push_str("</svg>\n");
    svg
}

/// Cell edges for sorted lattice values: midpoints between neighbours,
/// extended by half a spacing at both ends.
fn edges(values: &[f64]) -> Vec<f64> {
    if values.len() == 1 {
        let v = values[0];
        let half = if v != 0.0 { 0.5 * v.abs() } else { 0.5 };
        return vec![v - half, v + half];
    }
    let n = values.len();
    let mut e = Vec::with_capacity(n + 1);
    e.push(values[0] - 0.5 * (values[1] - values[0]));
    for w in values.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    e.push(values[n - 1] + 0.5 * (values[n - 1] - values[n - 2]));
    e
}

/// One cell of a phase diagram.
#[derive(Debug, Clone, Copy)]
pub struct PhaseCell {
    pub beta: f64,
    pub gamma: f64,
    pub fraction: f64,
}

/// Explosion fractions over the (β, γ) lattice with the curve
/// `γ = frontier(β)` drawn on top.
pub fn phase_svg(hash: &str, betas: &[f64], gammas: &[f64], cells: &[PhaseCell], frontier: impl Fn(f64) -> f64) -> String {
    let (bx, gy) = (edges(betas), edges(gammas));
    let (x0, x1) = (bx[0], *bx.last().unwrap());
    let (y0, y1) = (gy[0], *gy.last().unwrap());
    let (plot_w, plot_h, left, top) = (480.0, 360.0, 60.0, 40.0);
    let sx = |b: f64| left + (b - x0) / (x1 - x0) * plot_w;
    let sy = |g: f64| top + plot_h - (g - y0) / (y1 - y0) * plot_h;

    let mut svg = svg_open(hash, left + plot_w + 90.0, top + plot_h + 50.0);
    writeln!(svg, "<text x=\"{left}\" y=\"24\" font-size=\"14\">explosion fraction</text>").unwrap();
    for c in cells {
        let i = betas.iter().position(|b| *b == c.beta).unwrap();
        let j = gammas.iter().position(|g| *g == c.gamma).unwrap();
        writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"><title>beta={} gamma={} fraction={}</title></rect>",
            sx(bx[i]),
            sy(gy[j + 1]),
            sx(bx[i + 1]) - sx(bx[i]),
            sy(gy[j]) - sy(gy[j + 1]),
            viridis(c.fraction),
            c.beta,
            c.gamma,
            c.fraction
        )
        .unwrap();
    }
    // Frontier, clipped to the plot box.
    writeln!(svg, "<clipPath id=\"plot\"><rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\"/></clipPath>").unwrap();
    let pts: Vec<String> = (0..=200)
        .map(|k| {
            let b = x0 + (x1 - x0) * k as f64 / 200.0;
            format!("{:.2},{:.2}", sx(b), sy(frontier(b)))
        })
        .collect();
    writeln!(
        svg,
        "<polyline id=\"frontier\" clip-path=\"url(#plot)\" fill=\"none\" stroke=\"#E0115F\" stroke-width=\"2\" points=\"{}\"/>",
        pts.join(" ")
    )
    .unwrap();
    writeln!(svg, "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>").unwrap();
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"{anchor}\">{v:.3}</text>",
            sx(v),
            top + plot_h + 14.0
        )
        .unwrap();
    }
    for v in [y0, y1] {
        writeln!(svg, "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>", left - 4.0, sy(v) + 4.0).unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">beta</text>",
        left + plot_w / 2.0,
        top + plot_h + 34.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"20\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">gamma</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    )
    .unwrap();
    colorbar(&mut svg, left + plot_w + 16.0, top, plot_h, 0.0, 1.0);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn viridis_hits_the_stops() {
        for (k, stop) in VIRIDIS.iter().enumerate() {
            assert_eq!(viridis(k as f64 / 8.0), *stop);
        }
        assert_eq!(viridis(-1.0), VIRIDIS[0]);
        assert_eq!(viridis(2.0), VIRIDIS[8]);
        assert_eq!(viridis(f64::NAN), VIRIDIS[0]);
    }

    #[test]
    fn csv_rows_and_provenance() {
        let mut c = Csv::new("abc", &["a", "b"]);
        c.row([1.5, 2.0]);
        assert_eq!(c.as_str(), format!("# {TOOL} config_hash=abc\na,b\n1.5,2\n"));
    }

    #[test]
    fn heatmap_is_downsampled() {
        let rows: Vec<Vec<f64>> = (0..1000).map(|i| (0..256).map(|j| (i * j) as f64).collect()).collect();
        let svg = heatmap_svg("h", "t", "x", "t", &rows);
        let cells = svg.matches("<rect").count();
        // 200 rows by 128 columns, plus the background and 64 colour bar cells.
        assert_eq!(cells, 200 * 128 + 1 + 64);
    }

    #[test]
    fn lattice_edges() {
        assert_eq!(edges(&[1.0, 2.0, 4.0]), vec![0.5, 1.5, 3.0, 5.0]);
        assert_eq!(edges(&[2.0]), vec![1.0, 3.0]);
    }
}
