//! Self-contained SVG renderings of the analysis artifacts. Plain text,
//! deterministic, diffable.

use crate::depth::DepthReport;
use crate::grid::FunctionalDataset;
use crate::iwt::IntervalTestResult;
use crate::multivar::{Bicluster, Dendrogram};
use nalgebra::DMatrix;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Canvas {
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    fn new(width: f64, height: f64) -> Self {
        Canvas {
            width,
            height,
            body: String::new(),
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, dash: &str) {
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(" stroke-dasharray=\"{dash}\"")
        };
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width}\"{dash_attr}/>\n"
        ));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, dash: &str) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(" stroke-dasharray=\"{dash}\"")
        };
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"{dash_attr}/>\n",
            coords.join(" ")
        ));
    }

    fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, opacity: f64) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        self.body.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{fill}\" fill-opacity=\"{opacity}\" stroke=\"none\"/>\n",
            coords.join(" ")
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let stroke_attr = if stroke.is_empty() {
            String::new()
        } else {
            format!(" stroke=\"{stroke}\" stroke-width=\"1.5\"")
        };
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"{stroke_attr}/>\n"
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{escaped}</text>\n"
        ));
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() || lo == hi {
        (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Diverging blue-white-red scale for values in [-1, 1].
fn diverging_color(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v < 0.0 {
        let t = -v;
        (
            (255.0 * (1.0 - t) + 33.0 * t) as u8,
            (255.0 * (1.0 - t) + 102.0 * t) as u8,
            (255.0 * (1.0 - t) + 172.0 * t) as u8,
        )
    } else {
        let t = v;
        (
            (255.0 * (1.0 - t) + 178.0 * t) as u8,
            (255.0 * (1.0 - t) + 24.0 * t) as u8,
            (255.0 * (1.0 - t) + 43.0 * t) as u8,
        )
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Simple multi-curve line chart over day indices.
pub fn line_chart(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let width = 720.0;
    let height = 420.0;
    let (ml, mr, mt, mb) = (55.0, 15.0, 30.0, 35.0);
    let mut c = Canvas::new(width, height);
    let t_len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(2);
    let (lo, hi) = data_range(series.iter().flat_map(|(_, v)| v.iter().cloned()));
    let sx = |t: f64| ml + t / (t_len.max(2) - 1) as f64 * (width - ml - mr);
    let sy = |v: f64| height - mb - (v - lo) / (hi - lo) * (height - mt - mb);
    c.text(width / 2.0, 18.0, 14.0, "middle", title);
    // axes
    c.line(ml, mt, ml, height - mb, "#333", 1.0, "");
    c.line(ml, height - mb, width - mr, height - mb, "#333", 1.0, "");
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = sy(v);
        c.line(ml - 3.0, y, ml, y, "#333", 1.0, "");
        c.text(ml - 6.0, y + 3.0, 9.0, "end", &format!("{v:.2}"));
        let t = (t_len - 1) as f64 * k as f64 / 4.0;
        let x = sx(t);
        c.line(x, height - mb, x, height - mb + 3.0, "#333", 1.0, "");
        c.text(x, height - mb + 14.0, 9.0, "middle", &format!("{t:.0}"));
    }
    c.text(width / 2.0, height - 6.0, 10.0, "middle", "day");
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .map(|(t, v)| (sx(t as f64), sy(*v)))
            .collect();
        c.polyline(&pts, color, 1.3, "");
        if series.len() <= 10 {
            let y = mt + 14.0 * k as f64 + 10.0;
            c.line(width - mr - 90.0, y - 3.0, width - mr - 70.0, y - 3.0, color, 2.0, "");
            c.text(width - mr - 66.0, y, 9.0, "start", name);
        }
    }
    c.finish()
}

/// Location-by-scale heatmap of adjusted p-values (pyramid layout: scale 1
/// at the bottom row, the full scale on top).
pub fn iwt_pyramid(result: &IntervalTestResult, level: f64) -> String {
    let t = result.len_t();
    let cell = (700.0 / t as f64).min(10.0);
    let ml = 50.0;
    let mt = 30.0;
    let width = ml + cell * t as f64 + 20.0;
    let height = mt + cell * t as f64 + 50.0;
    let mut c = Canvas::new(width, height);
    c.text(width / 2.0, 18.0, 13.0, "middle", "adjusted p-values by location and scale");
    for w in 1..=t {
        let y = mt + (t - w) as f64 * cell;
        for tt in 0..t {
            let p = result.adjusted_p(tt, w);
            // dark red below the level, fading to white at p = 1
            let fill = if p < level {
                "#67001f".to_string()
            } else {
                let shade = (p.min(1.0) * 255.0) as u8;
                format!("#ff{shade:02x}{shade:02x}")
            };
            c.rect(ml + tt as f64 * cell, y, cell, cell, &fill, "");
        }
    }
    c.text(ml - 8.0, mt + 8.0, 9.0, "end", &format!("{t}"));
    c.text(ml - 8.0, mt + t as f64 * cell, 9.0, "end", "1");
    c.text(14.0, mt + t as f64 * cell / 2.0, 10.0, "middle", "scale");
    c.text(
        ml + t as f64 * cell / 2.0,
        mt + t as f64 * cell + 16.0,
        10.0,
        "middle",
        "day",
    );
    c.text(
        ml,
        height - 10.0,
        9.0,
        "start",
        &format!("dark red: adjusted p < {level}"),
    );
    c.finish()
}

/// Functional boxplot: median, 50% envelope, fences, outliers dashed red.
pub fn functional_boxplot(report: &DepthReport, data: &FunctionalDataset) -> String {
    let width = 720.0;
    let height = 440.0;
    let (ml, mr, mt, mb) = (55.0, 15.0, 30.0, 35.0);
    let t_len = data.len_t();
    let (lo, hi) = data_range(
        data.values()
            .iter()
            .cloned()
            .chain(report.fence_lower.iter().cloned())
            .chain(report.fence_upper.iter().cloned()),
    );
    let sx = |t: f64| ml + t / (t_len - 1) as f64 * (width - ml - mr);
    let sy = |v: f64| height - mb - (v - lo) / (hi - lo) * (height - mt - mb);
    let mut c = Canvas::new(width, height);
    c.text(width / 2.0, 18.0, 14.0, "middle", "functional boxplot");
    // central envelope as a band
    let mut band: Vec<(f64, f64)> = (0..t_len)
        .map(|t| (sx(t as f64), sy(report.central_upper[t])))
        .collect();
    band.extend(
        (0..t_len)
            .rev()
            .map(|t| (sx(t as f64), sy(report.central_lower[t]))),
    );
    c.polygon(&band, "#b0b0b0", 0.55);
    // fences
    let fence_u: Vec<(f64, f64)> = (0..t_len)
        .map(|t| (sx(t as f64), sy(report.fence_upper[t])))
        .collect();
    let fence_l: Vec<(f64, f64)> = (0..t_len)
        .map(|t| (sx(t as f64), sy(report.fence_lower[t])))
        .collect();
    c.polyline(&fence_u, "#555", 1.0, "5,4");
    c.polyline(&fence_l, "#555", 1.0, "5,4");
    // outliers dashed red, others thin gray, median black
    for i in 0..data.n() {
        let pts: Vec<(f64, f64)> = (0..t_len)
            .map(|t| (sx(t as f64), sy(data.values()[(i, t)])))
            .collect();
        if report.outlier_indices.contains(&i) {
            c.polyline(&pts, "#d62728", 1.4, "6,3");
        } else if i != report.median_index {
            c.polyline(&pts, "#999", 0.7, "");
        }
    }
    let med: Vec<(f64, f64)> = (0..t_len)
        .map(|t| (sx(t as f64), sy(data.values()[(report.median_index, t)])))
        .collect();
    c.polyline(&med, "#000", 2.0, "");
    c.text(
        ml,
        height - 8.0,
        9.0,
        "start",
        &format!(
            "median: {}; outliers: {}",
            report.median_name(),
            if report.outlier_indices.is_empty() {
                "none".to_string()
            } else {
                report.outlier_names().join(", ")
            }
        ),
    );
    c.finish()
}

fn leaf_order(d: &Dendrogram) -> Vec<usize> {
    let n = d.labels.len();
    let mut children: Vec<Option<(usize, usize)>> = vec![None; n + d.merges.len()];
    for (k, m) in d.merges.iter().enumerate() {
        children[n + k] = Some((m.left, m.right));
    }
    fn collect(node: usize, children: &[Option<(usize, usize)>], out: &mut Vec<usize>) {
        match children[node] {
            None => out.push(node),
            Some((l, r)) => {
                collect(l, children, out);
                collect(r, children, out);
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    collect(n + d.merges.len() - 1, &children, &mut out);
    out
}

/// Heatmap of the standardized matrix with marginal dendrograms; bicluster
/// cell borders are color-coded.
pub fn clustered_heatmap(
    std_matrix: &DMatrix<f64>,
    row_labels: &[String],
    col_labels: &[String],
    row_dendro: &Dendrogram,
    col_dendro: &Dendrogram,
    biclusters: &[Bicluster],
) -> String {
    let n = std_matrix.nrows();
    let p = std_matrix.ncols();
    let cell = 22.0;
    let (dend_w, dend_h) = (90.0, 90.0);
    let label_w = 150.0;
    let label_h = 130.0;
    let ml = dend_w + 10.0;
    let mt = dend_h + 10.0;
    let width = ml + p as f64 * cell + label_w;
    let height = mt + n as f64 * cell + label_h;
    let row_order = leaf_order(row_dendro);
    let col_order = leaf_order(col_dendro);
    let row_pos: Vec<usize> = {
        let mut pos = vec![0; n];
        for (k, &i) in row_order.iter().enumerate() {
            pos[i] = k;
        }
        pos
    };
    let col_pos: Vec<usize> = {
        let mut pos = vec![0; p];
        for (k, &j) in col_order.iter().enumerate() {
            pos[j] = k;
        }
        pos
    };
    let mut c = Canvas::new(width, height);
    let amax = std_matrix.amax().max(1e-12);
    for i in 0..n {
        for j in 0..p {
            let x = ml + col_pos[j] as f64 * cell;
            let y = mt + row_pos[i] as f64 * cell;
            c.rect(
                x,
                y,
                cell,
                cell,
                &diverging_color(std_matrix[(i, j)] / amax),
                "",
            );
        }
    }
    for (k, b) in biclusters.iter().enumerate() {
        let color = PALETTE[(k + 1) % PALETTE.len()];
        for &i in &b.rows {
            for &j in &b.cols {
                let x = ml + col_pos[j] as f64 * cell;
                let y = mt + row_pos[i] as f64 * cell;
                c.rect(x + 1.0, y + 1.0, cell - 2.0, cell - 2.0, "none", color);
            }
        }
    }
    for (k, &i) in row_order.iter().enumerate() {
        c.text(
            ml + p as f64 * cell + 6.0,
            mt + k as f64 * cell + cell * 0.7,
            10.0,
            "start",
            &row_labels[i],
        );
    }
    for (k, &j) in col_order.iter().enumerate() {
        let x = ml + k as f64 * cell + cell * 0.7;
        let y = mt + n as f64 * cell + 8.0;
        c.body.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"start\" transform=\"rotate(60 {x:.1} {y:.1})\">{}</text>\n",
            col_labels[j].replace('&', "&amp;")
        ));
    }
    // dendrograms: rows on the left, columns on top
    draw_dendrogram(&mut c, row_dendro, &row_pos, ml - 10.0, mt, cell, true);
    draw_dendrogram(&mut c, col_dendro, &col_pos, mt - 10.0, ml, cell, false);
    c.finish()
}

fn draw_dendrogram(
    c: &mut Canvas,
    d: &Dendrogram,
    leaf_pos: &[usize],
    base: f64,
    offset: f64,
    cell: f64,
    horizontal: bool,
) {
    let n = d.labels.len();
    let max_h = d
        .merges
        .last()
        .map(|m| m.height.max(1e-9))
        .unwrap_or(1.0);
    let scale = 80.0 / max_h;
    // position of each node along the leaf axis and its height coordinate
    let mut axis = vec![0.0f64; n + d.merges.len()];
    let mut hcoord = vec![0.0f64; n + d.merges.len()];
    for i in 0..n {
        axis[i] = offset + leaf_pos[i] as f64 * cell + cell / 2.0;
        hcoord[i] = base;
    }
    for (k, m) in d.merges.iter().enumerate() {
        let node = n + k;
        axis[node] = 0.5 * (axis[m.left] + axis[m.right]);
        hcoord[node] = base - m.height * scale;
        let (a_l, a_r) = (axis[m.left], axis[m.right]);
        let (h_l, h_r) = (hcoord[m.left], hcoord[m.right]);
        let h_new = hcoord[node];
        if horizontal {
            // rows: height axis runs leftwards
            c.line(h_l, a_l, h_new, a_l, "#333", 1.0, "");
            c.line(h_r, a_r, h_new, a_r, "#333", 1.0, "");
            c.line(h_new, a_l, h_new, a_r, "#333", 1.0, "");
        } else {
            c.line(a_l, h_l, a_l, h_new, "#333", 1.0, "");
            c.line(a_r, h_r, a_r, h_new, "#333", 1.0, "");
            c.line(a_l, h_new, a_r, h_new, "#333", 1.0, "");
        }
    }
}

/// Filled heatmap of a coefficient surface with its zero contour.
pub fn surface_contour(surface: &DMatrix<f64>, title: &str) -> String {
    let s_len = surface.nrows();
    let t_len = surface.ncols();
    let cell_w = 560.0 / t_len as f64;
    let cell_h = 560.0 / s_len as f64;
    let (ml, mt) = (60.0, 40.0);
    let width = ml + 560.0 + 30.0;
    let height = mt + 560.0 + 50.0;
    let mut c = Canvas::new(width, height);
    c.text(width / 2.0, 20.0, 13.0, "middle", title);
    let amax = surface.amax().max(1e-12);
    for s in 0..s_len {
        for t in 0..t_len {
            c.rect(
                ml + t as f64 * cell_w,
                mt + (s_len - 1 - s) as f64 * cell_h,
                cell_w + 0.5,
                cell_h + 0.5,
                &diverging_color(surface[(s, t)] / amax),
                "",
            );
        }
    }
    // zero contour by marching through cell edges
    for s in 0..s_len.saturating_sub(1) {
        for t in 0..t_len.saturating_sub(1) {
            let v00 = surface[(s, t)];
            let v01 = surface[(s, t + 1)];
            let v10 = surface[(s + 1, t)];
            let x0 = ml + t as f64 * cell_w + cell_w / 2.0;
            let y0 = mt + (s_len - 1 - s) as f64 * cell_h + cell_h / 2.0;
            if v00 * v01 < 0.0 {
                let frac = v00 / (v00 - v01);
                let x = x0 + frac * cell_w;
                c.line(x, y0 - 2.5, x, y0 + 2.5, "#000", 1.2, "");
            }
            if v00 * v10 < 0.0 {
                let frac = v00 / (v00 - v10);
                let y = y0 - frac * cell_h;
                c.line(x0 - 2.5, y, x0 + 2.5, y, "#000", 1.2, "");
            }
        }
    }
    c.text(ml + 280.0, height - 14.0, 11.0, "middle", "t (response day)");
    c.text(18.0, mt + 280.0, 11.0, "middle", "s (predictor day)");
    c.finish()
}

/// Isometric wireframe of a coefficient surface.
pub fn surface_isometric(surface: &DMatrix<f64>, title: &str) -> String {
    let s_len = surface.nrows();
    let t_len = surface.ncols();
    let width = 700.0;
    let height = 480.0;
    let mut c = Canvas::new(width, height);
    c.text(width / 2.0, 20.0, 13.0, "middle", title);
    let amax = surface.amax().max(1e-12);
    let proj = |s: f64, t: f64, z: f64| -> (f64, f64) {
        let sn = s / (s_len - 1).max(1) as f64;
        let tn = t / (t_len - 1).max(1) as f64;
        let zn = z / amax;
        let x = 120.0 + 440.0 * (0.5 * (tn - sn) + 0.5);
        let y = 300.0 - 80.0 * zn + 130.0 * (0.5 * (tn + sn)) - 65.0;
        (x, y)
    };
    let step_s = (s_len / 22).max(1);
    let step_t = (t_len / 22).max(1);
    let mut s = 0;
    while s < s_len {
        let pts: Vec<(f64, f64)> = (0..t_len)
            .map(|t| proj(s as f64, t as f64, surface[(s, t)]))
            .collect();
        c.polyline(&pts, "#1f77b4", 0.8, "");
        s += step_s;
    }
    let mut t = 0;
    while t < t_len {
        let pts: Vec<(f64, f64)> = (0..s_len)
            .map(|s| proj(s as f64, t as f64, surface[(s, t)]))
            .collect();
        c.polyline(&pts, "#d62728", 0.8, "");
        t += step_t;
    }
    c.finish()
}

/// Horizontal bar chart (used for residual summaries and R^2 overviews).
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let bar_h = 18.0;
    let ml = 170.0;
    let mt = 36.0;
    let width = 700.0;
    let height = mt + labels.len() as f64 * (bar_h + 6.0) + 20.0;
    let (lo, hi) = data_range(values.iter().cloned().chain(std::iter::once(0.0)));
    let sx = |v: f64| ml + (v - lo) / (hi - lo) * (width - ml - 30.0);
    let mut c = Canvas::new(width, height);
    c.text(width / 2.0, 20.0, 13.0, "middle", title);
    let zero_x = sx(0.0);
    c.line(zero_x, mt - 4.0, zero_x, height - 14.0, "#333", 1.0, "");
    for (k, (label, v)) in labels.iter().zip(values).enumerate() {
        let y = mt + k as f64 * (bar_h + 6.0);
        let x = sx(*v);
        let (bx, bw) = if *v >= 0.0 {
            (zero_x, x - zero_x)
        } else {
            (x, zero_x - x)
        };
        let fill = if *v >= 0.0 { "#d62728" } else { "#1f77b4" };
        c.rect(bx, y, bw.max(0.5), bar_h, fill, "");
        c.text(ml - 6.0, y + bar_h * 0.75, 10.0, "end", label);
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_valid_svg() {
        let s = line_chart(
            "demo",
            &[
                ("a".to_string(), vec![0.0, 1.0, 0.5, 2.0]),
                ("b".to_string(), vec![1.0, 0.0, 1.5, 0.5]),
            ],
        );
        assert!(s.starts_with("<svg"));
        assert!(s.ends_with("</svg>\n"));
        assert!(s.contains("polyline"));
    }

    #[test]
    fn diverging_scale_endpoints() {
        assert_eq!(diverging_color(0.0), "#ffffff");
        assert_eq!(diverging_color(1.0), "#b2182b");
        assert_eq!(diverging_color(-1.0), "#2166ac");
    }

    #[test]
    fn bar_chart_handles_mixed_signs() {
        let s = bar_chart(
            "residuals",
            &["x".to_string(), "y".to_string()],
            &[0.5, -0.25],
        );
        assert!(s.contains("rect"));
    }
}
