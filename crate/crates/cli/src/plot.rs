//! Minimal SVG and PGM output: grayscale distance heatmaps and chart scatter
//! plots.

use std::fmt::Write;

use sigchart::distances::PairwiseMatrix;

/// Heatmap cells per side in SVG output; larger matrices are block-averaged.
pub const HEATMAP_CELLS: usize = 128;

/// Block means of `m` on a grid of at most `cells × cells`, scaled by the
/// largest block so values lie in `[0, 1]`.
fn downsample(m: &PairwiseMatrix, cells: usize) -> (usize, Vec<f64>) {
    let n = m.size();
    let side = n.min(cells).max(1);
    let bounds: Vec<usize> = (0..=side).map(|k| k * n / side).collect();
    let mut out = vec![0.0; side * side];
    for a in 0..side {
        for b in 0..side {
            let (r0, r1, c0, c1) = (bounds[a], bounds[a + 1], bounds[b], bounds[b + 1]);
            let sum: f64 = (r0..r1).map(|i| m.row(i)[c0..c1].iter().sum::<f64>()).sum();
            out[a * side + b] = sum / ((r1 - r0) * (c1 - c0)).max(1) as f64;
        }
    }
    let max = out.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        out.iter_mut().for_each(|v| *v /= max);
    }
    (side, out)
}

/// Grayscale heatmap; black is distance 0, white the largest distance.
pub fn heatmap_svg(m: &PairwiseMatrix, title: &str) -> String {
    let (side, cells) = downsample(m, HEATMAP_CELLS);
    let px = 4;
    let size = side * px;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#,
        w = size,
        h = size + 24
    );
    let _ = writeln!(s, r#"<text x="4" y="16" font-family="sans-serif" font-size="13">{}</text>"#, escape(title));
    for a in 0..side {
        for b in 0..side {
            let g = (cells[a * side + b] * 255.0).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{px}" height="{px}" fill="rgb({g},{g},{g})"/>"#,
                b * px,
                24 + a * px
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Full-resolution 8-bit binary PGM, scaled by the matrix maximum.
pub fn heatmap_pgm(m: &PairwiseMatrix) -> Vec<u8> {
    let n = m.size();
    let max = m.max();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(m.data().iter().map(|&v| if max > 0.0 { (v / max * 255.0).round() as u8 } else { 0 }));
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Hue from 0 to 1 as an RGB triple (full saturation, medium value).
fn hue(t: f64) -> (u8, u8, u8) {
    let h = (t.clamp(0.0, 1.0) * 300.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        _ => (x, 0.0, 1.0),
    };
    let c = |v: f64| (v * 220.0).round() as u8;
    (c(r), c(g), c(b))
}

/// Scatter plot of 2-D points. `color` in `[0, 1]` per point selects a hue;
/// points are black without it.
pub fn scatter_svg(points: &[f64], color: Option<&[f64]>, title: &str) -> String {
    let n = points.len() / 2;
    let (w, h, margin) = (480.0, 480.0, 30.0);
    let xs = points.iter().step_by(2);
    let ys = points.iter().skip(1).step_by(2);
    let bounds = |it: &mut dyn Iterator<Item = &f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = bounds(&mut xs.clone());
    let (y0, y1) = bounds(&mut ys.clone());
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let sx = |x: f64| margin + (x - x0) / span * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / span * (h - 2.0 * margin);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="6" y="18" font-family="sans-serif" font-size="13">{}</text>"#, escape(title));
    for i in 0..n {
        let (r, g, b) = color.map_or((0, 0, 0), |c| hue(c[i]));
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="rgb({r},{g},{b})"/>"#,
            sx(points[2 * i]),
            sy(points[2 * i + 1])
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use sigchart::distances::{euclidean_matrix, MetricTag};

    #[test]
    fn heatmap_downsamples_large_matrices() {
        let coords: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let m = euclidean_matrix(&coords, 1, MetricTag::TrueLocation).unwrap();
        let (side, cells) = downsample(&m, 128);
        assert_eq!(side, 128);
        assert!(cells.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(cells[127], 1.0);
        let svg = heatmap_svg(&m, "x");
        assert_eq!(svg.matches("<rect").count(), 128 * 128);
    }

    #[test]
    fn pgm_header_and_size() {
        let m = euclidean_matrix(&[0.0, 1.0, 3.0], 1, MetricTag::TrueLocation).unwrap();
        let p = heatmap_pgm(&m);
        assert!(p.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(p.len(), 11 + 9);
        assert_eq!(*p.last().unwrap(), 0);
        assert_eq!(p[11 + 2], 255);
    }

    #[test]
    fn scatter_has_one_marker_per_point() {
        let svg = scatter_svg(&[0.0, 0.0, 1.0, 2.0, -1.0, 0.5], Some(&[0.0, 0.5, 1.0]), "a<b");
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("a&lt;b"));
    }
}
