//! Minimal SVG heatmap emitter: one rect per (possibly pooled) cell.

use std::fmt::Write as _;

use convpow::lattice::BoxDomain;

use crate::viridis::VIRIDIS;

/// Cells per axis above which blocks are max-pooled.
const MAX_CELLS: usize = 400;
const CANVAS: f64 = 640.0;
const MARGIN: f64 = 40.0;

/// Heatmap of nonnegative `values` laid out row-major over a 2D `window`,
/// with the first coordinate horizontal and the second increasing upward.
pub fn heatmap(window: &BoxDomain, values: &[f64], title: &str) -> String {
    assert_eq!(window.dim(), 2, "heatmaps are two-dimensional");
    let shape = window.shape();
    let (nx, ny) = (shape[0], shape[1]);
    let block = nx.max(ny).div_ceil(MAX_CELLS).max(1);
    let (bx, by) = (nx.div_ceil(block), ny.div_ceil(block));
    let mut pooled = vec![0.0f64; bx * by];
    for i in 0..nx {
        for j in 0..ny {
            let cell = &mut pooled[(i / block) * by + j / block];
            *cell = cell.max(values[i * ny + j]);
        }
    }
    let vmax = pooled.iter().copied().fold(0.0, f64::max);
    let cell = CANVAS / bx.max(by) as f64;
    let (w, h) = (bx as f64 * cell, by as f64 * cell);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" shape-rendering="crispEdges">"#,
        w + 2.0 * MARGIN,
        h + 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="14">{}</text>"#,
        MARGIN - 14.0,
        escape(title)
    );
    for i in 0..bx {
        for j in 0..by {
            let v = pooled[i * by + j];
            let idx = if vmax > 0.0 {
                ((v / vmax) * 255.0).round() as usize
            } else {
                0
            };
            let [r, g, b] = VIRIDIS[idx.min(255)];
            let _ = writeln!(
                s,
                r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                MARGIN + i as f64 * cell,
                MARGIN + (by - 1 - j) as f64 * cell,
                cell,
                cell
            );
        }
    }
    let (lo, hi) = (window.lo(), window.hi());
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="12">x1 in [{}, {}], x2 in [{}, {}], max {:.3e}</text>"#,
        h + MARGIN + 24.0,
        lo[0],
        hi[0],
        lo[1],
        hi[1],
        vmax
    );
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_rect_per_cell_and_peak_is_brightest() {
        let w = BoxDomain::new(vec![0, 0], vec![2, 1]).unwrap();
        let vals = [0.0, 0.5, 1.0, 0.25, 0.0, 0.0];
        let svg = heatmap(&w, &vals, "t");
        assert_eq!(svg.matches("<rect").count(), 6);
        assert!(svg.contains("#fde725"));
        assert!(svg.contains("#440154"));
    }

    #[test]
    fn large_windows_are_pooled() {
        let w = BoxDomain::cube(2, -500, 500).unwrap();
        let vals = vec![1.0; 1001 * 1001];
        let svg = heatmap(&w, &vals, "t");
        assert!(svg.matches("<rect").count() <= MAX_CELLS * MAX_CELLS);
    }
}
