//! Static SVG overlay drawn from a report and its height map.
//!
//! Layers, bottom to top: height heat map, bump ellipses at 1 and 2 sigma,
//! wrinkle segments colored by `p` (rejected ones dashed), and numbered
//! plan arrows. Coordinates are pixels of the height grid. Only the
//! background layer is drawn when the report is empty.

use std::fmt::Write as _;

use crate::gridio::FloatGrid;
use crate::report::Report;

/// Heat-map cells are blocks of this many pixels on the longer side.
const HEAT_CELLS: usize = 96;

fn color(t: f64) -> String {
    // blue -> yellow -> red
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = t * 2.0;
        (s, s, 1.0 - s)
    } else {
        let s = (t - 0.5) * 2.0;
        (1.0, 1.0 - s, 0.0)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8
    )
}

fn gray(t: f64) -> String {
    let v = (40.0 + 200.0 * t.clamp(0.0, 1.0)).round() as u8;
    format!("#{v:02x}{v:02x}{v:02x}")
}

pub fn render_svg(report: &Report, height: &FloatGrid) -> String {
    let (w, h) = (height.width(), height.height());
    let tf = height.transform();
    let px = |p: [f64; 2]| tf.world_to_pixel(p[0], p[1]);
    let cell = height.cell_size();
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="-0.5 -0.5 {w} {h}">"#
    );
    let _ = writeln!(
        s,
        r#"<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="black"/></marker></defs>"#
    );

    let block = w.max(h).div_ceil(HEAT_CELLS).max(1);
    let (lo, hi) = height
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let _ = writeln!(s, r#"<g id="background">"#);
    for v0 in (0..h).step_by(block) {
        for u0 in (0..w).step_by(block) {
            let (bw, bh) = (block.min(w - u0), block.min(h - v0));
            let mut sum = 0.0;
            for v in v0..v0 + bh {
                for u in u0..u0 + bw {
                    sum += height.get(u, v);
                }
            }
            let mean = sum / (bw * bh) as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{bw}" height="{bh}" fill="{}"/>"#,
                u0 as f64 - 0.5,
                v0 as f64 - 0.5,
                gray((mean - lo) / span)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    if !report.bumps.is_empty() {
        let _ = writeln!(s, r##"<g id="bumps" fill="none" stroke="#00a0ff">"##);
        for b in &report.bumps {
            let (cx, cy) = px(b.center);
            let deg = b.orientation.to_degrees();
            for k in [1.0, 2.0] {
                let _ = writeln!(
                    s,
                    r#"<ellipse cx="{cx:.3}" cy="{cy:.3}" rx="{:.3}" ry="{:.3}" transform="rotate({deg:.3} {cx:.3} {cy:.3})" stroke-width="{}"><title>bump {} ({k} sigma)</title></ellipse>"#,
                    k * b.d1 / cell,
                    k * b.d2 / cell,
                    if k == 1.0 { 1.5 } else { 0.75 },
                    b.id
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }

    if !report.wrinkles.is_empty() {
        let _ = writeln!(s, r#"<g id="wrinkles" stroke-width="2">"#);
        for fw in &report.wrinkles {
            let [a, b] = fw.discontinuity.endpoints;
            let ((x1, y1), (x2, y2)) = (px(a), px(b));
            let dash = if fw.accepted {
                ""
            } else {
                r#" stroke-dasharray="4 3""#
            };
            let _ = writeln!(
                s,
                r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{}"{dash}><title>wrinkle {} p={:.3} q={:.3} r={:.3}</title></line>"#,
                color(fw.p),
                fw.discontinuity.id,
                fw.p,
                fw.q,
                fw.r
            );
        }
        let _ = writeln!(s, "</g>");
    }

    if !report.plan.actions.is_empty() {
        let _ = writeln!(s, r#"<g id="plan" stroke="black" stroke-width="1.5">"#);
        let mut prev = px(report.plan.home);
        for (k, a) in report.plan.actions.iter().enumerate() {
            let (sx, sy) = px(a.start);
            let (ex, ey) = px(a.end);
            let _ = writeln!(
                s,
                r#"<line class="transit" x1="{:.3}" y1="{:.3}" x2="{sx:.3}" y2="{sy:.3}" stroke-dasharray="2 2" stroke-width="0.75"/>"#,
                prev.0, prev.1
            );
            // static actions get a short arrow along the head direction
            let (ex, ey) = if a.start == a.end {
                let (dy, dx) = a.align_angle.sin_cos();
                (sx + 8.0 * dx, sy + 8.0 * dy)
            } else {
                (ex, ey)
            };
            let _ = writeln!(
                s,
                r#"<line class="action" x1="{sx:.3}" y1="{sy:.3}" x2="{ex:.3}" y2="{ey:.3}" marker-end="url(#arrow)"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{:.3}" font-size="12" fill="black" stroke="none">{}</text>"#,
                sx + 4.0,
                sy - 4.0,
                k + 1
            );
            prev = px(a.end);
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
