//! Minimal SVG heat maps: time in hours across, height up, one cell per
//! (downsampled) grid node, a fixed viridis-like palette and a colorbar.

use std::fmt::Write as _;

use bpinn::refsolver::FieldGrid;

/// Viridis anchor colors, evenly spaced over [0, 1].
const PALETTE: [(u8, u8, u8); 6] =
    [(68, 1, 84), (65, 68, 135), (42, 120, 142), (34, 168, 132), (122, 209, 81), (253, 231, 37)];

const MAX_COLS: usize = 240;
const MAX_ROWS: usize = 60;
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 300.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 36.0;
const BAR: f64 = 16.0;

/// Palette color at `s` in [0, 1]; values outside are clamped.
pub fn color(s: f64) -> String {
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
    let pos = s * (PALETTE.len() - 1) as f64;
    let i = (pos.floor() as usize).min(PALETTE.len() - 2);
    let f = pos - i as f64;
    let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    let (a, b) = (PALETTE[i], PALETTE[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn picks(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * (n - 1) / (max - 1)).collect()
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn label(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders `grid` with `title`; `unit` labels the colorbar.
pub fn heatmap(grid: &FieldGrid, title: &str, unit: &str) -> String {
    let cols = picks(grid.nt(), MAX_COLS);
    let rows = picks(grid.nx(), MAX_ROWS);
    let (lo, hi) = grid
        .values()
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (cw, rh) = (WIDTH / cols.len() as f64, HEIGHT / rows.len() as f64);
    let total_w = LEFT + WIDTH + 110.0;
    let total_h = TOP + HEIGHT + 56.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, LEFT + WIDTH / 2.0, escape(title));
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for (r, &ix) in rows.iter().enumerate() {
        // height increases upwards
        let y = TOP + HEIGHT - (r + 1) as f64 * rh;
        for (c, &it) in cols.iter().enumerate() {
            let x = LEFT + c as f64 * cw;
            let fill = color((grid.get(it, ix) - lo) / span);
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#, cw + 0.05, rh + 0.05);
        }
    }
    let _ = writeln!(s, "</g>");

    let (t0, t1) = (grid.t[0] / 3600.0, grid.t[grid.nt() - 1] / 3600.0);
    let (x0, x1) = (grid.x[0], grid.x[grid.nx() - 1]);
    let axis_y = TOP + HEIGHT;
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{WIDTH}" height="{HEIGHT}" fill="none" stroke="black"/>"#);
    for v in ticks(t0, t1, 7) {
        let px = LEFT + if t1 > t0 { (v - t0) / (t1 - t0) * WIDTH } else { 0.0 };
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{axis_y}" x2="{px:.2}" y2="{}" stroke="black"/>"#, axis_y + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, axis_y + 18.0, label(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">time [h]</text>"#, LEFT + WIDTH / 2.0, axis_y + 36.0);
    for v in ticks(x0, x1, 5) {
        let py = axis_y - if x1 > x0 { (v - x0) / (x1 - x0) * HEIGHT } else { 0.0 };
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, label(v));
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">height [m]</text>"#,
        TOP + HEIGHT / 2.0,
        TOP + HEIGHT / 2.0
    );

    let bx = LEFT + WIDTH + 24.0;
    let steps = 50;
    for i in 0..steps {
        let y = TOP + HEIGHT - (i + 1) as f64 * HEIGHT / steps as f64;
        let fill = color((i as f64 + 0.5) / steps as f64);
        let _ = writeln!(s, r#"<rect x="{bx}" y="{y:.2}" width="{BAR}" height="{:.2}" fill="{fill}"/>"#, HEIGHT / steps as f64 + 0.05);
    }
    let _ = writeln!(s, r#"<rect x="{bx}" y="{TOP}" width="{BAR}" height="{HEIGHT}" fill="none" stroke="black"/>"#);
    for v in ticks(lo, lo + span, 5) {
        let py = axis_y - (v - lo) / span * HEIGHT;
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}">{}</text>"#, bx + BAR + 4.0, py + 4.0, label(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, bx + BAR / 2.0, TOP - 8.0, escape(unit));
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
