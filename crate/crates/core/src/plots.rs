//! Self-contained SVG renderings of experiment results.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title)).unwrap();
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, y_lo: f64, y_hi: f64, y_label: &str) {
    writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD).unwrap();
    writeln!(s, r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - PAD, W - PAD / 2.0).unwrap();
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = H - PAD - (H - 2.0 * PAD) * k as f64 / 4.0;
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, PAD - 4.0, y + 4.0, fmt_tick(v)).unwrap();
    }
    writeln!(
        s,
        r#"<text x="12" y="{0}" transform="rotate(-90 12 {0})" text-anchor="middle">{1}</text>"#,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One box (quartiles, whiskers at min/max) per named group on a shared axis.
pub fn box_plot_svg(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let all: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().copied()).filter(|v| v.is_finite()).collect();
    // values are scores in [0, 1]; the axis starts a little below the minimum
    let min = all.iter().copied().fold(1.0, f64::min);
    let (lo, hi) = ((min - 0.05).max(0.0), 1.0);
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let mut s = header(title);
    axes(&mut s, lo, hi, y_label);
    let slot = (W - 1.5 * PAD) / groups.len().max(1) as f64;
    for (k, (name, values)) in groups.iter().enumerate() {
        let cx = PAD + slot * (k as f64 + 0.5);
        let mut v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        writeln!(s, r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"#, H - PAD + 16.0, escape(name)).unwrap();
        if v.is_empty() {
            continue;
        }
        let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let half = (slot * 0.25).min(40.0);
        writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(v[0]),
            y(v[v.len() - 1])
        )
        .unwrap();
        writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(0.5)
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{:.1}" y1="{2:.1}" x2="{:.1}" y2="{2:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y(q2)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Points `(x, y, is_real)`; real in blue, fake in red.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64, bool)]) -> String {
    let range = |f: fn(&(f64, f64, bool)) -> f64| {
        let hi = points.iter().map(f).fold(0.0f64, f64::max);
        let lo = points.iter().map(f).fold(0.0f64, f64::min);
        (lo, if hi > lo { hi * 1.05 } else { lo + 1.0 })
    };
    let (x_lo, x_hi) = range(|p| p.0);
    let (y_lo, y_hi) = range(|p| p.1);
    let mut s = header(title);
    axes(&mut s, y_lo, y_hi, y_label);
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label)).unwrap();
    writeln!(s, r#"<text x="{PAD}" y="{}">{}</text>"#, H - PAD + 14.0, fmt_tick(x_lo)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - PAD / 2.0, H - PAD + 14.0, fmt_tick(x_hi)).unwrap();
    for &(x, y, real) in points {
        let px = PAD + (x - x_lo) / (x_hi - x_lo) * (W - 1.5 * PAD);
        let py = H - PAD - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * PAD);
        let color = if real { "#1f77b4" } else { "#d62728" };
        writeln!(s, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3" fill="{color}" fill-opacity="0.7"/>"#).unwrap();
    }
    writeln!(s, r##"<text x="{}" y="34" fill="#1f77b4">real</text>"##, W - 90.0).unwrap();
    writeln!(s, r##"<text x="{}" y="34" fill="#d62728">fake</text>"##, W - 50.0).unwrap();
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let b = box_plot_svg("AUPRC", "AUPRC", &[("test1".into(), vec![0.9, 0.95, 0.97]), ("empty".into(), vec![])]);
        assert!(b.starts_with("<svg") && b.trim_end().ends_with("</svg>"));
        assert_eq!(b.matches("<rect").count(), 2);
        let s = scatter_svg("stats", "bpm", "ms", &[(10.0, 400.0, true), (0.0, 0.0, false)]);
        assert_eq!(s.matches("<circle").count(), 2);
        assert_eq!(b, box_plot_svg("AUPRC", "AUPRC", &[("test1".into(), vec![0.9, 0.95, 0.97]), ("empty".into(), vec![])]));
    }

    #[test]
    fn quartiles() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.25), 1.25);
    }
}
