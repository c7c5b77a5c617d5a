//! Minimal hand-written SVG charts. Output is deterministic text so plots diff cleanly.

use std::fmt::Write;

use crate::metrics::GapStats;

const SERIES: [(&str, &str); 3] = [("Acc", "#4c72b0"), ("FR", "#dd8452"), ("WFR", "#c44e52")];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(w: u32, h: u32) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Grouped bars of adversarial accuracy, FR and WFR per severity. Missing values print `n/a`.
pub fn severity_bars_svg(bars: &[(String, [Option<f64>; 3])]) -> String {
    let (left, top, plot_h, bar_w, group_w) = (50.0, 40.0, 220.0, 28.0, 120.0);
    let width = (left + group_w * bars.len().max(1) as f64 + 20.0) as u32;
    let height = (top + plot_h + 50.0) as u32;
    let base = top + plot_h;
    let mut s = open(width, height);
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = base - v * plot_h;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            width as f64 - 20.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (gi, (label, values)) in bars.iter().enumerate() {
        let gx = left + group_w * gi as f64 + (group_w - 3.0 * bar_w) / 2.0;
        for (si, value) in values.iter().enumerate() {
            let x = gx + bar_w * si as f64;
            match value {
                Some(v) => {
                    let h = v.clamp(0.0, 1.0) * plot_h;
                    let _ = writeln!(
                        s,
                        "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"><title>{} {}: {v:.4}</title></rect>",
                        base - h,
                        bar_w - 2.0,
                        SERIES[si].1,
                        escape(label),
                        SERIES[si].0
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"9\">n/a</text>",
                        x + bar_w / 2.0,
                        base - 4.0
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            gx + 1.5 * bar_w,
            base + 18.0,
            escape(label)
        );
    }
    for (si, (name, color)) in SERIES.iter().enumerate() {
        let x = left + 70.0 * si as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"12\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n<text x=\"{:.1}\" y=\"22\">{name}</text>",
            x + 16.0
        );
    }
    let _ = writeln!(s, "<line x1=\"{left}\" y1=\"{base}\" x2=\"{:.1}\" y2=\"{base}\" stroke=\"black\"/>", width as f64 - 20.0);
    s.push_str("</svg>\n");
    s
}

/// Histogram of `stats.counts` with a dashed line at the mean.
pub fn histogram_svg(stats: &GapStats, x_label: &str) -> String {
    let (left, top, plot_w, plot_h) = (50.0, 30.0, 480.0, 220.0);
    let (width, height) = ((left + plot_w + 20.0) as u32, (top + plot_h + 60.0) as u32);
    let base = top + plot_h;
    let max_count = stats.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bin_w = plot_w / stats.counts.len().max(1) as f64;
    let mut s = open(width, height);
    for (i, &c) in stats.counts.iter().enumerate() {
        let h = c as f64 / max_count * plot_h;
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"#4c72b0\"><title>[{:.4}, {:.4}]: {c}</title></rect>",
            left + bin_w * i as f64,
            base - h,
            (bin_w - 1.0).max(0.5),
            stats.bin_edges[i],
            stats.bin_edges[i + 1]
        );
    }
    let span = stats.max - stats.min;
    let mean_x = if span > 0.0 {
        left + (stats.mean - stats.min) / span * plot_w
    } else {
        left + plot_w / 2.0
    };
    let _ = writeln!(
        s,
        "<line x1=\"{mean_x:.1}\" y1=\"{top}\" x2=\"{mean_x:.1}\" y2=\"{base}\" stroke=\"#c44e52\" stroke-dasharray=\"4 3\"/>\n<text x=\"{mean_x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">mean {:.4}</text>",
        top - 8.0,
        stats.mean
    );
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{base}\" x2=\"{:.1}\" y2=\"{base}\" stroke=\"black\"/>\n<text x=\"{left}\" y=\"{:.1}\" text-anchor=\"start\">{:.4}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.4}</text>",
        left + plot_w,
        base + 16.0,
        stats.min,
        left + plot_w,
        base + 16.0,
        stats.max
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
        left + plot_w / 2.0,
        base + 40.0,
        escape(x_label),
        left - 6.0,
        top + 4.0,
        max_count as usize
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::gap_stats;

    #[test]
    fn bars_mark_missing_values() {
        let svg = severity_bars_svg(&[
            ("light".into(), [Some(0.5), Some(0.25), Some(1.0)]),
            ("absolute".into(), [Some(0.1), None, None]),
        ]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<title>").count(), 4);
        assert_eq!(svg.matches(">n/a<").count(), 2);
    }

    #[test]
    fn histogram_has_one_bar_per_bin() {
        let stats = gap_stats(&[-1.0, 0.0, 0.5, 2.0], 5).unwrap();
        let svg = histogram_svg(&stats, "a < b");
        assert_eq!(svg.matches("fill=\"#4c72b0\"").count(), 5);
        assert!(svg.contains("a &lt; b"));
    }
}
