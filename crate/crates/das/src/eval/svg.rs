//! Self-contained SVG bar charts for the experiment reports.

use crate::error::Result;
use std::path::Path;

/// One bar per (label, value); negative values hang below the zero line.
pub fn write_bar_chart(path: &Path, title: &str, items: &[(String, f64)]) -> Result<()> {
    let width = 80 + items.len().max(1) * 90;
    let height = 360;
    let plot_top: f64 = 50.0;
    let plot_bottom: f64 = 300.0;
    let max = items.iter().map(|(_, v)| v.abs()).fold(1e-12, f64::max);
    let zero_y = if items.iter().any(|(_, v)| *v < 0.0) {
        (plot_top + plot_bottom) / 2.0
    } else {
        plot_bottom
    };
    let scale = (zero_y - plot_top).min(plot_bottom - zero_y).max(1.0) / max;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"28\" font-family=\"monospace\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        width / 2,
        xml_escape(title)
    ));
    svg.push_str(&format!(
        "<line x1=\"40\" y1=\"{zero_y}\" x2=\"{}\" y2=\"{zero_y}\" stroke=\"black\"/>\n",
        width - 20
    ));
    for (i, (label, v)) in items.iter().enumerate() {
        let x = 60 + i * 90;
        let h = (v.abs() * scale).max(0.5);
        let y = if *v >= 0.0 { zero_y - h } else { zero_y };
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y:.2}\" width=\"60\" height=\"{h:.2}\" fill=\"#4878a8\"/>\n\
             <text x=\"{}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"middle\">{:.4}</text>\n\
             <text x=\"{}\" y=\"330\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            x + 30,
            if *v >= 0.0 { y - 6.0 } else { zero_y + h + 14.0 },
            v,
            x + 30,
            xml_escape(label)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
