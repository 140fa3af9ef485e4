use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Ranking, ShapError, ShapMatrix};

/// Bars drawn in the ranking chart.
pub const SVG_TOP: usize = 15;

const BAR_HEIGHT: usize = 22;
const LABEL_WIDTH: usize = 110;
const PLOT_WIDTH: usize = 420;
const MARGIN: usize = 16;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal bar chart of the `top` most important features, largest first.
pub fn ranking_svg(r: &Ranking, top: usize) -> String {
    let entries = &r.entries[..top.min(r.entries.len())];
    let max = entries.iter().map(|e| e.importance).fold(0.0, f64::max);
    let height = 2 * MARGIN + 24 + entries.len() * BAR_HEIGHT;
    let width = LABEL_WIDTH + PLOT_WIDTH + 80 + 2 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13">mean |SHAP value|</text>"#,
        MARGIN + LABEL_WIDTH,
        MARGIN + 12
    );
    for (i, e) in entries.iter().enumerate() {
        let y = MARGIN + 24 + i * BAR_HEIGHT;
        let w = if max > 0.0 { e.importance / max * PLOT_WIDTH as f64 } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            MARGIN + LABEL_WIDTH - 6,
            y + BAR_HEIGHT / 2 + 4,
            escape(&e.feature)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{w:.2}" height="{}" fill="#1f77b4"/>"##,
            MARGIN + LABEL_WIDTH,
            y + 3,
            BAR_HEIGHT - 6
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}">{:.4}</text>"#,
            (MARGIN + LABEL_WIDTH) as f64 + w + 4.0,
            y + BAR_HEIGHT / 2 + 4,
            e.importance
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_ranking_svg(r: &Ranking, path: &Path) -> Result<(), ShapError> {
    std::fs::write(path, ranking_svg(r, SVG_TOP))?;
    Ok(())
}

pub fn write_ranking_json(r: &Ranking, path: &Path) -> Result<(), ShapError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, r)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One row per explained sample: the explained output, then one column per
/// feature.
pub fn write_shap_csv(sm: &ShapMatrix, path: &Path) -> Result<(), ShapError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "explained")?;
    for f in &sm.features {
        write!(w, ",{f}")?;
    }
    writeln!(w)?;
    for (i, row) in sm.values.outer_iter().enumerate() {
        let out = sm.explained[i];
        match sm.classes.get(out) {
            Some(c) => write!(w, "{c}")?,
            None => write!(w, "{out}")?,
        }
        for v in row {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::RankEntry;

    #[test]
    fn svg_lists_top_fifteen_descending() {
        let r = Ranking {
            entries: (0..20).map(|i| RankEntry { feature: format!("V<{i}>"), importance: 20.0 - i as f64 }).collect(),
        };
        let svg = ranking_svg(&r, SVG_TOP);
        assert_eq!(svg.matches("<rect x=").count(), 15);
        assert!(svg.contains("V&lt;0&gt;"));
        assert!(!svg.contains("V&lt;15&gt;"));
        let p0 = svg.find("V&lt;0&gt;").unwrap();
        let p1 = svg.find("V&lt;1&gt;").unwrap();
        assert!(p0 < p1);
    }
}
