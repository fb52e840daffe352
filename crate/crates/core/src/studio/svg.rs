use std::collections::BTreeMap;
use std::fmt::Write;

use super::LayoutBundle;
use crate::projector::Layout2D;

/// Colorblind-safe categorical palette (Okabe-Ito plus two neutrals).
const PALETTE: [&str; 10] = [
    "#E69F00", "#56B4E9", "#009E73", "#F0E442", "#0072B2", "#D55E00", "#CC79A7", "#000000", "#999999", "#882255",
];
const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static scatterplot of `layout`, colored by `classes` (palette order follows
/// the sorted distinct class names).
pub fn render_svg(layout: &Layout2D, classes: &[String], title: &str) -> String {
    let distinct: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = classes.iter().map(String::as_str).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
    };
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &layout.points {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{}" viewBox="0 0 {SIZE} {}">"#,
        SIZE + 30.0,
        SIZE + 30.0
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="18" font-family="sans-serif" font-size="13">{}</text>"#, escape(title));
    for (i, p) in layout.points.iter().enumerate() {
        let x = MARGIN + (p[0] - lo[0]) * scale;
        // SVG y grows downward.
        let y = 30.0 + MARGIN + (hi[1] - p[1]) * scale;
        let class = classes.get(i).map(String::as_str).unwrap_or("");
        let color = PALETTE[distinct.get(class).copied().unwrap_or(0) % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.8"><title>{}</title></circle>"#,
            escape(class)
        );
    }
    for (k, (name, idx)) in distinct.iter().enumerate().take(20) {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            SIZE - 110.0,
            45.0 + 14.0 * k as f64,
            PALETTE[idx % PALETTE.len()],
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

impl LayoutBundle {
    /// Class names used to color exported plots: truth labels when complete,
    /// else the prompt's class slot.
    pub fn display_classes(&self) -> Vec<String> {
        if self.truth_labels.iter().all(Option::is_some) {
            return self.truth_labels.iter().map(|t| t.clone().unwrap_or_default()).collect();
        }
        let slot = &self.prompt.class_slot().name;
        self.labels
            .iter()
            .map(|l| l.get(slot).cloned().unwrap_or_else(|| crate::gateway::UNKNOWN.to_owned()))
            .collect()
    }

    /// One SVG per grid point: `(file name, document)`.
    pub fn svg_exports(&self) -> Vec<(String, String)> {
        let classes = self.display_classes();
        self.alpha_grid
            .iter()
            .zip(&self.layouts)
            .zip(&self.metrics)
            .map(|((alpha, layout), m)| {
                let title = format!(
                    "{} | {} | alpha = {alpha:.2} | T {:.3} C {:.3} R {:.3} S {:.3}",
                    self.dataset, layout.projector_id, m.trustworthiness, m.continuity, m.shepard_rho, m.silhouette
                );
                (format!("layout-alpha-{alpha:.2}.svg"), render_svg(layout, &classes, &title))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_circle_per_point() {
        let layout = Layout2D::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]], "pca");
        let svg = render_svg(&layout, &["a".into(), "b<".into(), "a".into()], "t & t");
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("t &amp; t"));
        assert!(svg.contains("b&lt;"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn bundle_exports_every_alpha() {
        let b = super::super::bundle::tests::toy_bundle();
        let files = b.svg_exports();
        assert_eq!(files.len(), b.alpha_grid.len());
        assert_eq!(files[3].0, "layout-alpha-0.50.svg");
    }
}
