//! Plain-text SVG scatter plots. Coordinates are printed with three decimals
//! so output is byte-stable.

use std::f64::consts::TAU;
use std::fmt::Write;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE:.0}\" height=\"{SIZE:.0}\" viewBox=\"0 0 {SIZE:.0} {SIZE:.0}\">"
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn dot(out: &mut String, x: f64, y: f64, label: Option<&str>) {
    match label {
        Some(l) => {
            let _ = writeln!(
                out,
                "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"><title>{}</title></circle>",
                escape(l)
            );
        }
        None => {
            let _ = writeln!(out, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>");
        }
    }
}

/// Points at circular coordinates in `[0, 1)` on a unit circle, counter-
/// clockwise from the positive x axis.
pub fn circle_scatter(coords: &[f64], labels: Option<&[String]>, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let c = SIZE / 2.0;
    let r = c - MARGIN;
    let _ = writeln!(out, "<circle cx=\"{c:.3}\" cy=\"{c:.3}\" r=\"{r:.3}\" fill=\"none\" stroke=\"#999\"/>");
    for (i, &t) in coords.iter().enumerate() {
        let a = TAU * t;
        // SVG's y axis points down
        dot(&mut out, c + r * a.cos(), c - r * a.sin(), labels.map(|l| l[i].as_str()));
    }
    out.push_str("</svg>\n");
    out
}

/// Planar scatter scaled to fit, preserving aspect ratio.
pub fn plane_scatter(points: &[(f64, f64)], labels: Option<&[String]>, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let span = (xmax - xmin).max(ymax - ymin);
    let scale = if span > 0.0 && span.is_finite() { (SIZE - 2.0 * MARGIN) / span } else { 1.0 };
    for (i, &(x, y)) in points.iter().enumerate() {
        let px = MARGIN + (x - xmin) * scale;
        let py = SIZE - MARGIN - (y - ymin) * scale;
        dot(&mut out, px, py, labels.map(|l| l[i].as_str()));
    }
    out.push_str("</svg>\n");
    out
}

/// Unit 3-vectors as longitude/latitude in degrees, for [`plane_scatter`].
pub fn equirectangular(points: &[[f64; 3]]) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|v| (v[1].atan2(v[0]).to_degrees(), v[2].clamp(-1.0, 1.0).asin().to_degrees()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_snapshot() {
        let svg = circle_scatter(&[0.0, 0.25], None, "t");
        let expected = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 400\">\n\
<title>t</title>\n\
<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
<circle cx=\"200.000\" cy=\"200.000\" r=\"160.000\" fill=\"none\" stroke=\"#999\"/>\n\
<circle cx=\"360.000\" cy=\"200.000\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n\
<circle cx=\"200.000\" cy=\"40.000\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n\
</svg>\n";
        assert_eq!(svg, expected);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = circle_scatter(&[0.5], Some(&["a<b".to_string()]), "x & y");
        assert!(svg.contains("<title>a&lt;b</title>"));
        assert!(svg.contains("<title>x &amp; y</title>"));
    }

    #[test]
    fn plane_fits_frame() {
        let svg = plane_scatter(&[(0.0, 0.0), (10.0, 5.0)], None, "p");
        assert!(svg.contains("cx=\"40.000\" cy=\"360.000\""));
        assert!(svg.contains("cx=\"360.000\" cy=\"200.000\""));
        let single = plane_scatter(&[(1.0, 1.0)], None, "p");
        assert!(single.contains("cx=\"40.000\" cy=\"360.000\""));
    }

    #[test]
    fn equirectangular_examples() {
        let p = equirectangular(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
        assert_eq!(p[0], (0.0, 0.0));
        assert_eq!(p[1].1, 90.0);
        assert_eq!(p[2], (90.0, 0.0));
    }
}
