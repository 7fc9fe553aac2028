//! Minimal static SVG writer.

use std::fmt::Write;

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear (or log10) map from data range to pixel range.
#[derive(Clone, Copy, Debug)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub px_lo: f64,
    pub px_hi: f64,
    pub log: bool,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64, log: bool) -> Self {
        let (mut lo, mut hi) = if log { (lo.log10(), hi.log10()) } else { (lo, hi) };
        if !(hi > lo) {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, px_lo, px_hi, log }
    }

    pub fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new() }
    }

    fn attrs(attrs: &[(&str, String)]) -> String {
        attrs.iter().map(|(k, v)| format!(" {k}=\"{}\"", escape(v))).collect()
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, attrs: &[(&str, String)]) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\"{}/>",
            Self::attrs(attrs)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], attrs: &[(&str, String)]) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\"{}/>",
            pts.join(" "),
            Self::attrs(attrs)
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, attrs: &[(&str, String)]) {
        let _ = writeln!(self.body, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r}\"{}/>", Self::attrs(attrs));
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, attrs: &[(&str, String)]) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"12\"{}>{}</text>",
            Self::attrs(attrs),
            escape(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_maps_endpoints() {
        let a = Axis::new(0.01, 1.0, 50.0, 550.0, true);
        assert!((a.map(0.01) - 50.0).abs() < 1e-9);
        assert!((a.map(1.0) - 550.0).abs() < 1e-9);
        assert!((a.map(0.1) - 300.0).abs() < 1e-9);
        let flat = Axis::new(3.0, 3.0, 0.0, 10.0, false);
        assert!((flat.map(3.0) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn text_is_escaped() {
        let mut s = Svg::new(10.0, 10.0);
        s.text(0.0, 0.0, "a<b & \"c\"", &[("class", "t".into())]);
        let out = s.finish();
        assert!(out.contains("a&lt;b &amp; &quot;c&quot;"));
    }
}
