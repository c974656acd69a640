//! Waterfall and uncertainty plots as static SVG, plus plain-text tables.
//!
//! Output depends only on the inputs: coordinates are printed with fixed
//! precision and nothing reads the clock or the environment.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::explanation::{Explanation, Group, UncertaintyReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputKind {
    #[default]
    Json,
    Text,
    Svg,
}

impl std::str::FromStr for OutputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputKind::Json),
            "text" => Ok(OutputKind::Text),
            "svg" => Ok(OutputKind::Svg),
            other => Err(Error::invalid(format!(
                "unknown format `{other}` (json, text, svg)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSpec {
    pub kind: OutputKind,
    pub positive: String,
    pub negative: String,
    pub intercept: String,
    pub width: u32,
    pub height: u32,
    /// Decimal places of value labels.
    pub precision: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            kind: OutputKind::Json,
            positive: "#4378bf".into(),
            negative: "#f05a71".into(),
            intercept: "#371ea3".into(),
            width: 720,
            height: 0,
            precision: 4,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::invalid("plot width must be positive"));
        }
        if self.precision > 10 {
            return Err(Error::invalid("label precision must be in [0, 10]"));
        }
        Ok(())
    }

    /// Explicit height, or 40 px per row when unset.
    fn height_for(&self, rows: usize) -> u32 {
        if self.height > 0 {
            self.height
        } else {
            (rows as u32 + 2) * 40
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn signed(v: f64, precision: usize) -> String {
    if v >= 0.0 {
        format!("+{v:.precision$}")
    } else {
        format!("{v:.precision$}")
    }
}

fn step_label(explanation: &Explanation, group: &Group) -> String {
    group
        .features()
        .iter()
        .map(|&i| explanation.feature_names()[i].as_str())
        .collect::<Vec<_>>()
        .join(" : ")
}

/// Linear map from values onto the plotting band.
struct Scale {
    lo: f64,
    hi: f64,
    left: f64,
    right: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, left: f64, right: f64) -> Self {
        let (mut lo, mut hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = (hi - lo) * 0.05;
        Scale {
            lo: lo - pad,
            hi: hi + pad,
            left,
            right,
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.lo) / (self.hi - self.lo) * (self.right - self.left)
    }
}

struct Frame {
    svg: String,
    row_h: f64,
    top: f64,
    label_w: f64,
}

impl Frame {
    fn open(spec: &RenderSpec, rows: usize, title: &str) -> Self {
        let height = spec.height_for(rows);
        let row_h = height as f64 / (rows as f64 + 2.0);
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="12">"#,
            w = spec.width
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text class="title" x="8" y="{:.2}" font-size="14">{}</text>"#,
            row_h * 0.6,
            escape(title)
        )
        .unwrap();
        Frame {
            svg,
            row_h,
            top: row_h,
            label_w: (spec.width as f64 * 0.25).min(200.0),
        }
    }

    fn row_y(&self, k: usize) -> f64 {
        self.top + k as f64 * self.row_h
    }

    fn label(&mut self, k: usize, text: &str) {
        writeln!(
            self.svg,
            r#"<text class="label" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            self.label_w - 8.0,
            self.row_y(k) + self.row_h * 0.6,
            escape(text)
        )
        .unwrap();
    }

    fn bar(&mut self, class: &str, k: usize, x0: f64, x1: f64, fill: &str) {
        let (a, b) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        writeln!(
            self.svg,
            r#"<rect class="bar {class}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            a,
            self.row_y(k) + self.row_h * 0.15,
            (b - a).max(1.0),
            self.row_h * 0.7,
            escape(fill)
        )
        .unwrap();
    }

    fn value(&mut self, k: usize, x: f64, text: &str) {
        writeln!(
            self.svg,
            r#"<text class="value" x="{:.2}" y="{:.2}">{}</text>"#,
            x + 4.0,
            self.row_y(k) + self.row_h * 0.6,
            escape(text)
        )
        .unwrap();
    }

    fn connector(&mut self, k: usize, x: f64) {
        writeln!(
            self.svg,
            r##"<line class="connector" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="2,2"/>"##,
            self.row_y(k) + self.row_h * 0.85,
            self.row_y(k + 1) + self.row_h * 0.15,
        )
        .unwrap();
    }

    fn close(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn cumulative(explanation: &Explanation) -> Vec<f64> {
    let mut acc = explanation.baseline();
    explanation
        .steps()
        .iter()
        .map(|s| {
            acc += s.attribution;
            acc
        })
        .collect()
}

fn draw_waterfall(frame: &mut Frame, scale: &Scale, explanation: &Explanation, spec: &RenderSpec) -> Vec<(f64, f64)> {
    let p = spec.precision;
    let baseline = explanation.baseline();
    frame.label(0, "intercept");
    frame.bar("intercept", 0, scale.x(0.0), scale.x(baseline), &spec.intercept);
    frame.value(0, scale.x(0.0).max(scale.x(baseline)), &format!("{baseline:.p$}"));
    let mut spans = Vec::with_capacity(explanation.steps().len());
    let mut prev = baseline;
    for (k, (step, end)) in explanation.steps().iter().zip(cumulative(explanation)).enumerate() {
        let row = k + 1;
        frame.connector(row - 1, scale.x(prev));
        let (class, fill) = if step.attribution >= 0.0 {
            ("positive", &spec.positive)
        } else {
            ("negative", &spec.negative)
        };
        frame.label(row, &step_label(explanation, &step.group));
        frame.bar(class, row, scale.x(prev), scale.x(end), fill);
        frame.value(row, scale.x(prev).max(scale.x(end)), &signed(step.attribution, p));
        spans.push((prev, end));
        prev = end;
    }
    let row = explanation.steps().len() + 1;
    let x = scale.x(explanation.prediction());
    frame.label(row, "prediction");
    writeln!(
        frame.svg,
        r#"<line class="prediction-marker" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{}" stroke-width="3"/>"#,
        frame.row_y(row) + frame.row_h * 0.1,
        frame.row_y(row) + frame.row_h * 0.9,
        escape(&spec.intercept)
    )
    .unwrap();
    frame.value(row, x, &format!("{:.p$}", explanation.prediction()));
    spans
}

/// Waterfall plot: intercept bar, one cumulative bar per step, prediction
/// marker.
pub fn render_waterfall(explanation: &Explanation, spec: &RenderSpec) -> Result<String> {
    spec.validate()?;
    if explanation.steps().is_empty() {
        return Err(Error::invalid("cannot plot an explanation without steps"));
    }
    let rows = explanation.steps().len() + 2;
    let mut frame = Frame::open(
        spec,
        rows,
        &format!("{} explanation", explanation.meta().model),
    );
    let values = std::iter::once(explanation.baseline())
        .chain(cumulative(explanation))
        .chain(std::iter::once(explanation.prediction()));
    let scale = Scale::new(values, frame.label_w, spec.width as f64 - 80.0);
    draw_waterfall(&mut frame, &scale, explanation, spec);
    Ok(frame.close())
}

/// Bars of the report's baseline explanation with the range (thin) and
/// interquartile range (thick) of each feature's contributions drawn from
/// the start of its bar.
pub fn render_uncertainty(report: &UncertaintyReport, spec: &RenderSpec) -> Result<String> {
    spec.validate()?;
    let explanation = &report.baseline_explanation;
    if explanation.steps().is_empty() {
        return Err(Error::invalid("cannot plot an explanation without steps"));
    }
    let rows = explanation.steps().len() + 2;
    let mut frame = Frame::open(
        spec,
        rows,
        &format!("{} explanation, K = {} orders", explanation.meta().model, report.k),
    );
    let cum = cumulative(explanation);
    let mut starts = vec![explanation.baseline()];
    starts.extend(&cum[..cum.len() - 1]);
    let whisker_values = explanation.steps().iter().zip(&starts).flat_map(|(s, &start)| {
        let i = s.group.features()[0];
        [start + report.min(i), start + report.max(i)]
    });
    let values = std::iter::once(explanation.baseline())
        .chain(cum.iter().copied())
        .chain(whisker_values)
        .collect::<Vec<_>>();
    let scale = Scale::new(values.into_iter(), frame.label_w, spec.width as f64 - 80.0);
    let spans = draw_waterfall(&mut frame, &scale, explanation, spec);
    for (k, (step, (start, _))) in explanation.steps().iter().zip(spans).enumerate() {
        let Group::Single(i) = step.group else {
            continue;
        };
        let y = frame.row_y(k + 1) + frame.row_h * 0.5;
        writeln!(
            frame.svg,
            r##"<line class="whisker-range" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#1f3a68" stroke-width="1"/>"##,
            scale.x(start + report.min(i)),
            scale.x(start + report.max(i)),
        )
        .unwrap();
        writeln!(
            frame.svg,
            r##"<line class="whisker-iqr" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#1f3a68" stroke-width="4"/>"##,
            scale.x(start + report.q1[i]),
            scale.x(start + report.q3[i]),
        )
        .unwrap();
    }
    Ok(frame.close())
}

/// Plain-text explanation table.
pub fn explanation_text(explanation: &Explanation, precision: usize) -> String {
    let p = precision;
    let labels: Vec<String> = explanation
        .steps()
        .iter()
        .map(|s| s.group.label(explanation.feature_names()))
        .collect();
    let w = labels.iter().map(String::len).max().unwrap_or(0).max(10);
    let mut out = String::new();
    writeln!(
        out,
        "model: {}  background rows: {}  seed: {}",
        explanation.meta().model,
        explanation.meta().background_rows,
        explanation.meta().seed
    )
    .unwrap();
    writeln!(out, "{:<w$}  {:>12}  {:>12}  {:>12}", "step", "order_score", "attribution", "cumulative").unwrap();
    writeln!(out, "{:<w$}  {:>12}  {:>12}  {:>12.p$}", "intercept", "", "", explanation.baseline()).unwrap();
    for ((step, label), cum) in explanation.steps().iter().zip(&labels).zip(cumulative(explanation)) {
        writeln!(
            out,
            "{:<w$}  {:>12.p$}  {:>12}  {:>12.p$}",
            label,
            step.order_score,
            signed(step.attribution, p),
            cum
        )
        .unwrap();
    }
    writeln!(out, "{:<w$}  {:>12}  {:>12}  {:>12.p$}", "prediction", "", "", explanation.prediction()).unwrap();
    out
}

/// Plain-text uncertainty table.
pub fn uncertainty_text(report: &UncertaintyReport, precision: usize) -> String {
    let p = precision;
    let w = report.feature_names.iter().map(String::len).max().unwrap_or(0).max(7);
    let mut out = String::new();
    writeln!(out, "K = {}  seed = {}", report.k, report.seed).unwrap();
    writeln!(
        out,
        "{:<w$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}",
        "feature", "mean", "min", "q1", "q3", "max", "iqr"
    )
    .unwrap();
    for (i, name) in report.feature_names.iter().enumerate() {
        writeln!(
            out,
            "{:<w$}  {:>10.p$}  {:>10.p$}  {:>10.p$}  {:>10.p$}  {:>10.p$}  {:>10.p$}",
            name,
            report.means[i],
            report.min(i),
            report.q1[i],
            report.q3[i],
            report.max(i),
            report.iqr[i]
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explanation::{ExplanationMeta, Step};

    fn explanation(steps: Vec<Step>, names: &[&str], baseline: f64) -> Explanation {
        let pred = baseline + steps.iter().map(|s| s.attribution).sum::<f64>();
        Explanation::new(
            names.iter().map(|s| s.to_string()).collect(),
            baseline,
            pred,
            steps,
            ExplanationMeta {
                seed: 1,
                background_rows: 4,
                model: "m<1>".into(),
            },
        )
        .unwrap()
    }

    fn step(group: Group, a: f64) -> Step {
        Step {
            group,
            order_score: a,
            attribution: a,
        }
    }

    #[test]
    fn waterfall_structure() {
        let e = explanation(
            vec![step(Group::Single(0), 0.25), step(Group::Single(1), -0.5)],
            &["x1", "x2"],
            0.25,
        );
        let svg = render_waterfall(&e, &RenderSpec::default()).unwrap();
        assert_eq!(svg.matches("class=\"bar ").count(), 3);
        assert_eq!(svg.matches("prediction-marker").count(), 1);
        assert!(svg.contains("class=\"bar negative\""));
        assert!(svg.contains("m&lt;1&gt;"));
        assert_eq!(svg, render_waterfall(&e, &RenderSpec::default()).unwrap());
    }

    #[test]
    fn pair_label_joins_names() {
        let e = explanation(vec![step(Group::Pair(0, 1), -0.5)], &["x1", "x2"], 0.5);
        let svg = render_waterfall(&e, &RenderSpec::default()).unwrap();
        assert!(svg.contains(">x1 : x2</text>"));
        assert_eq!(svg.matches("class=\"bar ").count(), 2);
    }

    #[test]
    fn spec_validation() {
        let e = explanation(vec![step(Group::Single(0), 1.0)], &["x"], 0.0);
        let bad = RenderSpec {
            precision: 11,
            ..RenderSpec::default()
        };
        assert!(render_waterfall(&e, &bad).is_err());
        let bad = RenderSpec {
            width: 0,
            ..RenderSpec::default()
        };
        assert!(render_waterfall(&e, &bad).is_err());
    }

    #[test]
    fn text_uses_requested_precision() {
        let e = explanation(vec![step(Group::Single(0), 1.0 / 3.0)], &["x"], 0.0);
        let t = explanation_text(&e, 4);
        assert!(t.contains("+0.3333"));
        assert!(!t.contains("0.33333"));
    }
}
