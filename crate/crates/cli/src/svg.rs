//! Static ROC chart: monthly points per series, the y = x line of random
//! guessing and each series' logarithmic fit, on a log-scaled FPR axis.

use std::fmt::Write;

use citescope_core::metrics::LogFit;

pub struct Series {
    pub label: String,
    /// `(fpr, tpr)` per month; months missing either coordinate are not drawn.
    pub points: Vec<(Option<f64>, Option<f64>)>,
    pub fit: Option<LogFit>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

fn f(x: f64) -> String {
    format!("{x:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Decade bounds covering every positive FPR, at least `[1e-3, 1]`.
fn x_decades(series: &[Series]) -> (i32, i32) {
    let mut lo = -3;
    for s in series {
        for &(x, _) in &s.points {
            if let Some(x) = x.filter(|x| *x > 0.0) {
                lo = lo.min(x.log10().floor() as i32);
            }
        }
        if let Some(fit) = &s.fit {
            lo = lo.min(fit.fpr_min.log10().floor() as i32);
        }
    }
    (lo.max(-12), 0)
}

pub fn roc_svg(title: &str, series: &[Series]) -> String {
    let (d0, d1) = x_decades(series);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - d0 as f64) / (d1 - d0) as f64 * pw;
    let sy = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        o,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        f(LEFT + pw / 2.0),
        escape(title)
    );

    // axes, ticks and grid
    let _ = writeln!(
        o,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        f(LEFT),
        f(TOP),
        f(pw),
        f(ph)
    );
    for d in d0..=d1 {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            o,
            r##"<line x1="{x}" y1="{t}" x2="{x}" y2="{b}" stroke="#ddd"/><text x="{x}" y="{ty}" text-anchor="middle">1e{d}</text>"##,
            x = f(x),
            t = f(TOP),
            b = f(TOP + ph),
            ty = f(TOP + ph + 15.0)
        );
    }
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            o,
            r##"<line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="#ddd"/><text x="{tx}" y="{ty}" text-anchor="end">{v:.1}</text>"##,
            l = f(LEFT),
            r = f(LEFT + pw),
            y = f(y),
            tx = f(LEFT - 6.0),
            ty = f(y + 4.0)
        );
    }
    let _ = writeln!(
        o,
        r#"<text x="{}" y="{}" text-anchor="middle">false positive rate (log scale)</text>"#,
        f(LEFT + pw / 2.0),
        f(H - 15.0)
    );
    let _ = writeln!(
        o,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">true positive rate</text>"#,
        y = f(TOP + ph / 2.0)
    );

    // y = x, curved on the log axis
    let random: Vec<String> = (0..=60)
        .map(|i| {
            let x = 10f64.powf(d0 as f64 + (d1 - d0) as f64 * i as f64 / 60.0);
            format!("{},{}", f(sx(x)), f(sy(x)))
        })
        .collect();
    let _ = writeln!(
        o,
        r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="1.5"/>"##,
        random.join(" ")
    );

    let mut legend = vec![("random (y = x)".to_string(), "#d62728")];
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(o, r#"<g fill="{color}" stroke="none">"#);
        for &(x, y) in &s.points {
            if let (Some(x), Some(y)) = (x, y) {
                if x > 0.0 {
                    let _ = writeln!(o, r#"<circle cx="{}" cy="{}" r="2.5"/>"#, f(sx(x)), f(sy(y)));
                }
            }
        }
        let _ = writeln!(o, "</g>");
        let mut label = s.label.clone();
        if let Some(fit) = &s.fit {
            let curve: Vec<String> = (0..=40)
                .map(|i| {
                    let lx = fit.fpr_min.ln() + (fit.fpr_max.ln() - fit.fpr_min.ln()) * i as f64 / 40.0;
                    let x = lx.exp();
                    format!("{},{}", f(sx(x)), f(sy(fit.eval(x))))
                })
                .collect();
            let _ = writeln!(
                o,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="5,3"/>"#,
                curve.join(" ")
            );
            label = format!("{label}: {:.3} ln(x) + {:.3}", fit.a, fit.b);
        }
        legend.push((label, color));
    }

    for (k, (label, color)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * k as f64;
        let x = LEFT + pw + 10.0;
        let _ = writeln!(
            o,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            f(x),
            f(y - 8.0),
            f(x + 14.0),
            f(y + 1.0),
            escape(label)
        );
    }
    o.push_str("</svg>\n");
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_reference_points_and_fit() {
        let fit = LogFit {
            a: 0.1,
            b: 0.9,
            n_points: 2,
            n_excluded: 0,
            residual_rms: 0.0,
            fpr_min: 0.01,
            fpr_max: 0.2,
        };
        let s = Series {
            label: "hotspot <a&b>".into(),
            points: vec![(Some(0.01), Some(0.5)), (Some(0.0), Some(0.1)), (None, Some(0.3)), (Some(0.2), Some(0.74))],
            fit: Some(fit),
        };
        let svg = roc_svg("t", &[s]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("#d62728"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert!(svg.contains("hotspot &lt;a&amp;b&gt;"));
        assert!(svg.contains("log scale"));
        assert_eq!(svg, roc_svg("t", &[Series { label: "hotspot <a&b>".into(), points: vec![(Some(0.01), Some(0.5)), (Some(0.0), Some(0.1)), (None, Some(0.3)), (Some(0.2), Some(0.74))], fit: Some(fit) }]));
    }

    #[test]
    fn axis_extends_to_small_rates() {
        let s = Series {
            label: "x".into(),
            points: vec![(Some(2e-6), Some(0.1))],
            fit: None,
        };
        assert!(roc_svg("t", &[s]).contains(">1e-6<"));
    }
}
