//! Minimal SVG charts for the CLI reports.

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Horizontal bars, one per label, scaled to the largest magnitude.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let (w, row, left, top) = (480.0, 22.0, 120.0, 36.0);
    let h = top + row * labels.len() as f64 + 12.0;
    let mid = left + (w - left - 20.0) / 2.0;
    let half = (w - left - 20.0) / 2.0;
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <text x=\"10\" y=\"20\" font-size=\"14\">{}</text>\n\
         <line x1=\"{mid}\" y1=\"{}\" x2=\"{mid}\" y2=\"{}\" stroke=\"#444\"/>\n",
        escape(title),
        top - 4.0,
        h - 8.0
    );
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let y = top + row * i as f64;
        let len = if max > 0.0 { half * v.abs() / max } else { 0.0 };
        let x = if v < 0.0 { mid - len } else { mid };
        let fill = if v < 0.0 { "#c0504d" } else { "#4f81bd" };
        s.push_str(&format!(
            "<text x=\"10\" y=\"{}\">{}</text>\n<rect x=\"{x:.2}\" y=\"{}\" width=\"{len:.2}\" height=\"{}\" fill=\"{fill}\"/>\n",
            y + 14.0,
            escape(label),
            y + 3.0,
            row - 6.0
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Polylines over a shared integer x axis.
pub fn line_chart(title: &str, x: &[usize], series: &[(String, Vec<f64>)]) -> String {
    let (w, h, pad) = (520.0, 320.0, 40.0);
    let colors = ["#4f81bd", "#c0504d", "#9bbb59", "#8064a2", "#f79646", "#4bacc6"];
    let xmax = x.iter().copied().max().unwrap_or(1).max(1) as f64;
    let all = series.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = all.fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |k: usize| pad + (w - 2.0 * pad) * k as f64 / xmax;
    let py = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / span;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <text x=\"10\" y=\"20\" font-size=\"14\">{}</text>\n\
         <line x1=\"{pad}\" y1=\"{y0:.2}\" x2=\"{}\" y2=\"{y0:.2}\" stroke=\"#444\"/>\n",
        escape(title),
        w - pad,
        y0 = py(0.0)
    );
    for &k in x {
        s.push_str(&format!("<text x=\"{:.2}\" y=\"{}\">{k}</text>\n", px(k) - 4.0, h - pad + 16.0));
    }
    for (i, (name, v)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let pts: Vec<String> = x.iter().zip(v).map(|(&k, &y)| format!("{:.2},{:.2}", px(k), py(y))).collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{c}\">{}</text>\n",
            pts.join(" "),
            w - pad - 150.0,
            pad + 14.0 * i as f64,
            escape(name)
        ));
    }
    s.push_str("</svg>\n");
    s
}
