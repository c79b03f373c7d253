//! Number formatting, terminal styling and the worst-case SVG.

use std::fmt::Write as _;
use std::io::IsTerminal;

use dosefind::worstcase::WorstCaseGrid;

/// Decimal rendering with 12 significant digits and trailing zeros trimmed.
/// Very small or large magnitudes fall back to scientific notation.
pub fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..=12).contains(&mag) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub struct Style {
    color: bool,
}

impl Style {
    pub fn detect() -> Self {
        let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
        Self {
            color: !no_color && std::io::stdout().is_terminal(),
        }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    pub fn verdict(&self, pass: bool) -> String {
        if pass {
            self.paint("32", "PASS")
        } else {
            self.paint("31", "FAIL")
        }
    }

    pub fn bold(&self, text: &str) -> String {
        self.paint("1", text)
    }
}

pub fn grid_csv(grid: &WorstCaseGrid) -> String {
    let mut out = String::from("v");
    for d in &grid.designs {
        out.push(',');
        out.push_str(d.column());
    }
    out.push('\n');
    for row in &grid.rows {
        out.push_str(&num(row.v));
        for r in &row.r {
            out.push(',');
            out.push_str(&num(*r));
        }
        out.push('\n');
    }
    out
}

const DASHES: [&str; 4] = ["", "8 5", "2 4", "9 4 2 4"];

pub fn grid_svg(grid: &WorstCaseGrid) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |v: f64| left + v * pw;
    let y = |r: f64| top + (1.0 - r) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = x(0.0),
        t = y(1.0),
        b = y(0.0),
        r = x(1.0)
    );
    for i in 0..=5 {
        let v = f64::from(i) / 5.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/><text x="{x0}" y="{yt}" text-anchor="middle">{v:.1}</text>"#,
            x0 = x(v),
            y0 = y(0.0),
            y1 = y(0.0) + 5.0,
            yt = y(0.0) + 20.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><text x="{xt}" y="{yt}" text-anchor="end">{v:.1}</text>"#,
            x0 = x(0.0) - 5.0,
            x1 = x(0.0),
            y0 = y(v),
            xt = x(0.0) - 8.0,
            yt = y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">v</text>"#,
        x(0.5),
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">r(v)</text>"#,
        y(0.5),
        y(0.5)
    );
    for (k, design) in grid.designs.iter().enumerate() {
        let points: Vec<String> = grid
            .rows
            .iter()
            .map(|row| format!("{:.2},{:.2}", x(row.v), y(row.r[k])))
            .collect();
        let dash = DASHES[k % DASHES.len()];
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"{dash_attr}/>"#,
            points.join(" ")
        );
        let ly = top + 15.0 + 18.0 * k as f64;
        let lx = x(1.0) - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="black" stroke-width="1.5"{dash_attr}/><text x="{}" y="{}">{}</text>"#,
            lx + 40.0,
            lx + 48.0,
            ly + 4.0,
            design.label()
        );
    }
    s.push_str("</svg>\n");
    s
}
