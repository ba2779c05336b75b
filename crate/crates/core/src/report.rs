//! Artifact output: the shared binary field format, CSV writing, and a
//! dependency-free SVG line plotter.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use std::io::{Read, Write};
use std::path::Path;

pub const FIELD_MAGIC: u32 = u32::from_le_bytes(*b"CDF1");

/// Writes a field snapshot: 16-byte header (u32 magic "CDF1", u32 N, f64 t)
/// followed by row-major little-endian f64 samples.
pub fn write_field_binary(path: &Path, field: &ScalarField, t: f64) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&FIELD_MAGIC.to_le_bytes())?;
    f.write_all(&(field.n() as u32).to_le_bytes())?;
    f.write_all(&t.to_le_bytes())?;
    for v in field.values() {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_field_binary(path: &Path) -> Result<(ScalarField, f64)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != FIELD_MAGIC {
        return Err(Error::Config("bad field magic".into()));
    }
    f.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    f.read_exact(&mut b8)?;
    let t = f64::from_le_bytes(b8);
    let mut values = vec![0.0f64; n * n];
    for v in values.iter_mut() {
        f.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok((ScalarField::from_values(n, values), t))
}

/// Small-N CSV dump of a field (row per y, column per x).
pub fn field_to_csv(field: &ScalarField) -> String {
    let n = field.n();
    let mut out = String::new();
    for iy in 0..n {
        for ix in 0..n {
            if ix > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", field.at(ix, iy)));
        }
        out.push('\n');
    }
    out
}

/// One plotted series.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
}

const COLORS: [&str; 6] = ["#1f6feb", "#d1242f", "#1a7f37", "#9a6700", "#8250df", "#57606a"];

/// Renders line series as a self-contained SVG (polyline + axes + ticks).
pub fn svg_line_plot(spec: &PlotSpec<'_>, series: &[Series<'_>]) -> String {
    let (w, h) = (840.0, 520.0);
    let (ml, mr, mt, mb) = (78.0, 24.0, 42.0, 58.0);
    let tf = |v: f64, log: bool| if log { v.max(1e-300).log10() } else { v };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() && (!spec.log_x || x > 0.0) && (!spec.log_y || y > 0.0)
            {
                xs.push(tf(x, spec.log_x));
                ys.push(tf(y, spec.log_y));
            }
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ml + (tf(x, spec.log_x) - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (tf(y, spec.log_y) - y0) / (y1 - y0) * (h - mt - mb);
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" font-family="monospace" font-size="13">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{tx}" y="24" text-anchor="middle" font-size="16">{title}</text>
"#,
        tx = w / 2.0,
        title = xml_escape(spec.title),
    );
    // axes
    svg.push_str(&format!(
        "<line x1='{ml}' y1='{yb}' x2='{xr}' y2='{yb}' stroke='black'/>\n<line x1='{ml}' y1='{mt}' x2='{ml}' y2='{yb}' stroke='black'/>\n",
        yb = h - mb,
        xr = w - mr,
    ));
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let vx = if spec.log_x { 10f64.powf(fx) } else { fx };
        let vy = if spec.log_y { 10f64.powf(fy) } else { fy };
        let sx = ml + (w - ml - mr) * i as f64 / 5.0;
        let sy = h - mb - (h - mt - mb) * i as f64 / 5.0;
        svg.push_str(&format!(
            "<line x1='{sx}' y1='{yb}' x2='{sx}' y2='{yb2}' stroke='black'/><text x='{sx}' y='{yt}' text-anchor='middle'>{v}</text>\n",
            yb = h - mb,
            yb2 = h - mb + 6.0,
            yt = h - mb + 22.0,
            v = format_tick(vx),
        ));
        svg.push_str(&format!(
            "<line x1='{x2}' y1='{sy}' x2='{ml}' y2='{sy}' stroke='black'/><text x='{xt}' y='{syt}' text-anchor='end'>{v}</text>\n",
            x2 = ml - 6.0,
            xt = ml - 10.0,
            syt = sy + 4.0,
            v = format_tick(vy),
        ));
    }
    svg.push_str(&format!(
        "<text x='{tx}' y='{ty}' text-anchor='middle'>{lx}</text>\n",
        tx = (ml + w - mr) / 2.0,
        ty = h - 16.0,
        lx = xml_escape(spec.x_label),
    ));
    svg.push_str(&format!(
        "<text x='20' y='{ty}' text-anchor='middle' transform='rotate(-90 20 {ty})'>{ly}</text>\n",
        ty = (mt + h - mb) / 2.0,
        ly = xml_escape(spec.y_label),
    ));
    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| {
                x.is_finite()
                    && y.is_finite()
                    && (!spec.log_x || *x > 0.0)
                    && (!spec.log_y || *y > 0.0)
            })
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if pts.len() > 1 {
            svg.push_str(&format!(
                "<polyline points='{}' fill='none' stroke='{color}' stroke-width='1.6'/>\n",
                pts.join(" ")
            ));
        } else if pts.len() == 1 {
            let xy: Vec<&str> = pts[0].split(',').collect();
            svg.push_str(&format!(
                "<circle cx='{}' cy='{}' r='3' fill='{color}'/>\n",
                xy[0], xy[1]
            ));
        }
        svg.push_str(&format!(
            "<text x='{x}' y='{y}' fill='{color}'>{label}</text>\n",
            x = w - mr - 200.0,
            y = mt + 18.0 * (si + 1) as f64,
            label = xml_escape(s.label),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::TWO_PI;

    #[test]
    fn binary_round_trip() {
        let f = ScalarField::from_fn(16, |x, y| (TWO_PI * (x - 2.0 * y)).sin());
        let dir = std::env::temp_dir().join("eddylab-test-field.bin");
        write_field_binary(&dir, &f, 0.625).unwrap();
        let (g, t) = read_field_binary(&dir).unwrap();
        assert_eq!(t, 0.625);
        assert_eq!(f.values(), g.values());
        std::fs::remove_file(dir).ok();
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = svg_line_plot(
            &PlotSpec {
                title: "dissipation vs kappa",
                x_label: "kappa",
                y_label: "D",
                log_x: true,
                log_y: true,
            },
            &[Series { label: "run", points: vec![(1e-3, 0.1), (1e-2, 0.2), (1e-1, 0.4)] }],
        );
        assert!(s.starts_with("<svg"));
        assert!(s.ends_with("</svg>\n"));
        assert!(s.contains("polyline"));
    }
}
