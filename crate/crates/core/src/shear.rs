//! The alternating shear-wave building blocks.

use crate::field::TWO_PI;

/// Axis a shear wave varies along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShearAxis {
    /// Psi depends on y_1; the induced velocity points along e_2.
    X1,
    /// Psi depends on y_2; the induced velocity points along e_1.
    X2,
}

/// One member of the alternating family
/// `Psi_k = sin(2 pi y_1)` for k = 1 mod 4, `sin(2 pi y_2)` for k = 3 mod 4,
/// zero for even k.
#[derive(Debug, Clone, Copy)]
pub struct ShearWave {
    pub k_index: i64,
}

impl ShearWave {
    pub fn new(k_index: i64) -> Self {
        Self { k_index }
    }

    /// Which coordinate the wave depends on, if it is nonzero.
    pub fn axis(&self) -> Option<ShearAxis> {
        match self.k_index.rem_euclid(4) {
            1 => Some(ShearAxis::X1),
            3 => Some(ShearAxis::X2),
            _ => None,
        }
    }

    pub fn eval(&self, y1: f64, y2: f64) -> f64 {
        match self.axis() {
            Some(ShearAxis::X1) => (TWO_PI * y1).sin(),
            Some(ShearAxis::X2) => (TWO_PI * y2).sin(),
            None => 0.0,
        }
    }

    pub fn grad(&self, y1: f64, y2: f64) -> (f64, f64) {
        match self.axis() {
            Some(ShearAxis::X1) => (TWO_PI * (TWO_PI * y1).cos(), 0.0),
            Some(ShearAxis::X2) => (0.0, TWO_PI * (TWO_PI * y2).cos()),
            None => (0.0, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternation_pattern() {
        assert_eq!(ShearWave::new(1).axis(), Some(ShearAxis::X1));
        assert_eq!(ShearWave::new(3).axis(), Some(ShearAxis::X2));
        assert_eq!(ShearWave::new(5).axis(), Some(ShearAxis::X1));
        assert_eq!(ShearWave::new(-1).axis(), Some(ShearAxis::X2));
        for k in [-2, 0, 2, 4, 6] {
            assert_eq!(ShearWave::new(k).axis(), None);
        }
    }

    #[test]
    fn zero_mean_over_cell() {
        let w = ShearWave::new(1);
        let n = 64;
        let mean: f64 = (0..n)
            .map(|i| w.eval(i as f64 / n as f64, 0.3))
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 1e-14);
    }
}
