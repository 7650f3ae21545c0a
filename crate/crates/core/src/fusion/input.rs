use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::TransitionPdf;

/// Network input for one image pair: appearance similarity followed by the
/// transition-probability window around the pair's time bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionInput {
    pub s_a: f64,
    pub s_t: Vec<f64>,
}

impl FusionInput {
    pub fn dim(&self) -> usize {
        1 + self.s_t.len()
    }

    /// Flattened `[s_a, s_t...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.s_a);
        v.extend_from_slice(&self.s_t);
        v
    }

    pub fn write_into(&self, buf: &mut [f64]) {
        buf[0] = self.s_a;
        buf[1..].copy_from_slice(&self.s_t);
    }
}

/// `2W + 2`.
pub fn input_dim(window: usize) -> usize {
    2 * window + 2
}

/// `floor(2 * (2W + 2) / 3 + 1)`, about two thirds of the input width.
pub fn hidden_size(window: usize) -> usize {
    2 * input_dim(window) / 3 + 1
}

/// Parses a window half-size, rejecting negative values.
pub fn window_from_signed(w: i64) -> Result<usize> {
    usize::try_from(w).map_err(|_| Error::Config(format!("window size must be non-negative, got {w}")))
}

/// Builds the input for similarity `s_a` and a pair whose time difference
/// falls in bin `tau`. Window positions outside the distribution read zero.
pub fn build_input(s_a: f64, pdf: &TransitionPdf, tau: i64, window: usize) -> Result<FusionInput> {
    build_input_from_density(s_a, &pdf.density, tau, window)
}

pub fn build_input_from_density(s_a: f64, density: &[f64], tau: i64, window: usize) -> Result<FusionInput> {
    if !(0.0..=1.0).contains(&s_a) {
        return Err(Error::Contract(format!("appearance similarity {s_a} outside [0, 1]")));
    }
    let w = window as i64;
    let s_t = (tau - w..=tau + w)
        .map(|idx| {
            if idx < 0 {
                0.0
            } else {
                density.get(idx as usize).copied().unwrap_or(0.0)
            }
        })
        .collect();
    Ok(FusionInput { s_a, s_t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CameraId;

    fn pdf(density: Vec<f64>) -> TransitionPdf {
        TransitionPdf {
            from: CameraId(0),
            to: CameraId(1),
            density,
            sigma: 1.0,
            n_pairs: 1,
        }
    }

    #[test]
    fn zero_window_is_a_scalar() {
        let x = build_input(0.3, &pdf(vec![0.1, 0.2, 0.7]), 2, 0).unwrap();
        assert_eq!(x.s_t, vec![0.7]);
        assert_eq!(x.dim(), 2);
    }

    #[test]
    fn window_ten_has_twenty_two_inputs() {
        let x = build_input(0.3, &pdf(vec![0.0; 300]), 150, 10).unwrap();
        assert_eq!(x.dim(), 22);
        assert_eq!(input_dim(10), 22);
        assert_eq!(hidden_size(10), 15);
    }

    #[test]
    fn edges_are_zero_padded() {
        let x = build_input(0.5, &pdf(vec![0.1, 0.2, 0.3, 0.4]), 0, 2).unwrap();
        assert_eq!(x.s_t, vec![0.0, 0.0, 0.1, 0.2, 0.3]);
        let x = build_input(0.5, &pdf(vec![0.1, 0.2, 0.3, 0.4]), 3, 2).unwrap();
        assert_eq!(x.s_t, vec![0.2, 0.3, 0.4, 0.0, 0.0]);
        let x = build_input(0.5, &pdf(vec![0.1, 0.2]), 1000, 1).unwrap();
        assert!(x.s_t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_window_is_a_config_error() {
        assert!(matches!(window_from_signed(-1), Err(Error::Config(_))));
        assert_eq!(window_from_signed(4).unwrap(), 4);
    }

    #[test]
    fn similarity_out_of_range_is_rejected() {
        assert!(build_input(1.5, &pdf(vec![1.0]), 0, 0).is_err());
    }

    #[test]
    fn dimension_laws() {
        for w in 0..=12 {
            assert_eq!(input_dim(w), 2 * w + 2);
            if w > 0 {
                assert!(hidden_size(w) >= hidden_size(w - 1));
            }
        }
    }
}
