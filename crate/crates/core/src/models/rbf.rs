//! Gaussian radial basis interpolation over every knot.

use nalgebra::{DMatrix, DVector};

use super::{KnotGrid, ModelConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RbfFit {
    /// Kernel width `eps` in `exp(-(r / eps)^2)`.
    width: f64,
    /// One weight per knot, row-major like the knot values.
    weights: Vec<f64>,
}

/// Mean knot spacing over both axes; 1.0 on a fully degenerate grid.
fn mean_spacing(knots: &KnotGrid<'_>) -> f64 {
    let span = |k: &[f64]| (k[k.len() - 1] - k[0]) / (k.len() - 1) as f64;
    let s = 0.5 * (span(knots.kx) + span(knots.ky));
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

impl RbfFit {
    pub(crate) fn fit(knots: &KnotGrid<'_>, config: &ModelConfig) -> Result<Self> {
        let count = knots.values.len();
        let bytes = count
            .checked_mul(count)
            .and_then(|c| c.checked_mul(std::mem::size_of::<f64>()))
            .unwrap_or(usize::MAX);
        if bytes > config.rbf_mem_budget {
            return Err(Error::Resource(format!(
                "rbf system for {count} knots needs {bytes} bytes, budget is {}",
                config.rbf_mem_budget
            )));
        }
        let width = match config.rbf_width {
            Some(w) if w > 0.0 && w.is_finite() => w,
            Some(w) => {
                return Err(Error::InvalidArgument(format!(
                    "rbf width must be positive, got {w}"
                )))
            }
            None => mean_spacing(knots),
        };
        let inv = 1.0 / (width * width);
        let nx = knots.stride();
        let coords: Vec<(f64, f64)> = (0..count)
            .map(|k| (knots.kx[k % nx], knots.ky[k / nx]))
            .collect();
        let kernel = DMatrix::from_fn(count, count, |r, c| {
            let (ax, ay) = coords[r];
            let (bx, by) = coords[c];
            let d2 = (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
            (-d2 * inv).exp()
        });
        let rhs = DVector::from_column_slice(knots.values);

        let solved = match kernel.clone().cholesky() {
            Some(chol) => Some(chol.solve(&rhs)),
            None => kernel.lu().solve(&rhs),
        };
        let weights = solved
            .filter(|w| w.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular(format!("gaussian kernel over {count} knots")))?;
        Ok(RbfFit {
            width,
            weights: weights.as_slice().to_vec(),
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub(crate) fn len(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn eval(&self, knots: &KnotGrid<'_>, x: f64, y: f64) -> f64 {
        let inv = 1.0 / (self.width * self.width);
        let nx = knots.stride();
        let mut acc = 0.0;
        for (j, &ky) in knots.ky.iter().enumerate() {
            let dy = y - ky;
            let gy = (-dy * dy * inv).exp();
            if gy == 0.0 {
                continue;
            }
            let row = &self.weights[j * nx..(j + 1) * nx];
            for (w, &kx) in row.iter().zip(knots.kx) {
                let dx = x - kx;
                acc += w * gy * (-dx * dx * inv).exp();
            }
        }
        acc
    }
}
