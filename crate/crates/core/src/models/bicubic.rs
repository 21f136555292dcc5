//! Bicubic Hermite patches. Slopes at every knot come from finite
//! differences of the knot values; each knot rectangle is then a cubic
//! Hermite surface matching values, first derivatives and the cross
//! derivative at its four corners.

use super::{segment, KnotGrid};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Slopes {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dxy: Vec<f64>,
}

/// Derivative of `f` along a knot line by central differences, one-sided at
/// the ends. Zero on a zero-width line.
fn differentiate(knots: &[f64], f: impl Fn(usize) -> f64, k: usize) -> f64 {
    let last = knots.len() - 1;
    let (a, b) = match k {
        0 => (0, 1),
        k if k == last => (last - 1, last),
        k => (k - 1, k + 1),
    };
    let h = knots[b] - knots[a];
    if h > 0.0 {
        (f(b) - f(a)) / h
    } else {
        0.0
    }
}

impl Slopes {
    pub fn fit(knots: &KnotGrid<'_>) -> Self {
        let (nx, ny) = (knots.kx.len(), knots.ky.len());
        let mut dx = vec![0.0; nx * ny];
        let mut dy = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                dx[j * nx + i] = differentiate(knots.kx, |a| knots.at(a, j), i);
                dy[j * nx + i] = differentiate(knots.ky, |b| knots.at(i, b), j);
            }
        }
        let mut dxy = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                dxy[j * nx + i] = differentiate(knots.ky, |b| dx[b * nx + i], j);
            }
        }
        Slopes { dx, dy, dxy }
    }

    pub fn len(&self) -> usize {
        self.dx.len() + self.dy.len() + self.dxy.len()
    }

    pub fn eval(&self, knots: &KnotGrid<'_>, x: f64, y: f64) -> f64 {
        let nx = knots.stride();
        let (i, t) = segment(knots.kx, x);
        let (j, u) = segment(knots.ky, y);
        let hx = knots.kx[i + 1] - knots.kx[i];
        let hy = knots.ky[j + 1] - knots.ky[j];

        // value and slope bases for the near (0) and far (1) corner
        let (t2, t3) = (t * t, t * t * t);
        let (u2, u3) = (u * u, u * u * u);
        let vx = [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2];
        let sx = [(t3 - 2.0 * t2 + t) * hx, (t3 - t2) * hx];
        let vy = [2.0 * u3 - 3.0 * u2 + 1.0, -2.0 * u3 + 3.0 * u2];
        let sy = [(u3 - 2.0 * u2 + u) * hy, (u3 - u2) * hy];

        let mut acc = 0.0;
        for b in 0..2 {
            for a in 0..2 {
                let idx = (j + b) * nx + (i + a);
                acc += knots.values[idx] * vx[a] * vy[b]
                    + self.dx[idx] * sx[a] * vy[b]
                    + self.dy[idx] * vx[a] * sy[b]
                    + self.dxy[idx] * sx[a] * sy[b];
            }
        }
        acc
    }
}
