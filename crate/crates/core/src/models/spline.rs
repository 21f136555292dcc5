//! Tensor-product natural cubic spline (piecewise bicubic, C2).
//!
//! Stores the second derivatives `f_xx`, `f_yy` and `f_xxyy` at every knot;
//! evaluation is local to the containing knot rectangle.

use super::{segment, KnotGrid};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Moments {
    mxx: Vec<f64>,
    myy: Vec<f64>,
    mxxyy: Vec<f64>,
}

/// Second derivatives of the natural cubic spline through `(knots[k], f[k])`.
fn natural_moments(knots: &[f64], f: &[f64]) -> Vec<f64> {
    let len = knots.len();
    let mut out = vec![0.0; len];
    if len < 3 {
        return out;
    }
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    if h.iter().any(|&w| w <= 0.0) {
        return out;
    }
    // tridiagonal system over the interior knots, solved with the Thomas algorithm
    let inner = len - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for r in 0..inner {
        let k = r + 1;
        diag[r] = 2.0 * (h[k - 1] + h[k]);
        upper[r] = h[k];
        rhs[r] = 6.0 * ((f[k + 1] - f[k]) / h[k] - (f[k] - f[k - 1]) / h[k - 1]);
    }
    for r in 1..inner {
        let lower = h[r];
        let w = lower / diag[r - 1];
        diag[r] -= w * upper[r - 1];
        rhs[r] -= w * rhs[r - 1];
    }
    out[inner] = rhs[inner - 1] / diag[inner - 1];
    for r in (0..inner - 1).rev() {
        out[r + 1] = (rhs[r] - upper[r] * out[r + 2]) / diag[r];
    }
    out
}

impl Moments {
    pub fn fit(knots: &KnotGrid<'_>) -> Self {
        let (nx, ny) = (knots.kx.len(), knots.ky.len());
        let mut mxx = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &knots.values[j * nx..(j + 1) * nx];
            mxx[j * nx..(j + 1) * nx].copy_from_slice(&natural_moments(knots.kx, row));
        }
        let mut myy = vec![0.0; nx * ny];
        let mut mxxyy = vec![0.0; nx * ny];
        for i in 0..nx {
            let column: Vec<f64> = (0..ny).map(|j| knots.at(i, j)).collect();
            let column_xx: Vec<f64> = (0..ny).map(|j| mxx[j * nx + i]).collect();
            let a = natural_moments(knots.ky, &column);
            let b = natural_moments(knots.ky, &column_xx);
            for j in 0..ny {
                myy[j * nx + i] = a[j];
                mxxyy[j * nx + i] = b[j];
            }
        }
        Moments { mxx, myy, mxxyy }
    }

    pub fn len(&self) -> usize {
        self.mxx.len() + self.myy.len() + self.mxxyy.len()
    }

    pub fn eval(&self, knots: &KnotGrid<'_>, x: f64, y: f64) -> f64 {
        let nx = knots.stride();
        let (i, t) = segment(knots.kx, x);
        let (j, u) = segment(knots.ky, y);
        let hx = knots.kx[i + 1] - knots.kx[i];
        let hy = knots.ky[j + 1] - knots.ky[j];

        // value weights A, B and moment weights C, D per axis
        let (a, b) = (1.0 - t, t);
        let vx = [a, b];
        let cx = [
            (a * a * a - a) * hx * hx / 6.0,
            (b * b * b - b) * hx * hx / 6.0,
        ];
        let (a, b) = (1.0 - u, u);
        let vy = [a, b];
        let cy = [
            (a * a * a - a) * hy * hy / 6.0,
            (b * b * b - b) * hy * hy / 6.0,
        ];

        let mut acc = 0.0;
        for q in 0..2 {
            for p in 0..2 {
                let idx = (j + q) * nx + (i + p);
                acc += knots.values[idx] * vx[p] * vy[q]
                    + self.mxx[idx] * cx[p] * vy[q]
                    + self.myy[idx] * vx[p] * cy[q]
                    + self.mxxyy[idx] * cx[p] * cy[q];
            }
        }
        acc
    }
}
