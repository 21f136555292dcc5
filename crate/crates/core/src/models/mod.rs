//! Interpolation-based cell locators.
//!
//! A model is fitted on the `(n+1) x (m+1)` boundary knots of a grid with
//! knot `(i, j)` carrying the value `j * n + i`, the cell-id pattern extended
//! onto the closing boundaries. Evaluating the surface at a point estimates
//! the point's cell id; [`get_real_cell_id`] then corrects the estimate with
//! two bounded binary searches whose windows come from an [`ErrorGuarantee`].

mod bicubic;
mod rbf;
mod shepard;
mod spline;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{locate_interval, GridLayout};
use crate::point::{Bounds, Point};

pub use rbf::RbfFit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ModelKind {
    #[default]
    Bilinear,
    /// Bicubic Hermite patches with finite-difference slopes.
    Bicubic,
    /// Tensor-product natural cubic spline.
    PiecewiseBicubic,
    /// Inverse distance weighting over all knots.
    Shepard,
    /// Gaussian radial basis expansion over all knots.
    Rbf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Bilinear,
        ModelKind::Bicubic,
        ModelKind::PiecewiseBicubic,
        ModelKind::Shepard,
        ModelKind::Rbf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Bilinear => "bilinear",
            ModelKind::Bicubic => "bicubic",
            ModelKind::PiecewiseBicubic => "pbicubic",
            ModelKind::Shepard => "shepard",
            ModelKind::Rbf => "rbf",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            ModelKind::Bilinear => 0,
            ModelKind::Bicubic => 1,
            ModelKind::PiecewiseBicubic => 2,
            ModelKind::Shepard => 3,
            ModelKind::Rbf => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        ModelKind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilinear" => Ok(ModelKind::Bilinear),
            "bicubic" => Ok(ModelKind::Bicubic),
            "pbicubic" | "piecewise-bicubic" => Ok(ModelKind::PiecewiseBicubic),
            "shepard" => Ok(ModelKind::Shepard),
            "rbf" => Ok(ModelKind::Rbf),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind '{other}'"
            ))),
        }
    }
}

/// Hyper-parameters of the non-local model families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub shepard_power: f64,
    /// Gaussian kernel width; `None` uses the mean knot spacing.
    pub rbf_width: Option<f64>,
    /// Upper bound in bytes for the dense RBF system matrix.
    pub rbf_mem_budget: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            shepard_power: 2.0,
            rbf_width: None,
            rbf_mem_budget: 256 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Surface {
    Bilinear,
    Bicubic(bicubic::Slopes),
    PiecewiseBicubic(spline::Moments),
    Shepard { power: f64 },
    Rbf(RbfFit),
}

/// A fitted interpolation surface over a grid's boundary knots.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedModel {
    kind: ModelKind,
    config: ModelConfig,
    knots_x: Vec<f64>,
    knots_y: Vec<f64>,
    /// Knot values, `values[j * (n + 1) + i] = j * n + i`.
    values: Vec<f64>,
    surface: Surface,
}

/// Knot values for a layout: `(n+1) x (m+1)`, row-major by y.
pub(crate) struct KnotGrid<'a> {
    pub kx: &'a [f64],
    pub ky: &'a [f64],
    pub values: &'a [f64],
}

impl KnotGrid<'_> {
    #[inline]
    pub fn stride(&self) -> usize {
        self.kx.len()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.stride() + i]
    }
}

/// Builds the knot grid from the layout's boundaries and fits `kind`.
pub fn fit_model(grid: &GridLayout, kind: ModelKind, config: &ModelConfig) -> Result<LearnedModel> {
    let n = grid.n();
    let m = grid.m();
    let knots_x = grid.bx().to_vec();
    let knots_y = grid.by().to_vec();
    let mut values = Vec::with_capacity((n + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=n {
            values.push((j * n + i) as f64);
        }
    }
    let knots = KnotGrid {
        kx: &knots_x,
        ky: &knots_y,
        values: &values,
    };
    let surface = match kind {
        ModelKind::Bilinear => Surface::Bilinear,
        ModelKind::Bicubic => Surface::Bicubic(bicubic::Slopes::fit(&knots)),
        ModelKind::PiecewiseBicubic => Surface::PiecewiseBicubic(spline::Moments::fit(&knots)),
        ModelKind::Shepard => {
            if !(config.shepard_power > 0.0 && config.shepard_power.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "shepard power must be positive, got {}",
                    config.shepard_power
                )));
            }
            Surface::Shepard {
                power: config.shepard_power,
            }
        }
        ModelKind::Rbf => Surface::Rbf(RbfFit::fit(&knots, config)?),
    };
    Ok(LearnedModel {
        kind,
        config: *config,
        knots_x,
        knots_y,
        values,
        surface,
    })
}

impl LearnedModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn knots_x(&self) -> &[f64] {
        &self.knots_x
    }

    pub fn knots_y(&self) -> &[f64] {
        &self.knots_y
    }

    pub fn n(&self) -> usize {
        self.knots_x.len() - 1
    }

    pub fn m(&self) -> usize {
        self.knots_y.len() - 1
    }

    pub fn knot_value(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.n() + 1) + i]
    }

    fn knots(&self) -> KnotGrid<'_> {
        KnotGrid {
            kx: &self.knots_x,
            ky: &self.knots_y,
            values: &self.values,
        }
    }

    fn bounds(&self) -> Bounds {
        Bounds {
            x_min: self.knots_x[0],
            x_max: self.knots_x[self.n()],
            y_min: self.knots_y[0],
            y_max: self.knots_y[self.m()],
        }
    }

    /// Real-valued cell-id estimate at `p`, clamped into the grid bounds.
    pub fn predict(&self, p: &Point) -> f64 {
        let p = self.bounds().clamp(p);
        let knots = self.knots();
        match &self.surface {
            Surface::Bilinear => bilinear(&knots, p.x, p.y),
            Surface::Bicubic(slopes) => slopes.eval(&knots, p.x, p.y),
            Surface::PiecewiseBicubic(moments) => moments.eval(&knots, p.x, p.y),
            Surface::Shepard { power } => shepard::eval(&knots, *power, p.x, p.y),
            Surface::Rbf(fit) => fit.eval(&knots, p.x, p.y),
        }
    }

    /// Integer prediction `pid`: the floor of [`LearnedModel::predict`],
    /// clamped to `[0, n*m - 1]`.
    #[inline]
    pub fn predict_id(&self, p: &Point) -> u64 {
        to_pid(self.predict(p), self.n() * self.m())
    }

    /// Bytes held by knot values and family-specific coefficients.
    pub fn coefficient_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let extra = match &self.surface {
            Surface::Bilinear | Surface::Shepard { .. } => 0,
            Surface::Bicubic(s) => s.len() * f,
            Surface::PiecewiseBicubic(s) => s.len() * f,
            Surface::Rbf(fit) => fit.len() * f,
        };
        self.values.len() * f + extra
    }
}

#[inline]
fn to_pid(value: f64, cells: usize) -> u64 {
    let last = cells.saturating_sub(1) as f64;
    // NaN clamps to 0
    let v = value.floor().max(0.0).min(last);
    if v.is_nan() {
        0
    } else {
        v as u64
    }
}

/// Knot interval holding `v` and the local coordinate in `[0, 1]`.
#[inline]
pub(crate) fn segment(knots: &[f64], v: f64) -> (usize, f64) {
    let i = locate_interval(knots, v);
    let width = knots[i + 1] - knots[i];
    let t = if width > 0.0 {
        ((v - knots[i]) / width).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (i, t)
}

#[inline]
fn bilinear(knots: &KnotGrid<'_>, x: f64, y: f64) -> f64 {
    let (i, t) = segment(knots.kx, x);
    let (j, u) = segment(knots.ky, y);
    let v00 = knots.at(i, j);
    let v10 = knots.at(i + 1, j);
    let v01 = knots.at(i, j + 1);
    let v11 = knots.at(i + 1, j + 1);
    // nested lerps keep the result inside the corner values
    let lower = v00 + t * (v10 - v00);
    let upper = v01 + t * (v11 - v01);
    lower + u * (upper - lower)
}

/// Maximum observed deviations of a model over a training workload.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorGuarantee {
    /// `max |predict(q) - cell_id_of(q)|`.
    pub eg: f64,
    /// Maximum column deviation of the integer prediction.
    pub eg_x: u32,
    /// Maximum row deviation of the integer prediction.
    pub eg_y: u32,
}

impl ErrorGuarantee {
    pub const ZERO: ErrorGuarantee = ErrorGuarantee {
        eg: 0.0,
        eg_x: 0,
        eg_y: 0,
    };
}

/// Trains the error guarantee of `model` on `grid` over the workload points.
pub fn train_error_guarantee(
    model: &LearnedModel,
    grid: &GridLayout,
    workload: &[Point],
) -> Result<ErrorGuarantee> {
    if workload.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let n = grid.n() as u64;
    let mut out = ErrorGuarantee::ZERO;
    for q in workload {
        let value = model.predict(q);
        let truth = grid.cell_id_of(q);
        let pid = to_pid(value, grid.cell_count());
        let (px, py) = (pid % n, pid / n);
        let (rx, ry) = (truth % n, truth / n);
        out.eg = out.eg.max((value - truth as f64).abs());
        out.eg_x = out.eg_x.max(px.abs_diff(rx) as u32);
        out.eg_y = out.eg_y.max(py.abs_diff(ry) as u32);
    }
    Ok(out)
}

/// Exact cell id of `p` from a predicted id: bounded binary searches around
/// the predicted column and row, each widened exponentially when the key
/// falls outside the window.
#[inline]
pub fn get_real_cell_id(p: &Point, grid: &GridLayout, pid: u64, eg: &ErrorGuarantee) -> u64 {
    let n = grid.n() as u64;
    let pid = pid.min(grid.cell_count() as u64 - 1);
    let (px, py) = ((pid % n) as usize, (pid / n) as usize);
    let rx = bounded_search(grid.bx(), p.x, px, eg.eg_x as usize);
    let ry = bounded_search(grid.by(), p.y, py, eg.eg_y as usize);
    grid.cell_id(rx, ry)
}

/// Finds the interval `i` of `bounds` containing `v` by searching
/// `[center - radius, center + radius]` first.
#[inline]
pub fn bounded_search(bounds: &[f64], v: f64, center: usize, radius: usize) -> usize {
    let last = bounds.len() - 2;
    let center = center.min(last);
    let mut radius = radius;
    loop {
        let lo = center.saturating_sub(radius);
        let hi = center.saturating_add(radius).min(last);
        let lower_ok = lo == 0 || bounds[lo] <= v;
        let upper_ok = hi == last || v < bounds[hi + 1];
        if lower_ok && upper_ok {
            // intervals lo..=hi; count cut points bounds[lo+1..=hi] that are <= v
            return lo + bounds[lo + 1..=hi].partition_point(|&b| b <= v);
        }
        radius = radius.saturating_mul(2).max(1);
    }
}
