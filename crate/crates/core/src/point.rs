//! Points, datasets, query shapes and point-file ingestion.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution as _, Exp1, Normal};

use crate::error::{Error, Result};

/// A 2-D record: coordinates plus an opaque identifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub id: u64,
}

impl Point {
    pub const fn new(x: f64, y: f64, id: u64) -> Self {
        Point { x, y, id }
    }

    /// A bare location with id 0, for query points and pivots.
    pub const fn at(x: f64, y: f64) -> Self {
        Point { x, y, id: 0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Euclidean distance between two points.
#[inline]
pub fn distance(p: &Point, q: &Point) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    (dx * dx + dy * dy).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn of(points: &[Point]) -> Option<Bounds> {
        let first = points.first()?;
        let mut b = Bounds {
            x_min: first.x,
            x_max: first.x,
            y_min: first.y,
            y_max: first.y,
        };
        for p in &points[1..] {
            b.x_min = b.x_min.min(p.x);
            b.x_max = b.x_max.max(p.x);
            b.y_min = b.y_min.min(p.y);
            b.y_max = b.y_max.max(p.y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn clamp(&self, p: &Point) -> Point {
        Point {
            x: p.x.clamp(self.x_min, self.x_max),
            y: p.y.clamp(self.y_min, self.y_max),
            id: p.id,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// The four corners, bottom-left first, top-right last.
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::at(self.x_min, self.y_min),
            Point::at(self.x_max, self.y_min),
            Point::at(self.x_min, self.y_max),
            Point::at(self.x_max, self.y_max),
        ]
    }
}

/// An immutable, non-empty point collection with exact bounds.
#[derive(Clone, Debug)]
pub struct Dataset {
    points: Vec<Point>,
    bounds: Bounds,
}

impl Dataset {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite { x: p.x, y: p.y });
        }
        let bounds = Bounds::of(&points).ok_or(Error::EmptyDataset)?;
        Ok(Dataset { points, bounds })
    }

    /// Builds a dataset from bare coordinates, assigning ids `0..len`.
    pub fn from_coords(coords: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let points = coords
            .into_iter()
            .enumerate()
            .map(|(i, (x, y))| Point::new(x, y, i as u64))
            .collect();
        Dataset::new(points)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// Axis-aligned query window with closed edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeQuery {
    /// Bottom-left corner.
    pub lo: Point,
    /// Top-right corner.
    pub hi: Point,
}

impl RangeQuery {
    pub fn new(b_x: f64, b_y: f64, t_x: f64, t_y: f64) -> Result<Self> {
        if !(b_x.is_finite() && b_y.is_finite() && t_x.is_finite() && t_y.is_finite()) {
            return Err(Error::InvalidArgument(
                "range query has non-finite corner".into(),
            ));
        }
        if b_x > t_x || b_y > t_y {
            return Err(Error::InvalidArgument(format!(
                "range query corners out of order: ({b_x}, {b_y}) > ({t_x}, {t_y})"
            )));
        }
        Ok(RangeQuery {
            lo: Point::at(b_x, b_y),
            hi: Point::at(t_x, t_y),
        })
    }

    pub fn covering(bounds: &Bounds) -> Self {
        RangeQuery {
            lo: Point::at(bounds.x_min, bounds.y_min),
            hi: Point::at(bounds.x_max, bounds.y_max),
        }
    }

    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.lo.x && p.x <= self.hi.x && p.y >= self.lo.y && p.y <= self.hi.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnQuery {
    pub point: Point,
    pub k: usize,
}

impl KnnQuery {
    pub fn new(x: f64, y: f64, k: usize) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite { x, y });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(KnnQuery {
            point: Point::at(x, y),
            k,
        })
    }
}

/// Result of [`load_points`].
#[derive(Debug)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Non-comment lines that failed to parse or held non-finite values.
    pub rejected: usize,
}

/// Splits a line on commas and whitespace into exactly two finite numbers.
pub fn parse_xy(line: &str) -> Option<(f64, f64)> {
    let mut fields = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty());
    let x: f64 = fields.next()?.parse().ok()?;
    let y: f64 = fields.next()?.parse().ok()?;
    if fields.next().is_some() || !x.is_finite() || !y.is_finite() {
        return None;
    }
    Some((x, y))
}

/// Reads a point file: one `x<sep>y` per line, `<sep>` a comma or
/// whitespace, `#` lines ignored. Ids are assigned in file order.
pub fn load_points(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Loaded> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let limit = limit.unwrap_or(usize::MAX);
    let mut points = Vec::new();
    let mut rejected = 0;
    for line in BufReader::new(file).lines() {
        if points.len() >= limit {
            break;
        }
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_xy(line) {
            Some((x, y)) => points.push(Point::new(x, y, points.len() as u64)),
            None => rejected += 1,
        }
    }
    if points.is_empty() {
        return Err(Error::NoValidPoints {
            path: path.to_path_buf(),
            rejected,
        });
    }
    Ok(Loaded {
        dataset: Dataset::new(points)?,
        rejected,
    })
}

/// Writes points as `x,y` lines. `f64` display is shortest-round-trip, so
/// [`load_points`] reads back the same coordinates.
pub fn write_points(path: impl AsRef<Path>, points: &[Point]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in points {
        writeln!(w, "{},{}", p.x, p.y).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    /// Uniform over the unit square.
    Uniform,
    /// Gaussian blobs of skewed weight inside the unit square over a thin
    /// uniform background.
    GaussianClusters,
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "gaussian-clusters" | "gaussian" | "clusters" => Ok(Distribution::GaussianClusters),
            other => Err(Error::InvalidArgument(format!(
                "unknown distribution '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Uniform => "uniform",
            Distribution::GaussianClusters => "gaussian-clusters",
        })
    }
}

const CLUSTERS: usize = 24;
const BACKGROUND_FRACTION: f64 = 0.05;

/// Deterministic synthetic dataset inside the unit square.
pub fn generate_synthetic(n: usize, distribution: Distribution, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let coords: Vec<(f64, f64)> = match distribution {
        Distribution::Uniform => (0..n)
            .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
            .collect(),
        Distribution::GaussianClusters => {
            let centers: Vec<(f64, f64, f64)> = (0..CLUSTERS)
                .map(|_| {
                    let cx = rng.gen_range(0.05..0.95);
                    let cy = rng.gen_range(0.05..0.95);
                    let sigma = rng.gen_range(0.005..0.06);
                    (cx, cy, sigma)
                })
                .collect();
            // exponential weights, squared for a heavier head
            let weights: Vec<f64> = (0..CLUSTERS)
                .map(|_| {
                    let w: f64 = Exp1.sample(&mut rng);
                    w * w
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut cumulative = Vec::with_capacity(CLUSTERS);
            let mut acc = 0.0;
            for w in &weights {
                acc += w / total;
                cumulative.push(acc);
            }
            let unit = Normal::new(0.0, 1.0).expect("unit normal");
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                if rng.gen::<f64>() < BACKGROUND_FRACTION {
                    out.push((rng.gen::<f64>(), rng.gen::<f64>()));
                    continue;
                }
                let u: f64 = rng.gen();
                let c = cumulative.partition_point(|&c| c < u).min(CLUSTERS - 1);
                let (cx, cy, sigma) = centers[c];
                let x = cx + sigma * unit.sample(&mut rng);
                let y = cy + sigma * unit.sample(&mut rng);
                if (0.0..1.0).contains(&x) && (0.0..1.0).contains(&y) {
                    out.push((x, y));
                }
            }
            out
        }
    };
    Dataset::from_coords(coords)
}
