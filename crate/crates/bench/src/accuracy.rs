//! Locator comparison across layouts and model families.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sprig::models::{fit_model, train_error_guarantee};
use sprig::{build_grid, Dataset, ErrorGuarantee, ModelConfig, ModelKind, Point, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRow {
    pub n: usize,
    pub m: usize,
    pub kind: ModelKind,
    pub outcome: std::result::Result<Accuracy, String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub fit_seconds: f64,
    pub mean_predict_seconds: f64,
    pub eg: ErrorGuarantee,
}

/// `count` uniform in-bounds probes followed by the four domain corners.
pub fn accuracy_probes(dataset: &Dataset, count: usize, seed: u64) -> Vec<Point> {
    let b = dataset.bounds();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut probes: Vec<Point> = (0..count)
        .map(|_| {
            let x = if b.width() > 0.0 {
                rng.gen_range(b.x_min..=b.x_max)
            } else {
                b.x_min
            };
            let y = if b.height() > 0.0 {
                rng.gen_range(b.y_min..=b.y_max)
            } else {
                b.y_min
            };
            Point::at(x, y)
        })
        .collect();
    probes.extend(b.corners());
    probes
}

const PREDICT_TIME: Duration = Duration::from_millis(10);

/// Fits every kind at every layout and records fit time, mean predict time
/// and the error guarantee over `probes`. A fit that fails, for example on
/// the RBF memory budget, is recorded in its row.
pub fn measure_model_accuracy(
    dataset: &Dataset,
    layouts: &[(usize, usize)],
    kinds: &[ModelKind],
    probes: &[Point],
    config: &ModelConfig,
) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::with_capacity(layouts.len() * kinds.len());
    for &(n, m) in layouts {
        let grid = build_grid(dataset, n, m)?;
        for &kind in kinds {
            let start = Instant::now();
            let outcome = fit_model(&grid, kind, config).and_then(|model| {
                let fit_seconds = start.elapsed().as_secs_f64();
                let eg = train_error_guarantee(&model, &grid, probes)?;
                let mut passes = 0u32;
                let t = Instant::now();
                while passes == 0 || t.elapsed() < PREDICT_TIME {
                    let acc = probes
                        .iter()
                        .map(|p| model.predict(black_box(p)))
                        .sum::<f64>();
                    black_box(acc);
                    passes += 1;
                }
                let mean_predict_seconds =
                    t.elapsed().as_secs_f64() / (passes as f64 * probes.len() as f64);
                Ok(Accuracy {
                    fit_seconds,
                    mean_predict_seconds,
                    eg,
                })
            });
            rows.push(AccuracyRow {
                n: grid.n(),
                m: grid.m(),
                kind,
                outcome: outcome.map_err(|e| e.to_string()),
            });
        }
    }
    Ok(rows)
}

pub fn format_accuracy(rows: &[AccuracyRow]) -> String {
    let mut out = String::from("n,m,model,fit_s,predict_ns,eg,eg_x,eg_y,error\n");
    for r in rows {
        match &r.outcome {
            Ok(a) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.6},{:.1},{},{},{},",
                    r.n,
                    r.m,
                    r.kind,
                    a.fit_seconds,
                    a.mean_predict_seconds * 1e9,
                    a.eg.eg,
                    a.eg.eg_x,
                    a.eg.eg_y
                );
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "{},{},{},,,,,,\"{}\"",
                    r.n,
                    r.m,
                    r.kind,
                    e.replace('"', "'")
                );
            }
        }
    }
    out
}
