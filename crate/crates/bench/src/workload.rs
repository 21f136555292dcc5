//! Query workloads: generation and the text file format.
//!
//! Range lines are `b_x,b_y,t_x,t_y`, kNN lines are `x,y,k`. A line
//! `# group <label>` starts a new group; other `#` lines are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use sprig::{Dataset, Error, KdTree, KnnQuery, Point, RangeQuery, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Queries {
    Range(Vec<RangeQuery>),
    Knn(Vec<KnnQuery>),
}

impl Queries {
    pub fn len(&self) -> usize {
        match self {
            Queries::Range(q) => q.len(),
            Queries::Knn(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind(&self) -> WorkloadKind {
        match self {
            Queries::Range(_) => WorkloadKind::Range,
            Queries::Knn(_) => WorkloadKind::Knn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkloadKind {
    Range,
    Knn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub label: String,
    pub queries: Queries,
}

/// Groups of queries of a single kind.
#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub seed: u64,
    pub groups: Vec<Group>,
}

impl Workload {
    pub fn kind(&self) -> Option<WorkloadKind> {
        self.groups.first().map(|g| g.queries.kind())
    }

    pub fn query_count(&self) -> usize {
        self.groups.iter().map(|g| g.queries.len()).sum()
    }

    pub fn range_queries(&self) -> Vec<RangeQuery> {
        self.groups
            .iter()
            .flat_map(|g| match &g.queries {
                Queries::Range(q) => q.clone(),
                Queries::Knn(_) => Vec::new(),
            })
            .collect()
    }

    /// Points the locator is asked to predict: window corners or kNN
    /// query points.
    pub fn training_points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for g in &self.groups {
            match &g.queries {
                Queries::Range(q) => out.extend(q.iter().flat_map(|q| [q.lo, q.hi])),
                Queries::Knn(q) => out.extend(q.iter().map(|q| q.point)),
            }
        }
        out
    }
}

/// Binary-search steps spent sizing one window.
const SIZING_STEPS: usize = 80;
/// Window centres tried per emitted window before giving up.
const CENTER_ATTEMPTS: usize = 50;

pub fn selectivity_label(s: f64) -> String {
    format!("sel={}", s)
}

/// Square windows centred on sampled data points, each sized so that it
/// selects within 10% of `s * |D|` points.
pub fn generate_range_workload(
    dataset: &Dataset,
    selectivities: &[f64],
    count: usize,
    seed: u64,
) -> Result<Workload> {
    let tree = KdTree::build(dataset, 32)?;
    generate_range_workload_with(dataset, &tree, selectivities, count, seed)
}

/// As [`generate_range_workload`], counting with a prebuilt tree.
pub fn generate_range_workload_with(
    dataset: &Dataset,
    tree: &KdTree,
    selectivities: &[f64],
    count: usize,
    seed: u64,
) -> Result<Workload> {
    let mut rng = StdRng::seed_from_u64(seed);
    let bounds = dataset.bounds();
    let points = dataset.points();
    let extent = bounds.width().max(bounds.height()).max(f64::MIN_POSITIVE);
    let mut groups = Vec::with_capacity(selectivities.len());
    for &s in selectivities {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "selectivity {s} outside (0, 1]"
            )));
        }
        let target = s * dataset.len() as f64;
        let (lo, hi) = (0.9 * target, 1.1 * target);
        if s < 1.0 && lo.ceil() > hi.floor() {
            return Err(Error::InvalidArgument(format!(
                "selectivity {s} is unattainable on {} points",
                dataset.len()
            )));
        }
        let mut queries = Vec::with_capacity(count);
        while queries.len() < count {
            if s == 1.0 {
                queries.push(RangeQuery::covering(&bounds));
                continue;
            }
            let mut found = None;
            for _ in 0..CENTER_ATTEMPTS {
                let c = *points.choose(&mut rng).expect("non-empty dataset");
                let window = |side: f64| {
                    let h = side / 2.0;
                    let a = bounds.clamp(&Point::at(c.x - h, c.y - h));
                    let b = bounds.clamp(&Point::at(c.x + h, c.y + h));
                    RangeQuery::new(a.x, a.y, b.x, b.y).expect("ordered corners")
                };
                let (mut small, mut large) = (0.0, 2.0 * extent);
                for _ in 0..SIZING_STEPS {
                    let side = 0.5 * (small + large);
                    let q = window(side);
                    let n = tree.range_count(&q) as f64;
                    if n < lo {
                        small = side;
                    } else if n > hi {
                        large = side;
                    } else {
                        found = Some(q);
                        break;
                    }
                }
                if found.is_some() {
                    break;
                }
            }
            match found {
                Some(q) => queries.push(q),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "no window selects {lo:.1}..{hi:.1} points for selectivity {s}"
                    )))
                }
            }
        }
        groups.push(Group {
            label: selectivity_label(s),
            queries: Queries::Range(queries),
        });
    }
    Ok(Workload { seed, groups })
}

/// Fraction of the larger domain side used as kNN query jitter.
const JITTER: f64 = 1e-3;

/// Query points sampled from the data, jittered and clamped to the bounds.
pub fn generate_knn_workload(
    dataset: &Dataset,
    ks: &[usize],
    count: usize,
    seed: u64,
) -> Result<Workload> {
    let mut rng = StdRng::seed_from_u64(seed);
    let bounds = dataset.bounds();
    let jitter = JITTER * bounds.width().max(bounds.height());
    let mut groups = Vec::with_capacity(ks.len());
    for &k in ks {
        if k == 0 || k > dataset.len() {
            return Err(Error::KOutOfRange {
                k,
                len: dataset.len(),
            });
        }
        let mut queries = Vec::with_capacity(count);
        for _ in 0..count {
            let c = *dataset
                .points()
                .choose(&mut rng)
                .expect("non-empty dataset");
            let (dx, dy) = if jitter > 0.0 {
                (
                    rng.gen_range(-jitter..=jitter),
                    rng.gen_range(-jitter..=jitter),
                )
            } else {
                (0.0, 0.0)
            };
            let p = bounds.clamp(&Point::at(c.x + dx, c.y + dy));
            queries.push(KnnQuery::new(p.x, p.y, k)?);
        }
        groups.push(Group {
            label: format!("k={k}"),
            queries: Queries::Knn(queries),
        });
    }
    Ok(Workload { seed, groups })
}

pub fn format_workload(w: &Workload) -> String {
    let mut out = String::new();
    for g in &w.groups {
        let _ = writeln!(out, "# group {}", g.label);
        match &g.queries {
            Queries::Range(qs) => {
                for q in qs {
                    let _ = writeln!(out, "{},{},{},{}", q.lo.x, q.lo.y, q.hi.x, q.hi.y);
                }
            }
            Queries::Knn(qs) => {
                for q in qs {
                    let _ = writeln!(out, "{},{},{}", q.point.x, q.point.y, q.k);
                }
            }
        }
    }
    out
}

pub fn parse_workload(text: &str) -> Result<Workload> {
    let mut groups: Vec<Group> = Vec::new();
    let mut kind = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(label) = rest.trim().strip_prefix("group") {
                groups.push(Group {
                    label: label.trim().to_string(),
                    queries: match kind {
                        Some(WorkloadKind::Knn) => Queries::Knn(Vec::new()),
                        _ => Queries::Range(Vec::new()),
                    },
                });
            }
            continue;
        }
        let bad =
            |msg: &str| Error::Format(format!("workload line {}: {msg}: '{line}'", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let this = match fields.len() {
            4 => WorkloadKind::Range,
            3 => WorkloadKind::Knn,
            _ => return Err(bad("expected 3 or 4 fields")),
        };
        if *kind.get_or_insert(this) != this {
            return Err(bad("range and kNN queries mixed"));
        }
        if groups.is_empty() {
            groups.push(Group {
                label: "all".into(),
                queries: Queries::Range(Vec::new()),
            });
        }
        let group = groups.last_mut().expect("group exists");
        if group.queries.is_empty() && group.queries.kind() != this {
            group.queries = match this {
                WorkloadKind::Range => Queries::Range(Vec::new()),
                WorkloadKind::Knn => Queries::Knn(Vec::new()),
            };
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        match &mut group.queries {
            Queries::Range(qs) => {
                let q = RangeQuery::new(
                    num(fields[0])?,
                    num(fields[1])?,
                    num(fields[2])?,
                    num(fields[3])?,
                )
                .map_err(|e| bad(&e.to_string()))?;
                qs.push(q);
            }
            Queries::Knn(qs) => {
                let k = fields[2].parse::<usize>().map_err(|_| bad("bad k"))?;
                let q = KnnQuery::new(num(fields[0])?, num(fields[1])?, k)
                    .map_err(|e| bad(&e.to_string()))?;
                qs.push(q);
            }
        }
    }
    groups.retain(|g| !g.queries.is_empty());
    if groups.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    Ok(Workload { seed: 0, groups })
}

pub fn write_workload(path: impl AsRef<Path>, w: &Workload) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_workload(w)).map_err(|e| Error::io(path, e))
}

pub fn read_workload(path: impl AsRef<Path>) -> Result<Workload> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_workload(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sprig::{brute_range, Distribution};

    #[test]
    fn full_domain_selectivity() {
        let ds = sprig::point::generate_synthetic(1000, Distribution::Uniform, 1).unwrap();
        let w = generate_range_workload(&ds, &[1.0], 2, 3).unwrap();
        let Queries::Range(q) = &w.groups[0].queries else {
            panic!()
        };
        assert_eq!(q[0], RangeQuery::covering(&ds.bounds()));
        assert_eq!(brute_range(&ds, &q[1]).len(), 1000);
    }

    #[test]
    fn windows_hit_target_counts() {
        let ds = sprig::point::generate_synthetic(100_000, Distribution::Uniform, 2).unwrap();
        let w = generate_range_workload(&ds, &[0.001], 40, 4).unwrap();
        let Queries::Range(qs) = &w.groups[0].queries else {
            panic!()
        };
        for q in qs {
            let n = brute_range(&ds, q).len();
            assert!((90..=110).contains(&n), "{n}");
        }
    }

    #[test]
    fn skewed_windows_hit_target_counts() {
        let ds =
            sprig::point::generate_synthetic(50_000, Distribution::GaussianClusters, 2).unwrap();
        let w = generate_range_workload(&ds, &[0.005, 0.02], 20, 5).unwrap();
        for (g, s) in w.groups.iter().zip([0.005, 0.02]) {
            let Queries::Range(qs) = &g.queries else {
                panic!()
            };
            let target = s * 50_000.0;
            for q in qs {
                let n = brute_range(&ds, q).len() as f64;
                assert!(n >= 0.9 * target && n <= 1.1 * target);
                assert!(ds.bounds().contains(&q.lo) && ds.bounds().contains(&q.hi));
            }
        }
    }

    #[test]
    fn deterministic_and_errors() {
        let ds = sprig::point::generate_synthetic(2000, Distribution::GaussianClusters, 3).unwrap();
        let a = generate_range_workload(&ds, &[0.01], 5, 9).unwrap();
        let b = generate_range_workload(&ds, &[0.01], 5, 9).unwrap();
        assert_eq!(format_workload(&a), format_workload(&b));
        assert!(generate_range_workload(&ds, &[0.0], 1, 1).is_err());
        assert!(generate_range_workload(&ds, &[1.5], 1, 1).is_err());
        assert!(generate_range_workload(&ds, &[0.0001], 1, 1).is_err());
        let k = generate_knn_workload(&ds, &[4, 8], 3, 1).unwrap();
        assert_eq!(
            format_workload(&k),
            format_workload(&generate_knn_workload(&ds, &[4, 8], 3, 1).unwrap())
        );
        assert!(generate_knn_workload(&ds, &[2001], 1, 1).is_err());
    }

    #[test]
    fn knn_single_query_in_bounds() {
        let ds = sprig::point::generate_synthetic(5000, Distribution::GaussianClusters, 4).unwrap();
        let w = generate_knn_workload(&ds, &[4], 1, 2).unwrap();
        assert_eq!(w.query_count(), 1);
        let w = generate_knn_workload(&ds, &[4, 64], 500, 2).unwrap();
        for p in w.training_points() {
            assert!(ds.bounds().contains(&p));
        }
    }

    #[test]
    fn file_format_round_trip() {
        let ds = sprig::point::generate_synthetic(5000, Distribution::Uniform, 5).unwrap();
        let w = generate_range_workload(&ds, &[0.01, 0.02], 3, 1).unwrap();
        let back = parse_workload(&format_workload(&w)).unwrap();
        assert_eq!(back.groups, w.groups);
        let w = generate_knn_workload(&ds, &[4, 8], 3, 1).unwrap();
        let back = parse_workload(&format_workload(&w)).unwrap();
        assert_eq!(back.groups, w.groups);
    }

    #[test]
    fn parse_plain_lines() {
        let w = parse_workload("0,0,1,1\n# note\n0.5,0.5,0.6,0.7\n").unwrap();
        assert_eq!((w.groups.len(), w.query_count()), (1, 2));
        assert_eq!(w.kind(), Some(WorkloadKind::Range));
        let w = parse_workload("0.1,0.2,3\n").unwrap();
        assert_eq!(w.kind(), Some(WorkloadKind::Knn));
        assert!(parse_workload("0,0,1,1\n0,0,3\n").is_err());
        assert!(parse_workload("1,1,0,0\n").is_err());
        assert!(parse_workload("0,0,0\n").is_err());
        assert!(parse_workload("# only a comment\n").is_err());
        assert!(parse_workload("a,b,c,d\n").is_err());
    }
}
