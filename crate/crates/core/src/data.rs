//! Sample matrices, synthetic generators, CSV interchange and seeded splits.

use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::eigen::qr;
use crate::error::{Error, Result};

/// Name of the optional trailing label column in CSV files.
pub const LABEL_COLUMN: &str = "label";
/// Number of frames produced by the time-series generator.
pub const TIMESERIES_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Array2<f64>,
    pub labels: Option<Vec<i64>>,
    pub name: String,
}

impl Dataset {
    pub fn new(samples: Array2<f64>, labels: Option<Vec<i64>>, name: impl Into<String>) -> Result<Self> {
        let (n, d) = samples.dim();
        if n == 0 || d == 0 {
            return Err(Error::Data(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite sample at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {n} samples",
                    l.len()
                )));
            }
        }
        Ok(Dataset {
            samples,
            labels,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn d(&self) -> usize {
        self.samples.ncols()
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select(Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Noisy upper half of the unit circle.
    Moon,
    /// Concentric circles of radius 1 (label 0) and 0.5 (label 1).
    TwoCircles,
    /// Unit spheres centered at `(-1,0,0)` and `(1,0,0)`, touching at the origin.
    TangentSpheres,
    /// Coaxial cylinder surfaces of radius 0.5 and 1, height 2.
    Cylinders,
    /// Segment `[0,3]` on the x-axis; label is the unit interval index.
    Line,
    /// One frame of two static Gaussian clusters plus a cluster moving
    /// linearly from one to the other over [`TIMESERIES_STEPS`] frames.
    TwoClustersTimeseries { step: usize },
}

impl SyntheticKind {
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Self::Moon | Self::TwoCircles | Self::Line => 2,
            Self::TangentSpheres | Self::Cylinders => 3,
            Self::TwoClustersTimeseries { .. } => 10,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Moon => "moon",
            Self::TwoCircles => "two_circles",
            Self::TangentSpheres => "tangent_spheres",
            Self::Cylinders => "cylinders",
            Self::Line => "line",
            Self::TwoClustersTimeseries { .. } => "two_clusters_timeseries",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    /// Accepts the names from [`SyntheticKind::name`]; the time-series kind
    /// takes an optional `:<step>` suffix (default 0).
    fn from_str(s: &str) -> Result<Self> {
        let (base, step) = match s.split_once(':') {
            Some((b, st)) => (b, Some(st)),
            None => (s, None),
        };
        let kind = match base {
            "moon" => Self::Moon,
            "two_circles" => Self::TwoCircles,
            "tangent_spheres" => Self::TangentSpheres,
            "cylinders" => Self::Cylinders,
            "line" => Self::Line,
            "two_clusters_timeseries" => {
                let step = match step {
                    Some(st) => st.parse().map_err(|_| {
                        Error::InvalidArgument(format!("invalid time-series step {st:?}"))
                    })?,
                    None => 0,
                };
                return Ok(Self::TwoClustersTimeseries { step });
            }
            other => return Err(Error::InvalidArgument(format!("unknown dataset kind {other:?}"))),
        };
        if step.is_some() {
            return Err(Error::InvalidArgument(format!("{base} takes no step parameter")));
        }
        Ok(kind)
    }
}

/// Seeded `ambient × intrinsic` matrix with orthonormal columns; the identity
/// when both dimensions agree.
fn embedding_map(intrinsic: usize, ambient: usize, seed: u64) -> Result<Array2<f64>> {
    if ambient == intrinsic {
        return Ok(Array2::eye(ambient));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let g = Array2::from_shape_fn((ambient, intrinsic), |_| rng.sample::<f64, _>(StandardNormal));
    Ok(qr(g.view())?.q)
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates `n` samples of `kind` in `ambient_dim` dimensions.
///
/// Points are drawn in the kind's intrinsic coordinates, isotropic Gaussian
/// noise with standard deviation `noise` is added there, and the result is
/// mapped into the ambient space by a seeded map with orthonormal columns.
pub fn gen_synthetic(
    kind: SyntheticKind,
    n: usize,
    noise: f64,
    ambient_dim: usize,
    seed: u64,
) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("need n >= 10, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be finite and >= 0, got {noise}")));
    }
    let dim = kind.intrinsic_dim();
    if ambient_dim < dim {
        return Err(Error::InvalidArgument(format!(
            "{} needs ambient_dim >= {dim}, got {ambient_dim}",
            kind.name()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::<f64>::zeros((n, dim));
    let mut labels: Option<Vec<i64>> = None;
    let half = n / 2;

    match kind {
        SyntheticKind::Moon => {
            for i in 0..n {
                let t = rng.gen_range(0.0..std::f64::consts::PI);
                pts[[i, 0]] = t.cos();
                pts[[i, 1]] = t.sin();
            }
        }
        SyntheticKind::TwoCircles => {
            let mut lab = Vec::with_capacity(n);
            for i in 0..n {
                let class = usize::from(i >= half);
                let r = if class == 0 { 1.0 } else { 0.5 };
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                pts[[i, 0]] = r * t.cos();
                pts[[i, 1]] = r * t.sin();
                lab.push(class as i64);
            }
            labels = Some(lab);
        }
        SyntheticKind::TangentSpheres => {
            let mut lab = Vec::with_capacity(n);
            for i in 0..n {
                let class = usize::from(i >= half);
                let u = unit_vector(&mut rng, 3);
                let cx = if class == 0 { -1.0 } else { 1.0 };
                pts[[i, 0]] = cx + u[0];
                pts[[i, 1]] = u[1];
                pts[[i, 2]] = u[2];
                lab.push(class as i64);
            }
            labels = Some(lab);
        }
        SyntheticKind::Cylinders => {
            let mut lab = Vec::with_capacity(n);
            for i in 0..n {
                let class = usize::from(i >= half);
                let r = if class == 0 { 0.5 } else { 1.0 };
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                pts[[i, 0]] = r * t.cos();
                pts[[i, 1]] = r * t.sin();
                pts[[i, 2]] = rng.gen_range(-1.0..1.0);
                lab.push(class as i64);
            }
            labels = Some(lab);
        }
        SyntheticKind::Line => {
            let mut lab = Vec::with_capacity(n);
            for i in 0..n {
                let x: f64 = rng.gen_range(0.0..3.0);
                pts[[i, 0]] = x;
                lab.push((x.floor() as i64).min(2));
            }
            labels = Some(lab);
        }
        SyntheticKind::TwoClustersTimeseries { step } => {
            if step >= TIMESERIES_STEPS {
                return Err(Error::InvalidArgument(format!(
                    "time-series step must be < {TIMESERIES_STEPS}, got {step}"
                )));
            }
            // Static centers depend on the seed only, so every frame of a
            // sequence shares them; the samples differ per frame.
            let dir = unit_vector(&mut rng, dim);
            let c0: Vec<f64> = dir.iter().map(|v| -5.0 * v).collect();
            let c1: Vec<f64> = dir.iter().map(|v| 5.0 * v).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 + step as u64);
            let n_dyn = n / 4;
            let n_static = n - n_dyn;
            let frac = step as f64 / (TIMESERIES_STEPS - 1) as f64;
            let mut lab = Vec::with_capacity(n);
            for i in 0..n {
                let (center, class): (Vec<f64>, i64) = if i < n_static / 2 {
                    (c0.clone(), 0)
                } else if i < n_static {
                    (c1.clone(), 1)
                } else {
                    (c0.iter().zip(&c1).map(|(a, b)| a + frac * (b - a)).collect(), 2)
                };
                for c in 0..dim {
                    pts[[i, c]] = center[c] + rng.sample::<f64, _>(StandardNormal);
                }
                lab.push(class);
            }
            labels = Some(lab);
            // Cluster spread is unit variance; `noise` adds on top below.
            return finish(pts, noise, &mut rng, ambient_dim, seed, labels, kind);
        }
    }
    finish(pts, noise, &mut rng, ambient_dim, seed, labels, kind)
}

fn finish(
    mut pts: Array2<f64>,
    noise: f64,
    rng: &mut ChaCha8Rng,
    ambient_dim: usize,
    seed: u64,
    labels: Option<Vec<i64>>,
    kind: SyntheticKind,
) -> Result<Dataset> {
    if noise > 0.0 {
        pts.mapv_inplace(|v| v + noise * rng.sample::<f64, _>(StandardNormal));
    }
    let map = embedding_map(pts.ncols(), ambient_dim, seed)?;
    let samples = if ambient_dim == pts.ncols() {
        pts
    } else {
        pts.dot(&map.t())
    };
    Dataset::new(samples, labels, kind.name())
}

/// All frames of the two-cluster time series for one seed.
pub fn gen_timeseries(n: usize, noise: f64, ambient_dim: usize, seed: u64) -> Result<Vec<Dataset>> {
    (0..TIMESERIES_STEPS)
        .map(|step| {
            gen_synthetic(
                SyntheticKind::TwoClustersTimeseries { step },
                n,
                noise,
                ambient_dim,
                seed,
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Seeded uniform permutation split with `floor(train_frac * n)` train rows.
pub fn split(dataset: &Dataset, train_frac: f64, seed: u64) -> Result<SplitPair> {
    let n = dataset.n();
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n_train = (train_frac * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "fraction {train_frac} of n={n} leaves an empty side"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_indices = perm.split_off(n_train);
    let train_indices = perm;
    Ok(SplitPair {
        train: dataset.subset(&train_indices),
        test: dataset.subset(&test_indices),
        train_indices,
        test_indices,
        seed,
    })
}

/// Writes a header row (`x0,x1,...[,label]`) followed by one row per sample.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let names: Vec<String> = (0..dataset.d()).map(|j| format!("x{j}")).collect();
    save_matrix_csv(path, &names, dataset.samples.view(), dataset.labels.as_deref())
}

/// Writes `m` under the given column names, optionally followed by a label
/// column. Values use the shortest representation that round-trips.
pub fn save_matrix_csv(
    path: impl AsRef<Path>,
    names: &[String],
    m: ArrayView2<f64>,
    labels: Option<&[i64]>,
) -> Result<()> {
    let path = path.as_ref();
    if names.len() != m.ncols() || labels.is_some_and(|l| l.len() != m.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "{}: {} names and {:?} labels for a {:?} matrix",
            path.display(),
            names.len(),
            labels.map(<[i64]>::len),
            m.dim()
        )));
    }
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = names.to_vec();
    if labels.is_some() {
        header.push(LABEL_COLUMN.to_string());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in m.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`save_csv`] (or any numeric CSV with a header).
/// Row numbers in errors count file lines, the header being line 1.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = r
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Data(format!("{}: empty file", path.display())));
    }
    let has_labels = header.iter().next_back().map(str::trim) == Some(LABEL_COLUMN);
    let width = header.len();
    let d = width - usize::from(has_labels);
    if d == 0 {
        return Err(Error::Data(format!("{}: no feature columns", path.display())));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if rec.len() != width {
            return Err(Error::Parse {
                row: line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            if has_labels && c == d {
                let lab: i64 = cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("invalid label {cell:?}"),
                })?;
                labels.push(lab);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: c + 1,
                    message: format!("non-numeric cell {cell:?}"),
                })?;
                values.push(v);
            }
        }
    }
    let n = values.len() / d;
    if n == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let samples = Array2::from_shape_vec((n, d), values).expect("row widths checked");
    Dataset::new(samples, has_labels.then_some(labels), name)
}
