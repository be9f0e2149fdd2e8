//! Dataset handling: normalization, synthetic generation, file ingestion,
//! splits, and batching.

mod io;
mod synth;

pub use io::{load_clouds, read_packed, read_ply, read_xyz, write_packed, write_ply, write_xyz, FileFormat};
pub use synth::{
    default_recipes, generate_synthetic, sample_recipe, synthetic_dataset, CompositePart, Pose, Primitive,
    ShapeRecipe, DEFAULT_CATEGORIES,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PointCloud;
use crate::tensor::Tensor;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let sum = train + val + test;
        if (sum - 1.0).abs() > 1e-9 || train < 0.0 || val < 0.0 || test < 0.0 {
            return Err(Error::Config(format!(
                "split fractions {train}/{val}/{test} must be non-negative and sum to 1"
            )));
        }
        Ok(SplitFractions { train, val, test })
    }

    pub fn train_test_80_20() -> Self {
        SplitFractions {
            train: 0.8,
            val: 0.0,
            test: 0.2,
        }
    }
}

/// Where a dataset came from, for the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SourceInfo {
    Synthetic { categories: Vec<String> },
    Files { paths: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: SourceInfo,
    pub seed: Option<u64>,
    pub normalized: bool,
    pub k: usize,
    pub count: usize,
}

/// A set of equal-size clouds with optional labels and split assignment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
    pub labels: Option<Vec<u32>>,
    pub split: Vec<Split>,
    pub k: usize,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn from_clouds(clouds: Vec<PointCloud>, manifest: Manifest) -> Result<Self> {
        if clouds.is_empty() {
            return Err(Error::Data("dataset has no clouds".into()));
        }
        let k = clouds[0].len();
        for (i, c) in clouds.iter().enumerate() {
            if c.len() != k {
                return Err(Error::Data(format!(
                    "cloud {i} has {} points, dataset point count is {k}",
                    c.len()
                )));
            }
        }
        let split = vec![Split::Train; clouds.len()];
        Ok(Dataset {
            split,
            k,
            labels: None,
            manifest,
            clouds,
        })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    /// Indices assigned to `split`, in dataset order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Centers the centroid at the origin and scales the farthest point to
/// distance 1 (unit sphere).
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud> {
    let n = cloud.len() as f64;
    let mut centroid = [0.0f64; 3];
    for p in cloud.points() {
        for a in 0..3 {
            centroid[a] += p[a] as f64;
        }
    }
    for c in centroid.iter_mut() {
        *c /= n;
    }
    let mut max_r2 = 0.0f64;
    for p in cloud.points() {
        let mut r2 = 0.0;
        for a in 0..3 {
            let d = p[a] as f64 - centroid[a];
            r2 += d * d;
        }
        max_r2 = max_r2.max(r2);
    }
    let radius = max_r2.sqrt();
    if radius < 1e-12 {
        return Err(Error::Degenerate(
            "all points coincide; cannot scale to the unit sphere".into(),
        ));
    }
    let inv = 1.0 / radius;
    PointCloud::new(
        cloud
            .points()
            .iter()
            .map(|p| {
                [
                    ((p[0] as f64 - centroid[0]) * inv) as f32,
                    ((p[1] as f64 - centroid[1]) * inv) as f32,
                    ((p[2] as f64 - centroid[2]) * inv) as f32,
                ]
            })
            .collect(),
    )
}

/// Deterministic shuffle-then-partition. Val and test sizes round down;
/// the remainder goes to train. Requesting a fraction that rounds to an
/// empty split is an error.
pub fn split_dataset(ds: &mut Dataset, fractions: SplitFractions, seed: u64) -> Result<()> {
    let n = ds.len();
    let n_val = (fractions.val * n as f64).floor() as usize;
    let n_test = (fractions.test * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;
    for (frac, count, name) in [
        (fractions.train, n_train, "train"),
        (fractions.val, n_val, "val"),
        (fractions.test, n_test, "test"),
    ] {
        if frac > 0.0 && count == 0 {
            return Err(Error::Config(format!(
                "{name} fraction {frac} yields an empty split on {n} clouds"
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    for (rank, &idx) in order.iter().enumerate() {
        ds.split[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(())
}

/// One training batch: encoder-layout input and the originating clouds.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, 3, K]`
    pub x: Tensor,
    pub clouds: Vec<PointCloud>,
    pub indices: Vec<usize>,
}

/// Per-epoch reshuffled batches over one split. The order is a pure
/// function of `(seed, epoch)`; the final partial batch is included.
pub fn batches(
    ds: &Dataset,
    split: Split,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> impl Iterator<Item = Batch> + '_ {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut indices = ds.split_indices(split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    indices.shuffle(&mut rng);
    let chunks: Vec<Vec<usize>> = indices.chunks(batch_size).map(|c| c.to_vec()).collect();
    chunks.into_iter().map(move |chunk| {
        let b = chunk.len();
        let k = ds.k;
        let mut x = Tensor::zeros(&[b, 3, k]);
        let mut clouds = Vec::with_capacity(b);
        for (bi, &idx) in chunk.iter().enumerate() {
            let cloud = &ds.clouds[idx];
            for (n, p) in cloud.points().iter().enumerate() {
                for c in 0..3 {
                    x.set3(bi, c, n, p[c]);
                }
            }
            clouds.push(cloud.clone());
        }
        Batch {
            x,
            clouds,
            indices: chunk,
        }
    })
}

/// `[B, K, 3]` reconstruction rows as point clouds.
pub fn tensor_rows_to_clouds(t: &Tensor) -> Result<Vec<PointCloud>> {
    if t.rank() != 3 || t.dim(2) != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected [B, K, 3] points, got {:?}",
            t.shape()
        )));
    }
    let (b, k) = (t.dim(0), t.dim(1));
    (0..b)
        .map(|bi| {
            let start = bi * k * 3;
            PointCloud::from_flat(&t.data()[start..start + k * 3])
        })
        .collect()
}
