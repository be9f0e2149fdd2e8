//! Synthetic shape generation: surface-area-proportional samplers over a
//! small family of primitives, posed and normalized into datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normalize, Dataset, Manifest, SourceInfo};
use crate::error::{Error, Result};
use crate::metrics::PointCloud;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositePart {
    pub shape: Primitive,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum Primitive {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    Torus { major_radius: f64, minor_radius: f64 },
    Cone { radius: f64, height: f64 },
    CompositeUnion { parts: Vec<CompositePart> },
}

impl Primitive {
    pub fn surface_area(&self) -> Result<f64> {
        use std::f64::consts::PI;
        match self {
            Primitive::Sphere { radius } => {
                require_positive(&[("radius", *radius)])?;
                Ok(4.0 * PI * radius * radius)
            }
            Primitive::Box { half_extents: [a, b, c] } => {
                require_positive(&[("x extent", *a), ("y extent", *b), ("z extent", *c)])?;
                Ok(8.0 * (a * b + b * c + c * a))
            }
            Primitive::Cylinder { radius, height } => {
                require_positive(&[("radius", *radius), ("height", *height)])?;
                Ok(2.0 * PI * radius * height + 2.0 * PI * radius * radius)
            }
            Primitive::Torus {
                major_radius,
                minor_radius,
            } => {
                require_positive(&[("major radius", *major_radius), ("minor radius", *minor_radius)])?;
                if minor_radius >= major_radius {
                    return Err(Error::Config(format!(
                        "torus needs minor radius {minor_radius} < major radius {major_radius}"
                    )));
                }
                Ok(4.0 * PI * PI * major_radius * minor_radius)
            }
            Primitive::Cone { radius, height } => {
                require_positive(&[("radius", *radius), ("height", *height)])?;
                let slant = (radius * radius + height * height).sqrt();
                Ok(PI * radius * slant + PI * radius * radius)
            }
            Primitive::CompositeUnion { parts } => {
                if parts.is_empty() {
                    return Err(Error::Config("composite shape has no parts".into()));
                }
                let mut total = 0.0;
                for part in parts {
                    if matches!(part.shape, Primitive::CompositeUnion { .. }) {
                        return Err(Error::Config("composite shapes do not nest".into()));
                    }
                    total += part.shape.surface_area()?;
                }
                Ok(total)
            }
        }
    }

    /// `k` surface points, area-proportional across faces/parts. Spheres
    /// sample antithetic pairs, which pins the sample centroid to the
    /// sphere center (an unpaired last point remains for odd `k`).
    fn sample_many(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
        if let Primitive::Sphere { radius } = self {
            let mut out = Vec::with_capacity(k);
            while out.len() + 2 <= k {
                let dir = random_unit_vector(rng);
                out.push([dir[0] * radius, dir[1] * radius, dir[2] * radius]);
                out.push([-dir[0] * radius, -dir[1] * radius, -dir[2] * radius]);
            }
            if out.len() < k {
                let dir = random_unit_vector(rng);
                out.push([dir[0] * radius, dir[1] * radius, dir[2] * radius]);
            }
            return out;
        }
        (0..k).map(|_| self.sample(rng)).collect()
    }

    /// One surface point, area-proportional across faces/parts.
    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        use std::f64::consts::PI;
        match self {
            Primitive::Sphere { radius } => {
                let dir = random_unit_vector(rng);
                [dir[0] * radius, dir[1] * radius, dir[2] * radius]
            }
            Primitive::Box { half_extents: [a, b, c] } => {
                // Face picked by area: ±x (4bc), ±y (4ac), ±z (4ab).
                let areas = [4.0 * b * c, 4.0 * b * c, 4.0 * a * c, 4.0 * a * c, 4.0 * a * b, 4.0 * a * b];
                let face = weighted_pick(&areas, rng);
                let u = rng.random_range(-1.0..1.0);
                let v = rng.random_range(-1.0..1.0);
                match face {
                    0 => [*a, u * b, v * c],
                    1 => [-*a, u * b, v * c],
                    2 => [u * a, *b, v * c],
                    3 => [u * a, -*b, v * c],
                    4 => [u * a, v * b, *c],
                    _ => [u * a, v * b, -*c],
                }
            }
            Primitive::Cylinder { radius, height } => {
                let lateral = 2.0 * PI * radius * height;
                let cap = PI * radius * radius;
                let region = weighted_pick(&[lateral, cap, cap], rng);
                let theta = rng.random_range(0.0..2.0 * PI);
                match region {
                    0 => {
                        let z = rng.random_range(-0.5..0.5) * height;
                        [radius * theta.cos(), radius * theta.sin(), z]
                    }
                    cap_side => {
                        let r = radius * rng.random_range(0.0f64..1.0).sqrt();
                        let z = if cap_side == 1 { height / 2.0 } else { -height / 2.0 };
                        [r * theta.cos(), r * theta.sin(), z]
                    }
                }
            }
            Primitive::Torus {
                major_radius: rr,
                minor_radius: r,
            } => {
                let theta = rng.random_range(0.0..2.0 * PI);
                // Rejection on the tube angle: area element goes as R + r cos φ.
                let phi = loop {
                    let phi = rng.random_range(0.0..2.0 * PI);
                    let accept = (rr + r * phi.cos()) / (rr + r);
                    if rng.random_range(0.0..1.0) < accept {
                        break phi;
                    }
                };
                let ring = rr + r * phi.cos();
                [ring * theta.cos(), ring * theta.sin(), r * phi.sin()]
            }
            Primitive::Cone { radius, height } => {
                let slant_area = PI * radius * (radius * radius + height * height).sqrt();
                let base_area = PI * radius * radius;
                let region = weighted_pick(&[slant_area, base_area], rng);
                let theta = rng.random_range(0.0..2.0 * PI);
                if region == 0 {
                    // Lateral surface: area grows linearly from the apex.
                    let t = rng.random_range(0.0f64..1.0).sqrt();
                    let r = t * radius;
                    let z = height / 2.0 - t * height;
                    [r * theta.cos(), r * theta.sin(), z]
                } else {
                    let r = radius * rng.random_range(0.0f64..1.0).sqrt();
                    [r * theta.cos(), r * theta.sin(), -height / 2.0]
                }
            }
            Primitive::CompositeUnion { parts } => {
                let areas: Vec<f64> = parts.iter().map(|p| p.shape.surface_area().unwrap_or(0.0)).collect();
                let pick = weighted_pick(&areas, rng);
                let part = &parts[pick];
                let p = part.shape.sample(rng);
                [p[0] + part.offset[0], p[1] + part.offset[1], p[2] + part.offset[2]]
            }
        }
    }
}

fn require_positive(params: &[(&str, f64)]) -> Result<()> {
    for (name, v) in params {
        if !(*v > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-12 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..1.0) * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Rigid pose: unit quaternion rotation then translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0, 0.0, 0.0],
        }
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        // Uniform rotation from a normalized Gaussian quaternion.
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        Pose {
            rotation: [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm],
            translation: std::array::from_fn(|_| rng.random_range(-0.5..0.5)),
        }
    }

    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let [w, x, y, z] = self.rotation;
        // Rotation matrix from the unit quaternion.
        let rot = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        std::array::from_fn(|i| rot[i][0] * p[0] + rot[i][1] * p[1] + rot[i][2] * p[2] + self.translation[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecipe {
    pub primitive: Primitive,
    pub pose: Pose,
    pub seed: u64,
    pub category: String,
}

/// Exactly `k` posed surface samples, deterministic under the recipe seed.
/// Coordinates are raw (not normalized).
pub fn sample_recipe(recipe: &ShapeRecipe, k: usize) -> Result<Vec<[f32; 3]>> {
    if k == 0 {
        return Err(Error::Config("cannot sample zero points".into()));
    }
    recipe.primitive.surface_area()?;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    Ok(recipe
        .primitive
        .sample_many(k, &mut rng)
        .into_iter()
        .map(|p| {
            let p = recipe.pose.apply(p);
            [p[0] as f32, p[1] as f32, p[2] as f32]
        })
        .collect())
}

/// Samples every recipe into a normalized dataset. Deterministic under
/// `(recipes, seed)`: the dataset seed perturbs each recipe's stream.
pub fn generate_synthetic(recipes: &[ShapeRecipe], k: usize, seed: u64) -> Result<Dataset> {
    if recipes.is_empty() {
        return Err(Error::Config("no recipes to generate from".into()));
    }
    let mut clouds = Vec::with_capacity(recipes.len());
    let mut categories: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(recipes.len());
    for (i, recipe) in recipes.iter().enumerate() {
        let mut effective = recipe.clone();
        effective.seed = mix_seed(seed, recipe.seed, i as u64);
        let raw = PointCloud::new(sample_recipe(&effective, k)?)?;
        clouds.push(normalize(&raw)?);
        let label = match categories.iter().position(|c| c == &recipe.category) {
            Some(idx) => idx as u32,
            None => {
                categories.push(recipe.category.clone());
                (categories.len() - 1) as u32
            }
        };
        labels.push(label);
    }
    let manifest = Manifest {
        source: SourceInfo::Synthetic { categories },
        seed: Some(seed),
        normalized: true,
        k,
        count: clouds.len(),
    };
    let mut ds = Dataset::from_clouds(clouds, manifest)?;
    ds.labels = Some(labels);
    Ok(ds)
}

fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over the concatenated inputs
    let mut z = a ^ b.rotate_left(23) ^ c.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const DEFAULT_CATEGORIES: [&str; 8] = [
    "sphere", "box", "plate", "cylinder", "rod", "cone", "torus", "composite",
];

/// The stock desk-scale corpus: 8 shape categories with randomized sizes and
/// poses, `instances` of each.
pub fn default_recipes(instances: usize, seed: u64) -> Vec<ShapeRecipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC0FFEE, 0));
    let mut recipes = Vec::with_capacity(DEFAULT_CATEGORIES.len() * instances);
    for category in DEFAULT_CATEGORIES {
        for _ in 0..instances {
            let primitive = match category {
                "sphere" => Primitive::Sphere {
                    radius: rng.random_range(0.5..1.5),
                },
                "box" => Primitive::Box {
                    half_extents: std::array::from_fn(|_| rng.random_range(0.4..1.2)),
                },
                "plate" => Primitive::Box {
                    half_extents: [rng.random_range(0.8..1.4), rng.random_range(0.8..1.4), rng.random_range(0.05..0.15)],
                },
                "cylinder" => Primitive::Cylinder {
                    radius: rng.random_range(0.4..0.9),
                    height: rng.random_range(0.8..1.8),
                },
                "rod" => Primitive::Cylinder {
                    radius: rng.random_range(0.08..0.2),
                    height: rng.random_range(1.5..2.5),
                },
                "cone" => Primitive::Cone {
                    radius: rng.random_range(0.4..1.0),
                    height: rng.random_range(0.8..1.8),
                },
                "torus" => Primitive::Torus {
                    major_radius: rng.random_range(0.7..1.2),
                    minor_radius: rng.random_range(0.15..0.4),
                },
                _ => Primitive::CompositeUnion {
                    parts: vec![
                        CompositePart {
                            shape: Primitive::Sphere {
                                radius: rng.random_range(0.3..0.6),
                            },
                            offset: [0.0, 0.0, rng.random_range(0.5..0.9)],
                        },
                        CompositePart {
                            shape: Primitive::Box {
                                half_extents: std::array::from_fn(|_| rng.random_range(0.3..0.7)),
                            },
                            offset: [0.0, 0.0, 0.0],
                        },
                    ],
                },
            };
            recipes.push(ShapeRecipe {
                primitive,
                pose: Pose::random(&mut rng),
                seed: rng.random(),
                category: category.to_string(),
            });
        }
    }
    recipes
}

/// 8 categories × `instances` shapes, `k` points each, normalized.
pub fn synthetic_dataset(instances: usize, k: usize, seed: u64) -> Result<Dataset> {
    generate_synthetic(&default_recipes(instances, seed), k, seed)
}
