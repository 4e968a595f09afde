//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dims, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    /// Three Gaussian clusters in 2-D, one-hot targets.
    Blobs,
    /// Two interleaved half circles in 2-D, one-hot targets.
    Moons,
    /// Noisy copies of sparse `{0, 1}` prototypes in 32-D; targets equal inputs.
    SparseBinary,
}

impl std::str::FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(DataKind::Blobs),
            "moons" => Ok(DataKind::Moons),
            "sparse_binary" => Ok(DataKind::SparseBinary),
            other => Err(Error::Config(format!("unknown dataset kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    seed: u64,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        check_dims(inputs.len(), targets.len())?;
        if inputs
            .iter()
            .chain(&targets)
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite("dataset values must be finite".into()));
        }
        Ok(Self {
            inputs,
            targets,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The first `⌊fraction·n⌋` samples and the rest.
    pub fn split(&self, fraction: f64) -> (Dataset, Dataset) {
        let k = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
        let part = |r: std::ops::Range<usize>| Dataset {
            inputs: self.inputs[r.clone()].to_vec(),
            targets: self.targets[r].to_vec(),
            seed: self.seed,
        };
        (part(0..k), part(k..self.len()))
    }
}

fn one_hot(k: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

pub fn make_synthetic_data(kind: DataKind, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        DataKind::Blobs => {
            let centers: Vec<[f64; 2]> = (0..3)
                .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
                .collect();
            let noise = Normal::new(0.0, 1.0).expect("valid normal");
            let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let c = centers[i % 3];
                xs.push(vec![
                    c[0] + noise.sample(&mut rng),
                    c[1] + noise.sample(&mut rng),
                ]);
                ys.push(one_hot(i % 3, 3));
            }
            Dataset::new(xs, ys, seed)
        }
        DataKind::Moons => {
            let noise = Normal::new(0.0, 0.1).expect("valid normal");
            let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let theta = rng.random_range(0.0..std::f64::consts::PI);
                let (x, y) = if i % 2 == 0 {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                xs.push(vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
                ys.push(one_hot(i % 2, 2));
            }
            Dataset::new(xs, ys, seed)
        }
        DataKind::SparseBinary => sparse_binary(n, 32, seed),
    }
}

/// Eight prototypes with density 1/4; each sample copies one and flips every
/// bit with probability 0.05.
pub fn sparse_binary(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..8)
        .map(|_| {
            (0..dim)
                .map(|_| f64::from(u8::from(rng.random_bool(0.25))))
                .collect()
        })
        .collect();
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let p = &prototypes[rng.random_range(0..prototypes.len())];
            p.iter()
                .map(|&b| if rng.random_bool(0.05) { 1.0 - b } else { b })
                .collect()
        })
        .collect();
    Dataset::new(xs.clone(), xs, seed)
}
