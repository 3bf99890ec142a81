//! Seeded synthetic matrix generation.
//!
//! Every random stream is a ChaCha8 generator seeded from a `u64`. Sweeps
//! derive one seed per grid cell with [`derive_seed`]:
//!
//! ```text
//! derive_seed(master, index) = splitmix64(master + 0x9E3779B97F4A7C15 * (index + 1))
//! ```
//!
//! (wrapping `u64` arithmetic; `splitmix64` is the standard SplitMix64
//! finalizer). A "density d" matrix has each entry independently non-zero with
//! probability `d`, with the non-zero value drawn from the chosen
//! distribution.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TasdError};
use crate::matrix::DenseMatrix;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Value distribution of the non-zero entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueDist {
    /// Uniform on `[0, 1)`.
    Uniform01,
    /// Normal with mean 0 and standard deviation 1/3.
    NormalThird,
}

impl ValueDist {
    pub const ALL: [ValueDist; 2] = [ValueDist::Uniform01, ValueDist::NormalThird];

    pub fn name(self) -> &'static str {
        match self {
            ValueDist::Uniform01 => "uniform",
            ValueDist::NormalThird => "normal",
        }
    }
}

impl fmt::Display for ValueDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ValueDist {
    type Err = TasdError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform01" => Ok(ValueDist::Uniform01),
            "normal" => Ok(ValueDist::NormalThird),
            _ => Err(TasdError::InvalidConfig(format!(
                "unknown distribution {s:?}"
            ))),
        }
    }
}

/// Generates a `rows x cols` matrix where each entry is non-zero with
/// probability `density`.
pub fn random_sparse(
    rows: usize,
    cols: usize,
    density: f64,
    dist: ValueDist,
    seed: u64,
) -> Result<DenseMatrix> {
    if !(0.0..=1.0).contains(&density) {
        return Err(TasdError::InvalidConfig(format!(
            "density {density} outside [0, 1]"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0 / 3.0).expect("valid normal");
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < density {
                match dist {
                    ValueDist::Uniform01 => rng.random::<f64>(),
                    ValueDist::NormalThird => normal.sample(&mut rng),
                }
            } else {
                0.0
            }
        })
        .collect();
    Ok(DenseMatrix::from_parts(rows, cols, data))
}
