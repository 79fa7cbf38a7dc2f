//! Seeded, reproducible weight initialization.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Init scale for weight matrices and conv kernels.
pub const INIT_STD: f64 = 0.02;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normal(0, std²) truncated at two standard deviations, sampled by
/// rejection. Sampling happens in f64 regardless of the target element type
/// so both precisions draw the same sequence.
pub fn trunc_normal<E: Scalar>(shape: Vec<usize>, std: f64, rng: &mut ChaCha8Rng) -> Tensor<E> {
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        let z = loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z;
            }
        };
        data.push(E::from_f64(z * std));
    }
    Tensor::from_vec(shape, data).expect("shape validated by caller")
}

/// Standard-normal tensor from a bare seed (used for reproducible inputs).
pub fn standard_normal<E: Scalar>(shape: Vec<usize>, seed: u64) -> Tensor<E> {
    let mut rng = rng_from_seed(seed);
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        let z: f64 = rng.sample(StandardNormal);
        data.push(E::from_f64(z));
    }
    Tensor::from_vec(shape, data).expect("shape validated by caller")
}
