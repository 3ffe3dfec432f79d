//! Learnable building blocks: dense nets with analytic gradients, frequency
//! encoding, the multi-resolution hash grid and Adam.

mod adam;
mod dense;
mod freq;
mod hashgrid;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use dense::{Activation, DenseCache, DenseLayer, DenseNet, LEAKY_SLOPE};
pub use freq::{freq_encode, freq_encode_backward, freq_encode_rows};
pub use hashgrid::{HashCache, HashGrid, HASH_PRIMES, MAX_RESOLUTION};
