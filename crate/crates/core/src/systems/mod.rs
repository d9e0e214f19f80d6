//! Built-in families of stage sequences and brute-force oracles for them.

mod circle;
mod matrix;
mod oracle;

pub use circle::{build_circle_chain, CircleMapSpec, PerturbedDoubling};
pub use matrix::{build_matrix_chain, MatrixChainSpec};
pub use oracle::{oracle_nonstationary_products, oracle_stationary_rpf, ProductOracle, StationaryOracle};
