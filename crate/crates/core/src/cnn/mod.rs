//! Convolutional post-processing inference.
//!
//! A network is a DAG of convolution, activation, addition and channel
//! concatenation layers described by a [`NetworkSpec`]; its parameters come
//! from a [`WeightFile`]. [`Network`] binds the two after validation and runs
//! inference on a single plane, whole or in overlapping tiles.

mod conv;
mod mfrnet;
mod network;
mod tensor;
mod tiled;
mod weights;

pub use conv::{conv2d, ConvParams, Precision};
pub use mfrnet::{build_mfrnet_style, MfrnetConfig};
pub use network::{Activation, LayerOp, LayerSpec, Network, NetworkSpec, ShapeTable};
pub use tensor::Tensor;
pub use tiled::tiled_apply;
pub use weights::{ConvWeights, WeightFile, WEIGHT_MAGIC};
