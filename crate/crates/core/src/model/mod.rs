//! Architectures, parameter storage, growth and checkpoints.

mod arch;
mod checkpoint;
mod grow;
mod network;

pub use arch::{cifar_hidden_unit, cifar_resnet, mnist_dense, mnist_hidden_unit, Architecture, LayerKind, LayerSpec};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, INIT_SCHEME, MAGIC};
pub use grow::{dirac_kernel, grow_network, identity_params, BlockInit, GrowthInit, GrowthOptions};
pub use network::{
    build_network, compression_ratio, forward, forward_graph, forward_with, init_layer, is_spanning_subnetwork,
    surviving_parameters, ForwardPass, MaskSet, WeightStore,
};
