//! Small feed-forward networks for the frame-subset scorers: 3-layer MLPs,
//! softmax cross-entropy, backpropagation, and Adam/SGD training in f64.

mod mlp;
mod train;

pub use mlp::{
    cross_entropy_loss, mlp_backward, softmax, Activation, ForwardCache, Gradients, Mlp,
};
pub use train::{train, LabeledExample, Optimizer, TrainConfig, TrainReport, Trainable};
