//! Desk-scale two-branch segmentation network with hand-written backward
//! passes, a procedural scene generator and a momentum SGD trainer.

pub mod checkpoint;
mod conv;
mod net;
mod ops;
mod scene;
mod train;

pub use conv::ConvLayer;
pub use net::{ForwardCache, ForwardOutput, ParamGrads, ToyWsdNet, INPUT_MULTIPLE, LAYER_COUNT};
pub use scene::gen_scene;
pub use train::{loss_and_grads, pixel_accuracy, train, TrainConfig, TrainOutcome, Trainer};
