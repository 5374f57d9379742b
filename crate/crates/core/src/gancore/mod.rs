//! Model families, losses and the autodiff engine underneath them.

pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use losses::{discriminator_accuracy, gradient_penalty, vanilla_losses, wasserstein_losses, AdversarialLosses};
pub use model::{build_model, Family, GanPair, ModelSpec, OutputShape};
pub use nn::{Layer, NamedTensor, Net, Phase};
pub use optim::{Optimizer, OptimizerKind};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};
