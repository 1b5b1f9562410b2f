//! A minimal dense-network toolkit: affine layers with batch normalisation, ReLU/sigmoid
//! activations, binary cross-entropy, Adam and a binary checkpoint format.
//!
//! Networks run on row-major batches (`batch x features`). A forward pass returns an
//! [`MlpTape`] holding every intermediate the reverse sweep needs; parameters are never
//! mutated by a forward pass, so finite-difference checks can probe them freely.

mod adam;
mod checkpoint;
mod loss;
mod mlp;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{config_digest, Checkpoint, NamedNet, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{bce_grad, bce_loss, bits_to_targets, BCE_CLAMP};
pub use mlp::{
    Activation, BatchNorm, Dense, MlpSpec, MlpTape, Mode, NetGrads, NetParams, BN_EPS, BN_MOMENTUM,
};
