//! Image-space style transfer: content/style/total losses, Adam with a
//! pixel clamp, and the iterative optimization loop.

pub mod adam;
mod loss;
mod transfer;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use loss::{
    content_loss, gram, layer_style_loss, style_loss, total_loss, ContentTarget, LossReport, StyleLayerTarget,
    StyleLoss, StyleTarget,
};
pub use transfer::{
    format_loss_trace, run_transfer, transfer_gradient, write_loss_trace, InitMode, NstConfig, TransferOutcome,
};
