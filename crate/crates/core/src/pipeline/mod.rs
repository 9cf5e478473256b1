//! Job configuration, dataset manifests and the batch commands that chain
//! style transfer, fine-tuning, descriptor extraction and evaluation.

mod commands;
mod config;
mod gradcheck;
mod manifest;

pub use commands::{
    cmd_eval, cmd_extract, cmd_train, cmd_transfer, describe_records, with_jobs, TrainSummary, TransferItem, CMC_FILE, REPORT_FILE,
    TRAIN_LOG, TRANSFERRED_MANIFEST, WEIGHTS_FILE,
};
pub use config::{JobConfig, DEFAULT_GRADCHECK_EPS, DEFAULT_GRADCHECK_SEED};
pub use gradcheck::{run_gradcheck, toy_two_conv_net, GradcheckReport, NamedCheck, GRADCHECK_TOLERANCE};
pub use manifest::{format_manifest, Manifest, Record, Role, MANIFEST_HEADER};
