//! Permutation-equivariant GNNs designed from the sets of a problem, with
//! graph-convolution and attention processors, trained without labels on
//! MISO precoding.

mod checkpoint;
mod descriptor;
mod eval;
mod flops;
pub mod layers;
mod model;
mod ps;
mod train;

pub use checkpoint::{from_checkpoint, to_checkpoint, Manifest};
pub use descriptor::{
    plan_gnn, AttentionPlacement, DescriptorKind, GnnPlan, InnerFunctions, RecursionPlan, SetDescriptor,
};
pub use eval::{
    bootstrap_mean, eval_se_ratio, eval_size_generalization, model_precoders, se_ratios, wmmse_reference,
    GeneralizationRow, GeneralizationSetup, RatioReport,
};
pub use flops::{count_flops, flop_sweep, loglog_slope, FlopRow};
pub use layers::{attention_update, gcn_update};
pub use model::{build_gnn_from_problem, GnnConfig, GnnModel, MacCount};
pub use ps::{
    pc_descriptors, precoder_matrix, predict_precoders, ps_batch_loss, ps_dataset, ps_descriptors, ps_features,
    ps_precoders, ps_sum_se, scale_to_power, UserCount, PS_AXES,
};
pub use train::{batch_gradients, train_unsupervised, Adam, TrainConfig, TrainReport};
