//! Classical iterative solvers and the problem instances they operate on.

pub mod channel;
pub mod gd_pb;
pub mod instance;
pub mod wmmse_pc;
pub mod wmmse_pm;
pub mod wmmse_ps;

pub use channel::{dbm_to_watt, draw_channel, path_loss_gain, watt_to_dbm, CMat, ChannelModel};
pub use gd_pb::{gd_pb_solve, gd_pb_step, GdConfig, PbSolution, PbState, PbStepParams, PbUpdateForm};
pub use instance::{
    evaluate_objective, generate_channels, Constants, PbInstance, PcInstance, PmInstance, ProblemInstance,
    PsInstance, Sizes, Variables, Variant,
};
pub use wmmse_pc::{wmmse_pc_solve, wmmse_pc_solve_beams, wmmse_pc_step, PcSolution, PcState};
pub use wmmse_pm::{pm_normalize_channels, wmmse_pm_solve, wmmse_pm_step, PmFirstSumChannel, PmSolution, PmState};
pub use wmmse_ps::{wmmse_ps_solve, wmmse_ps_step, PsSolution, PsState};
