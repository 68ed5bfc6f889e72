//! The four in-pipeline fusion hooks (point decoration, collective proposals,
//! raw box features, collective-box keypoints) plus the analytic second stage
//! that scores proposals from local point support.

mod decorate;
mod features;
mod proposals;
mod refine;

pub use decorate::{decorate_points, undecorated, DecoratedPoint};
pub use features::{
    assemble_raw_box_features, collect_keypoint_features, KeypointFeatures, KeypointLayout, RawBoxLayout, RAW_BOX_CHANNELS,
};
pub use proposals::{inject_proposals, Proposal, ProposalOrigin};
pub use refine::{nms_bev, refine_proposals, supporting_points, RefineParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("bad fusion parameter: {0}")]
    BadParameter(String),
}
