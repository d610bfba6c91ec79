//! Joint fitting of body parameters and object pose to the fields: data
//! terms, contact term, keypoint and prior terms, pose initialization from
//! the pose fields and a staged first-order optimizer.

mod config;
mod contact;
mod energy;
mod init;
mod keypoints;
mod optimize;
mod pose;

pub use config::FitConfig;
pub use contact::{detect_contacts, energy_contact, ContactEnergy, ContactSets};
pub use energy::{
    energy_human, energy_j2d, energy_object, energy_reg, human_data_term, keypoint_term, object_center_term,
    object_data_term, object_pose_gradient, object_udf_term, part_cross_entropy, ObjectGradient, ObjectTerms,
    SilhouetteTerm, VertexEnergy,
};
pub use init::{init_object_pose, object_probes, svd_project_so3, ObjectInit};
pub use keypoints::{Keypoint2D, Keypoints2D};
pub use optimize::{joint_fit, FitProblem, FitReport, FitResult, ReportRow, Stage, TermValues};
pub use pose::ObjectPose;
