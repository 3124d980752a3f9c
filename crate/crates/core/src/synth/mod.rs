//! Synthetic scenes of repeated planar frames, the warp-error metric and the
//! benchmark studies built on them.

mod scene;
mod study;
mod warp;

pub use scene::{add_noise, gen_scene, Camera, Motion, SceneParams, SyntheticScene};
pub use study::{
    run_study, run_study_with, scene_rng, scene_sample, test_instances, GroupSummary, Quartiles, StudyKind,
    StudyParams, StudyRecord, StudyResult, CSV_HEADER, GOOD_WARP_PX,
};
pub use warp::{plane_grid, warp_error, warp_error_map, WarpErrorReport, GRID_SIZE};
