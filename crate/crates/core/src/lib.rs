//! Deterministic soil-sampling simulator and control stack.
//!
//! The pipeline mirrors a robot arm collecting soil from a mixed bed:
//!
//! 1. **terrain** – synthetic ground truth: materials, heights, albedo, a
//!    ray-cast camera view and a noisy infrared range sensor.
//! 2. **vision** – dataset handling and a trainable per-pixel segmenter that
//!    labels pickable soil, plus the accuracy/precision/IoU/recall bundle.
//! 3. **contour** – border following over the predicted mask, region areas
//!    and centroids, and conversion to arm-frame hover targets.
//! 4. **planner** – RRT* in the 3D end-effector workspace with reach,
//!    floor and box-obstacle constraints.
//! 5. **control** – the proportional dive loop, grasp model and the pick
//!    state machine with retries, interrupts and failure causes.
//! 6. **experiment** – seeded multi-trial runs, Wilson score intervals,
//!    failure breakdowns, vision evaluation and ablation tables.
//!
//! Every operation is deterministic given its configuration and seed; all
//! randomness flows through explicitly seeded ChaCha streams.

pub mod contour;
pub mod control;
pub mod experiment;
pub mod geometry;
pub mod img;
pub mod planner;
pub mod scenario;
pub mod synth;
pub mod terrain;
pub mod vision;

pub use contour::{candidate_targets, find_regions, Contour, Region, TargetCandidate};
pub use control::{
    attempt_grip, dive_step, run_dive, run_pick, ControllerConfig, FailureCause, GraspModel,
    InterruptFlag, InterruptReason, PickOutcome, PickReport, PickState,
};
pub use experiment::{
    run_ablation, run_experiment, run_vision_eval, trial_seed, wilson_interval, ExperimentReport,
    WilsonInterval,
};
pub use geometry::{
    back_project, intrinsics_from_fov, project, CameraIntrinsics, GeometryError, PixelDepth, Pose,
};
pub use img::{DepthImage, Mask, RgbImage};
pub use planner::{plan_rrt_star, reachable, segment_collides, Aabb, Path, PlannerConfig, Workspace};
pub use terrain::{
    generate_terrain, DepthNoiseModel, MaterialClass, TerrainConfig, TerrainGrid,
};
pub use vision::{
    augment, evaluate, segment, split_dataset, train, DatasetSplit, LabeledImage, Metrics,
    SegmenterModel, TrainConfig,
};
