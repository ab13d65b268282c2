//! Pose recovery: least squares, localization, calibration and baselines.

mod calibrate;
mod lm;
mod localize;
mod model_obs;
mod static_dipole;
mod superfast;

pub use calibrate::{
    calibrate, joint_identifiability, CalibrationResult, Identifiability, VIF_LIMIT,
};
pub use lm::{jacobian, levenberg_marquardt, LeastSquares, LmConfig, LmOutcome};
pub use localize::{
    canonical_orientations, fit_r2, localize, mirror_candidate, residuals_at, sse_at,
    ColdStartGrid, InitialGuess, LocalizationRecord, LocalizationResult, SolverConfig,
};
pub use model_obs::{model_observations, predict_coarse, predict_into, FitContext, Workspace};
pub use static_dipole::{dc_observations, static_localize, static_prediction, StaticFitResult};
pub use superfast::{localize_superfast, SegmentOutcome};
