//! Independent localization of consecutive short segments of one ring-down.

use serde::{Deserialize, Serialize};

use super::localize::{localize, InitialGuess, LocalizationResult, SolverConfig};
use super::model_obs::FitContext;
use crate::model::SignalFrame;
use crate::signal::{segment_signal, PhaseAnchor};
use crate::{Result, SmolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOutcome {
    pub index: usize,
    pub start_time: f64,
    pub result: Option<LocalizationResult>,
    pub error: Option<String>,
}

/// Localizes every segment of `n_seg` half periods in a processed frame.
///
/// Each segment is warm-started from the previous successful one. Failures are
/// recorded per segment.
pub fn localize_superfast(
    frame: &SignalFrame,
    ctx: &FitContext,
    n_seg: usize,
    anchor: &PhaseAnchor,
    init: &InitialGuess,
    cfg: &SolverConfig,
    until: Option<f64>,
) -> Result<Vec<SegmentOutcome>> {
    let segments = segment_signal(
        frame,
        ctx.oscillator.f_res,
        n_seg,
        anchor.anchor_time,
        until,
    )?;
    let mut guess = *init;
    let mut phase_ctx = ctx.with_phase(anchor.phi);
    let mut out = Vec::with_capacity(segments.len());
    for (index, seg) in segments.iter().enumerate() {
        match localize(seg, &phase_ctx, &guess, cfg) {
            Ok(r) => {
                guess = InitialGuess::Pose(r.pose);
                phase_ctx = ctx.with_phase(r.phi);
                out.push(SegmentOutcome {
                    index,
                    start_time: seg.anchor,
                    result: Some(r),
                    error: None,
                });
            }
            Err(e @ (SmolError::NoSignal(_) | SmolError::Singularity { .. })) => {
                out.push(SegmentOutcome {
                    index,
                    start_time: seg.anchor,
                    result: None,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
