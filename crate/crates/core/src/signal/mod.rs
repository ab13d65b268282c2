//! Measurement processing: noise, digitization, filtering and sampling.

mod filters;
mod noise;
mod sampling;
mod spectrum;

pub use filters::{
    central_difference, central_difference_slice, moving_mean, moving_mean_slice,
    saturate_quantize, spatial_difference, FilterChain,
};
pub use noise::{
    calibrate_mains_amplitude, default_gradient, gradient_direction, inject_noise, Harmonic,
    NoiseModel, NoiseTrace, DEFAULT_WHITE_SIGMA, GRADIENT_PER_METRE, REFERENCE_DEPTH,
    REFERENCE_DURATION, REFERENCE_RAW_SNR, THIRD_HARMONIC_RATIO,
};
pub use sampling::{
    downsample_half_periods, estimate_phase_anchor, half_period_times, nominal_rate,
    segment_signal, FrameSpan, PhaseAnchor, SampledObservations,
};
pub use spectrum::{amplitude_spectrum, dft_snr, Spectrum};
