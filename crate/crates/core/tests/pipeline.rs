use smol_core::model::{
    synthesize_signal, MagnetSpec, OscillatorParams, Pose, SensorArray, SignalFrame, SynthesisMode,
};
use smol_core::signal::{
    dft_snr, downsample_half_periods, estimate_phase_anchor, inject_noise, saturate_quantize,
    spatial_difference, FilterChain, NoiseModel,
};

fn reference_frame(duration: f64) -> (SensorArray, SignalFrame) {
    let arr = SensorArray::default();
    let f = synthesize_signal(
        &Pose::reference(0.08),
        &OscillatorParams::default(),
        &MagnetSpec::default(),
        &arr,
        duration,
        SynthesisMode::SignalOnly,
    )
    .unwrap();
    (arr, f)
}

#[test]
fn snr_increases_through_the_chain() {
    let (arr, clean) = reference_frame(2.0);
    let nm = NoiseModel::default();
    for seed in 0..3 {
        let dig = saturate_quantize(
            &inject_noise(&clean, &arr, &nm.with_seed(seed)).unwrap(),
            &arr,
        )
        .unwrap();
        let raw = dft_snr(&dig, 103.5, 50.0).unwrap();
        let diff = dft_snr(&spatial_difference(&dig, &arr).unwrap(), 103.5, 50.0).unwrap();
        let full = dft_snr(
            &FilterChain::default().apply(&dig, &arr).unwrap(),
            103.5,
            50.0,
        )
        .unwrap();
        assert!((raw - 1.1).abs() < 0.1, "raw {raw}");
        assert!(raw < diff && diff < full, "{raw} {diff} {full}");
    }
}

#[test]
fn observations_bit_identical_under_seed() {
    let (arr, clean) = reference_frame(0.1);
    let nm = NoiseModel::default().with_seed(77);
    let run = || {
        let f = FilterChain::default()
            .process_raw(&inject_noise(&clean, &arr, &nm).unwrap(), &arr)
            .unwrap();
        let a = estimate_phase_anchor(&f, 103.5).unwrap();
        downsample_half_periods(&f, 103.5, 6, a.anchor_time).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let bits = |o: &smol_core::signal::SampledObservations| {
        o.flat_values()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn reference_sensor_pickup_under_default_layout() {
    let (arr, clean) = reference_frame(0.05);
    let p = FilterChain {
        spatial_difference: false,
        ..Default::default()
    }
    .apply(&clean, &arr)
    .unwrap();
    let amp = |x: &[f64]| {
        x[200..x.len() - 200]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    };
    let strongest = p.channels[..9].iter().map(|c| amp(c)).fold(0.0, f64::max);
    let ratio = amp(&p.channels[9]) / strongest;
    assert!(ratio > 0.10 && ratio < 0.15, "{ratio}");
}

#[test]
fn frame_csv_roundtrip_after_processing() {
    let (arr, clean) = reference_frame(0.01);
    let f = FilterChain::default().process_raw(&clean, &arr).unwrap();
    let mut buf = Vec::new();
    f.write_csv(&mut buf).unwrap();
    let back = SignalFrame::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.units, f.units);
    assert_eq!(back.sensor_ids, f.sensor_ids);
    for (a, b) in back
        .channels
        .iter()
        .flatten()
        .zip(f.channels.iter().flatten())
    {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }
}
