use tdvv::estimator::{
    estimate_frame, tau_from_tdvv, EstimatorConfig, FrameEstimator, FrameStatus,
};
use tdvv::foa::{stft_analyze, FoaSignal, SpectralFrames, StftConfig, Window};
use tdvv::noise::{snr_sequence, NoiseConfig};
use tdvv::pipeline::{analyze_recording, AnalysisOptions, PipelineConfig};
use tdvv::simulator::{image_source, render_foa, GroundTruth, ReflectionGain, SceneSpec, SourcePosition};
use tdvv::velocity::{compute_tdvv, FdvvFrame};
use tdvv::simulator::{analytic_fdvv, bin_frequencies};
use tdvv::Vec3;

const FS: f64 = 16000.0;
const C: f64 = 343.0;

/// Scene whose floor delay is exactly `lag` samples: the mic height is
/// solved from `(d0 + lag·c/fs)² = (d0 cos φ)² + (2h + d0 sin φ)²`.
fn on_grid_scene(d0: f64, azimuth: f64, elevation: f64, lag: usize, g: f64) -> (SceneSpec, GroundTruth) {
    let phi = elevation.to_radians();
    let d1 = d0 + lag as f64 * C / FS;
    let h = (0.5 * ((d1 * d1 - (d0 * phi.cos()).powi(2)).sqrt() - d0 * phi.sin())).max(1e-3);
    let scene = SceneSpec {
        mic_height: h,
        source: SourcePosition {
            azimuth_deg: azimuth,
            elevation_deg: elevation,
            distance: d0,
        },
        reflection_gain: ReflectionGain::Fixed(g),
        duration: 1.0,
        ..Default::default()
    };
    let truth = image_source(&scene, C).unwrap();
    assert!((truth.tau1 * FS - lag as f64).abs() < 1e-9);
    (scene, truth)
}

fn spectra(signal: &FoaSignal, frame_len: usize) -> SpectralFrames {
    stft_analyze(signal, &StftConfig::new(frame_len, frame_len / 8, Window::Hann).unwrap()).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn noiseless_reflection_frames() {
    let (scene, truth) = on_grid_scene(1.5, 35.0, 10.0, 20, 0.5);
    let signal = render_foa(&scene, &truth, 5).unwrap();
    let spectra = spectra(&signal, 1024);
    let snr = snr_sequence(&spectra, NoiseConfig::default()).unwrap();
    let config = EstimatorConfig::default();
    let (mut doa, mut range) = (Vec::new(), Vec::new());
    for m in 1..spectra.frame_count() - 1 {
        let e = estimate_frame(&spectra, m, &snr[m], &config).unwrap();
        assert_eq!(e.status, FrameStatus::Ok, "frame {m}");
        assert_eq!(e.tau1_samples, Some(20));
        let (u0, u1) = (e.u0.unwrap(), e.u1.unwrap());
        assert!((u0.norm() - 1.0).abs() < 1e-12 && (u1.norm() - 1.0).abs() < 1e-12);
        doa.push(u0.angle_deg(truth.u0));
        range.push((e.d0.unwrap() - truth.d0).abs() / truth.d0);
    }
    assert!(median(doa) < 2.0);
    assert!(median(range) < 0.05);
}

#[test]
fn estimated_reflection_keeps_the_azimuth() {
    for (az, el, lag) in [(-100.0, 25.0, 30), (160.0, -5.0, 45), (10.0, 0.0, 24)] {
        let (scene, truth) = on_grid_scene(1.2, az, el, lag, 0.6);
        let signal = render_foa(&scene, &truth, 9).unwrap();
        let spectra = spectra(&signal, 1024);
        let snr = snr_sequence(&spectra, NoiseConfig::default()).unwrap();
        let e = estimate_frame(&spectra, spectra.frame_count() / 2, &snr[spectra.frame_count() / 2], &Default::default())
            .unwrap();
        let (u0, u1) = (e.u0.unwrap(), e.u1.unwrap());
        let diff = (u0.azimuth_deg() - u1.azimuth_deg() + 540.0).rem_euclid(360.0) - 180.0;
        assert!(diff.abs() < 5.0, "az {az}: {} vs {}", u0.azimuth_deg(), u1.azimuth_deg());
    }
}

#[test]
fn delay_of_twenty_samples() {
    let u0 = Vec3::from_angles_deg(30.0, 10.0);
    let u1 = Vec3::from_angles_deg(30.0, -40.0);
    let rows = analytic_fdvv(u0, u1, 0.5, 20.0 / FS, &bin_frequencies(80, FS));
    let tdvv = compute_tdvv(&FdvvFrame::from_rows(rows, 80).unwrap(), FS).unwrap();
    let (tau, lag) = tau_from_tdvv(&tdvv, &EstimatorConfig::default()).unwrap();
    assert_eq!(lag, 20);
    assert_eq!(tau, 20.0 / FS);
}

#[test]
fn zero_frame_is_silent() {
    let signal = FoaSignal::new(16000, std::array::from_fn(|_| vec![0.0; 400])).unwrap();
    let spectra = spectra(&signal, 80);
    let snr = snr_sequence(&spectra, NoiseConfig::default()).unwrap();
    let e = estimate_frame(&spectra, 3, &snr[3], &EstimatorConfig::default()).unwrap();
    assert_eq!(e.status, FrameStatus::Silent);
    assert!(e.u0.is_none());
    assert!(estimate_frame(&spectra, spectra.frame_count(), &snr[0], &EstimatorConfig::default()).is_err());
}

#[test]
fn anechoic_frame_has_no_reflection() {
    let scene = SceneSpec {
        source: SourcePosition {
            azimuth_deg: 30.0,
            elevation_deg: 10.0,
            distance: 2.0,
        },
        reflection_gain: ReflectionGain::Fixed(0.0),
        duration: 0.5,
        ..Default::default()
    };
    let truth = image_source(&scene, C).unwrap();
    let signal = render_foa(&scene, &truth, 2).unwrap();
    let spectra = spectra(&signal, 80);
    let snr = snr_sequence(&spectra, NoiseConfig::default()).unwrap();
    let mut fe = FrameEstimator::new(EstimatorConfig::default(), 80);
    for m in (1..spectra.frame_count() - 1).step_by(17) {
        let e = fe.estimate(&spectra, m, &snr[m]).unwrap();
        assert!(
            matches!(e.status, FrameStatus::NoReflection | FrameStatus::RangeOutOfBounds),
            "frame {m}: {}",
            e.status
        );
        assert!(e.u0.unwrap().angle_deg(truth.u0) < 0.5);
    }
}

#[test]
fn anechoic_recording_doa_and_baseline() {
    let scene = SceneSpec {
        source: SourcePosition {
            azimuth_deg: 30.0,
            elevation_deg: 10.0,
            distance: 2.0,
        },
        reflection_gain: ReflectionGain::Fixed(0.0),
        duration: 0.5,
        ..Default::default()
    };
    let truth = image_source(&scene, C).unwrap();
    let signal = render_foa(&scene, &truth, 4).unwrap();
    let analysis = analyze_recording(&signal, &PipelineConfig::default(), AnalysisOptions { baseline: true }).unwrap();
    let est = analysis.estimate;
    assert!(est.u0.unwrap().angle_deg(truth.u0) < 0.5);
    assert!((est.azimuth_deg.unwrap() - 30.0).abs() < 0.5);
    assert!((est.elevation_deg.unwrap() - 10.0).abs() < 0.5);
    assert!(est.d0.is_none());
    assert!(analysis.baseline.unwrap().angle_deg(truth.u0) < 0.5);
}

#[test]
fn strong_reflection_biases_the_baseline() {
    let (scene, truth) = on_grid_scene(1.4, -45.0, 20.0, 36, 0.7);
    let signal = render_foa(&scene, &truth, 8).unwrap();
    let config = PipelineConfig {
        frame_sec: 0.064,
        ..Default::default()
    };
    let analysis = analyze_recording(&signal, &config, AnalysisOptions { baseline: true }).unwrap();
    let tdvv_err = analysis.estimate.u0.unwrap().angle_deg(truth.u0);
    let base_err = analysis.baseline.unwrap().angle_deg(truth.u0);
    assert!(base_err > tdvv_err, "baseline {base_err:.2}° vs tdvv {tdvv_err:.2}°");
}

#[test]
fn recording_range_on_grid() {
    let (scene, truth) = on_grid_scene(1.5, 120.0, 15.0, 40, 0.5);
    let config = PipelineConfig {
        frame_sec: 0.128,
        ..Default::default()
    };
    let mut errors = Vec::new();
    for seed in 0..5 {
        let signal = render_foa(&scene, &truth, seed).unwrap();
        let est = analyze_recording(&signal, &config, AnalysisOptions::default()).unwrap().estimate;
        assert!(est.u0.unwrap().angle_deg(truth.u0) < 2.0);
        assert!(est.frames_used >= 1 && est.frames_used <= est.frames_total);
        errors.push((est.d0.unwrap() - truth.d0).abs() / truth.d0);
    }
    assert!(median(errors.clone()) < 0.05, "{errors:?}");
}

#[test]
fn leak_correction_can_be_disabled() {
    let (scene, truth) = on_grid_scene(1.5, 35.0, 10.0, 20, 0.5);
    let signal = render_foa(&scene, &truth, 5).unwrap();
    let spectra = spectra(&signal, 512);
    let gate_all = vec![-1.0; spectra.bin_count()];
    let config = EstimatorConfig {
        leak_correction: false,
        ..Default::default()
    };
    // Everything gated: the TDVV is zero and the frame carries no direction.
    let e = estimate_frame(&spectra, 10, &gate_all, &config).unwrap();
    assert_eq!(e.status, FrameStatus::Silent);
    let open = vec![10.0; spectra.bin_count()];
    let e = estimate_frame(&spectra, 10, &open, &config).unwrap();
    assert_eq!(e.tau1_samples, Some(20));
}
