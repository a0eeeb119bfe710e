mod common;

use chipbeam::error::Stage;
use chipbeam::ion_chain::IonChainSpec;
use chipbeam::mode_solver::GridSpec;
use chipbeam::pipeline::{
    run_delivery_scenario, run_metrology_scenario, run_scenario, LayoutSpec, MetrologySource, ScenarioConfig,
    Segmentation,
};

/// Default scenario on a coarser mode grid, so each delivery run takes a couple of seconds.
fn quick() -> ScenarioConfig {
    ScenarioConfig {
        mode_grid: GridSpec {
            dx: 20e-9,
            dy: 20e-9,
            margin: 3e-6,
        },
        ..ScenarioConfig::default()
    }
}

/// Metrology on two analytic spots, independent of the delivery half.
fn two_spots(pedestal_db: f64, segmentation: Segmentation) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    let m = &mut cfg.metrology;
    m.source = MetrologySource::TwoGaussians {
        separation: 73.4e-6,
        sigma: 0.4e-6,
    };
    m.pedestal_db = Some(pedestal_db);
    m.segmentation = segmentation;
    cfg
}

#[test]
fn single_ion_gives_a_trivial_matrix() {
    let mut cfg = quick();
    cfg.ion_chain = IonChainSpec {
        n_ions: 1,
        ..IonChainSpec::ba138_default()
    };
    let d = run_delivery_scenario(&cfg).unwrap();
    assert_eq!(d.crosstalk, vec![vec![0.0]]);
    assert!(d.report.pitch.is_none());
    assert!(d.report.beam_train.worst_nearest_neighbor_db.is_none());
}

#[test]
fn overlapping_spots_approach_zero_db() {
    // Facet channels 1 um apart image to spots far closer than their width, so more than
    // half of each spot's power lands on the neighbouring target.
    let mut cfg = quick();
    cfg.ion_chain.n_ions = 2;
    cfg.layout = LayoutSpec::Explicit {
        positions: vec![-0.5e-6, 0.5e-6],
    };
    cfg.imaging.magnification = Some(0.2);
    let d = run_delivery_scenario(&cfg).unwrap();
    let x = d.crosstalk[0][1];
    assert!(x > -3.0 && x <= 0.5, "{x}");
    assert!(!d.report.meets_target);
}

#[test]
fn delivery_is_deterministic() {
    let cfg = quick();
    let a = run_delivery_scenario(&cfg).unwrap();
    let b = run_delivery_scenario(&cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.crosstalk, b.crosstalk);
    assert_eq!(a.report.config_hash, cfg.content_hash());
    // Channel pitch is five ion gaps once divided by the 0.2 magnification.
    let pitch = a.report.pitch.unwrap();
    assert!((pitch.ratio - 5.0).abs() < 1e-9);
    let gap = a.chain.min_gap().unwrap();
    let p = &a.report.channel_positions;
    let min_pitch = p.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    assert!((min_pitch * 0.2 - gap).abs() < 1e-12);
}

#[test]
fn one_or_three_segments_agree() {
    // The default 10 mm segments cover the whole 5.7 mm scan in one pass.
    let one = run_metrology_scenario(&two_spots(-48.0, Segmentation::default()), None).unwrap();
    let three = run_metrology_scenario(&two_spots(-48.0, Segmentation::AroundPeaks { overlap: 200e-6 }), None).unwrap();
    assert_eq!(one.report.segments.len(), 1);
    assert_eq!(three.report.segments.len(), 3);
    let (a, b) = (
        one.report.crosstalk.value_db.unwrap(),
        three.report.crosstalk.value_db.unwrap(),
    );
    assert!((a - b).abs() < 0.2, "{a} vs {b}");
    assert!((a + 48.0).abs() < 1.3, "{a}");
}

#[test]
fn drifting_gain_is_stitched_out() {
    let mut cfg = two_spots(-50.8, Segmentation::AroundPeaks { overlap: 200e-6 });
    cfg.metrology.gain_drift = 0.79;
    let m = run_metrology_scenario(&cfg, None).unwrap();
    for (k, g) in m.report.gains.iter().enumerate() {
        assert!((g * 0.79f64.powi(k as i32) - 1.0).abs() < 1e-9, "{k}: {g}");
    }
    let v = m.report.crosstalk.value_db.unwrap();
    assert!((v + 50.8).abs() < 1.3, "{v}");
    assert_eq!(m.report.injected_pedestal_db, Some(-50.8));
}

#[test]
fn config_errors_are_tagged_with_their_stage() {
    let mut cfg = quick();
    cfg.imaging.numerical_aperture = 1.5;
    let e = run_delivery_scenario(&cfg).err().unwrap();
    assert_eq!(e.stage(), Some(Stage::Config), "{e}");
}

#[test]
fn sampling_failures_are_tagged_as_imaging() {
    // 2 um facet samples are far too coarse for an NA 0.2 pupil.
    let mut cfg = quick();
    cfg.facet_grid.step = 2e-6;
    let e = run_delivery_scenario(&cfg).err().unwrap();
    assert_eq!(e.stage(), Some(Stage::Imaging), "{e}");
}

#[test]
fn artifacts_land_in_a_content_addressed_directory() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = quick();
    cfg.output_dir = Some(out.path().to_path_buf());
    cfg.metrology.pedestal_db = Some(-50.0);
    let (report, _, metrology) = run_scenario(&cfg).unwrap();
    let dir = report.artifact_dir.clone().unwrap();
    assert!(dir.starts_with(out.path()));
    assert!(dir.to_string_lossy().contains(&report.config_hash[..12]));
    assert!(metrology.is_some());
    for name in [
        "config.json",
        "report.json",
        "delivery_report.json",
        "mode_summary.json",
        "facet_mode.csv",
        "ion_chain.csv",
        "ion_plane_line.csv",
        "stitched.csv",
        "deconvolved.csv",
        "crosstalk_report.json",
    ] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let text = std::fs::read_to_string(dir.join("config.json")).unwrap();
    let back = ScenarioConfig::from_json(&text).unwrap();
    assert_eq!(back.content_hash(), cfg.content_hash());
}
