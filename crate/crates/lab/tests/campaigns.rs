use std::path::Path;

use smol_lab::campaigns::{
    Axis, Campaign, CampaignReport, Range, RotationCampaign, RunOptions, TranslationCampaign,
};
use smol_lab::closed_loop::ClosedLoopCampaign;
use smol_lab::config::{Environment, ExperimentConfig};
use smol_lab::report::{hash_json, write_campaign};
use smol_lab::LabError;

fn run_with_threads(threads: usize, campaign: &Campaign, env: &Environment) -> CampaignReport {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| campaign.run(env, RunOptions::default()).unwrap())
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let env = Environment::reference(42, 3);
    let campaigns = [
        Campaign::Translation(TranslationCampaign::new(
            Axis::X,
            Range::new(-2.0, 2.0, 1.0),
            2,
        )),
        Campaign::Rotation(RotationCampaign::new(
            Axis::Z,
            Range::new(0.0, 40.0, 20.0),
            2,
        )),
    ];
    for c in &campaigns {
        let a = run_with_threads(1, c, &env);
        let b = run_with_threads(3, c, &env);
        assert_eq!(
            hash_json(&a).unwrap(),
            hash_json(&b).unwrap(),
            "{}",
            c.name()
        );
        assert_eq!(a.summary_csv().unwrap(), b.summary_csv().unwrap());
        assert_eq!(a.trial_lines().unwrap(), b.trial_lines().unwrap());
    }
}

#[test]
fn a_different_seed_changes_the_report() {
    let c = Campaign::Translation(TranslationCampaign::new(
        Axis::Y,
        Range::new(0.0, 1.0, 1.0),
        2,
    ));
    let a = c
        .run(&Environment::reference(1, 2), RunOptions::default())
        .unwrap();
    let b = c
        .run(&Environment::reference(2, 2), RunOptions::default())
        .unwrap();
    assert_ne!(hash_json(&a).unwrap(), hash_json(&b).unwrap());
}

#[test]
fn written_files_match_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let c = Campaign::Translation(TranslationCampaign::new(
        Axis::Z,
        Range::new(80.0, 82.0, 1.0),
        2,
    ));
    let r = c
        .run(&Environment::reference(5, 2), RunOptions::default())
        .unwrap();
    let files = write_campaign(dir.path(), "tz", &r).unwrap();
    assert_eq!(files.len(), 3);
    let summary = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(summary.lines().count(), 4, "header plus three points");
    assert!(summary.starts_with("value,offset,estimate,sigma,ok,failed"));
    let trials = std::fs::read_to_string(&files[1]).unwrap();
    assert_eq!(trials.lines().count(), 6);
    let back: CampaignReport = serde_json::from_slice(&std::fs::read(&files[2]).unwrap()).unwrap();
    assert_eq!(hash_json(&back).unwrap(), hash_json(&r).unwrap());
}

#[test]
fn toml_and_json_configs_agree() {
    let toml_text = r#"
        seed = 9
        repeats = 4

        [device]
        eta_per_s = 12.0

        [campaign]
        kind = "translation"
        axis = "y"
        range_mm = { start = -5.0, stop = 5.0, step = 2.5 }
        n = 20
    "#;
    let t = ExperimentConfig::parse(toml_text, Path::new("a.toml")).unwrap();
    let json_text = serde_json::to_string(&t).unwrap();
    let j = ExperimentConfig::parse(&json_text, Path::new("a.json")).unwrap();
    assert_eq!(t, j);
    assert_eq!(t.seed, 9);
    assert_eq!(t.device.eta_per_s, 12.0);
    match &t.campaign {
        Campaign::Translation(c) => {
            assert_eq!(c.axis, Axis::Y);
            assert_eq!(c.range_mm.values().len(), 5);
        }
        other => panic!("parsed as {}", other.name()),
    }
}

#[test]
fn config_errors_name_the_offending_field() {
    let unknown = "seed = 1\nbogus = 2\n[campaign]\nkind = \"damping\"\n";
    let e = ExperimentConfig::parse(unknown, Path::new("c.toml"))
        .unwrap_err()
        .to_string();
    assert!(e.contains("bogus"), "{e}");

    let empty_range = r#"
        [campaign]
        kind = "rotation"
        axis = "x"
        range_deg = { start = 10.0, stop = 0.0, step = 1.0 }
    "#;
    let e = ExperimentConfig::parse(empty_range, Path::new("c.toml"))
        .unwrap_err()
        .to_string();
    assert!(e.contains("campaign.range_deg"), "{e}");

    let zero_repeats = "repeats = 0\n[campaign]\nkind = \"damping\"\n";
    let e = ExperimentConfig::parse(zero_repeats, Path::new("c.toml"))
        .unwrap_err()
        .to_string();
    assert!(e.contains("repeats"), "{e}");
}

#[test]
fn missing_layout_file_is_reported_with_its_path() {
    let text = "[array]\nlayout = \"nowhere/layout.json\"\n[campaign]\nkind = \"damping\"\n";
    let cfg = ExperimentConfig::parse(text, Path::new("c.toml")).unwrap();
    let e = cfg.environment(Path::new("/tmp/base")).unwrap_err();
    assert!(matches!(e, LabError::Field { .. }));
    assert!(
        e.to_string().contains("/tmp/base/nowhere/layout.json"),
        "{e}"
    );
}

#[test]
fn straight_path_without_noise_closes_in_monotonically() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("line.csv"), "x_mm,y_mm\n0,0\n5,0\n").unwrap();
    let mut env = Environment::reference(3, 1).noiseless();
    env.base_dir = dir.path().to_path_buf();
    let c = ClosedLoopCampaign {
        path_file: Some("line.csv".into()),
        ..Default::default()
    };
    let r = smol_lab::closed_loop::run_closed_loop(&env, &c, RunOptions::default()).unwrap();
    assert!(r.completed && r.missed == 0 && r.reached == 1, "{r:?}");
    let dist: Vec<f64> = r
        .log
        .iter()
        .map(|l| (l.truth_mm[0] - 5.0).hypot(l.truth_mm[1]))
        .collect();
    assert!(*dist.last().unwrap() < 0.8, "{dist:?}");
    for w in dist.windows(2) {
        assert!(w[1] < w[0], "{dist:?}");
    }
}

#[test]
fn closed_loop_currents_respect_limits() {
    let env = Environment::reference(4, 1);
    let c = ClosedLoopCampaign::default();
    let r = smol_lab::closed_loop::run_closed_loop(&env, &c, RunOptions::default()).unwrap();
    for l in &r.log {
        assert!(l
            .currents_a
            .iter()
            .all(|&i| (0.0..=c.control.i_max_a).contains(&i)));
        assert!(l.currents_a.iter().filter(|&&i| i > 0.0).count() <= 2);
    }
    // each waypoint index is visited in order and never revisited
    let wp: Vec<usize> = r.log.iter().map(|l| l.waypoint).collect();
    assert!(wp.windows(2).all(|w| w[1] >= w[0]));
}
