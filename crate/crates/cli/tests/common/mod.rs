//! Helpers shared by the CLI test suites: corpus construction, process
//! drivers, and artifact parsers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Output};

use dpsel_core::classify::OperatingCondition;
use dpsel_core::features::FeatureVector;
use dpsel_core::image::save_image_file;
use dpsel_core::synth::synth_scene;
use dpsel_core::transforms::TransformKind;

pub const BIN: &str = env!("CARGO_BIN_EXE_dpsel");

pub fn write_corpus(dir: &Path, scenes: usize, width: usize, height: usize, seed_base: u64) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..scenes {
        let img = synth_scene(width, height, seed_base + i as u64);
        save_image_file(&img, &dir.join(format!("scene{i:02}.pgm"))).unwrap();
    }
}

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn dpsel binary")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("dpsel exited without a code")
}

pub fn stderr_text(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "dpsel {args:?} failed with {:?}:\n{}",
        out.status.code(),
        stderr_text(&out)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// One value from a `<key> <value>` report line.
pub fn report_value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{stdout}"))
        .to_string()
}

pub struct FeatureRow {
    pub scene: String,
    pub condition: OperatingCondition,
    pub features: FeatureVector<f64>,
}

pub fn read_features(path: &Path) -> Vec<FeatureRow> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("scene_id,kind,level_index,f_L,f_B,f_J"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 6, "{line}");
            FeatureRow {
                scene: f[0].to_string(),
                condition: OperatingCondition::new(
                    TransformKind::from_name(f[1]).unwrap(),
                    f[2].parse().unwrap(),
                )
                .unwrap(),
                features: FeatureVector {
                    f_l: f[3].parse().unwrap(),
                    f_b: f[4].parse().unwrap(),
                    f_j: f[5].parse().unwrap(),
                },
            }
        })
        .collect()
}

pub fn read_test_scenes(path: &Path) -> BTreeSet<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_suffix(" test").map(str::to_string))
        .collect()
}

pub struct GapRow {
    pub condition: OperatingCondition,
    pub selected_avg: f64,
    pub best_avg: f64,
    pub gap: f64,
}

pub fn read_gaps(path: &Path) -> Vec<GapRow> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kind,level_index,selected_avg,best_avg,gap"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 5, "{line}");
            GapRow {
                condition: OperatingCondition::new(
                    TransformKind::from_name(f[0]).unwrap(),
                    f[1].parse().unwrap(),
                )
                .unwrap(),
                selected_avg: f[2].parse().unwrap(),
                best_avg: f[3].parse().unwrap(),
                gap: f[4].parse().unwrap(),
            }
        })
        .collect()
}

/// (detector, condition) -> average repeatability.
pub fn read_characterization(path: &Path) -> BTreeMap<(String, OperatingCondition), f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("detector,kind,level_index,avg_repeatability,support")
    );
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 5, "{line}");
            let condition = OperatingCondition::new(
                TransformKind::from_name(f[1]).unwrap(),
                f[2].parse().unwrap(),
            )
            .unwrap();
            ((f[0].to_string(), condition), f[3].parse().unwrap())
        })
        .collect()
}

/// detector per condition from selection.csv.
pub fn read_selection(path: &Path) -> BTreeMap<OperatingCondition, String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("kind,level_index,detector,winning_avg,margin")
    );
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 5, "{line}");
            let condition = OperatingCondition::new(
                TransformKind::from_name(f[0]).unwrap(),
                f[1].parse().unwrap(),
            )
            .unwrap();
            (condition, f[2].to_string())
        })
        .collect()
}
