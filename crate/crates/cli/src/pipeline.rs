//! The five pipeline commands, from a directory of scene images to the
//! per-condition gap curve. All artifact formats are line oriented and
//! written with `Display` floats, so identical inputs reproduce identical
//! bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dpsel_core::characterize::{
    characterize, save_scene_log, CharacterizationTable, CharacterizeConfig,
};
use dpsel_core::classify::{
    predict_condition, train_amount_stage, train_type_stage, LinearModel, Objective,
    OperatingCondition, TrainerConfig,
};
use dpsel_core::dataset::{generate_dataset, DatasetManifest};
use dpsel_core::detect::{DogParams, HarrisParams, NamedDetector};
use dpsel_core::features::{extract_features, FeatureConfig, FeatureVector};
use dpsel_core::image::{load_image_file, GrayImage};
use dpsel_core::select::{
    build_selection_table, evaluate_gaps, gaps_to_csv, select_for_images, SelectionTable,
};
use dpsel_core::transforms::TransformKind;
use dpsel_core::{Error, Result};

use crate::config::RunConfig;

pub const FEATURES_HEADER: &str = "scene_id,kind,level_index,f_L,f_B,f_J";

pub fn dataset_dir(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("dataset")
}

/// Lives inside the dataset root so the manifest's relative image paths
/// resolve wherever the dataset directory is moved.
pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    dataset_dir(cfg).join("manifest.csv")
}

pub fn features_path(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("features.csv")
}

pub fn split_path(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("split.txt")
}

pub fn type_model_path(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("type.model")
}

pub fn amount_model_path(cfg: &RunConfig, kind: TransformKind) -> PathBuf {
    cfg.work_dir.join(format!("amount_{kind}.model"))
}

pub fn characterization_path(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("characterization.csv")
}

pub fn scene_log_path(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("scene_log.csv")
}

pub fn selection_path(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("selection.csv")
}

pub fn gaps_path(cfg: &RunConfig) -> PathBuf {
    cfg.work_dir.join("gaps.csv")
}

fn feature_config(cfg: &RunConfig) -> FeatureConfig<f64> {
    FeatureConfig {
        blur_kernel_len: cfg.blur_kernel_len,
        normalized_fj: cfg.normalized_fj,
        ..FeatureConfig::default()
    }
}

fn trainer_config(cfg: &RunConfig) -> TrainerConfig<f64> {
    TrainerConfig {
        lambda: cfg.lambda,
        epochs: cfg.epochs,
        seed: cfg.seed,
        objective: Objective::OneVsRest,
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Every `*.pgm` in the corpus directory is one scene; the file stem is
/// the scene id and the listing is sorted so the corpus order is stable.
fn load_corpus(dir: &Path) -> Result<Vec<(String, GrayImage)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Domain(format!(
            "no .pgm scenes in {}",
            dir.display()
        )));
    }
    let mut scenes = Vec::new();
    for path in paths {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Domain(format!("unusable scene file name {}", path.display())))?
            .to_string();
        scenes.push((id, load_image_file(&path)?));
    }
    Ok(scenes)
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let scenes = load_corpus(&cfg.corpus_dir)?;
    std::fs::create_dir_all(&cfg.work_dir).map_err(|e| io_err(&cfg.work_dir, e))?;
    let manifest = generate_dataset(&scenes, &cfg.ladders(), &dataset_dir(cfg))?;
    let path = manifest_path(cfg);
    manifest.save(&path)?;
    println!("scenes {}", scenes.len());
    println!("wrote {} ({} rows)", path.display(), manifest.rows().len());
    Ok(())
}

/// All manifest rows with their features, in manifest order.
fn extract_all(
    manifest: &DatasetManifest,
    feature_config: &FeatureConfig<f64>,
) -> Result<Vec<(String, OperatingCondition, FeatureVector<f64>)>> {
    let mut references: BTreeMap<String, GrayImage> = BTreeMap::new();
    let mut out = Vec::new();
    for row in manifest.rows() {
        if !references.contains_key(&row.scene_id) {
            references.insert(row.scene_id.clone(), manifest.load_reference(&row.scene_id)?);
        }
        let reference = &references[&row.scene_id];
        let target = manifest.load_target(row)?;
        let features = extract_features(reference, &target, feature_config)?;
        out.push((row.scene_id.clone(), row.condition(), features));
    }
    Ok(out)
}

/// Scene-level split: ids are sorted, shuffled by the config seed, and the
/// first `floor(fraction * n)` become the training set.
fn split_scenes(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<BTreeSet<String>> {
    let mut ids: Vec<String> = manifest.scene_ids().iter().map(|s| s.to_string()).collect();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    ids.shuffle(&mut rng);
    let train_count = (ids.len() as f64 * cfg.train_fraction).floor() as usize;
    if train_count == 0 || train_count == ids.len() {
        return Err(Error::Train(format!(
            "{} scenes split {} train / {} test; both sides must be non-empty",
            ids.len(),
            train_count,
            ids.len() - train_count
        )));
    }
    Ok(ids.into_iter().take(train_count).collect())
}

fn write_features_csv(
    path: &Path,
    samples: &[(String, OperatingCondition, FeatureVector<f64>)],
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{FEATURES_HEADER}");
    for (scene, condition, f) in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            scene, condition.kind, condition.level_index, f.f_l, f.f_b, f.f_j
        );
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_features_csv(
    path: &Path,
) -> Result<Vec<(String, OperatingCondition, FeatureVector<f64>)>> {
    let origin = path.display().to_string();
    let fail = |line: usize, message: String| Error::Format {
        path: origin.clone(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == FEATURES_HEADER => {}
        Some((_, header)) => return Err(fail(1, format!("bad header {header:?}"))),
        None => return Err(fail(1, "empty file".into())),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(fail(line_no, format!("expected 6 fields, got {}", fields.len())));
        }
        let kind = TransformKind::from_name(fields[1])
            .ok_or_else(|| fail(line_no, format!("unknown kind {:?}", fields[1])))?;
        let level: usize = fields[2]
            .parse()
            .map_err(|_| fail(line_no, format!("bad level {:?}", fields[2])))?;
        let mut values = [0.0f64; 3];
        for (v, tok) in values.iter_mut().zip(&fields[3..]) {
            *v = tok
                .parse()
                .map_err(|_| fail(line_no, format!("bad number {tok:?}")))?;
        }
        out.push((
            fields[0].to_string(),
            OperatingCondition::new(kind, level)?,
            FeatureVector {
                f_l: values[0],
                f_b: values[1],
                f_j: values[2],
            },
        ));
    }
    Ok(out)
}

fn write_split(path: &Path, scenes: &[&str], train: &BTreeSet<String>) -> Result<()> {
    let mut sorted: Vec<&str> = scenes.to_vec();
    sorted.sort_unstable();
    let mut out = String::new();
    for scene in sorted {
        let role = if train.contains(scene) { "train" } else { "test" };
        let _ = writeln!(out, "{scene} {role}");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Scene ids of the test split.
pub fn load_test_split(path: &Path) -> Result<BTreeSet<String>> {
    let origin = path.display().to_string();
    let fail = |line: usize, message: String| Error::Format {
        path: origin.clone(),
        line,
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut seen = BTreeSet::new();
    let mut test = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let (scene, role) = line
            .split_once(' ')
            .ok_or_else(|| fail(line_no, format!("expected `<scene> <train|test>`, got {line:?}")))?;
        if !seen.insert(scene.to_string()) {
            return Err(fail(line_no, format!("duplicate scene {scene:?}")));
        }
        match role {
            "train" => {}
            "test" => {
                test.insert(scene.to_string());
            }
            other => return Err(fail(line_no, format!("unknown role {other:?}"))),
        }
    }
    Ok(test)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let manifest = DatasetManifest::load(&manifest_path(cfg))?;
    let samples = extract_all(&manifest, &feature_config(cfg))?;
    let train_scenes = split_scenes(&manifest, cfg)?;
    let scene_ids = manifest.scene_ids();
    let test_count = scene_ids.len() - train_scenes.len();

    write_features_csv(&features_path(cfg), &samples)?;
    write_split(&split_path(cfg), &scene_ids, &train_scenes)?;

    let trainer = trainer_config(cfg);
    let type_train: Vec<(FeatureVector<f64>, TransformKind)> = samples
        .iter()
        .filter(|(scene, ..)| train_scenes.contains(scene))
        .map(|(_, c, f)| (*f, c.kind))
        .collect();
    let type_model = train_type_stage(&type_train, trainer)?;
    type_model.save(&type_model_path(cfg))?;

    let mut amount_models = BTreeMap::new();
    for kind in TransformKind::ALL {
        let train: Vec<(FeatureVector<f64>, usize)> = samples
            .iter()
            .filter(|(scene, c, _)| train_scenes.contains(scene) && c.kind == kind)
            .map(|(_, c, f)| (*f, c.level_index))
            .collect();
        let model = train_amount_stage(kind, &train, trainer.ordinal())?;
        model.save(&amount_model_path(cfg, kind))?;
        amount_models.insert(kind, model);
    }

    let test: Vec<_> = samples
        .iter()
        .filter(|(scene, ..)| !train_scenes.contains(scene))
        .collect();
    let type_hits = test
        .iter()
        .filter(|(_, c, f)| type_model.predict_label(&f.to_array()) == c.kind.name())
        .count();
    println!(
        "train scenes {} test scenes {}",
        train_scenes.len(),
        test_count
    );
    println!("type accuracy {:.3}", type_hits as f64 / test.len() as f64);
    for kind in TransformKind::ALL {
        let of_kind: Vec<_> = test.iter().filter(|(_, c, _)| c.kind == kind).collect();
        let mut exact = 0usize;
        let mut near = 0usize;
        for (_, c, f) in &of_kind {
            let got: usize = amount_models[&kind]
                .predict_label(&f.to_array())
                .parse()
                .expect("amount labels are level indices");
            exact += usize::from(got == c.level_index);
            near += usize::from(got.abs_diff(c.level_index) <= 1);
        }
        println!(
            "{kind} exact {:.3} near {:.3}",
            exact as f64 / of_kind.len() as f64,
            near as f64 / of_kind.len() as f64
        );
    }
    Ok(())
}

fn build_roster(cfg: &RunConfig) -> Result<Vec<NamedDetector<f64>>> {
    let mut roster = Vec::new();
    for name in &cfg.detectors {
        match name.as_str() {
            "harris" => roster.push(NamedDetector::harris(name, HarrisParams::default())),
            "dog" => roster.push(NamedDetector::dog(name, DogParams::default())),
            other => {
                return Err(Error::Domain(format!(
                    "unknown built-in detector {other:?} (available: harris, dog)"
                )))
            }
        }
    }
    for (name, template) in &cfg.externals {
        roster.push(NamedDetector::external(
            name,
            template,
            Duration::from_secs_f64(cfg.timeout_secs),
        ));
    }
    Ok(roster)
}

pub fn cmd_characterize(cfg: &RunConfig) -> Result<()> {
    let manifest = DatasetManifest::load(&manifest_path(cfg))?;
    let roster = build_roster(cfg)?;
    let char_config = CharacterizeConfig {
        eps: cfg.eps,
        failure_tolerance: cfg.failure_tolerance,
        workers: cfg.workers,
    };
    let (table, records) = characterize(&roster, &manifest, &char_config)?;
    let selection = build_selection_table(&table)?;

    let table_path = characterization_path(cfg);
    table.save(&table_path)?;
    save_scene_log(&records, &scene_log_path(cfg))?;
    let rules_path = selection_path(cfg);
    selection.save(&rules_path)?;

    println!(
        "detectors {} conditions {}",
        table.detectors().len(),
        table.conditions().len()
    );
    println!(
        "wrote {} ({} rows)",
        table_path.display(),
        table.detectors().len() * table.conditions().len()
    );
    println!("wrote {} ({} rules)", rules_path.display(), selection.len());
    Ok(())
}

fn load_models(cfg: &RunConfig) -> Result<(LinearModel<f64>, BTreeMap<TransformKind, LinearModel<f64>>)> {
    let type_model = LinearModel::load(&type_model_path(cfg))?;
    let mut amount_models = BTreeMap::new();
    for kind in TransformKind::ALL {
        amount_models.insert(kind, LinearModel::load(&amount_model_path(cfg, kind))?);
    }
    Ok((type_model, amount_models))
}

pub fn cmd_select(cfg: &RunConfig, reference: &Path, target: &Path, timing: bool) -> Result<()> {
    let reference_img = load_image_file(reference)?;
    let target_img = load_image_file(target)?;
    let (type_model, amount_models) = load_models(cfg)?;
    let table = SelectionTable::load(&selection_path(cfg))?;
    let report = select_for_images(
        &reference_img,
        &target_img,
        &type_model,
        &amount_models,
        &table,
        &feature_config(cfg),
        false,
    )?;
    println!("f_L {}", report.features.f_l);
    println!("f_B {}", report.features.f_b);
    println!("f_J {}", report.features.f_j);
    println!(
        "condition {} {}",
        report.condition.kind, report.condition.level_index
    );
    println!("detector {}", report.detector);
    if timing {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        println!("extract_ms {:.3}", ms(report.timings.extract));
        println!("classify_ms {:.3}", ms(report.timings.classify));
        println!("lookup_ms {:.3}", ms(report.timings.lookup));
        println!("total_ms {:.3}", ms(report.timings.total()));
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, oracle: bool) -> Result<()> {
    let test_scenes = load_test_split(&split_path(cfg))?;
    let rows = load_features_csv(&features_path(cfg))?;
    let characterization = CharacterizationTable::load(&characterization_path(cfg))?;
    let selection = SelectionTable::load(&selection_path(cfg))?;

    let samples: Vec<(OperatingCondition, FeatureVector<f64>)> = rows
        .iter()
        .filter(|(scene, ..)| test_scenes.contains(scene))
        .map(|(_, c, f)| (*c, *f))
        .collect();
    if samples.is_empty() {
        return Err(Error::Domain("no feature rows fall in the test split".into()));
    }

    let gaps = if oracle {
        evaluate_gaps(&samples, &selection, &characterization, false, |c, _| Ok(c))?
    } else {
        let (type_model, amount_models) = load_models(cfg)?;
        evaluate_gaps(&samples, &selection, &characterization, false, |_, f| {
            predict_condition(&type_model, &amount_models, f)
        })?
    };

    let path = gaps_path(cfg);
    std::fs::write(&path, gaps_to_csv(&gaps)).map_err(|e| io_err(&path, e))?;

    let mean_abs = gaps.iter().map(|r| r.gap.abs()).sum::<f64>() / gaps.len() as f64;
    let max_gap = gaps.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
    println!("test samples {}", samples.len());
    println!("wrote {} ({} rows)", path.display(), gaps.len());
    println!("mean_abs_gap {mean_abs:.6}");
    println!("max_gap {max_gap:.6}");
    Ok(())
}
