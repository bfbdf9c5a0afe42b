//! Offline detector characterization: run every detector over every
//! (scene, condition) pair of a dataset and average the repeatability per
//! (detector, kind, level).
//!
//! The per-scene records are first-class output: the averaged table must
//! be recomputable from them, which keeps the aggregation auditable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::classify::OperatingCondition;
use crate::dataset::DatasetManifest;
use crate::detect::{Detector, NamedDetector};
use crate::error::{Error, Result};
use crate::matching::repeatability;
use crate::transforms::TransformKind;
use crate::{real, Real};

pub const TABLE_HEADER: &str = "detector,kind,level_index,avg_repeatability,support";
pub const SCENE_LOG_HEADER: &str = "detector,scene_id,kind,level_index,repeatability";

/// One measured (detector, scene, condition) repeatability.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord<S: Real> {
    pub detector: String,
    pub scene_id: String,
    pub condition: OperatingCondition,
    pub repeatability: S,
}

/// Averaged repeatability and the number of scenes behind it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharEntry<S: Real> {
    pub avg: S,
    pub support: usize,
}

/// Map (detector name, condition) -> average repeatability.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacterizationTable<S: Real> {
    entries: BTreeMap<(String, OperatingCondition), CharEntry<S>>,
}

impl<S: Real> CharacterizationTable<S> {
    fn validate_entry(avg: S, support: usize) -> Result<()> {
        if !(avg >= S::zero() && avg <= S::one()) {
            return Err(Error::Domain(format!(
                "average repeatability {avg} outside [0, 1]"
            )));
        }
        if support == 0 {
            return Err(Error::Domain("characterization entry needs support > 0".into()));
        }
        Ok(())
    }

    /// Rebuilds the table from per-scene records (the audit path).
    pub fn from_records(records: &[SceneRecord<S>]) -> Result<Self> {
        let mut groups: BTreeMap<(String, OperatingCondition), Vec<S>> = BTreeMap::new();
        for r in records {
            if !(r.repeatability >= S::zero() && r.repeatability <= S::one()) {
                return Err(Error::Domain(format!(
                    "repeatability {} outside [0, 1]",
                    r.repeatability
                )));
            }
            groups
                .entry((r.detector.clone(), r.condition))
                .or_default()
                .push(r.repeatability);
        }
        let mut entries = BTreeMap::new();
        for ((detector, condition), rates) in groups {
            let sum = rates.iter().fold(S::zero(), |a, &b| a + b);
            let avg = sum / real(rates.len() as f64);
            entries.insert(
                (detector, condition),
                CharEntry {
                    avg,
                    support: rates.len(),
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, OperatingCondition, CharEntry<S>)> {
        self.entries
            .iter()
            .map(|((d, c), e)| (d.as_str(), *c, *e))
    }

    pub fn get(&self, detector: &str, condition: OperatingCondition) -> Option<CharEntry<S>> {
        self.entries.get(&(detector.to_string(), condition)).copied()
    }

    /// Detector names present, sorted.
    pub fn detectors(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.entries.keys().map(|(d, _)| d.as_str()).collect();
        names.dedup();
        names
    }

    /// Conditions present for every detector, sorted.
    pub fn conditions(&self) -> Vec<OperatingCondition> {
        let mut conds: Vec<OperatingCondition> = self.entries.keys().map(|(_, c)| *c).collect();
        conds.sort_unstable();
        conds.dedup();
        conds
    }

    /// True when each listed condition has an entry for every detector.
    pub fn is_total_over(&self, conditions: &[OperatingCondition]) -> bool {
        let detectors = self.detectors();
        !detectors.is_empty()
            && conditions.iter().all(|c| {
                detectors
                    .iter()
                    .all(|d| self.entries.contains_key(&(d.to_string(), *c)))
            })
    }

    /// Detector with the highest mean average repeatability over its
    /// entries; ties go to the lexicographically first name.
    pub fn global_best(&self) -> Option<&str> {
        let mut best: Option<(&str, S)> = None;
        for name in self.detectors() {
            let rates: Vec<S> = self
                .entries
                .iter()
                .filter(|((d, _), _)| d == name)
                .map(|(_, e)| e.avg)
                .collect();
            let mean = rates.iter().fold(S::zero(), |a, &b| a + b) / real(rates.len() as f64);
            match best {
                Some((_, m)) if mean <= m => {}
                _ => best = Some((name, mean)),
            }
        }
        best.map(|(name, _)| name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TABLE_HEADER}");
        for ((detector, cond), entry) in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                detector, cond.kind, cond.level_index, entry.avg, entry.support
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Format {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == TABLE_HEADER => {}
            Some((_, other)) => {
                return Err(fail(1, format!("expected header {TABLE_HEADER:?}, got {other:?}")))
            }
            None => return Err(fail(1, "empty characterization table".into())),
        }
        let mut entries = BTreeMap::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(fail(idx + 1, format!("expected 5 fields, got {}", fields.len())));
            }
            let kind = TransformKind::from_name(fields[1])
                .ok_or_else(|| fail(idx + 1, format!("unknown kind {:?}", fields[1])))?;
            let level_index: usize = fields[2]
                .parse()
                .map_err(|_| fail(idx + 1, format!("bad level index {:?}", fields[2])))?;
            let condition = OperatingCondition::new(kind, level_index)
                .map_err(|e| fail(idx + 1, e.to_string()))?;
            let avg: S = fields[3]
                .parse()
                .map_err(|_| fail(idx + 1, format!("bad average {:?}", fields[3])))?;
            let support: usize = fields[4]
                .parse()
                .map_err(|_| fail(idx + 1, format!("bad support {:?}", fields[4])))?;
            Self::validate_entry(avg, support).map_err(|e| fail(idx + 1, e.to_string()))?;
            let key = (fields[0].to_string(), condition);
            if entries.insert(key, CharEntry { avg, support }).is_some() {
                return Err(fail(
                    idx + 1,
                    format!("duplicate entry for {} at {condition}", fields[0]),
                ));
            }
        }
        Ok(Self { entries })
    }
}

pub fn scene_log_to_csv<S: Real>(records: &[SceneRecord<S>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCENE_LOG_HEADER}");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.detector, r.scene_id, r.condition.kind, r.condition.level_index, r.repeatability
        );
    }
    out
}

pub fn save_scene_log<S: Real>(records: &[SceneRecord<S>], path: &Path) -> Result<()> {
    std::fs::write(path, scene_log_to_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn load_scene_log<S: Real>(path: &Path) -> Result<Vec<SceneRecord<S>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let fail = |line: usize, message: String| Error::Format {
        path: origin.clone(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SCENE_LOG_HEADER => {}
        Some((_, other)) => {
            return Err(fail(1, format!("expected header {SCENE_LOG_HEADER:?}, got {other:?}")))
        }
        None => return Err(fail(1, "empty scene log".into())),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(fail(idx + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let kind = TransformKind::from_name(fields[2])
            .ok_or_else(|| fail(idx + 1, format!("unknown kind {:?}", fields[2])))?;
        let level_index: usize = fields[3]
            .parse()
            .map_err(|_| fail(idx + 1, format!("bad level index {:?}", fields[3])))?;
        let condition =
            OperatingCondition::new(kind, level_index).map_err(|e| fail(idx + 1, e.to_string()))?;
        let rate: S = fields[4]
            .parse()
            .map_err(|_| fail(idx + 1, format!("bad repeatability {:?}", fields[4])))?;
        records.push(SceneRecord {
            detector: fields[0].to_string(),
            scene_id: fields[1].to_string(),
            condition,
            repeatability: rate,
        });
    }
    Ok(records)
}

/// Knobs of the characterization driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacterizeConfig<S: Real> {
    /// Matching tolerance in pixels.
    pub eps: S,
    /// Maximum external-detector failures excluded per table entry before
    /// the run aborts.
    pub failure_tolerance: usize,
    /// Worker thread cap; 0 means one worker per available core.
    pub workers: usize,
}

impl<S: Real> Default for CharacterizeConfig<S> {
    fn default() -> Self {
        Self {
            eps: real(2.0),
            failure_tolerance: 0,
            workers: 0,
        }
    }
}

enum RowOutcome<S> {
    Rate(S),
    // message of a tolerated external failure
    Failed(String),
}

/// Measures every detector against every manifest row. Work fans out over
/// (detector, scene) pairs with a bounded pool; results merge in a fixed
/// order so the output is independent of scheduling.
///
/// Image-load errors abort immediately. External-detector failures are
/// tolerated per (detector, kind, level) entry up to the configured
/// count and excluded from that entry's average.
pub fn characterize<S: Real>(
    detectors: &[NamedDetector<S>],
    manifest: &DatasetManifest,
    config: &CharacterizeConfig<S>,
) -> Result<(CharacterizationTable<S>, Vec<SceneRecord<S>>)> {
    if detectors.is_empty() {
        return Err(Error::Domain("characterization needs at least one detector".into()));
    }
    for (i, d) in detectors.iter().enumerate() {
        let name = &d.id.name;
        if name.is_empty() || name.contains(',') || name.chars().any(char::is_whitespace) {
            return Err(Error::Domain(format!(
                "detector name {name:?} must be non-empty without commas or whitespace"
            )));
        }
        if detectors[..i].iter().any(|other| other.id.name == *name) {
            return Err(Error::Domain(format!("duplicate detector name {name:?}")));
        }
        // surface bad built-in parameters before spawning workers
        if let Detector::Dog(params) = &d.detector {
            crate::detect::detect_dog::<S>(&crate::image::GrayImage::constant(16, 16, 0), params)?;
        }
    }
    if manifest.rows().is_empty() {
        return Err(Error::Domain("characterization needs a non-empty manifest".into()));
    }

    let scene_ids: Vec<String> = manifest.scene_ids().iter().map(|s| s.to_string()).collect();
    let scene_rows: Vec<Vec<usize>> = scene_ids
        .iter()
        .map(|id| {
            manifest
                .rows()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.scene_id == *id)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    // one work item per (detector, scene)
    let items: Vec<(usize, usize)> = (0..detectors.len())
        .flat_map(|d| (0..scene_ids.len()).map(move |s| (d, s)))
        .collect();
    let next_item = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Vec<(usize, RowOutcome<S>)>>>>> =
        items.iter().map(|_| Mutex::new(None)).collect();

    let workers = if config.workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        config.workers
    }
    .min(items.len());

    let run_item = |&(det_idx, scene_idx): &(usize, usize)| -> Result<Vec<(usize, RowOutcome<S>)>> {
        let detector = &detectors[det_idx];
        let scene_id = &scene_ids[scene_idx];
        let ref_path = manifest.reference_path(scene_id);
        let reference = crate::image::load_image_file(&ref_path)?;
        let mut out = Vec::new();
        match detector.detect(&reference, Some(&ref_path)) {
            Ok(ref_kps) => {
                for &row_idx in &scene_rows[scene_idx] {
                    let row = &manifest.rows()[row_idx];
                    let tgt_path = manifest.target_path(row);
                    let target = crate::image::load_image_file(&tgt_path)?;
                    match detector.detect(&target, Some(&tgt_path)) {
                        Ok(tgt_kps) => {
                            let rate = repeatability(&ref_kps, &tgt_kps, config.eps)?;
                            out.push((row_idx, RowOutcome::Rate(rate)));
                        }
                        Err(e) if e.is_external() => {
                            out.push((row_idx, RowOutcome::Failed(e.to_string())));
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Err(e) if e.is_external() => {
                // without reference keypoints every row of the scene fails
                for &row_idx in &scene_rows[scene_idx] {
                    out.push((row_idx, RowOutcome::Failed(e.to_string())));
                }
            }
            Err(e) => return Err(e),
        }
        Ok(out)
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next_item.fetch_add(1, Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                let outcome = run_item(&items[idx]);
                *results[idx].lock().expect("result slot") = Some(outcome);
            });
        }
    });

    // merge in item order, then aggregate per (detector, condition)
    let mut per_entry: BTreeMap<(String, OperatingCondition), (Vec<S>, Vec<String>)> =
        BTreeMap::new();
    let mut records = Vec::new();
    for (item_idx, slot) in results.into_iter().enumerate() {
        let (det_idx, scene_idx) = items[item_idx];
        let outcome = slot
            .into_inner()
            .expect("result slot")
            .expect("every item ran");
        let rows = outcome?;
        let detector_name = detectors[det_idx].id.name.clone();
        for (row_idx, row_outcome) in rows {
            let row = &manifest.rows()[row_idx];
            let key = (detector_name.clone(), row.condition());
            let entry = per_entry.entry(key).or_default();
            match row_outcome {
                RowOutcome::Rate(rate) => {
                    entry.0.push(rate);
                    records.push(SceneRecord {
                        detector: detector_name.clone(),
                        scene_id: scene_ids[scene_idx].clone(),
                        condition: row.condition(),
                        repeatability: rate,
                    });
                }
                RowOutcome::Failed(message) => entry.1.push(message),
            }
        }
    }

    let mut entries = BTreeMap::new();
    for ((detector, condition), (rates, failures)) in per_entry {
        if failures.len() > config.failure_tolerance || rates.is_empty() {
            return Err(Error::External {
                name: detector,
                message: format!(
                    "{} failure(s) at {condition} exceed tolerance {} ({} scene(s) succeeded); first: {}",
                    failures.len(),
                    config.failure_tolerance,
                    rates.len(),
                    failures.first().map(String::as_str).unwrap_or("none")
                ),
            });
        }
        let sum = rates.iter().fold(S::zero(), |a, &b| a + b);
        let avg = sum / real(rates.len() as f64);
        CharacterizationTable::<S>::validate_entry(avg, rates.len())?;
        entries.insert((detector, condition), CharEntry { avg, support: rates.len() });
    }

    // log sorted the same way the table iterates: detector, scene, condition
    records.sort_by(|a, b| {
        (&a.detector, &a.scene_id, a.condition).cmp(&(&b.detector, &b.scene_id, b.condition))
    });
    Ok((CharacterizationTable { entries }, records))
}
