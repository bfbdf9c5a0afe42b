//! Selection-table construction and the table-driven runtime path.
//!
//! The selection table maps every operating condition to the detector
//! with the highest characterized average repeatability. At runtime no
//! detector ever runs: selection is feature extraction, two classifier
//! lookups, and one table lookup.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::characterize::CharacterizationTable;
use crate::classify::{predict_condition, LinearModel, OperatingCondition};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureConfig, FeatureVector};
use crate::image::GrayImage;
use crate::transforms::TransformKind;
use crate::Real;

pub const SELECTION_HEADER: &str = "kind,level_index,detector,winning_avg,margin";

/// Winner of one condition, with how much it won by. `margin` is the gap
/// to the runner-up average; with a single detector the runner-up average
/// is taken as 0, so the margin equals the winning average.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRule<S: Real> {
    pub detector: String,
    pub winning_avg: S,
    pub margin: S,
}

/// Map condition -> winning detector. `fallback` optionally names the
/// globally best detector for lookups outside the table.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionTable<S: Real> {
    rules: BTreeMap<OperatingCondition, SelectionRule<S>>,
    fallback: Option<String>,
}

impl<S: Real> SelectionTable<S> {
    pub fn rules(&self) -> impl Iterator<Item = (OperatingCondition, &SelectionRule<S>)> {
        self.rules.iter().map(|(c, r)| (*c, r))
    }

    pub fn rule(&self, condition: OperatingCondition) -> Option<&SelectionRule<S>> {
        self.rules.get(&condition)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn fallback(&self) -> Option<&str> {
        self.fallback.as_deref()
    }

    /// Installs the globally-best-average detector of `table` as the
    /// fallback for uncharacterized conditions.
    pub fn with_fallback_from(mut self, table: &CharacterizationTable<S>) -> Self {
        self.fallback = table.global_best().map(str::to_owned);
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SELECTION_HEADER}");
        for (cond, rule) in &self.rules {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                cond.kind, cond.level_index, rule.detector, rule.winning_avg, rule.margin
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Loads rules from CSV. The fallback is not part of the format; use
    /// `with_fallback_from` with the characterization table if needed.
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
            Some((_, h)) if h == SELECTION_HEADER => {}
            Some((_, other)) => {
                return Err(fail(1, format!("expected header {SELECTION_HEADER:?}, got {other:?}")))
            }
            None => return Err(fail(1, "empty selection table".into())),
        }
        let mut rules = BTreeMap::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(fail(idx + 1, format!("expected 5 fields, got {}", fields.len())));
            }
            let kind = TransformKind::from_name(fields[0])
                .ok_or_else(|| fail(idx + 1, format!("unknown kind {:?}", fields[0])))?;
            let level_index: usize = fields[1]
                .parse()
                .map_err(|_| fail(idx + 1, format!("bad level index {:?}", fields[1])))?;
            let condition = OperatingCondition::new(kind, level_index)
                .map_err(|e| fail(idx + 1, e.to_string()))?;
            let winning_avg: S = fields[3]
                .parse()
                .map_err(|_| fail(idx + 1, format!("bad average {:?}", fields[3])))?;
            let margin: S = fields[4]
                .parse()
                .map_err(|_| fail(idx + 1, format!("bad margin {:?}", fields[4])))?;
            let rule = SelectionRule {
                detector: fields[2].to_string(),
                winning_avg,
                margin,
            };
            if rules.insert(condition, rule).is_some() {
                return Err(fail(idx + 1, format!("duplicate rule for {condition}")));
            }
        }
        Ok(Self {
            rules,
            fallback: None,
        })
    }
}

/// Argmax of the characterization table per condition. Requires an entry
/// for every (detector, condition) over all ladder conditions; ties break
/// lexicographically by detector name.
pub fn build_selection_table<S: Real>(
    table: &CharacterizationTable<S>,
) -> Result<SelectionTable<S>> {
    let detectors = table.detectors();
    if detectors.is_empty() {
        return Err(Error::Domain("selection needs a characterized detector set".into()));
    }
    let mut rules = BTreeMap::new();
    for condition in OperatingCondition::all() {
        let mut ranked: Vec<(&str, S)> = Vec::with_capacity(detectors.len());
        for name in &detectors {
            let entry = table.get(name, condition).ok_or_else(|| {
                Error::Domain(format!(
                    "characterization table has no entry for {name} at {condition}"
                ))
            })?;
            ranked.push((name, entry.avg));
        }
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite averages")
                .then(a.0.cmp(b.0))
        });
        let (winner, winning_avg) = ranked[0];
        let runner_up = ranked.get(1).map(|&(_, avg)| avg).unwrap_or(S::zero());
        rules.insert(
            condition,
            SelectionRule {
                detector: winner.to_string(),
                winning_avg,
                margin: winning_avg - runner_up,
            },
        );
    }
    let fallback = table.global_best().map(str::to_owned);
    Ok(SelectionTable { rules, fallback })
}

/// Looks up the detector for a condition. A missing condition falls back
/// to the table's global-best detector when `use_fallback` is set and a
/// fallback is known; otherwise it is a domain error.
pub fn select_detector<S: Real>(
    table: &SelectionTable<S>,
    condition: OperatingCondition,
    use_fallback: bool,
) -> Result<&str> {
    if let Some(rule) = table.rule(condition) {
        return Ok(&rule.detector);
    }
    if use_fallback {
        if let Some(name) = table.fallback() {
            return Ok(name);
        }
    }
    Err(Error::Domain(format!(
        "no selection rule for condition {condition}"
    )))
}

/// Wall-clock cost of each runtime stage.
#[derive(Clone, Copy, Debug)]
pub struct StageTimings {
    pub extract: Duration,
    pub classify: Duration,
    pub lookup: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.extract + self.classify + self.lookup
    }
}

/// Everything the runtime path produces for one image pair.
#[derive(Clone, Debug)]
pub struct SelectionReport<S: Real> {
    pub features: FeatureVector<S>,
    pub condition: OperatingCondition,
    pub detector: String,
    pub timings: StageTimings,
}

/// The full runtime path: features, predicted condition, table lookup.
pub fn select_for_images<S: Real>(
    reference: &GrayImage,
    target: &GrayImage,
    type_model: &LinearModel<S>,
    amount_models: &BTreeMap<TransformKind, LinearModel<S>>,
    table: &SelectionTable<S>,
    feature_config: &FeatureConfig<S>,
    use_fallback: bool,
) -> Result<SelectionReport<S>> {
    let t0 = Instant::now();
    let features = extract_features(reference, target, feature_config)?;
    let t1 = Instant::now();
    let condition = predict_condition(type_model, amount_models, &features)?;
    let t2 = Instant::now();
    let detector = select_detector(table, condition, use_fallback)?.to_string();
    let t3 = Instant::now();
    Ok(SelectionReport {
        features,
        condition,
        detector,
        timings: StageTimings {
            extract: t1 - t0,
            classify: t2 - t1,
            lookup: t3 - t2,
        },
    })
}

/// Per-condition outcome of replaying selection over a test split.
#[derive(Clone, Debug, PartialEq)]
pub struct GapRow<S: Real> {
    pub condition: OperatingCondition,
    /// Mean characterized average of the detector chosen per scene.
    pub selected_avg: S,
    /// Best characterized average any detector attains at the condition.
    pub best_avg: S,
    /// best_avg - selected_avg (0 when selection was optimal everywhere).
    pub gap: S,
}

pub const GAP_HEADER: &str = "kind,level_index,selected_avg,best_avg,gap";

pub fn gaps_to_csv<S: Real>(rows: &[GapRow<S>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{GAP_HEADER}");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.condition.kind, row.condition.level_index, row.selected_avg, row.best_avg, row.gap
        );
    }
    out
}

/// Replays selection for labelled feature vectors and scores each true
/// condition by the characterized average of the detector that selection
/// picked there. `predict` maps features to a condition; passing the true
/// condition through (oracle) makes every gap zero by construction.
pub fn evaluate_gaps<S: Real>(
    samples: &[(OperatingCondition, FeatureVector<S>)],
    table: &SelectionTable<S>,
    characterization: &CharacterizationTable<S>,
    use_fallback: bool,
    mut predict: impl FnMut(OperatingCondition, &FeatureVector<S>) -> Result<OperatingCondition>,
) -> Result<Vec<GapRow<S>>> {
    let mut per_condition: BTreeMap<OperatingCondition, BTreeMap<String, (usize, S)>> =
        BTreeMap::new();
    for (true_condition, features) in samples {
        let predicted = predict(*true_condition, features)?;
        let detector = select_detector(table, predicted, use_fallback)?;
        let entry = characterization.get(detector, *true_condition).ok_or_else(|| {
            Error::Domain(format!(
                "no characterization for {detector} at {true_condition}"
            ))
        })?;
        let slot = per_condition
            .entry(*true_condition)
            .or_default()
            .entry(detector.to_string())
            .or_insert((0, entry.avg));
        slot.0 += 1;
    }

    let mut rows = Vec::new();
    for (condition, by_detector) in per_condition {
        // Aggregated as one weight per distinct detector rather than a mean
        // over samples; when every sample picks the same detector the weight
        // is exactly one, so oracle replay reproduces the table entry bit
        // for bit instead of accumulating summation rounding.
        let total: usize = by_detector.values().map(|(count, _)| count).sum();
        let selected_avg = by_detector.values().fold(S::zero(), |acc, &(count, avg)| {
            acc + crate::real::<S>(count as f64 / total as f64) * avg
        });
        let best_avg = characterization
            .detectors()
            .iter()
            .filter_map(|d| characterization.get(d, condition))
            .map(|e| e.avg)
            .fold(S::zero(), |a, b| a.max(b));
        rows.push(GapRow {
            condition,
            selected_avg,
            best_avg,
            gap: best_avg - selected_avg,
        });
    }
    Ok(rows)
}
