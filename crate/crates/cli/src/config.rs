//! Run configuration: built-in defaults, the line-oriented config file,
//! and command-line overrides. Precedence is defaults, then file, then
//! flags; every file key has a same-named flag.

use std::path::{Path, PathBuf};

use dpsel_core::error::{Error, Result};
use dpsel_core::transforms::Ladders;

/// Everything the pipeline commands read. One `seed` drives both the
/// scene split and the trainer shuffle, so a fixed config replays the
/// whole pipeline bit for bit (built-in detectors).
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Directory of scene images; every `*.pgm` file is one scene.
    pub corpus_dir: PathBuf,
    /// Directory receiving all pipeline artifacts.
    pub work_dir: PathBuf,
    pub light_ladder: Vec<f64>,
    pub blur_ladder: Vec<f64>,
    pub jpeg_ladder: Vec<f64>,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of scenes in the training split.
    pub train_fraction: f64,
    /// Keypoint matching tolerance in pixels.
    pub eps: f64,
    /// Built-in detector names (`harris`, `dog`).
    pub detectors: Vec<String>,
    /// External detectors as (name, command template) pairs.
    pub externals: Vec<(String, String)>,
    pub timeout_secs: f64,
    /// External failures excluded per table entry before characterization aborts.
    pub failure_tolerance: usize,
    /// Worker thread cap for characterization; 0 means one per core.
    pub workers: usize,
    /// Divide the target quality score by the reference score.
    pub normalized_fj: bool,
    pub blur_kernel_len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ladders = Ladders::default();
        Self {
            corpus_dir: PathBuf::from("corpus"),
            work_dir: PathBuf::from("work"),
            light_ladder: ladders.light,
            blur_ladder: ladders.blur,
            jpeg_ladder: ladders.jpeg,
            lambda: 1e-3,
            epochs: 200,
            seed: 42,
            // 339 of 539 scenes train in the reference split
            train_fraction: 339.0 / 539.0,
            eps: 2.0,
            detectors: vec!["harris".to_string(), "dog".to_string()],
            externals: Vec::new(),
            timeout_secs: 10.0,
            failure_tolerance: 0,
            workers: 0,
            normalized_fj: false,
            blur_kernel_len: 9,
        }
    }
}

impl RunConfig {
    pub fn apply(&mut self, o: Overrides) {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = o.$field {
                    self.$field = v;
                }
            };
        }
        take!(corpus_dir);
        take!(work_dir);
        take!(light_ladder);
        take!(blur_ladder);
        take!(jpeg_ladder);
        take!(lambda);
        take!(epochs);
        take!(seed);
        take!(train_fraction);
        take!(eps);
        take!(detectors);
        take!(timeout_secs);
        take!(failure_tolerance);
        take!(workers);
        take!(normalized_fj);
        take!(blur_kernel_len);
        self.externals.extend(o.externals);
    }

    pub fn ladders(&self) -> Ladders {
        Ladders {
            light: self.light_ladder.clone(),
            blur: self.blur_ladder.clone(),
            jpeg: self.jpeg_ladder.clone(),
        }
    }
}

/// A partial configuration; unset fields keep the value they override.
/// `external` entries accumulate instead of replacing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub corpus_dir: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub light_ladder: Option<Vec<f64>>,
    pub blur_ladder: Option<Vec<f64>>,
    pub jpeg_ladder: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub eps: Option<f64>,
    pub detectors: Option<Vec<String>>,
    pub externals: Vec<(String, String)>,
    pub timeout_secs: Option<f64>,
    pub failure_tolerance: Option<usize>,
    pub workers: Option<usize>,
    pub normalized_fj: Option<bool>,
    pub blur_kernel_len: Option<usize>,
}

pub fn parse_number_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect()
}

pub fn parse_name_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// `<name> <command template>`; the template keeps its inner whitespace.
pub fn parse_external(s: &str) -> std::result::Result<(String, String), String> {
    let s = s.trim();
    let (name, template) = s
        .split_once(char::is_whitespace)
        .ok_or_else(|| format!("external {s:?} needs `<name> <command template>`"))?;
    let template = template.trim();
    if template.is_empty() {
        return Err(format!("external {name:?} has an empty command template"));
    }
    Ok((name.to_string(), template.to_string()))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

pub fn load_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config_text(&text, &path.display().to_string())
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// ignored, a repeated key keeps its last value.
pub fn parse_config_text(text: &str, origin: &str) -> Result<Overrides> {
    let fail = |line: usize, message: String| Error::Format {
        path: origin.to_string(),
        line,
        message,
    };
    let mut o = Overrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| fail(line_no, format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |message: String| fail(line_no, format!("{key}: {message}"));
        match key {
            "corpus_dir" => o.corpus_dir = Some(PathBuf::from(value)),
            "work_dir" => o.work_dir = Some(PathBuf::from(value)),
            "light_ladder" => o.light_ladder = Some(parse_number_list(value).map_err(bad)?),
            "blur_ladder" => o.blur_ladder = Some(parse_number_list(value).map_err(bad)?),
            "jpeg_ladder" => o.jpeg_ladder = Some(parse_number_list(value).map_err(bad)?),
            "lambda" => o.lambda = Some(value.parse().map_err(|_| bad(format!("bad number {value:?}")))?),
            "epochs" => o.epochs = Some(value.parse().map_err(|_| bad(format!("bad count {value:?}")))?),
            "seed" => o.seed = Some(value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?),
            "train_fraction" => {
                let v: f64 = value.parse().map_err(|_| bad(format!("bad number {value:?}")))?;
                if !(0.0 < v && v < 1.0) {
                    return Err(bad(format!("fraction {v} outside (0, 1)")));
                }
                o.train_fraction = Some(v);
            }
            "eps" => o.eps = Some(value.parse().map_err(|_| bad(format!("bad number {value:?}")))?),
            "detectors" => o.detectors = Some(parse_name_list(value)),
            "external" => o.externals.push(parse_external(value).map_err(bad)?),
            "timeout_secs" => {
                o.timeout_secs = Some(value.parse().map_err(|_| bad(format!("bad number {value:?}")))?)
            }
            "failure_tolerance" => {
                o.failure_tolerance = Some(value.parse().map_err(|_| bad(format!("bad count {value:?}")))?)
            }
            "workers" => o.workers = Some(value.parse().map_err(|_| bad(format!("bad count {value:?}")))?),
            "normalized_fj" => o.normalized_fj = Some(parse_bool(value).map_err(bad)?),
            "blur_kernel_len" => {
                o.blur_kernel_len = Some(value.parse().map_err(|_| bad(format!("bad length {value:?}")))?)
            }
            other => return Err(fail(line_no, format!("unknown key {other:?}"))),
        }
    }
    Ok(o)
}
