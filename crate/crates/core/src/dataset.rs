//! Degradation dataset generation and its on-disk manifest.
//!
//! Layout under the dataset root: `<scene>/reference.pgm` plus one
//! `<scene>/<kind>_<level>.pgm` per (kind, level). The manifest lists one
//! row per target with paths relative to the root, so a dataset directory
//! can be moved wholesale.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::classify::OperatingCondition;
use crate::error::{Error, Result};
use crate::image::{load_image_file, save_image_file, GrayImage};
use crate::transforms::{apply_transform, Ladders, TransformKind};

pub const MANIFEST_HEADER: &str = "scene_id,kind,level_index,amount,path";

/// One generated target image.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub scene_id: String,
    pub kind: TransformKind,
    pub level_index: usize,
    pub amount: f64,
    /// Path relative to the dataset root.
    pub path: String,
}

impl ManifestRow {
    pub fn condition(&self) -> OperatingCondition {
        OperatingCondition {
            kind: self.kind,
            level_index: self.level_index,
        }
    }
}

/// The dataset index: root directory plus one row per target image.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    root: PathBuf,
    rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    /// Scene ids in first-appearance order (generation emits them sorted).
    pub fn scene_ids(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for row in &self.rows {
            if out.last() != Some(&row.scene_id.as_str()) && !out.contains(&row.scene_id.as_str()) {
                out.push(row.scene_id.as_str());
            }
        }
        out
    }

    pub fn reference_path(&self, scene_id: &str) -> PathBuf {
        self.root.join(scene_id).join("reference.pgm")
    }

    pub fn target_path(&self, row: &ManifestRow) -> PathBuf {
        self.root.join(&row.path)
    }

    pub fn load_reference(&self, scene_id: &str) -> Result<GrayImage> {
        load_image_file(&self.reference_path(scene_id))
    }

    pub fn load_target(&self, row: &ManifestRow) -> Result<GrayImage> {
        load_image_file(&self.target_path(row))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MANIFEST_HEADER}");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.scene_id, row.kind, row.level_index, row.amount, row.path
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Loads a manifest; image paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_csv(&text, root, &path.display().to_string())
    }

    pub fn from_csv(text: &str, root: PathBuf, origin: &str) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Format {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == MANIFEST_HEADER => {}
            Some((_, other)) => {
                return Err(fail(1, format!("expected header {MANIFEST_HEADER:?}, got {other:?}")))
            }
            None => return Err(fail(1, "empty manifest".into())),
        }
        let mut rows = Vec::new();
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
            if level_index >= kind.ladder_len() {
                return Err(fail(
                    idx + 1,
                    format!("level {level_index} outside {kind} ladder of {} levels", kind.ladder_len()),
                ));
            }
            let amount: f64 = fields[3]
                .parse()
                .map_err(|_| fail(idx + 1, format!("bad amount {:?}", fields[3])))?;
            rows.push(ManifestRow {
                scene_id: fields[0].to_string(),
                kind,
                level_index,
                amount,
                path: fields[4].to_string(),
            });
        }
        Ok(Self { root, rows })
    }
}

fn validate_scene_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "scene id {id:?} must be non-empty and use only [A-Za-z0-9_-]"
        )))
    }
}

/// Writes every scene's reference and all (kind, level) targets under
/// `out_dir`, returning the manifest (kinds in declared order, levels
/// ascending, scenes in input order).
pub fn generate_dataset(
    scenes: &[(String, GrayImage)],
    ladders: &Ladders,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    ladders.validate()?;
    let mut seen = BTreeSet::new();
    for (id, _) in scenes {
        validate_scene_id(id)?;
        if !seen.insert(id.as_str()) {
            return Err(Error::Domain(format!("duplicate scene id {id:?}")));
        }
    }

    let mut rows = Vec::new();
    for (scene_id, reference) in scenes {
        let scene_dir = out_dir.join(scene_id);
        std::fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
        save_image_file(reference, &scene_dir.join("reference.pgm"))?;
        for kind in TransformKind::ALL {
            for (level_index, &amount) in ladders.ladder(kind).iter().enumerate() {
                let target = apply_transform::<f64>(reference, kind, amount)?;
                let rel = format!("{scene_id}/{kind}_{level_index:02}.pgm");
                save_image_file(&target, &out_dir.join(&rel))?;
                rows.push(ManifestRow {
                    scene_id: scene_id.clone(),
                    kind,
                    level_index,
                    amount,
                    path: rel,
                });
            }
        }
    }
    Ok(DatasetManifest {
        root: out_dir.to_path_buf(),
        rows,
    })
}
