//! Paired training data: every reality image is resized, L0-smoothed and
//! turned into a pencil sketch. Pairs are listed in a JSON Lines manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imgio::{
    load_image, resize, save_image, to_grayscale, GrayImage, ImageBuf, ImageFormat,
};
use crate::pencil::{pencil_sketch, SketchParams};
use crate::smooth::{grad_count, l0_smooth, L0Params};

pub const MANIFEST_NAME: &str = "pairs.jsonl";
pub const SKETCH_DIR: &str = "sketches";
pub const REALITY_DIR: &str = "reality";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    /// Relative to the manifest's directory.
    pub reality_path: String,
    pub sketch_path: String,
    pub width: usize,
    pub height: usize,
    pub params_digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairManifest {
    pub records: Vec<PairRecord>,
}

impl PairManifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: PairRecord = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        let m = Self { records };
        m.check()?;
        Ok(m)
    }

    /// Unique ids and a single shared parameter digest.
    pub fn check(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id {:?}", r.id)));
            }
        }
        if let Some(first) = self.records.first() {
            if let Some(r) = self
                .records
                .iter()
                .find(|r| r.params_digest != first.params_digest)
            {
                return Err(Error::Manifest(format!(
                    "record {:?} has a different params digest",
                    r.id
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub l0: L0Params,
    pub sketch: SketchParams,
    /// Side of the square output images.
    pub target: usize,
    /// Skip images whose smoothed gradient density exceeds this.
    pub max_complexity: Option<f64>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            l0: L0Params::default(),
            sketch: SketchParams::default(),
            target: 256,
            max_complexity: None,
        }
    }
}

/// Hex SHA-256 of the smoothing and sketch parameters, as canonical JSON.
pub fn params_digest(l0: &L0Params, sketch: &SketchParams) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        l0: &'a L0Params,
        sketch: &'a SketchParams,
    }
    let json = serde_json::to_vec(&Canonical { l0, sketch }).expect("params serialize");
    hex::encode(Sha256::digest(&json))
}

struct Extracted {
    sketch: GrayImage,
    reality: ImageBuf,
    complexity: f64,
}

fn extract_inner(
    r: &ImageBuf,
    l0p: &L0Params,
    sp: &SketchParams,
    target: usize,
) -> Result<Extracted> {
    let reality = resize(r, target, target)?;
    let smoothed = to_grayscale(&l0_smooth(&reality, l0p)?);
    let complexity = grad_count(&smoothed) as f64 / smoothed.len() as f64;
    let sketch = pencil_sketch(&smoothed, sp)?;
    Ok(Extracted {
        sketch,
        reality,
        complexity,
    })
}

/// Resizes `r` to `target x target` and derives its sketch from the smoothed
/// grayscale version. Returns `(sketch, reality)`.
pub fn extract_pair(
    r: &ImageBuf,
    l0p: &L0Params,
    sp: &SketchParams,
    target: usize,
) -> Result<(GrayImage, ImageBuf)> {
    l0p.validate()?;
    sp.validate()?;
    let e = extract_inner(r, l0p, sp, target)?;
    Ok((e.sketch, e.reality))
}

fn is_supported(path: &Path) -> bool {
    path.is_file() && ImageFormat::from_path(path).is_ok()
}

/// Supported image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_supported(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Stems as ids; colliding stems get their extension appended.
fn assign_ids(files: &[PathBuf]) -> Vec<String> {
    let stem = |p: &PathBuf| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let stems: Vec<String> = files.iter().map(stem).collect();
    stems
        .iter()
        .zip(files)
        .map(|(s, p)| {
            if stems.iter().filter(|t| *t == s).count() > 1 {
                let ext = p
                    .extension()
                    .map(|e| e.to_string_lossy().into_owned())
                    .unwrap_or_default();
                format!("{s}_{ext}")
            } else {
                s.clone()
            }
        })
        .collect()
}

enum Outcome {
    Kept(PairRecord),
    Skipped,
}

fn process_one(
    path: &Path,
    id: &str,
    out_dir: &Path,
    opts: &DatasetOptions,
    digest: &str,
) -> Result<Outcome> {
    let img = load_image(path)?;
    let e = extract_inner(&img, &opts.l0, &opts.sketch, opts.target)?;
    if let Some(max) = opts.max_complexity {
        if e.complexity > max {
            log::info!(
                "skipping {}: complexity {:.4} exceeds {max}",
                path.display(),
                e.complexity
            );
            return Ok(Outcome::Skipped);
        }
    }
    let sketch_rel = format!("{SKETCH_DIR}/{id}.png");
    let reality_rel = format!("{REALITY_DIR}/{id}.png");
    save_image(
        &e.sketch.to_buf(),
        out_dir.join(&sketch_rel),
        ImageFormat::Png,
    )?;
    save_image(&e.reality, out_dir.join(&reality_rel), ImageFormat::Png)?;
    Ok(Outcome::Kept(PairRecord {
        id: id.to_string(),
        reality_path: reality_rel,
        sketch_path: sketch_rel,
        width: opts.target,
        height: opts.target,
        params_digest: digest.to_string(),
    }))
}

/// Processes every supported image in `in_dir` and writes sketches, resized
/// realities and `pairs.jsonl` under `out_dir`.
pub fn build_dataset(
    in_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    opts: &DatasetOptions,
) -> Result<PairManifest> {
    let (in_dir, out_dir) = (in_dir.as_ref(), out_dir.as_ref());
    opts.l0.validate()?;
    opts.sketch.validate()?;
    if opts.target == 0 {
        return Err(Error::param("target", "must be at least 1"));
    }
    if let Some(m) = opts.max_complexity {
        if !(m >= 0.0) {
            return Err(Error::param(
                "max-complexity",
                format!("must be >= 0, got {m}"),
            ));
        }
    }
    let files = list_images(in_dir)?;
    if files.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no PNG/PGM/PPM images in {}",
            in_dir.display()
        )));
    }
    for sub in [SKETCH_DIR, REALITY_DIR] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    let ids = assign_ids(&files);
    let digest = params_digest(&opts.l0, &opts.sketch);
    let jobs: Vec<(&PathBuf, &String)> = files.iter().zip(&ids).collect();
    let run = |(path, id): &(&PathBuf, &String)| process_one(path, id, out_dir, opts, &digest);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<Outcome>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<Outcome>> = jobs.iter().map(run).collect();

    let mut records = Vec::new();
    for outcome in outcomes {
        if let Outcome::Kept(r) = outcome? {
            records.push(r);
        }
    }
    let manifest = PairManifest { records };
    manifest.check()?;
    manifest.write(out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
