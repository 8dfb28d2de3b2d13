//! File-level helpers: cloud loading by extension, annotation JSON, and
//! directory scans pairing shapes by file stem.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use kpdiff_core::geometry::{
    parse_pointcloud, CloudFormat, KeypointSet, LabeledPointCloud, ParsedCloud, PointCloud,
};
use kpdiff_core::metrics::Annotation;

pub fn format_of(path: &Path) -> Result<CloudFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("xyz") | Some("txt") => Ok(CloudFormat::XyzText),
        Some("ply") => Ok(CloudFormat::PlyAscii),
        other => bail!("unsupported cloud extension {:?} for {}", other, path.display()),
    }
}

pub fn read_cloud_file(path: &Path) -> Result<ParsedCloud> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_pointcloud(&bytes, format_of(path)?)
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn read_plain_cloud(path: &Path) -> Result<PointCloud> {
    Ok(read_cloud_file(path)?.cloud())
}

pub fn read_labeled_cloud(path: &Path) -> Result<LabeledPointCloud> {
    match read_cloud_file(path)? {
        ParsedCloud::Labeled(lc) => Ok(lc),
        ParsedCloud::Plain(_) => bail!("{} has no label column", path.display()),
    }
}

pub fn read_keypoints(path: &Path) -> Result<KeypointSet> {
    let pc = read_plain_cloud(path)?;
    Ok(KeypointSet {
        keypoints: pc.points,
    })
}

/// Sorted (stem, path) pairs of the cloud files in a directory.
pub fn cloud_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        if format_of(&path).is_err() {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .context("non-utf8 file name")?;
        out.push((stem, path));
    }
    out.sort();
    if out.is_empty() {
        bail!("no cloud files (.xyz/.ply) in {}", dir.display());
    }
    Ok(out)
}

/// The annotations file format: shape id to a list of labeled positions.
#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub xyz: [f64; 3],
    pub label: usize,
}

pub type AnnotationFile = BTreeMap<String, Vec<AnnotationEntry>>;

pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, Vec<Annotation>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: AnnotationFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(parsed
        .into_iter()
        .map(|(id, entries)| {
            (
                id,
                entries
                    .into_iter()
                    .map(|e| Annotation {
                        position: e.xyz,
                        label: e.label,
                    })
                    .collect(),
            )
        })
        .collect())
}

pub fn write_annotations(
    path: &Path,
    annos: &BTreeMap<String, Vec<Annotation>>,
) -> Result<()> {
    let file: AnnotationFile = annos
        .iter()
        .map(|(id, list)| {
            (
                id.clone(),
                list.iter()
                    .map(|a| AnnotationEntry {
                        xyz: a.position,
                        label: a.label,
                    })
                    .collect(),
            )
        })
        .collect();
    fs::write(path, serde_json::to_string_pretty(&file)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
