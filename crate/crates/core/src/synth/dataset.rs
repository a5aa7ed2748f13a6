use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use super::{condition_roles, sample, StageSample};
use crate::error::{Error, Result};
use crate::image_io::{png_read_mask, png_read_rgb, png_write};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "split,seed,stage,role,file";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub stage: u8,
    pub seed: u64,
    pub size: usize,
    pub train_count: usize,
    pub test_count: usize,
}

/// Seed of the `index`-th sample of a dataset; test samples continue the
/// index range after the training ones, so the splits never share a seed.
pub fn sample_seed(dataset_seed: u64, index: usize) -> u64 {
    dataset_seed.wrapping_mul(1_000_000).wrapping_add(index as u64)
}

fn is_mask(role: &str) -> bool {
    role.ends_with("mask") || role == "silhouette"
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub split: Split,
    pub seed: u64,
    pub stage: u8,
    pub role: String,
    pub file: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.split, r.seed, r.stage, r.role, r.file));
        }
        s
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(Error::Format(format!("{}: missing header {MANIFEST_HEADER}", path.display())));
        }
        let bad = |l: &str| Error::Format(format!("{}: malformed row {l:?}", path.display()));
        let rows = lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 5 {
                    return Err(bad(l));
                }
                Ok(ManifestRow {
                    split: f[0].parse()?,
                    seed: f[1].parse().map_err(|_| bad(l))?,
                    stage: f[2].parse().map_err(|_| bad(l))?,
                    role: f[3].to_string(),
                    file: f[4].to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    /// Number of distinct samples in a split.
    pub fn count(&self, split: Split) -> usize {
        let mut seeds: Vec<u64> = self.rows.iter().filter(|r| r.split == split).map(|r| r.seed).collect();
        seeds.dedup();
        seeds.len()
    }
}

/// Renders a stage dataset as `{stage}_{seed}_{role}.png` files plus
/// `manifest.csv`. Re-running with the same spec rewrites identical bytes.
pub fn export_dataset(dir: &Path, spec: &DatasetSpec) -> Result<Manifest> {
    condition_roles(spec.stage)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    let splits = [(Split::Train, 0..spec.train_count), (Split::Test, spec.train_count..spec.train_count + spec.test_count)];
    for (split, range) in splits {
        for index in range {
            let seed = sample_seed(spec.seed, index);
            let s = sample(spec.stage, seed, spec.size)?;
            let mut written: Vec<&str> = Vec::new();
            let images = s
                .conditions
                .iter()
                .chain(std::iter::once(&("target", s.target.clone())))
                .chain(&s.masks)
                .map(|(r, t)| (*r, t.clone()))
                .collect::<Vec<_>>();
            for (role, t) in &images {
                if written.contains(role) {
                    continue;
                }
                written.push(role);
                let file = format!("{}_{}_{}.png", spec.stage, seed, role);
                png_write(&dir.join(&file), t)?;
                manifest.rows.push(ManifestRow {
                    split,
                    seed,
                    stage: spec.stage,
                    role: role.to_string(),
                    file,
                });
            }
        }
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads one split of an exported stage dataset, in manifest order.
pub fn load_split(dir: &Path, stage: u8, split: Split) -> Result<Vec<StageSample>> {
    let roles = condition_roles(stage)?;
    let manifest = Manifest::read(dir)?;
    let mut by_seed: BTreeMap<u64, Vec<&ManifestRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in manifest.rows.iter().filter(|r| r.split == split && r.stage == stage) {
        if !by_seed.contains_key(&r.seed) {
            order.push(r.seed);
        }
        by_seed.entry(r.seed).or_default().push(r);
    }
    if order.is_empty() {
        return Err(Error::Format(format!(
            "{}: no stage-{stage} {split} samples",
            dir.display()
        )));
    }
    order
        .into_iter()
        .map(|seed| {
            let rows = &by_seed[&seed];
            let read = |role: &str| -> Result<crate::tensor::Tensor> {
                let row = rows
                    .iter()
                    .find(|r| r.role == role)
                    .ok_or_else(|| Error::Format(format!("sample {seed} has no {role} image")))?;
                let path = dir.join(&row.file);
                if is_mask(role) {
                    png_read_mask(&path)
                } else {
                    png_read_rgb(&path)
                }
            };
            let conditions = roles.iter().map(|&r| Ok((r, read(r)?))).collect::<Result<Vec<_>>>()?;
            let mut masks = Vec::new();
            for r in rows.iter().filter(|r| is_mask(&r.role)) {
                let role: &'static str = match r.role.as_str() {
                    "garment_mask" => "garment_mask",
                    "hole_mask" => "hole_mask",
                    "silhouette" => "silhouette",
                    other => return Err(Error::Format(format!("unknown mask role {other}"))),
                };
                masks.push((role, read(role)?));
            }
            Ok(StageSample {
                stage,
                seed,
                conditions,
                target: read("target")?,
                masks,
            })
        })
        .collect()
}
