//! Fixture directories: a JSON manifest plus CPT1 tensor files.
//!
//! The manifest carries every dimension explicitly so that mismatches between
//! extractor and engine show up before any payload is read. Sample tensors are
//! loaded lazily, one record at a time, and validated on access.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_tensor_as, FromAny, ProjectionParams, Tensor, TensorF32};
use crate::error::{FixtureError, TensorIoError};
use crate::grid::Mask;

pub const FIXTURE_VERSION: &str = "copatch-fixture/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Hyperparameter defaults recorded by the extractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct HyperDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFiles {
    pub ln_gamma: PathBuf,
    pub ln_beta: PathBuf,
    pub ln_eps: f64,
    pub proj: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    #[serde(default)]
    pub expression: String,
    #[serde(default)]
    pub n_o: String,
    #[serde(default)]
    pub n_c: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_cue: Option<String>,
    pub e_sen: PathBuf,
    pub e_noun: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_neg: Option<PathBuf>,
    /// Patch embeddings keyed by exit layer.
    pub patches: BTreeMap<u32, PathBuf>,
    pub masks: PathBuf,
    pub e_img: PathBuf,
    pub gt: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cls_layers: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub version: String,
    pub model: String,
    pub d: usize,
    pub d_star: usize,
    pub p: usize,
    pub height: usize,
    pub width: usize,
    pub layers: Vec<u32>,
    #[serde(default)]
    pub defaults: HyperDefaults,
    pub params: ParamFiles,
    pub samples: Vec<SampleEntry>,
}

impl FixtureManifest {
    fn validate(&self) -> Result<(), FixtureError> {
        if self.version != FIXTURE_VERSION {
            return Err(FixtureError::Version {
                expected: FIXTURE_VERSION,
                found: self.version.clone(),
            });
        }
        for (name, v) in [
            ("d", self.d),
            ("d_star", self.d_star),
            ("p", self.p),
            ("height", self.height),
            ("width", self.width),
        ] {
            if v == 0 {
                return Err(FixtureError::Manifest(format!("{name} must be positive")));
            }
        }
        if self.layers.is_empty() {
            return Err(FixtureError::Manifest("no exit layers listed".into()));
        }
        if !(self.params.ln_eps > 0.0 && self.params.ln_eps.is_finite()) {
            return Err(FixtureError::Manifest(format!(
                "ln_eps must be positive, got {}",
                self.params.ln_eps
            )));
        }
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(FixtureError::Manifest(format!("duplicate sample id {:?}", s.id)));
            }
            for layer in &self.layers {
                if !s.patches.contains_key(layer) {
                    return Err(FixtureError::invariant(
                        &s.id,
                        format!("no patch embeddings for exit layer {layer}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One referring-expression instance, fully loaded and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub expression: String,
    pub n_o: String,
    pub n_c: String,
    pub spatial_cue: Option<String>,
    pub e_sen: Vec<f32>,
    pub e_noun: Vec<f32>,
    pub e_neg: Option<Vec<f32>>,
    pub exit_layer: u32,
    /// `[p, p, d_star]`.
    pub patches: TensorF32,
    pub masks: Vec<Mask>,
    /// `[M, d]`, row `m` embeds candidate mask `m`.
    pub e_img: TensorF32,
    pub gt: Mask,
    /// `[L, d_cls]` per-layer CLS embeddings, when dumped.
    pub cls_layers: Option<TensorF32>,
}

impl SampleRecord {
    pub fn has_spatial_cue(&self) -> bool {
        self.spatial_cue.as_deref().is_some_and(|s| !s.is_empty())
    }
}

/// An opened fixture directory.
#[derive(Debug, Clone)]
pub struct Fixture {
    root: PathBuf,
    manifest: FixtureManifest,
}

impl Fixture {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| FixtureError::ManifestIo {
            path: path.clone(),
            source,
        })?;
        let manifest: FixtureManifest =
            serde_json::from_str(&text).map_err(|source| FixtureError::ManifestParse { path, source })?;
        manifest.validate()?;
        Ok(Self { root, manifest })
    }

    /// Writes `manifest` into `dir`. Tensor files are the caller's concern.
    pub fn write_manifest(dir: impl AsRef<Path>, manifest: &FixtureManifest) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
        fs::write(dir.as_ref().join(MANIFEST_FILE), text + "\n")
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &FixtureManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.manifest.samples.iter().map(|s| s.id.as_str())
    }

    pub fn index_of(&self, sample_id: &str) -> Result<usize, FixtureError> {
        self.manifest
            .samples
            .iter()
            .position(|s| s.id == sample_id)
            .ok_or_else(|| FixtureError::UnknownSample(sample_id.to_string()))
    }

    pub fn check_layer(&self, layer: u32) -> Result<(), FixtureError> {
        if self.manifest.layers.contains(&layer) {
            Ok(())
        } else {
            Err(FixtureError::UnknownLayer {
                layer,
                available: self.manifest.layers.clone(),
            })
        }
    }

    /// Loads the LayerNorm and projection tensors for `layer`.
    pub fn params(&self, layer: u32) -> Result<ProjectionParams, FixtureError> {
        self.check_layer(layer)?;
        let m = &self.manifest;
        let load = |rel: &Path| -> Result<TensorF32, FixtureError> {
            read_tensor_as::<f32>(self.root.join(rel)).map_err(|e| FixtureError::Params(e.to_string()))
        };
        let gamma = load(&m.params.ln_gamma)?;
        let beta = load(&m.params.ln_beta)?;
        let proj = load(&m.params.proj)?;
        if proj.shape() != [m.d_star, m.d] {
            return Err(FixtureError::Params(format!(
                "projection shape {:?}, expected [{}, {}]",
                proj.shape(),
                m.d_star,
                m.d
            )));
        }
        ProjectionParams::new(
            m.d_star,
            m.d,
            gamma.into_data(),
            beta.into_data(),
            m.params.ln_eps,
            proj.into_data(),
            layer,
            m.p,
        )
        .map_err(|e| FixtureError::Params(e.to_string()))
    }

    /// Verifies that every file the manifest references exists, without
    /// reading payloads. Returns one error per missing file.
    pub fn missing_files(&self) -> Vec<FixtureError> {
        let mut out = Vec::new();
        for s in &self.manifest.samples {
            for rel in entry_paths(s) {
                let path = self.root.join(rel);
                if !path.is_file() {
                    out.push(FixtureError::MissingFile {
                        sample_id: s.id.clone(),
                        path,
                    });
                }
            }
        }
        out
    }

    pub fn load_by_id(&self, sample_id: &str, layer: u32) -> Result<SampleRecord, FixtureError> {
        self.load_sample(self.index_of(sample_id)?, layer)
    }

    /// Loads and validates sample `index` with patch embeddings from `layer`.
    pub fn load_sample(&self, index: usize, layer: u32) -> Result<SampleRecord, FixtureError> {
        self.check_layer(layer)?;
        let m = &self.manifest;
        let entry = m
            .samples
            .get(index)
            .ok_or_else(|| FixtureError::UnknownSample(format!("#{index}")))?;
        let id = entry.id.as_str();

        let vector = |rel: &Path, what: &str| -> Result<Vec<f32>, FixtureError> {
            let t = self.read::<f32>(id, rel)?;
            if t.data().len() != m.d {
                return Err(FixtureError::invariant(
                    id,
                    format!(
                        "{what} has length {} (shape {:?}), expected d = {}",
                        t.data().len(),
                        t.shape(),
                        m.d
                    ),
                ));
            }
            Ok(t.into_data())
        };

        let e_sen = vector(&entry.e_sen, "e_sen")?;
        let e_noun = vector(&entry.e_noun, "e_noun")?;
        let e_neg = entry
            .e_neg
            .as_deref()
            .map(|rel| vector(rel, "e_neg"))
            .transpose()?;

        let patch_path = &entry.patches[&layer];
        let patches = self.read::<f32>(id, patch_path)?;
        if patches.shape() != [m.p, m.p, m.d_star] {
            return Err(FixtureError::invariant(
                id,
                format!(
                    "patch embeddings shape {:?}, expected [{}, {}, {}]",
                    patches.shape(),
                    m.p,
                    m.p,
                    m.d_star
                ),
            ));
        }

        let mask_tensor = self.read::<u8>(id, &entry.masks)?;
        if mask_tensor.shape().len() != 3 || mask_tensor.shape()[1..] != [m.height, m.width] {
            return Err(FixtureError::invariant(
                id,
                format!(
                    "candidate masks shape {:?}, expected [M, {}, {}]",
                    mask_tensor.shape(),
                    m.height,
                    m.width
                ),
            ));
        }
        let masks = mask_tensor
            .to_masks()
            .map_err(|e| FixtureError::invariant(id, format!("candidate masks: {e}")))?;

        let e_img = self.read::<f32>(id, &entry.e_img)?;
        if e_img.shape() != [masks.len(), m.d] {
            return Err(FixtureError::invariant(
                id,
                format!(
                    "e_img shape {:?}, expected [{}, {}]",
                    e_img.shape(),
                    masks.len(),
                    m.d
                ),
            ));
        }

        let gt_tensor = self.read::<u8>(id, &entry.gt)?;
        if gt_tensor.shape() != [m.height, m.width] {
            return Err(FixtureError::invariant(
                id,
                format!(
                    "gt shape {:?}, expected [{}, {}]",
                    gt_tensor.shape(),
                    m.height,
                    m.width
                ),
            ));
        }
        let gt = gt_tensor
            .to_masks()
            .map_err(|e| FixtureError::invariant(id, format!("gt: {e}")))?
            .remove(0);

        let cls_layers = entry
            .cls_layers
            .as_deref()
            .map(|rel| self.read::<f32>(id, rel))
            .transpose()?;
        if let Some(cls) = &cls_layers {
            if cls.shape().len() != 2 {
                return Err(FixtureError::invariant(
                    id,
                    format!("cls_layers shape {:?}, expected [L, d]", cls.shape()),
                ));
            }
        }

        let checks: [(&str, &[f32]); 4] = [
            ("e_sen", &e_sen),
            ("e_noun", &e_noun),
            ("patch embeddings", patches.data()),
            ("e_img", e_img.data()),
        ];
        for (what, v) in checks.into_iter().chain(e_neg.as_deref().map(|v| ("e_neg", v))) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(FixtureError::invariant(
                    id,
                    format!("{what} has non-finite entries"),
                ));
            }
        }

        Ok(SampleRecord {
            sample_id: entry.id.clone(),
            expression: entry.expression.clone(),
            n_o: entry.n_o.clone(),
            n_c: entry.n_c.clone(),
            spatial_cue: entry.spatial_cue.clone().filter(|s| !s.is_empty()),
            e_sen,
            e_noun,
            e_neg,
            exit_layer: layer,
            patches,
            masks,
            e_img,
            gt,
            cls_layers,
        })
    }

    fn read<T: FromAny>(&self, sample_id: &str, rel: &Path) -> Result<Tensor<T>, FixtureError> {
        let path = self.root.join(rel);
        if !path.is_file() {
            return Err(FixtureError::MissingFile {
                sample_id: sample_id.to_string(),
                path,
            });
        }
        read_tensor_as::<T>(&path).map_err(|source: TensorIoError| FixtureError::Tensor {
            sample_id: sample_id.to_string(),
            source,
        })
    }
}

fn entry_paths(s: &SampleEntry) -> Vec<&Path> {
    let mut v: Vec<&Path> = vec![&s.e_sen, &s.e_noun, &s.masks, &s.e_img, &s.gt];
    v.extend(s.e_neg.as_deref());
    v.extend(s.cls_layers.as_deref());
    v.extend(s.patches.values().map(PathBuf::as_path));
    v
}
