//! Dataset directories: `manifest.json` plus one tensor archive per split.
//!
//! Emotion splits hold `images [n,1,S,S]` and `labels [n,2]` (arousal,
//! valence). Personality splits hold `frames [V,L,1,S,S]`,
//! `frame_labels [V,L,2]`, `traits [V,5]` and `latents [V,2]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{DataConfig, DatasetTag, Datasets, SyntheticSample, SyntheticVideo};
use super::sampling::segments;
use crate::binio::{self, read_archive, sha256_file, sha256_hex, write_archive};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

pub const MANIFEST: &str = "manifest.json";
pub const DATASET_FORMAT: &str = "persemon-dataset";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub name: String,
    pub file: String,
    pub tag: DatasetTag,
    /// Frames for emotion splits, videos for personality splits.
    pub count: usize,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub config: DataConfig,
    pub splits: Vec<SplitRecord>,
}

fn emotion_tensors(samples: &[SyntheticSample]) -> Result<(Tensor, Tensor)> {
    let images: Vec<&Tensor> = samples.iter().map(|s| &s.image).collect();
    let labels = samples.iter().flat_map(|s| [s.arousal, s.valence]).collect();
    Ok((Tensor::stack(&images)?, Tensor::new(vec![samples.len(), 2], labels)?))
}

fn personality_tensors(videos: &[SyntheticVideo]) -> Result<[Tensor; 4]> {
    let len = videos[0].frames.len();
    let s = videos[0].frames[0].image.shape().to_vec();
    let mut frames = Vec::new();
    let mut frame_labels = Vec::new();
    for v in videos {
        if v.frames.len() != len {
            return Err(Error::Contract("videos must have equal length to be stored".into()));
        }
        for f in &v.frames {
            frames.extend_from_slice(f.image.data());
            frame_labels.extend_from_slice(&[f.arousal, f.valence]);
        }
    }
    let n = videos.len();
    let mut shape = vec![n, len];
    shape.extend_from_slice(&s);
    Ok([
        Tensor::new(shape, frames)?,
        Tensor::new(vec![n, len, 2], frame_labels)?,
        Tensor::new(vec![n, 5], videos.iter().flat_map(|v| v.traits).collect())?,
        Tensor::new(vec![n, 2], videos.iter().flat_map(|v| [v.latent.0, v.latent.1]).collect())?,
    ])
}

/// Writes `ds` under `dir` (created if missing) and returns the manifest.
pub fn save_datasets(ds: &Datasets, dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut splits = Vec::new();
    for (name, samples, s) in [
        ("emotion_train", &ds.emotion_train, stream::EMOTION_TRAIN),
        ("emotion_eval", &ds.emotion_eval, stream::EMOTION_EVAL),
    ] {
        let file = format!("{name}.bin");
        let (images, labels) = emotion_tensors(samples)?;
        write_archive(&dir.join(&file), &[("images", &images), ("labels", &labels)])?;
        splits.push(SplitRecord {
            name: name.into(),
            sha256: sha256_file(&dir.join(&file))?,
            file,
            tag: DatasetTag::Emotion,
            count: samples.len(),
            seed: seed::derive(ds.config.seed, s),
        });
    }
    for (name, videos, s) in [
        ("personality_train", &ds.personality_train, stream::PERSONALITY_TRAIN),
        ("personality_eval", &ds.personality_eval, stream::PERSONALITY_EVAL),
    ] {
        let file = format!("{name}.bin");
        let [frames, frame_labels, traits, latents] = personality_tensors(videos)?;
        write_archive(
            &dir.join(&file),
            &[
                ("frames", &frames),
                ("frame_labels", &frame_labels),
                ("traits", &traits),
                ("latents", &latents),
            ],
        )?;
        splits.push(SplitRecord {
            name: name.into(),
            sha256: sha256_file(&dir.join(&file))?,
            file,
            tag: DatasetTag::Personality,
            count: videos.len(),
            seed: seed::derive(ds.config.seed, s),
        });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: 1,
        config: ds.config.clone(),
        splits,
    };
    std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn load_emotion(path: &Path) -> Result<Vec<SyntheticSample>> {
    let mut e = read_archive(path)?;
    let images = binio::take(&mut e, "images", path)?;
    let labels = binio::take(&mut e, "labels", path)?;
    if images.ndim() != 4 || labels.shape() != [images.shape()[0], 2] {
        return Err(format_err(path, "inconsistent emotion tensors"));
    }
    let frame_shape = images.shape()[1..].to_vec();
    Ok((0..images.rows())
        .map(|i| SyntheticSample {
            image: Tensor::new(frame_shape.clone(), images.row(i).to_vec()).expect("row has frame shape"),
            arousal: labels.row(i)[0],
            valence: labels.row(i)[1],
            tag: DatasetTag::Emotion,
        })
        .collect())
}

fn load_personality(path: &Path, k: usize) -> Result<Vec<SyntheticVideo>> {
    let mut e = read_archive(path)?;
    let frames = binio::take(&mut e, "frames", path)?;
    let frame_labels = binio::take(&mut e, "frame_labels", path)?;
    let traits = binio::take(&mut e, "traits", path)?;
    let latents = binio::take(&mut e, "latents", path)?;
    let fs = frames.shape().to_vec();
    if fs.len() != 5
        || frame_labels.shape() != [fs[0], fs[1], 2]
        || traits.shape() != [fs[0], 5]
        || latents.shape() != [fs[0], 2]
    {
        return Err(format_err(path, "inconsistent personality tensors"));
    }
    let (n, len) = (fs[0], fs[1]);
    let frame_shape = fs[2..].to_vec();
    let px: usize = frame_shape.iter().product();
    let segs = segments(len, k).map_err(|e| format_err(path, e.to_string()))?;
    Ok((0..n)
        .map(|v| {
            let frames = (0..len)
                .map(|f| {
                    let off = (v * len + f) * px;
                    let l = &frame_labels.data()[(v * len + f) * 2..(v * len + f) * 2 + 2];
                    SyntheticSample {
                        image: Tensor::new(frame_shape.clone(), frames.data()[off..off + px].to_vec())
                            .expect("slice has frame shape"),
                        arousal: l[0],
                        valence: l[1],
                        tag: DatasetTag::Personality,
                    }
                })
                .collect();
            SyntheticVideo {
                frames,
                traits: traits.row(v).try_into().expect("five traits"),
                latent: (latents.row(v)[0], latents.row(v)[1]),
                segments: segs.clone(),
            }
        })
        .collect())
}

/// Reads a dataset directory, verifying every split's checksum.
pub fn load_datasets(dir: &Path) -> Result<(Datasets, DatasetManifest)> {
    let mpath = dir.join(MANIFEST);
    let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&mpath)?)?;
    if manifest.format != DATASET_FORMAT || manifest.version != 1 {
        return Err(format_err(&mpath, "not a version-1 dataset manifest"));
    }
    manifest.config.validate()?;
    let split = |name: &str| -> Result<std::path::PathBuf> {
        let rec = manifest
            .splits
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| format_err(&mpath, format!("missing split `{name}`")))?;
        let p = dir.join(&rec.file);
        let actual = sha256_file(&p)?;
        if actual != rec.sha256 {
            return Err(format_err(&p, "checksum mismatch"));
        }
        Ok(p)
    };
    let k = manifest.config.video.k;
    let ds = Datasets {
        config: manifest.config.clone(),
        emotion_train: load_emotion(&split("emotion_train")?)?,
        emotion_eval: load_emotion(&split("emotion_eval")?)?,
        personality_train: load_personality(&split("personality_train")?, k)?,
        personality_eval: load_personality(&split("personality_eval")?, k)?,
    };
    Ok((ds, manifest))
}

/// SHA-256 of the manifest file, used to tie runs to their data.
pub fn manifest_hash(dir: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(dir.join(MANIFEST))?))
}
