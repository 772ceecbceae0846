//! NeRF-synthetic directory layout: `transforms_{train,test}.json` with
//! `camera_angle_x` and per-frame `file_path` / `transform_matrix`, images
//! alongside.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Frame, SceneDataset};
use crate::constraints::Aabb;
use crate::render::{Camera, RgbImage};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadOptions {
    pub background: [f64; 3],
    /// Number of training frames kept when `train_views` is unset; they are
    /// spread evenly over the available frames.
    pub n_train: usize,
    pub train_views: Option<Vec<usize>>,
    /// Test frames to load; all when unset.
    pub test_views: Option<Vec<usize>>,
    /// Used when the transforms file carries no `near`/`far`/`bounds`.
    pub near: f64,
    pub far: f64,
    pub bounds: Aabb,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            background: [1.0; 3],
            n_train: 8,
            train_views: None,
            test_views: None,
            near: 2.0,
            far: 6.0,
            bounds: Aabb::cube(4.0),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformsFile {
    camera_angle_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fl_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fl_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    near: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    far: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<Aabb>,
    frames: Vec<FrameEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameEntry {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

fn read_transforms(path: &Path) -> Result<TransformsFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

fn image_path(dir: &Path, file_path: &str) -> PathBuf {
    let p = dir.join(file_path.trim_start_matches("./"));
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

/// Focal length in pixels. An explicit `fl_x` wins but must agree with
/// `camera_angle_x`; `fl_y`, when present, must equal `fl_x`.
fn focal_of(t: &TransformsFile, width: usize, path: &Path) -> Result<f64> {
    let from_angle = Camera::focal_from_fov(width, t.camera_angle_x);
    let f = t.fl_x.unwrap_or(from_angle);
    if (f - from_angle).abs() > 1e-6 * from_angle {
        return Err(Error::dataset(
            path,
            format!("fl_x {f} disagrees with camera_angle_x (focal {from_angle})"),
        ));
    }
    if let Some(fy) = t.fl_y {
        if (fy - f).abs() > 1e-9 * f {
            return Err(Error::dataset(
                path,
                format!("non-square pixels (fl_x {f}, fl_y {fy}) are not supported"),
            ));
        }
    }
    Ok(f)
}

/// Evenly spread indices; all of them when `n ≥ total`.
pub(crate) fn evenly_spaced(total: usize, n: usize) -> Vec<usize> {
    if n >= total {
        return (0..total).collect();
    }
    (0..n).map(|i| i * total / n).collect()
}

struct SplitMeta {
    bounds: Option<Aabb>,
    focal: f64,
    size: (usize, usize),
}

fn load_split(
    dir: &Path,
    split: &str,
    select: impl FnOnce(usize) -> Result<Vec<usize>>,
    options: &LoadOptions,
) -> Result<(Vec<Frame>, SplitMeta)> {
    let json = dir.join(format!("transforms_{split}.json"));
    let t = read_transforms(&json)?;
    let indices = select(t.frames.len())?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= t.frames.len()) {
        return Err(Error::dataset(
            &json,
            format!("view index {bad} out of range ({} frames)", t.frames.len()),
        ));
    }
    let near = t.near.unwrap_or(options.near);
    let far = t.far.unwrap_or(options.far);
    let bg = options.background.map(|c| c as f32);
    let mut frames = Vec::with_capacity(indices.len());
    let mut meta: Option<SplitMeta> = None;
    for i in indices {
        let entry = &t.frames[i];
        let path = image_path(dir, &entry.file_path);
        let image = RgbImage::read_png(&path, bg)?;
        let size = (image.width, image.height);
        let focal = match &meta {
            Some(m) => {
                if m.size != size {
                    return Err(Error::dataset(
                        &path,
                        format!("image is {}x{}, expected {}x{}", size.0, size.1, m.size.0, m.size.1),
                    ));
                }
                m.focal
            }
            None => {
                let focal = focal_of(&t, size.0, &json)?;
                meta = Some(SplitMeta {
                    bounds: t.bounds,
                    focal,
                    size,
                });
                focal
            }
        };
        let camera = Camera::new(entry.transform_matrix, focal, size.0, size.1, near, far)
            .map_err(|e| Error::dataset(&json, format!("frame {i}: {e}")))?;
        let name = Path::new(&entry.file_path)
            .file_stem()
            .map_or_else(|| format!("frame_{i}"), |s| s.to_string_lossy().into_owned());
        frames.push(Frame {
            name,
            image,
            camera,
            depth_prior: None,
        });
    }
    let meta = meta.unwrap_or(SplitMeta {
        bounds: t.bounds,
        focal: 0.0,
        size: (0, 0),
    });
    Ok((frames, meta))
}

/// Loads a NeRF-synthetic style directory. RGBA images are composited over
/// `options.background`.
pub fn load_nerf_synthetic(dir: &Path, options: &LoadOptions) -> Result<SceneDataset> {
    let (train, tm) = load_split(
        dir,
        "train",
        |total| {
            Ok(match &options.train_views {
                Some(v) => v.clone(),
                None => evenly_spaced(total, options.n_train),
            })
        },
        options,
    )?;
    let (test, sm) = load_split(
        dir,
        "test",
        |total| Ok(options.test_views.clone().unwrap_or_else(|| (0..total).collect())),
        options,
    )?;
    if !test.is_empty() && !train.is_empty() {
        if tm.size != sm.size {
            return Err(Error::dataset(dir, "train and test images differ in size"));
        }
        if (tm.focal - sm.focal).abs() > 1e-9 * tm.focal {
            return Err(Error::dataset(
                dir,
                format!("train focal {} and test focal {} differ", tm.focal, sm.focal),
            ));
        }
    }
    let dataset = SceneDataset {
        train,
        test,
        bounds: tm.bounds.unwrap_or(options.bounds),
        background: options.background,
    };
    dataset
        .validate()
        .map_err(|e| Error::dataset(dir, e.to_string()))?;
    Ok(dataset)
}

/// Writes `dataset` in the layout [`load_nerf_synthetic`] reads, plus
/// `depth/<name>.pfm` for every training frame with a depth prior. The
/// transforms files record `fl_x`, `near`, `far` and `bounds` so a reload
/// reproduces the cameras exactly.
pub fn write_nerf_synthetic(dataset: &SceneDataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    for split in ["train", "test"] {
        fs::create_dir_all(dir.join(split)).map_err(|e| Error::io(dir, e))?;
    }
    if dataset.train.iter().any(|f| f.depth_prior.is_some()) {
        fs::create_dir_all(dir.join("depth")).map_err(|e| Error::io(dir, e))?;
    }
    for (split, frames) in [("train", &dataset.train), ("test", &dataset.test)] {
        let mut entries = Vec::with_capacity(frames.len());
        for f in frames {
            f.image.write_png(&dir.join(split).join(format!("{}.png", f.name)))?;
            if let (Some(d), "train") = (&f.depth_prior, split) {
                d.write_pfm(&dir.join("depth").join(format!("{}.pfm", f.name)))?;
            }
            entries.push(FrameEntry {
                file_path: format!("./{split}/{}", f.name),
                transform_matrix: f.camera.transform,
            });
        }
        let cam = &dataset.train[0].camera;
        let doc = TransformsFile {
            camera_angle_x: 2.0 * (0.5 * cam.width as f64 / cam.focal).atan(),
            fl_x: Some(cam.focal),
            fl_y: None,
            near: Some(cam.near),
            far: Some(cam.far),
            bounds: Some(dataset.bounds),
            frames: entries,
        };
        let path = dir.join(format!("transforms_{split}.json"));
        let text = serde_json::to_string_pretty(&doc).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
