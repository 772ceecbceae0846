//! Scene datasets: NeRF-synthetic directories, depth priors and a
//! procedural toy scene with exact depth.

mod priors;
mod synthetic;
mod toy;

use serde::{Deserialize, Serialize};

pub use priors::{load_depth_priors, PriorReport};
pub use synthetic::{load_nerf_synthetic, write_nerf_synthetic, LoadOptions};
pub use toy::{generate_toy_scene, CameraRing, Light, Primitive, ToyScene, ToySceneSpec};

use crate::constraints::Aabb;
use crate::render::{Camera, DepthMap, RgbImage};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// File stem, e.g. `r_0`.
    pub name: String,
    pub image: RgbImage,
    pub camera: Camera,
    /// Monocular depth estimate; only its ordering is ever used.
    pub depth_prior: Option<DepthMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub train: Vec<Frame>,
    pub test: Vec<Frame>,
    pub bounds: Aabb,
    pub background: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl SceneDataset {
    pub fn frames(&self, split: Split) -> &[Frame] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Shared `(width, height)` of every image.
    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.train
            .iter()
            .chain(&self.test)
            .next()
            .map(|f| (f.image.width, f.image.height))
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.train.is_empty() {
            return Err(Error::Invalid("dataset has no training frames".into()));
        }
        let (w, h) = self.image_size().expect("non-empty");
        for f in self.train.iter().chain(&self.test) {
            if (f.image.width, f.image.height) != (w, h) {
                return Err(Error::Invalid(format!(
                    "frame {} is {}x{}, expected {w}x{h}",
                    f.name, f.image.width, f.image.height
                )));
            }
            if (f.camera.width, f.camera.height) != (w, h) {
                return Err(Error::Invalid(format!(
                    "camera of frame {} does not match its image size",
                    f.name
                )));
            }
            f.camera.validate()?;
            if let Some(d) = &f.depth_prior {
                if (d.width, d.height) != (w, h) {
                    return Err(Error::Invalid(format!(
                        "depth prior of frame {} is {}x{}, expected {w}x{h}",
                        f.name, d.width, d.height
                    )));
                }
            }
        }
        Ok(())
    }
}
