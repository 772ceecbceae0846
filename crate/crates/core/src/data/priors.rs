use std::path::Path;

use super::SceneDataset;
use crate::render::DepthMap;
use crate::{Error, Result};

/// Outcome of attaching depth priors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PriorReport {
    pub loaded: usize,
    /// Training frames without a prior file; they take no part in ranking.
    pub missing: Vec<String>,
}

/// Attaches `<dir>/<frame name>.pfm` to every training frame. Any positive
/// monotone rescaling of the maps is equivalent, since only the order of
/// depths within a frame is used. A map whose size differs from its image
/// is an error.
pub fn load_depth_priors(dir: &Path, dataset: &mut SceneDataset) -> Result<PriorReport> {
    let mut report = PriorReport::default();
    for frame in &mut dataset.train {
        let path = dir.join(format!("{}.pfm", frame.name));
        if !path.exists() {
            log::warn!("no depth prior for frame {} at {}", frame.name, path.display());
            frame.depth_prior = None;
            report.missing.push(frame.name.clone());
            continue;
        }
        let map = DepthMap::read_pfm(&path)?;
        if (map.width, map.height) != (frame.image.width, frame.image.height) {
            return Err(Error::dataset(
                &path,
                format!(
                    "depth prior is {}x{} but image is {}x{}",
                    map.width, map.height, frame.image.width, frame.image.height
                ),
            ));
        }
        frame.depth_prior = Some(map);
        report.loaded += 1;
    }
    Ok(report)
}
