use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{SceneDataset, Split};
use crate::diffmath::Real;
use crate::field::RadianceField;
use crate::render::{render_image, RenderConfig, RgbImage};
use crate::{Error, Result};

/// Reported for a perfect reconstruction.
pub const PSNR_CAP: f64 = 99.0;

/// `10·log₁₀(1/mse)` for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP)
}

pub fn image_mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] as f64 - q[c] as f64).powi(2)))
        .sum();
    Ok(sum / (3 * a.pixels.len()) as f64)
}

/// One row of the metrics log. Auxiliary columns hold `λᵢ·Lᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub alpha: f64,
    pub lr: f64,
    pub loss_rgb: f64,
    pub loss_depth: f64,
    pub loss_cv: f64,
    pub loss_sparse: f64,
    pub loss_reg: f64,
    pub total: f64,
    pub psnr_train: f64,
    pub psnr_test: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "step,alpha,lr,loss_rgb,loss_depth,loss_cv,loss_sparse,loss_reg,total,psnr_train,psnr_test";

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(METRICS_HEADER.split(','))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub views: Vec<f64>,
    pub mean: f64,
}

/// Train/test PSNR in the layout of the usual sparse-view tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train: Option<SplitReport>,
    pub test: Option<SplitReport>,
    /// `train − test` when both are present.
    pub gap: Option<f64>,
}

impl EvalReport {
    pub fn new(train: Option<SplitReport>, test: Option<SplitReport>) -> Self {
        let gap = match (&train, &test) {
            (Some(a), Some(b)) => Some(a.mean - b.mean),
            _ => None,
        };
        Self { train, test, gap }
    }
}

/// Renders every view of `split` and scores it against its image.
/// `downscale > 1` renders at reduced resolution against box-filtered
/// ground truth; `max_views > 0` limits the number of views.
pub fn evaluate<F: Real>(
    field: &RadianceField<F>,
    dataset: &SceneDataset,
    split: Split,
    render: &RenderConfig,
    downscale: usize,
    max_views: usize,
) -> Result<SplitReport> {
    let frames = dataset.frames(split);
    if frames.is_empty() {
        return Err(Error::Invalid(format!("split {split:?} has no frames")));
    }
    let take = if max_views == 0 {
        frames.len()
    } else {
        max_views.min(frames.len())
    };
    let mut views = Vec::with_capacity(take);
    for frame in &frames[..take] {
        let (camera, truth) = if downscale > 1 {
            (frame.camera.downscaled(downscale), frame.image.downsample(downscale))
        } else {
            (frame.camera.clone(), frame.image.clone())
        };
        let (img, _) = render_image(&camera, field, render)?;
        views.push(psnr_from_mse(image_mse(&img, &truth)?));
    }
    let mean = views.iter().sum::<f64>() / views.len() as f64;
    Ok(SplitReport { views, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        assert_eq!(psnr_from_mse(0.0), 99.0);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(1.0)).abs() < 1e-12);
    }

    #[test]
    fn gap_is_difference() {
        let r = EvalReport::new(
            Some(SplitReport {
                views: vec![21.7],
                mean: 21.7,
            }),
            Some(SplitReport {
                views: vec![15.0],
                mean: 15.0,
            }),
        );
        assert!((r.gap.unwrap() - 6.7).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![
            MetricsRow {
                step: 0,
                alpha: 0.008,
                lr: 5e-4,
                loss_rgb: 0.1,
                loss_depth: 0.0,
                loss_cv: 0.0,
                loss_sparse: 0.0,
                loss_reg: 0.0,
                total: 0.1,
                psnr_train: 10.0,
                psnr_test: None,
            },
            MetricsRow {
                step: 100,
                alpha: 0.008,
                lr: 4e-4,
                loss_rgb: 0.05,
                loss_depth: 0.01,
                loss_cv: 0.02,
                loss_sparse: 0.003,
                loss_reg: 1e-5,
                total: 0.0502,
                psnr_train: 13.0103,
                psnr_test: Some(11.5),
            },
        ];
        write_metrics_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert!(text.lines().nth(1).unwrap().ends_with(','));
        assert_eq!(read_metrics_csv(&p).unwrap(), rows);
    }
}
