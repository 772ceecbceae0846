use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use pgnerf::data::{
    generate_toy_scene, load_depth_priors, load_nerf_synthetic, write_nerf_synthetic,
    LoadOptions, SceneDataset, Split, ToySceneSpec,
};
use pgnerf::diffmath::Real;
use pgnerf::render::{render_image, Camera, RenderConfig};
use pgnerf::train::{
    ablation_suite, append_ablation_csv, append_metrics_csv, evaluate, final_report, load_field,
    next_run_id, EvalReport, Precision, Trainer, METRICS_HEADER,
};

use crate::config::RunConfig;
use crate::{CliError, SplitArg};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn resolve(flag: Option<PathBuf>, fallback: Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or(fallback)
        .ok_or_else(|| usage(format!("--{name} is required (or set \"{name}\" in the config)")))
}

fn load_dataset(
    data: &Path,
    options: &LoadOptions,
    priors: Option<&Path>,
) -> Result<SceneDataset, CliError> {
    let mut dataset = load_nerf_synthetic(data, options)?;
    let prior_dir = priors.map_or_else(|| data.join("depth"), Path::to_path_buf);
    if prior_dir.is_dir() {
        let report = load_depth_priors(&prior_dir, &mut dataset)?;
        info!(
            "depth priors: {} loaded, {} missing",
            report.loaded,
            report.missing.len()
        );
    } else {
        info!("no depth priors at {}", prior_dir.display());
    }
    Ok(dataset)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn train(
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
    iterations: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg = match &config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = iterations {
        cfg.train.iterations = n;
    }
    let data = resolve(data, cfg.data.clone(), "data")?;
    let out = resolve(out, cfg.out.clone(), "out")?;
    let dataset = load_dataset(&data, &cfg.dataset, cfg.depth_priors.as_deref())?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), &cfg)?;
    match cfg.train.precision {
        Precision::F32 => train_with::<f32>(&cfg, &dataset, &out, resume.as_deref()),
        Precision::F64 => train_with::<f64>(&cfg, &dataset, &out, resume.as_deref()),
    }
}

fn train_with<F: Real>(
    cfg: &RunConfig,
    dataset: &SceneDataset,
    out: &Path,
    resume: Option<&Path>,
) -> Result<(), CliError> {
    let mut trainer = match resume {
        Some(ckpt) => Trainer::<F>::resume(ckpt, cfg.train.clone(), dataset)?,
        None => Trainer::<F>::new(cfg.field.clone(), cfg.train.clone(), dataset)?,
    };
    let metrics = out.join("metrics.csv");
    if resume.is_none() {
        fs::write(&metrics, format!("{METRICS_HEADER}\n"))
            .with_context(|| format!("writing {}", metrics.display()))?;
    }
    info!(
        "training {} parameters from step {} to {}",
        trainer.field().parameter_count(),
        trainer.step(),
        cfg.train.iterations
    );
    trainer.run_until(
        cfg.train.iterations,
        |row| append_metrics_csv(&metrics, std::slice::from_ref(row)),
        |t| t.save(&out.join(format!("step_{:06}.ckpt", t.step()))),
    )?;
    trainer.save(&out.join("final.ckpt"))?;
    let report = final_report(trainer.field(), dataset, &cfg.train)?;
    write_json(&out.join("report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    Ok(())
}

pub fn gen_toy(spec: Option<PathBuf>, out: &Path) -> Result<(), CliError> {
    let spec: ToySceneSpec = match spec {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .map_err(|e| usage(format!("cannot read spec {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid spec {}: {e}", p.display())))?
        }
        None => ToySceneSpec::default(),
    };
    let scene = generate_toy_scene(&spec)?;
    write_nerf_synthetic(&scene.dataset, out)?;
    info!(
        "wrote {} train and {} test views to {}",
        scene.dataset.train.len(),
        scene.dataset.test.len(),
        out.display()
    );
    Ok(())
}

fn parse_pose(pose: &str, dataset: &SceneDataset) -> Result<Camera, CliError> {
    let template = dataset
        .test
        .first()
        .or(dataset.train.first())
        .map(|f| f.camera.clone())
        .ok_or_else(|| usage("dataset has no cameras"))?;
    if let Ok(index) = pose.trim().parse::<usize>() {
        return dataset
            .test
            .get(index)
            .map(|f| f.camera.clone())
            .ok_or_else(|| {
                usage(format!(
                    "pose index {index} out of range ({} test views)",
                    dataset.test.len()
                ))
            });
    }
    let values: Vec<f64> = pose
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--pose must be an index or 16 numbers: {e}")))?;
    if values.len() != 16 {
        return Err(usage(format!("--pose matrix needs 16 numbers, got {}", values.len())));
    }
    let mut transform = [[0.0; 4]; 4];
    for (k, v) in values.into_iter().enumerate() {
        transform[k / 4][k % 4] = v;
    }
    Camera::new(
        transform,
        template.focal,
        template.width,
        template.height,
        template.near,
        template.far,
    )
    .map_err(|e| usage(e.to_string()))
}

pub fn render(
    ckpt: &Path,
    data: &Path,
    pose: &str,
    out: &Path,
    depth: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let (field, meta) = load_field::<f32>(ckpt)?;
    let dataset = load_nerf_synthetic(data, &LoadOptions::default())?;
    let camera = parse_pose(pose, &dataset)?;
    let config = RenderConfig {
        n_samples: meta.train.n_samples,
        stratified: false,
        seed,
        background: dataset.background,
        chunk_rays: 256,
    };
    let (image, depth_map) = render_image(&camera, &field, &config)?;
    image.write_png(out)?;
    if let Some(p) = depth {
        depth_map.write_pfm(p)?;
    }
    Ok(())
}

pub fn eval(ckpt: &Path, data: &Path, split: SplitArg, out: Option<&Path>) -> Result<(), CliError> {
    let (field, meta) = load_field::<f32>(ckpt)?;
    let dataset = load_nerf_synthetic(data, &LoadOptions::default())?;
    let config = RenderConfig {
        n_samples: meta.train.n_samples,
        stratified: false,
        seed: meta.train.seed,
        background: dataset.background,
        chunk_rays: 256,
    };
    let run = |s: Split| evaluate(&field, &dataset, s, &config, 1, 0);
    let report = match split {
        SplitArg::Train => EvalReport::new(Some(run(Split::Train)?), None),
        SplitArg::Test => EvalReport::new(None, Some(run(Split::Test)?)),
        SplitArg::Both => EvalReport::new(Some(run(Split::Train)?), Some(run(Split::Test)?)),
    };
    let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    println!("{text}");
    if let Some(p) = out {
        fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn ablate(
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = match &config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let data = resolve(data, cfg.data.clone(), "data")?;
    let out = resolve(out, cfg.out.clone(), "out")?;
    let dataset = load_dataset(&data, &cfg.dataset, cfg.depth_priors.as_deref())?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let table = out.join("ablation.csv");
    let run_id = next_run_id(&table)?;
    let rows = ablation_suite(&dataset, &cfg.field, &cfg.train, run_id)?;
    append_ablation_csv(&table, &rows)?;
    println!("{:<26} {:>8} {:>8} {:>8}", "configuration", "train", "test", "gap");
    for r in &rows {
        println!(
            "{:<26} {:>8.2} {:>8.2} {:>8.2}",
            r.configuration, r.train_psnr, r.test_psnr, r.gap
        );
    }
    Ok(())
}
