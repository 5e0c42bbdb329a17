//! Evaluation harness: dataset scoring for bicubic and model paths, deployment
//! strategy comparison and level density sweeps, with CSV and SVG output.

mod metrics;
mod plot;

use std::fmt::Write as _;
use std::path::Path;

pub use metrics::{
    mse, psnr, psnr_prepared, ssim, ssim_prepared, Channel, EvalProtocol, Shave,
};
pub use plot::{density_svg, Series};

use crate::error::{invalid, Error, Result};
use crate::imaging::{crop, load_image, ImagePlanar};
use crate::lfr::{represent, LevelPredictor};
use crate::pipeline::list_images;
use crate::resample::{degrade_pair, resize, ResizeSpec};
use crate::scheduler::{execute, plan, DeploymentPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub scale: f64,
    pub method: String,
    pub psnr: f64,
    pub ssim: f64,
    pub per_image: Vec<ImageScore>,
}

impl EvalRow {
    fn from_scores(dataset: String, scale: f64, method: &str, per_image: Vec<ImageScore>) -> Self {
        let n = per_image.len().max(1) as f64;
        Self {
            psnr: per_image.iter().map(|s| s.psnr).sum::<f64>() / n,
            ssim: per_image.iter().map(|s| s.ssim).sum::<f64>() / n,
            dataset,
            scale,
            method: method.to_string(),
            per_image,
        }
    }
}

/// HR images of a benchmark directory in sorted order, with their names.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(String, ImagePlanar)>> {
    let dir = dir.as_ref();
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no PNG images in {}", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, load_image(p)?))
        })
        .collect()
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Scores `upscale(lr)` against the HR reference for every image. The
/// upscaled image is cropped to the reference size.
pub fn eval_images(
    dataset: &str,
    images: &[(String, ImagePlanar)],
    scale: f64,
    protocol: &EvalProtocol,
    method: &str,
    upscale: impl Fn(&ImagePlanar) -> Result<ImagePlanar>,
) -> Result<EvalRow> {
    let mut scores = Vec::with_capacity(images.len());
    for (name, hr) in images {
        let (lr, hr_ref) = degrade_pair(hr, scale)?;
        let sr = upscale(&lr)?;
        let (rh, rw) = hr_ref.dims();
        if sr.height() < rh || sr.width() < rw {
            return Err(crate::error::shape_err!(
                "{name}: output {}x{} smaller than reference {rw}x{rh}",
                sr.width(),
                sr.height()
            ));
        }
        let sr = crop(&sr, 0, 0, rw, rh)?;
        let (a, b) = (protocol.prepare(&sr, scale)?, protocol.prepare(&hr_ref, scale)?);
        scores.push(ImageScore {
            name: name.clone(),
            psnr: psnr_prepared(&a, &b)?,
            ssim: ssim_prepared(&a, &b)?,
        });
    }
    Ok(EvalRow::from_scores(dataset.to_string(), scale, method, scores))
}

pub fn bicubic_upscale(lr: &ImagePlanar, scale: f64) -> Result<ImagePlanar> {
    resize(lr, ResizeSpec::new(scale))
}

/// Model upscale: one representation pass up to 2, recursive deployment above.
pub fn model_upscale(
    lr: &ImagePlanar,
    scale: f64,
    predictor: &dyn LevelPredictor,
) -> Result<ImagePlanar> {
    if !(scale > 1.0) {
        return Err(invalid!("model upscaling needs a scale above 1, got {scale}"));
    }
    if scale <= 2.0 {
        represent(scale, lr, predictor)
    } else {
        execute(&plan(scale)?, lr, predictor)
    }
}

pub fn eval_bicubic(dir: impl AsRef<Path>, scale: f64, protocol: &EvalProtocol) -> Result<EvalRow> {
    let dir = dir.as_ref();
    let images = load_dataset(dir)?;
    eval_images(&dataset_name(dir), &images, scale, protocol, "bicubic", |lr| {
        bicubic_upscale(lr, scale)
    })
}

pub fn eval_model(
    dir: impl AsRef<Path>,
    scale: f64,
    predictor: &dyn LevelPredictor,
    protocol: &EvalProtocol,
) -> Result<EvalRow> {
    let dir = dir.as_ref();
    let images = load_dataset(dir)?;
    let method = if scale > 2.0 { "recursive-model" } else { "model" };
    eval_images(&dataset_name(dir), &images, scale, protocol, method, |lr| {
        model_upscale(lr, scale, predictor)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub plan: DeploymentPlan,
    pub row: EvalRow,
}

/// Scores each plan on the images; rows come back best PSNR first. Every plan
/// must multiply to `target`.
pub fn bench_strategies(
    dataset: &str,
    images: &[(String, ImagePlanar)],
    target: f64,
    predictor: &dyn LevelPredictor,
    plans: &[DeploymentPlan],
    protocol: &EvalProtocol,
) -> Result<Vec<StrategyRow>> {
    let mut rows = Vec::with_capacity(plans.len());
    for p in plans {
        if ((p.product() - target) / target).abs() > 1e-9 {
            return Err(invalid!("plan [{p}] does not multiply to {target}"));
        }
        let row = eval_images(dataset, images, target, protocol, &format!("[{p}]"), |lr| {
            execute(p, lr, predictor)
        })?;
        rows.push(StrategyRow {
            plan: p.clone(),
            row,
        });
    }
    rows.sort_by(|a, b| b.row.psnr.total_cmp(&a.row.psnr));
    Ok(rows)
}

pub fn strategies_csv(rows: &[StrategyRow]) -> String {
    let mut s = String::from("strategy,steps,psnr,ssim\n");
    for r in rows {
        let steps: Vec<String> = r.plan.steps.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.6}",
            steps.join(" "),
            r.plan.len(),
            r.row.psnr,
            r.row.ssim
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPoint {
    pub levels: usize,
    pub scale: f64,
    pub psnr: f64,
}

/// PSNR over a scale sweep for each `(level_count, model)` pair.
pub fn density_study(
    dataset: &str,
    images: &[(String, ImagePlanar)],
    models: &[(usize, &dyn LevelPredictor)],
    scales: &[f64],
    protocol: &EvalProtocol,
) -> Result<Vec<DensityPoint>> {
    let mut out = Vec::with_capacity(models.len() * scales.len());
    for &(levels, model) in models {
        if model.level_count() != levels {
            return Err(invalid!(
                "model for L={levels} has {} levels",
                model.level_count()
            ));
        }
        for &scale in scales {
            let row = eval_images(dataset, images, scale, protocol, "model", |lr| {
                model_upscale(lr, scale, model)
            })?;
            out.push(DensityPoint {
                levels,
                scale,
                psnr: row.psnr,
            });
        }
    }
    Ok(out)
}

pub fn density_csv(points: &[DensityPoint]) -> String {
    let mut s = String::from("L,scale,psnr\n");
    for p in points {
        let _ = writeln!(s, "{},{:.4},{:.4}", p.levels, p.scale, p.psnr);
    }
    s
}

/// One line per distinct level count.
pub fn density_series(points: &[DensityPoint]) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for p in points {
        let label = format!("L={}", p.levels);
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((p.scale, p.psnr)),
            None => series.push(Series {
                label,
                points: vec![(p.scale, p.psnr)],
            }),
        }
    }
    series
}

pub fn eval_rows_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("dataset,scale,method,psnr,ssim\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.6}",
            r.dataset, r.scale, r.method, r.psnr, r.ssim
        );
    }
    s
}
