//! Training: per-scale LR caches, patch sampling over the level grid, the
//! optimization loop, checkpoints and the CSV log.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::imaging::{augment, crop, load_image, ImagePlanar, PatchPair};
use crate::kv;
use crate::lfr::LevelGrid;
use crate::model::{Asdn, Checkpoint, ModelConfig};
use crate::resample::{degrade_dims, resize_to, upscale_to, ResizeSpec};
use crate::tensor::{adam_step, l1_loss, OptimizerConfig, Tensor4};

pub const LOG_HEADER: &str = "step,level,loss,lr";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patch_size: usize,
    pub initial_lr: f64,
    pub lr_half_period: u64,
    pub total_updates: u64,
    /// Drives patch sampling and augmentation.
    pub seed: u64,
    /// Save a checkpoint every this many updates; 0 saves only at the end.
    pub checkpoint_every: u64,
    pub dataset: PathBuf,
    /// Where per-scale LR images are cached; defaults to `<dataset>/.asdn-cache`.
    pub cache_dir: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            patch_size: 32,
            initial_lr: 1e-4,
            lr_half_period: 200_000,
            total_updates: 2000,
            seed: 0,
            checkpoint_every: 500,
            dataset: PathBuf::from("data/train"),
            cache_dir: None,
            checkpoint: PathBuf::from("asdn.ckpt"),
            log: PathBuf::from("train_log.csv"),
            model: ModelConfig::desk(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 8 {
            return Err(Error::Config("patch_size must be at least 8".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.lr_half_period == 0 {
            return Err(Error::Config("lr_half_period must be at least 1".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config("initial_lr must be positive".into()));
        }
        self.model.validate()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "batch_size" => self.batch_size = kv::value(key, v)?,
            "patch_size" => self.patch_size = kv::value(key, v)?,
            "initial_lr" => self.initial_lr = kv::value(key, v)?,
            "lr_half_period" => self.lr_half_period = kv::value(key, v)?,
            "total_updates" => self.total_updates = kv::value(key, v)?,
            "seed" => {
                self.seed = kv::value(key, v)?;
                self.model.seed = self.seed;
            }
            "checkpoint_every" => self.checkpoint_every = kv::value(key, v)?,
            "dataset" => self.dataset = PathBuf::from(v),
            "cache_dir" => self.cache_dir = Some(PathBuf::from(v)),
            "checkpoint" => self.checkpoint = PathBuf::from(v),
            "log" => self.log = PathBuf::from(v),
            _ => {
                if !self.model.set(key, v)? {
                    return Err(Error::Config(format!("unknown training key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Applies a `key=value` file on top of the current values.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in kv::parse(&text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        lr_at(step, self.initial_lr, self.lr_half_period)
    }

    fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.dataset.join(".asdn-cache"))
    }
}

/// Step decay: halves every `half_period` updates.
pub fn lr_at(step: u64, initial: f64, half_period: u64) -> f64 {
    initial * 0.5f64.powi((step / half_period.max(1)).min(i32::MAX as u64) as i32)
}

/// One training image with a bicubic input for every grid scale.
#[derive(Debug, Clone)]
pub struct TrainImage {
    pub name: String,
    pub hr: ImagePlanar,
    /// Per level: the LR image upscaled back by the level scale, cropped to
    /// the region both it and `hr` cover.
    pub inputs: Vec<ImagePlanar>,
    /// Per level: the cached LR image.
    pub lr: Vec<ImagePlanar>,
}

impl TrainImage {
    /// Largest region usable at every level.
    fn usable_dims(&self) -> (usize, usize) {
        self.inputs.iter().fold((usize::MAX, usize::MAX), |(h, w), i| {
            (h.min(i.height()), w.min(i.width()))
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScaleDataset {
    pub grid: LevelGrid,
    pub images: Vec<TrainImage>,
}

const CACHE_MAGIC: &[u8; 8] = b"ASDNLR01";

fn cache_path(dir: &Path, stem: &str, scale: f64) -> PathBuf {
    dir.join(format!("{stem}_x{scale:.6}.lr"))
}

fn write_cache(path: &Path, img: &ImagePlanar) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + img.data().len() * 4);
    buf.extend_from_slice(CACHE_MAGIC);
    for d in [img.channels(), img.height(), img.width()] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in img.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_cache(path: &Path, dims: (usize, usize, usize)) -> Option<ImagePlanar> {
    let buf = fs::read(path).ok()?;
    if buf.len() < 20 || &buf[..8] != CACHE_MAGIC {
        return None;
    }
    let u = |i: usize| u32::from_le_bytes(buf[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (u(0), u(1), u(2));
    if (c, h, w) != dims || buf.len() != 20 + c * h * w * 4 {
        return None;
    }
    let data = buf[20..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ImagePlanar::new(c, h, w, data).ok()
}

/// PNG files of `dir` in sorted name order.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// LR image for one grid scale; scale 1 is the identity.
fn level_lr(hr: &ImagePlanar, scale: f64) -> Result<(ImagePlanar, usize, usize)> {
    if scale == 1.0 {
        return Ok((hr.clone(), hr.height(), hr.width()));
    }
    let (lr_h, lr_w, ref_h, ref_w) = degrade_dims(hr.height(), hr.width(), scale)?;
    let hr_ref = crop(hr, 0, 0, ref_w, ref_h)?;
    let lr = resize_to(&hr_ref, ResizeSpec::new(1.0 / scale), lr_h, lr_w)?;
    Ok((lr, ref_h, ref_w))
}

/// Loads every usable image of `dir` and prepares its per-level inputs.
/// LR images are read from the cache when present and written otherwise.
pub fn build_dataset(
    dir: impl AsRef<Path>,
    grid: &LevelGrid,
    patch_size: usize,
    cache_dir: Option<&Path>,
) -> Result<ScaleDataset> {
    let dir = dir.as_ref();
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no PNG images in {}", dir.display())));
    }
    let cache = cache_dir.map(Path::to_path_buf);
    if let Some(c) = &cache {
        fs::create_dir_all(c).map_err(|e| Error::io(c, e))?;
    }
    let mut images = Vec::new();
    for path in &files {
        let hr = match load_image(path) {
            Ok(img) => img,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        match prepare_image(&stem, hr, grid, patch_size, cache.as_deref()) {
            Ok(Some(img)) => images.push(img),
            Ok(None) => warn!(
                "skipping {}: smaller than a {patch_size}px patch at some scale",
                path.display()
            ),
            Err(Error::InvalidArgument(msg)) => warn!("skipping {}: {msg}", path.display()),
            Err(e) => return Err(e),
        }
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!(
            "no usable training images in {}",
            dir.display()
        )));
    }
    Ok(ScaleDataset {
        grid: grid.clone(),
        images,
    })
}

fn prepare_image(
    stem: &str,
    hr: ImagePlanar,
    grid: &LevelGrid,
    patch: usize,
    cache: Option<&Path>,
) -> Result<Option<TrainImage>> {
    let mut inputs = Vec::with_capacity(grid.level_count());
    let mut lrs = Vec::with_capacity(grid.level_count());
    for &scale in grid.scales() {
        let (lr_h, lr_w, ref_h, ref_w) = if scale == 1.0 {
            (hr.height(), hr.width(), hr.height(), hr.width())
        } else {
            degrade_dims(hr.height(), hr.width(), scale)?
        };
        if ref_h < patch || ref_w < patch {
            return Ok(None);
        }
        let cached = cache.and_then(|c| read_cache(&cache_path(c, stem, scale), (3, lr_h, lr_w)));
        let lr = match cached {
            Some(lr) => lr,
            None => {
                let (lr, _, _) = level_lr(&hr, scale)?;
                if let Some(c) = cache {
                    write_cache(&cache_path(c, stem, scale), &lr)?;
                }
                lr
            }
        };
        let input = if scale == 1.0 {
            lr.clone()
        } else {
            upscale_to(&lr, scale, ref_h, ref_w)?
        };
        inputs.push(input);
        lrs.push(lr);
    }
    Ok(Some(TrainImage {
        name: stem.to_string(),
        hr,
        inputs,
        lr: lrs,
    }))
}

/// Patches of one minibatch, all drawn at the same level.
#[derive(Debug, Clone)]
pub struct Batch {
    pub level: usize,
    pub pairs: Vec<PatchPair>,
    /// `(image, x, y)` of each patch before augmentation.
    pub positions: Vec<(usize, usize, usize)>,
}

impl Batch {
    pub fn tensors(&self) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
        Ok((
            Tensor4::from_images(self.pairs.iter().map(|p| &p.input))?,
            Tensor4::from_images(self.pairs.iter().map(|p| &p.target))?,
        ))
    }
}

/// The sampler stream of update `step`: independent of every other step, so
/// a resumed run sees the same batches.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Draws a level uniformly, then `batch` patches uniformly over images and
/// positions. Input and target patches share the same HR-grid window.
pub fn sample_batch(
    ds: &ScaleDataset,
    batch: usize,
    patch: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    let level = rng.gen_range(0..ds.grid.level_count());
    let mut pairs = Vec::with_capacity(batch);
    let mut positions = Vec::with_capacity(batch);
    for _ in 0..batch {
        let i = rng.gen_range(0..ds.images.len());
        let img = &ds.images[i];
        let (h, w) = img.usable_dims();
        if h < patch || w < patch {
            return Err(invalid!("patch {patch} larger than image {}", img.name));
        }
        let y = rng.gen_range(0..=h - patch);
        let x = rng.gen_range(0..=w - patch);
        let pair = PatchPair {
            input: crop(&img.inputs[level], x, y, patch, patch)?,
            target: crop(&img.hr, x, y, patch, patch)?,
            scale: ds.grid.scale(level),
        };
        pairs.push(augment(&pair, rng)?);
        positions.push((i, x, y));
    }
    Ok(Batch {
        level,
        pairs,
        positions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub level: usize,
    pub loss: f64,
    pub lr: f64,
}

impl LogRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{}", self.step, self.level, self.loss, self.lr)
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

/// Runs the optimization loop. When `resume` is given, training continues
/// from that checkpoint's step and log rows are appended.
pub fn train(cfg: &TrainConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut ckpt = match resume {
        Some(path) => {
            let c = Checkpoint::load(path)?;
            if c.model.config() != &cfg.model {
                return Err(Error::Config(
                    "resume checkpoint was trained with a different model config".into(),
                ));
            }
            c
        }
        None => Checkpoint::new(Asdn::build(&cfg.model)?, 0, true),
    };
    ckpt.optimizer = true;
    let grid = LevelGrid::new(cfg.model.level_count)?;
    let ds = build_dataset(&cfg.dataset, &grid, cfg.patch_size, Some(&cfg.cache_dir()))?;
    info!(
        "training on {} images, {} levels, {} parameters",
        ds.images.len(),
        grid.level_count(),
        ckpt.model.num_params()
    );

    let append = resume.is_some() && cfg.log.exists();
    let file = if append {
        OpenOptions::new().append(true).open(&cfg.log)
    } else {
        File::create(&cfg.log)
    }
    .map_err(|e| Error::io(&cfg.log, e))?;
    let mut log_out = BufWriter::new(file);
    let io = |e| Error::io(&cfg.log, e);
    if !append {
        writeln!(log_out, "{LOG_HEADER}").map_err(io)?;
    }

    let mut rows = Vec::new();
    for step in ckpt.step..cfg.total_updates {
        let lr = cfg.lr_at(step);
        let batch = sample_batch(&ds, cfg.batch_size, cfg.patch_size, &mut step_rng(cfg.seed, step))?;
        let (x, target) = batch.tensors()?;
        let (y, cache) = ckpt.model.forward_train(&x, batch.level)?;
        let (loss, dy) = l1_loss(&y, &target)?;
        if !loss.is_finite() {
            log_out.flush().map_err(io)?;
            return Err(Error::NonFiniteLoss { step });
        }
        ckpt.model.backward(&cache, &dy)?;
        adam_step(ckpt.model.params_mut(), &OptimizerConfig::with_lr(lr), step + 1)?;
        ckpt.step = step + 1;

        let row = LogRow {
            step,
            level: batch.level,
            loss,
            lr,
        };
        writeln!(log_out, "{}", row.csv()).map_err(io)?;
        rows.push(row);
        if (step + 1) % 100 == 0 {
            info!("step {} loss {loss:.5} lr {lr:.2e}", step + 1);
        }
        if cfg.checkpoint_every > 0 && ckpt.step % cfg.checkpoint_every == 0 {
            ckpt.save(&cfg.checkpoint)?;
            log_out.flush().map_err(io)?;
        }
    }
    log_out.flush().map_err(io)?;
    ckpt.save(&cfg.checkpoint)?;
    Ok(TrainOutcome {
        checkpoint: ckpt,
        log: rows,
    })
}

/// Renders a training config as `key=value` lines.
pub fn config_text(cfg: &TrainConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "batch_size={}", cfg.batch_size);
    let _ = writeln!(s, "patch_size={}", cfg.patch_size);
    let _ = writeln!(s, "initial_lr={}", cfg.initial_lr);
    let _ = writeln!(s, "lr_half_period={}", cfg.lr_half_period);
    let _ = writeln!(s, "total_updates={}", cfg.total_updates);
    let _ = writeln!(s, "checkpoint_every={}", cfg.checkpoint_every);
    let _ = writeln!(s, "dataset={}", cfg.dataset.display());
    if let Some(c) = &cfg.cache_dir {
        let _ = writeln!(s, "cache_dir={}", c.display());
    }
    let _ = writeln!(s, "checkpoint={}", cfg.checkpoint.display());
    let _ = writeln!(s, "log={}", cfg.log.display());
    // the model block carries the seed
    s.push_str(&cfg.model.to_kv());
    s
}
