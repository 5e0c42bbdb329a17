//! Laplacian frequency representation.
//!
//! A network with `L` output branches predicts HR images for the grid scales
//! `r_l = 1 + l / (L - 1)`. Any scale `r` in `(1, 2]` falls into a phase `i`
//! between grid scales `r_{i-1} < r <= r_i`, and its output is obtained by
//! adding a weighted share of the difference between the two neighbouring
//! levels to level `i`:
//!
//! ```text
//! O_r = O_{r_i} + w * (O_{r_{i-1}} - O_{r_i}),   w = (L - 1) * (r_i - r)
//! ```

use std::collections::BTreeMap;

use crate::error::{invalid, shape_err, Result};
use crate::imaging::ImagePlanar;
use crate::resample::{resize, ResizeSpec};

/// Scales at which the pyramid levels are trained.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid {
    scales: Vec<f64>,
}

impl LevelGrid {
    pub fn new(level_count: usize) -> Result<Self> {
        if level_count < 2 {
            return Err(invalid!("need at least 2 pyramid levels, got {level_count}"));
        }
        let phases = (level_count - 1) as f64;
        Ok(Self {
            scales: (0..level_count).map(|l| l as f64 / phases + 1.0).collect(),
        })
    }

    pub fn level_count(&self) -> usize {
        self.scales.len()
    }

    pub fn phases(&self) -> usize {
        self.scales.len() - 1
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn scale(&self, level: usize) -> f64 {
        self.scales[level]
    }

    /// Index of the grid scale equal to `r`, if any.
    pub fn on_grid(&self, r: f64) -> Option<usize> {
        phase_and_weight(r, self)
            .ok()
            .filter(|pw| pw.weight == 0.0)
            .map(|pw| pw.phase)
    }
}

pub fn level_scales(level_count: usize) -> Result<LevelGrid> {
    LevelGrid::new(level_count)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseWeight {
    /// Phase `i` in `1..L`: the scale lies in `(r_{i-1}, r_i]`.
    pub phase: usize,
    /// Share of level `i - 1`, in `[0, 1)`. Zero exactly on grid scales.
    pub weight: f64,
}

// Products like 10 * (1.1 - 1) land a few ulps off an integer; anything this
// close to a grid point is treated as on it.
const GRID_SNAP: f64 = 1e-10;

pub fn phase_and_weight(r: f64, grid: &LevelGrid) -> Result<PhaseWeight> {
    if !(r > 1.0 && r <= 2.0) {
        return Err(invalid!("scale {r} is outside (1, 2]"));
    }
    let phases = grid.phases() as f64;
    let mut t = phases * (r - 1.0);
    let nearest = t.round();
    if (t - nearest).abs() < GRID_SNAP {
        t = nearest;
    }
    let phase = (t.ceil() as usize).clamp(1, grid.phases());
    let weight = (phase as f64 - t).clamp(0.0, 1.0);
    Ok(PhaseWeight { phase, weight })
}

/// Level images at a common resolution, keyed by level index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PyramidOutputs {
    levels: BTreeMap<usize, ImagePlanar>,
}

impl PyramidOutputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, level: usize, img: ImagePlanar) {
        self.levels.insert(level, img);
    }

    pub fn get(&self, level: usize) -> Option<&ImagePlanar> {
        self.levels.get(&level)
    }

    pub fn take(&mut self, level: usize) -> Option<ImagePlanar> {
        self.levels.remove(&level)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.keys().copied()
    }
}

/// `(1 - w) * O_i + w * O_{i-1}`, exact at `w = 0` and `w = 1`.
pub fn interpolate_levels(outputs: &PyramidOutputs, pw: PhaseWeight) -> Result<ImagePlanar> {
    let upper = outputs
        .get(pw.phase)
        .ok_or_else(|| invalid!("missing pyramid level {}", pw.phase))?;
    if pw.weight == 0.0 {
        return Ok(upper.clone());
    }
    let lower = outputs
        .get(pw.phase - 1)
        .ok_or_else(|| invalid!("missing pyramid level {}", pw.phase - 1))?;
    if !upper.same_shape(lower) {
        return Err(shape_err!(
            "pyramid levels {} and {} differ in size",
            pw.phase - 1,
            pw.phase
        ));
    }
    if pw.weight == 1.0 {
        return Ok(lower.clone());
    }
    let w = pw.weight;
    let mut out = upper.clone();
    for (o, &l) in out.data_mut().iter_mut().zip(lower.data()) {
        *o = ((1.0 - w) * *o as f64 + w * l as f64) as f32;
    }
    Ok(out)
}

/// Anything that can produce pyramid level images for an interpolated input.
pub trait LevelPredictor {
    fn level_count(&self) -> usize;

    /// Evaluates the requested levels on `input` (already upscaled to the
    /// output size). Implementations must return exactly those levels.
    fn predict_levels(&self, input: &ImagePlanar, levels: &[usize]) -> Result<PyramidOutputs>;
}

/// Every level returns its input: the representation reduces to bicubic.
#[derive(Debug, Clone, Copy)]
pub struct IdentityPredictor {
    pub levels: usize,
}

impl LevelPredictor for IdentityPredictor {
    fn level_count(&self) -> usize {
        self.levels
    }

    fn predict_levels(&self, input: &ImagePlanar, levels: &[usize]) -> Result<PyramidOutputs> {
        let mut out = PyramidOutputs::new();
        for &l in levels {
            if l >= self.levels {
                return Err(invalid!("level {l} out of range"));
            }
            out.insert(l, input.clone());
        }
        Ok(out)
    }
}

impl<P: LevelPredictor + ?Sized> LevelPredictor for &P {
    fn level_count(&self) -> usize {
        (**self).level_count()
    }

    fn predict_levels(&self, input: &ImagePlanar, levels: &[usize]) -> Result<PyramidOutputs> {
        (**self).predict_levels(input, levels)
    }
}

/// Super-resolves `lr` by `r` in `(1, 2]`: bicubic upscale, evaluate only the
/// one or two levels around `r`, and interpolate between them.
pub fn represent(r: f64, lr: &ImagePlanar, predictor: &dyn LevelPredictor) -> Result<ImagePlanar> {
    let grid = LevelGrid::new(predictor.level_count())?;
    let pw = phase_and_weight(r, &grid)?;
    let input = resize(lr, ResizeSpec::new(r))?;
    represent_upscaled(pw, &input, predictor)
}

/// As [`represent`] but with the bicubic input already prepared.
pub fn represent_upscaled(
    pw: PhaseWeight,
    input: &ImagePlanar,
    predictor: &dyn LevelPredictor,
) -> Result<ImagePlanar> {
    let levels: Vec<usize> = if pw.weight == 0.0 {
        vec![pw.phase]
    } else {
        vec![pw.phase - 1, pw.phase]
    };
    let mut outputs = predictor.predict_levels(input, &levels)?;
    if pw.weight == 0.0 {
        return outputs
            .take(pw.phase)
            .ok_or_else(|| invalid!("predictor did not return level {}", pw.phase));
    }
    interpolate_levels(&outputs, pw)
}
