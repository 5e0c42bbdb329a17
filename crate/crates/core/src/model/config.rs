use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Dense attention blocks in the feature mapping branch.
    pub num_blocks: usize,
    /// Dense conv layers per block.
    pub dense_layers: usize,
    pub base_channels: usize,
    pub growth_channels: usize,
    /// Pyramid levels, one reconstruction branch each.
    pub level_count: usize,
    pub ca_enabled: bool,
    pub sa_enabled: bool,
    pub sc_enabled: bool,
    pub ca_reduction: usize,
    /// Hidden width of the spatial attention unit.
    pub sa_channels: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small enough to train on a CPU in minutes.
    pub fn desk() -> Self {
        Self {
            num_blocks: 2,
            dense_layers: 2,
            base_channels: 16,
            growth_channels: 16,
            level_count: 11,
            ca_enabled: true,
            sa_enabled: true,
            sc_enabled: true,
            ca_reduction: 4,
            sa_channels: 3,
            seed: 0,
        }
    }

    /// Full-size network: 16 blocks of 8 dense layers, 64 channels.
    pub fn full() -> Self {
        Self {
            num_blocks: 16,
            dense_layers: 8,
            base_channels: 64,
            growth_channels: 64,
            ca_reduction: 16,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_blocks", self.num_blocks),
            ("dense_layers", self.dense_layers),
            ("base_channels", self.base_channels),
            ("growth_channels", self.growth_channels),
            ("ca_reduction", self.ca_reduction),
            ("sa_channels", self.sa_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.level_count < 2 {
            return Err(Error::Config("level_count must be at least 2".into()));
        }
        if !self.base_channels.is_multiple_of(self.ca_reduction) {
            return Err(Error::Config(format!(
                "ca_reduction {} does not divide base_channels {}",
                self.ca_reduction, self.base_channels
            )));
        }
        Ok(())
    }

    /// Applies one `key=value` pair. Returns `false` for keys this struct
    /// does not own.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "num_blocks" => self.num_blocks = kv::value(key, v)?,
            "dense_layers" => self.dense_layers = kv::value(key, v)?,
            "base_channels" => self.base_channels = kv::value(key, v)?,
            "growth_channels" => self.growth_channels = kv::value(key, v)?,
            "level_count" => self.level_count = kv::value(key, v)?,
            "ca_enabled" => self.ca_enabled = kv::flag(key, v)?,
            "sa_enabled" => self.sa_enabled = kv::flag(key, v)?,
            "sc_enabled" => self.sc_enabled = kv::flag(key, v)?,
            "ca_reduction" => self.ca_reduction = kv::value(key, v)?,
            "sa_channels" => self.sa_channels = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "num_blocks={}", self.num_blocks);
        let _ = writeln!(s, "dense_layers={}", self.dense_layers);
        let _ = writeln!(s, "base_channels={}", self.base_channels);
        let _ = writeln!(s, "growth_channels={}", self.growth_channels);
        let _ = writeln!(s, "level_count={}", self.level_count);
        let _ = writeln!(s, "ca_enabled={}", self.ca_enabled);
        let _ = writeln!(s, "sa_enabled={}", self.sa_enabled);
        let _ = writeln!(s, "sc_enabled={}", self.sc_enabled);
        let _ = writeln!(s, "ca_reduction={}", self.ca_reduction);
        let _ = writeln!(s, "sa_channels={}", self.sa_channels);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    /// Parses text written by [`to_kv`](Self::to_kv); unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        for (k, v) in kv::parse(text)? {
            if !cfg.set(&k, &v)? {
                return Err(Error::Config(format!("unknown model key {k:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameter counts of the individual units, used by [`param_count`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitCounts {
    pub head: usize,
    /// Dense layers plus compression of one block, attention excluded.
    pub dab_core: usize,
    pub ca: usize,
    /// All inter-block fusion convolutions.
    pub fuse: usize,
    pub restore: usize,
    pub sa: usize,
}

pub fn unit_counts(cfg: &ModelConfig) -> UnitCounts {
    let (c, g, d, b) = (
        cfg.base_channels,
        cfg.growth_channels,
        cfg.dense_layers,
        cfg.num_blocks,
    );
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
    let dense: usize = (0..d).map(|j| conv(c + j * g, g, 3)).sum();
    let cr = c / cfg.ca_reduction;
    let s = cfg.sa_channels;
    UnitCounts {
        head: conv(3, c, 3),
        dab_core: dense + conv(c + d * g, c, 1),
        ca: conv(c, cr, 1) + conv(cr, c, 1),
        fuse: (1..=b).map(|k| conv((k + 1) * c, c, 1)).sum(),
        restore: conv(c, 3, 3),
        sa: conv(3, s, 1) + conv(s, 1, 1),
    }
}

/// Closed-form trainable parameter count.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let u = unit_counts(cfg);
    let ca = if cfg.ca_enabled { u.ca } else { 0 };
    let sa = if cfg.sa_enabled { u.sa } else { 0 };
    u.head + cfg.num_blocks * (u.dab_core + ca) + u.fuse + cfg.level_count * (u.restore + sa)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut c = ModelConfig::full();
        c.sa_enabled = false;
        c.seed = 99;
        assert_eq!(ModelConfig::from_kv(&c.to_kv()).unwrap(), c);
        assert!(ModelConfig::from_kv("bogus=1").is_err());
        assert!(ModelConfig::from_kv("base_channels=6\nca_reduction=4").is_err());
    }

    #[test]
    fn tiny_count_by_hand() {
        let cfg = ModelConfig {
            num_blocks: 1,
            dense_layers: 1,
            base_channels: 1,
            growth_channels: 1,
            level_count: 2,
            ca_enabled: false,
            sa_enabled: false,
            sc_enabled: false,
            ca_reduction: 1,
            sa_channels: 3,
            seed: 0,
        };
        // head 27+1, dense 9+1, compress 2+1, fuse 2+1, two restores 27+3 each
        assert_eq!(param_count(&cfg), 28 + 10 + 3 + 3 + 60);
    }

    #[test]
    fn levels_add_linearly_and_toggles_increase() {
        let base = ModelConfig::desk();
        let mut more = base.clone();
        more.level_count = 2 * base.level_count;
        let u = unit_counts(&base);
        assert_eq!(
            param_count(&more) - param_count(&base),
            base.level_count * (u.restore + u.sa)
        );
        let mut off = base.clone();
        off.ca_enabled = false;
        assert!(param_count(&off) < param_count(&base));
        off = base.clone();
        off.sa_enabled = false;
        assert!(param_count(&off) < param_count(&base));
        off.sc_enabled = false;
        off.sa_enabled = true;
        assert_eq!(param_count(&off), param_count(&base));
    }
}
