//! Whole-model configuration, tap points and parameter accounting.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::heads::{init_arcface, init_frm, ArcFaceParams, FrmConfig, UadHeadConfig};
use crate::hilo::HiLoConfig;
use crate::nn::{Init, ParamStore};
use crate::rng::derive_seed_str;
use crate::scalar::Real;
use crate::swin::{backbone_param_count, init_backbone, SwinConfig};

/// Backbone plus head hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: SwinConfig,
    /// Face embedding width.
    pub embed_dim: usize,
    /// Head layout for the spoof classifier; `channels` is taken from the
    /// tapped map.
    pub hilo: HiLoConfig,
    pub arcface_scale: f64,
    pub arcface_margin: f64,
}

impl ModelConfig {
    pub fn swin_base_paper() -> Self {
        Self {
            backbone: SwinConfig::swin_base_paper(),
            embed_dim: 1024,
            hilo: HiLoConfig::paper(512),
            arcface_scale: 32.0,
            arcface_margin: 0.5,
        }
    }

    pub fn swin_desk() -> Self {
        Self {
            backbone: SwinConfig::swin_desk(),
            embed_dim: 128,
            hilo: HiLoConfig::desk(64),
            arcface_scale: 32.0,
            arcface_margin: 0.5,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "swin-base-paper" => Some(Self::swin_base_paper()),
            "swin-desk" => Some(Self::swin_desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be positive".into()));
        }
        ArcFaceParams {
            classes: 1,
            ..self.arcface(self.embed_dim)
        }
        .validate()?;
        for tap in self.taps() {
            self.uad_head(tap)?.hilo.validate()?;
        }
        Ok(())
    }

    pub fn frm(&self) -> FrmConfig {
        FrmConfig {
            in_dim: self.backbone.stage_dim(3),
            embed_dim: self.embed_dim,
        }
    }

    pub fn arcface(&self, classes: usize) -> ArcFaceParams {
        ArcFaceParams {
            classes,
            embed_dim: self.embed_dim,
            scale: self.arcface_scale,
            margin: self.arcface_margin,
        }
    }

    /// Every Stage-3 block, then the final map.
    pub fn taps(&self) -> Vec<Tap> {
        let mut t: Vec<Tap> = (0..self.backbone.depths[2]).map(Tap::Block).collect();
        t.push(Tap::Final);
        t
    }

    /// `(grid, channels)` of a tap.
    pub fn tap_shape(&self, tap: Tap) -> Result<(usize, usize)> {
        let b = &self.backbone;
        match tap {
            Tap::Block(i) if i < b.depths[2] => Ok((b.stage_grid(2), b.stage_dim(2))),
            Tap::Block(i) => Err(Error::InvalidConfig(format!(
                "tap {i} out of range: stage 3 has {} blocks",
                b.depths[2]
            ))),
            Tap::Final => Ok((b.stage_grid(3), b.stage_dim(3))),
        }
    }

    pub fn uad_head(&self, tap: Tap) -> Result<UadHeadConfig> {
        let (grid, channels) = self.tap_shape(tap)?;
        Ok(UadHeadConfig::for_tap(grid, channels, self.hilo))
    }

    /// Backbone, embedding head and ArcFace weights for `classes` identities.
    pub fn init_frm_model<T: Real>(&self, classes: usize, seed: u64) -> Result<ParamStore<T>> {
        self.validate()?;
        let mut store = init_backbone(&self.backbone, derive_seed_str(seed, "backbone"))?;
        let mut init = Init::new(&mut store, derive_seed_str(seed, "heads"));
        init_frm(&mut init, &self.frm());
        init_arcface(&mut init, &self.arcface(classes));
        Ok(store)
    }
}

/// Where the spoof head reads backbone features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tap {
    /// Output of Stage-3 block `i`.
    Block(usize),
    /// Final normalized feature map.
    Final,
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tap::Block(i) => write!(f, "{i}"),
            Tap::Final => f.write_str("final"),
        }
    }
}

impl FromStr for Tap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "final" {
            return Ok(Tap::Final);
        }
        s.parse()
            .map(Tap::Block)
            .map_err(|_| Error::InvalidConfig(format!("tap must be a block index or `final`, got {s:?}")))
    }
}

impl Serialize for Tap {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Tap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameter count of one named component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRow {
    pub component: String,
    pub params: usize,
}

/// Per-component counts computed from the configuration alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTable {
    pub rows: Vec<ParamRow>,
    pub total: usize,
}

impl ParamTable {
    pub fn get(&self, component: &str) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.component == component)
            .map(|r| r.params)
    }
}

/// Backbone, embedding head, ArcFace weights and one spoof head at `tap`.
pub fn count_params(cfg: &ModelConfig, classes: usize, tap: Tap) -> Result<ParamTable> {
    cfg.validate()?;
    let rows = vec![
        ParamRow {
            component: "backbone".into(),
            params: backbone_param_count(&cfg.backbone),
        },
        ParamRow {
            component: "frm_head".into(),
            params: cfg.frm().param_count(),
        },
        ParamRow {
            component: "arcface".into(),
            params: cfg.arcface(classes).param_count(),
        },
        ParamRow {
            component: "uad_head".into(),
            params: cfg.uad_head(tap)?.param_count(),
        },
    ];
    let total = rows.iter().map(|r| r.params).sum();
    Ok(ParamTable { rows, total })
}
