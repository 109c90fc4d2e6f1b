use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters of the hierarchical encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwinConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depths: [usize; 4],
    pub heads: [usize; 4],
    pub window: usize,
    pub mlp_ratio: f64,
    pub use_relative_bias: bool,
}

/// Token-map geometry of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageGeom {
    pub grid: usize,
    pub dim: usize,
    pub heads: usize,
    /// Window side after clamping to the grid.
    pub window: usize,
    /// Cyclic shift for odd blocks (0 when the window covers the grid).
    pub shift: usize,
}

impl SwinConfig {
    /// Base-size backbone: 224 px, C′ = 128, depths 2-2-18-2, M = 7.
    pub fn swin_base_paper() -> Self {
        Self {
            image_size: 224,
            patch_size: 4,
            embed_dim: 128,
            depths: [2, 2, 18, 2],
            heads: [4, 8, 16, 32],
            window: 7,
            mlp_ratio: 4.0,
            use_relative_bias: true,
        }
    }

    /// Desk-scale backbone: 64 px, C′ = 16, depths 2-2-6-2, M = 4.
    pub fn swin_desk() -> Self {
        Self {
            image_size: 64,
            patch_size: 4,
            embed_dim: 16,
            depths: [2, 2, 6, 2],
            heads: [2, 4, 8, 16],
            window: 4,
            mlp_ratio: 4.0,
            use_relative_bias: true,
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
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::NonDivisibleImage {
                size: self.image_size,
                patch: self.patch_size,
            });
        }
        let g0 = self.image_size / self.patch_size;
        if g0 % 8 != 0 {
            return Err(Error::InvalidConfig(format!(
                "token grid {g0} must be divisible by 8 for three merges"
            )));
        }
        if self.window == 0 || self.embed_dim == 0 || self.mlp_ratio <= 0.0 {
            return Err(Error::InvalidConfig(
                "window, embed_dim and mlp_ratio must be positive".into(),
            ));
        }
        for i in 0..4 {
            let dim = self.stage_dim(i);
            if self.heads[i] == 0 || dim % self.heads[i] != 0 {
                return Err(Error::HeadDivisibility {
                    heads: self.heads[i],
                    dim,
                });
            }
            if self.depths[i] == 0 {
                return Err(Error::InvalidConfig(format!("stage {i} has no blocks")));
            }
        }
        Ok(())
    }

    pub fn stage_dim(&self, i: usize) -> usize {
        self.embed_dim << i
    }

    pub fn stage_grid(&self, i: usize) -> usize {
        (self.image_size / self.patch_size) >> i
    }

    pub fn mlp_hidden(&self, dim: usize) -> usize {
        (dim as f64 * self.mlp_ratio) as usize
    }

    pub fn stage(&self, i: usize) -> StageGeom {
        let grid = self.stage_grid(i);
        let (window, shift) = if grid <= self.window {
            (grid, 0)
        } else {
            (self.window, self.window / 2)
        };
        StageGeom {
            grid,
            dim: self.stage_dim(i),
            heads: self.heads[i],
            window,
            shift,
        }
    }

    pub fn stages(&self) -> Vec<StageGeom> {
        (0..4).map(|i| self.stage(i)).collect()
    }

    /// `[h, w, c]` of every Stage-3 block output and of the final map.
    pub fn tap_shapes(&self) -> (Vec<[usize; 3]>, [usize; 3]) {
        let s3 = self.stage(2);
        let s4 = self.stage(3);
        (
            (0..self.depths[2])
                .map(|_| [s3.grid, s3.grid, s3.dim])
                .collect(),
            [s4.grid, s4.grid, s4.dim],
        )
    }
}
