use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DepthMap;
use crate::error::{Error, Result};
use crate::numeric::{logit, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthFieldConfig {
    /// Pixel spacing of the coarse parameter grid.
    pub stride: usize,
    /// Disparity bounds (1/m); depth lies in [1/d_max, 1/d_min].
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DepthFieldConfig {
    fn default() -> Self {
        DepthFieldConfig {
            stride: 8,
            d_min: 0.01,
            d_max: 10.0,
        }
    }
}

impl DepthFieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || !(self.d_min > 0.0) || !(self.d_max > self.d_min) {
            return Err(Error::Config(format!("invalid depth field settings {self:?}")));
        }
        Ok(())
    }
}

/// Coarse grid of unconstrained parameters decoded to a dense depth map.
///
/// Grid node `(i, j)` sits at image pixel `(i·stride, j·stride)`; the grid
/// has `ceil((w-1)/stride) + 1` columns so every pixel falls inside a cell.
/// A pixel's parameter is the bilinear blend of its cell corners, mapped to
/// disparity `d_min + (d_max - d_min)·σ(x)`, and depth is `1 / disparity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthField {
    pub width: usize,
    pub height: usize,
    pub grid_width: usize,
    pub grid_height: usize,
    pub config: DepthFieldConfig,
    pub params: Vec<f64>,
}

#[inline]
fn axis_cell(x: usize, stride: usize, nodes: usize) -> (usize, f64) {
    let g = x as f64 / stride as f64;
    let i0 = (g.floor() as usize).min(nodes - 2);
    (i0, g - i0 as f64)
}

fn grid_nodes(len: usize, stride: usize) -> usize {
    (len - 1).div_ceil(stride) + 1
}

impl DepthField {
    pub fn new(width: usize, height: usize, config: DepthFieldConfig) -> Result<Self> {
        config.validate()?;
        if width < 2 || height < 2 {
            return Err(Error::Shape("depth field needs at least 2x2 pixels".into()));
        }
        let grid_width = grid_nodes(width, config.stride).max(2);
        let grid_height = grid_nodes(height, config.stride).max(2);
        Ok(DepthField {
            width,
            height,
            grid_width,
            grid_height,
            config,
            params: vec![0.0; grid_width * grid_height],
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Coarse-parameter taps of pixel (u, v): four (index, weight) pairs.
    #[inline]
    pub fn taps(&self, u: usize, v: usize) -> [(usize, f64); 4] {
        let (i0, ax) = axis_cell(u, self.config.stride, self.grid_width);
        let (j0, ay) = axis_cell(v, self.config.stride, self.grid_height);
        let k = j0 * self.grid_width + i0;
        let gw = self.grid_width;
        [
            (k, (1.0 - ax) * (1.0 - ay)),
            (k + 1, ax * (1.0 - ay)),
            (k + gw, (1.0 - ax) * ay),
            (k + gw + 1, ax * ay),
        ]
    }

    #[inline]
    fn upsampled(&self, u: usize, v: usize) -> f64 {
        self.taps(u, v).iter().map(|&(k, w)| w * self.params[k]).sum()
    }

    #[inline]
    fn disparity(&self, x: f64) -> f64 {
        let c = &self.config;
        c.d_min + (c.d_max - c.d_min) * sigmoid(x)
    }

    /// Dense depth at image resolution.
    pub fn eval_depth(&self) -> DepthMap {
        DepthMap::from_fn(self.width, self.height, |u, v| 1.0 / self.disparity(self.upsampled(u, v)))
    }

    /// Chain rule from a per-pixel depth gradient to the coarse parameters.
    pub fn backprop_depth(&self, grad_depth: &[f64]) -> Vec<f64> {
        assert_eq!(grad_depth.len(), self.width * self.height, "gradient grid size");
        let mut out = vec![0.0; self.params.len()];
        let span = self.config.d_max - self.config.d_min;
        for v in 0..self.height {
            for u in 0..self.width {
                let g = grad_depth[v * self.width + u];
                if g == 0.0 {
                    continue;
                }
                let taps = self.taps(u, v);
                let x: f64 = taps.iter().map(|&(k, w)| w * self.params[k]).sum();
                let s = sigmoid(x);
                let d = self.disparity(x);
                // depth = 1/d, dd/dx = span·σ(1-σ)
                let dz = -span * s * (1.0 - s) / (d * d);
                for (k, w) in taps {
                    out[k] += g * dz * w;
                }
            }
        }
        out
    }

    /// Least-squares fit of the parameters to a target depth map.
    ///
    /// The target is mapped to parameter space pixel by pixel (inverse of the
    /// sigmoid disparity decoding) and the bilinear upsampling is inverted by
    /// solving the normal equations.
    pub fn fit(target: &DepthMap, config: DepthFieldConfig) -> Result<Self> {
        let mut field = DepthField::new(target.width, target.height, config)?;
        let n = field.num_params();
        let span = config.d_max - config.d_min;
        let mut ata = DMatrix::<f64>::zeros(n, n);
        let mut atb = DVector::<f64>::zeros(n);
        for v in 0..target.height {
            for u in 0..target.width {
                let d = 1.0 / target.get(u, v);
                let s = ((d - config.d_min) / span).clamp(1e-9, 1.0 - 1e-9);
                let z = logit(s);
                let taps = field.taps(u, v);
                for &(a, wa) in &taps {
                    atb[a] += wa * z;
                    for &(b, wb) in &taps {
                        ata[(a, b)] += wa * wb;
                    }
                }
            }
        }
        for i in 0..n {
            ata[(i, i)] += 1e-9;
        }
        let chol = ata
            .cholesky()
            .ok_or_else(|| Error::Shape("depth field fit: singular normal equations".into()))?;
        let sol = chol.solve(&atb);
        field.params.copy_from_slice(sol.as_slice());
        Ok(field)
    }
}
