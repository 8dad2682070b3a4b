//! Uncertainty heatmaps over a square 2-D grid.

use std::fmt::Write;

use crate::datasets::XOR_CENTERS;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::rank_bin_normalise;
use crate::network::{fit, Network};
use crate::uncertainty::score_is;

use super::{load_data, ExperimentConfig, ExperimentData};

/// Row-major grid: index `iy · resolution + ix`, with `y` increasing with
/// `iy` and `x` with `ix`. Both axes span `range` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct GridHeatmap {
    pub range: [f64; 2],
    pub resolution: usize,
    pub values: Vec<f64>,
    pub rank_binned: Vec<f64>,
}

impl GridHeatmap {
    pub fn axis(range: [f64; 2], resolution: usize) -> Vec<f64> {
        let step = (range[1] - range[0]) / (resolution - 1) as f64;
        (0..resolution).map(|i| range[0] + i as f64 * step).collect()
    }

    pub fn grid_points(range: [f64; 2], resolution: usize) -> Result<Matrix> {
        if resolution < 2 {
            return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
        }
        let axis = Self::axis(range, resolution);
        let mut data = Vec::with_capacity(resolution * resolution * 2);
        for &y in &axis {
            for &x in &axis {
                data.push(x);
                data.push(y);
            }
        }
        Matrix::from_vec(resolution * resolution, 2, data)
    }

    /// `P_u` of an Inhibited Softmax network on the grid.
    pub fn from_network(net: &Network, range: [f64; 2], resolution: usize, bins: usize) -> Result<Self> {
        if !net.head().is_inhibited() {
            return Err(Error::InvalidArgument(
                "heatmaps need an Inhibited Softmax network".into(),
            ));
        }
        if net.spec().input_dim() != 2 {
            return Err(Error::InvalidArgument("heatmaps need a 2-input network".into()));
        }
        let points = Self::grid_points(range, resolution)?;
        let values = score_is(&net.predict(&points)?)?.scores;
        let rank_binned = rank_bin_normalise(&values, bins)?;
        Ok(GridHeatmap {
            range,
            resolution,
            values,
            rank_binned,
        })
    }

    pub fn coords(&self, index: usize) -> (f64, f64) {
        let step = (self.range[1] - self.range[0]) / (self.resolution - 1) as f64;
        let (iy, ix) = (index / self.resolution, index % self.resolution);
        (self.range[0] + ix as f64 * step, self.range[0] + iy as f64 * step)
    }

    fn mean_where(&self, keep: impl Fn(f64, f64) -> bool) -> Option<f64> {
        let (sum, n) = self
            .values
            .iter()
            .enumerate()
            .filter(|&(i, _)| {
                let (x, y) = self.coords(i);
                keep(x, y)
            })
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Mean uncertainty over cells with `|x| < half_width`.
    pub fn band_mean(&self, half_width: f64) -> Option<f64> {
        self.mean_where(|x, _| x.abs() < half_width)
    }

    /// Mean uncertainty within `radius` of the XOR cluster centres.
    pub fn center_mean(&self, radius: f64) -> Option<f64> {
        self.mean_where(|x, y| {
            XOR_CENTERS
                .iter()
                .any(|(c, _)| (x - c[0]).hypot(y - c[1]) <= radius)
        })
    }

    /// `x,y,uncertainty,rank_bin`, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,uncertainty,rank_bin\n");
        for (i, (v, r)) in self.values.iter().zip(&self.rank_binned).enumerate() {
            let (x, y) = self.coords(i);
            writeln!(out, "{x},{y},{v},{r}").unwrap();
        }
        out
    }

    /// Binary 8-bit PGM of the rank-binned values, brighter meaning more
    /// uncertain, with the top image row at the largest `y`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let n = self.resolution;
        let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
        for iy in (0..n).rev() {
            for ix in 0..n {
                let v = self.rank_binned[iy * n + ix];
                out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

/// Trains an Inhibited Softmax network on the configured data with the first
/// seed and maps its uncertainty.
pub fn run_xor_heatmap(cfg: &ExperimentConfig) -> Result<GridHeatmap> {
    run_xor_heatmap_with_data(cfg, &load_data(&cfg.data)?)
}

pub fn run_xor_heatmap_with_data(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<GridHeatmap> {
    let trained = fit(&cfg.is_spec(), &data.train, &cfg.train_config(cfg.seeds[0]), super::IS_STREAM)?;
    GridHeatmap::from_network(
        &trained.network,
        cfg.heatmap.range,
        cfg.heatmap.resolution,
        cfg.heatmap.bins,
    )
}
