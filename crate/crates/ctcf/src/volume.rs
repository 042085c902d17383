//! Volumetric data containers: voxel grids and per-slice latent stacks.

use crate::error::{Error, Result};

/// A dense D×H×W grid of f64 voxels, row-major, slice-by-slice. Inputs and
/// generated counterfactuals both live here; voxel values are nominally in
/// [0, 1] (decoder outputs may stray slightly outside).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    depth: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(depth: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if depth * height * width != data.len() {
            return Err(Error::shape(format!(
                "volume {}x{}x{} needs {} voxels, got {}",
                depth,
                height,
                width,
                depth * height * width,
                data.len()
            )));
        }
        Ok(Volume { depth, height, width, data })
    }

    pub fn zeros(depth: usize, height: usize, width: usize) -> Self {
        Volume { depth, height, width, data: vec![0.0; depth * height * width] }
    }

    pub fn filled(depth: usize, height: usize, width: usize, value: f64) -> Self {
        Volume { depth, height, width, data: vec![value; depth * height * width] }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    pub fn voxel_count(&self) -> usize {
        self.data.len()
    }

    pub fn slice_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Voxels of slice `d` as a contiguous row-major H×W block.
    pub fn slice(&self, d: usize) -> &[f64] {
        let n = self.slice_len();
        &self.data[d * n..(d + 1) * n]
    }

    pub fn get(&self, d: usize, y: usize, x: usize) -> f64 {
        self.data[(d * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, d: usize, y: usize, x: usize, v: f64) {
        self.data[(d * self.height + y) * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &Volume) -> bool {
        self.dims() == other.dims()
    }

    /// Bit-level equality, distinguishing payloads that compare equal as
    /// floats (e.g. -0.0 vs 0.0).
    pub fn bitwise_eq(&self, other: &Volume) -> bool {
        self.dims() == other.dims()
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Number of nonzero voxels; handy for binary masks.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// D latent vectors of dimension L, one per slice, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStack {
    depth: usize,
    latent_dim: usize,
    data: Vec<f64>,
}

impl LatentStack {
    pub fn new(depth: usize, latent_dim: usize, data: Vec<f64>) -> Result<Self> {
        if depth * latent_dim != data.len() {
            return Err(Error::shape(format!(
                "latent stack {}x{} needs {} values, got {}",
                depth,
                latent_dim,
                depth * latent_dim,
                data.len()
            )));
        }
        Ok(LatentStack { depth, latent_dim, data })
    }

    pub fn zeros(depth: usize, latent_dim: usize) -> Self {
        LatentStack { depth, latent_dim, data: vec![0.0; depth * latent_dim] }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Latent vector of slice `d`.
    pub fn latent(&self, d: usize) -> &[f64] {
        &self.data[d * self.latent_dim..(d + 1) * self.latent_dim]
    }

    pub fn latent_mut(&mut self, d: usize) -> &mut [f64] {
        &mut self.data[d * self.latent_dim..(d + 1) * self.latent_dim]
    }

    pub fn bitwise_eq(&self, other: &LatentStack) -> bool {
        self.depth == other.depth
            && self.latent_dim == other.latent_dim
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
