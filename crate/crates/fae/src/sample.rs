//! Discretized functions: a coordinate grid, a domain descriptor, and values.
//!
//! Grids are uniform and inclusive of both endpoints: axis `i` with `G`
//! points places point `k` at `lo + (hi - lo) * k / (G - 1)`.

use autodiff::Tensor;
use rand::Rng;

use crate::error::{FaeError, Result};

#[derive(Clone, Debug)]
pub struct FunctionSample {
    pub grid_shape: Vec<usize>,
    pub domain: Vec<(f64, f64)>,
    pub channels: usize,
    /// Row-major over `grid_shape x channels`.
    pub values: Tensor,
}

impl FunctionSample {
    pub fn new(grid_shape: Vec<usize>, domain: Vec<(f64, f64)>, channels: usize, values: Tensor) -> Result<Self> {
        let expect: usize = grid_shape.iter().product::<usize>() * channels;
        if values.numel() != expect {
            return Err(FaeError::Invalid(format!(
                "values length {} does not match grid {:?} x {} channels",
                values.numel(),
                grid_shape,
                channels
            )));
        }
        if grid_shape.len() != domain.len() {
            return Err(FaeError::Invalid(format!(
                "grid rank {} does not match domain rank {}",
                grid_shape.len(),
                domain.len()
            )));
        }
        for &(lo, hi) in &domain {
            if !(hi > lo) {
                return Err(FaeError::Invalid(format!("empty domain interval ({lo}, {hi})")));
            }
        }
        for &g in &grid_shape {
            if g < 2 {
                return Err(FaeError::Invalid("each grid axis needs at least 2 points".into()));
            }
        }
        Ok(Self { grid_shape, domain, channels, values })
    }

    pub fn rank(&self) -> usize {
        self.grid_shape.len()
    }

    pub fn num_points(&self) -> usize {
        self.grid_shape.iter().product()
    }

    /// Coordinate of one axis position.
    pub fn axis_coord(&self, axis: usize, k: usize) -> f64 {
        let (lo, hi) = self.domain[axis];
        let g = self.grid_shape[axis];
        lo + (hi - lo) * k as f64 / (g - 1) as f64
    }

    /// Full coordinate list, flattened row-major: (num_points, rank).
    pub fn grid_coords(&self) -> Tensor {
        let rank = self.rank();
        let n = self.num_points();
        let mut data = Vec::with_capacity(n * rank);
        let mut idx = vec![0usize; rank];
        for _ in 0..n {
            for ax in 0..rank {
                data.push(self.axis_coord(ax, idx[ax]));
            }
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < self.grid_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor::new(vec![n, rank], data).expect("grid_coords")
    }

    /// Values rearranged as (num_points, channels).
    pub fn values_as_points(&self) -> Tensor {
        autodiff::tensor::reshape(&self.values, &[self.num_points(), self.channels]).expect("values_as_points")
    }
}

/// Strided subsampling: keep every `factor`-th point per axis, anchored at
/// index 0. The domain descriptor is kept unchanged; a downsampled view is a
/// coarser look at the same function.
pub fn downsample(f: &FunctionSample, factor: usize) -> Result<FunctionSample> {
    if factor == 0 {
        return Err(FaeError::Invalid("downsample factor 0".into()));
    }
    if factor == 1 {
        return Ok(f.clone());
    }
    for &g in &f.grid_shape {
        if g % factor != 0 {
            return Err(FaeError::Invalid(format!(
                "factor {factor} does not divide grid axis {g}"
            )));
        }
    }
    let new_shape: Vec<usize> = f.grid_shape.iter().map(|&g| g / factor).collect();
    let rank = f.rank();
    let c = f.channels;
    let n_new: usize = new_shape.iter().product();
    let mut out = Vec::with_capacity(n_new * c);
    // Row-major walk over the new grid, gathering from the old one.
    let mut old_strides = vec![c; rank];
    for ax in (0..rank.saturating_sub(1)).rev() {
        old_strides[ax] = old_strides[ax + 1] * f.grid_shape[ax + 1];
    }
    let mut idx = vec![0usize; rank];
    for _ in 0..n_new {
        let mut off = 0usize;
        for ax in 0..rank {
            off += idx[ax] * factor * old_strides[ax];
        }
        out.extend_from_slice(&f.values.data()[off..off + c]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < new_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    FunctionSample::new(new_shape, f.domain.clone(), c, Tensor::new(vec![n_new * c], out).unwrap())
}

/// Draw a factor from `set` (uniformly), skipping factors that do not divide
/// every grid axis; errors only when no factor in the set divides the grid.
pub fn random_downsample(f: &FunctionSample, set: &[usize], rng: &mut impl Rng) -> Result<(FunctionSample, usize)> {
    let valid: Vec<usize> = set
        .iter()
        .copied()
        .filter(|&fac| fac >= 1 && f.grid_shape.iter().all(|&g| g % fac == 0))
        .collect();
    if valid.is_empty() {
        return Err(FaeError::Invalid(format!(
            "no factor in {set:?} divides grid {:?}",
            f.grid_shape
        )));
    }
    let factor = valid[rng.gen_range(0..valid.len())];
    Ok((downsample(f, factor)?, factor))
}
