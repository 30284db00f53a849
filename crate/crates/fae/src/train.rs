//! FAE training loop: AdamW with warmup/decay schedule, per-step random
//! downsampling, query-coordinate subsampling, and crash-safe metrics.
//!
//! Every random draw comes from a generator derived from (seed, step), so a
//! resumed run replays the remaining steps exactly and reproduces the
//! uninterrupted run's checkpoint byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use autodiff::optim::lr_schedule;
use autodiff::rng::seed_stream;
use autodiff::{AdamW, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FaeError, Result};
use crate::loss::{fae_loss, LossItem, LossWeights, PhysicsSpec};
use crate::model::FaeConfig;
use crate::sample::{random_downsample, FunctionSample};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub decay_every: u64,
    pub decay_rate: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        // Linear warmup 0 -> 1e-3 over 2000 steps, then x0.9 every 2000.
        ScheduleConfig { base_lr: 1e-3, warmup_steps: 2000, decay_every: 2000, decay_rate: 0.9 }
    }
}

impl ScheduleConfig {
    pub fn lr_at(&self, step: u64) -> f64 {
        lr_schedule(step, self.base_lr, self.warmup_steps, self.decay_every, self.decay_rate)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FaeTrainConfig {
    pub iters: u64,
    pub batch: usize,
    /// Query coordinates per sample per step, drawn without replacement from
    /// the target grid (capped at the grid size).
    pub queries: usize,
    /// Collocation points per sample for the physics term.
    pub physics_points: usize,
    pub w_data: f64,
    pub w_physics: f64,
    pub downsample_set: Vec<usize>,
    pub schedule: ScheduleConfig,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FaeTrainConfig {
    fn default() -> Self {
        FaeTrainConfig {
            iters: 10_000,
            batch: 16,
            queries: 4096,
            physics_points: 0,
            w_data: 1.0,
            w_physics: 0.0,
            downsample_set: vec![1, 2, 4],
            schedule: ScheduleConfig::default(),
            weight_decay: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub step: u64,
    pub loss: f64,
    pub data_term: f64,
    pub physics_term: f64,
    pub lr: f64,
}

/// Incremental CSV writer, flushed every `flush_every` rows.
pub struct MetricsWriter {
    file: std::fs::File,
    flush_every: u64,
    rows: u64,
}

impl MetricsWriter {
    pub fn create(path: &Path, header: &str, flush_every: u64) -> Result<Self> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "{header}")?;
        Ok(MetricsWriter { file, flush_every, rows: 0 })
    }

    pub fn write_row(&mut self, row: &str) -> Result<()> {
        writeln!(self.file, "{row}")?;
        self.rows += 1;
        if self.rows % self.flush_every == 0 {
            self.file.flush()?;
        }
        Ok(())
    }
}

impl Drop for MetricsWriter {
    fn drop(&mut self) {
        let _ = self.file.flush();
    }
}

fn format_metric(v: f64) -> String {
    // Shortest round-trip representation keeps reruns byte-identical.
    format!("{v:?}")
}

/// Draw `count` distinct grid indices (partial Fisher-Yates).
fn sample_grid_indices(n: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let count = count.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.partial_shuffle(rng, count);
    idx.truncate(count);
    idx
}

fn build_item(
    sample: &FunctionSample,
    cfg: &FaeTrainConfig,
    physics: &PhysicsSpec,
    rng: &mut impl Rng,
) -> Result<LossItem> {
    let (input, _factor) = random_downsample(sample, &cfg.downsample_set, rng)?;
    let n_points = sample.num_points();
    let q = cfg.queries.min(n_points);
    let picked = sample_grid_indices(n_points, q, rng);
    let coords_full = sample.grid_coords();
    let values_full = sample.values_as_points();
    let rank = sample.rank();
    let c = sample.channels;
    let mut coords = Vec::with_capacity(q * rank);
    let mut targets = Vec::with_capacity(q * c);
    for &i in &picked {
        coords.extend_from_slice(&coords_full.data()[i * rank..(i + 1) * rank]);
        targets.extend_from_slice(&values_full.data()[i * c..(i + 1) * c]);
    }
    let physics_coords = match physics {
        PhysicsSpec::None => None,
        _ if cfg.physics_points == 0 || cfg.w_physics == 0.0 => None,
        _ => {
            let qp = cfg.physics_points;
            let mut pc = Vec::with_capacity(qp * rank);
            for _ in 0..qp {
                for ax in 0..rank {
                    let (lo, hi) = sample.domain[ax];
                    pc.push(rng.gen_range(lo..hi));
                }
            }
            Some(Tensor::new(vec![qp, rank], pc).map_err(FaeError::Autodiff)?)
        }
    };
    Ok(LossItem {
        input,
        query_coords: Tensor::new(vec![q, rank], coords).map_err(FaeError::Autodiff)?,
        target_values: Tensor::new(vec![q, c], targets).map_err(FaeError::Autodiff)?,
        physics_coords,
    })
}

/// Train (or resume) the FAE. `store` carries the parameters and, through its
/// step counter, the resume position. Metrics for the executed steps are
/// appended to `metrics` when provided.
pub fn train_fae(
    store: &mut ParamStore,
    fae_cfg: &FaeConfig,
    cfg: &FaeTrainConfig,
    samples: &[FunctionSample],
    physics: PhysicsSpec,
    mut metrics: Option<&mut MetricsWriter>,
) -> Result<Vec<MetricsRow>> {
    if samples.is_empty() {
        return Err(FaeError::Invalid("empty training set".into()));
    }
    let start = store.step();
    let mut rows = Vec::new();
    for step in start..cfg.iters {
        let mut rng = seed_stream(cfg.seed, "fae.step", step);
        let mut items = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let k = rng.gen_range(0..samples.len());
            items.push(build_item(&samples[k], cfg, &physics, &mut rng)?);
        }
        let weights = LossWeights { data: cfg.w_data, physics: cfg.w_physics };

        let tape = Tape::new();
        let pv = store.vars(&tape);
        let terms = fae_loss(&tape, &pv, fae_cfg, &items, weights, physics)?;
        let grads_nodes = tape.grad(&terms.total, None).map_err(FaeError::Autodiff)?;
        tape.health().map_err(FaeError::Autodiff)?;
        let mut grads = BTreeMap::new();
        for name in store.trainable_names() {
            grads.insert(name.clone(), grads_nodes.tensor(pv.get(&name)));
        }

        let lr = cfg.schedule.lr_at(step);
        let hp = AdamW { lr, weight_decay: cfg.weight_decay, ..AdamW::new(lr) };
        store.adamw_step(&grads, hp).map_err(FaeError::Autodiff)?;

        let row = MetricsRow {
            step,
            loss: terms.total.value().item(),
            data_term: terms.data.value().item(),
            physics_term: terms.physics.value().item(),
            lr,
        };
        if let Some(w) = metrics.as_deref_mut() {
            w.write_row(&format!(
                "{},{},{},{},{}",
                row.step,
                format_metric(row.loss),
                format_metric(row.data_term),
                format_metric(row.physics_term),
                format_metric(row.lr)
            ))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub const FAE_METRICS_HEADER: &str = "step,loss,data_term,physics_term,lr";
pub const METRICS_FLUSH_EVERY: u64 = 50;
