//! The function autoencoder.
//!
//! Encoder: ViT-style patchification, positional embeddings interpolated to
//! the input sequence length, a Perceiver cross-attention stage mapping
//! variable-length token sequences onto a fixed set of learned latent
//! queries, then a stack of pre-norm transformer blocks.
//!
//! Decoder: query coordinates are embedded (random Fourier features by
//! default, a trainable feature grid, or the periodic sin/cos embedding when
//! a periodicity constraint is active) and cross-attend to the encoded
//! latents; a small feedforward head projects to the output dimension.
//! Constraint variants wrap the same forward pass: a scalar stream-function
//! head for divergence-free velocity fields, and a four-term reflection sum
//! for symmetric fields.

use autodiff::nn;
use autodiff::tape::{self, Var};
use autodiff::{ParamStore, ParamVars, Tape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{FaeError, Result};
use crate::patch::{interp_pos_embed, patchify};
use crate::sample::FunctionSample;

pub const INIT_STD: f64 = 0.02;

/// Fixed-size latent token set produced by the encoder.
#[derive(Clone, Debug)]
pub struct LatentCode {
    /// (latent_tokens, embed_dim)
    pub tokens: Tensor,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EncoderConfig {
    pub input_rank: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub latent_tokens: usize,
    pub mlp_width: usize,
    /// Token layout the positional-embedding table is stored at, per axis.
    pub pe_grid: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CoordEmbedKind {
    /// Random Fourier features over the normalized domain.
    Fourier { frequencies: usize, scale: f64 },
    /// Trainable feature grid, multi-linearly interpolated at the query.
    Grid { resolution: usize },
}

impl CoordEmbedKind {
    pub fn default_fourier() -> Self {
        CoordEmbedKind::Fourier { frequencies: 128, scale: 2.0 * std::f64::consts::PI }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    None,
    /// 2pi-periodic sin/cos coordinate embedding (both axes).
    Periodic2d,
    /// Periodic embedding plus a scalar stream-function head.
    StreamFunction,
    /// Four-term reflection sum about x=1/2 and y=1/2 on [0,1]^2.
    ReflectSymmetric,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DecoderConfig {
    pub coord_embed: CoordEmbedKind,
    pub cross_depth: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub mlp_width: usize,
    pub output_dim: usize,
    pub constraint: Constraint,
    /// Average the four reflection terms instead of summing them.
    #[serde(default)]
    pub symmetric_mean: bool,
    /// Domain the coordinate embedding normalizes over, per axis.
    pub domain: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FaeConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl FaeConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let d = &self.decoder;
        if e.embed_dim % e.heads != 0 {
            return Err(FaeError::Config(format!(
                "encoder heads {} do not divide embed_dim {}",
                e.heads, e.embed_dim
            )));
        }
        if d.embed_dim % d.heads != 0 {
            return Err(FaeError::Config(format!(
                "decoder heads {} do not divide embed_dim {}",
                d.heads, d.embed_dim
            )));
        }
        if d.embed_dim != e.embed_dim {
            return Err(FaeError::Config(format!(
                "decoder embed_dim {} must match encoder embed_dim {}",
                d.embed_dim, e.embed_dim
            )));
        }
        if e.input_rank != 1 && e.input_rank != 2 {
            return Err(FaeError::Config("input_rank must be 1 or 2".into()));
        }
        if e.pe_grid.len() != e.input_rank {
            return Err(FaeError::Config(format!(
                "pe_grid {:?} must have one entry per input axis ({})",
                e.pe_grid, e.input_rank
            )));
        }
        if d.domain.len() != e.input_rank {
            return Err(FaeError::Config(format!(
                "decoder domain {:?} must have one interval per input axis ({})",
                d.domain, e.input_rank
            )));
        }
        match d.constraint {
            Constraint::None => {}
            Constraint::Periodic2d | Constraint::StreamFunction | Constraint::ReflectSymmetric => {
                if e.input_rank != 2 {
                    return Err(FaeError::Config(format!(
                        "constraint {:?} needs 2D inputs",
                        d.constraint
                    )));
                }
            }
        }
        if d.constraint == Constraint::StreamFunction && d.output_dim != 1 {
            return Err(FaeError::Config(format!(
                "stream_function constraint implies a scalar psi head, got output_dim {}",
                d.output_dim
            )));
        }
        Ok(())
    }

    pub fn latent_tokens(&self) -> usize {
        self.encoder.latent_tokens
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.embed_dim
    }
}

fn param_rng(seed: u64, name: &str) -> rand_chacha::ChaCha12Rng {
    autodiff::rng::seed_stream(seed, name, 0)
}

fn add_linear(store: &mut ParamStore, seed: u64, name: &str, din: usize, dout: usize) {
    let w = format!("{name}.w");
    store.insert(&w, nn::trunc_normal(&[din, dout], INIT_STD, &mut param_rng(seed, &w)));
    store.insert(&format!("{name}.b"), Tensor::zeros(&[dout]));
}

fn add_layer_norm(store: &mut ParamStore, name: &str, d: usize) {
    store.insert(&format!("{name}.gamma"), Tensor::ones(&[d]));
    store.insert(&format!("{name}.beta"), Tensor::zeros(&[d]));
}

fn add_attention(store: &mut ParamStore, seed: u64, name: &str, d: usize) {
    for proj in ["wq", "wk", "wv", "wo"] {
        add_linear(store, seed, &format!("{name}.{proj}"), d, d);
    }
}

/// Initialize every FAE parameter. Weights are truncated normal (std 0.02),
/// biases zero, layer-norm affine (1, 0). Seeding is per parameter name, so
/// the layout of other parameters never shifts an individual draw.
pub fn init_fae_params(cfg: &FaeConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let e = &cfg.encoder;
    let d = &cfg.decoder;
    let dm = e.embed_dim;
    let mut store = ParamStore::new();

    let patch_len = e.patch_size.pow(e.input_rank as u32) * e.channels;
    add_linear(&mut store, seed, "enc.patch", patch_len, dm);
    let l0: usize = e.pe_grid.iter().product();
    store.insert("enc.pos_embed", nn::trunc_normal(&[l0, dm], INIT_STD, &mut param_rng(seed, "enc.pos_embed")));
    store.insert("enc.latents", nn::trunc_normal(&[e.latent_tokens, dm], INIT_STD, &mut param_rng(seed, "enc.latents")));

    add_layer_norm(&mut store, "enc.perceiver.ln_q", dm);
    add_layer_norm(&mut store, "enc.perceiver.ln_kv", dm);
    add_attention(&mut store, seed, "enc.perceiver.attn", dm);
    add_layer_norm(&mut store, "enc.perceiver.ln_mlp", dm);
    add_linear(&mut store, seed, "enc.perceiver.mlp.fc1", dm, e.mlp_width);
    add_linear(&mut store, seed, "enc.perceiver.mlp.fc2", e.mlp_width, dm);
    add_layer_norm(&mut store, "enc.pre_ln", dm);
    for i in 0..e.depth {
        let b = format!("enc.block{i}");
        add_layer_norm(&mut store, &format!("{b}.ln1"), dm);
        add_attention(&mut store, seed, &format!("{b}.attn"), dm);
        add_layer_norm(&mut store, &format!("{b}.ln2"), dm);
        add_linear(&mut store, seed, &format!("{b}.mlp.fc1"), dm, e.mlp_width);
        add_linear(&mut store, seed, &format!("{b}.mlp.fc2"), e.mlp_width, dm);
    }

    let coord_in = match (&d.constraint, &d.coord_embed) {
        (Constraint::Periodic2d | Constraint::StreamFunction, _) => {
            // gamma(x, y) = [cos x, sin x, cos y, sin y]
            4
        }
        (_, CoordEmbedKind::Fourier { frequencies, scale }) => {
            let a = e.input_rank;
            let mut rng = param_rng(seed, "dec.coord.freqs");
            let freqs = nn::randn(&[a, *frequencies], &mut rng).map(|v| v * scale);
            store.insert_buffer("dec.coord.freqs", freqs);
            2 * frequencies
        }
        (_, CoordEmbedKind::Grid { resolution }) => {
            let cells = resolution.pow(e.input_rank as u32);
            store.insert(
                "dec.coord.table",
                nn::trunc_normal(&[cells, dm], INIT_STD, &mut param_rng(seed, "dec.coord.table")),
            );
            0
        }
    };
    if coord_in > 0 {
        add_linear(&mut store, seed, "dec.coord", coord_in, dm);
    }
    for k in 0..d.cross_depth {
        let b = format!("dec.block{k}");
        add_layer_norm(&mut store, &format!("{b}.ln_q"), dm);
        add_layer_norm(&mut store, &format!("{b}.ln_kv"), dm);
        add_attention(&mut store, seed, &format!("{b}.attn"), dm);
        add_layer_norm(&mut store, &format!("{b}.ln_mlp"), dm);
        add_linear(&mut store, seed, &format!("{b}.mlp.fc1"), dm, d.mlp_width);
        add_linear(&mut store, seed, &format!("{b}.mlp.fc2"), d.mlp_width, dm);
    }
    add_linear(&mut store, seed, "dec.head.fc1", dm, d.mlp_width);
    add_linear(&mut store, seed, "dec.head.fc2", d.mlp_width, d.output_dim);
    Ok(store)
}

struct Attn<'a> {
    wq: (&'a Var, &'a Var),
    wk: (&'a Var, &'a Var),
    wv: (&'a Var, &'a Var),
    wo: (&'a Var, &'a Var),
}

fn attn_params<'a>(pv: &'a ParamVars, name: &str) -> Attn<'a> {
    let get = |suffix: &str| pv.get(&format!("{name}.{suffix}"));
    Attn {
        wq: (get("wq.w"), get("wq.b")),
        wk: (get("wk.w"), get("wk.b")),
        wv: (get("wv.w"), get("wv.b")),
        wo: (get("wo.w"), get("wo.b")),
    }
}

fn ln(pv: &ParamVars, name: &str, x: &Var) -> Result<Var> {
    Ok(nn::layer_norm(
        x,
        pv.get(&format!("{name}.gamma")),
        pv.get(&format!("{name}.beta")),
        nn::LAYER_NORM_EPS,
    )?)
}

fn mlp(pv: &ParamVars, name: &str, x: &Var) -> Result<Var> {
    Ok(nn::mlp(
        x,
        pv.get(&format!("{name}.fc1.w")),
        pv.get(&format!("{name}.fc1.b")),
        pv.get(&format!("{name}.fc2.w")),
        pv.get(&format!("{name}.fc2.b")),
    )?)
}

fn mha(pv: &ParamVars, name: &str, q: &Var, kv: &Var, heads: usize) -> Result<Var> {
    let a = attn_params(pv, name);
    Ok(nn::multi_head_attention(q, kv, a.wq, a.wk, a.wv, a.wo, heads)?)
}

/// Encode a batch of samples sharing one grid shape into (B, N, D) latents.
pub fn encode_batch(
    tape: &Tape,
    pv: &ParamVars,
    cfg: &EncoderConfig,
    samples: &[&FunctionSample],
) -> Result<Var> {
    let first = samples.first().ok_or_else(|| FaeError::Invalid("empty encode batch".into()))?;
    for s in samples {
        if s.grid_shape != first.grid_shape || s.channels != first.channels {
            return Err(FaeError::Invalid("encode batch must share one grid shape".into()));
        }
    }
    if first.channels != cfg.channels || first.rank() != cfg.input_rank {
        return Err(FaeError::Config(format!(
            "sample rank {} / channels {} does not match encoder config ({}, {})",
            first.rank(),
            first.channels,
            cfg.input_rank,
            cfg.channels
        )));
    }
    let b = samples.len();
    let patch_len = cfg.patch_size.pow(cfg.input_rank as u32) * cfg.channels;
    let mut stacked = Vec::with_capacity(b * first.num_points() * first.channels);
    let mut l_tokens = 0usize;
    for s in samples {
        let p = patchify(s, cfg.patch_size)?;
        l_tokens = p.shape()[0];
        stacked.extend_from_slice(p.data());
    }
    let patches = tape.leaf(Tensor::new(vec![b, l_tokens, patch_len], stacked).map_err(FaeError::Autodiff)?);

    let tokens = nn::linear(&patches, pv.get("enc.patch.w"), pv.get("enc.patch.b"))?;
    let token_layout: Vec<usize> = first.grid_shape.iter().map(|&g| g / cfg.patch_size).collect();
    let pe = interp_pos_embed(pv.get("enc.pos_embed"), &cfg.pe_grid, &token_layout)?;
    let tokens = tape::try_add(&tokens, &pe)?;

    let dm = cfg.embed_dim;
    let zq = pv.get("enc.latents").broadcast_to(&[b, cfg.latent_tokens, dm])?;
    let q_ln = ln(pv, "enc.perceiver.ln_q", &zq)?;
    let kv_ln = ln(pv, "enc.perceiver.ln_kv", &tokens)?;
    let z1 = tape::try_add(&zq, &mha(pv, "enc.perceiver.attn", &q_ln, &kv_ln, cfg.heads)?)?;
    let z_agg = tape::try_add(&z1, &mlp(pv, "enc.perceiver.mlp", &ln(pv, "enc.perceiver.ln_mlp", &z1)?)?)?;

    let mut z = ln(pv, "enc.pre_ln", &z_agg)?;
    for i in 0..cfg.depth {
        let b_name = format!("enc.block{i}");
        let h = ln(pv, &format!("{b_name}.ln1"), &z)?;
        let z_attn = tape::try_add(&mha(pv, &format!("{b_name}.attn"), &h, &h, cfg.heads)?, &z)?;
        let h2 = ln(pv, &format!("{b_name}.ln2"), &z_attn)?;
        z = tape::try_add(&mlp(pv, &format!("{b_name}.mlp"), &h2)?, &z_attn)?;
    }
    Ok(z)
}

/// Encode one sample to a latent code (outside any training graph).
pub fn encode(store: &ParamStore, cfg: &EncoderConfig, sample: &FunctionSample) -> Result<LatentCode> {
    let tape = Tape::new();
    let pv = store.vars(&tape);
    let z = encode_batch(&tape, &pv, cfg, &[sample])?;
    tape.health().map_err(FaeError::Autodiff)?;
    let v = z.value();
    let tokens = autodiff::tensor::reshape(&v, &[cfg.latent_tokens, cfg.embed_dim]).map_err(FaeError::Autodiff)?;
    Ok(LatentCode { tokens })
}

/// Embed query coordinates (B, Q, a) into decoder features (B, Q, D).
fn coord_features(pv: &ParamVars, cfg: &DecoderConfig, rank: usize, coords: &Var) -> Result<Var> {
    let shape = coords.shape();
    let (b, q, a) = (shape[0], shape[1], shape[2]);
    if a != rank {
        return Err(FaeError::Config(format!("coords rank {a} does not match domain rank {rank}")));
    }
    let periodic = matches!(cfg.constraint, Constraint::Periodic2d | Constraint::StreamFunction);
    if periodic {
        let x = coords.slice_axis(2, 0, 1)?;
        let y = coords.slice_axis(2, 1, 1)?;
        let feats = tape::cos(&x)
            .concat(&tape::sin(&x), 2)?
            .concat(&tape::cos(&y), 2)?
            .concat(&tape::sin(&y), 2)?;
        return Ok(nn::linear(&feats, pv.get("dec.coord.w"), pv.get("dec.coord.b"))?);
    }
    // Normalize to [0,1]^a over the configured domain.
    let tape_ref = coords.tape().clone();
    let lo: Vec<f64> = cfg.domain.iter().map(|d| d.0).collect();
    let inv: Vec<f64> = cfg.domain.iter().map(|d| 1.0 / (d.1 - d.0)).collect();
    let lo_v = tape_ref.leaf(Tensor::new(vec![a], lo).unwrap());
    let inv_v = tape_ref.leaf(Tensor::new(vec![a], inv).unwrap());
    let unit = tape::try_mul(&tape::try_sub(coords, &lo_v)?, &inv_v)?;
    match &cfg.coord_embed {
        CoordEmbedKind::Fourier { .. } => {
            let flat = unit.reshape(&[b * q, a])?;
            let proj = tape::matmul(&flat, pv.get("dec.coord.freqs"))?;
            let feats = tape::cos(&proj).concat(&tape::sin(&proj), 1)?;
            let out = nn::linear(&feats, pv.get("dec.coord.w"), pv.get("dec.coord.b"))?;
            let d_out = pv.get("dec.coord.w").shape()[1];
            Ok(out.reshape(&[b, q, d_out])?)
        }
        CoordEmbedKind::Grid { resolution } => grid_table_features(pv, *resolution, rank, &unit),
    }
}

/// Multi-linear interpolation of a trainable feature table at unit-cube
/// coordinates. Indices clamp to the boundary cell so out-of-domain queries
/// extrapolate linearly; weights stay differentiable w.r.t. the coordinates.
fn grid_table_features(pv: &ParamVars, res: usize, rank: usize, unit: &Var) -> Result<Var> {
    let table = pv.get("dec.coord.table");
    let d = table.shape()[1];
    let shape = unit.shape();
    let (b, q) = (shape[0], shape[1]);
    let n = b * q;
    let flat = unit.reshape(&[n, rank])?;
    let vals = flat.value();
    let cell = |x: f64| -> (usize, f64) {
        let s = x * (res - 1) as f64;
        let j = (s.floor() as isize).clamp(0, res as isize - 2) as usize;
        (j, s - j as f64)
    };
    let tape_ref = unit.tape().clone();
    // weight along an axis as a Var: w = unit*(res-1) - j_const
    let axis_w = |axis: usize, js: &[usize]| -> Result<Var> {
        let col = flat.slice_axis(1, axis, 1)?.scale((res - 1) as f64);
        let j_const = tape_ref.leaf(Tensor::new(vec![n, 1], js.iter().map(|&j| j as f64).collect()).unwrap());
        Ok(tape::try_sub(&col, &j_const)?)
    };
    match rank {
        1 => {
            let js: Vec<usize> = vals.data().iter().map(|&x| cell(x).0).collect();
            let w = axis_w(0, &js)?;
            let one_minus = w.neg().add_scalar(1.0);
            let lo = table.gather_rows(&js)?;
            let hi = table.gather_rows(&js.iter().map(|&j| j + 1).collect::<Vec<_>>())?;
            let out = tape::try_add(&tape::try_mul(&lo, &one_minus)?, &tape::try_mul(&hi, &w)?)?;
            Ok(out.reshape(&[b, q, d])?)
        }
        2 => {
            let ji: Vec<usize> = (0..n).map(|i| cell(vals.data()[i * 2]).0).collect();
            let jj: Vec<usize> = (0..n).map(|i| cell(vals.data()[i * 2 + 1]).0).collect();
            let wi = axis_w(0, &ji)?;
            let wj = axis_w(1, &jj)?;
            let wi1 = wi.neg().add_scalar(1.0);
            let wj1 = wj.neg().add_scalar(1.0);
            let corner = |di: usize, dj: usize| -> Vec<usize> {
                (0..n).map(|i| (ji[i] + di) * res + (jj[i] + dj)).collect()
            };
            let mut out: Option<Var> = None;
            for (di, dj, wx, wy) in [(0, 0, &wi1, &wj1), (0, 1, &wi1, &wj), (1, 0, &wi, &wj1), (1, 1, &wi, &wj)] {
                let rows = table.gather_rows(&corner(di, dj))?;
                let term = tape::try_mul(&rows, &tape::try_mul(wx, wy)?)?;
                out = Some(match out {
                    Some(prev) => tape::try_add(&prev, &term)?,
                    None => term,
                });
            }
            Ok(out.unwrap().reshape(&[b, q, d])?)
        }
        other => Err(FaeError::Config(format!("grid coord embedding supports rank 1 or 2, got {other}"))),
    }
}

fn decode_base(
    pv: &ParamVars,
    cfg: &DecoderConfig,
    rank: usize,
    z: &Var,
    coords: &Var,
) -> Result<Var> {
    let mut x = coord_features(pv, cfg, rank, coords)?;
    for k in 0..cfg.cross_depth {
        let b_name = format!("dec.block{k}");
        let q_ln = ln(pv, &format!("{b_name}.ln_q"), &x)?;
        let kv_ln = ln(pv, &format!("{b_name}.ln_kv"), z)?;
        let x1 = tape::try_add(&x, &mha(pv, &format!("{b_name}.attn"), &q_ln, &kv_ln, cfg.heads)?)?;
        x = tape::try_add(&x1, &mlp(pv, &format!("{b_name}.mlp"), &ln(pv, &format!("{b_name}.ln_mlp"), &x1)?)?)?;
    }
    let h = nn::gelu(&nn::linear(&x, pv.get("dec.head.fc1.w"), pv.get("dec.head.fc1.b"))?);
    Ok(nn::linear(&h, pv.get("dec.head.fc2.w"), pv.get("dec.head.fc2.b"))?)
}

/// Decode latents (B, N, D) at coordinates (B, Q, a) into (B, Q, output_dim).
///
/// Queries never interact: each output row depends only on its own
/// coordinate, which makes batching and permutation invariance exact. For
/// the `StreamFunction` constraint this returns the scalar stream function;
/// velocities come from [`crate::physics::stream_velocity`]. Out-of-domain
/// coordinates are permitted and evaluate the network as an extrapolation.
pub fn decode_tokens(
    _tape: &Tape,
    pv: &ParamVars,
    cfg: &DecoderConfig,
    z: &Var,
    coords: &Var,
) -> Result<Var> {
    let rank = cfg.domain.len();
    match cfg.constraint {
        Constraint::None | Constraint::Periodic2d | Constraint::StreamFunction => {
            decode_base(pv, cfg, rank, z, coords)
        }
        Constraint::ReflectSymmetric => {
            let q = coords.shape()[1];
            let x = coords.slice_axis(2, 0, 1)?;
            let y = coords.slice_axis(2, 1, 1)?;
            let rx = x.neg().add_scalar(1.0);
            let ry = y.neg().add_scalar(1.0);
            let c1 = x.concat(&y, 2)?;
            let c2 = rx.concat(&y, 2)?;
            let c3 = x.concat(&ry, 2)?;
            let c4 = rx.concat(&ry, 2)?;
            let all = c1.concat(&c2, 1)?.concat(&c3, 1)?.concat(&c4, 1)?;
            let out = decode_base(pv, cfg, rank, z, &all)?;
            let mut acc = out.slice_axis(1, 0, q)?;
            for part in 1..4 {
                acc = tape::try_add(&acc, &out.slice_axis(1, part * q, q)?)?;
            }
            if cfg.symmetric_mean {
                acc = acc.scale(0.25);
            }
            Ok(acc)
        }
    }
}

/// Evaluate one latent code at Q coordinates, outside any training graph.
pub fn decode_at(
    store: &ParamStore,
    cfg: &FaeConfig,
    z: &LatentCode,
    coords: &Tensor,
) -> Result<Tensor> {
    if coords.shape().len() != 2 || coords.shape()[1] != cfg.encoder.input_rank {
        return Err(FaeError::Invalid(format!(
            "coords must be (Q, {}), got {:?}",
            cfg.encoder.input_rank,
            coords.shape()
        )));
    }
    let q = coords.shape()[0];
    let tape = Tape::new();
    let pv = store.vars(&tape);
    let z_var = tape.leaf(autodiff::tensor::reshape(&z.tokens, &[1, cfg.latent_tokens(), cfg.latent_dim()]).map_err(FaeError::Autodiff)?);
    let c_var = tape.leaf(autodiff::tensor::reshape(coords, &[1, q, cfg.encoder.input_rank]).map_err(FaeError::Autodiff)?);
    let out = decode_tokens(&tape, &pv, &cfg.decoder, &z_var, &c_var)?;
    tape.health().map_err(FaeError::Autodiff)?;
    Ok(autodiff::tensor::reshape(&out.value(), &[q, cfg.decoder.output_dim]).map_err(FaeError::Autodiff)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    pub fn tiny_config() -> FaeConfig {
        FaeConfig {
            encoder: EncoderConfig {
                input_rank: 1,
                channels: 1,
                patch_size: 8,
                embed_dim: 16,
                depth: 1,
                heads: 2,
                latent_tokens: 3,
                mlp_width: 24,
                pe_grid: vec![8],
            },
            decoder: DecoderConfig {
                coord_embed: CoordEmbedKind::Fourier { frequencies: 8, scale: 2.0 * std::f64::consts::PI },
                cross_depth: 1,
                embed_dim: 16,
                heads: 2,
                mlp_width: 24,
                output_dim: 1,
                constraint: Constraint::None,
                symmetric_mean: false,
                domain: vec![(0.0, 1.0)],
            },
        }
    }

    fn sample_1d(n: usize, seed: u64) -> FunctionSample {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FunctionSample::new(vec![n], vec![(0.0, 1.0)], 1, Tensor::new(vec![n], vals).unwrap()).unwrap()
    }

    #[test]
    fn latent_shape_is_resolution_independent() {
        let cfg = tiny_config();
        let store = init_fae_params(&cfg, 7).unwrap();
        let z128 = encode(&store, &cfg.encoder, &sample_1d(128, 0)).unwrap();
        let z64 = encode(&store, &cfg.encoder, &sample_1d(64, 1)).unwrap();
        assert_eq!(z128.tokens.shape(), &[3, 16]);
        assert_eq!(z64.tokens.shape(), &[3, 16]);
    }

    #[test]
    fn encode_is_deterministic() {
        let cfg = tiny_config();
        let store = init_fae_params(&cfg, 7).unwrap();
        let s = sample_1d(64, 2);
        let a = encode(&store, &cfg.encoder, &s).unwrap();
        let b = encode(&store, &cfg.encoder, &s).unwrap();
        assert_eq!(a.tokens.data(), b.tokens.data());
    }

    #[test]
    fn zero_field_yields_finite_latents() {
        let cfg = tiny_config();
        let mut store = init_fae_params(&cfg, 7).unwrap();
        // zero the final projections as the degenerate case
        for name in ["enc.patch.w", "enc.perceiver.attn.wo.w"] {
            let shape = store.get(name).unwrap().shape().to_vec();
            store.set_value(name, Tensor::zeros(&shape));
        }
        let zero = FunctionSample::new(vec![64], vec![(0.0, 1.0)], 1, Tensor::zeros(&[64])).unwrap();
        let z = encode(&store, &cfg.encoder, &zero).unwrap();
        assert!(z.tokens.all_finite());
    }

    #[test]
    fn decode_batching_invariance() {
        let cfg = tiny_config();
        let store = init_fae_params(&cfg, 3).unwrap();
        let z = encode(&store, &cfg.encoder, &sample_1d(64, 3)).unwrap();
        let coords = Tensor::new(vec![5, 1], vec![0.1, 0.33, 0.5, 0.77, 0.95]).unwrap();
        let batch = decode_at(&store, &cfg, &z, &coords).unwrap();
        for i in 0..5 {
            let single = decode_at(&store, &cfg, &z, &Tensor::new(vec![1, 1], vec![coords.data()[i]]).unwrap()).unwrap();
            assert!((batch.data()[i] - single.data()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_permutation_equivariance() {
        let cfg = tiny_config();
        let store = init_fae_params(&cfg, 4).unwrap();
        let z = encode(&store, &cfg.encoder, &sample_1d(64, 4)).unwrap();
        let xs = [0.2, 0.4, 0.6, 0.8];
        let fwd = decode_at(&store, &cfg, &z, &Tensor::new(vec![4, 1], xs.to_vec()).unwrap()).unwrap();
        let rev = decode_at(&store, &cfg, &z, &Tensor::new(vec![4, 1], xs.iter().rev().cloned().collect()).unwrap()).unwrap();
        for i in 0..4 {
            assert_eq!(fwd.data()[i], rev.data()[3 - i]);
        }
    }

    #[test]
    fn heads_must_divide_embed_dim() {
        let mut cfg = tiny_config();
        cfg.encoder.heads = 3;
        assert!(matches!(cfg.validate(), Err(FaeError::Config(_))));
    }

    #[test]
    fn grid_coord_embedding_decodes() {
        let mut cfg = tiny_config();
        cfg.decoder.coord_embed = CoordEmbedKind::Grid { resolution: 9 };
        let store = init_fae_params(&cfg, 11).unwrap();
        let z = encode(&store, &cfg.encoder, &sample_1d(64, 5)).unwrap();
        let out = decode_at(&store, &cfg, &z, &Tensor::new(vec![3, 1], vec![0.0, 0.5, 1.0]).unwrap()).unwrap();
        assert!(out.all_finite());
        assert_eq!(out.shape(), &[3, 1]);
    }
}
