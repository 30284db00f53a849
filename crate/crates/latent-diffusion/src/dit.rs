//! Diffusion transformer over latent tokens with AdaLN-Zero time
//! conditioning.
//!
//! Each block modulates a non-affine layer norm with (gamma, beta) computed
//! from the time embedding and gates its residual branch with alpha:
//!
//! ```text
//! h' = LN(h) * gamma1 + beta1
//! h  = h + alpha1 * MSA(h')
//! h''= LN(h) * gamma2 + beta2
//! h  = h + alpha2 * MLP(h'')
//! ```
//!
//! The modulation head is zero-initialized with bias (gamma=1, beta=0,
//! alpha=0), so a fresh block is exactly the identity map while the gate's
//! gradient stays nonzero (the attention branch sees LN(h), not zero).
//! The output head is zero-initialized, so a fresh model predicts the zero
//! velocity field.

use autodiff::nn;
use autodiff::tape::{self, Var};
use autodiff::{ParamStore, ParamVars, Tape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{LdError, Result};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiTConfig {
    pub depth: usize,
    /// Must equal the latent token dimension.
    pub embed_dim: usize,
    pub heads: usize,
    pub mlp_width: usize,
    /// Sinusoidal feature count for the time embedding.
    pub time_embed_dim: usize,
    /// Latent tokens per sample (carried for shape checks and sampling).
    pub latent_tokens: usize,
}

impl DiTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim % self.heads != 0 {
            return Err(LdError::Config(format!(
                "heads {} do not divide embed_dim {}",
                self.heads, self.embed_dim
            )));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(LdError::Config("time_embed_dim must be even and >= 2".into()));
        }
        if self.depth == 0 {
            return Err(LdError::Config("depth must be >= 1".into()));
        }
        Ok(())
    }
}

fn param_rng(seed: u64, name: &str) -> rand_chacha::ChaCha12Rng {
    autodiff::rng::seed_stream(seed, name, 0)
}

fn add_linear(store: &mut ParamStore, seed: u64, name: &str, din: usize, dout: usize) {
    store.insert(&format!("{name}.w"), nn::trunc_normal(&[din, dout], INIT_STD, &mut param_rng(seed, &format!("{name}.w"))));
    store.insert(&format!("{name}.b"), Tensor::zeros(&[dout]));
}

/// Initialize all DiT parameters (see module docs for the zero-init scheme).
pub fn init_dit_params(cfg: &DiTConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let d = cfg.embed_dim;
    let mut store = ParamStore::new();
    add_linear(&mut store, seed, "dit.in_proj", d, d);
    add_linear(&mut store, seed, "dit.time.fc1", cfg.time_embed_dim, d);
    add_linear(&mut store, seed, "dit.time.fc2", d, d);
    for i in 0..cfg.depth {
        let b = format!("dit.block{i}");
        store.insert(&format!("{b}.mod.w"), Tensor::zeros(&[d, 6 * d]));
        let mut mod_bias = vec![0.0; 6 * d];
        for k in 0..d {
            mod_bias[k] = 1.0; // gamma1
            mod_bias[3 * d + k] = 1.0; // gamma2
        }
        store.insert(&format!("{b}.mod.b"), Tensor::new(vec![6 * d], mod_bias).unwrap());
        for proj in ["wq", "wk", "wv", "wo"] {
            add_linear(&mut store, seed, &format!("{b}.attn.{proj}"), d, d);
        }
        add_linear(&mut store, seed, &format!("{b}.mlp.fc1"), d, cfg.mlp_width);
        add_linear(&mut store, seed, &format!("{b}.mlp.fc2"), cfg.mlp_width, d);
    }
    // Zero-initialized output head: the fresh model is the zero velocity field.
    store.insert("dit.head.w", Tensor::zeros(&[d, d]));
    store.insert("dit.head.b", Tensor::zeros(&[d]));
    Ok(store)
}

/// Sinusoidal features of tau in [0, 1], shape (B, time_embed_dim).
pub fn time_features(taus: &[f64], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = Vec::with_capacity(taus.len() * dim);
    for &tau in taus {
        let pos = tau * 1000.0;
        for k in 0..half {
            let omega = (-(k as f64) * (10_000f64).ln() / half as f64).exp();
            data.push((pos * omega).sin());
        }
        for k in 0..half {
            let omega = (-(k as f64) * (10_000f64).ln() / half as f64).exp();
            data.push((pos * omega).cos());
        }
    }
    Tensor::new(vec![taus.len(), dim], data).expect("time_features")
}

fn time_embed(pv: &ParamVars, feats: &Var) -> Result<Var> {
    let h = nn::gelu(&nn::linear(feats, pv.get("dit.time.fc1.w"), pv.get("dit.time.fc1.b"))?);
    Ok(nn::linear(&h, pv.get("dit.time.fc2.w"), pv.get("dit.time.fc2.b"))?)
}

/// One AdaLN-Zero block. `h` is (B, N, D); `t_emb` is (B, D).
pub fn adaln_zero_block(
    pv: &ParamVars,
    cfg: &DiTConfig,
    index: usize,
    h: &Var,
    t_emb: &Var,
) -> Result<Var> {
    let d = cfg.embed_dim;
    let b = h.shape()[0];
    let name = format!("dit.block{index}");
    let modulation = nn::linear(t_emb, pv.get(&format!("{name}.mod.w")), pv.get(&format!("{name}.mod.b")))?;
    let part = |k: usize| -> Result<Var> {
        Ok(modulation.slice_axis(1, k * d, d)?.reshape(&[b, 1, d])?)
    };
    let (g1, b1, a1, g2, b2, a2) = (part(0)?, part(1)?, part(2)?, part(3)?, part(4)?, part(5)?);

    let h_ln = nn::layer_norm_no_affine(h, nn::LAYER_NORM_EPS)?;
    let h_mod = tape::try_add(&tape::try_mul(&h_ln, &g1)?, &b1)?;
    let attn = nn::multi_head_attention(
        &h_mod,
        &h_mod,
        (pv.get(&format!("{name}.attn.wq.w")), pv.get(&format!("{name}.attn.wq.b"))),
        (pv.get(&format!("{name}.attn.wk.w")), pv.get(&format!("{name}.attn.wk.b"))),
        (pv.get(&format!("{name}.attn.wv.w")), pv.get(&format!("{name}.attn.wv.b"))),
        (pv.get(&format!("{name}.attn.wo.w")), pv.get(&format!("{name}.attn.wo.b"))),
        cfg.heads,
    )?;
    let h = tape::try_add(h, &tape::try_mul(&a1, &attn)?)?;

    let h_ln2 = nn::layer_norm_no_affine(&h, nn::LAYER_NORM_EPS)?;
    let h_mod2 = tape::try_add(&tape::try_mul(&h_ln2, &g2)?, &b2)?;
    let ffn = nn::mlp(
        &h_mod2,
        pv.get(&format!("{name}.mlp.fc1.w")),
        pv.get(&format!("{name}.mlp.fc1.b")),
        pv.get(&format!("{name}.mlp.fc2.w")),
        pv.get(&format!("{name}.mlp.fc2.b")),
    )?;
    tape::try_add(&h, &tape::try_mul(&a2, &ffn)?).map_err(LdError::Autodiff)
}

/// Predicted velocity for a batch of noisy latents.
///
/// `z_tau`: (B, N, D); `taus`: one time per sample; `cond`: optional additive
/// conditioning of the same shape, added to the input state.
pub fn dit_velocity(
    tape: &Tape,
    pv: &ParamVars,
    cfg: &DiTConfig,
    z_tau: &Var,
    taus: &[f64],
    cond: Option<&Var>,
) -> Result<Var> {
    let shape = z_tau.shape();
    if shape.len() != 3 || shape[2] != cfg.embed_dim {
        return Err(LdError::Config(format!(
            "z shape {:?} does not match embed_dim {}",
            shape, cfg.embed_dim
        )));
    }
    if shape[0] != taus.len() {
        return Err(LdError::Config(format!(
            "batch {} does not match taus {}",
            shape[0],
            taus.len()
        )));
    }
    let mut h = match cond {
        Some(c) => {
            if c.shape() != shape {
                return Err(LdError::Config(format!(
                    "conditioning shape {:?} does not match state {:?}",
                    c.shape(),
                    shape
                )));
            }
            tape::try_add(z_tau, c)?
        }
        None => z_tau.clone(),
    };
    h = nn::linear(&h, pv.get("dit.in_proj.w"), pv.get("dit.in_proj.b"))?;
    let t_feats = tape.leaf(time_features(taus, cfg.time_embed_dim));
    let t_emb = time_embed(pv, &t_feats)?;
    for i in 0..cfg.depth {
        h = adaln_zero_block(pv, cfg, i, &h, &t_emb)?;
    }
    let h_ln = nn::layer_norm_no_affine(&h, nn::LAYER_NORM_EPS)?;
    Ok(nn::linear(&h_ln, pv.get("dit.head.w"), pv.get("dit.head.b"))?)
}

/// Value-level convenience: velocity for (B, N, D) tokens outside training.
pub fn dit_velocity_value(
    store: &ParamStore,
    cfg: &DiTConfig,
    z: &Tensor,
    taus: &[f64],
    cond: Option<&Tensor>,
) -> Result<Tensor> {
    let tape = Tape::new();
    let pv = store.vars(&tape);
    let zv = tape.leaf(z.clone());
    let cv = cond.map(|c| tape.leaf(c.clone()));
    let out = dit_velocity(&tape, &pv, cfg, &zv, taus, cv.as_ref())?;
    tape.health().map_err(LdError::Autodiff)?;
    Ok(out.value())
}
