//! Composite FAE training loss: weighted reconstruction MSE over sampled
//! query coordinates plus an optional PDE-residual penalty evaluated at
//! independently drawn collocation points.

use autodiff::tape::{self, Var};
use autodiff::{ParamVars, Tape, Tensor};

use crate::error::{FaeError, Result};
use crate::model::{decode_tokens, encode_batch, FaeConfig};
use crate::physics::burgers_residual;
use crate::sample::FunctionSample;

/// One training item: the (possibly downsampled) encoder input, target
/// coordinates/values from the full-resolution sample, and optional
/// collocation points for the physics term.
pub struct LossItem {
    pub input: FunctionSample,
    /// (Q, a)
    pub query_coords: Tensor,
    /// (Q, C)
    pub target_values: Tensor,
    /// (Qp, a), drawn from the continuous domain.
    pub physics_coords: Option<Tensor>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub data: f64,
    pub physics: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum PhysicsSpec {
    None,
    Burgers { nu: f64 },
}

pub struct LossTerms {
    pub total: Var,
    /// Weighted data term (w_data * MSE).
    pub data: Var,
    /// Weighted physics term (w_physics * mean residual^2).
    pub physics: Var,
}

/// Assemble the composite loss on `tape`. Items are grouped by encoder-input
/// grid shape so each group runs as one batched forward pass.
pub fn fae_loss(
    tape: &Tape,
    pv: &ParamVars,
    cfg: &FaeConfig,
    items: &[LossItem],
    weights: LossWeights,
    physics: PhysicsSpec,
) -> Result<LossTerms> {
    if items.is_empty() {
        return Err(FaeError::Invalid("empty loss batch".into()));
    }
    let rank = cfg.encoder.input_rank;
    let c_out = cfg.decoder.output_dim;

    // Group item indices by encoder-input grid shape.
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new(); // (grid_shape, indices)
    for (i, item) in items.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| g == &item.input.grid_shape) {
            Some((_, idxs)) => idxs.push(i),
            None => groups.push((item.input.grid_shape.clone(), vec![i])),
        }
    }

    let mut data_sq_sum: Option<Var> = None;
    let mut data_count = 0usize;
    let mut phys_sq_sum: Option<Var> = None;
    let mut phys_count = 0usize;
    let want_physics = weights.physics != 0.0 && !matches!(physics, PhysicsSpec::None);

    for (_, idxs) in &groups {
        let batch: Vec<&FunctionSample> = idxs.iter().map(|&i| &items[i].input).collect();
        let z = encode_batch(tape, pv, &cfg.encoder, &batch)?;
        let b = idxs.len();

        // Stack query coords/targets; all items share Q within one call.
        let q = items[idxs[0]].query_coords.shape()[0];
        let mut coords = Vec::with_capacity(b * q * rank);
        let mut targets = Vec::with_capacity(b * q * c_out);
        for &i in idxs {
            let item = &items[i];
            if item.query_coords.shape() != [q, rank] {
                return Err(FaeError::Invalid("query_coords shapes must agree across the batch".into()));
            }
            coords.extend_from_slice(item.query_coords.data());
            targets.extend_from_slice(item.target_values.data());
        }
        let coords = tape.leaf(Tensor::new(vec![b, q, rank], coords).map_err(FaeError::Autodiff)?);
        let target = tape.leaf(Tensor::new(vec![b, q, c_out], targets).map_err(FaeError::Autodiff)?);
        let pred = decode_tokens(tape, pv, &cfg.decoder, &z, &coords)?;
        let sq = tape::try_sub(&pred, &target).map_err(FaeError::Autodiff)?.square().sum_all();
        data_count += b * q * c_out;
        data_sq_sum = Some(match data_sq_sum {
            Some(prev) => tape::try_add(&prev, &sq).map_err(FaeError::Autodiff)?,
            None => sq,
        });

        if want_physics {
            let qp = items[idxs[0]].physics_coords.as_ref().map(|t| t.shape()[0]).unwrap_or(0);
            if qp > 0 {
                let mut pcoords = Vec::with_capacity(b * qp * rank);
                for &i in idxs {
                    let pc = items[i]
                        .physics_coords
                        .as_ref()
                        .ok_or_else(|| FaeError::Invalid("physics_coords missing for an item".into()))?;
                    if pc.shape() != [qp, rank] {
                        return Err(FaeError::Invalid("physics_coords shapes must agree across the batch".into()));
                    }
                    pcoords.extend_from_slice(pc.data());
                }
                let pc_var = tape.leaf(Tensor::new(vec![b, qp, rank], pcoords).map_err(FaeError::Autodiff)?);
                let residual = match physics {
                    PhysicsSpec::Burgers { nu } => {
                        let field = |t: &Tape, cvar: &Var| decode_tokens(t, pv, &cfg.decoder, &z, cvar);
                        burgers_residual(tape, &field, &pc_var, nu)?
                    }
                    PhysicsSpec::None => unreachable!(),
                };
                let sq = residual.square().sum_all();
                phys_count += b * qp;
                phys_sq_sum = Some(match phys_sq_sum {
                    Some(prev) => tape::try_add(&prev, &sq).map_err(FaeError::Autodiff)?,
                    None => sq,
                });
            }
        }
    }

    let data_mse = data_sq_sum.unwrap().scale(1.0 / data_count as f64);
    let data_term = data_mse.scale(weights.data);
    let physics_term = match phys_sq_sum {
        Some(s) if phys_count > 0 => s.scale(weights.physics / phys_count as f64),
        _ => tape.scalar(0.0),
    };
    let total = tape::try_add(&data_term, &physics_term).map_err(FaeError::Autodiff)?;
    Ok(LossTerms { total, data: data_term, physics: physics_term })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_fae_params, Constraint, CoordEmbedKind, DecoderConfig, EncoderConfig};
    use rand::Rng;
    use rand::SeedableRng;

    fn tiny_cfg() -> FaeConfig {
        FaeConfig {
            encoder: EncoderConfig {
                input_rank: 1,
                channels: 1,
                patch_size: 4,
                embed_dim: 16,
                depth: 1,
                heads: 2,
                latent_tokens: 2,
                mlp_width: 24,
                pe_grid: vec![4],
            },
            decoder: DecoderConfig {
                coord_embed: CoordEmbedKind::Fourier { frequencies: 6, scale: 2.0 * std::f64::consts::PI },
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

    fn make_item(seed: u64) -> LossItem {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let n = 16;
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = FunctionSample::new(vec![n], vec![(0.0, 1.0)], 1, Tensor::new(vec![n], vals).unwrap()).unwrap();
        let q = 8;
        let coords: Vec<f64> = (0..q).map(|k| k as f64 / (q - 1) as f64).collect();
        let targets: Vec<f64> = coords.iter().map(|&x| (2.0 * x - 1.0).tanh()).collect();
        LossItem {
            input: f,
            query_coords: Tensor::new(vec![q, 1], coords).unwrap(),
            target_values: Tensor::new(vec![q, 1], targets).unwrap(),
            physics_coords: None,
        }
    }

    #[test]
    fn data_term_matches_direct_mse() {
        let cfg = tiny_cfg();
        let store = init_fae_params(&cfg, 5).unwrap();
        let items = vec![make_item(0), make_item(1)];
        let tape = Tape::new();
        let pv = store.vars(&tape);
        let w = LossWeights { data: 100.0, physics: 0.0 };
        let terms = fae_loss(&tape, &pv, &cfg, &items, w, PhysicsSpec::None).unwrap();

        // Direct oracle: decode each item and accumulate squared error.
        let mut sq = 0.0;
        let mut count = 0;
        for item in &items {
            let z = crate::model::encode(&store, &cfg.encoder, &item.input).unwrap();
            let pred = crate::model::decode_at(&store, &cfg, &z, &item.query_coords).unwrap();
            for (p, t) in pred.data().iter().zip(item.target_values.data()) {
                sq += (p - t) * (p - t);
                count += 1;
            }
        }
        let direct = 100.0 * sq / count as f64;
        let got = terms.data.value().item();
        assert!((got - direct).abs() < 1e-10 * direct.max(1.0), "{got} vs {direct}");
        assert_eq!(terms.physics.value().item(), 0.0);
        assert!((terms.total.value().item() - got).abs() < 1e-15);
    }

    #[test]
    fn doubling_w_data_doubles_data_term() {
        let cfg = tiny_cfg();
        let store = init_fae_params(&cfg, 6).unwrap();
        let items = vec![make_item(2)];
        let eval = |wd: f64| {
            let tape = Tape::new();
            let pv = store.vars(&tape);
            fae_loss(&tape, &pv, &cfg, &items, LossWeights { data: wd, physics: 0.0 }, PhysicsSpec::None)
                .unwrap()
                .data
                .value()
                .item()
        };
        let a = eval(1.0);
        let b = eval(2.0);
        assert!((b - 2.0 * a).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn perfect_reconstruction_gives_zero_loss() {
        // Stub: target equals the decoder's own output.
        let cfg = tiny_cfg();
        let store = init_fae_params(&cfg, 7).unwrap();
        let mut item = make_item(3);
        let z = crate::model::encode(&store, &cfg.encoder, &item.input).unwrap();
        item.target_values = crate::model::decode_at(&store, &cfg, &z, &item.query_coords).unwrap();
        let tape = Tape::new();
        let pv = store.vars(&tape);
        let terms = fae_loss(
            &tape,
            &pv,
            &cfg,
            &[item],
            LossWeights { data: 100.0, physics: 1.0 },
            PhysicsSpec::None,
        )
        .unwrap();
        assert!(terms.total.value().item() < 1e-20);
    }
}
