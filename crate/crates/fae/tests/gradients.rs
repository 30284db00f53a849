//! End-to-end gradient checks: the composite loss (including the Burgers
//! residual term, which itself contains second derivatives of the decoder)
//! must match central finite differences parameter by parameter.

use autodiff::{ParamStore, Tape, Tensor};
use fae::loss::{fae_loss, LossItem, LossWeights, PhysicsSpec};
use fae::model::{init_fae_params, Constraint, CoordEmbedKind, DecoderConfig, EncoderConfig, FaeConfig};
use fae::FunctionSample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn tiny_cfg(rank: usize, constraint: Constraint) -> FaeConfig {
    FaeConfig {
        encoder: EncoderConfig {
            input_rank: rank,
            channels: 1,
            patch_size: 4,
            embed_dim: 16,
            depth: 1,
            heads: 2,
            latent_tokens: 2,
            mlp_width: 16,
            pe_grid: vec![2; rank],
        },
        decoder: DecoderConfig {
            coord_embed: CoordEmbedKind::Fourier { frequencies: 4, scale: 2.0 * std::f64::consts::PI },
            cross_depth: 1,
            embed_dim: 16,
            heads: 2,
            mlp_width: 16,
            output_dim: 1,
            constraint,
            symmetric_mean: false,
            domain: vec![(0.0, 1.0); rank],
        },
    }
}

fn loss_value(store: &ParamStore, cfg: &FaeConfig, items: &[LossItem], w: LossWeights, p: PhysicsSpec) -> f64 {
    let tape = Tape::new();
    let pv = store.vars(&tape);
    let terms = fae_loss(&tape, &pv, cfg, items, w, p).unwrap();
    tape.health().unwrap();
    terms.total.value().item()
}

fn rebuild_items(rank: usize, with_physics: bool, seed: u64) -> Vec<LossItem> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let grid: Vec<usize> = vec![8; rank];
    let n: usize = grid.iter().product();
    let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let domain = vec![(0.0, 1.0); rank];
    let f = FunctionSample::new(grid, domain, 1, Tensor::new(vec![n], vals).unwrap()).unwrap();
    let q = 4;
    let coords: Vec<f64> = (0..q * rank).map(|_| rng.gen_range(0.0..1.0)).collect();
    let targets: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let physics_coords = with_physics.then(|| {
        Tensor::new(vec![3, rank], (0..3 * rank).map(|_| rng.gen_range(0.1..0.9)).collect()).unwrap()
    });
    vec![LossItem {
        input: f,
        query_coords: Tensor::new(vec![q, rank], coords).unwrap(),
        target_values: Tensor::new(vec![q, 1], targets).unwrap(),
        physics_coords,
    }]
}

fn check_all_params(cfg: &FaeConfig, items: &[LossItem], w: LossWeights, p: PhysicsSpec, tol: f64) {
    let store = init_fae_params(cfg, 33).unwrap();

    // Reverse-mode gradients.
    let tape = Tape::new();
    let pv = store.vars(&tape);
    let terms = fae_loss(&tape, &pv, cfg, items, w, p).unwrap();
    let grads = tape.grad(&terms.total, None).unwrap();
    tape.health().unwrap();

    let mut max_err: f64 = 0.0;
    let mut worst = String::new();
    for name in store.trainable_names() {
        let ad = grads.tensor(pv.get(&name));
        let base = store.get(&name).unwrap().clone();
        // Spot-check a deterministic spread of elements per tensor.
        let stride = (base.numel() / 12).max(1);
        for j in (0..base.numel()).step_by(stride) {
            let h = 1e-5 * (1.0 + base.data()[j].abs());
            let mut bump = |delta: f64| {
                let mut data = base.to_vec();
                data[j] += delta;
                let mut s = store.clone();
                s.set_value(&name, Tensor::new(base.shape().to_vec(), data).unwrap());
                loss_value(&s, cfg, items, w, p)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let err = autodiff::gradcheck::rel_err(ad.data()[j], fd);
            if err > max_err {
                max_err = err;
                worst = format!("{name}[{j}] ad={} fd={fd}", ad.data()[j]);
            }
        }
    }
    assert!(max_err < tol, "max rel err {max_err} at {worst}");
}

#[test]
fn data_loss_gradient_matches_finite_differences() {
    let cfg = tiny_cfg(1, Constraint::None);
    let items = rebuild_items(1, false, 0);
    check_all_params(&cfg, &items, LossWeights { data: 1.0, physics: 0.0 }, PhysicsSpec::None, 1e-4);
}

#[test]
fn physics_loss_gradient_matches_finite_differences() {
    // Burgers residual: gradients flow through two extra levels of
    // differentiation inside the decoder.
    let cfg = tiny_cfg(2, Constraint::None);
    let items = rebuild_items(2, true, 1);
    check_all_params(
        &cfg,
        &items,
        LossWeights { data: 1.0, physics: 1.0 },
        PhysicsSpec::Burgers { nu: 0.05 },
        1e-4,
    );
}

#[test]
fn symmetric_decoder_gradient_matches_finite_differences() {
    let cfg = tiny_cfg(2, Constraint::ReflectSymmetric);
    let items = rebuild_items(2, false, 2);
    check_all_params(&cfg, &items, LossWeights { data: 1.0, physics: 0.0 }, PhysicsSpec::None, 1e-4);
}

#[test]
fn decode_directional_derivative_matches_finite_differences() {
    // d(decoder)/d(coordinate) via the tape vs a central difference.
    let cfg = tiny_cfg(1, Constraint::None);
    let store = init_fae_params(&cfg, 9).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let vals: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = FunctionSample::new(vec![16], vec![(0.0, 1.0)], 1, Tensor::new(vec![16], vals).unwrap()).unwrap();
    let z = fae::encode(&store, &cfg.encoder, &f).unwrap();

    let x0 = 0.37;
    let tape = Tape::new();
    let pv = store.vars(&tape);
    let zv = tape.leaf(autodiff::tensor::reshape(&z.tokens, &[1, 2, 16]).unwrap());
    let cv = tape.leaf(Tensor::new(vec![1, 1, 1], vec![x0]).unwrap());
    let out = fae::model::decode_tokens(&tape, &pv, &cfg.decoder, &zv, &cv).unwrap();
    let g = tape.grad(&out.sum_all(), None).unwrap();
    let ad = g.get(&cv).unwrap().value().item();

    let h = 1e-5;
    let eval = |x: f64| {
        fae::decode_at(&store, &cfg, &z, &Tensor::new(vec![1, 1], vec![x]).unwrap()).unwrap().item()
    };
    let fd = (eval(x0 + h) - eval(x0 - h)) / (2.0 * h);
    let rel = (ad - fd).abs() / fd.abs().max(1.0);
    assert!(rel < 1e-4, "ad {ad} vs fd {fd}");
}
