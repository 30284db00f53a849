//! ViT-style patchification and resolution-adaptive positional embeddings.

use autodiff::tensor;
use autodiff::{Tape, Tensor, Var};

use crate::error::{FaeError, Result};
use crate::sample::FunctionSample;

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

/// Split a sample into flattened patches: (L, P^a * C), L = prod(axis/P).
///
/// 1D signals patchify along their single axis; 2D grids use square P x P
/// patches in row-major patch order.
pub fn patchify(f: &FunctionSample, p: usize) -> Result<Tensor> {
    for &g in &f.grid_shape {
        if p == 0 || g % p != 0 {
            let valid: Vec<usize> = divisors(f.grid_shape.iter().fold(0, |acc, &g| gcd(acc, g)));
            return Err(FaeError::Config(format!(
                "patch size {p} does not divide grid {:?}; valid sizes: {:?}",
                f.grid_shape, valid
            )));
        }
    }
    let c = f.channels;
    match f.grid_shape.as_slice() {
        [g] => {
            let l = g / p;
            // contiguous: values already in patch order
            Ok(tensor::reshape(&f.values, &[l, p * c]).expect("patchify 1d"))
        }
        [h, w] => {
            let (lh, lw) = (h / p, w / p);
            let mut out = Vec::with_capacity(h * w * c);
            for bi in 0..lh {
                for bj in 0..lw {
                    for ii in 0..p {
                        for jj in 0..p {
                            let row = bi * p + ii;
                            let col = bj * p + jj;
                            let off = (row * w + col) * c;
                            out.extend_from_slice(&f.values.data()[off..off + c]);
                        }
                    }
                }
            }
            Ok(Tensor::new(vec![lh * lw, p * p * c], out).expect("patchify 2d"))
        }
        other => Err(FaeError::Config(format!("patchify supports rank 1 or 2 grids, got {other:?}"))),
    }
}

/// Inverse of [`patchify`]; reproduces the sample values bit for bit.
pub fn unpatchify(patches: &Tensor, grid_shape: &[usize], channels: usize, p: usize) -> Result<Tensor> {
    let c = channels;
    match grid_shape {
        [g] => {
            let l = g / p;
            if patches.shape() != [l, p * c] {
                return Err(FaeError::Invalid(format!(
                    "patch tensor {:?} does not match grid {:?}",
                    patches.shape(),
                    grid_shape
                )));
            }
            Ok(tensor::reshape(patches, &[g * c]).expect("unpatchify 1d"))
        }
        [h, w] => {
            let (lh, lw) = (h / p, w / p);
            if patches.shape() != [lh * lw, p * p * c] {
                return Err(FaeError::Invalid(format!(
                    "patch tensor {:?} does not match grid {:?}",
                    patches.shape(),
                    grid_shape
                )));
            }
            let mut out = vec![0.0f64; h * w * c];
            let data = patches.data();
            for bi in 0..lh {
                for bj in 0..lw {
                    let patch = (bi * lw + bj) * p * p * c;
                    for ii in 0..p {
                        for jj in 0..p {
                            let src = patch + (ii * p + jj) * c;
                            let row = bi * p + ii;
                            let col = bj * p + jj;
                            let dst = (row * w + col) * c;
                            out[dst..dst + c].copy_from_slice(&data[src..src + c]);
                        }
                    }
                }
            }
            Ok(Tensor::new(vec![h * w * c], out).expect("unpatchify 2d"))
        }
        other => Err(FaeError::Config(format!("unpatchify supports rank 1 or 2 grids, got {other:?}"))),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if a == 0 {
        b
    } else {
        gcd(b % a, a)
    }
}

/// Interpolate a trainable positional-embedding table to a new token layout.
///
/// Linear in normalized token coordinates (token k of L sits at k/(L-1));
/// bilinear over the 2D token layout, which is interpolated per axis and
/// re-flattened. Identity when the layouts match. Differentiable w.r.t. the
/// table, so gradients reach the embedding at every resolution.
pub fn interp_pos_embed(pe: &Var, src_layout: &[usize], dst_layout: &[usize]) -> Result<Var> {
    if src_layout == dst_layout {
        return Ok(pe.clone());
    }
    let l_src: usize = src_layout.iter().product();
    if pe.shape()[0] != l_src {
        return Err(FaeError::Invalid(format!(
            "PE table rows {} do not match source layout {:?}",
            pe.shape()[0],
            src_layout
        )));
    }
    // Per-target-axis (low index, weight) pairs.
    let axis_interp = |g_src: usize, g_dst: usize| -> (Vec<usize>, Vec<f64>) {
        let mut lo = Vec::with_capacity(g_dst);
        let mut w = Vec::with_capacity(g_dst);
        for k in 0..g_dst {
            let pos = if g_dst == 1 { 0.0 } else { k as f64 / (g_dst - 1) as f64 };
            let s = pos * (g_src - 1) as f64;
            let j = (s.floor() as usize).min(g_src.saturating_sub(2));
            lo.push(j);
            w.push(s - j as f64);
        }
        (lo, w)
    };

    match (src_layout, dst_layout) {
        ([gs], [gd]) => {
            let (lo, w) = axis_interp(*gs, *gd);
            let hi: Vec<usize> = lo.iter().map(|&j| (j + 1).min(gs - 1)).collect();
            let tape = pe.tape().clone();
            let w_hi = tape.leaf(Tensor::new(vec![*gd, 1], w.clone()).unwrap());
            let w_lo = tape.leaf(Tensor::new(vec![*gd, 1], w.iter().map(|x| 1.0 - x).collect()).unwrap());
            let a = autodiff::tape::try_mul(&pe.gather_rows(&lo)?, &w_lo)?;
            let b = autodiff::tape::try_mul(&pe.gather_rows(&hi)?, &w_hi)?;
            Ok(autodiff::tape::try_add(&a, &b)?)
        }
        ([hs, ws], [hd, wd]) => {
            let (lo_i, wi) = axis_interp(*hs, *hd);
            let (lo_j, wj) = axis_interp(*ws, *wd);
            let l_dst = hd * wd;
            let mut idx = [Vec::with_capacity(l_dst), Vec::with_capacity(l_dst), Vec::with_capacity(l_dst), Vec::with_capacity(l_dst)];
            let mut wgt = [Vec::with_capacity(l_dst), Vec::with_capacity(l_dst), Vec::with_capacity(l_dst), Vec::with_capacity(l_dst)];
            for i in 0..*hd {
                let i0 = lo_i[i];
                let i1 = (i0 + 1).min(hs - 1);
                for j in 0..*wd {
                    let j0 = lo_j[j];
                    let j1 = (j0 + 1).min(ws - 1);
                    let (ti, tj) = (wi[i], wj[j]);
                    idx[0].push(i0 * ws + j0);
                    wgt[0].push((1.0 - ti) * (1.0 - tj));
                    idx[1].push(i0 * ws + j1);
                    wgt[1].push((1.0 - ti) * tj);
                    idx[2].push(i1 * ws + j0);
                    wgt[2].push(ti * (1.0 - tj));
                    idx[3].push(i1 * ws + j1);
                    wgt[3].push(ti * tj);
                }
            }
            let tape = pe.tape().clone();
            let mut acc: Option<Var> = None;
            for corner in 0..4 {
                let w = tape.leaf(Tensor::new(vec![l_dst, 1], wgt[corner].clone()).unwrap());
                let term = autodiff::tape::try_mul(&pe.gather_rows(&idx[corner])?, &w)?;
                acc = Some(match acc {
                    Some(prev) => autodiff::tape::try_add(&prev, &term)?,
                    None => term,
                });
            }
            Ok(acc.unwrap())
        }
        _ => Err(FaeError::Config(format!(
            "positional embedding layouts {src_layout:?} -> {dst_layout:?} must share rank 1 or 2"
        ))),
    }
}

/// Value-level convenience wrapper around [`interp_pos_embed`].
pub fn interp_pos_embed_value(pe: &Tensor, src_layout: &[usize], dst_layout: &[usize]) -> Result<Tensor> {
    let tape = Tape::new();
    let v = tape.leaf(pe.clone());
    Ok(interp_pos_embed(&v, src_layout, dst_layout)?.value())
}
