//! Physics constraints built on nested automatic differentiation.
//!
//! The scalar-field builders receive the coordinate leaf so every derivative
//! here is an exact reverse-mode derivative of the network (or stub) being
//! audited, and the produced derivative nodes stay differentiable — the
//! Burgers residual can be penalized in a loss whose parameter gradient is
//! again exact.

use autodiff::tape::{self, Var};
use autodiff::{Tape, Tensor};

use crate::error::{FaeError, Result};

/// A differentiable scalar field over (B, Q, a) coordinate tensors.
pub trait ScalarField {
    /// Must return shape (B, Q, 1) built from ops on `coords`.
    fn eval(&self, tape: &Tape, coords: &Var) -> Result<Var>;
}

impl<F> ScalarField for F
where
    F: Fn(&Tape, &Var) -> Result<Var>,
{
    fn eval(&self, tape: &Tape, coords: &Var) -> Result<Var> {
        self(tape, coords)
    }
}

/// 2pi-periodic coordinate embedding gamma(x, y) = [cos x, sin x, cos y, sin y].
pub fn periodic_embed(x: f64, y: f64) -> [f64; 4] {
    [x.cos(), x.sin(), y.cos(), y.sin()]
}

/// Gradient node of `root`'s sum w.r.t. `wrt`, or a zero leaf when the graph
/// has no dependence (the derivative of a constant is structurally absent
/// from the tape, not an error).
fn grad_or_zeros(tape: &Tape, root: &Var, wrt: &Var) -> Result<Var> {
    let g = tape.grad(&root.sum_all(), None).map_err(FaeError::Autodiff)?;
    Ok(match g.get(wrt) {
        Some(v) => v,
        None => tape.leaf(Tensor::zeros(&wrt.shape())),
    })
}

/// Velocity field of a stream function: (u, v) = (dpsi/dy, -dpsi/dx).
///
/// Returns (u, v, coords_var) with u, v of shape (B, Q, 1); the coordinate
/// leaf is exposed so callers can take further derivatives (divergence).
pub fn stream_velocity(
    tape: &Tape,
    psi: &impl ScalarField,
    coords: &Tensor,
) -> Result<(Var, Var, Var)> {
    let c = tape.leaf(coords.clone());
    let psi_val = psi.eval(tape, &c)?;
    let dpsi = grad_or_zeros(tape, &psi_val, &c)?;
    let u = dpsi.slice_axis(2, 1, 1)?;
    let v = dpsi.slice_axis(2, 0, 1)?.neg();
    Ok((u, v, c))
}

/// Divergence du/dx + dv/dy of the stream-function velocity field, evaluated
/// by a second reverse pass over the first one. Identically zero in exact
/// arithmetic; the audit checks it stays at rounding level.
pub fn stream_divergence(tape: &Tape, psi: &impl ScalarField, coords: &Tensor) -> Result<Tensor> {
    let (u, v, c) = stream_velocity(tape, psi, coords)?;
    let u_x = grad_or_zeros(tape, &u, &c)?.slice_axis(2, 0, 1)?;
    let v_y = grad_or_zeros(tape, &v, &c)?.slice_axis(2, 1, 1)?;
    Ok(tape::try_add(&u_x, &v_y).map_err(FaeError::Autodiff)?.value())
}

/// Burgers residual R[u] = du/dt + u du/dx - nu d2u/dx2 at (x, t) coordinates.
///
/// `coords` are (B, Q, 2) with axis order (x, t). The result is a tape node,
/// so `mean(residual^2)` can be differentiated w.r.t. network parameters.
pub fn burgers_residual(tape: &Tape, u_field: &impl ScalarField, coords: &Var, nu: f64) -> Result<Var> {
    let u = u_field.eval(tape, coords)?;
    let du = grad_or_zeros(tape, &u, coords)?;
    let u_x = du.slice_axis(2, 0, 1)?;
    let u_t = du.slice_axis(2, 1, 1)?;
    let u_xx = grad_or_zeros(tape, &u_x, coords)?.slice_axis(2, 0, 1)?;
    let advect = tape::try_mul(&u, &u_x).map_err(FaeError::Autodiff)?;
    let r = tape::try_add(&u_t, &advect).map_err(FaeError::Autodiff)?;
    Ok(tape::try_sub(&r, &u_xx.scale(nu)).map_err(FaeError::Autodiff)?)
}

/// Scalar wrapper: residual of `u` at one (x, t) point.
pub fn burgers_residual_at(u_field: &impl ScalarField, x: f64, t: f64, nu: f64) -> Result<f64> {
    let tape = Tape::new();
    let coords = tape.leaf(Tensor::new(vec![1, 1, 2], vec![x, t]).unwrap());
    let r = burgers_residual(&tape, u_field, &coords, nu)?;
    tape.health().map_err(FaeError::Autodiff)?;
    Ok(r.value().item())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn periodic_embed_reference_points() {
        assert_eq!(periodic_embed(0.0, 0.0), [1.0, 0.0, 1.0, 0.0]);
        let g = periodic_embed(std::f64::consts::FRAC_PI_2, 0.0);
        assert!(close(g[0], 0.0, 1e-15) && close(g[1], 1.0, 1e-15));
        assert!(close(g[2], 1.0, 1e-15) && close(g[3], 0.0, 1e-15));
    }

    #[test]
    fn periodic_embed_period_identity() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let two_pi = 2.0 * std::f64::consts::PI;
        for _ in 0..100 {
            let x: f64 = rng.gen_range(0.0..two_pi);
            let y: f64 = rng.gen_range(0.0..two_pi);
            let a = periodic_embed(x, y);
            let b = periodic_embed(x + two_pi, y);
            for i in 0..4 {
                assert!(close(a[i], b[i], 1e-12));
            }
        }
    }

    /// psi(x, y) = x^2 y  =>  u = x^2, v = -2xy, div = 2x - 2x = 0.
    fn stub_psi(_tape: &Tape, coords: &Var) -> Result<Var> {
        let x = coords.slice_axis(2, 0, 1)?;
        let y = coords.slice_axis(2, 1, 1)?;
        Ok(tape::try_mul(&x.square(), &y)?)
    }

    #[test]
    fn stub_stream_function_velocities() {
        let tape = Tape::new();
        let coords = Tensor::new(vec![1, 2, 2], vec![0.7, -0.3, 1.2, 0.4]).unwrap();
        let (u, v, _) = stream_velocity(&tape, &stub_psi, &coords).unwrap();
        assert!(close(u.value().data()[0], 0.49, 1e-12));
        assert!(close(v.value().data()[0], -2.0 * 0.7 * -0.3, 1e-12));
        assert!(close(u.value().data()[1], 1.44, 1e-12));
        assert!(close(v.value().data()[1], -2.0 * 1.2 * 0.4, 1e-12));
    }

    #[test]
    fn stub_divergence_vanishes() {
        let tape = Tape::new();
        let coords = Tensor::new(vec![1, 3, 2], vec![0.1, 0.2, -0.5, 0.9, 2.0, -1.0]).unwrap();
        let div = stream_divergence(&tape, &stub_psi, &coords).unwrap();
        for &d in div.data() {
            assert!(d.abs() < 1e-12, "divergence {d}");
        }
    }

    #[test]
    fn burgers_residual_constant_is_zero() {
        let constant = |tape: &Tape, coords: &Var| -> Result<Var> {
            let x = coords.slice_axis(2, 0, 1)?;
            Ok(tape::try_add(&x.scale(0.0), &tape.scalar(2.5).broadcast_to(&x.shape())?)?)
        };
        let r = burgers_residual_at(&constant, 0.4, 0.7, 0.001).unwrap();
        assert!(close(r, 0.0, 1e-14));
    }

    #[test]
    fn burgers_residual_linear_field() {
        // u(x, t) = x: u_t = 0, u u_x = x, u_xx = 0 => residual = x
        let linear = |_tape: &Tape, coords: &Var| -> Result<Var> { Ok(coords.slice_axis(2, 0, 1)?) };
        for x in [0.0, 0.3, 0.9] {
            let r = burgers_residual_at(&linear, x, 0.5, 0.001).unwrap();
            assert!(close(r, x, 1e-13), "residual at {x}: {r}");
        }
    }

    #[test]
    fn burgers_residual_matches_finite_difference_stencil() {
        // Smooth test function u(x, t) = sin(2x) * exp(-t) + 0.3 x^2
        let smooth = |_tape: &Tape, coords: &Var| -> Result<Var> {
            let x = coords.slice_axis(2, 0, 1)?;
            let t = coords.slice_axis(2, 1, 1)?;
            let term = tape::try_mul(&tape::sin(&x.scale(2.0)), &tape::exp(&t.neg()))?;
            Ok(tape::try_add(&term, &x.square().scale(0.3))?)
        };
        let u = |x: f64, t: f64| (2.0 * x).sin() * (-t).exp() + 0.3 * x * x;
        let nu = 0.05;
        let (x0, t0) = (0.6, 0.4);
        let h = 1e-5;
        let u_t = (u(x0, t0 + h) - u(x0, t0 - h)) / (2.0 * h);
        let u_x = (u(x0 + h, t0) - u(x0 - h, t0)) / (2.0 * h);
        let u_xx = (u(x0 + h, t0) - 2.0 * u(x0, t0) + u(x0 - h, t0)) / (h * h);
        let fd = u_t + u(x0, t0) * u_x - nu * u_xx;
        let ad = burgers_residual_at(&smooth, x0, t0, nu).unwrap();
        assert!((ad - fd).abs() / fd.abs().max(1.0) < 1e-4, "ad {ad} vs fd {fd}");
    }
}
