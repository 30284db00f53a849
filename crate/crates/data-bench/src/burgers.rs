//! Viscous Burgers reference solver on the periodic unit interval.
//!
//! Conservative flux form du/dt = -d/dx (u^2/2) + nu d2u/dx2 with 2nd-order
//! central differences in space and explicit RK4 in time. The centered flux
//! difference telescopes over the periodic ring, so the discrete mass
//! sum(u) h is conserved to rounding at every stage.

use autodiff::Tensor;
use fae::FunctionSample;

use crate::error::{BenchError, Result};

const ADVECTIVE_CFL: f64 = 0.7;
const DIFFUSIVE_CFL: f64 = 0.5;

fn rhs(u: &[f64], h: f64, nu: f64, out: &mut [f64]) {
    let n = u.len();
    for j in 0..n {
        let jp = if j + 1 == n { 0 } else { j + 1 };
        let jm = if j == 0 { n - 1 } else { j - 1 };
        let flux = (u[jp] * u[jp] - u[jm] * u[jm]) / (4.0 * h);
        let diff = nu * (u[jp] - 2.0 * u[j] + u[jm]) / (h * h);
        out[j] = -flux + diff;
    }
}

/// Smallest CFL-safe step count for the given initial data.
pub fn suggested_nt(a_max: f64, h: f64, nu: f64, t_end: f64) -> usize {
    let adv = a_max * t_end / (ADVECTIVE_CFL * h);
    let diff = nu * t_end / (DIFFUSIVE_CFL * h * h);
    adv.max(diff).ceil().max(1.0) as usize
}

/// Integrate from the initial sample (inclusive grid of `nx` points on
/// [0, 1]) over `nt` RK4 steps to time `t_end`, returning the space-time
/// field on the (nx, nt + 1) inclusive grid.
pub fn burgers_fd_solve(a: &FunctionSample, nu: f64, nx: usize, nt: usize, t_end: f64) -> Result<FunctionSample> {
    if a.rank() != 1 || a.channels != 1 {
        return Err(BenchError::Invalid("initial condition must be a scalar 1D sample".into()));
    }
    if a.grid_shape[0] != nx || nx < 3 {
        return Err(BenchError::Invalid(format!(
            "initial grid {:?} does not match nx = {nx}",
            a.grid_shape
        )));
    }
    if nu <= 0.0 {
        return Err(BenchError::Invalid("viscosity must be positive".into()));
    }
    let n = nx - 1; // distinct periodic points
    let h = 1.0 / n as f64;
    let mut u: Vec<f64> = a.values.data()[..n].to_vec();
    let u_max = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let dt = t_end / nt as f64;
    if u_max * dt / h > ADVECTIVE_CFL || nu * dt / (h * h) > DIFFUSIVE_CFL {
        return Err(BenchError::Cfl {
            nt_given: nt,
            nt_suggested: suggested_nt(u_max, h, nu, t_end),
        });
    }

    let mut field = Vec::with_capacity(nx * (nt + 1));
    let mut snapshot = |u: &[f64], field: &mut Vec<f64>| {
        field.extend_from_slice(u);
        field.push(u[0]); // duplicate wrap point x = 1
    };
    snapshot(&u, &mut field);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..nt {
        rhs(&u, h, nu, &mut k1);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k1[j];
        }
        rhs(&tmp, h, nu, &mut k2);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k2[j];
        }
        rhs(&tmp, h, nu, &mut k3);
        for j in 0..n {
            tmp[j] = u[j] + dt * k3[j];
        }
        rhs(&tmp, h, nu, &mut k4);
        for j in 0..n {
            u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        snapshot(&u, &mut field);
    }

    // Snapshots were appended time-major ((t, x) rows); transpose to the
    // (x, t) layout of the sample.
    let mut values = vec![0.0f64; nx * (nt + 1)];
    for k in 0..=nt {
        for i in 0..nx {
            values[i * (nt + 1) + k] = field[k * nx + i];
        }
    }
    Ok(FunctionSample::new(
        vec![nx, nt + 1],
        vec![(0.0, 1.0), (0.0, t_end)],
        1,
        Tensor::new(vec![nx * (nt + 1)], values).unwrap(),
    )?)
}

/// Discrete mass h * sum(u) over the distinct points of one time slice.
pub fn slice_mass(field: &FunctionSample, time_index: usize) -> f64 {
    let nx = field.grid_shape[0];
    let nt1 = field.grid_shape[1];
    let n = nx - 1;
    let h = 1.0 / n as f64;
    (0..n).map(|i| field.values.data()[i * nt1 + time_index]).sum::<f64>() * h
}
