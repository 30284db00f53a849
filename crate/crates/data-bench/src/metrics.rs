//! Field metrics: relative L2 error and the radial energy spectrum.

use fae::FunctionSample;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{BenchError, Result};

/// ||pred - reference||_2 / ||reference||_2 on matching grids.
pub fn rel_l2(pred: &FunctionSample, reference: &FunctionSample) -> Result<f64> {
    if pred.grid_shape != reference.grid_shape || pred.channels != reference.channels {
        return Err(BenchError::Invalid(format!(
            "grids differ: {:?}x{} vs {:?}x{}",
            pred.grid_shape, pred.channels, reference.grid_shape, reference.channels
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, r) in pred.values.data().iter().zip(reference.values.data()) {
        num += (p - r) * (p - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(BenchError::Invalid("reference field has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

fn fft2(data: &mut [Complex64], n: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    // rows
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    // columns via transpose
    let mut col = vec![Complex64::default(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

/// Radial energy spectrum of a scalar 2D field on a square periodic grid.
///
/// Inclusive grids that carry the duplicated wrap row/column (first row ==
/// last row and first column == last column, exactly) are reduced to one
/// period first. Bins are indexed by k = round(|k_vec|); the bin sum equals
/// the total field energy mean(f^2) (Parseval).
pub fn energy_spectrum(field: &FunctionSample) -> Result<Vec<f64>> {
    if field.rank() != 2 || field.channels != 1 {
        return Err(BenchError::Invalid("energy spectrum expects a scalar 2D field".into()));
    }
    let (h, w) = (field.grid_shape[0], field.grid_shape[1]);
    if h != w {
        return Err(BenchError::Invalid(format!("grid {h}x{w} is not square")));
    }
    let v = field.values.data();
    let wrapped = {
        let first_row = &v[0..w];
        let last_row = &v[(h - 1) * w..h * w];
        let rows_match = first_row == last_row;
        let cols_match = (0..h).all(|i| v[i * w] == v[i * w + w - 1]);
        rows_match && cols_match
    };
    let n = if wrapped { h - 1 } else { h };
    let mut data = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = Complex64::new(v[i * w + j], 0.0);
        }
    }
    fft2(&mut data, n);

    let k_cap = ((2.0f64).sqrt() * (n as f64 / 2.0)).floor() as usize + 1;
    let mut spectrum = vec![0.0f64; k_cap + 1];
    let norm = (n as f64).powi(4);
    for i in 0..n {
        for j in 0..n {
            let ki = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            let kj = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            let k = (ki * ki + kj * kj).sqrt().round() as usize;
            spectrum[k.min(k_cap)] += data[i * n + j].norm_sqr() / norm;
        }
    }
    Ok(spectrum)
}
