//! Multidimensional FFT over row-major arrays, built from 1-D rustfft passes.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place unnormalized n-dimensional FFT (`inverse` flips the sign, no 1/N).
pub fn fftn(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(total, data.len());
    let mut planner = FftPlanner::<f64>::new();
    let mut stride = total;
    for &len in dims {
        stride /= len;
        if len == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let block = len * stride;
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let start = outer + inner;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[start + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[start + i * stride] = *v;
                }
            }
        }
    }
}

/// Linear (non-circular) convolution of two real `side^n` arrays via zero-padded FFT.
/// Returns the `side^n` window aligned so that `kernel` is centred at index `center`.
pub fn convolve_centered(
    signal: &[f64],
    kernel: &[f64],
    side: usize,
    n: usize,
    center: usize,
) -> Vec<f64> {
    let padded = (2 * side).next_power_of_two();
    let dims = vec![padded; n];
    let total = padded.pow(n as u32);
    let mut a = vec![Complex64::new(0.0, 0.0); total];
    let mut b = vec![Complex64::new(0.0, 0.0); total];
    let mut idx = vec![0usize; n];
    for flat in 0..signal.len() {
        crate::grid::unflatten(flat, side, n, &mut idx);
        let p = crate::grid::flatten(&idx, padded);
        a[p].re = signal[flat];
        b[p].re = kernel[flat];
    }
    fftn(&mut a, &dims, false);
    fftn(&mut b, &dims, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    fftn(&mut a, &dims, true);
    let norm = 1.0 / total as f64;
    let mut out = vec![0.0; signal.len()];
    let mut shifted = vec![0usize; n];
    for (flat, o) in out.iter_mut().enumerate() {
        crate::grid::unflatten(flat, side, n, &mut idx);
        for a_ in 0..n {
            shifted[a_] = idx[a_] + center;
        }
        *o = a[crate::grid::flatten(&shifted, padded)].re * norm;
    }
    out
}
