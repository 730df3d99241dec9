use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward 2-D DFT of a real row-major `width`×`height` plane.
pub(crate) fn fft2_real(data: &[f64], width: usize, height: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2_inplace(&mut buf, width, height, false);
    buf
}

pub(crate) fn fft2_inplace(buf: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), width * height);
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let (row, col) = if inverse {
            (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
        } else {
            (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
        };
        row.process(buf);
        let mut t = transpose(buf, width, height);
        col.process(&mut t);
        buf.copy_from_slice(&transpose(&t, height, width));
    });
}

fn transpose(src: &[Complex<f64>], width: usize, height: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); src.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = src[y * width + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // direct O(N^2) DFT
    fn naive(data: &[f64], w: usize, h: usize) -> Vec<Complex<f64>> {
        let mut out = vec![Complex::new(0.0, 0.0); w * h];
        for v in 0..h {
            for u in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let ang = -2.0 * std::f64::consts::PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        acc += Complex::from_polar(data[y * w + x], ang);
                    }
                }
                out[v * w + u] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let (w, h) = (12, 10);
        let data: Vec<f64> = (0..w * h).map(|i| ((i * 37 % 17) as f64 - 8.0) / 7.0).collect();
        let fast = fft2_real(&data, w, h);
        for (a, b) in fast.iter().zip(naive(&data, w, h)) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let (w, h) = (16, 8);
        let data: Vec<f64> = (0..w * h).map(|i| (i as f64).sin()).collect();
        let mut buf = fft2_real(&data, w, h);
        fft2_inplace(&mut buf, w, h, true);
        for (a, b) in buf.iter().zip(&data) {
            assert!((a.re / (w * h) as f64 - b).abs() < 1e-12);
        }
    }
}
