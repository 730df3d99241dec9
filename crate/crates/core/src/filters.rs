//! Classical denoisers used for residual extraction. Borders replicate the
//! nearest edge sample.

#[inline]
fn sort2(a: &mut f64, b: &mut f64) {
    if *a > *b {
        std::mem::swap(a, b);
    }
}

/// Median of nine values with a 19-exchange network.
#[inline]
fn median9(mut p: [f64; 9]) -> f64 {
    let [p0, p1, p2, p3, p4, p5, p6, p7, p8] = &mut p;
    sort2(p1, p2);
    sort2(p4, p5);
    sort2(p7, p8);
    sort2(p0, p1);
    sort2(p3, p4);
    sort2(p6, p7);
    sort2(p1, p2);
    sort2(p4, p5);
    sort2(p7, p8);
    sort2(p0, p3);
    sort2(p5, p8);
    sort2(p4, p7);
    sort2(p3, p6);
    sort2(p1, p4);
    sort2(p2, p5);
    sort2(p4, p7);
    sort2(p4, p2);
    sort2(p6, p4);
    sort2(p4, p2);
    *p4
}

pub(crate) fn median3(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        let ys = [y.saturating_sub(1), y, (y + 1).min(height - 1)];
        for x in 0..width {
            let xs = [x.saturating_sub(1), x, (x + 1).min(width - 1)];
            let mut win = [0.0; 9];
            let mut k = 0;
            for &yy in &ys {
                let row = &data[yy * width..];
                for &xx in &xs {
                    win[k] = row[xx];
                    k += 1;
                }
            }
            out[y * width + x] = median9(win);
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub(crate) fn gaussian(data: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * data[y * width + clamp(x as isize + j as isize - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[clamp(y as isize + j as isize - r, height) * width + x])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn network_is_a_median(v in prop::array::uniform9(-100.0f64..100.0)) {
            let mut s = v;
            s.sort_by(f64::total_cmp);
            prop_assert_eq!(median9(v), s[4]);
        }
    }

    #[test]
    fn median_removes_isolated_spike() {
        let mut d = vec![0.5; 25];
        d[12] = 1.0;
        let m = median3(&d, 5, 5);
        assert!(m.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn gaussian_preserves_constants() {
        let d = vec![0.25; 64];
        for v in gaussian(&d, 8, 8, 1.3) {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }
}
