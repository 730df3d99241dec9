//! Separable plane resampling.
//!
//! The bilinear kernel is a triangle over pixel centers. In antialiased mode
//! its support widens with the reduction factor when shrinking, so every
//! input sample contributes; otherwise it stays two taps wide.

/// Per-output-sample tap lists: `(input index, weight)`.
fn triangle_taps(n_in: usize, n_out: usize, antialias: bool) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    let support = if antialias { scale.max(1.0) } else { 1.0 };
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for j in lo..=hi {
                let w = 1.0 - ((j as f64 + 0.5 - center) / support).abs();
                if w <= 0.0 {
                    continue;
                }
                let idx = j.clamp(0, n_in as isize - 1) as usize;
                match taps.iter_mut().find(|(i, _)| *i == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

fn box_taps(n_in: usize, factor: usize) -> Vec<Vec<(usize, f64)>> {
    let w = 1.0 / factor as f64;
    (0..n_in / factor)
        .map(|o| (o * factor..(o + 1) * factor).map(|i| (i, w)).collect())
        .collect()
}

fn apply_separable(
    plane: &[f64],
    width: usize,
    height: usize,
    xtaps: &[Vec<(usize, f64)>],
    ytaps: &[Vec<(usize, f64)>],
) -> Vec<f64> {
    let new_w = xtaps.len();
    let new_h = ytaps.len();
    let mut tmp = vec![0.0; new_w * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for (x, taps) in xtaps.iter().enumerate() {
            tmp[y * new_w + x] = taps.iter().map(|&(i, w)| w * row[i]).sum();
        }
    }
    let mut out = vec![0.0; new_w * new_h];
    for (y, taps) in ytaps.iter().enumerate() {
        for x in 0..new_w {
            out[y * new_w + x] = taps.iter().map(|&(i, w)| w * tmp[i * new_w + x]).sum();
        }
    }
    out
}

/// Bilinear resize of one plane to `new_w`×`new_h`. With `antialias`, the
/// kernel widens by the reduction factor when shrinking; without it every
/// output sample interpolates its two nearest inputs per axis.
pub(crate) fn bilinear(plane: &[f64], width: usize, height: usize, new_w: usize, new_h: usize, antialias: bool) -> Vec<f64> {
    apply_separable(
        plane,
        width,
        height,
        &triangle_taps(width, new_w, antialias),
        &triangle_taps(height, new_h, antialias),
    )
}

/// Mean over non-overlapping `factor`×`factor` blocks. Dimensions must be
/// multiples of `factor`.
pub(crate) fn box_down(plane: &[f64], width: usize, height: usize, factor: usize) -> Vec<f64> {
    apply_separable(plane, width, height, &box_taps(width, factor), &box_taps(height, factor))
}

/// Nearest-neighbour (pixel replication) upscale by an integer factor.
pub(crate) fn nearest_up(plane: &[f64], width: usize, height: usize, factor: usize) -> Vec<f64> {
    let new_w = width * factor;
    let mut out = Vec::with_capacity(new_w * height * factor);
    for y in 0..height * factor {
        let row = &plane[(y / factor) * width..];
        out.extend((0..new_w).map(|x| row[x / factor]));
    }
    out
}
