//! Single-sample forward/backward kernels for the convolutional embedder.
//! Feature maps are channel-major `[channels][row][col]`.

use crate::scalar::Scalar;

/// Average-pool a square `side x side` f32 image by `factor` (floor).
pub fn stem_pool<T: Scalar>(pixels: &[f32], side: usize, factor: usize) -> Vec<T> {
    let out_side = side / factor;
    let scale = 1.0 / (factor * factor) as f64;
    let mut out = Vec::with_capacity(out_side * out_side);
    for oy in 0..out_side {
        for ox in 0..out_side {
            let mut acc = 0.0f64;
            for dy in 0..factor {
                let row = &pixels[(oy * factor + dy) * side + ox * factor..][..factor];
                acc += row.iter().map(|&p| p as f64).sum::<f64>();
            }
            out.push(T::lit(acc * scale));
        }
    }
    out
}

#[inline]
fn tap_range(side: usize, k: usize) -> (usize, usize) {
    // output positions y whose source y + k - 1 lies inside the map
    match k {
        0 => (1, side),
        1 => (0, side),
        _ => (0, side.saturating_sub(1)),
    }
}

/// 3x3 convolution, stride 1, zero padding 1.
pub fn conv3x3_forward<T: Scalar>(
    input: &[T],
    cin: usize,
    side: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
) -> Vec<T> {
    let plane = side * side;
    let mut out = vec![T::zero(); cout * plane];
    for co in 0..cout {
        let oplane = &mut out[co * plane..(co + 1) * plane];
        oplane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let iplane = &input[ci * plane..(ci + 1) * plane];
            let wk = &weight[(co * cin + ci) * 9..][..9];
            for ky in 0..3 {
                let (y0, y1) = tap_range(side, ky);
                for kx in 0..3 {
                    let (x0, x1) = tap_range(side, kx);
                    let w = wk[ky * 3 + kx];
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let orow = &mut oplane[y * side + x0..y * side + x1];
                        let irow = &iplane[sy * side + x0 + kx - 1..];
                        for (o, &i) in orow.iter_mut().zip(irow) {
                            *o += w * i;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and, when `grad_input` is given, the
/// gradient with respect to the input map.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Scalar>(
    input: &[T],
    cin: usize,
    side: usize,
    weight: &[T],
    cout: usize,
    grad_out: &[T],
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    mut grad_input: Option<&mut [T]>,
) {
    let plane = side * side;
    for co in 0..cout {
        let gplane = &grad_out[co * plane..(co + 1) * plane];
        grad_bias[co] += gplane.iter().copied().sum::<T>();
        for ci in 0..cin {
            let iplane = &input[ci * plane..(ci + 1) * plane];
            let base = (co * cin + ci) * 9;
            for ky in 0..3 {
                let (y0, y1) = tap_range(side, ky);
                for kx in 0..3 {
                    let (x0, x1) = tap_range(side, kx);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let grow = &gplane[y * side + x0..y * side + x1];
                        let irow = &iplane[sy * side + x0 + kx - 1..];
                        for (&g, &i) in grow.iter().zip(irow) {
                            acc += g * i;
                        }
                    }
                    grad_weight[base + ky * 3 + kx] += acc;
                    if let Some(gin) = grad_input.as_deref_mut() {
                        let w = weight[base + ky * 3 + kx];
                        let gin_plane = &mut gin[ci * plane..(ci + 1) * plane];
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let grow = &gplane[y * side + x0..y * side + x1];
                            let irow = &mut gin_plane[sy * side + x0 + kx - 1..];
                            for (&g, i) in grow.iter().zip(irow.iter_mut()) {
                                *i += w * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2/2 max pooling followed by ReLU. Returns the pooled map and, per
/// output cell, the winning input index when the cell is positive
/// (`u32::MAX` marks a cell the ReLU zeroed).
pub fn max_pool_relu<T: Scalar>(input: &[T], channels: usize, side: usize) -> (Vec<T>, Vec<u32>) {
    let out_side = side / 2;
    let plane = side * side;
    let mut out = Vec::with_capacity(channels * out_side * out_side);
    let mut route = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        for oy in 0..out_side {
            for ox in 0..out_side {
                let mut best_idx = c * plane + (2 * oy) * side + 2 * ox;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = c * plane + (2 * oy + dy) * side + 2 * ox + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                if best > T::zero() {
                    out.push(best);
                    route.push(best_idx as u32);
                } else {
                    out.push(T::zero());
                    route.push(u32::MAX);
                }
            }
        }
    }
    (out, route)
}

pub fn max_pool_relu_backward<T: Scalar>(grad_out: &[T], route: &[u32], input_len: usize) -> Vec<T> {
    let mut g = vec![T::zero(); input_len];
    for (&go, &r) in grad_out.iter().zip(route) {
        if r != u32::MAX {
            g[r as usize] += go;
        }
    }
    g
}

/// `y = W x + b` with `W` stored row-major `[out][in]`.
pub fn dense_forward<T: Scalar>(x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let inputs = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| b + crate::scalar::dot(&weight[o * inputs..(o + 1) * inputs], x))
        .collect()
}

/// Accumulates parameter gradients; returns `dL/dx` when requested.
pub fn dense_backward<T: Scalar>(
    x: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let inputs = x.len();
    let mut gx = want_input_grad.then(|| vec![T::zero(); inputs]);
    for (o, &g) in grad_out.iter().enumerate() {
        grad_bias[o] += g;
        if g == T::zero() {
            continue;
        }
        let gw = &mut grad_weight[o * inputs..(o + 1) * inputs];
        for (w, &xi) in gw.iter_mut().zip(x) {
            *w += g * xi;
        }
        if let Some(gx) = gx.as_mut() {
            let wrow = &weight[o * inputs..(o + 1) * inputs];
            for (gi, &w) in gx.iter_mut().zip(wrow) {
                *gi += g * w;
            }
        }
    }
    gx
}
