//! Dense kernels for one sample. Feature maps are channel-major
//! `[channel][row][col]`; weights are `[out][in][row][col]`.

/// `C = A B + beta C` for row-major matrices given by (rows, cols) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds `input` into a `(in_channels * k * k) x (o * o)` patch matrix.
fn im2col(input: &[f64], in_channels: usize, size: usize, kernel: usize, col: &mut Vec<f64>) {
    let o = size - kernel + 1;
    col.resize(in_channels * kernel * kernel * o * o, 0.0);
    let mut r = 0;
    for ci in 0..in_channels {
        let in_c = &input[ci * size * size..(ci + 1) * size * size];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = &mut col[r * o * o..(r + 1) * o * o];
                for y in 0..o {
                    row[y * o..(y + 1) * o].copy_from_slice(&in_c[(y + ki) * size + kj..][..o]);
                }
                r += 1;
            }
        }
    }
}

/// Valid (unpadded) stride-1 convolution. `col` is scratch space.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward(
    input: &[f64],
    in_channels: usize,
    size: usize,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
    out: &mut [f64],
    col: &mut Vec<f64>,
) {
    let o = size - kernel + 1;
    let (p, r) = (o * o, in_channels * kernel * kernel);
    let out_channels = bias.len();
    im2col(input, in_channels, size, kernel, col);
    for (co, b) in bias.iter().enumerate() {
        out[co * p..(co + 1) * p].fill(*b);
    }
    gemm(out_channels, r, p, weights, (r, 1), col, (p, 1), 1.0, out);
}

/// Accumulates weight/bias gradients and, when `d_input` is given, writes the
/// gradient with respect to the input map. `col` and `d_col` are scratch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    input: &[f64],
    in_channels: usize,
    size: usize,
    weights: &[f64],
    kernel: usize,
    out_channels: usize,
    d_out: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    d_input: Option<&mut [f64]>,
    col: &mut Vec<f64>,
    d_col: &mut Vec<f64>,
) {
    let o = size - kernel + 1;
    let (p, r) = (o * o, in_channels * kernel * kernel);
    for (co, db) in d_bias.iter_mut().enumerate().take(out_channels) {
        *db += d_out[co * p..(co + 1) * p].iter().sum::<f64>();
    }
    im2col(input, in_channels, size, kernel, col);
    // dW += dOut . col^T
    gemm(out_channels, p, r, d_out, (p, 1), col, (1, p), 1.0, d_weights);
    let Some(d_in) = d_input else { return };
    // dCol = W^T . dOut, then fold back onto the input map.
    d_col.resize(r * p, 0.0);
    gemm(r, out_channels, p, weights, (1, r), d_out, (p, 1), 0.0, d_col);
    d_in.fill(0.0);
    let mut row_i = 0;
    for ci in 0..in_channels {
        let d_c = &mut d_in[ci * size * size..(ci + 1) * size * size];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = &d_col[row_i * p..(row_i + 1) * p];
                for y in 0..o {
                    let dst = &mut d_c[(y + ki) * size + kj..][..o];
                    for (d, g) in dst.iter_mut().zip(&row[y * o..(y + 1) * o]) {
                        *d += g;
                    }
                }
                row_i += 1;
            }
        }
    }
}

/// 2x2 stride-2 max-pooling; records the flat input index of each maximum.
/// Ties go to the first maximum in row-major order. A 1x1 map is copied.
pub(crate) fn maxpool_forward(
    input: &[f64],
    channels: usize,
    size: usize,
    out: &mut [f64],
    argmax: &mut [usize],
) {
    if size == 1 {
        out[..channels].copy_from_slice(&input[..channels]);
        for (i, a) in argmax.iter_mut().enumerate().take(channels) {
            *a = i;
        }
        return;
    }
    let p = size / 2;
    for c in 0..channels {
        let base = c * size * size;
        for py in 0..p {
            for px in 0..p {
                let mut best_idx = base + 2 * py * size + 2 * px;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * py + dy) * size + 2 * px + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                let o = (c * p + py) * p + px;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `out = W x + b` with `W` stored `[out][in]`.
pub(crate) fn fc_forward(x: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &weights[j * n_in..(j + 1) * n_in];
        *o = bias[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

pub(crate) fn fc_backward(
    x: &[f64],
    weights: &[f64],
    g: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    d_x: &mut [f64],
) {
    let n_in = x.len();
    d_x.fill(0.0);
    for (j, gj) in g.iter().enumerate() {
        d_bias[j] += gj;
        let row = &weights[j * n_in..(j + 1) * n_in];
        let d_row = &mut d_weights[j * n_in..(j + 1) * n_in];
        for i in 0..n_in {
            d_row[i] += gj * x[i];
            d_x[i] += row[i] * gj;
        }
    }
}
