//! Layer primitives: 3x3 convolutions (as im2col + GEMM), their exact
//! adjoints, and 2x nearest-neighbor upsampling.
//!
//! All convs use padding 1. Stride 2 halves the side (sides are even by
//! architecture validation); stride 1 preserves it.

use super::{ConvLayer, LayerGrads, Real, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Activation {
    Relu,
    Sigmoid,
}

/// Unrolls 3x3 patches into a `(in_c * 9) x (o * o)` row-major matrix, where
/// `o = side / stride`. Out-of-image taps are zero.
pub(crate) fn im2col<T: Real>(input: &[T], in_c: usize, side: usize, stride: usize, cols: &mut [T]) {
    let o = side / stride;
    let p = o * o;
    debug_assert_eq!(input.len(), in_c * side * side);
    debug_assert_eq!(cols.len(), in_c * 9 * p);
    for ic in 0..in_c {
        let plane = &input[ic * side * side..][..side * side];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ic * 3 + ky) * 3 + kx;
                let dst = &mut cols[row * p..][..p];
                for oy in 0..o {
                    let iy = (oy * stride + ky) as isize - 1;
                    let drow = &mut dst[oy * o..][..o];
                    if iy < 0 || iy >= side as isize {
                        drow.fill(T::ZERO);
                        continue;
                    }
                    let srow = &plane[iy as usize * side..][..side];
                    if stride == 1 {
                        match kx {
                            0 => {
                                drow[0] = T::ZERO;
                                drow[1..].copy_from_slice(&srow[..o - 1]);
                            }
                            1 => drow.copy_from_slice(srow),
                            _ => {
                                drow[..o - 1].copy_from_slice(&srow[1..]);
                                drow[o - 1] = T::ZERO;
                            }
                        }
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            *d = if ix < 0 || ix >= side as isize {
                                T::ZERO
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch-matrix gradient back onto the
/// input plane, accumulating where patches overlap. Zeroes `d_input` first.
pub(crate) fn col2im<T: Real>(cols: &[T], in_c: usize, side: usize, stride: usize, d_input: &mut [T]) {
    let o = side / stride;
    let p = o * o;
    debug_assert_eq!(d_input.len(), in_c * side * side);
    d_input.fill(T::ZERO);
    for ic in 0..in_c {
        let plane = &mut d_input[ic * side * side..][..side * side];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ic * 3 + ky) * 3 + kx;
                let src = &cols[row * p..][..p];
                for oy in 0..o {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    let prow = &mut plane[iy as usize * side..][..side];
                    let srow = &src[oy * o..][..o];
                    for (ox, &v) in srow.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < side as isize {
                            prow[ix as usize] = prow[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

/// Forward conv: `out = act(W @ im2col(input) + bias)`, with `out` holding
/// the post-activation values and `cols` left holding the patch matrix for
/// the backward pass.
pub(crate) fn conv_forward<T: Real>(
    layer: &ConvLayer<T>,
    st: Stage,
    input: &[T],
    cols: &mut [T],
    out: &mut [T],
    activation: Activation,
) {
    let o = st.out_side();
    let p = o * o;
    let k = st.in_c * 9;
    debug_assert_eq!(out.len(), st.out_c * p);
    im2col(input, st.in_c, st.in_side, st.stride, cols);
    T::gemm(
        st.out_c,
        k,
        p,
        T::ONE,
        &layer.weights,
        k as isize,
        1,
        cols,
        p as isize,
        1,
        T::ZERO,
        out,
        p as isize,
        1,
    );
    for oc in 0..st.out_c {
        let b = layer.bias[oc];
        let row = &mut out[oc * p..][..p];
        match activation {
            Activation::Relu => {
                for v in row.iter_mut() {
                    *v = (*v + b).maximum(T::ZERO);
                }
            }
            Activation::Sigmoid => {
                for v in row.iter_mut() {
                    *v = T::ONE / (T::ONE + (-(*v + b)).exp());
                }
            }
        }
    }
}

/// Backward conv. On entry `d_out` holds the gradient w.r.t. the
/// post-activation output and `cols` still holds the forward patch matrix.
///
/// Accumulates into `grads` (callers zero it per batch), and if `d_input`
/// is given, fills it with the gradient w.r.t. the conv input. `d_out` is
/// rewritten in place to the pre-activation gradient, and `cols` is
/// consumed as scratch.
pub(crate) fn conv_backward<T: Real>(
    layer: &ConvLayer<T>,
    st: Stage,
    cols: &mut [T],
    out_post: &[T],
    d_out: &mut [T],
    grads: &mut LayerGrads<T>,
    d_input: Option<&mut [T]>,
    activation: Activation,
) {
    let o = st.out_side();
    let p = o * o;
    let k = st.in_c * 9;

    // dz = d_out * act'(z), expressed through the saved post-activation
    // values: relu' = [y > 0], sigmoid' = y * (1 - y).
    match activation {
        Activation::Relu => {
            for (d, &y) in d_out.iter_mut().zip(out_post) {
                if !(y > T::ZERO) {
                    *d = T::ZERO;
                }
            }
        }
        Activation::Sigmoid => {
            for (d, &y) in d_out.iter_mut().zip(out_post) {
                *d = *d * y * (T::ONE - y);
            }
        }
    }

    for oc in 0..st.out_c {
        let mut acc = T::ZERO;
        for &d in &d_out[oc * p..][..p] {
            acc = acc + d;
        }
        grads.db[oc] = grads.db[oc] + acc;
    }

    // dW += dz @ cols^T  (out_c x p) @ (p x k)
    T::gemm(
        st.out_c,
        p,
        k,
        T::ONE,
        d_out,
        p as isize,
        1,
        cols,
        1,
        p as isize,
        T::ONE,
        &mut grads.dw,
        k as isize,
        1,
    );

    if let Some(d_input) = d_input {
        // dcols = W^T @ dz  (k x out_c) @ (out_c x p), overwriting `cols`;
        // the weight matrix is addressed transposed via swapped strides.
        let dw_done = cols;
        T::gemm(
            k,
            st.out_c,
            p,
            T::ONE,
            &layer.weights,
            1,
            k as isize,
            d_out,
            p as isize,
            1,
            T::ZERO,
            dw_done,
            p as isize,
            1,
        );
        col2im(dw_done, st.in_c, st.in_side, st.stride, d_input);
    }
}

/// Nearest-neighbor 2x upsample: each source pixel becomes a 2x2 block.
pub(crate) fn upsample2<T: Real>(src: &[T], channels: usize, side: usize, dst: &mut [T]) {
    let o = side * 2;
    debug_assert_eq!(src.len(), channels * side * side);
    debug_assert_eq!(dst.len(), channels * o * o);
    for ch in 0..channels {
        let sp = &src[ch * side * side..][..side * side];
        let dp = &mut dst[ch * o * o..][..o * o];
        for y in 0..side {
            let srow = &sp[y * side..][..side];
            let top = 2 * y * o;
            for (x, &v) in srow.iter().enumerate() {
                dp[top + 2 * x] = v;
                dp[top + 2 * x + 1] = v;
            }
            let (head, tail) = dp.split_at_mut(top + o);
            tail[..o].copy_from_slice(&head[top..top + o]);
        }
    }
}

/// Adjoint of [`upsample2`]: sums each 2x2 block back onto its source pixel.
pub(crate) fn upsample2_backward<T: Real>(d_up: &[T], channels: usize, side: usize, d_src: &mut [T]) {
    let o = side * 2;
    debug_assert_eq!(d_up.len(), channels * o * o);
    debug_assert_eq!(d_src.len(), channels * side * side);
    for ch in 0..channels {
        let dp = &d_up[ch * o * o..][..o * o];
        let sp = &mut d_src[ch * side * side..][..side * side];
        for y in 0..side {
            let r0 = &dp[2 * y * o..][..o];
            let r1 = &dp[(2 * y + 1) * o..][..o];
            let srow = &mut sp[y * side..][..side];
            for x in 0..side {
                srow[x] = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn rand_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
    }

    /// Straight-line reference conv, no im2col, no GEMM.
    fn naive_conv(
        layer: &ConvLayer<f64>,
        st: Stage,
        input: &[f64],
        activation: Activation,
    ) -> Vec<f64> {
        let side = st.in_side;
        let o = st.out_side();
        let mut out = vec![0.0; st.out_c * o * o];
        for oc in 0..st.out_c {
            for oy in 0..o {
                for ox in 0..o {
                    let mut acc = layer.bias[oc];
                    for ic in 0..st.in_c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * st.stride + ky) as isize - 1;
                                let ix = (ox * st.stride + kx) as isize - 1;
                                if iy < 0 || iy >= side as isize || ix < 0 || ix >= side as isize {
                                    continue;
                                }
                                let w = layer.weights[((oc * st.in_c + ic) * 3 + ky) * 3 + kx];
                                acc += w * input[(ic * side + iy as usize) * side + ix as usize];
                            }
                        }
                    }
                    out[(oc * o + oy) * o + ox] = match activation {
                        Activation::Relu => acc.max(0.0),
                        Activation::Sigmoid => 1.0 / (1.0 + (-acc).exp()),
                    };
                }
            }
        }
        out
    }

    fn random_layer(rng: &mut SplitMix64, st: Stage) -> ConvLayer<f64> {
        ConvLayer {
            in_c: st.in_c,
            out_c: st.out_c,
            weights: rand_vec(rng, st.out_c * st.in_c * 9),
            bias: rand_vec(rng, st.out_c),
        }
    }

    #[test]
    fn gemm_conv_matches_naive_conv_for_both_strides() {
        let mut rng = SplitMix64::new(17);
        for (stride, side) in [(1usize, 6usize), (2, 6), (1, 8), (2, 10)] {
            for (in_c, out_c) in [(1usize, 2usize), (3, 4), (2, 1)] {
                let st = Stage { in_c, out_c, in_side: side, stride };
                let layer = random_layer(&mut rng, st);
                let input = rand_vec(&mut rng, in_c * side * side);
                for activation in [Activation::Relu, Activation::Sigmoid] {
                    let o = st.out_side();
                    let mut cols = vec![0.0; in_c * 9 * o * o];
                    let mut out = vec![0.0; out_c * o * o];
                    conv_forward(&layer, st, &input, &mut cols, &mut out, activation);
                    let want = naive_conv(&layer, st, &input, activation);
                    for (a, b) in out.iter().zip(&want) {
                        assert!((a - b).abs() < 1e-12, "stride {stride}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), r> must equal <x, col2im(r)> for any x, r: the two
        // routines are transposes of the same linear map.
        let mut rng = SplitMix64::new(23);
        for stride in [1usize, 2] {
            let (in_c, side) = (3usize, 8usize);
            let o = side / stride;
            let x = rand_vec(&mut rng, in_c * side * side);
            let r = rand_vec(&mut rng, in_c * 9 * o * o);
            let mut cols = vec![0.0; r.len()];
            im2col(&x, in_c, side, stride, &mut cols);
            let lhs: f64 = cols.iter().zip(&r).map(|(a, b)| a * b).sum();
            let mut back = vec![0.0; x.len()];
            col2im(&r, in_c, side, stride, &mut back);
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "stride {stride}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn upsample_doubles_blocks_and_backward_is_its_adjoint() {
        let src = vec![1.0f64, 2.0, 3.0, 4.0];
        let mut up = vec![0.0; 16];
        upsample2(&src, 1, 2, &mut up);
        #[rustfmt::skip]
        let want = [
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(up, want);

        let mut rng = SplitMix64::new(31);
        let x = rand_vec(&mut rng, 2 * 9);
        let g = rand_vec(&mut rng, 2 * 36);
        let mut up = vec![0.0; 2 * 36];
        upsample2(&x, 2, 3, &mut up);
        let lhs: f64 = up.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; 2 * 9];
        upsample2_backward(&g, 2, 3, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        // Scalar objective J = sum(g * y) with fixed random g; analytic
        // gradients from conv_backward vs central differences on J.
        let mut rng = SplitMix64::new(41);
        for stride in [1usize, 2] {
            for activation in [Activation::Relu, Activation::Sigmoid] {
                let st = Stage { in_c: 2, out_c: 3, in_side: 6, stride };
                let layer = random_layer(&mut rng, st);
                let input = rand_vec(&mut rng, st.in_c * 36);
                let o = st.out_side();
                let p = o * o;
                let g = rand_vec(&mut rng, st.out_c * p);

                let eval = |layer: &ConvLayer<f64>, input: &[f64]| -> (Vec<f64>, f64) {
                    let mut cols = vec![0.0; st.in_c * 9 * p];
                    let mut out = vec![0.0; st.out_c * p];
                    conv_forward(layer, st, input, &mut cols, &mut out, activation);
                    let j = out.iter().zip(&g).map(|(a, b)| a * b).sum();
                    (out, j)
                };

                let (out, _) = eval(&layer, &input);
                let mut cols = vec![0.0; st.in_c * 9 * p];
                im2col(&input, st.in_c, st.in_side, st.stride, &mut cols);
                let mut grads = LayerGrads {
                    dw: vec![0.0; layer.weights.len()],
                    db: vec![0.0; layer.bias.len()],
                };
                let mut d_out = g.clone();
                let mut d_input = vec![0.0; input.len()];
                conv_backward(
                    &layer,
                    st,
                    &mut cols,
                    &out,
                    &mut d_out,
                    &mut grads,
                    Some(&mut d_input),
                    activation,
                );

                let h = 1e-6;
                // Weights: spot-check a spread of components.
                for idx in (0..layer.weights.len()).step_by(7) {
                    let mut lp = layer.clone();
                    lp.weights[idx] += h;
                    let mut lm = layer.clone();
                    lm.weights[idx] -= h;
                    let fd = (eval(&lp, &input).1 - eval(&lm, &input).1) / (2.0 * h);
                    let a = grads.dw[idx];
                    assert!(
                        (a - fd).abs() <= 1e-7 * a.abs().max(fd.abs()).max(1.0),
                        "dW[{idx}] stride {stride} {activation:?}: {a} vs {fd}"
                    );
                }
                for idx in 0..layer.bias.len() {
                    let mut lp = layer.clone();
                    lp.bias[idx] += h;
                    let mut lm = layer.clone();
                    lm.bias[idx] -= h;
                    let fd = (eval(&lp, &input).1 - eval(&lm, &input).1) / (2.0 * h);
                    let a = grads.db[idx];
                    assert!((a - fd).abs() <= 1e-7 * a.abs().max(fd.abs()).max(1.0));
                }
                for idx in (0..input.len()).step_by(5) {
                    let mut ip = input.clone();
                    ip[idx] += h;
                    let mut im = input.clone();
                    im[idx] -= h;
                    let fd = (eval(&layer, &ip).1 - eval(&layer, &im).1) / (2.0 * h);
                    let a = d_input[idx];
                    assert!(
                        (a - fd).abs() <= 1e-7 * a.abs().max(fd.abs()).max(1.0),
                        "dX[{idx}] stride {stride} {activation:?}: {a} vs {fd}"
                    );
                }
            }
        }
    }
}
