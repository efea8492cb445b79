//! Direct 3×3 convolution kernels on zero-padded `[c, h + 2, w + 2]` planes.
//!
//! The forward kernel keeps a tile of 8 output channels × 8 pixels in
//! registers and streams the `c_in·9` taps past it, so weights are stored
//! tap-major as `[c_in·9, c_out]`. Multiplies and adds are kept separate
//! (no fused multiply-add), so results do not depend on the vector width the
//! compiler picks.

/// Pixels per register tile.
const PX: usize = 8;

/// Copy `[c, h, w]` into a zero border of one pixel.
pub(crate) fn pad(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2, w + 2);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        for y in 0..h {
            out[ch * hp * wp + (y + 1) * wp + 1..][..w]
                .copy_from_slice(&input[(ch * h + y) * w..][..w]);
        }
    }
    out
}

/// Offsets of the `c·9` taps of pixel (0, 0) inside a padded plane stack.
fn tap_offsets(c: usize, h: usize, w: usize) -> Vec<usize> {
    let (hp, wp) = (h + 2, w + 2);
    (0..c)
        .flat_map(|ch| (0..9).map(move |t| ch * hp * wp + (t / 3) * wp + t % 3))
        .collect()
}

/// `[c_out, c_in·9]` weights to the tap-major `[c_in·9, c_out]` layout.
pub(crate) fn tap_major(weights: &[f64], c_out: usize, taps: usize) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    for o in 0..c_out {
        for k in 0..taps {
            out[k * c_out + o] = weights[o * taps + k];
        }
    }
    out
}

/// Tap-major weights of the adjoint convolution: input and output channels
/// swapped and the kernel rotated by 180°.
pub(crate) fn adjoint_tap_major(weights: &[f64], c_out: usize, c_in: usize) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    for o in 0..c_out {
        for c in 0..c_in {
            for t in 0..9 {
                out[(o * 9 + 8 - t) * c_in + c] = weights[(o * c_in + c) * 9 + t];
            }
        }
    }
    out
}

/// Output channels per register tile.
const CO: usize = 8;

#[inline(always)]
fn tile(padded: &[f64], offsets: &[usize], taps: &[[f64; CO]], start: usize, acc: &mut [[f64; PX]; CO]) {
    for (&off, wk) in offsets.iter().zip(taps) {
        let src: &[f64; PX] = padded[start + off..start + off + PX].try_into().unwrap();
        for o in 0..CO {
            for l in 0..PX {
                acc[o][l] += wk[o] * src[l];
            }
        }
    }
}

/// Output channels `o0..o0 + CO` on all full pixel tiles.
#[allow(clippy::too_many_arguments)]
fn conv_group(
    padded: &[f64],
    offsets: &[usize],
    taps: &[f64],
    bias: &[f64],
    o0: usize,
    h: usize,
    w: usize,
    out: &mut [f64],
) {
    let wp = w + 2;
    let c_out = bias.len();
    let taps: Vec<[f64; CO]> =
        taps.chunks_exact(c_out).map(|k| k[o0..o0 + CO].try_into().unwrap()).collect();
    for y in 0..h {
        for x in (0..w / PX).map(|t| t * PX) {
            let mut acc = [[0.0; PX]; CO];
            for (a, &b) in acc.iter_mut().zip(&bias[o0..]) {
                *a = [b; PX];
            }
            tile(padded, offsets, &taps, y * wp + x, &mut acc);
            for (o, a) in acc.iter().enumerate() {
                out[((o0 + o) * h + y) * w + x..][..PX].copy_from_slice(a);
            }
        }
    }
}

/// One output pixel for channels `o_range`.
#[allow(clippy::too_many_arguments)]
fn conv_pixel(
    padded: &[f64],
    offsets: &[usize],
    taps: &[f64],
    bias: &[f64],
    o_range: std::ops::Range<usize>,
    start: usize,
    (at, plane): (usize, usize),
    out: &mut [f64],
) {
    let co = bias.len();
    for o in o_range {
        let mut acc = bias[o];
        for (k, &off) in offsets.iter().enumerate() {
            acc += taps[k * co + o] * padded[start + off];
        }
        out[o * plane + at] = acc;
    }
}

/// `out[c_out, h, w] = bias + Σ taps · padded`, zero-padded 3×3 correlation.
pub(crate) fn conv3x3(
    padded: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    taps: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let c_out = bias.len();
    debug_assert_eq!(padded.len(), c_in * (h + 2) * (w + 2));
    debug_assert_eq!(taps.len(), c_in * 9 * c_out);
    debug_assert_eq!(out.len(), c_out * h * w);
    let offsets = tap_offsets(c_in, h, w);
    let grouped = c_out / CO * CO;
    for o0 in (0..grouped).step_by(CO) {
        conv_group(padded, &offsets, taps, bias, o0, h, w, out);
    }
    let wp = w + 2;
    let full = w / PX * PX;
    for y in 0..h {
        for x in 0..w {
            let o_range = if x < full { grouped..c_out } else { 0..c_out };
            if !o_range.is_empty() {
                conv_pixel(padded, &offsets, taps, bias, o_range, y * wp + x, (y * w + x, h * w), out);
            }
        }
    }
}

/// Weight and bias gradient of [`conv3x3`]: adds
/// `Σ_p d_out[o, p] · padded[tap k of p]` into `d_taps[o·c_in·9 + k]` (the
/// `[c_out, c_in·9]` layout) and `Σ_p d_out[o, p]` into `d_bias[o]`.
pub(crate) fn conv3x3_weight_grad(
    padded: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    d_out: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
) {
    let c_out = d_bias.len();
    let offsets = tap_offsets(c_in, h, w);
    let taps = offsets.len();
    let mut add = |o0: usize, k0: usize, block: &[&[f64]]| {
        for (dk, row) in block.iter().enumerate() {
            for (o, v) in row.iter().enumerate() {
                d_weights[(o0 + o) * taps + k0 + dk] += v;
            }
        }
    };
    let grouped = c_out / CO * CO;
    let pairs = taps / 2 * 2;
    for o0 in (0..grouped).step_by(CO) {
        for k0 in (0..pairs).step_by(2) {
            let r = dot_block::<2, CO>(padded, [offsets[k0], offsets[k0 + 1]], d_out, o0, h, w);
            add(o0, k0, &[&r[0], &r[1]]);
        }
        for k0 in pairs..taps {
            let r = dot_block::<1, CO>(padded, [offsets[k0]], d_out, o0, h, w);
            add(o0, k0, &[&r[0]]);
        }
    }
    for o0 in grouped..c_out {
        for (k0, &off) in offsets.iter().enumerate() {
            let r = dot_block::<1, 1>(padded, [off], d_out, o0, h, w);
            add(o0, k0, &[&r[0]]);
        }
    }
    for (o, b) in d_bias.iter_mut().enumerate() {
        *b += lane_sum(&d_out[o * h * w..(o + 1) * h * w]);
    }
}

/// `Σ_p padded[offs[k] + p] · d_out[o0 + o, p]` for `NK` taps × `NO` output
/// channels. Each sum uses the same eight lanes plus a scalar tail whatever
/// the block shape.
fn dot_block<const NK: usize, const NO: usize>(
    padded: &[f64],
    offs: [usize; NK],
    d_out: &[f64],
    o0: usize,
    h: usize,
    w: usize,
) -> [[f64; NO]; NK] {
    let wp = w + 2;
    let full = w / PX * PX;
    let mut lanes = [[[0.0; PX]; NO]; NK];
    let mut tails = [[0.0; NO]; NK];
    for y in 0..h {
        for x in (0..full).step_by(PX) {
            let s: [&[f64; PX]; NK] =
                offs.map(|off| padded[off + y * wp + x..][..PX].try_into().unwrap());
            for o in 0..NO {
                let d: &[f64; PX] = d_out[((o0 + o) * h + y) * w + x..][..PX].try_into().unwrap();
                for k in 0..NK {
                    for l in 0..PX {
                        lanes[k][o][l] += s[k][l] * d[l];
                    }
                }
            }
        }
        for x in full..w {
            for k in 0..NK {
                for o in 0..NO {
                    tails[k][o] += padded[offs[k] + y * wp + x] * d_out[((o0 + o) * h + y) * w + x];
                }
            }
        }
    }
    let mut out = [[0.0; NO]; NK];
    for k in 0..NK {
        for o in 0..NO {
            out[k][o] = lanes[k][o].iter().sum::<f64>() + tails[k][o];
        }
    }
    out
}

/// Sum with eight independent partial sums, combined in a fixed order.
pub(crate) fn lane_sum(v: &[f64]) -> f64 {
    let mut lanes = [0.0; PX];
    let chunks = v.chunks_exact(PX);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for l in 0..PX {
            lanes[l] += c[l];
        }
    }
    lanes.iter().sum::<f64>() + tail
}
