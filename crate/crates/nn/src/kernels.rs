//! Dense linear-algebra kernels shared by the layer ops.

/// `c = a·b + beta·c`, with `c` row-major `m×n`. Strides of `a` and `b`
/// are explicit so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserted extents cover every element matrixmultiply reads
    // or writes for the given dimensions and strides.
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

/// Geometry of an N-d convolution, with 2-D convs expressed as depth 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.in_ch * self.kernel.iter().product::<usize>()
    }

    pub fn col_cols(&self) -> usize {
        self.output.iter().product()
    }

    pub fn in_volume(&self) -> usize {
        self.input.iter().product()
    }
}

/// `floor((n + 2·pad − k) / stride) + 1`, or `None` when that is not ≥ 1.
pub fn conv_output_size(n: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || n + 2 * pad < kernel {
        return None;
    }
    Some((n + 2 * pad - kernel) / stride + 1)
}

#[inline]
fn source_index(o: usize, k: usize, stride: usize, pad: usize, limit: usize) -> Option<usize> {
    let i = (o * stride + k) as isize - pad as isize;
    (i >= 0 && (i as usize) < limit).then_some(i as usize)
}

/// Unfold one batch element `x` (`C × D × H × W`) into `cols`
/// (`C·Kd·Kh·Kw × Od·Oh·Ow`).
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let [id, ih, iw] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let [od, oh, ow] = g.output;
    let ncol = g.col_cols();
    let mut row = 0;
    for c in 0..g.in_ch {
        let xc = &x[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut cols[row * ncol..(row + 1) * ncol];
                    let mut idx = 0;
                    for z in 0..od {
                        let zi = source_index(z, a, sd, pd, id);
                        for y in 0..oh {
                            let yi = source_index(y, b, sh, ph, ih);
                            for xo in 0..ow {
                                let xi = source_index(xo, e, sw, pw, iw);
                                dst[idx] = match (zi, yi, xi) {
                                    (Some(zi), Some(yi), Some(xi)) => xc[(zi * ih + yi) * iw + xi],
                                    _ => 0.0,
                                };
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate `cols` back into `dx`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let [id, ih, iw] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let [od, oh, ow] = g.output;
    let ncol = g.col_cols();
    let mut row = 0;
    for c in 0..g.in_ch {
        let dxc = &mut dx[c * id * ih * iw..(c + 1) * id * ih * iw];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &cols[row * ncol..(row + 1) * ncol];
                    let mut idx = 0;
                    for z in 0..od {
                        let zi = source_index(z, a, sd, pd, id);
                        for y in 0..oh {
                            let yi = source_index(y, b, sh, ph, ih);
                            for xo in 0..ow {
                                let xi = source_index(xo, e, sw, pw, iw);
                                if let (Some(zi), Some(yi), Some(xi)) = (zi, yi, xi) {
                                    dxc[(zi * ih + yi) * iw + xi] += src[idx];
                                }
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}
