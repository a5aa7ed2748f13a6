//! Raw numeric kernels shared by the autodiff ops: strided GEMM and the
//! im2col/col2im pair that turns convolutions into matrix products.

use crate::tensor::Scalar;

/// Row-major `C = alpha * op(A) * op(B) + beta * C`, `op(A)` being `m x k`
/// and `op(B)` being `k x n`. `trans_a`/`trans_b` select the transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel 2-D convolution over one `C x H x W` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// `None` when the padded input is smaller than the kernel.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        if stride == 0 || height + 2 * pad < kernel || width + 2 * pad < kernel {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    // Valid output-column range [lo, hi) for kernel offset `kj` along an axis.
    #[inline]
    fn valid_range(&self, koff: usize, extent: usize, out: usize) -> (usize, usize) {
        // input = o * stride + koff - pad must lie in [0, extent)
        let lo = if koff >= self.pad {
            0
        } else {
            (self.pad - koff).div_ceil(self.stride)
        };
        let hi = if extent + self.pad > koff {
            ((extent + self.pad - koff - 1) / self.stride + 1).min(out)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

/// Unfolds `x` (`C x H x W`) into `cols` (`C*k*k x out_h*out_w`).
pub(crate) fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let k = g.kernel;
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            let (oy_lo, oy_hi) = g.valid_range(ki, g.height, g.out_h);
            for kj in 0..k {
                let (ox_lo, ox_hi) = g.valid_range(kj, g.width, g.out_w);
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                dst.fill(T::ZERO);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ki - g.pad;
                    let src = &plane[iy * g.width..(iy + 1) * g.width];
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if g.stride == 1 {
                        let ix0 = ox_lo + kj - g.pad;
                        drow[ox_lo..ox_hi].copy_from_slice(&src[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            drow[ox] = src[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `x`.
pub(crate) fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let k = g.kernel;
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            let (oy_lo, oy_hi) = g.valid_range(ki, g.height, g.out_h);
            for kj in 0..k {
                let (ox_lo, ox_hi) = g.valid_range(kj, g.width, g.out_w);
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ki - g.pad;
                    let drow = &mut plane[iy * g.width..(iy + 1) * g.width];
                    let srow = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    if g.stride == 1 {
                        let ix0 = ox_lo + kj - g.pad;
                        for (d, &s) in drow[ix0..ix0 + (ox_hi - ox_lo)]
                            .iter_mut()
                            .zip(&srow[ox_lo..ox_hi])
                        {
                            *d += s;
                        }
                    } else {
                        for ox in ox_lo..ox_hi {
                            drow[ox * g.stride + kj - g.pad] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}
