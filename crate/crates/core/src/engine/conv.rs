//! im2col lowering for convolutions, plus a thin safe wrapper over `dgemm`.

/// Spatial bookkeeping for one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    pub fn new(channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        let out_h = (in_h + 2 * pad - kernel) / stride + 1;
        let out_w = (in_w + 2 * pad - kernel) / stride + 1;
        Geometry {
            channels,
            in_h,
            in_w,
            kernel,
            stride,
            pad,
            out_h,
            out_w,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one `[C,H,W]` image into a `[C*k*k, out_h*out_w]` matrix.
pub(crate) fn im2col(image: &[f64], g: &Geometry, cols: &mut [f64]) {
    let k = g.kernel;
    let op = g.out_pixels();
    for c in 0..g.channels {
        let plane = &image[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * op;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut cols[row + oy * g.out_w..row + (oy + 1) * g.out_w];
                    if iy < 0 || iy as usize >= g.in_h {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix as usize >= g.in_w {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub(crate) fn col2im_add(cols: &[f64], g: &Geometry, image: &mut [f64]) {
    let k = g.kernel;
    let op = g.out_pixels();
    for c in 0..g.channels {
        let plane = &mut image[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * op;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.in_h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let src = &cols[row + oy * g.out_w..row + (oy + 1) * g.out_w];
                    for (ox, s) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// `c = a * b + beta * c` where `a` is `m x k`, `b` is `k x n` (given by
/// row/column strides) and `c` is a dense row-major `m x n` buffer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(m == 0 || k == 0 || (m - 1) * a_strides.0 + (k - 1) * a_strides.1 < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * b_strides.0 + (n - 1) * b_strides.1 < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
