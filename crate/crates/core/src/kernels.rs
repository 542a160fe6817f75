//! Raw numeric kernels behind the autograd ops.
//!
//! Matrix products go through `matrixmultiply::sgemm`; convolution is
//! im2col + GEMM per sample. Convolution is cross-correlation (no kernel
//! flip).

use crate::parallel::{self, Execution};

/// Row-major matrix view: `rows x cols` with explicit strides.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        debug_assert!(data.len() >= rows * cols);
        Self {
            data,
            rows,
            cols,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// The transpose, without copying.
    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }
}

/// `c = a * b + beta * c`, where `c` is row-major `a.rows x b.cols`.
pub fn gemm(a: MatRef<'_>, b: MatRef<'_>, beta: f32, c: &mut [f32]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n, "gemm output too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the views were constructed over slices large enough for the
    // stated shapes and strides, and `c` holds at least m*n elements.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    /// Returns `None` when the output extent is not integral or empty.
    pub fn new(input: [usize; 4], out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Option<Self> {
        let [batch, in_channels, height, width] = input;
        let out_extent = |size: usize| {
            let padded = size + 2 * padding;
            if stride == 0 || kernel == 0 || padded < kernel || !(padded - kernel).is_multiple_of(stride) {
                None
            } else {
                Some((padded - kernel) / stride + 1)
            }
        };
        Some(Self {
            batch,
            in_channels,
            height,
            width,
            out_channels,
            kernel,
            stride,
            padding,
            out_height: out_extent(height)?,
            out_width: out_extent(width)?,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_plane(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn in_sample_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn out_sample_len(&self) -> usize {
        self.out_channels * self.out_plane()
    }

    /// Output positions `lo..hi` whose tap `t` lands inside an input axis
    /// of length `extent`.
    fn valid(&self, t: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = self.padding.saturating_sub(t).div_ceil(s);
        let hi = (extent + self.padding).saturating_sub(t).div_ceil(s);
        (lo.min(out_extent), hi.min(out_extent).max(lo.min(out_extent)))
    }
}

/// Unfolds one sample into a `patch_len x out_plane` column matrix.
pub fn im2col(geo: &ConvGeometry, sample: &[f32], cols: &mut [f32]) {
    let (k, s, p) = (geo.kernel, geo.stride, geo.padding);
    let (w, ow) = (geo.width, geo.out_width);
    let plane = geo.out_plane();
    for c in 0..geo.in_channels {
        let channel = &sample[c * geo.height * w..][..geo.height * w];
        for ki in 0..k {
            let (y_lo, y_hi) = geo.valid(ki, geo.height, geo.out_height);
            for kj in 0..k {
                let (x_lo, x_hi) = geo.valid(kj, w, ow);
                let row = &mut cols[((c * k + ki) * k + kj) * plane..][..plane];
                for oy in 0..geo.out_height {
                    let dst = &mut row[oy * ow..][..ow];
                    if oy < y_lo || oy >= y_hi {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &channel[(oy * s + ki - p) * w..][..w];
                    dst[..x_lo].fill(0.0);
                    dst[x_hi..].fill(0.0);
                    if s == 1 {
                        let x0 = x_lo + kj - p;
                        dst[x_lo..x_hi].copy_from_slice(&src[x0..x0 + (x_hi - x_lo)]);
                    } else {
                        for ox in x_lo..x_hi {
                            dst[ox] = src[ox * s + kj - p];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into a sample.
pub fn col2im(geo: &ConvGeometry, cols: &[f32], sample: &mut [f32]) {
    let (k, s, p) = (geo.kernel, geo.stride, geo.padding);
    let (w, ow) = (geo.width, geo.out_width);
    let plane = geo.out_plane();
    sample.fill(0.0);
    for c in 0..geo.in_channels {
        let channel = &mut sample[c * geo.height * w..][..geo.height * w];
        for ki in 0..k {
            let (y_lo, y_hi) = geo.valid(ki, geo.height, geo.out_height);
            for kj in 0..k {
                let (x_lo, x_hi) = geo.valid(kj, w, ow);
                let row = &cols[((c * k + ki) * k + kj) * plane..][..plane];
                for oy in y_lo..y_hi {
                    let src = &row[oy * ow..][..ow];
                    let dst = &mut channel[(oy * s + ki - p) * w..][..w];
                    if s == 1 {
                        let x0 = x_lo + kj - p;
                        let n = x_hi - x_lo;
                        dst[x0..x0 + n]
                            .iter_mut()
                            .zip(&src[x_lo..x_hi])
                            .for_each(|(d, v)| *d += v);
                    } else {
                        for ox in x_lo..x_hi {
                            dst[ox * s + kj - p] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(exec: Execution, geo: &ConvGeometry, input: &[f32], kernel: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; geo.batch * geo.out_sample_len()];
    let weights = MatRef::new(kernel, geo.out_channels, geo.patch_len());
    parallel::for_each_chunk_mut(exec, &mut out, geo.out_sample_len(), |b, dst| {
        let mut cols = vec![0.0f32; geo.patch_len() * geo.out_plane()];
        im2col(geo, &input[b * geo.in_sample_len()..][..geo.in_sample_len()], &mut cols);
        gemm(weights, MatRef::new(&cols, geo.patch_len(), geo.out_plane()), 0.0, dst);
    });
    out
}

/// Returns `(grad_input, grad_kernel)`; either may be skipped.
pub fn conv2d_backward(
    exec: Execution,
    geo: &ConvGeometry,
    input: &[f32],
    kernel: &[f32],
    grad_out: &[f32],
    want_input: bool,
    want_kernel: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let weights = MatRef::new(kernel, geo.out_channels, geo.patch_len());
    let kernel_len = geo.out_channels * geo.patch_len();
    let per_sample = parallel::map_collect(exec, geo.batch, |b| {
        let g = MatRef::new(
            &grad_out[b * geo.out_sample_len()..][..geo.out_sample_len()],
            geo.out_channels,
            geo.out_plane(),
        );
        let mut cols = vec![0.0f32; geo.patch_len() * geo.out_plane()];
        let gk = want_kernel.then(|| {
            im2col(geo, &input[b * geo.in_sample_len()..][..geo.in_sample_len()], &mut cols);
            let mut gk = vec![0.0f32; kernel_len];
            gemm(
                g,
                MatRef::new(&cols, geo.patch_len(), geo.out_plane()).t(),
                0.0,
                &mut gk,
            );
            gk
        });
        let gx = want_input.then(|| {
            gemm(weights.t(), g, 0.0, &mut cols);
            let mut gx = vec![0.0f32; geo.in_sample_len()];
            col2im(geo, &cols, &mut gx);
            gx
        });
        (gx, gk)
    });

    let mut grad_input = want_input.then(|| Vec::with_capacity(geo.batch * geo.in_sample_len()));
    let mut grad_kernel = want_kernel.then(|| vec![0.0f32; kernel_len]);
    // Fixed-order reduction keeps both execution modes bit-identical.
    for (gx, gk) in per_sample {
        if let (Some(acc), Some(gx)) = (grad_input.as_mut(), gx) {
            acc.extend_from_slice(&gx);
        }
        if let (Some(acc), Some(gk)) = (grad_kernel.as_mut(), gk) {
            acc.iter_mut().zip(&gk).for_each(|(a, b)| *a += b);
        }
    }
    (grad_input, grad_kernel)
}
