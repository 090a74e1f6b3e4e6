//! Raw loops shared by the tape operations.

use crate::scalar::Scalar;

/// Geometry of a stride-1 2-D convolution over `[N, C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.height + 2 * self.padding + 1 - self.kernel_h
    }

    pub fn out_w(&self) -> usize {
        self.width + 2 * self.padding + 1 - self.kernel_w
    }

    /// Rows of the unfolded input, `C * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Columns of the unfolded input, `N * out_h * out_w`.
    pub fn positions(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }
}

/// Unfold `x` into a `[C*kh*kw, N*oh*ow]` matrix.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    let cols_w = g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * cols_w];
    let pad = g.padding as isize;
    for c in 0..g.in_channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst_row = &mut cols[row * cols_w..(row + 1) * cols_w];
                for n in 0..g.batch {
                    let src = &x[(n * g.in_channels + c) * g.height * g.width..][..g.height * g.width];
                    let dst = &mut dst_row[n * plane..(n + 1) * plane];
                    for y in 0..oh {
                        let sy = y as isize + ki as isize - pad;
                        if sy < 0 || sy >= g.height as isize {
                            continue;
                        }
                        let src_row = &src[sy as usize * g.width..][..g.width];
                        let dst_line = &mut dst[y * ow..(y + 1) * ow];
                        for (xo, d) in dst_line.iter_mut().enumerate() {
                            let sx = xo as isize + kj as isize - pad;
                            if sx >= 0 && sx < g.width as isize {
                                *d = src_row[sx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add `cols` back into an `[N, C, H, W]` buffer.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    let cols_w = g.positions();
    let pad = g.padding as isize;
    for c in 0..g.in_channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src_row = &cols[row * cols_w..(row + 1) * cols_w];
                for n in 0..g.batch {
                    let dst = &mut dx[(n * g.in_channels + c) * g.height * g.width..][..g.height * g.width];
                    let src = &src_row[n * plane..(n + 1) * plane];
                    for y in 0..oh {
                        let sy = y as isize + ki as isize - pad;
                        if sy < 0 || sy >= g.height as isize {
                            continue;
                        }
                        for xo in 0..ow {
                            let sx = xo as isize + kj as isize - pad;
                            if sx >= 0 && sx < g.width as isize {
                                let d = &mut dst[sy as usize * g.width + sx as usize];
                                *d = *d + src[y * ow + xo];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for arbitrary x, c.
        let g = ConvGeom {
            batch: 2,
            in_channels: 3,
            height: 4,
            width: 5,
            out_channels: 1,
            kernel_h: 3,
            kernel_w: 3,
            padding: 1,
        };
        let x: Vec<f64> = (0..2 * 3 * 4 * 5).map(|i| (i as f64 * 0.7).sin()).collect();
        let cols = im2col(&x, &g);
        let c: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut dx = vec![0.0; x.len()];
        col2im(&c, &g, &mut dx);
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for z in [-40.0f64, -3.0, 0.0, 2.5, 600.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0f64), 0.5);
    }
}
