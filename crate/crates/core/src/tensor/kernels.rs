use super::Scalar;

/// Geometry of a 2-d cross-correlation over a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output columns `[lo, hi)` whose input column `ox*stride + k - pad` lies
/// inside `0..len`.
fn valid_range(out: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if len + pad > k { (len + pad - k).div_ceil(stride).min(out) } else { 0 };
    (lo.min(hi), hi)
}

/// Unfolds one `C x H x W` sample into a `(C*kh*kw) x (H'*W')` column
/// matrix whose rows sit `ld` elements apart.
pub(crate) fn im2col<T: Scalar>(input: &[T], g: &ConvGeometry, cols: &mut [T], ld: usize) {
    let positions = g.positions();
    let (pad, s) = (g.padding, g.stride);
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let dst = &mut cols[row * ld..row * ld + positions];
                let (lo, hi) = valid_range(g.out_w, g.width, kx, s, pad);
                for oy in 0..g.out_h {
                    let dst_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    let iy = oy * s + ky;
                    if iy < pad || iy - pad >= g.height {
                        dst_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(iy - pad) * g.width..(iy - pad + 1) * g.width];
                    dst_row[..lo].fill(T::zero());
                    dst_row[hi..].fill(T::zero());
                    if lo < hi {
                        let first = lo * s + kx - pad;
                        if s == 1 {
                            dst_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (i, v) in dst_row[lo..hi].iter_mut().enumerate() {
                                *v = src[first + i * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the sample.
pub(crate) fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeometry, grad_input: &mut [T], ld: usize) {
    let positions = g.positions();
    let (pad, s) = (g.padding, g.stride);
    for c in 0..g.channels {
        let plane = &mut grad_input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src = &cols[row * ld..row * ld + positions];
                let (lo, hi) = valid_range(g.out_w, g.width, kx, s, pad);
                if lo >= hi {
                    continue;
                }
                let first = lo * s + kx - pad;
                for oy in 0..g.out_h {
                    let iy = oy * s + ky;
                    if iy < pad || iy - pad >= g.height {
                        continue;
                    }
                    let dst = &mut plane[(iy - pad) * g.width..(iy - pad + 1) * g.width];
                    let src_row = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    if s == 1 {
                        add_into(&mut dst[first..first + hi - lo], src_row);
                    } else {
                        for (i, &v) in src_row.iter().enumerate() {
                            dst[first + i * s] = dst[first + i * s] + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn add_into<T: Scalar>(acc: &mut [T], src: &[T]) {
    for (a, &s) in acc.iter_mut().zip(src) {
        *a = *a + s;
    }
}
