use super::{FlowError, GrayImage};
use crate::Scalar;

/// Local fit `f(p) ≈ pᵀ A p + bᵀ p + c` around one pixel, with `p` the
/// offset from the pixel in (x, y) order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quadratic<T> {
    pub a11: T,
    pub a12: T,
    pub a22: T,
    pub b1: T,
    pub b2: T,
    pub c: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpansion<T> {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<Quadratic<T>>,
}

impl<T: Scalar> PolyExpansion<T> {
    pub fn get(&self, x: usize, y: usize) -> Quadratic<T> {
        self.coeffs[y * self.width + x]
    }
}

/// Gaussian-weighted least-squares quadratic fit over a `poly_n`×`poly_n`
/// window at every pixel. Pixels closer than `poly_n / 2` to the border copy
/// the coefficients of the nearest interior pixel.
pub fn polynomial_expansion<T: Scalar>(
    img: &GrayImage<T>,
    poly_n: usize,
    poly_sigma: T,
) -> Result<PolyExpansion<T>, FlowError> {
    if poly_n == 0 || poly_n % 2 == 0 || !(poly_sigma > T::zero()) {
        return Err(FlowError::InvalidParams(format!(
            "expansion window {poly_n} with sigma {poly_sigma}"
        )));
    }
    expand(img.width(), img.height(), img.data(), poly_n, poly_sigma)
}

/// Basis order: 1, x, y, x², y², xy.
const BASIS: usize = 6;

pub(super) fn expand<T: Scalar>(
    width: usize,
    height: usize,
    data: &[T],
    poly_n: usize,
    poly_sigma: T,
) -> Result<PolyExpansion<T>, FlowError> {
    if width < poly_n || height < poly_n {
        return Err(FlowError::TooSmall { width, height, poly_n });
    }
    let r = poly_n / 2;
    let sigma = poly_sigma.to_f64_lossy();
    let offsets: Vec<f64> = (0..poly_n).map(|i| i as f64 - r as f64).collect();
    let g: Vec<f64> = offsets.iter().map(|o| (-o * o / (2.0 * sigma * sigma)).exp()).collect();
    let ginv = invert_normal_matrix(&offsets, &g);
    let ginv: Vec<[T; BASIS]> = ginv.iter().map(|row| row.map(T::lit)).collect();
    let gt: Vec<T> = g.iter().map(|&v| T::lit(v)).collect();
    let ot: Vec<T> = offsets.iter().map(|&v| T::lit(v)).collect();

    // horizontal moments of order 0, 1, 2 at interior columns
    let mut rows = vec![[T::zero(); 3]; width * height];
    for y in 0..height {
        let line = &data[y * width..(y + 1) * width];
        for x in r..width - r {
            let mut m = [T::zero(); 3];
            for k in 0..poly_n {
                let v = gt[k] * line[x + k - r];
                m[0] += v;
                m[1] += v * ot[k];
                m[2] += v * ot[k] * ot[k];
            }
            rows[y * width + x] = m;
        }
    }

    let mut coeffs = vec![Quadratic::default(); width * height];
    for y in r..height - r {
        for x in r..width - r {
            // S = (m00, m10, m01, m20, m02, m11), first index horizontal
            let mut s = [T::zero(); BASIS];
            for k in 0..poly_n {
                let h = rows[(y + k - r) * width + x];
                let w = gt[k];
                let o = ot[k];
                s[0] += w * h[0];
                s[1] += w * h[1];
                s[2] += w * o * h[0];
                s[3] += w * h[2];
                s[4] += w * o * o * h[0];
                s[5] += w * o * h[1];
            }
            let mut rc = [T::zero(); BASIS];
            for (i, row) in ginv.iter().enumerate() {
                rc[i] = row.iter().zip(&s).map(|(&a, &b)| a * b).sum();
            }
            coeffs[y * width + x] = Quadratic {
                c: rc[0],
                b1: rc[1],
                b2: rc[2],
                a11: rc[3],
                a22: rc[4],
                a12: rc[5] / T::lit(2.0),
            };
        }
    }
    for y in 0..height {
        let sy = y.clamp(r, height - 1 - r);
        for x in 0..width {
            let sx = x.clamp(r, width - 1 - r);
            if sx != x || sy != y {
                coeffs[y * width + x] = coeffs[sy * width + sx];
            }
        }
    }
    Ok(PolyExpansion { width, height, coeffs })
}

/// Inverse of the weighted Gram matrix of the quadratic basis over the
/// separable window.
fn invert_normal_matrix(offsets: &[f64], g: &[f64]) -> [[f64; BASIS]; BASIS] {
    let mut m = [[0.0; BASIS]; BASIS];
    for (j, &y) in offsets.iter().enumerate() {
        for (i, &x) in offsets.iter().enumerate() {
            let w = g[i] * g[j];
            let phi = [1.0, x, y, x * x, y * y, x * y];
            for a in 0..BASIS {
                for b in 0..BASIS {
                    m[a][b] += w * phi[a] * phi[b];
                }
            }
        }
    }
    gauss_jordan_inverse(m)
}

fn gauss_jordan_inverse<const N: usize>(mut m: [[f64; N]; N]) -> [[f64; N]; N] {
    let mut inv = [[0.0; N]; N];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty range");
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        for k in 0..N {
            m[col][k] /= p;
            inv[col][k] /= p;
        }
        for row in 0..N {
            if row != col {
                let f = m[row][col];
                if f != 0.0 {
                    for k in 0..N {
                        m[row][k] -= f * m[col][k];
                        inv[row][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    inv
}
