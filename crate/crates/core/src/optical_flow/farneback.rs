use super::expansion::{expand, PolyExpansion, Quadratic};
use super::{FlowError, FlowField, FlowParams, GrayImage};
use crate::Scalar;

/// Intensities are processed on an 8-bit scale so the determinant
/// regularizer below has a familiar magnitude.
const INTENSITY_SCALE: f64 = 255.0;
const DET_EPS: f64 = 1e-3;
/// Coarser levels narrower than this are not built.
const MIN_LEVEL_SIZE: usize = 32;

#[derive(Debug, Clone)]
struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Dense flow from `prev` to `next`; see the module docs for the sign
/// convention.
pub fn farneback_flow<T: Scalar>(
    prev: &GrayImage<T>,
    next: &GrayImage<T>,
    params: &FlowParams<T>,
) -> Result<FlowField<T>, FlowError> {
    params.validate()?;
    let (w, h) = (prev.width(), prev.height());
    if (w, h) != (next.width(), next.height()) {
        return Err(FlowError::DimensionMismatch(w, h, next.width(), next.height()));
    }
    let lift = |img: &GrayImage<T>| Plane {
        width: w,
        height: h,
        data: img.data().iter().map(|&v| v * T::lit(INTENSITY_SCALE)).collect(),
    };
    let (mut p0, mut n0) = (lift(prev), lift(next));
    if params.prescale < T::one() {
        let sw = scaled_len(w, params.prescale);
        let sh = scaled_len(h, params.prescale);
        p0 = resize_bilinear(&p0, sw, sh);
        n0 = resize_bilinear(&n0, sw, sh);
    }
    let (w0, h0) = (p0.width, p0.height);
    if w0 < params.poly_n || h0 < params.poly_n {
        return Err(FlowError::TooSmall {
            width: w0,
            height: h0,
            poly_n: params.poly_n,
        });
    }

    let mut sizes = vec![(T::one(), w0, h0)];
    let mut scale = T::one();
    for _ in 1..params.levels {
        scale *= params.pyramid_scale;
        let (lw, lh) = (scaled_len(w0, scale), scaled_len(h0, scale));
        if lw < MIN_LEVEL_SIZE.max(params.poly_n) || lh < MIN_LEVEL_SIZE.max(params.poly_n) {
            break;
        }
        sizes.push((scale, lw, lh));
    }

    let mut flow: Option<(Vec<[T; 2]>, usize, usize)> = None;
    for &(scale, lw, lh) in sizes.iter().rev() {
        let level = |plane: &Plane<T>| {
            if lw == w0 && lh == h0 {
                plane.clone()
            } else {
                let sigma = (T::one() / scale - T::one()) * T::lit(0.5);
                resize_bilinear(&gaussian_blur(plane, sigma), lw, lh)
            }
        };
        let (pl, nl) = (level(&p0), level(&n0));
        let e1 = expand(lw, lh, &pl.data, params.poly_n, params.poly_sigma)?;
        let e2 = expand(lw, lh, &nl.data, params.poly_n, params.poly_sigma)?;
        let init = match flow.take() {
            None => vec![[T::zero(); 2]; lw * lh],
            Some((f, fw, fh)) => resize_flow(&f, fw, fh, lw, lh),
        };
        flow = Some((solve_level(&e1, &e2, init, params), lw, lh));
    }
    let (mut vectors, fw, fh) = flow.expect("at least one level");
    if (fw, fh) != (w, h) {
        vectors = resize_flow(&vectors, fw, fh, w, h);
    }
    Ok(FlowField {
        width: w,
        height: h,
        vectors,
    })
}

fn scaled_len<T: Scalar>(n: usize, scale: T) -> usize {
    (T::of_usize(n) * scale).round().to_usize().unwrap_or(1).max(1)
}

/// Fixed-point refinement of the displacement at one pyramid level.
fn solve_level<T: Scalar>(
    e1: &PolyExpansion<T>,
    e2: &PolyExpansion<T>,
    mut flow: Vec<[T; 2]>,
    params: &FlowParams<T>,
) -> Vec<[T; 2]> {
    let (w, h) = (e1.width, e1.height);
    let eps = T::lit(DET_EPS);
    for _ in 0..params.iterations {
        let m = constraint_terms(e1, e2, &flow);
        let g = box_mean(&m, w, h, params.window_size / 2);
        for (d, g) in flow.iter_mut().zip(&g) {
            let [g11, g12, g22, h1, h2] = *g;
            let det = g11 * g22 - g12 * g12 + eps;
            *d = [(g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det];
        }
    }
    flow
}

/// Per pixel: entries of AᵀA (11, 12, 22) and AᵀΔb (1, 2) under the current
/// displacement estimate.
fn constraint_terms<T: Scalar>(e1: &PolyExpansion<T>, e2: &PolyExpansion<T>, flow: &[[T; 2]]) -> Vec<[T; 5]> {
    let (w, h) = (e1.width, e1.height);
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let q1 = e1.get(x, y);
            let [dx, dy] = flow[y * w + x];
            let q2 = sample(e2, T::of_usize(x) + dx, T::of_usize(y) + dy);
            let a11 = (q1.a11 + q2.a11) * half;
            let a12 = (q1.a12 + q2.a12) * half;
            let a22 = (q1.a22 + q2.a22) * half;
            let db1 = (q1.b1 - q2.b1) * half + a11 * dx + a12 * dy;
            let db2 = (q1.b2 - q2.b2) * half + a12 * dx + a22 * dy;
            out.push([
                a11 * a11 + a12 * a12,
                a12 * (a11 + a22),
                a12 * a12 + a22 * a22,
                a11 * db1 + a12 * db2,
                a12 * db1 + a22 * db2,
            ]);
        }
    }
    out
}

/// Bilinear sample of the coefficients, with positions clamped to the image.
fn sample<T: Scalar>(e: &PolyExpansion<T>, x: T, y: T) -> Quadratic<T> {
    let (x0, x1, fx) = bilinear_axis(x, e.width);
    let (y0, y1, fy) = bilinear_axis(y, e.height);
    let q00 = e.get(x0, y0);
    let q10 = e.get(x1, y0);
    let q01 = e.get(x0, y1);
    let q11 = e.get(x1, y1);
    let mix = |f: fn(&Quadratic<T>) -> T| {
        let top = f(&q00) + (f(&q10) - f(&q00)) * fx;
        let bot = f(&q01) + (f(&q11) - f(&q01)) * fx;
        top + (bot - top) * fy
    };
    Quadratic {
        a11: mix(|q| q.a11),
        a12: mix(|q| q.a12),
        a22: mix(|q| q.a22),
        b1: mix(|q| q.b1),
        b2: mix(|q| q.b2),
        c: mix(|q| q.c),
    }
}

/// Neighbouring indices and interpolation weight along one axis.
fn bilinear_axis<T: Scalar>(pos: T, n: usize) -> (usize, usize, T) {
    let max = T::of_usize(n - 1);
    let p = if pos.is_nan() {
        T::zero()
    } else {
        pos.max(T::zero()).min(max)
    };
    let i0 = p.floor().to_usize().unwrap_or(0).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, p - T::of_usize(i0))
}

/// Mean over the clipped `(2r+1)`-square window, separably.
fn box_mean<T: Scalar, const C: usize>(m: &[[T; C]], w: usize, h: usize, r: usize) -> Vec<[T; C]> {
    let mut rows = vec![[T::zero(); C]; w * h];
    for y in 0..h {
        for x in 0..w {
            let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
            let mut acc = [T::zero(); C];
            for v in &m[y * w + lo..=y * w + hi] {
                for c in 0..C {
                    acc[c] += v[c];
                }
            }
            let n = T::of_usize(hi - lo + 1);
            rows[y * w + x] = acc.map(|a| a / n);
        }
    }
    let mut out = vec![[T::zero(); C]; w * h];
    for y in 0..h {
        let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
        let n = T::of_usize(hi - lo + 1);
        for x in 0..w {
            let mut acc = [T::zero(); C];
            for yy in lo..=hi {
                let v = rows[yy * w + x];
                for c in 0..C {
                    acc[c] += v[c];
                }
            }
            out[y * w + x] = acc.map(|a| a / n);
        }
    }
    out
}

/// Separable Gaussian with replicated borders.
fn gaussian_blur<T: Scalar>(plane: &Plane<T>, sigma: T) -> Plane<T> {
    let s = sigma.to_f64_lossy();
    if s <= 0.0 {
        return plane.clone();
    }
    let ksize = ((s * 5.0).round() as usize) | 1;
    let r = ksize / 2;
    let raw: Vec<f64> = (0..ksize)
        .map(|i| {
            let o = i as f64 - r as f64;
            (-o * o / (2.0 * s * s)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let k: Vec<T> = raw.iter().map(|v| T::lit(v / total)).collect();
    let (w, h) = (plane.width, plane.height);
    let clamp = |i: usize, o: usize, n: usize| (i + o).saturating_sub(r).min(n - 1);
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(o, &kv)| kv * plane.data[y * w + clamp(x, o, w)])
                .sum();
        }
    }
    let mut data = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            data[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(o, &kv)| kv * tmp[clamp(y, o, h) * w + x])
                .sum();
        }
    }
    Plane {
        width: w,
        height: h,
        data,
    }
}

/// Source coordinate of a destination pixel centre.
fn source_coord<T: Scalar>(i: usize, src: usize, dst: usize) -> T {
    (T::of_usize(i) + T::lit(0.5)) * T::of_usize(src) / T::of_usize(dst) - T::lit(0.5)
}

fn resize_bilinear<T: Scalar>(plane: &Plane<T>, nw: usize, nh: usize) -> Plane<T> {
    let (w, h) = (plane.width, plane.height);
    let mut data = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        let (y0, y1, fy) = bilinear_axis(source_coord::<T>(y, h, nh), h);
        for x in 0..nw {
            let (x0, x1, fx) = bilinear_axis(source_coord::<T>(x, w, nw), w);
            let at = |xx: usize, yy: usize| plane.data[yy * w + xx];
            let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
            let bot = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
            data.push(top + (bot - top) * fy);
        }
    }
    Plane {
        width: nw,
        height: nh,
        data,
    }
}

/// Resamples a flow field and rescales its vectors to the new pixel grid.
fn resize_flow<T: Scalar>(flow: &[[T; 2]], w: usize, h: usize, nw: usize, nh: usize) -> Vec<[T; 2]> {
    let sx = T::of_usize(nw) / T::of_usize(w);
    let sy = T::of_usize(nh) / T::of_usize(h);
    let component = |c: usize, s: T| {
        let plane = Plane {
            width: w,
            height: h,
            data: flow.iter().map(|v| v[c] * s).collect(),
        };
        resize_bilinear(&plane, nw, nh).data
    };
    let dx = component(0, sx);
    let dy = component(1, sy);
    dx.into_iter().zip(dy).map(|(a, b)| [a, b]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_mean_clips_window() {
        let m: Vec<[f64; 1]> = (0..5).map(|i| [f64::from(i)]).collect();
        let out = box_mean(&m, 5, 1, 1);
        let got: Vec<f64> = out.iter().map(|v| v[0]).collect();
        assert_eq!(got, vec![0.5, 1.0, 2.0, 3.0, 3.5]);
    }

    #[test]
    fn blur_and_resize_keep_constants() {
        let p = Plane {
            width: 9,
            height: 7,
            data: vec![3.0_f64; 63],
        };
        let b = gaussian_blur(&p, 1.5);
        assert!(b.data.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let r = resize_bilinear(&b, 4, 3);
        assert_eq!((r.width, r.height), (4, 3));
        assert!(r.data.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn resize_flow_scales_vectors() {
        let f = vec![[1.0_f64, 2.0]; 16];
        let g = resize_flow(&f, 4, 4, 8, 2);
        assert_eq!(g.len(), 16);
        assert!(g
            .iter()
            .all(|v| (v[0] - 2.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn bilinear_axis_clamps() {
        assert_eq!(bilinear_axis(-3.0_f64, 5), (0, 1, 0.0));
        assert_eq!(bilinear_axis(9.0_f64, 5), (4, 4, 0.0));
        let (a, b, f) = bilinear_axis(1.25_f64, 5);
        assert_eq!((a, b), (1, 2));
        assert!((f - 0.25).abs() < 1e-12);
    }
}
