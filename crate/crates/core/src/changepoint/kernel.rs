use super::CpdError;
use crate::scalar::median;
use crate::Scalar;

/// RBF bandwidth: explicit, or derived from the signal by the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma<T> {
    Auto,
    Fixed(T),
}

/// `k(x, y) = exp(−γ·|x − y|²)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub gamma: Gamma<T>,
}

impl<T: Scalar> Default for KernelSpec<T> {
    fn default() -> Self {
        Self { gamma: Gamma::Auto }
    }
}

impl<T: Scalar> KernelSpec<T> {
    pub fn rbf(gamma: T) -> Self {
        Self {
            gamma: Gamma::Fixed(gamma),
        }
    }

    pub fn resolve(&self, signal: &[T]) -> Result<T, CpdError> {
        match self.gamma {
            Gamma::Auto => median_heuristic_gamma(signal),
            Gamma::Fixed(g) if g > T::zero() && g.is_finite() => Ok(g),
            Gamma::Fixed(g) => Err(CpdError::InvalidGamma(g.to_f64_lossy())),
        }
    }
}

#[inline]
pub(crate) fn rbf<T: Scalar>(gamma: T, x: T, y: T) -> T {
    let d = x - y;
    (-gamma * d * d).exp()
}

pub(crate) fn check_finite<T: Scalar>(signal: &[T]) -> Result<(), CpdError> {
    match signal.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(CpdError::NonFinite { index }),
        None => Ok(()),
    }
}

/// `γ = 1 / median{(x_i − x_j)² : i < j, (x_i − x_j)² > 0}`, falling back to 1
/// when every pair coincides.
pub fn median_heuristic_gamma<T: Scalar>(signal: &[T]) -> Result<T, CpdError> {
    if signal.len() < 2 {
        return Err(CpdError::TooShort {
            len: signal.len(),
            needed: 2,
        });
    }
    check_finite(signal)?;
    let mut sq = Vec::with_capacity(signal.len() * (signal.len() - 1) / 2);
    for (i, &x) in signal.iter().enumerate() {
        for &y in &signal[i + 1..] {
            let d = (x - y) * (x - y);
            if d > T::zero() {
                sq.push(d);
            }
        }
    }
    match median(&mut sq) {
        Some(m) if m > T::zero() => Ok(T::one() / m),
        _ => Ok(T::one()),
    }
}

/// Dense symmetric RBF Gram matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> GramMatrix<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

pub fn gram_matrix<T: Scalar>(signal: &[T], gamma: T) -> GramMatrix<T> {
    let n = signal.len();
    let mut data = vec![T::zero(); n * n];
    for i in 0..n {
        data[i * n + i] = T::one();
        for j in i + 1..n {
            let k = rbf(gamma, signal[i], signal[j]);
            data[i * n + j] = k;
            data[j * n + i] = k;
        }
    }
    GramMatrix { n, data }
}

/// Intra-segment RKHS scatter of `[a, b)` summed directly from the Gram matrix:
/// `Σ G[t,t] − (1/(b−a)) Σ_{s,t} G[s,t]`.
pub fn segment_cost<T: Scalar>(gram: &GramMatrix<T>, a: usize, b: usize) -> Result<T, CpdError> {
    if a >= b || b > gram.n {
        return Err(CpdError::EmptySegment { start: a, end: b });
    }
    let mut diag = T::zero();
    let mut block = T::zero();
    for s in a..b {
        diag += gram.get(s, s);
        for t in a..b {
            block += gram.get(s, t);
        }
    }
    Ok((diag - block / T::of_usize(b - a)).max(T::zero()))
}

/// O(1) segment scatter queries via cumulative sums of the Gram matrix.
#[derive(Debug, Clone)]
pub struct ScatterCost<T> {
    n: usize,
    /// `(n+1)²` table, `block[i][j] = Σ_{s<i, t<j} G[s,t]`.
    block: Vec<T>,
    /// `diag[i] = Σ_{t<i} G[t,t]`.
    diag: Vec<T>,
}

impl<T: Scalar> ScatterCost<T> {
    pub fn new(signal: &[T], gamma: T) -> Self {
        let n = signal.len();
        let w = n + 1;
        let mut block = vec![T::zero(); w * w];
        let mut diag = vec![T::zero(); w];
        for s in 0..n {
            let mut row = T::zero();
            for t in 0..n {
                row += if s == t {
                    T::one()
                } else {
                    rbf(gamma, signal[s], signal[t])
                };
                block[(s + 1) * w + t + 1] = block[s * w + t + 1] + row;
            }
            diag[s + 1] = diag[s] + T::one();
        }
        Self { n, block, diag }
    }

    pub fn from_gram(gram: &GramMatrix<T>) -> Self {
        let n = gram.n;
        let w = n + 1;
        let mut block = vec![T::zero(); w * w];
        let mut diag = vec![T::zero(); w];
        for s in 0..n {
            let mut row = T::zero();
            for t in 0..n {
                row += gram.get(s, t);
                block[(s + 1) * w + t + 1] = block[s * w + t + 1] + row;
            }
            diag[s + 1] = diag[s] + gram.get(s, s);
        }
        Self { n, block, diag }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Scatter of `[a, b)`; requires `a < b ≤ n`.
    #[inline]
    pub fn cost(&self, a: usize, b: usize) -> T {
        debug_assert!(a < b && b <= self.n);
        let w = self.n + 1;
        let sum = self.block[b * w + b] - self.block[a * w + b] - self.block[b * w + a] + self.block[a * w + a];
        let c = self.diag[b] - self.diag[a] - sum / T::of_usize(b - a);
        c.max(T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn median_heuristic_cases() {
        assert_eq!(median_heuristic_gamma(&[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(median_heuristic_gamma(&[5.0, 5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(median_heuristic_gamma(&[0.0, 2.0]).unwrap(), 0.25);
        assert!(matches!(
            median_heuristic_gamma(&[1.0_f64]),
            Err(CpdError::TooShort { len: 1, .. })
        ));
        assert!(matches!(
            median_heuristic_gamma(&[1.0, f64::NAN]),
            Err(CpdError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn gram_entries() {
        let g = gram_matrix(&[0.0, 1.0, 3.0], 1.0);
        assert_eq!(g.get(1, 1), 1.0);
        assert_relative_eq!(g.get(0, 1), 0.367_879_441_171_442_3, epsilon = 1e-12);
        let far = gram_matrix(&[0.0, 1.0], 1e4);
        assert!(far.get(0, 1) < 1e-300);
    }

    #[test]
    fn segment_cost_cases() {
        let g = gram_matrix(&[0.0, 1.0, 1.0, 1.0], 1.0);
        assert_relative_eq!(segment_cost(&g, 0, 2).unwrap(), 1.0 - (-1.0_f64).exp(), epsilon = 1e-12);
        assert_eq!(segment_cost(&g, 1, 4).unwrap(), 0.0);
        assert_eq!(segment_cost(&g, 2, 3).unwrap(), 0.0);
        assert!(segment_cost(&g, 2, 2).is_err());
        assert!(segment_cost(&g, 0, 5).is_err());
    }

    #[test]
    fn explicit_gamma_must_be_positive() {
        assert!(KernelSpec::rbf(0.0).resolve(&[0.0, 1.0]).is_err());
        assert_eq!(KernelSpec::rbf(2.0).resolve(&[0.0, 1.0]).unwrap(), 2.0);
    }

    proptest! {
        #[test]
        fn prefix_costs_match_direct_sums(
            signal in prop::collection::vec(0.0f64..1.0, 1..25),
            gamma in 0.1f64..20.0,
        ) {
            let g = gram_matrix(&signal, gamma);
            let fast = ScatterCost::new(&signal, gamma);
            let via_gram = ScatterCost::from_gram(&g);
            for a in 0..signal.len() {
                for b in a + 1..=signal.len() {
                    let direct = segment_cost(&g, a, b).unwrap();
                    prop_assert!((fast.cost(a, b) - direct).abs() < 1e-10);
                    prop_assert!((via_gram.cost(a, b) - direct).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn splitting_never_increases_cost(
            signal in prop::collection::vec(0.0f64..1.0, 3..25),
            gamma in 0.1f64..20.0,
        ) {
            let c = ScatterCost::new(&signal, gamma);
            let n = signal.len();
            for a in 0..n {
                for b in a + 1..n {
                    for e in b + 1..=n {
                        prop_assert!(c.cost(a, b) + c.cost(b, e) <= c.cost(a, e) + 1e-9);
                    }
                }
            }
        }

        #[test]
        fn gram_symmetric_unit_diagonal(signal in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let gamma = median_heuristic_gamma(&[signal.clone(), vec![0.0]].concat()).unwrap();
            let g = gram_matrix(&signal, gamma);
            for i in 0..signal.len() {
                prop_assert_eq!(g.get(i, i), 1.0);
                for j in 0..signal.len() {
                    prop_assert_eq!(g.get(i, j), g.get(j, i));
                }
            }
        }
    }
}
