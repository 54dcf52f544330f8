use super::kernel::{check_finite, ScatterCost};
use super::{Breakpoints, CpdError, KernelSpec};
use crate::scalar::median;
use crate::Scalar;

const VARIANCE_FLOOR: f64 = 1e-6;

fn tolerance<T: Scalar>(best: T) -> T {
    T::tie_eps() * best.abs().max(T::one())
}

fn check_min_size(min_segment_size: usize) -> Result<(), CpdError> {
    if min_segment_size == 0 {
        Err(CpdError::ZeroMinSegment)
    } else {
        Ok(())
    }
}

/// Exact search for exactly `k` breakpoints minimizing the summed scatter.
///
/// Suffix table `best[j][s]` holds the cheapest split of `[s, n)` into `j`
/// segments; the answer is read back front to back, always taking the
/// smallest breakpoint that still fits within the optimal total.
pub fn detect_fixed_k<T: Scalar>(
    signal: &[T],
    kernel: &KernelSpec<T>,
    k: usize,
    min_segment_size: usize,
) -> Result<Breakpoints, CpdError> {
    check_min_size(min_segment_size)?;
    if k == 0 {
        return Err(CpdError::ZeroK);
    }
    let n = signal.len();
    let m = min_segment_size;
    let needed = (k + 1) * m;
    if n < needed {
        return Err(CpdError::Infeasible {
            k,
            min_segment_size: m,
            needed,
            len: n,
        });
    }
    check_finite(signal)?;
    let gamma = kernel.resolve(signal)?;
    let cost = ScatterCost::new(signal, gamma);

    let inf = T::infinity();
    let w = n + 1;
    // best[(j - 1) * w + s]: j segments covering [s, n)
    let mut best = vec![inf; (k + 1) * w];
    for s in 0..=n - m {
        best[s] = cost.cost(s, n);
    }
    for j in 2..=k + 1 {
        let (done, row) = best.split_at_mut((j - 1) * w);
        let prev = &done[(j - 2) * w..];
        // j segments of at least m samples must fit in [s, n)
        for s in 0..=n - j * m {
            let mut acc = inf;
            for b in s + m..=n - (j - 1) * m {
                let v = cost.cost(s, b) + prev[b];
                if v < acc {
                    acc = v;
                }
            }
            row[s] = acc;
        }
    }

    let total = best[k * w];
    let budget = total + tolerance(total);
    let mut spent = T::zero();
    let mut s = 0;
    let mut out = Vec::with_capacity(k);
    for j in (2..=k + 1).rev() {
        let rest = &best[(j - 2) * w..(j - 1) * w];
        let range = s + m..=n - (j - 1) * m;
        let pick = range
            .clone()
            .find(|&b| spent + cost.cost(s, b) + rest[b] <= budget)
            .unwrap_or_else(|| argmin(range, |b| cost.cost(s, b) + rest[b]));
        spent += cost.cost(s, pick);
        out.push(pick);
        s = pick;
    }
    Ok(Breakpoints(out))
}

fn argmin<T: Scalar>(range: impl Iterator<Item = usize>, f: impl Fn(usize) -> T) -> usize {
    let mut best = (usize::MAX, T::infinity());
    for b in range {
        let v = f(b);
        if v < best.1 || best.0 == usize::MAX {
            best = (b, v);
        }
    }
    best.0
}

/// Exact minimizer of `Σ scatter + beta·(number of breakpoints)`.
///
/// Suffix costs are computed right to left. A candidate breakpoint `b` is
/// dropped once `cost(s, b) + best[b]` exceeds `best[s]`, which rules it out
/// for every start at least `min_segment_size` before `s`; the subadditivity
/// of the scatter makes this exact.
pub fn detect_penalized<T: Scalar>(
    signal: &[T],
    kernel: &KernelSpec<T>,
    beta: T,
    min_segment_size: usize,
) -> Result<Breakpoints, CpdError> {
    check_min_size(min_segment_size)?;
    if !(beta >= T::zero() && beta.is_finite()) {
        return Err(CpdError::InvalidPenalty(beta.to_f64_lossy()));
    }
    let n = signal.len();
    let m = min_segment_size;
    if n < 2 * m {
        return Ok(Breakpoints::default());
    }
    check_finite(signal)?;
    let gamma = kernel.resolve(signal)?;
    let cost = ScatterCost::new(signal, gamma);

    let mut best = vec![T::infinity(); n + 1];
    // (breakpoint, start at which it was found dominated)
    let mut candidates: Vec<(usize, Option<usize>)> = Vec::new();
    for s in (0..=n - m).rev() {
        candidates.retain(|&(_, dominated_at)| dominated_at.is_none_or(|d| s + m > d));
        let fresh = s + m;
        if fresh <= n - m {
            candidates.push((fresh, None));
        }
        let mut acc = cost.cost(s, n);
        for &(b, _) in &candidates {
            let v = cost.cost(s, b) + beta + best[b];
            if v < acc {
                acc = v;
            }
        }
        best[s] = acc;
        let margin = acc + tolerance(acc);
        for (b, dominated_at) in candidates.iter_mut() {
            if dominated_at.is_none() && cost.cost(s, *b) + best[*b] > margin {
                *dominated_at = Some(s);
            }
        }
    }

    let total = best[0];
    let budget = total + tolerance(total);
    let mut spent = T::zero();
    let mut s = 0;
    let mut out = Vec::new();
    loop {
        if spent + cost.cost(s, n) <= budget || s + 2 * m > n {
            break;
        }
        let range = s + m..=n - m;
        let pick = range
            .clone()
            .find(|&b| spent + cost.cost(s, b) + beta + best[b] <= budget)
            .unwrap_or_else(|| argmin(range, |b| cost.cost(s, b) + beta + best[b]));
        spent += cost.cost(s, pick) + beta;
        out.push(pick);
        s = pick;
    }
    Ok(Breakpoints(out))
}

/// BIC-style penalty `2·ln(n)·v`, where `v` is the median per-sample scatter
/// over non-overlapping windows of `max(2, ⌈√n⌉)` samples (floored at 1e-6).
pub fn default_penalty<T: Scalar>(signal: &[T], gamma: T) -> T {
    let n = signal.len();
    if n < 2 {
        return T::lit(VARIANCE_FLOOR);
    }
    let window = ((n as f64).sqrt().ceil() as usize).max(2).min(n);
    let cost = ScatterCost::new(signal, gamma);
    let mut per_sample: Vec<T> = (0..n / window)
        .map(|i| cost.cost(i * window, (i + 1) * window) / T::of_usize(window))
        .collect();
    let v = median(&mut per_sample)
        .unwrap_or_else(T::zero)
        .max(T::lit(VARIANCE_FLOOR));
    T::lit(2.0) * T::of_usize(n).ln() * v
}

/// Total scatter of the segmentation induced by `bps`.
pub fn segmentation_cost<T: Scalar>(cost: &ScatterCost<T>, bps: &Breakpoints) -> T {
    let mut total = T::zero();
    let mut start = 0;
    for &b in bps.as_slice().iter().chain(std::iter::once(&cost.len())) {
        if b > start {
            total += cost.cost(start, b);
        }
        start = b;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changepoint::{gram_matrix, median_heuristic_gamma, segment_cost};
    use proptest::prelude::*;

    fn auto() -> KernelSpec<f64> {
        KernelSpec::default()
    }

    /// Every admissible breakpoint vector in lexicographic order (shorter
    /// prefixes first), with `max_count` limiting the vector length.
    fn enumerate(n: usize, m: usize, max_count: usize) -> Vec<Vec<usize>> {
        fn go(start: usize, n: usize, m: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(cur.clone());
            if cur.len() == max {
                return;
            }
            let mut b = start + m;
            while b + m <= n {
                cur.push(b);
                go(b, n, m, max, cur, out);
                cur.pop();
                b += 1;
            }
        }
        let mut out = Vec::new();
        go(0, n, m, max_count, &mut Vec::new(), &mut out);
        out
    }

    fn direct_total(signal: &[f64], gamma: f64, bps: &[usize]) -> f64 {
        let g = gram_matrix(signal, gamma);
        let mut bounds = vec![0];
        bounds.extend_from_slice(bps);
        bounds.push(signal.len());
        bounds.windows(2).map(|w| segment_cost(&g, w[0], w[1]).unwrap()).sum()
    }

    fn brute(signal: &[f64], m: usize, k: Option<usize>, beta: f64) -> Vec<usize> {
        let gamma = median_heuristic_gamma(signal).unwrap();
        let sets: Vec<_> = enumerate(signal.len(), m, k.unwrap_or(usize::MAX))
            .into_iter()
            .filter(|s| k.is_none_or(|k| s.len() == k))
            .map(|s| {
                let v = direct_total(signal, gamma, &s) + beta * s.len() as f64;
                (s, v)
            })
            .collect();
        let best = sets.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        let budget = best + 1e-9 * best.abs().max(1.0);
        sets.into_iter().find(|(_, v)| *v <= budget).unwrap().0
    }

    fn step(parts: &[(f64, usize)]) -> Vec<f64> {
        parts.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect()
    }

    #[test]
    fn single_step() {
        let s = step(&[(0.0, 6), (1.0, 6)]);
        assert_eq!(detect_fixed_k(&s, &auto(), 1, 1).unwrap().as_slice(), &[6]);
        assert_eq!(brute(&s, 1, Some(1), 0.0), vec![6]);
    }

    #[test]
    fn double_step() {
        let s = step(&[(0.0, 4), (1.0, 4), (0.0, 4)]);
        assert_eq!(detect_fixed_k(&s, &auto(), 2, 2).unwrap().as_slice(), &[4, 8]);
        assert_eq!(brute(&s, 2, Some(2), 0.0), vec![4, 8]);
    }

    #[test]
    fn constant_signal_ties_to_earliest() {
        let s = vec![0.3; 9];
        assert_eq!(detect_fixed_k(&s, &auto(), 1, 2).unwrap().as_slice(), &[2]);
        assert_eq!(detect_fixed_k(&s, &auto(), 3, 2).unwrap().as_slice(), &[2, 4, 6]);
        for beta in [1e-3, 1.0, 1e6] {
            assert!(detect_penalized(&s, &auto(), beta, 2).unwrap().is_empty());
        }
    }

    #[test]
    fn infeasible_and_invalid_arguments() {
        let s = vec![0.0; 5];
        assert!(matches!(
            detect_fixed_k(&s, &auto(), 2, 2),
            Err(CpdError::Infeasible { needed: 6, len: 5, .. })
        ));
        assert_eq!(detect_fixed_k(&s, &auto(), 0, 2), Err(CpdError::ZeroK));
        assert_eq!(detect_fixed_k(&s, &auto(), 1, 0), Err(CpdError::ZeroMinSegment));
        assert!(detect_penalized(&s, &auto(), -1.0, 1).is_err());
        assert!(detect_penalized(&[0.0, 1.0, 0.0], &auto(), 1.0, 2).unwrap().is_empty());
    }

    #[test]
    fn penalized_step_and_huge_penalty() {
        let s = step(&[(0.0, 10), (1.0, 10)]);
        // oracle: the split removes the whole scatter of the series
        let gamma = median_heuristic_gamma(&s).unwrap();
        let unsplit = direct_total(&s, gamma, &[]);
        let split = direct_total(&s, gamma, &[10]) + 0.5;
        assert!(split < unsplit);
        assert_eq!(detect_penalized(&s, &auto(), 0.5, 2).unwrap().as_slice(), &[10]);
        assert_eq!(brute(&s, 2, None, 0.5), vec![10]);
        assert!(detect_penalized(&s, &auto(), 1e6, 2).unwrap().is_empty());
    }

    #[test]
    fn f32_matches_f64_on_clean_steps() {
        let s64 = step(&[(0.0, 7), (1.0, 5), (0.4, 8)]);
        let s32: Vec<f32> = s64.iter().map(|&v| v as f32).collect();
        let a = detect_fixed_k(&s64, &auto(), 2, 2).unwrap();
        let b = detect_fixed_k(&s32, &KernelSpec::default(), 2, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.as_slice(), &[7, 12]);
    }

    #[test]
    fn default_penalty_is_positive() {
        let s = step(&[(0.0, 10), (1.0, 10)]);
        let beta = default_penalty(&s, 1.0);
        assert!(beta > 0.0);
        assert_eq!(detect_penalized(&s, &auto(), beta, 2).unwrap().as_slice(), &[10]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fixed_k_matches_enumeration(
            signal in prop::collection::vec(0.0f64..1.0, 4..16),
            k in 1usize..4,
            m in 1usize..3,
        ) {
            prop_assume!(signal.len() >= (k + 1) * m);
            let dp = detect_fixed_k(&signal, &auto(), k, m).unwrap();
            let expect = brute(&signal, m, Some(k), 0.0);
            prop_assert_eq!(dp.as_slice(), expect.as_slice());
        }

        #[test]
        fn penalized_matches_enumeration(
            signal in prop::collection::vec(0.0f64..1.0, 2..14),
            beta in prop::sample::select(vec![0.0, 0.05, 0.3, 1.0, 4.0]),
            m in 1usize..3,
        ) {
            let pen = detect_penalized(&signal, &auto(), beta, m).unwrap();
            let expect = brute(&signal, m, None, beta);
            prop_assert_eq!(pen.as_slice(), expect.as_slice());
        }

        #[test]
        // with n >= 20 some segment of a k <= 3 optimum can always be split
        fn more_breakpoints_never_cost_more(signal in prop::collection::vec(0.0f64..1.0, 20..40)) {
            let gamma = median_heuristic_gamma(&signal).unwrap();
            let cost = ScatterCost::new(&signal, gamma);
            let mut last = f64::INFINITY;
            for k in 1..=4 {
                let bps = detect_fixed_k(&signal, &auto(), k, 2).unwrap();
                prop_assert_eq!(bps.len(), k);
                let c = segmentation_cost(&cost, &bps);
                prop_assert!(c <= last + 1e-9);
                last = c;
            }
        }

        #[test]
        fn constant_offset_is_irrelevant(
            signal in prop::collection::vec(0.0f64..1.0, 6..20),
            offset in -8i32..8,
        ) {
            let shifted: Vec<f64> = signal.iter().map(|v| v + f64::from(offset)).collect();
            let a = detect_fixed_k(&signal, &auto(), 2, 2).unwrap();
            let b = detect_fixed_k(&shifted, &auto(), 2, 2).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
