/// Cost and warping path of a dynamic time warping alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub cost: f64,
    /// `(i, j)` pairs from `(0, 0)` to `(n - 1, m - 1)`, non-decreasing in both.
    pub path: Vec<(usize, usize)>,
}

/// Align `a` against `b` under `dist`. Equal-cost predecessors prefer the
/// diagonal, then the step that keeps `j` smaller.
///
/// Returns `None` when either sequence is empty.
pub fn dtw<A, B>(a: &[A], b: &[B], dist: impl Fn(&A, &B) -> f64) -> Option<DtwResult> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return None;
    }
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let d = dist(&a[i], &b[j]);
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
                let up = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[at(i, j)] = prev + d;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let options = [
            (i > 0 && j > 0).then(|| (i - 1, j - 1)),
            (i > 0).then(|| (i - 1, j)),
            (j > 0).then(|| (i, j - 1)),
        ];
        let mut best: Option<(usize, usize)> = None;
        for (pi, pj) in options.into_iter().flatten() {
            if best.is_none_or(|(bi, bj)| acc[at(pi, pj)] < acc[at(bi, bj)]) {
                best = Some((pi, pj));
            }
        }
        (i, j) = best.expect("a predecessor exists");
        path.push((i, j));
    }
    path.reverse();
    Some(DtwResult { cost: acc[at(n - 1, m - 1)], path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abs(a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let s = [1.0, 2.0, 3.0];
        let r = dtw(&s, &s, abs).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn repeated_element_maps_to_one() {
        let r = dtw(&[1.0, 1.0, 5.0], &[1.0, 5.0], abs).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 0), (2, 1)]);
        assert!(dtw::<f64, f64>(&[], &[1.0], abs).is_none());
    }

    proptest! {
        #[test]
        fn path_is_monotone_and_complete(
            a in prop::collection::vec(-100.0f64..100.0, 1..20),
            b in prop::collection::vec(-100.0f64..100.0, 1..20),
        ) {
            let r = dtw(&a, &b, abs).unwrap();
            prop_assert_eq!(r.path[0], (0, 0));
            prop_assert_eq!(*r.path.last().unwrap(), (a.len() - 1, b.len() - 1));
            for w in r.path.windows(2) {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!(di <= 1 && dj <= 1 && di + dj >= 1);
            }
            let along: f64 = r.path.iter().map(|&(i, j)| abs(&a[i], &b[j])).sum();
            prop_assert!((along - r.cost).abs() <= 1e-9 * (1.0 + r.cost));
        }
    }
}
