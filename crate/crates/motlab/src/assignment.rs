//! Cost matrices and exact one-to-one matching.
//!
//! [`hungarian`] minimizes total cost over all assignments that cover every
//! label (columns), requiring at least as many queries (rows) as labels.
//! [`brute_force_assignment`] is the independent oracle used by tests. Both
//! share one tie-breaking rule: among equal-cost optima, the
//! lexicographically smallest pair list (sorted by query index) wins.

use crate::error::{Error, Result};
use crate::geometry::{giou, l1_box_distance, BBox};
use crate::losses::{focal_loss, LossWeights, FOCAL_ALPHA, FOCAL_GAMMA};
use serde::{Deserialize, Serialize};

/// Rectangular matrix of matching costs, `rows` queries by `cols` labels.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        CostMatrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CostMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn validate(&self) -> Result<()> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                if !self.entry(r, c).is_finite() {
                    return Err(Error::NonFiniteCost { row: r, col: c });
                }
            }
        }
        Ok(())
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One-to-one pairing between queries and labels, plus the unmatched
/// remainder on both sides. Pairs are sorted by query index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_queries: Vec<usize>,
    pub unmatched_labels: Vec<usize>,
}

impl Matching {
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        pairs.sort_unstable();
        let mut q_used = vec![false; rows];
        let mut l_used = vec![false; cols];
        for &(q, l) in &pairs {
            q_used[q] = true;
            l_used[l] = true;
        }
        Matching {
            pairs,
            unmatched_queries: (0..rows).filter(|&q| !q_used[q]).collect(),
            unmatched_labels: (0..cols).filter(|&l| !l_used[l]).collect(),
        }
    }

    pub fn empty(rows: usize) -> Self {
        Matching {
            pairs: Vec::new(),
            unmatched_queries: (0..rows).collect(),
            unmatched_labels: Vec::new(),
        }
    }

    /// Label matched to `query`, if any.
    pub fn label_of(&self, query: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|&&(q, _)| q == query)
            .map(|&(_, l)| l)
    }

    /// Query matched to `label`, if any.
    pub fn query_of(&self, label: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|&&(_, l)| l == label)
            .map(|&(q, _)| q)
    }

    /// Total cost of the pair list, summed in query-index order.
    pub fn total(&self, cost: &CostMatrix) -> f64 {
        canonical_total(cost, &self.pairs)
    }
}

/// Which query and label subsets participate in a matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchingSpace {
    /// Detect queries against free labels only.
    DetectOnly,
    /// The full query set against the full label set.
    AllQueries,
}

fn canonical_total(cost: &CostMatrix, sorted_pairs: &[(usize, usize)]) -> f64 {
    sorted_pairs
        .iter()
        .fold(0.0, |acc, &(q, l)| acc + cost.entry(q, l))
}

/// Matching cost of one (prediction, label) pair: positive-class focal term
/// on the score plus the two box terms.
pub fn pair_cost(pred: BBox, score: f64, label: BBox, weights: &LossWeights) -> Result<f64> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::ScoreOutOfRange(score));
    }
    let cls = focal_loss(score, true, FOCAL_ALPHA, FOCAL_GAMMA);
    let g = giou(pred, label)?;
    Ok(weights.cls * cls + weights.l1 * l1_box_distance(pred, label) + weights.giou * (1.0 - g))
}

/// Build the full query-by-label cost matrix.
pub fn build_cost_matrix(
    predictions: &[(BBox, f64)],
    labels: &[BBox],
    weights: &LossWeights,
) -> Result<CostMatrix> {
    let mut data = Vec::with_capacity(predictions.len() * labels.len());
    for &(pred, score) in predictions {
        for &label in labels {
            data.push(pair_cost(pred, score, label, weights)?);
        }
    }
    Ok(CostMatrix::new(predictions.len(), labels.len(), data))
}

/// Shortest-augmenting-path solver over the transposed matrix.
///
/// Returns `(assignment label -> query, label duals, query duals)` with
/// `cost(q, l) - u[l] - v[q] >= 0` everywhere and zero on matched edges.
fn solve_potentials(cost: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.cols; // labels: every one gets assigned
    let m = cost.rows; // queries
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1]; // p[j] = label (1-based) at query j, 0 = none
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost.entry(j - 1, i0 - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

/// Minimum-cost matching covering every label.
///
/// Requires `cols <= rows`; errors with `InsufficientQueries` otherwise.
/// Deterministic: equal-cost optima resolve to the lexicographically
/// smallest pair list.
pub fn hungarian(cost: &CostMatrix) -> Result<Matching> {
    cost.validate()?;
    if cost.cols > cost.rows {
        return Err(Error::InsufficientQueries {
            queries: cost.rows,
            labels: cost.cols,
        });
    }
    if cost.cols == 0 {
        return Ok(Matching::empty(cost.rows));
    }
    let (assign, u, v) = solve_potentials(cost);
    let mut pairs: Vec<(usize, usize)> = assign.iter().enumerate().map(|(l, &q)| (q, l)).collect();
    pairs.sort_unstable();
    let c_star = canonical_total(cost, &pairs);

    // Ties can only involve tight edges (zero reduced cost) outside the
    // found matching; when none exist the optimum is unique.
    let tau = 1e-9 * (1.0 + cost.max_abs());
    let mut matched = vec![vec![false; cost.cols]; cost.rows];
    for &(q, l) in &pairs {
        matched[q][l] = true;
    }
    let mut extra_tight = false;
    'outer: for q in 0..cost.rows {
        for l in 0..cost.cols {
            if !matched[q][l] && (cost.entry(q, l) - u[l] - v[q]).abs() <= tau {
                extra_tight = true;
                break 'outer;
            }
        }
    }
    if !extra_tight {
        return Ok(Matching::from_pairs(pairs, cost.rows, cost.cols));
    }
    let refined = lex_min_refinement(cost, c_star).unwrap_or(pairs);
    Ok(Matching::from_pairs(refined, cost.rows, cost.cols))
}

/// Fix pairs query-by-query, keeping only choices that still admit a
/// completion with total exactly `c_star`.
fn lex_min_refinement(cost: &CostMatrix, c_star: f64) -> Option<Vec<(usize, usize)>> {
    let mut forced: Vec<(usize, usize)> = Vec::new();
    let mut remaining: Vec<usize> = (0..cost.cols).collect();
    for q in 0..cost.rows {
        if remaining.is_empty() {
            break;
        }
        let avail_after = cost.rows - q - 1;
        for (pos, &l) in remaining.iter().enumerate() {
            if remaining.len() - 1 > avail_after {
                continue;
            }
            let mut cand = forced.clone();
            cand.push((q, l));
            if remaining.len() > 1 {
                let rest: Vec<usize> = remaining
                    .iter()
                    .copied()
                    .filter(|&x| x != l)
                    .collect();
                let sub = CostMatrix::from_fn(avail_after, rest.len(), |r, c| {
                    cost.entry(q + 1 + r, rest[c])
                });
                let (sub_assign, _, _) = solve_potentials(&sub);
                for (lc, &qc) in sub_assign.iter().enumerate() {
                    cand.push((q + 1 + qc, rest[lc]));
                }
            }
            cand.sort_unstable();
            if canonical_total(cost, &cand) == c_star {
                forced.push((q, l));
                remaining.remove(pos);
                break;
            }
        }
    }
    if remaining.is_empty() {
        Some(forced)
    } else {
        None
    }
}

/// Exhaustive assignment oracle; same contract and tie rule as
/// [`hungarian`], limited to small instances.
pub fn brute_force_assignment(cost: &CostMatrix) -> Result<Matching> {
    cost.validate()?;
    if cost.cols > cost.rows {
        return Err(Error::InsufficientQueries {
            queries: cost.rows,
            labels: cost.cols,
        });
    }
    let min_dim = cost.rows.min(cost.cols);
    if min_dim > 8 {
        return Err(Error::BruteForceTooLarge(min_dim));
    }
    if cost.cols == 0 {
        return Ok(Matching::empty(cost.rows));
    }

    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut used = vec![false; cost.rows];
    let mut current: Vec<(usize, usize)> = Vec::with_capacity(cost.cols);

    fn recurse(
        cost: &CostMatrix,
        label: usize,
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        if label == cost.cols() {
            let mut pairs = current.clone();
            pairs.sort_unstable();
            let total = canonical_total(cost, &pairs);
            let better = match best {
                None => true,
                Some((bt, bp)) => total < *bt || (total == *bt && pairs < *bp),
            };
            if better {
                *best = Some((total, pairs));
            }
            return;
        }
        for q in 0..cost.rows() {
            if !used[q] {
                used[q] = true;
                current.push((q, label));
                recurse(cost, label + 1, used, current, best);
                current.pop();
                used[q] = false;
            }
        }
    }
    recurse(cost, 0, &mut used, &mut current, &mut best);
    let (_, pairs) = best.expect("cols >= 1 and rows >= cols guarantee a candidate");
    Ok(Matching::from_pairs(pairs, cost.rows, cost.cols))
}

/// Run the matching restricted to a query subspace, re-indexed to global
/// query and label indices.
///
/// `labels` pairs each participating label's global index with its box; for
/// [`MatchingSpace::DetectOnly`] callers pass the free subset, for
/// [`MatchingSpace::AllQueries`] the full frame label set.
pub fn match_in_space(
    space: MatchingSpace,
    predictions: &[(BBox, f64)],
    is_detect: &[bool],
    labels: &[(usize, BBox)],
    weights: &LossWeights,
) -> Result<Matching> {
    let participating: Vec<usize> = match space {
        MatchingSpace::DetectOnly => (0..predictions.len()).filter(|&i| is_detect[i]).collect(),
        MatchingSpace::AllQueries => (0..predictions.len()).collect(),
    };
    if labels.is_empty() {
        return Ok(Matching {
            pairs: Vec::new(),
            unmatched_queries: participating,
            unmatched_labels: Vec::new(),
        });
    }
    if labels.len() > participating.len() {
        return Err(Error::InsufficientQueries {
            queries: participating.len(),
            labels: labels.len(),
        });
    }
    let sub_preds: Vec<(BBox, f64)> = participating.iter().map(|&i| predictions[i]).collect();
    let boxes: Vec<BBox> = labels.iter().map(|&(_, b)| b).collect();
    let cost = build_cost_matrix(&sub_preds, &boxes, weights)?;
    let local = hungarian(&cost)?;
    let pairs = local
        .pairs
        .into_iter()
        .map(|(q, l)| (participating[q], labels[l].0))
        .collect::<Vec<_>>();
    let unmatched_queries = local
        .unmatched_queries
        .into_iter()
        .map(|q| participating[q])
        .collect();
    let unmatched_labels = local
        .unmatched_labels
        .into_iter()
        .map(|l| labels[l].0)
        .collect();
    let mut m = Matching {
        pairs,
        unmatched_queries,
        unmatched_labels,
    };
    m.pairs.sort_unstable();
    m.unmatched_queries.sort_unstable();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> CostMatrix {
        CostMatrix::new(rows, cols, v.to_vec())
    }

    #[test]
    fn hungarian_two_by_two() {
        let m = hungarian(&mat(2, 2, &[4.0, 1.0, 2.0, 0.0])).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(m.total(&mat(2, 2, &[4.0, 1.0, 2.0, 0.0])), 3.0);
    }

    #[test]
    fn hungarian_one_by_one() {
        let m = hungarian(&mat(1, 1, &[3.5])).unwrap();
        assert_eq!(m.pairs, vec![(0, 0)]);
        assert!(m.unmatched_queries.is_empty());
    }

    #[test]
    fn hungarian_rejects_excess_labels() {
        let err = hungarian(&mat(1, 2, &[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::InsufficientQueries { .. }));
    }

    #[test]
    fn hungarian_rejects_non_finite() {
        let err = hungarian(&mat(2, 2, &[1.0, f64::NAN, 0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCost { row: 0, col: 1 }));
    }

    #[test]
    fn brute_force_diagonal() {
        let c = mat(3, 3, &[0.0, 5.0, 5.0, 5.0, 0.0, 5.0, 5.0, 5.0, 0.0]);
        let m = brute_force_assignment(&c).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(m.total(&c), 0.0);
    }

    #[test]
    fn brute_force_prefers_identity_on_symmetric_costs() {
        let c = mat(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let m = brute_force_assignment(&c).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(m.total(&c), 2.0);
    }

    #[test]
    fn brute_force_size_limit() {
        let c = CostMatrix::from_fn(9, 9, |r, ci| (r + ci) as f64);
        assert!(matches!(
            brute_force_assignment(&c),
            Err(Error::BruteForceTooLarge(9))
        ));
    }

    /// All 81 2x2 matrices over {0, 1, 2}: identical pairs under ties.
    #[test]
    fn exhaustive_two_by_two_integer_sweep() {
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let m = mat(2, 2, &[a as f64, b as f64, c as f64, d as f64]);
                        let h = hungarian(&m).unwrap();
                        let bf = brute_force_assignment(&m).unwrap();
                        assert_eq!(h.pairs, bf.pairs, "costs [[{a},{b}],[{c},{d}]]");
                    }
                }
            }
        }
    }

    #[test]
    fn random_instances_match_oracle() {
        let mut rng = crate::rng::stream(11, "assignment-test", 0);
        for n in 2..=6 {
            for _ in 0..200 {
                let c = CostMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..10.0));
                let h = hungarian(&c).unwrap();
                let bf = brute_force_assignment(&c).unwrap();
                assert_eq!(h.total(&c), bf.total(&c));
                assert_eq!(h.pairs, bf.pairs);
            }
        }
    }

    #[test]
    fn rectangular_random_instances_match_oracle() {
        let mut rng = crate::rng::stream(13, "assignment-test-rect", 0);
        for _ in 0..200 {
            let rows = rng.gen_range(3..8);
            let cols = rng.gen_range(1..=rows.min(5));
            let c = CostMatrix::from_fn(rows, cols, |_, _| rng.gen_range(0.0..4.0));
            let h = hungarian(&c).unwrap();
            let bf = brute_force_assignment(&c).unwrap();
            assert_eq!(h.total(&c), bf.total(&c));
            assert_eq!(h.pairs, bf.pairs);
            assert_eq!(h.pairs.len(), cols);
        }
    }

    #[test]
    fn cost_matrix_entry_formula() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let w = LossWeights::default();
        let c = build_cost_matrix(&[(b, 0.5)], &[b], &w).unwrap();
        // 2 * 0.25 * 0.25 * ln 2, box terms vanish.
        let expected = 2.0 * 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((c.entry(0, 0) - expected).abs() < 1e-9, "{}", c.entry(0, 0));
        assert!((expected - 0.08664).abs() < 1e-4);
    }

    #[test]
    fn cost_matrix_rejects_bad_score() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let err = build_cost_matrix(&[(b, 1.2)], &[b], &LossWeights::default()).unwrap_err();
        assert!(matches!(err, Error::ScoreOutOfRange(_)));
    }

    #[test]
    fn match_in_space_no_free_labels() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2);
        let preds = vec![(b, 0.5), (b, 0.5), (b, 0.5)];
        let is_detect = vec![true, true, false];
        let m = match_in_space(
            MatchingSpace::DetectOnly,
            &preds,
            &is_detect,
            &[],
            &LossWeights::default(),
        )
        .unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_queries, vec![0, 1]);
    }

    #[test]
    fn match_in_space_all_queries_covers_labels() {
        let w = LossWeights::default();
        let mk = |cx: f64| BBox::new(cx, 0.5, 0.1, 0.1);
        let preds = vec![(mk(0.1), 0.5), (mk(0.5), 0.5), (mk(0.9), 0.5)];
        let is_detect = vec![true, true, false];
        let labels = vec![(0, mk(0.52)), (1, mk(0.12))];
        let m = match_in_space(MatchingSpace::AllQueries, &preds, &is_detect, &labels, &w).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert_eq!(m.query_of(0), Some(1));
        assert_eq!(m.query_of(1), Some(0));
    }

    /// A track query sitting exactly on a label wins it in the all-queries
    /// space; verified against the brute-force oracle.
    #[test]
    fn track_query_wins_coincident_label() {
        let w = LossWeights::default();
        let target = BBox::new(0.7, 0.7, 0.2, 0.2);
        let preds = vec![
            (BBox::new(0.1, 0.1, 0.2, 0.2), 0.6),
            (BBox::new(0.3, 0.9, 0.2, 0.2), 0.6),
            (target, 0.6),
        ];
        let is_detect = vec![true, true, false];
        let labels = vec![(0, target)];
        let m = match_in_space(MatchingSpace::AllQueries, &preds, &is_detect, &labels, &w).unwrap();
        assert_eq!(m.query_of(0), Some(2));

        let boxes: Vec<BBox> = labels.iter().map(|&(_, b)| b).collect();
        let cost = build_cost_matrix(&preds, &boxes, &w).unwrap();
        let oracle = brute_force_assignment(&cost).unwrap();
        assert_eq!(oracle.pairs, vec![(2, 0)]);
    }

    proptest! {
        /// Adding a constant to every entry never changes the pair set.
        #[test]
        fn constant_shift_invariance(
            vals in proptest::collection::vec(0.0f64..10.0, 16),
            shift in -5.0f64..5.0,
        ) {
            let c0 = mat(4, 4, &vals);
            let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
            let c1 = mat(4, 4, &shifted);
            prop_assert_eq!(hungarian(&c0).unwrap().pairs, hungarian(&c1).unwrap().pairs);
        }

        /// Permuting query order and inverse-permuting the result yields the
        /// same matching on tie-free instances.
        #[test]
        fn query_permutation_equivariance(
            vals in proptest::collection::vec(0.0f64..10.0, 20),
            seed in 0u64..1000,
        ) {
            let rows = 5;
            let cols = 4;
            let c = mat(rows, cols, &vals);
            let mut perm: Vec<usize> = (0..rows).collect();
            // Deterministic shuffle from the seed.
            let mut rng = crate::rng::stream(seed, "perm", 0);
            for i in (1..rows).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let permuted = CostMatrix::from_fn(rows, cols, |r, l| c.entry(perm[r], l));
            let base = hungarian(&c).unwrap();
            let other = hungarian(&permuted).unwrap();
            let mut mapped: Vec<(usize, usize)> =
                other.pairs.iter().map(|&(q, l)| (perm[q], l)).collect();
            mapped.sort_unstable();
            prop_assert_eq!(base.pairs, mapped);
        }
    }
}
