//! Rectangular linear assignment with forbidden entries.
//!
//! The solver maximizes the number of matched pairs first and minimizes the
//! total cost among those matchings second. Among equally good matchings it
//! returns the lexicographically smallest `(row, col)` list.

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    rows: usize,
    cols: usize,
    cost: Vec<Option<f64>>,
}

impl AssignmentProblem {
    /// All entries allowed with cost `fill`.
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        Self {
            rows,
            cols,
            cost: vec![Some(fill); rows * cols],
        }
    }

    /// All entries forbidden until set.
    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cost: vec![None; rows * cols],
        }
    }

    /// Dense matrix; non-finite entries are forbidden.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        let cost = rows
            .iter()
            .flatten()
            .map(|&c| c.is_finite().then_some(c))
            .collect();
        Self {
            rows: rows.len(),
            cols,
            cost,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, row: usize, col: usize, cost: f64) {
        assert!(cost.is_finite(), "allowed costs must be finite");
        self.cost[row * self.cols + col] = Some(cost);
    }

    pub fn forbid(&mut self, row: usize, col: usize) {
        self.cost[row * self.cols + col] = None;
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cost[row * self.cols + col]
    }

    /// Total cost of a matching; `None` if it uses a forbidden entry.
    pub fn total(&self, pairs: &[(usize, usize)]) -> Option<f64> {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

/// Internal square-or-wide problem: `n` rows, `m >= n` columns, every row
/// matched, forbidden entries priced at a penalty that dominates any cost
/// difference between matchings.
struct Dense {
    n: usize,
    m: usize,
    transposed: bool,
    cost: Vec<f64>,
}

struct Solution {
    /// Original-orientation pairs that are allowed.
    pairs: Vec<(usize, usize)>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Dense {
    fn build(p: &AssignmentProblem, keep_rows: &[usize], keep_cols: &[usize]) -> Option<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in keep_rows {
            for &c in keep_cols {
                if let Some(x) = p.get(r, c) {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
        }
        if !lo.is_finite() {
            return None;
        }
        let transposed = keep_rows.len() > keep_cols.len();
        let (n, m) = match transposed {
            false => (keep_rows.len(), keep_cols.len()),
            true => (keep_cols.len(), keep_rows.len()),
        };
        let span = hi - lo;
        let penalty = (span + 1.0) * (n as f64 + 1.0);
        let mut cost = vec![0.0; n * m];
        for (a, &r) in keep_rows.iter().enumerate() {
            for (b, &c) in keep_cols.iter().enumerate() {
                let x = p.get(r, c).map_or(penalty, |x| x - lo);
                let idx = if transposed { b * m + a } else { a * m + b };
                cost[idx] = x;
            }
        }
        Some(Self {
            n,
            m,
            transposed,
            cost,
        })
    }

    /// Shortest augmenting path Hungarian method, O(n^2 m).
    fn solve(&self) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut u = vec![0.0f64; n + 1];
        let mut v = vec![0.0f64; m + 1];
        let mut p = vec![0usize; m + 1];
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
                    if used[j] {
                        continue;
                    }
                    let cur = self.cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
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
        let mut row_to_col = vec![0usize; n];
        for j in 1..=m {
            if p[j] > 0 {
                row_to_col[p[j] - 1] = j - 1;
            }
        }
        (row_to_col, u[1..].to_vec(), v[1..].to_vec())
    }
}

fn solve_subset(p: &AssignmentProblem, keep_rows: &[usize], keep_cols: &[usize]) -> Option<Solution> {
    let dense = Dense::build(p, keep_rows, keep_cols)?;
    let (row_to_col, u, v) = dense.solve();
    let mut pairs: Vec<(usize, usize)> = row_to_col
        .iter()
        .enumerate()
        .map(|(a, &b)| match dense.transposed {
            false => (keep_rows[a], keep_cols[b]),
            true => (keep_rows[b], keep_cols[a]),
        })
        .filter(|&(r, c)| p.get(r, c).is_some())
        .collect();
    pairs.sort_unstable();
    // Potentials indexed by original row/col for the tightness test.
    let (mut ur, mut vc) = (vec![f64::NAN; p.rows], vec![f64::NAN; p.cols]);
    let (row_pot, col_pot) = match dense.transposed {
        false => (&u, &v),
        true => (&v, &u),
    };
    for (a, &r) in keep_rows.iter().enumerate() {
        ur[r] = row_pot[a];
    }
    for (b, &c) in keep_cols.iter().enumerate() {
        vc[c] = col_pot[b];
    }
    Some(Solution { pairs, u: ur, v: vc })
}

/// `(matched count, total cost)` of an allowed matching.
fn score(p: &AssignmentProblem, pairs: &[(usize, usize)]) -> (usize, f64) {
    (pairs.len(), p.total(pairs).unwrap_or(f64::NAN))
}

fn same_score(a: (usize, f64), b: (usize, f64), tol: f64) -> bool {
    a.0 == b.0 && (a.1 - b.1).abs() <= tol
}

/// Optimal matching without the lexicographic tie-break. Any optimum.
pub(crate) fn solve_any(p: &AssignmentProblem) -> Vec<(usize, usize)> {
    let rows: Vec<usize> = (0..p.rows).collect();
    let cols: Vec<usize> = (0..p.cols).collect();
    solve_subset(p, &rows, &cols).map(|s| s.pairs).unwrap_or_default()
}

pub fn solve_assignment(p: &AssignmentProblem) -> Vec<(usize, usize)> {
    let rows: Vec<usize> = (0..p.rows).collect();
    let cols: Vec<usize> = (0..p.cols).collect();
    let Some(first) = solve_subset(p, &rows, &cols) else {
        return Vec::new();
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in p.cost.iter().flatten() {
        lo = lo.min(*c);
        hi = hi.max(*c);
    }
    let span = hi - lo;
    let tight_eps = 1e-9 * (span + 1.0) * (p.rows.max(p.cols) as f64 + 1.0);
    let best = score(p, &first.pairs);
    let tol = 1e-9 * (1.0 + best.1.abs());
    let penalty_shift = lo;

    // Greedy over rows: keep the smallest column that still admits an optimum.
    let mut current = first.pairs.clone();
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut fixed_unmatched: Vec<usize> = Vec::new();
    for i in 0..p.rows {
        let cur = current.iter().find(|&&(r, _)| r == i).map(|&(_, c)| c);
        let used: Vec<usize> = fixed.iter().map(|&(_, c)| c).collect();
        let mut accepted = false;
        for j in 0..cur.unwrap_or(p.cols) {
            let Some(cij) = p.get(i, j) else { continue };
            if used.contains(&j) {
                continue;
            }
            let reduced = (cij - penalty_shift) - first.u[i] - first.v[j];
            if reduced.abs() > tight_eps {
                continue;
            }
            let rest_rows: Vec<usize> = (i + 1..p.rows).filter(|r| !fixed_unmatched.contains(r)).collect();
            let rest_cols: Vec<usize> = (0..p.cols).filter(|c| *c != j && !used.contains(c)).collect();
            let mut trial: Vec<(usize, usize)> = fixed.clone();
            trial.push((i, j));
            if let Some(sol) = solve_subset(p, &rest_rows, &rest_cols) {
                trial.extend(sol.pairs);
            }
            if same_score(score(p, &trial), best, tol) {
                fixed.push((i, j));
                trial.sort_unstable();
                current = trial;
                accepted = true;
                break;
            }
        }
        if !accepted {
            match cur {
                Some(c) => fixed.push((i, c)),
                None => fixed_unmatched.push(i),
            }
        }
    }
    current.sort_unstable();
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive oracle: best (count, -cost) over all partial injective maps.
    fn brute(p: &AssignmentProblem) -> (usize, f64) {
        fn rec(p: &AssignmentProblem, row: usize, used: &mut Vec<bool>, acc: (usize, f64), best: &mut (usize, f64)) {
            if row == p.rows() {
                if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                    *best = acc;
                }
                return;
            }
            rec(p, row + 1, used, acc, best);
            for c in 0..p.cols() {
                if !used[c] {
                    if let Some(x) = p.get(row, c) {
                        used[c] = true;
                        rec(p, row + 1, used, (acc.0 + 1, acc.1 + x), best);
                        used[c] = false;
                    }
                }
            }
        }
        let mut best = (0, 0.0);
        rec(p, 0, &mut vec![false; p.cols()], (0, 0.0), &mut best);
        best
    }

    fn random_problem(seed: u64, max_dim: usize) -> AssignmentProblem {
        let mut rng = seed::rng(&[seed]);
        let r = rng.random_range(1..=max_dim);
        let c = rng.random_range(1..=max_dim);
        let forbid_rate = rng.random_range(0.0..0.6);
        let mut p = AssignmentProblem::forbidden(r, c);
        for i in 0..r {
            for j in 0..c {
                if !rng.random_bool(forbid_rate) {
                    p.set(i, j, rng.random_range(0..20) as f64);
                }
            }
        }
        p
    }

    #[test]
    fn small_examples() {
        let p = AssignmentProblem::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(solve_assignment(&p), vec![(0, 0), (1, 1)]);
        assert_eq!(solve_assignment(&AssignmentProblem::from_rows(&[vec![5.0]])), vec![(0, 0)]);
        assert!(solve_assignment(&AssignmentProblem::new(0, 0, 0.0)).is_empty());
        assert!(solve_assignment(&AssignmentProblem::forbidden(2, 3)).is_empty());
    }

    #[test]
    fn cardinality_beats_cost() {
        // (0,0) alone is cheapest, but two pairs are possible.
        let inf = f64::INFINITY;
        let p = AssignmentProblem::from_rows(&[vec![0.0, 9.0], vec![1.0, inf]]);
        assert_eq!(solve_assignment(&p), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let p = AssignmentProblem::new(3, 3, 1.0);
        assert_eq!(solve_assignment(&p), vec![(0, 0), (1, 1), (2, 2)]);
        let p = AssignmentProblem::new(2, 4, 0.0);
        assert_eq!(solve_assignment(&p), vec![(0, 0), (1, 1)]);
        let p = AssignmentProblem::new(4, 2, 0.0);
        assert_eq!(solve_assignment(&p), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn tie_break_oracle_on_small_integer_matrices() {
        // Lexicographically smallest optimal list, by enumeration.
        fn all_optimal(p: &AssignmentProblem, best: (usize, f64)) -> Vec<Vec<(usize, usize)>> {
            let mut out = Vec::new();
            fn rec(p: &AssignmentProblem, row: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, best: (usize, f64), out: &mut Vec<Vec<(usize, usize)>>) {
                if row == p.rows() {
                    let s = (cur.len(), p.total(cur).unwrap());
                    if s.0 == best.0 && s.1 == best.1 {
                        out.push(cur.clone());
                    }
                    return;
                }
                rec(p, row + 1, used, cur, best, out);
                for c in 0..p.cols() {
                    if !used[c] && p.get(row, c).is_some() {
                        used[c] = true;
                        cur.push((row, c));
                        rec(p, row + 1, used, cur, best, out);
                        cur.pop();
                        used[c] = false;
                    }
                }
            }
            rec(p, 0, &mut vec![false; p.cols()], &mut Vec::new(), best, &mut out);
            out
        }
        for seed in 0..300u64 {
            let mut rng = seed::rng(&[seed, 5]);
            let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let mut p = AssignmentProblem::forbidden(r, c);
            for i in 0..r {
                for j in 0..c {
                    if rng.random_bool(0.8) {
                        p.set(i, j, rng.random_range(0..3) as f64);
                    }
                }
            }
            let best = brute(&p);
            let expected = all_optimal(&p, best).into_iter().min().unwrap();
            assert_eq!(solve_assignment(&p), expected, "seed {seed}");
        }
    }

    #[test]
    fn matches_brute_force_up_to_9x9() {
        for seed in 0..200u64 {
            let p = random_problem(seed, 9);
            let got = solve_assignment(&p);
            let (count, cost) = brute(&p);
            assert_eq!(got.len(), count, "seed {seed}");
            assert_eq!(p.total(&got).unwrap(), cost, "seed {seed}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn solution_is_a_valid_matching(seed in 0u64..1_000_000) {
            let p = random_problem(seed, 7);
            let got = solve_assignment(&p);
            let mut rows: Vec<_> = got.iter().map(|x| x.0).collect();
            let mut cols: Vec<_> = got.iter().map(|x| x.1).collect();
            rows.dedup();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(rows.len(), got.len());
            prop_assert_eq!(cols.len(), got.len());
            prop_assert!(p.total(&got).is_some());
            let any = solve_any(&p);
            prop_assert_eq!(any.len(), got.len());
            prop_assert_eq!(p.total(&any), p.total(&got));
        }
    }
}
