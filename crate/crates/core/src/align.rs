//! Maximum-weight bipartite alignment of predicted calls to reference calls.
//!
//! Pair affinity is `δ(name) + Jaccard(keys)`. Weights are rationals with
//! small denominators, so the assignment runs on exact integers: every
//! affinity is scaled by the lcm of the key-union sizes that occur. Among
//! affinity-optimal matchings the one agreeing on the most argument values
//! wins, then the lexicographically smallest `(ref, pred)` pair list.

use serde::{Deserialize, Serialize};

use crate::model::{canonicalize_value, ToolCall};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `(ref_index, pred_index)`, sorted by ref index.
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: f64,
    pub unmatched_refs: Vec<usize>,
    pub unmatched_preds: Vec<usize>,
}

/// `(|K_a ∩ K_b|, |K_a ∪ K_b|)`.
pub(crate) fn key_overlap(a: &ToolCall, b: &ToolCall) -> (usize, usize) {
    let inter = a
        .arguments
        .keys()
        .filter(|k| b.arguments.contains_key(*k))
        .count();
    (inter, a.arguments.len() + b.arguments.len() - inter)
}

/// Jaccard overlap of parameter-key sets; two empty sets overlap fully.
pub fn key_jaccard(a: &ToolCall, b: &ToolCall) -> f64 {
    match key_overlap(a, b) {
        (_, 0) => 1.0,
        (i, u) => i as f64 / u as f64,
    }
}

/// `s_match`: name indicator plus key Jaccard, in `[0, 2]`.
pub fn match_score(reference: &ToolCall, pred: &ToolCall) -> f64 {
    let delta = if reference.name == pred.name { 1.0 } else { 0.0 };
    delta + key_jaccard(reference, pred)
}

fn value_agreements(reference: &ToolCall, pred: &ToolCall) -> u128 {
    reference
        .arguments
        .iter()
        .filter(|(k, v)| {
            pred.arguments
                .get(*k)
                .is_some_and(|p| canonicalize_value(p) == canonicalize_value(v))
        })
        .count() as u128
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

struct Weights {
    /// combined weight: affinity·scale·tiebreak + value agreements
    combined: Vec<Vec<i128>>,
    scale: u128,
    tiebreak: u128,
}

impl Weights {
    fn build(refs: &[ToolCall], preds: &[ToolCall]) -> Weights {
        let overlaps: Vec<Vec<(usize, usize)>> = refs
            .iter()
            .map(|r| preds.iter().map(|p| key_overlap(r, p)).collect())
            .collect();
        // lcm of the union sizes in play; falls back to a fixed 2^60 grid on overflow
        let mut scale: u128 = 1;
        for &(_, union) in overlaps.iter().flatten() {
            if union > 0 {
                let u = union as u128;
                match (scale / gcd(scale, u)).checked_mul(u) {
                    Some(l) if l < (1u128 << 60) => scale = l,
                    _ => {
                        scale = 1u128 << 60;
                        break;
                    }
                }
            }
        }
        let tiebreak = 1 + refs.iter().map(|r| r.arguments.len() as u128).sum::<u128>();
        let combined = refs
            .iter()
            .zip(&overlaps)
            .map(|(r, row)| {
                preds
                    .iter()
                    .zip(row)
                    .map(|(p, &(inter, union))| {
                        let delta = if r.name == p.name { scale } else { 0 };
                        let jac = if union == 0 {
                            scale
                        } else {
                            inter as u128 * scale / union as u128
                        };
                        ((delta + jac) * tiebreak + value_agreements(r, p)) as i128
                    })
                    .collect()
            })
            .collect();
        Weights {
            combined,
            scale,
            tiebreak,
        }
    }

    fn affinity(&self, i: usize, j: usize) -> u128 {
        self.combined[i][j] as u128 / self.tiebreak
    }
}

/// Maximum total weight of a matching between `rows` and `cols`
/// (Kuhn–Munkres with potentials; zero-weight pairs allowed).
fn best_total(w: &[Vec<i128>], rows: &[usize], cols: &[usize]) -> i128 {
    if rows.is_empty() || cols.is_empty() {
        return 0;
    }
    type Cost<'a> = Box<dyn Fn(usize, usize) -> i128 + 'a>;
    let (n, m, cost): (usize, usize, Cost) = if rows.len() <= cols.len()
    {
        (rows.len(), cols.len(), Box::new(|a, b| -w[rows[a]][cols[b]]))
    } else {
        (cols.len(), rows.len(), Box::new(|a, b| -w[rows[b]][cols[a]]))
    };
    const INF: i128 = i128::MAX / 4;
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
    (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| -cost(p[j] - 1, j - 1))
        .sum()
}

/// Aligns predicted calls to reference calls by maximum-weight bipartite
/// matching. Every index of the smaller side is matched, zero-weight pairs
/// included.
pub fn align_calls(refs: &[ToolCall], preds: &[ToolCall]) -> Alignment {
    let weights = Weights::build(refs, preds);
    let w = &weights.combined;
    let rows: Vec<usize> = (0..refs.len()).collect();
    let mut free: Vec<usize> = (0..preds.len()).collect();
    let mut target = best_total(w, &rows, &free);
    let mut pairs = Vec::new();
    let mut unmatched_refs = Vec::new();
    for (idx, &i) in rows.iter().enumerate() {
        let rest = &rows[idx + 1..];
        let pick = free.iter().position(|&j| {
            let others: Vec<usize> = free.iter().copied().filter(|&c| c != j).collect();
            w[i][j] + best_total(w, rest, &others) == target
        });
        match pick {
            Some(pos) => {
                let j = free.remove(pos);
                target -= w[i][j];
                pairs.push((i, j));
            }
            None => unmatched_refs.push(i),
        }
    }
    let affinity: u128 = pairs.iter().map(|&(i, j)| weights.affinity(i, j)).sum();
    Alignment {
        total_weight: affinity as f64 / weights.scale as f64,
        pairs,
        unmatched_refs,
        unmatched_preds: free,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn call(name: &str, keys: &[&str]) -> ToolCall {
        keys.iter()
            .fold(ToolCall::new(name), |c, k| c.arg(*k, json!(1)))
    }

    #[test]
    fn match_score_examples() {
        let a = ToolCall::new("f").arg("a", json!(1)).arg("b", json!(2));
        let b = ToolCall::new("f").arg("a", json!(9)).arg("b", json!(9));
        assert_eq!(match_score(&a, &b), 2.0);
        assert_eq!(match_score(&call("f", &["a"]), &call("g", &["a"])), 1.0);
        assert_eq!(match_score(&call("f", &[]), &call("f", &[])), 2.0);
        assert_eq!(match_score(&call("f", &["a"]), &call("g", &["b"])), 0.0);
    }

    #[test]
    fn swapped_two_call_example() {
        let refs = [call("get_weather", &["city", "unit"]), call("get_time", &["city"])];
        let preds = [call("get_time", &["city"]), call("get_weather", &["city"])];
        let a = align_calls(&refs, &preds);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_weight, 3.5);
        assert!(a.unmatched_refs.is_empty() && a.unmatched_preds.is_empty());
    }

    #[test]
    fn empty_side() {
        let a = align_calls(&[], &[call("f", &[])]);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_preds, vec![0]);
        assert_eq!(a.total_weight, 0.0);
        let a = align_calls(&[call("f", &[])], &[]);
        assert_eq!(a.unmatched_refs, vec![0]);
    }

    #[test]
    fn singleton_identity() {
        let a = align_calls(&[call("f", &["a"])], &[call("f", &["a"])]);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.total_weight, 2.0);
    }

    #[test]
    fn zero_weight_pairs_are_admitted() {
        let a = align_calls(&[call("f", &["a"])], &[call("g", &["b"])]);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.total_weight, 0.0);
    }

    #[test]
    fn ties_go_to_value_agreement_then_lexicographic_order() {
        let refs = [
            ToolCall::new("f").arg("a", json!(1)),
            ToolCall::new("f").arg("a", json!(2)),
        ];
        let preds = [
            ToolCall::new("f").arg("a", json!(2)),
            ToolCall::new("f").arg("a", json!(1)),
        ];
        assert_eq!(align_calls(&refs, &preds).pairs, vec![(0, 1), (1, 0)]);
        let same = [call("f", &[]), call("f", &[])];
        assert_eq!(align_calls(&same, &same).pairs, vec![(0, 0), (1, 1)]);
        // surplus refs: the earliest ref that can be matched optimally wins
        let a = align_calls(&same, &[call("f", &[])]);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.unmatched_refs, vec![1]);
    }

    #[test]
    fn wide_key_unions_stay_exact() {
        let keys: Vec<String> = (0..7).map(|i| format!("k{i}")).collect();
        let k: Vec<&str> = keys.iter().map(String::as_str).collect();
        let refs = [call("f", &k[..7]), call("f", &k[..5]), call("g", &k[..3])];
        let preds = [call("f", &k[..2]), call("g", &k[1..4]), call("f", &k[2..7])];
        let a = align_calls(&refs, &preds);
        let direct: f64 = a
            .pairs
            .iter()
            .map(|&(i, j)| match_score(&refs[i], &preds[j]))
            .sum();
        assert!((a.total_weight - direct).abs() < 1e-12);
    }
}
