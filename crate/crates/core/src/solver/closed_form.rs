//! Closed-form shortcuts. Each one is cross-checked against full enumeration
//! in the tests and the acceptance suite.

use serde::{Deserialize, Serialize};

use super::{GrundyValue, Solver, SolveError};
use crate::game::Move;

/// XOR of pile sizes.
pub fn nim_sum(piles: &[u32]) -> GrundyValue {
    GrundyValue(piles.iter().fold(0, |acc, &p| acc ^ p))
}

/// Grundy value of one pile of `n` where at most `max_take` may be removed.
pub fn nim_pile_grundy(n: u32, max_take: u32) -> GrundyValue {
    GrundyValue(n % (max_take + 1))
}

/// Fibonacci numbers indexed `1, 2, 3, 5, 8, ...` up to and including `limit`.
pub fn fibonacci_numbers(limit: u64) -> Vec<u64> {
    let mut fibs = vec![1u64, 2];
    loop {
        let next = fibs[fibs.len() - 1] + fibs[fibs.len() - 2];
        if next > limit {
            break;
        }
        fibs.push(next);
    }
    fibs.retain(|&f| f <= limit);
    fibs
}

pub fn is_fibonacci(n: u64) -> bool {
    n >= 1 && fibonacci_numbers(n).last() == Some(&n)
}

/// Greedy Zeckendorf decomposition, largest term first. Panics on zero.
pub fn zeckendorf(n: u64) -> Vec<u64> {
    assert!(n >= 1, "zeckendorf is defined for positive integers");
    let fibs = fibonacci_numbers(n);
    let mut rest = n;
    let mut terms = Vec::new();
    for &f in fibs.iter().rev() {
        if f <= rest {
            terms.push(f);
            rest -= f;
        }
        if rest == 0 {
            break;
        }
    }
    terms
}

/// Opening move for a Fibonacci Nim pile of `n`: remove the smallest
/// Zeckendorf term, or `None` when `n` itself is a Fibonacci number.
pub fn fibonacci_optimal_opening(n: u32) -> Option<Move> {
    if n == 0 || is_fibonacci(n as u64) {
        return None;
    }
    let smallest = *zeckendorf(n as u64).last().expect("nonempty for n >= 1");
    Some(Move::Fibonacci { count: smallest as u32 })
}

/// Kayles Grundy values for single rows of length `0..=n_max`, by full
/// enumeration.
pub fn kayles_grundy_sequence(n_max: u32) -> Result<Vec<GrundyValue>, SolveError> {
    let mut solver = Solver::default();
    Ok(solver.kayles_sequence(n_max)?.into_iter().map(GrundyValue).collect())
}

/// The symmetric L opening for an `n x n` Chomp square: bite the cell
/// diagonally adjacent to the poison, leaving two arms of equal length.
pub fn chomp_square_opening(n: u32) -> Move {
    assert!(n >= 2, "square chomp opening needs n >= 2");
    Move::Chomp { row: 1, col: 1 }
}

/// Comparison of enumerated Kayles values with commonly quoted shortcut
/// values and the "n mod 12" periodicity rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KaylesAudit {
    pub n_max: u32,
    pub sequence: Vec<u32>,
    /// Worked values `(n, claimed G(n))` that were checked.
    pub claimed: Vec<(u32, u32)>,
    /// Claims that disagree with enumeration, as `(n, claimed, enumerated)`.
    pub mismatches: Vec<(u32, u32, u32)>,
    /// Smallest `start` such that `G(n) = G(n + 12)` for all checked `n >= start`,
    /// if the checked range shows period 12 at all.
    pub period_12_from: Option<u32>,
    /// Number of `n >= 70` in range where `G(n) != n mod 12`.
    pub mod_12_rule_violations: usize,
}

/// Audits enumerated values against the worked example `G(3) = 0, G(4) = 1`
/// (derived there from incomplete move sets) and the `n mod 12` rule.
pub fn kayles_audit(n_max: u32) -> Result<KaylesAudit, SolveError> {
    let sequence: Vec<u32> = kayles_grundy_sequence(n_max)?.into_iter().map(|g| g.0).collect();
    let claimed: Vec<(u32, u32)> = [(0, 0), (1, 1), (2, 2), (3, 0), (4, 1)]
        .into_iter()
        .filter(|&(n, _)| n <= n_max)
        .collect();
    let mismatches = claimed
        .iter()
        .filter(|&&(n, g)| sequence[n as usize] != g)
        .map(|&(n, g)| (n, g, sequence[n as usize]))
        .collect();
    let len = sequence.len();
    let period_12_from = if len > 12 {
        let mut start = len - 12;
        while start > 0 && sequence[start - 1] == sequence[start - 1 + 12] {
            start -= 1;
        }
        // Require the periodic stretch to cover at least two full periods.
        (len - start >= 24).then_some(start as u32)
    } else {
        None
    };
    let mod_12_rule_violations = sequence
        .iter()
        .enumerate()
        .skip(70)
        .filter(|&(n, &g)| g as usize != n % 12)
        .count();
    Ok(KaylesAudit { n_max, sequence, claimed, mismatches, period_12_from, mod_12_rule_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameState, PlayConvention};
    use crate::solver::PositionLabel;

    #[test]
    fn nim_sums() {
        assert_eq!(nim_sum(&[3, 4, 5]), GrundyValue(2));
        assert_eq!(nim_sum(&[17]), GrundyValue(17));
        assert_eq!(nim_pile_grundy(31, 3), GrundyValue(3));
    }

    #[test]
    fn zeckendorf_examples() {
        assert_eq!(zeckendorf(20), vec![13, 5, 2]);
        assert_eq!(zeckendorf(1), vec![1]);
        assert_eq!(zeckendorf(100), vec![89, 8, 3]);
    }

    /// Exhaustive subset search: every representation of `n` as a sum of
    /// distinct, pairwise non-consecutive Fibonacci numbers.
    fn all_representations(n: u64, fibs: &[u64]) -> Vec<Vec<u64>> {
        fn go(i: usize, rest: u64, fibs: &[u64], cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
            if rest == 0 {
                out.push(cur.clone());
                return;
            }
            if i >= fibs.len() {
                return;
            }
            // Take fibs[i] (descending order), then skip the adjacent index.
            if fibs[i] <= rest {
                cur.push(fibs[i]);
                go(i + 2, rest - fibs[i], fibs, cur, out);
                cur.pop();
            }
            go(i + 1, rest, fibs, cur, out);
        }
        let mut desc = fibs.to_vec();
        desc.reverse();
        let mut out = Vec::new();
        go(0, n, &desc, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn zeckendorf_is_unique_and_greedy() {
        let fibs = fibonacci_numbers(1000);
        for n in 1..=500u64 {
            let reps = all_representations(n, &fibs);
            assert_eq!(reps.len(), 1, "n = {n}");
            assert_eq!(reps[0], zeckendorf(n), "n = {n}");
            let z = zeckendorf(n);
            assert_eq!(z.iter().sum::<u64>(), n);
            assert!(z.windows(2).all(|w| w[0] > w[1]));
            let idx: Vec<usize> = z.iter().map(|t| fibs.iter().position(|f| f == t).unwrap()).collect();
            assert!(idx.windows(2).all(|w| w[0] >= w[1] + 2));
        }
    }

    #[test]
    fn fibonacci_openings() {
        assert_eq!(fibonacci_optimal_opening(20), Some(Move::Fibonacci { count: 2 }));
        assert_eq!(fibonacci_optimal_opening(13), None);
        assert_eq!(fibonacci_optimal_opening(18), Some(Move::Fibonacci { count: 5 }));
    }

    #[test]
    fn fibonacci_openings_agree_with_minimax() {
        let mut solver = Solver::default();
        for n in 1..=60u32 {
            let state = GameState::fibonacci_opening(n);
            let play = if state.is_terminal() {
                None
            } else {
                Some(solver.optimal_moves(&state, PlayConvention::Normal).unwrap())
            };
            match fibonacci_optimal_opening(n) {
                None => assert!(play.is_none_or(|p| p.is_losing()), "n = {n}"),
                Some(mv) => {
                    let play = play.unwrap();
                    assert!(!play.is_losing());
                    assert!(play.moves().contains(&mv), "n = {n}");
                }
            }
        }
    }

    #[test]
    fn kayles_small_values() {
        let seq = kayles_grundy_sequence(6).unwrap();
        let v: Vec<u32> = seq.iter().map(|g| g.0).collect();
        assert_eq!(&v[..3], &[0, 1, 2]);
        // Row of 3: moves reach (2), (1)+(1) and (1), so mex{2, 0, 1}.
        assert_eq!(v[3], 3);
        assert_ne!(v[5] ^ v[6], 0);
    }

    #[test]
    fn chomp_square_opening_is_winning() {
        let mut solver = Solver::default();
        for n in 2..=7 {
            let state = GameState::chomp_full(n, n);
            let next = state.apply(&chomp_square_opening(n)).unwrap();
            let GameState::Chomp(c) = &next else { panic!() };
            assert_eq!(c.cells(), 2 * n - 1);
            assert_eq!(solver.label_minimax(&next, PlayConvention::Poison).unwrap(), PositionLabel::Loss);
        }
    }

    #[test]
    fn audit_flags_worked_example() {
        let audit = kayles_audit(100).unwrap();
        assert_eq!(audit.mismatches[0], (3, 0, 3));
        assert!(audit.mod_12_rule_violations > 0);
        assert!(audit.period_12_from.is_some());
    }
}
