//! Heuristic mu-pattern assignment that spreads elevated frames evenly.

use std::collections::BTreeMap;

use crate::model::MuPattern;
use crate::time::Dur;

/// Round-robin over each stream's pool, separately per (period, pool) class,
/// so streams that share a class get rotated patterns.
pub fn choose_mu_patterns(periods: &[Dur], pools: &[Vec<MuPattern>]) -> Vec<MuPattern> {
    assert_eq!(periods.len(), pools.len());
    let mut next: BTreeMap<(Dur, Vec<String>), usize> = BTreeMap::new();
    periods
        .iter()
        .zip(pools)
        .map(|(&p, pool)| {
            assert!(!pool.is_empty(), "empty mu pool");
            let key = (p, pool.iter().map(|m| m.to_string()).collect());
            let i = next.entry(key).or_insert(0);
            let mu = pool[*i % pool.len()].clone();
            *i += 1;
            mu
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::MS;

    fn pool(s: &[&str]) -> Vec<MuPattern> {
        s.iter().map(|x| MuPattern::parse(x).unwrap()).collect()
    }

    fn count(v: &[MuPattern], s: &str) -> usize {
        v.iter().filter(|m| m.to_string() == s).count()
    }

    #[test]
    fn six_streams_three_patterns() {
        let p = pool(&["001", "010", "100"]);
        let out = choose_mu_patterns(&[20 * MS; 6], &vec![p; 6]);
        for s in ["001", "010", "100"] {
            assert_eq!(count(&out, s), 2);
        }
    }

    #[test]
    fn single_stream_gets_first_entry() {
        let out = choose_mu_patterns(&[MS], &[pool(&["010", "001"])]);
        assert_eq!(out[0].to_string(), "010");
    }

    #[test]
    fn round_robin_is_balanced() {
        let out = choose_mu_patterns(&[MS; 3], &vec![pool(&["01", "10"]); 3]);
        let (a, b) = (count(&out, "01"), count(&out, "10"));
        assert!(a.abs_diff(b) <= 1);
    }

    #[test]
    fn classes_rotate_independently() {
        let p = pool(&["01", "10"]);
        let out = choose_mu_patterns(&[MS, 2 * MS, MS, 2 * MS], &vec![p; 4]);
        let s: Vec<_> = out.iter().map(|m| m.to_string()).collect();
        assert_eq!(s, ["01", "01", "10", "10"]);
    }
}
