//! Set partitions of the input points, enumerated as restricted-growth strings.
//!
//! With an unrestricted downstream map, a representation matters only through
//! its level sets, so partitions of `X` stand in for all representations.

use std::sync::Arc;

use crate::env::OutcomeSpace;
use crate::error::{Error, Result};

/// A grouping of the input points into non-empty, disjoint cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    space: Arc<OutcomeSpace>,
    cell_of: Vec<usize>,
    cells: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from arbitrary per-point labels; cells are numbered
    /// in order of first appearance.
    pub fn from_labels<L: PartialEq>(space: Arc<OutcomeSpace>, labels: &[L]) -> Result<Self> {
        if labels.len() != space.len_x() {
            return Err(Error::Contract(format!(
                "{} labels for {} input points",
                labels.len(),
                space.len_x()
            )));
        }
        let mut seen: Vec<&L> = Vec::new();
        let rgs: Vec<usize> = labels
            .iter()
            .map(|l| match seen.iter().position(|s| *s == l) {
                Some(k) => k,
                None => {
                    seen.push(l);
                    seen.len() - 1
                }
            })
            .collect();
        Ok(Self::from_rgs(space, rgs))
    }

    /// Groups points by the value of `key`.
    pub fn by_key<K, F>(space: Arc<OutcomeSpace>, key: F) -> Self
    where
        K: PartialEq,
        F: Fn(&[i32]) -> K,
    {
        let labels: Vec<K> = space.x_points().iter().map(|x| key(x)).collect();
        Self::from_labels(space, &labels).expect("one label per point")
    }

    pub(crate) fn from_rgs(space: Arc<OutcomeSpace>, rgs: Vec<usize>) -> Self {
        let ncells = rgs.iter().max().map_or(0, |m| m + 1);
        let mut cells = vec![Vec::new(); ncells];
        for (i, &c) in rgs.iter().enumerate() {
            cells[c].push(i);
        }
        Partition {
            space,
            cell_of: rgs,
            cells,
        }
    }

    pub fn space(&self) -> &Arc<OutcomeSpace> {
        &self.space
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell_of(&self, x: usize) -> usize {
        self.cell_of[x]
    }

    /// The restricted-growth string (cell index of each point).
    pub fn labels(&self) -> &[usize] {
        &self.cell_of
    }

    /// Each cell as a bitmask over point indices.
    pub fn cell_masks(&self) -> Vec<u32> {
        self.cells
            .iter()
            .map(|c| c.iter().fold(0u32, |m, &i| m | (1 << i)))
            .collect()
    }

    pub fn describe(&self) -> String {
        let cells: Vec<String> = self
            .cells
            .iter()
            .map(|c| {
                let pts: Vec<String> = c.iter().map(|&i| self.space.format_point(i)).collect();
                format!("{{{}}}", pts.join(" "))
            })
            .collect();
        cells.join(" | ")
    }
}

/// Lexicographic restricted-growth strings of length `n`.
#[derive(Debug, Clone)]
pub struct RestrictedGrowth {
    current: Vec<usize>,
    /// `prefix_max[i] = max(current[..=i])`
    prefix_max: Vec<usize>,
    done: bool,
}

impl RestrictedGrowth {
    pub fn new(n: usize) -> Self {
        RestrictedGrowth {
            current: vec![0; n],
            prefix_max: vec![0; n],
            done: n == 0,
        }
    }

    fn advance(&mut self) {
        let n = self.current.len();
        let mut i = n;
        while i > 1 {
            i -= 1;
            if self.current[i] <= self.prefix_max[i - 1] {
                self.current[i] += 1;
                self.prefix_max[i] = self.prefix_max[i - 1].max(self.current[i]);
                for j in (i + 1)..n {
                    self.current[j] = 0;
                    self.prefix_max[j] = self.prefix_max[i];
                }
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for RestrictedGrowth {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.advance();
        Some(out)
    }
}

/// Every set partition of the space's input points, each exactly once.
pub struct Partitions {
    space: Arc<OutcomeSpace>,
    strings: RestrictedGrowth,
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        self.strings
            .next()
            .map(|rgs| Partition::from_rgs(self.space.clone(), rgs))
    }
}

pub fn enumerate_partitions(space: &Arc<OutcomeSpace>) -> Result<Partitions> {
    if space.len_x() > OutcomeSpace::MAX_POINTS {
        return Err(Error::Contract(format!(
            "{} points exceeds the partition enumeration cap of {}",
            space.len_x(),
            OutcomeSpace::MAX_POINTS
        )));
    }
    Ok(Partitions {
        space: space.clone(),
        strings: RestrictedGrowth::new(space.len_x()),
    })
}

/// Bell numbers via the Bell triangle.
pub fn bell_number(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_space(n: usize) -> Arc<OutcomeSpace> {
        Arc::new(
            OutcomeSpace::new((0..n as i32).map(|i| vec![i]).collect(), vec![-1.0, 1.0]).unwrap(),
        )
    }

    /// `B(n+1) = Σ_k C(n,k) B(k)`
    fn bell_by_recurrence(n: usize) -> u64 {
        let mut bell = vec![1u64];
        for m in 0..n {
            let mut binom = 1u64;
            let mut acc = 0u64;
            for (k, b) in bell.iter().enumerate() {
                acc += binom * b;
                binom = binom * (m - k) as u64 / (k + 1) as u64;
            }
            bell.push(acc);
        }
        bell[n]
    }

    #[test]
    fn counts_match_bell_numbers() {
        assert_eq!(enumerate_partitions(&line_space(1)).unwrap().count(), 1);
        assert_eq!(enumerate_partitions(&line_space(4)).unwrap().count(), 15);
        assert_eq!(bell_by_recurrence(9), 21147);
        assert_eq!(
            enumerate_partitions(&line_space(9)).unwrap().count() as u64,
            bell_by_recurrence(9)
        );
        for n in 0..=12 {
            assert_eq!(bell_number(n), bell_by_recurrence(n));
        }
    }

    #[test]
    fn strings_are_lexicographic_and_distinct() {
        let all: Vec<Vec<usize>> = RestrictedGrowth::new(6).collect();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        for s in &all {
            let mut max = 0;
            assert_eq!(s[0], 0);
            for &v in &s[1..] {
                assert!(v <= max + 1);
                max = max.max(v);
            }
        }
    }

    #[test]
    fn cells_cover_disjointly() {
        for p in enumerate_partitions(&line_space(5)).unwrap() {
            let mut seen = [false; 5];
            for c in p.cells() {
                assert!(!c.is_empty());
                for &i in c {
                    assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn from_labels_canonicalizes() {
        let s = OutcomeSpace::two_bit();
        let p = Partition::by_key(s.clone(), |x| x[0] * x[1]);
        assert_eq!(p.labels(), &[0, 1, 1, 0]);
        let q = Partition::from_labels(s, &["b", "a", "a", "b"]).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.cell_masks(), vec![0b1001, 0b0110]);
    }
}
