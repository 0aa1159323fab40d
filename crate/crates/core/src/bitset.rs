/// Fixed-length bit set over `[0, len)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitSet {
    words: Vec<u64>,
    len: u64,
}

impl BitSet {
    pub fn new(len: u64) -> Self {
        BitSet {
            words: vec![0; len.div_ceil(64) as usize],
            len,
        }
    }

    pub fn full(len: u64) -> Self {
        let mut s = BitSet::new(len);
        s.insert_range(0, len);
        s
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn insert(&mut self, bit: u64) {
        debug_assert!(bit < self.len);
        self.words[(bit >> 6) as usize] |= 1 << (bit & 63);
    }

    #[inline]
    pub fn contains(&self, bit: u64) -> bool {
        bit < self.len && self.words[(bit >> 6) as usize] & (1 << (bit & 63)) != 0
    }

    pub fn insert_range(&mut self, start: u64, end: u64) {
        for bit in start..end {
            self.insert(bit);
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as u64;
                w &= w - 1;
                Some(((i as u64) << 6) | t)
            })
        })
    }

    /// Lengths of alternating runs, starting with a (possibly empty) run of zeros.
    pub fn runs(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for bit in 0..self.len {
            if self.contains(bit) != current {
                runs.push(run);
                run = 0;
                current = !current;
            }
            run += 1;
        }
        runs.push(run);
        runs
    }

    /// Inverse of [`BitSet::runs`]; `None` if the runs overflow `len`.
    pub fn from_runs(len: u64, runs: &[u64]) -> Option<Self> {
        let mut s = BitSet::new(len);
        let mut pos = 0u64;
        for (i, &r) in runs.iter().enumerate() {
            let end = pos.checked_add(r)?;
            if end > len {
                return None;
            }
            if i % 2 == 1 {
                s.insert_range(pos, end);
            }
            pos = end;
        }
        (pos == len).then_some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_contains_count() {
        let mut s = BitSet::new(130);
        for b in [0, 63, 64, 129] {
            s.insert(b);
        }
        assert!(s.contains(64) && !s.contains(65) && !s.contains(500));
        assert_eq!(s.count_ones(), 4);
        assert_eq!(s.iter_ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert_eq!(BitSet::full(70).count_ones(), 70);
    }

    #[test]
    fn runs_round_trip() {
        let mut s = BitSet::new(10);
        s.insert_range(2, 5);
        s.insert(9);
        assert_eq!(s.runs(), vec![2, 3, 4, 1]);
        assert_eq!(BitSet::from_runs(10, &s.runs()), Some(s));
        assert_eq!(BitSet::from_runs(10, &[5, 6]), None);
        assert_eq!(BitSet::from_runs(10, &[5]), None);
    }
}
