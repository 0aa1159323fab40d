//! Finite-size cache placement.
//!
//! EN caches are filled deterministically with contiguous bit ranges per
//! file; user caches are filled independently at random, each user taking
//! exactly `floor(M_R F / N)` bits of every file. [`classify_bits`] then
//! splits every file into the `(EN tag, user set)` subfiles the delivery
//! scheme works with.

pub mod dump;

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use num::traits::{ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bitset::BitSet;
use crate::model::{en_layout, EnRegime, EnTag, NetworkConfig, UserSet};
use crate::rational::{from_u64, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    En(usize),
    User(usize),
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::En(i) => write!(f, "EN{}", i + 1),
            Node::User(k) => write!(f, "U{}", k + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlacementError {
    #[error("file size must be at least one bit")]
    EmptyFile,
    #[error("{node} caches {used} bits, limit is {limit}")]
    CapacityViolation { node: Node, used: u64, limit: u64 },
    #[error("EN ranges of file {file} do not partition [0, F): {detail}")]
    PartitionFailure { file: usize, detail: String },
    #[error("EN and user placements disagree: {0}")]
    Mismatch(String),
}

/// EN ranges of one file. Together they partition `[0, F)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileLayout {
    pub shared: Range<u64>,
    pub exclusive: Vec<Range<u64>>,
    pub cloud: Range<u64>,
}

impl FileLayout {
    /// `(tag, range)` pairs in layout order, empty ranges included.
    pub fn parts(&self) -> Vec<(EnTag, Range<u64>)> {
        let mut parts = Vec::with_capacity(self.exclusive.len() + 2);
        parts.push((EnTag::Shared, self.shared.clone()));
        parts.extend(
            self.exclusive
                .iter()
                .enumerate()
                .map(|(i, r)| (EnTag::Exclusive(i), r.clone())),
        );
        parts.push((EnTag::CloudOnly, self.cloud.clone()));
        parts
    }

    pub fn range_of(&self, tag: EnTag) -> Range<u64> {
        match tag {
            EnTag::Shared => self.shared.clone(),
            EnTag::Exclusive(i) => self.exclusive.get(i).cloned().unwrap_or(0..0),
            EnTag::CloudOnly => self.cloud.clone(),
        }
    }

    /// Bits of this file cached at EN `en`.
    pub fn cached_at(&self, en: usize) -> u64 {
        let own = self.exclusive.get(en).map_or(0, |r| r.end - r.start);
        (self.shared.end - self.shared.start) + own
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnPlacement {
    pub regime: EnRegime,
    pub file_size: u64,
    pub files: Vec<FileLayout>,
}

impl EnPlacement {
    pub fn kt(&self) -> usize {
        self.files.first().map_or(0, |f| f.exclusive.len())
    }
}

/// Per-(user, file) cached bit positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPlacement {
    pub file_size: u64,
    pub kr: usize,
    pub n: usize,
    pub seed: u64,
    caches: Vec<BitSet>,
}

impl UserPlacement {
    pub fn from_parts(file_size: u64, kr: usize, n: usize, seed: u64, caches: Vec<BitSet>) -> Option<Self> {
        (caches.len() == kr * n && caches.iter().all(|c| c.len() == file_size)).then_some(UserPlacement {
            file_size,
            kr,
            n,
            seed,
            caches,
        })
    }

    pub fn cache(&self, user: usize, file: usize) -> &BitSet {
        &self.caches[user * self.n + file]
    }

    pub fn contains(&self, user: usize, file: usize, bit: u64) -> bool {
        self.cache(user, file).contains(bit)
    }

    pub fn total_bits(&self, user: usize) -> u64 {
        (0..self.n).map(|f| self.cache(user, f).count_ones()).sum()
    }

    /// Bit mask of the users caching each bit of `file`.
    pub fn holder_masks(&self, file: usize) -> Vec<u64> {
        let mut masks = vec![0u64; self.file_size as usize];
        for user in 0..self.kr {
            for bit in self.cache(user, file).iter_ones() {
                masks[bit as usize] |= 1 << user;
            }
        }
        masks
    }
}

/// Observed subfile sizes in bits: per file, a count for every nonempty
/// `(EN tag, user set)` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalProfile {
    pub file_size: u64,
    pub kr: usize,
    cells: Vec<BTreeMap<(EnTag, UserSet), u64>>,
}

impl EmpiricalProfile {
    pub fn count(&self, file: usize, tag: EnTag, set: UserSet) -> u64 {
        self.cells[file].get(&(tag, set)).copied().unwrap_or(0)
    }

    pub fn cells(&self, file: usize) -> &BTreeMap<(EnTag, UserSet), u64> {
        &self.cells[file]
    }

    pub fn n_files(&self) -> usize {
        self.cells.len()
    }

    /// Counts per user set, summed over EN tags; indexed by set bits.
    pub fn subset_counts(&self, file: usize) -> Vec<u64> {
        let mut out = vec![0u64; 1 << self.kr];
        for (&(_, set), &c) in &self.cells[file] {
            out[set.bits() as usize] += c;
        }
        out
    }

    /// Bits of `file` cached at exactly `j` users, for EN tag `tag`.
    pub fn class_total(&self, file: usize, tag: EnTag, j: usize) -> u64 {
        self.cells[file]
            .iter()
            .filter(|((t, s), _)| *t == tag && s.len() == j)
            .map(|(_, &c)| c)
            .sum()
    }
}

/// Integer sizes for `targets` (in bits, exact rationals) summing to `total`.
/// Each size is the floor or ceiling of its target; leftover bits go to the
/// largest fractional remainders, lower index first on ties.
fn apportion(total: u64, targets: &[Rational]) -> Vec<u64> {
    let floors: Vec<u64> = targets
        .iter()
        .map(|t| t.floor().to_integer().to_u64().expect("target fits in u64"))
        .collect();
    let assigned: u64 = floors.iter().sum();
    let leftover = total.checked_sub(assigned).expect("targets exceed total") as usize;
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let rem: Vec<Rational> = targets.iter().map(|t| t - t.floor()).collect();
    order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
    debug_assert!(leftover <= rem.iter().filter(|r| !r.is_zero()).count());
    let mut out = floors;
    for &i in order.iter().take(leftover) {
        out[i] += 1;
    }
    out
}

pub fn place_en_caches(cfg: &NetworkConfig, file_size: u64) -> Result<EnPlacement, PlacementError> {
    if file_size == 0 {
        return Err(PlacementError::EmptyFile);
    }
    let layout = en_layout(cfg);
    let f = from_u64(file_size);
    let shared = (&layout.shared * &f).floor().to_integer().to_u64().expect("fits");
    let mut targets: Vec<Rational> = (0..cfg.kt()).map(|_| &layout.exclusive_each * &f).collect();
    targets.push(&layout.cloud * &f);
    let sizes = apportion(file_size - shared, &targets);

    let mut pos = shared;
    let mut exclusive = Vec::with_capacity(cfg.kt());
    for &s in &sizes[..cfg.kt()] {
        exclusive.push(pos..pos + s);
        pos += s;
    }
    let cloud = pos..pos + sizes[cfg.kt()];
    debug_assert_eq!(cloud.end, file_size);
    let file = FileLayout {
        shared: 0..shared,
        exclusive,
        cloud,
    };
    Ok(EnPlacement {
        regime: layout.regime,
        file_size,
        files: vec![file; cfg.n()],
    })
}

/// Independent RNG stream for one (user, file) pair.
fn user_file_rng(seed: u64, user: usize, file: usize, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((user * n + file) as u64);
    rng
}

pub fn place_user_caches(
    cfg: &NetworkConfig,
    file_size: u64,
    seed: u64,
) -> Result<UserPlacement, PlacementError> {
    if file_size == 0 {
        return Err(PlacementError::EmptyFile);
    }
    let per_file = (cfg.user_fraction() * from_u64(file_size))
        .floor()
        .to_integer()
        .to_u64()
        .expect("fits");
    let n = cfg.n();
    let caches: Vec<BitSet> = (0..cfg.kr() * n)
        .into_par_iter()
        .map(|idx| {
            let (user, file) = (idx / n, idx % n);
            if per_file == file_size {
                return BitSet::full(file_size);
            }
            let mut set = BitSet::new(file_size);
            if per_file > 0 {
                let mut rng = user_file_rng(seed, user, file, n);
                for bit in rand::seq::index::sample(&mut rng, file_size as usize, per_file as usize) {
                    set.insert(bit as u64);
                }
            }
            set
        })
        .collect();
    Ok(UserPlacement {
        file_size,
        kr: cfg.kr(),
        n,
        seed,
        caches,
    })
}

fn tally(masks: &[u64], range: Range<u64>, kr: usize) -> Vec<(UserSet, u64)> {
    let slice = &masks[range.start as usize..range.end as usize];
    if kr <= 16 {
        let mut dense = vec![0u64; 1 << kr];
        for &m in slice {
            dense[m as usize] += 1;
        }
        dense
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(m, c)| (UserSet::from_bits(m as u64), c))
            .collect()
    } else {
        let mut sparse: HashMap<u64, u64> = HashMap::new();
        for &m in slice {
            *sparse.entry(m).or_default() += 1;
        }
        sparse.into_iter().map(|(m, c)| (UserSet::from_bits(m), c)).collect()
    }
}

pub fn classify_bits(en: &EnPlacement, users: &UserPlacement) -> Result<EmpiricalProfile, PlacementError> {
    if en.file_size != users.file_size {
        return Err(PlacementError::Mismatch(format!(
            "file size {} vs {}",
            en.file_size, users.file_size
        )));
    }
    if en.files.len() != users.n {
        return Err(PlacementError::Mismatch(format!(
            "{} files vs {}",
            en.files.len(),
            users.n
        )));
    }
    let cells = (0..users.n)
        .into_par_iter()
        .map(|file| {
            let masks = users.holder_masks(file);
            let mut cells = BTreeMap::new();
            for (tag, range) in en.files[file].parts() {
                for (set, c) in tally(&masks, range, users.kr) {
                    cells.insert((tag, set), c);
                }
            }
            cells
        })
        .collect();
    Ok(EmpiricalProfile {
        file_size: en.file_size,
        kr: users.kr,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeUsage {
    pub node: Node,
    pub used: u64,
    pub limit: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityReport {
    pub usage: Vec<NodeUsage>,
}

impl CapacityReport {
    pub fn used(&self, node: Node) -> Option<u64> {
        self.usage.iter().find(|u| u.node == node).map(|u| u.used)
    }
}

fn check_partition(file: usize, layout: &FileLayout, file_size: u64) -> Result<(), PlacementError> {
    let mut ranges: Vec<Range<u64>> = layout
        .parts()
        .into_iter()
        .map(|(_, r)| r)
        .filter(|r| r.end > r.start)
        .collect();
    ranges.sort_by_key(|r| r.start);
    let mut pos = 0;
    for r in &ranges {
        if r.start != pos {
            let detail = if r.start < pos {
                format!("range {}..{} overlaps bits below {}", r.start, r.end, pos)
            } else {
                format!("bits {}..{} are not covered", pos, r.start)
            };
            return Err(PlacementError::PartitionFailure { file, detail });
        }
        pos = r.end;
    }
    if pos != file_size {
        return Err(PlacementError::PartitionFailure {
            file,
            detail: format!("coverage ends at {pos}, file has {file_size} bits"),
        });
    }
    Ok(())
}

/// Checks the EN partition and every node's cache budget; returns per-node
/// usage summed over the library.
pub fn verify_capacity(
    en: &EnPlacement,
    users: &UserPlacement,
    cfg: &NetworkConfig,
) -> Result<CapacityReport, PlacementError> {
    let f = from_u64(en.file_size);
    for (file, layout) in en.files.iter().enumerate() {
        check_partition(file, layout, en.file_size)?;
    }
    let mut usage = Vec::new();

    let per_file_en = (cfg.mt() * &f / crate::rational::from_usize(cfg.n()))
        .ceil()
        .to_integer()
        .to_u64()
        .expect("fits");
    let en_limit = per_file_en * cfg.n() as u64;
    for i in 0..cfg.kt() {
        let used: u64 = en.files.iter().map(|l| l.cached_at(i)).sum();
        if used > en_limit {
            return Err(PlacementError::CapacityViolation {
                node: Node::En(i),
                used,
                limit: en_limit,
            });
        }
        usage.push(NodeUsage {
            node: Node::En(i),
            used,
            limit: en_limit,
        });
    }

    let user_limit = (cfg.mr() * &f).floor().to_integer().to_u64().expect("fits");
    for k in 0..users.kr {
        let used = users.total_bits(k);
        if used > user_limit {
            return Err(PlacementError::CapacityViolation {
                node: Node::User(k),
                used,
                limit: user_limit,
            });
        }
        usage.push(NodeUsage {
            node: Node::User(k),
            used,
            limit: user_limit,
        });
    }
    Ok(CapacityReport { usage })
}
