//! DoF-level transmission schedules.
//!
//! A schedule is a list of [`TransmissionBlock`]s. Each block carries one
//! stream per served receiver and a DoF credit; its duration is its total
//! normalized bits divided by that credit. Blocks are built as follows:
//!
//! - **Cancellation blocks** (IA-IC where `j + 1` is the DoF): for every set
//!   `R` of `j + 1` users, user `u` receives the subfile cached at `R \ {u}`.
//!   Every receiver already holds all other streams of the block. Exclusive
//!   subfiles are rotated over the ENs so that each block uses distinct ENs
//!   where possible.
//! - **X-channel blocks** (IA-IC where the X-channel DoF dominates): one block
//!   per class, credited with the X-channel DoF. No precoders are built.
//! - **Zero-forcing blocks** (ZF-IC and soft-transfer): for every set `B` of
//!   `m = min{K_T + j, K_R}` users in cyclic order and every `j`-subset `O`
//!   of offsets `{1, .., m-1}`, user `B[p]` receives the subfile cached at
//!   `{B[p + o] : o in O}`. The remaining `m - 1 - j` receivers of each
//!   stream are covered by the block's nulling plan. Each subfile appears in
//!   several `B`, so it is cut into that many equal pieces.
//!
//! [`validate_block`] re-checks every block against a cache oracle, and
//! [`reconcile`] compares the schedule's delays with the analytic NDT.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};

use num::traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    class_profile, en_layout, enumerate_subfiles, ClassSizeProfile, DemandVector, EnLayout, EnTag,
    NetworkConfig, SubfileId, UserSet,
};
use crate::ndt::{self, dof_ia, is_pure_ic, Mode, NdtBreakdown, NdtError, Scheme, Technique};
use crate::placement::{EmpiricalProfile, EnPlacement, UserPlacement};
use crate::rational::{self, binomial, from_u64, from_usize, Rational};

/// Who puts a stream on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transmitter {
    /// A single EN from its own cache.
    En(usize),
    /// Every EN, from the shared part of their caches.
    AllEns,
    /// Precoded in the cloud and forwarded by every EN over the fronthaul.
    Cloud,
}

impl fmt::Display for Transmitter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transmitter::En(i) => write!(f, "EN{}", i + 1),
            Transmitter::AllEns => f.write_str("ENs"),
            Transmitter::Cloud => f.write_str("cloud"),
        }
    }
}

/// A piece `[offset, offset + size)` of a subfile, in normalized file units,
/// sent to receiver `rx`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    pub subfile: SubfileId,
    pub rx: usize,
    pub tx: Transmitter,
    pub offset: Rational,
    pub size: Rational,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->U{} via {}", self.subfile, self.rx + 1, self.tx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmissionBlock {
    pub technique: Technique,
    pub class_j: usize,
    pub streams: Vec<Stream>,
    /// Receivers at which each stream is zero-forced, parallel to `streams`.
    pub nulled: Vec<UserSet>,
    pub dof: Rational,
    /// Credited with the X-channel IA DoF rather than built from cancellation.
    pub x_channel: bool,
}

impl TransmissionBlock {
    pub fn bits(&self) -> Rational {
        self.streams.iter().fold(Rational::zero(), |a, s| a + &s.size)
    }

    pub fn duration(&self) -> Rational {
        self.bits() / &self.dof
    }

    pub fn receivers(&self) -> UserSet {
        UserSet::from_users(self.streams.iter().map(|s| s.rx))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub scheme: Scheme,
    pub mode: Mode,
    /// Set for schedules built from a finite-size placement.
    pub file_size: Option<u64>,
    pub blocks: Vec<TransmissionBlock>,
    /// Normalized fronthaul load per EN.
    pub fronthaul_load: Vec<Rational>,
    pub achieved_delta_e: Rational,
    pub achieved_delta_f: Rational,
}

impl Schedule {
    pub fn achieved_total(&self) -> Rational {
        self.mode.combine(&self.achieved_delta_f, &self.achieved_delta_e)
    }

    /// Summed block durations per `(class, technique)`.
    pub fn class_durations(&self) -> BTreeMap<(usize, Technique), Rational> {
        let mut out: BTreeMap<(usize, Technique), Rational> = BTreeMap::new();
        for b in &self.blocks {
            *out.entry((b.class_j, b.technique)).or_insert_with(Rational::zero) += b.duration();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Receiver hears a stream it neither caches nor has nulled.
    Interference { stream: usize, receiver: usize },
    /// A stream is sent to a receiver that caches it.
    SelfCached { stream: usize },
    /// A stream's nulling plan exceeds what its transmitter can zero-force.
    NullingBudget { stream: usize, nulled: usize, budget: usize },
    /// A stream's user set size differs from the block class.
    ClassMismatch { stream: usize, expected: usize, found: usize },
    DofMismatch { expected: Box<Rational>, found: Box<Rational> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Interference { stream, receiver } => {
                write!(f, "stream {} interferes at U{}", stream + 1, receiver + 1)
            }
            Violation::SelfCached { stream } => {
                write!(f, "stream {} is already cached at its receiver", stream + 1)
            }
            Violation::NullingBudget { stream, nulled, budget } => write!(
                f,
                "stream {} nulled at {} receivers, transmitter allows {}",
                stream + 1,
                nulled,
                budget
            ),
            Violation::ClassMismatch { stream, expected, found } => write!(
                f,
                "stream {} has class {}, block class is {}",
                stream + 1,
                found,
                expected
            ),
            Violation::DofMismatch { expected, found } => write!(
                f,
                "block credits DoF {}, construction supports {}",
                rational::exact_string(found),
                rational::exact_string(expected)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Infeasible(#[from] NdtError),
    #[error("constructed block {block} failed validation: {violation}")]
    ValidationFailure { block: usize, violation: Violation },
    #[error("coverage broken for {subfile} -> U{}: {detail}", .rx + 1)]
    Coverage { subfile: SubfileId, rx: usize, detail: String },
    #[error("{component}: achieved {achieved} vs analytic {analytic}")]
    ReconcileFailure {
        component: String,
        achieved: String,
        analytic: String,
    },
    #[error("class {j} is served by X-channel alignment, not cancellation alone")]
    RegimeMismatch { j: usize },
    #[error("schedule and breakdown describe different deliveries: {0}")]
    Mismatch(String),
}

/// Which users hold which subfiles.
pub trait CacheMap {
    fn caches(&self, user: usize, subfile: &SubfileId) -> bool;
}

/// Cache contents read off the subfile labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelCaches;

impl CacheMap for LabelCaches {
    fn caches(&self, user: usize, subfile: &SubfileId) -> bool {
        subfile.user_set.contains(user)
    }
}

/// Cache contents looked up in a finite-size placement: a subfile is
/// represented by one of its bits, found by scanning the raw user bit sets.
#[derive(Debug, Clone)]
pub struct PlacedCaches<'a> {
    users: &'a UserPlacement,
    representative: HashMap<CellKey, u64>,
}

/// `(file, EN tag, holder set)`.
type CellKey = (usize, EnTag, UserSet);

impl<'a> PlacedCaches<'a> {
    pub fn new(en: &EnPlacement, users: &'a UserPlacement) -> Self {
        let per_file: Vec<Vec<(CellKey, u64)>> = (0..users.n)
            .into_par_iter()
            .map(|file| {
                let masks = users.holder_masks(file);
                let mut out = Vec::new();
                for (tag, range) in en.files[file].parts() {
                    if users.kr <= 16 {
                        let mut first = vec![u64::MAX; 1 << users.kr];
                        for bit in range {
                            let slot = &mut first[masks[bit as usize] as usize];
                            if *slot == u64::MAX {
                                *slot = bit;
                            }
                        }
                        out.extend(first.into_iter().enumerate().filter(|&(_, b)| b != u64::MAX).map(
                            |(m, b)| ((file, tag, UserSet::from_bits(m as u64)), b),
                        ));
                    } else {
                        let mut seen: HashMap<u64, u64> = HashMap::new();
                        for bit in range {
                            seen.entry(masks[bit as usize]).or_insert(bit);
                        }
                        out.extend(seen.into_iter().map(|(m, b)| ((file, tag, UserSet::from_bits(m)), b)));
                    }
                }
                out
            })
            .collect();
        PlacedCaches {
            users,
            representative: per_file.into_iter().flatten().collect(),
        }
    }
}

impl CacheMap for PlacedCaches<'_> {
    fn caches(&self, user: usize, subfile: &SubfileId) -> bool {
        match self
            .representative
            .get(&(subfile.file, subfile.en_tag, subfile.user_set))
        {
            Some(&bit) => self.users.contains(user, subfile.file, bit),
            // no bits carry this label: nothing to cancel
            None => true,
        }
    }
}

/// How many receivers a transmitter can zero-force a stream at.
fn nulling_budget(tx: Transmitter, kt: usize, block_size: usize) -> usize {
    match tx {
        Transmitter::En(_) => 0,
        Transmitter::AllEns | Transmitter::Cloud => kt.min(block_size).saturating_sub(1),
    }
}

pub fn validate_block(block: &TransmissionBlock, caches: &dyn CacheMap, kt: usize, kr: usize) -> Result<(), Violation> {
    let receivers: Vec<usize> = block.receivers().iter().collect();
    for (idx, s) in block.streams.iter().enumerate() {
        if s.subfile.user_set.contains(s.rx) {
            return Err(Violation::SelfCached { stream: idx });
        }
        let nulled = block.nulled.get(idx).copied().unwrap_or_default();
        let budget = nulling_budget(s.tx, kt, receivers.len());
        if nulled.len() > budget || nulled.contains(s.rx) {
            return Err(Violation::NullingBudget {
                stream: idx,
                nulled: nulled.len(),
                budget,
            });
        }
        if block.x_channel {
            continue;
        }
        for &u in &receivers {
            if u != s.rx && !nulled.contains(u) && !caches.caches(u, &s.subfile) {
                return Err(Violation::Interference { stream: idx, receiver: u });
            }
        }
    }
    for (idx, s) in block.streams.iter().enumerate() {
        if s.subfile.class() != block.class_j {
            return Err(Violation::ClassMismatch {
                stream: idx,
                expected: block.class_j,
                found: s.subfile.class(),
            });
        }
    }
    let expected = if block.x_channel {
        dof_ia(kt, kr, block.class_j)
    } else {
        from_usize(block.streams.len())
    };
    if block.dof != expected {
        return Err(Violation::DofMismatch {
            expected: Box::new(expected),
            found: Box::new(block.dof.clone()),
        });
    }
    Ok(())
}

/// For each user, every subfile of its requested file missing from its cache.
pub fn needed_subfiles(cfg: &NetworkConfig, demand: &DemandVector) -> Vec<(SubfileId, usize)> {
    let all = enumerate_subfiles(cfg);
    let mut out = Vec::new();
    for user in 0..cfg.kr() {
        let file = demand.file_for(user);
        out.extend(
            all.iter()
                .filter(|s| s.file == file && !s.user_set.contains(user))
                .map(|&s| (s, user)),
        );
    }
    out
}

/// Subfile sizes, either expected (normalized) or counted in a placement.
#[derive(Debug, Clone, Copy)]
pub enum Sizes<'a> {
    Analytic,
    Empirical(&'a EmpiricalProfile),
}

struct SizeTable<'a> {
    layout: EnLayout,
    profile: ClassSizeProfile,
    empirical: Option<&'a EmpiricalProfile>,
}

impl SizeTable<'_> {
    fn bits(&self, s: &SubfileId) -> Option<u64> {
        self.empirical.map(|p| p.count(s.file, s.en_tag, s.user_set))
    }

    fn size(&self, s: &SubfileId) -> Rational {
        match self.empirical {
            Some(p) => from_u64(p.count(s.file, s.en_tag, s.user_set)) / from_u64(p.file_size),
            None => self.layout.size_of(s.en_tag) * self.profile.f(s.user_set.len()),
        }
    }

    /// `pieces` consecutive equal (up to one bit) cuts of a subfile.
    fn cut(&self, s: &SubfileId, pieces: usize) -> Vec<Piece> {
        match (self.bits(s), self.empirical) {
            (Some(bits), Some(p)) => {
                let f = from_u64(p.file_size);
                let base = bits / pieces as u64;
                let extra = (bits % pieces as u64) as usize;
                let mut offset = 0u64;
                (0..pieces)
                    .map(|i| {
                        let len = base + u64::from(i < extra);
                        let piece = (from_u64(offset) / &f, from_u64(len) / &f);
                        offset += len;
                        piece
                    })
                    .collect()
            }
            _ => {
                let total = self.size(s);
                let each = &total / from_usize(pieces);
                (0..pieces).map(|i| (from_usize(i) * &each, each.clone())).collect()
            }
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

fn tx_for(tag: EnTag, technique: Technique) -> Transmitter {
    match (technique, tag) {
        (Technique::SoftTransfer, _) => Transmitter::Cloud,
        (_, EnTag::Exclusive(i)) => Transmitter::En(i),
        _ => Transmitter::AllEns,
    }
}

/// `(offset, size)` of a piece of a subfile.
type Piece = (Rational, Rational);

/// Needed streams of one class and technique, keyed by (receiver, EN tag, user set).
type Inventory = BTreeMap<(usize, EnTag, UserSet), SubfileId>;

/// Cancellation-only IA-IC blocks for class `j`.
pub fn build_ic_blocks(
    cfg: &NetworkConfig,
    needed: &[(SubfileId, usize)],
    j: usize,
) -> Result<Vec<TransmissionBlock>, ScheduleError> {
    if !is_pure_ic(cfg.kt(), cfg.kr(), j) {
        return Err(ScheduleError::RegimeMismatch { j });
    }
    let sizes = SizeTable {
        layout: en_layout(cfg),
        profile: class_profile(cfg),
        empirical: None,
    };
    let inv = inventory(needed, j);
    Ok(ic_blocks(cfg, &sizes, &inv, j))
}

fn inventory(needed: &[(SubfileId, usize)], j: usize) -> Inventory {
    needed
        .iter()
        .filter(|(s, _)| s.class() == j)
        .map(|&(s, rx)| ((rx, s.en_tag, s.user_set), s))
        .collect()
}

fn whole(sizes: &SizeTable, s: SubfileId, rx: usize, technique: Technique) -> Stream {
    Stream {
        subfile: s,
        rx,
        tx: tx_for(s.en_tag, technique),
        offset: Rational::zero(),
        size: sizes.size(&s),
    }
}

fn ic_blocks(cfg: &NetworkConfig, sizes: &SizeTable, inv: &Inventory, j: usize) -> Vec<TransmissionBlock> {
    let kt = cfg.kt();
    let has_exclusive = inv.keys().any(|(_, t, _)| matches!(t, EnTag::Exclusive(_)));
    let other_tags: Vec<EnTag> = {
        let mut v: Vec<EnTag> = inv
            .keys()
            .map(|(_, t, _)| *t)
            .filter(|t| !matches!(t, EnTag::Exclusive(_)))
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let mut blocks = Vec::new();
    let mut push = |streams: Vec<Stream>| {
        if !streams.is_empty() {
            blocks.push(TransmissionBlock {
                technique: Technique::IaIc,
                class_j: j,
                nulled: vec![UserSet::EMPTY; streams.len()],
                dof: from_usize(streams.len()),
                streams,
                x_channel: false,
            });
        }
    };
    for group in combinations(cfg.kr(), j + 1) {
        let group_set = UserSet::from_users(group.iter().copied());
        if has_exclusive {
            for rot in 0..kt {
                let streams = group
                    .iter()
                    .enumerate()
                    .filter_map(|(p, &u)| {
                        let tag = EnTag::Exclusive((rot + p) % kt);
                        inv.get(&(u, tag, group_set.remove(u)))
                            .map(|&s| whole(sizes, s, u, Technique::IaIc))
                    })
                    .collect();
                push(streams);
            }
        }
        for &tag in &other_tags {
            let streams = group
                .iter()
                .filter_map(|&u| {
                    inv.get(&(u, tag, group_set.remove(u)))
                        .map(|&s| whole(sizes, s, u, Technique::IaIc))
                })
                .collect();
            push(streams);
        }
    }
    blocks
}

fn x_channel_block(cfg: &NetworkConfig, sizes: &SizeTable, inv: &Inventory, j: usize) -> Vec<TransmissionBlock> {
    if inv.is_empty() {
        return Vec::new();
    }
    let streams: Vec<Stream> = inv
        .iter()
        .map(|(&(rx, _, _), &s)| whole(sizes, s, rx, Technique::IaIc))
        .collect();
    vec![TransmissionBlock {
        technique: Technique::IaIc,
        class_j: j,
        nulled: vec![UserSet::EMPTY; streams.len()],
        dof: dof_ia(cfg.kt(), cfg.kr(), j),
        streams,
        x_channel: true,
    }]
}

fn zf_blocks(
    cfg: &NetworkConfig,
    sizes: &SizeTable,
    inv: &Inventory,
    j: usize,
    technique: Technique,
) -> Vec<TransmissionBlock> {
    let (kt, kr) = (cfg.kt(), cfg.kr());
    let m = (kt + j).min(kr);
    let pieces = num::integer::binomial(kr - 1 - j, m - 1 - j);
    let mut tags: Vec<EnTag> = inv.keys().map(|(_, t, _)| *t).collect();
    tags.sort();
    tags.dedup();

    // pieces of each (receiver, subfile) and how many are already placed
    let mut cuts: HashMap<(usize, SubfileId), (Vec<Piece>, usize)> = HashMap::new();
    let offsets = combinations(m - 1, j);
    let mut blocks = Vec::new();
    for &tag in &tags {
        for group in combinations(kr, m) {
            for offs in &offsets {
                let mut streams = Vec::with_capacity(m);
                let mut nulled = Vec::with_capacity(m);
                for p in 0..m {
                    let u = group[p];
                    let cached = UserSet::from_users(offs.iter().map(|&o| group[(p + 1 + o) % m]));
                    let Some(&s) = inv.get(&(u, tag, cached)) else {
                        continue;
                    };
                    let (list, next) = cuts
                        .entry((u, s))
                        .or_insert_with(|| (sizes.cut(&s, pieces), 0));
                    let (offset, size) = list[*next].clone();
                    *next += 1;
                    let others = UserSet::from_users(group.iter().copied()).remove(u);
                    nulled.push(UserSet::from_bits(others.bits() & !cached.bits()));
                    streams.push(Stream {
                        subfile: s,
                        rx: u,
                        tx: tx_for(tag, technique),
                        offset,
                        size,
                    });
                }
                if !streams.is_empty() {
                    blocks.push(TransmissionBlock {
                        technique,
                        class_j: j,
                        nulled,
                        dof: from_usize(streams.len()),
                        streams,
                        x_channel: false,
                    });
                }
            }
        }
    }
    blocks
}

/// Zero-forcing blocks for class `j`; streams are cut into pieces so that
/// every subfile is spread over all user groups that can carry it.
pub fn build_zf_blocks(
    cfg: &NetworkConfig,
    needed: &[(SubfileId, usize)],
    j: usize,
    technique: Technique,
) -> Vec<TransmissionBlock> {
    let sizes = SizeTable {
        layout: en_layout(cfg),
        profile: class_profile(cfg),
        empirical: None,
    };
    zf_blocks(cfg, &sizes, &inventory(needed, j), j, technique)
}

fn technique_for(scheme: Scheme, tag: EnTag) -> Technique {
    match (scheme, tag) {
        (Scheme::CloudOnly, _) | (_, EnTag::CloudOnly) => Technique::SoftTransfer,
        (Scheme::EdgeOnly, EnTag::Shared) => Technique::ZfIc,
        _ => Technique::IaIc,
    }
}

pub fn build_schedule(
    cfg: &NetworkConfig,
    sizes: Sizes<'_>,
    caches: &dyn CacheMap,
    demand: &DemandVector,
    scheme: Scheme,
    mode: Mode,
) -> Result<Schedule, ScheduleError> {
    ndt::evaluate_scheme(cfg, scheme, mode)?;
    let table = SizeTable {
        layout: en_layout(cfg),
        profile: class_profile(cfg),
        empirical: match sizes {
            Sizes::Analytic => None,
            Sizes::Empirical(p) => Some(p),
        },
    };
    let needed = needed_subfiles(cfg, demand);

    let mut blocks = Vec::new();
    for j in 0..cfg.kr() {
        let mut by_technique: BTreeMap<Technique, Inventory> = BTreeMap::new();
        for &(s, rx) in needed.iter().filter(|(s, _)| s.class() == j) {
            by_technique
                .entry(technique_for(scheme, s.en_tag))
                .or_default()
                .insert((rx, s.en_tag, s.user_set), s);
        }
        for (technique, inv) in by_technique {
            match technique {
                Technique::IaIc if is_pure_ic(cfg.kt(), cfg.kr(), j) => {
                    blocks.extend(ic_blocks(cfg, &table, &inv, j))
                }
                Technique::IaIc => blocks.extend(x_channel_block(cfg, &table, &inv, j)),
                t => blocks.extend(zf_blocks(cfg, &table, &inv, j, t)),
            }
        }
    }

    for (idx, b) in blocks.iter().enumerate() {
        validate_block(b, caches, cfg.kt(), cfg.kr())
            .map_err(|violation| ScheduleError::ValidationFailure { block: idx, violation })?;
    }

    let soft_bits = blocks
        .iter()
        .filter(|b| b.technique == Technique::SoftTransfer)
        .fold(Rational::zero(), |a, b| a + b.bits());
    let per_en = soft_bits / from_usize(cfg.kt());
    let fronthaul_load = vec![per_en.clone(); cfg.kt()];
    let achieved_delta_f = if per_en.is_zero() {
        Rational::zero()
    } else if cfg.r().is_positive() {
        per_en / cfg.r()
    } else {
        return Err(ScheduleError::Infeasible(NdtError::InfeasibleCloudOnly));
    };
    let achieved_delta_e = blocks.iter().fold(Rational::zero(), |a, b| a + b.duration());

    let schedule = Schedule {
        scheme,
        mode,
        file_size: table.empirical.map(|p| p.file_size),
        blocks,
        fronthaul_load,
        achieved_delta_e,
        achieved_delta_f,
    };
    check_coverage(cfg, &schedule, &needed, sizes)?;
    Ok(schedule)
}

/// Every needed `(subfile, receiver)` is covered by contiguous,
/// non-overlapping pieces adding up to the subfile, and nothing else is sent.
pub fn check_coverage(
    cfg: &NetworkConfig,
    schedule: &Schedule,
    needed: &[(SubfileId, usize)],
    sizes: Sizes<'_>,
) -> Result<(), ScheduleError> {
    let table = SizeTable {
        layout: en_layout(cfg),
        profile: class_profile(cfg),
        empirical: match sizes {
            Sizes::Analytic => None,
            Sizes::Empirical(p) => Some(p),
        },
    };
    let mut pieces: HashMap<(SubfileId, usize), Vec<(Rational, Rational)>> = HashMap::new();
    for s in schedule.blocks.iter().flat_map(|b| &b.streams) {
        pieces
            .entry((s.subfile, s.rx))
            .or_default()
            .push((s.offset.clone(), s.size.clone()));
    }
    for &(subfile, rx) in needed {
        let fail = |detail: String| ScheduleError::Coverage { subfile, rx, detail };
        let mut list = pieces.remove(&(subfile, rx)).ok_or_else(|| fail("never sent".into()))?;
        list.sort();
        let mut pos = Rational::zero();
        for (offset, size) in list {
            if offset != pos {
                return Err(fail(format!(
                    "piece at {} but coverage reached {}",
                    rational::exact_string(&offset),
                    rational::exact_string(&pos)
                )));
            }
            pos += size;
        }
        let total = table.size(&subfile);
        if pos != total {
            return Err(fail(format!(
                "covered {} of {}",
                rational::exact_string(&pos),
                rational::exact_string(&total)
            )));
        }
    }
    if let Some(((subfile, rx), _)) = pieces.into_iter().next() {
        return Err(ScheduleError::Coverage {
            subfile,
            rx,
            detail: "sent but not needed".into(),
        });
    }
    Ok(())
}

/// Reconciliation tolerance: `Exact` for analytic schedules, otherwise a
/// relative gap of `coefficient / sqrt(F)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Exact,
    Statistical { file_size: u64, coefficient: f64 },
}

impl Tolerance {
    pub fn for_schedule(schedule: &Schedule) -> Tolerance {
        match schedule.file_size {
            None => Tolerance::Exact,
            Some(file_size) => Tolerance::Statistical {
                file_size,
                coefficient: 10.0,
            },
        }
    }

    fn accepts(&self, achieved: &Rational, analytic: &Rational) -> bool {
        match *self {
            Tolerance::Exact => achieved == analytic,
            Tolerance::Statistical { file_size, coefficient } => {
                let bound = coefficient / (file_size as f64).sqrt() * rational::to_f64(analytic);
                rational::to_f64(&(achieved - analytic).abs()) <= bound
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGap {
    pub component: String,
    pub achieved: Rational,
    pub analytic: Rational,
}

impl ComponentGap {
    pub fn relative_gap(&self) -> f64 {
        if self.analytic.is_zero() {
            if self.achieved.is_zero() {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            rational::to_f64(&((&self.achieved - &self.analytic).abs() / &self.analytic))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileReport {
    pub tolerance: Tolerance,
    pub totals: Vec<ComponentGap>,
    pub per_class: Vec<ComponentGap>,
}

impl ReconcileReport {
    pub fn max_relative_gap(&self) -> f64 {
        self.totals.iter().map(|g| g.relative_gap()).fold(0.0, f64::max)
    }
}

/// Compares achieved fronthaul and edge delays with the analytic breakdown
/// of the same scheme and mode.
pub fn reconcile(schedule: &Schedule, analytic: &NdtBreakdown) -> Result<ReconcileReport, ScheduleError> {
    reconcile_with(schedule, analytic, Tolerance::for_schedule(schedule))
}

pub fn reconcile_with(
    schedule: &Schedule,
    analytic: &NdtBreakdown,
    tolerance: Tolerance,
) -> Result<ReconcileReport, ScheduleError> {
    if schedule.scheme != analytic.scheme || schedule.mode != analytic.mode {
        return Err(ScheduleError::Mismatch(format!(
            "schedule {} {} vs breakdown {} {}",
            schedule.scheme, schedule.mode, analytic.scheme, analytic.mode
        )));
    }
    let totals = vec![
        ComponentGap {
            component: "delta_f".into(),
            achieved: schedule.achieved_delta_f.clone(),
            analytic: analytic.delta_f.clone(),
        },
        ComponentGap {
            component: "delta_e".into(),
            achieved: schedule.achieved_delta_e.clone(),
            analytic: analytic.delta_e.clone(),
        },
    ];
    let achieved = schedule.class_durations();
    let mut per_class = Vec::new();
    for pc in &analytic.per_class {
        for t in [Technique::IaIc, Technique::ZfIc, Technique::SoftTransfer] {
            let a = achieved.get(&(pc.j, t)).cloned().unwrap_or_else(Rational::zero);
            let b = pc.get(t).clone();
            if !(a.is_zero() && b.is_zero()) {
                per_class.push(ComponentGap {
                    component: format!("class {} {}", pc.j, t),
                    achieved: a,
                    analytic: b,
                });
            }
        }
    }
    for gap in &totals {
        if !tolerance.accepts(&gap.achieved, &gap.analytic) {
            return Err(ScheduleError::ReconcileFailure {
                component: gap.component.clone(),
                achieved: rational::decimal_string(&gap.achieved, 12),
                analytic: rational::decimal_string(&gap.analytic, 12),
            });
        }
    }
    if tolerance == Tolerance::Exact {
        if let Some(gap) = per_class.iter().find(|g| g.achieved != g.analytic) {
            return Err(ScheduleError::ReconcileFailure {
                component: gap.component.clone(),
                achieved: rational::exact_string(&gap.achieved),
                analytic: rational::exact_string(&gap.analytic),
            });
        }
    }
    Ok(ReconcileReport {
        tolerance,
        totals,
        per_class,
    })
}

/// Number of blocks `build_schedule` makes for a zero-forcing class; used
/// to bound schedule size before building.
pub fn zf_block_count(kt: usize, kr: usize, j: usize) -> usize {
    let m = (kt + j).min(kr);
    let n = binomial(kr, m) * binomial(m - 1, j);
    n.to_integer().to_usize().unwrap_or(usize::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Text,
}

/// One record per block: technique, class, DoF, duration, validation status
/// and the stream list.
pub fn export_schedule<W: Write>(
    schedule: &Schedule,
    validation: &[Result<(), Violation>],
    format: ExportFormat,
    out: W,
) -> io::Result<()> {
    let streams_of = |b: &TransmissionBlock| {
        b.streams
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    };
    let status = |i: usize| match validation.get(i) {
        Some(Ok(())) => "pass".to_string(),
        Some(Err(v)) => format!("fail: {v}"),
        None => "unchecked".to_string(),
    };
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "block",
                "technique",
                "class",
                "dof",
                "duration",
                "duration_exact",
                "validation",
                "streams",
            ])?;
            for (i, b) in schedule.blocks.iter().enumerate() {
                let d = b.duration();
                w.write_record([
                    (i + 1).to_string(),
                    b.technique.to_string(),
                    b.class_j.to_string(),
                    rational::exact_string(&b.dof),
                    rational::decimal_string(&d, 12),
                    rational::exact_string(&d),
                    status(i),
                    streams_of(b),
                ])?;
            }
            w.flush()
        }
        ExportFormat::Text => {
            let mut w = out;
            writeln!(
                w,
                "# scheme={} mode={} blocks={} delta_e={} delta_f={}",
                schedule.scheme,
                schedule.mode,
                schedule.blocks.len(),
                rational::exact_string(&schedule.achieved_delta_e),
                rational::exact_string(&schedule.achieved_delta_f)
            )?;
            for (i, b) in schedule.blocks.iter().enumerate() {
                writeln!(
                    w,
                    "block {} technique={} class={} dof={} duration={} validation={} streams=[{}]",
                    i + 1,
                    b.technique,
                    b.class_j,
                    rational::exact_string(&b.dof),
                    rational::exact_string(&b.duration()),
                    status(i),
                    streams_of(b)
                )?;
            }
            Ok(())
        }
    }
}
