//! Network parameters, subfile labels and the per-class subfile size profile.
//!
//! Indices are zero-based throughout the API (`file`, EN and user numbers);
//! textual output renders them one-based.

use std::fmt;

use num::traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{self, binomial, from_usize, Rational};

/// Width of the [`UserSet`] bit set.
pub const MAX_USERS: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("library too small: N = {n} files for K_R = {kr} users (need N >= K_R)")]
    LibraryTooSmall { n: usize, kr: usize },
}

/// Every constraint the candidate configuration broke.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid network configuration: {}", list(.violations))]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DemandError {
    #[error("demand vector has {got} entries, expected K_R = {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("user {user} requests file {file}, outside the library of {n} files")]
    FileOutOfRange { user: usize, file: usize, n: usize },
}

/// Unvalidated parameter tuple, as read from flags or an experiment file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkParams {
    pub kt: usize,
    pub kr: usize,
    pub n: usize,
    pub mt: Rational,
    pub mr: Rational,
    pub r: Rational,
}

/// Validated network configuration.
///
/// Cache sizes are in files, `r` is the fronthaul multiplexing gain
/// (`C_F = r log P`). Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    kt: usize,
    kr: usize,
    n: usize,
    mt: Rational,
    mr: Rational,
    r: Rational,
}

pub fn validate_config(p: NetworkParams) -> Result<NetworkConfig, ConfigError> {
    let mut violations = Vec::new();
    let mut bad = |name, reason: String| violations.push(Violation::InvalidParameter { name, reason });
    if p.kt < 1 {
        bad("kt", "at least one edge node is required".into());
    }
    if p.kr < 1 {
        bad("kr", "at least one user is required".into());
    }
    if p.kr > MAX_USERS {
        bad("kr", format!("at most {MAX_USERS} users are supported"));
    }
    if p.n < 1 {
        bad("n", "library must hold at least one file".into());
    }
    let n = from_usize(p.n);
    if p.mt.is_negative() || p.mt > n {
        bad("mt", format!("M_T = {} must lie in [0, N = {}]", p.mt, p.n));
    }
    if p.mr.is_negative() || p.mr > n {
        bad("mr", format!("M_R = {} must lie in [0, N = {}]", p.mr, p.n));
    }
    if p.r.is_negative() {
        bad("r", format!("fronthaul gain r = {} must be non-negative", p.r));
    }
    if p.n < p.kr {
        violations.push(Violation::LibraryTooSmall { n: p.n, kr: p.kr });
    }
    if violations.is_empty() {
        Ok(NetworkConfig {
            kt: p.kt,
            kr: p.kr,
            n: p.n,
            mt: p.mt,
            mr: p.mr,
            r: p.r,
        })
    } else {
        Err(ConfigError { violations })
    }
}

impl NetworkConfig {
    pub fn new(
        kt: usize,
        kr: usize,
        n: usize,
        mt: Rational,
        mr: Rational,
        r: Rational,
    ) -> Result<Self, ConfigError> {
        validate_config(NetworkParams { kt, kr, n, mt, mr, r })
    }

    pub fn kt(&self) -> usize {
        self.kt
    }
    pub fn kr(&self) -> usize {
        self.kr
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn mt(&self) -> &Rational {
        &self.mt
    }
    pub fn mr(&self) -> &Rational {
        &self.mr
    }
    pub fn r(&self) -> &Rational {
        &self.r
    }

    pub fn params(&self) -> NetworkParams {
        NetworkParams {
            kt: self.kt,
            kr: self.kr,
            n: self.n,
            mt: self.mt.clone(),
            mr: self.mr.clone(),
            r: self.r.clone(),
        }
    }

    /// Global normalized EN cache size `K_T M_T / N`.
    pub fn t_t(&self) -> Rational {
        from_usize(self.kt) * &self.mt / from_usize(self.n)
    }

    /// Global normalized user cache size `K_R M_R / N`. Reported only.
    pub fn t_r(&self) -> Rational {
        from_usize(self.kr) * &self.mr / from_usize(self.n)
    }

    /// Fraction of every file each user caches, `M_R / N`.
    pub fn user_fraction(&self) -> Rational {
        &self.mr / from_usize(self.n)
    }

    pub fn with_mt(&self, mt: Rational) -> Result<Self, ConfigError> {
        validate_config(NetworkParams { mt, ..self.params() })
    }
    pub fn with_mr(&self, mr: Rational) -> Result<Self, ConfigError> {
        validate_config(NetworkParams { mr, ..self.params() })
    }
    pub fn with_r(&self, r: Rational) -> Result<Self, ConfigError> {
        validate_config(NetworkParams { r, ..self.params() })
    }
}

impl fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "K_T={} K_R={} N={} M_T={} M_R={} r={}",
            self.kt,
            self.kr,
            self.n,
            rational::exact_string(&self.mt),
            rational::exact_string(&self.mr),
            rational::exact_string(&self.r)
        )
    }
}

/// Demanded file per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandVector {
    demands: Vec<usize>,
}

impl DemandVector {
    pub fn new(cfg: &NetworkConfig, demands: Vec<usize>) -> Result<Self, DemandError> {
        if demands.len() != cfg.kr {
            return Err(DemandError::WrongLength {
                expected: cfg.kr,
                got: demands.len(),
            });
        }
        if let Some((user, &file)) = demands.iter().enumerate().find(|(_, &d)| d >= cfg.n) {
            return Err(DemandError::FileOutOfRange { user, file, n: cfg.n });
        }
        Ok(DemandVector { demands })
    }

    /// All-distinct demands: user `k` requests file `k`.
    pub fn worst_case(cfg: &NetworkConfig) -> Self {
        DemandVector {
            demands: (0..cfg.kr).collect(),
        }
    }

    pub fn file_for(&self, user: usize) -> usize {
        self.demands[user]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.demands
    }

    pub fn is_all_distinct(&self) -> bool {
        let mut v = self.demands.clone();
        v.sort_unstable();
        v.windows(2).all(|w| w[0] != w[1])
    }
}

/// Subset of users as a bit set; bit `k` is user `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct UserSet(u64);

impl UserSet {
    pub const EMPTY: UserSet = UserSet(0);

    pub fn from_bits(bits: u64) -> Self {
        UserSet(bits)
    }

    pub fn from_users(users: impl IntoIterator<Item = usize>) -> Self {
        UserSet(users.into_iter().fold(0u64, |acc, u| acc | (1 << u)))
    }

    pub fn full(kr: usize) -> Self {
        UserSet(if kr >= 64 { u64::MAX } else { (1u64 << kr) - 1 })
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, user: usize) -> bool {
        user < 64 && self.0 & (1 << user) != 0
    }

    pub fn insert(self, user: usize) -> Self {
        UserSet(self.0 | (1 << user))
    }

    pub fn remove(self, user: usize) -> Self {
        UserSet(self.0 & !(1 << user))
    }

    pub fn union(self, other: UserSet) -> Self {
        UserSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: UserSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |u| bits & (1 << u) != 0)
    }
}

impl fmt::Display for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let users: Vec<String> = self.iter().map(|u| (u + 1).to_string()).collect();
        write!(f, "{{{}}}", users.join(","))
    }
}

/// Which EN caches hold a subfile.
///
/// Variant order is the canonical ordering used by [`enumerate_subfiles`]
/// and by the EN layout: shared part first, then each EN's exclusive part,
/// then the uncached remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnTag {
    /// Cached at every EN.
    Shared,
    /// Cached only at this EN.
    Exclusive(usize),
    /// Cached at no EN; reachable only over the fronthaul.
    CloudOnly,
}

impl fmt::Display for EnTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnTag::Shared => write!(f, "*"),
            EnTag::Exclusive(i) => write!(f, "{}", i + 1),
            EnTag::CloudOnly => write!(f, "c"),
        }
    }
}

/// Label of subfile `W_{file, en_tag, user_set}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubfileId {
    pub file: usize,
    pub en_tag: EnTag,
    pub user_set: UserSet,
}

impl SubfileId {
    pub fn new(file: usize, en_tag: EnTag, user_set: UserSet) -> Self {
        SubfileId {
            file,
            en_tag,
            user_set,
        }
    }

    /// Number of users caching the subfile.
    pub fn class(&self) -> usize {
        self.user_set.len()
    }

    /// Whether the label can occur under `cfg`'s EN placement regime.
    pub fn is_valid_for(&self, cfg: &NetworkConfig) -> bool {
        let t_t = cfg.t_t();
        let tag_ok = match self.en_tag {
            EnTag::Shared => t_t >= Rational::one(),
            EnTag::CloudOnly => t_t < Rational::one(),
            EnTag::Exclusive(i) => i < cfg.kt,
        };
        tag_ok && self.file < cfg.n && self.user_set.is_subset(UserSet::full(cfg.kr))
    }
}

impl fmt::Display for SubfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W_{{{},{},{}}}", self.file + 1, self.en_tag, self.user_set)
    }
}

/// Normalized expected subfile sizes: `fractions[j]` is the share of a file
/// cached by one specific set of exactly `j` users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSizeProfile {
    pub fractions: Vec<Rational>,
    /// Share of a requested file missing from the requester's cache.
    pub residual: Rational,
}

impl ClassSizeProfile {
    pub fn f(&self, j: usize) -> &Rational {
        &self.fractions[j]
    }
}

pub fn class_profile(cfg: &NetworkConfig) -> ClassSizeProfile {
    let p = cfg.user_fraction();
    let q = Rational::one() - &p;
    let kr = cfg.kr;
    let fractions: Vec<Rational> = (0..=kr)
        .map(|j| num::pow(p.clone(), j) * num::pow(q.clone(), kr - j))
        .collect();
    let residual = (0..kr)
        .map(|j| binomial(kr - 1, j) * &fractions[j])
        .fold(Rational::zero(), |acc, x| acc + x);
    ClassSizeProfile {
        fractions,
        residual,
    }
}

/// How the EN caches are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnRegime {
    /// `t_T <= 1`: disjoint per-EN parts plus a cloud-only remainder.
    Fractional,
    /// `t_T > 1` (or a single EN holding the whole library): a part shared by
    /// all ENs plus disjoint per-EN parts.
    Split,
}

/// Normalized per-file EN layout: sizes of each part as fractions of a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnLayout {
    pub regime: EnRegime,
    pub shared: Rational,
    pub exclusive_each: Rational,
    pub cloud: Rational,
    kt: usize,
}

impl EnLayout {
    pub fn size_of(&self, tag: EnTag) -> Rational {
        match tag {
            EnTag::Shared => self.shared.clone(),
            EnTag::Exclusive(i) if i < self.kt => self.exclusive_each.clone(),
            EnTag::Exclusive(_) => Rational::zero(),
            EnTag::CloudOnly => self.cloud.clone(),
        }
    }

    /// Tags of the nonempty parts in canonical order.
    pub fn tags(&self) -> Vec<EnTag> {
        let mut tags = Vec::new();
        if self.shared.is_positive() {
            tags.push(EnTag::Shared);
        }
        if self.exclusive_each.is_positive() {
            tags.extend((0..self.kt).map(EnTag::Exclusive));
        }
        if self.cloud.is_positive() {
            tags.push(EnTag::CloudOnly);
        }
        tags
    }

    pub fn kt(&self) -> usize {
        self.kt
    }
}

pub fn en_layout(cfg: &NetworkConfig) -> EnLayout {
    let t_t = cfg.t_t();
    let one = Rational::one();
    let kt = cfg.kt;
    if kt == 1 && t_t == one {
        // a single EN with M_T = N holds the whole library
        return EnLayout {
            regime: EnRegime::Split,
            shared: one,
            exclusive_each: Rational::zero(),
            cloud: Rational::zero(),
            kt,
        };
    }
    if t_t <= one {
        EnLayout {
            regime: EnRegime::Fractional,
            shared: Rational::zero(),
            exclusive_each: cfg.mt.clone() / from_usize(cfg.n),
            cloud: one - t_t,
            kt,
        }
    } else {
        let denom = from_usize(kt - 1);
        EnLayout {
            regime: EnRegime::Split,
            shared: (t_t - &one) / &denom,
            exclusive_each: (one - cfg.mt.clone() / from_usize(cfg.n)) / denom,
            cloud: Rational::zero(),
            kt,
        }
    }
}

/// Labels of every nonempty subfile, ordered by file, EN tag, then user set
/// read as an integer. Parts of zero expected size are omitted: EN parts
/// whose layout size is zero and user sets whose class fraction is zero
/// (only the empty set when `M_R = 0`, only the full set when `M_R = N`).
pub fn enumerate_subfiles(cfg: &NetworkConfig) -> Vec<SubfileId> {
    let layout = en_layout(cfg);
    let profile = class_profile(cfg);
    let tags = layout.tags();
    let sets: Vec<UserSet> = (0..(1u64 << cfg.kr))
        .map(UserSet::from_bits)
        .filter(|s| profile.f(s.len()).is_positive())
        .collect();
    let mut out = Vec::with_capacity(cfg.n * tags.len() * sets.len());
    for file in 0..cfg.n {
        for &tag in &tags {
            for &s in &sets {
                out.push(SubfileId::new(file, tag, s));
            }
        }
    }
    out
}
