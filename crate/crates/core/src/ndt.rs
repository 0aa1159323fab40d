//! Achievable normalized delivery time (NDT) in exact arithmetic.
//!
//! Each delivery technique serves the subfiles of class `j` (cached at
//! exactly `j` users) at a sum DoF that grows with `j`:
//!
//! - IA-IC, subfiles cached at one EN: `max{K_T K_R / (K_T + K_R - j), j + 1}`
//! - ZF-IC, subfiles cached at every EN (or precoded in the cloud and
//!   soft-transferred): `min{K_T + j, K_R}`
//!
//! A class needs `C(K_R-1, j) K_R f(j)` normalized bits for all-distinct
//! demands. The three schemes (edge-only, cloud-only, hybrid) mix these
//! per-class delays with the EN layout weights, and [`delta_serial`] /
//! [`delta_pipelined`] pick the best feasible scheme.

use std::cmp::Ordering;
use std::fmt;

use num::traits::{One, Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{class_profile, ClassSizeProfile, ConfigError, NetworkConfig};
use crate::rational::{binomial, from_usize, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    EdgeOnly,
    CloudOnly,
    Hybrid,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::EdgeOnly, Scheme::CloudOnly, Scheme::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::EdgeOnly => "EdgeOnly",
            Scheme::CloudOnly => "CloudOnly",
            Scheme::Hybrid => "Hybrid",
        }
    }

    // preference on exact ties in both total and fronthaul delay
    fn tie_rank(self) -> u8 {
        match self {
            Scheme::EdgeOnly => 0,
            Scheme::CloudOnly => 1,
            Scheme::Hybrid => 2,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Serial,
    Pipelined,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Serial => "serial",
            Mode::Pipelined => "pipelined",
        }
    }

    /// Combines fronthaul and edge delay into end-to-end delay.
    pub fn combine(self, delta_f: &Rational, delta_e: &Rational) -> Rational {
        match self {
            Mode::Serial => delta_f + delta_e,
            Mode::Pipelined => delta_f.max(delta_e).clone(),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    IaIc,
    ZfIc,
    SoftTransfer,
}

impl Technique {
    pub fn name(self) -> &'static str {
        match self {
            Technique::IaIc => "IA-IC",
            Technique::ZfIc => "ZF-IC",
            Technique::SoftTransfer => "SoftTransfer",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NdtError {
    #[error("class index {j} outside [0, K_R - 1 = {}]", .kr - 1)]
    ClassOutOfRange { j: usize, kr: usize },
    #[error("{scheme} delivery is defined only for {requirement} (t_T = {t_t})")]
    RegimeMismatch {
        scheme: Scheme,
        requirement: &'static str,
        t_t: Rational,
    },
    #[error("edge-only delivery needs t_T >= 1, got t_T = {t_t}")]
    InfeasibleEdgeOnly { t_t: Rational },
    #[error("cloud-only delivery needs r > 0 while requested bits remain uncached")]
    InfeasibleCloudOnly,
    #[error("joint edge and cloud delivery needs r > 0 when t_T < 1 and requested bits remain uncached")]
    InfeasibleHybrid,
    #[error("no feasible delivery scheme: t_T = {t_t} < 1 and r = 0 (delivery is not feasible without fronthaul when the ENs cannot hold the library)")]
    NoFeasibleScheme { t_t: Rational },
}

/// A delay that may be infinite (an infeasible scheme).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NdtValue {
    Finite(Rational),
    Infinite,
}

impl NdtValue {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            NdtValue::Finite(q) => Some(q),
            NdtValue::Infinite => None,
        }
    }
}

impl PartialOrd for NdtValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NdtValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (NdtValue::Finite(a), NdtValue::Finite(b)) => a.cmp(b),
            (NdtValue::Finite(_), NdtValue::Infinite) => Ordering::Less,
            (NdtValue::Infinite, NdtValue::Finite(_)) => Ordering::Greater,
            (NdtValue::Infinite, NdtValue::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for NdtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NdtValue::Finite(q) => write!(f, "{}", crate::rational::exact_string(q)),
            NdtValue::Infinite => f.write_str("inf"),
        }
    }
}

/// Edge delay of class `j`, split by technique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassContribution {
    pub j: usize,
    pub ia_ic: Rational,
    pub zf_ic: Rational,
    pub soft_transfer: Rational,
}

impl ClassContribution {
    pub fn get(&self, t: Technique) -> &Rational {
        match t {
            Technique::IaIc => &self.ia_ic,
            Technique::ZfIc => &self.zf_ic,
            Technique::SoftTransfer => &self.soft_transfer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub scheme: Scheme,
    pub delta_f: NdtValue,
    pub delta_e: NdtValue,
    pub total: NdtValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NdtBreakdown {
    pub delta_f: Rational,
    pub delta_e: Rational,
    pub delta_total: Rational,
    pub scheme: Scheme,
    pub mode: Mode,
    pub per_class: Vec<ClassContribution>,
    /// Every scheme considered, losers included.
    pub candidates: Vec<Candidate>,
    pub notes: Vec<String>,
}

/// Sum DoF of IA combined with cache-aided cancellation for class `j`.
pub fn dof_ia(kt: usize, kr: usize, j: usize) -> Rational {
    let x_channel = Rational::new((kt * kr).into(), (kt + kr - j).into());
    x_channel.max(from_usize(j + 1))
}

/// Sum DoF of ZF combined with cache-aided cancellation for class `j`.
pub fn dof_zf(kt: usize, kr: usize, j: usize) -> Rational {
    from_usize((kt + j).min(kr))
}

/// Whether class `j` is served by cancellation alone (the `j + 1` term
/// dominates the X-channel DoF).
pub fn is_pure_ic(kt: usize, kr: usize, j: usize) -> bool {
    from_usize(j + 1) >= Rational::new((kt * kr).into(), (kt + kr - j).into())
}

/// Normalized bits of class `j` requested over all users.
fn class_load(cfg: &NetworkConfig, profile: &ClassSizeProfile, j: usize) -> Rational {
    binomial(cfg.kr() - 1, j) * from_usize(cfg.kr()) * profile.f(j)
}

fn check_class(cfg: &NetworkConfig, j: usize) {
    assert!(
        j < cfg.kr(),
        "{}",
        NdtError::ClassOutOfRange { j, kr: cfg.kr() }
    );
}

/// Edge delay of class `j` delivered by IA-IC, for the whole library part.
///
/// # Panics
/// If `j >= K_R`.
pub fn delta_ia(cfg: &NetworkConfig, j: usize) -> Rational {
    check_class(cfg, j);
    class_load(cfg, &class_profile(cfg), j) / dof_ia(cfg.kt(), cfg.kr(), j)
}

/// Edge delay of class `j` delivered by ZF-IC.
///
/// # Panics
/// If `j >= K_R`.
pub fn delta_zf(cfg: &NetworkConfig, j: usize) -> Rational {
    check_class(cfg, j);
    class_load(cfg, &class_profile(cfg), j) / dof_zf(cfg.kt(), cfg.kr(), j)
}

fn ia_zf_tables(cfg: &NetworkConfig) -> (Vec<Rational>, Vec<Rational>) {
    let profile = class_profile(cfg);
    (0..cfg.kr())
        .map(|j| {
            let load = class_load(cfg, &profile, j);
            (
                &load / dof_ia(cfg.kt(), cfg.kr(), j),
                load / dof_zf(cfg.kt(), cfg.kr(), j),
            )
        })
        .unzip()
}

fn sum(v: &[Rational]) -> Rational {
    v.iter().fold(Rational::zero(), |a, b| a + b)
}

/// IA-IC / ZF-IC weights for the exclusive and shared EN parts (`t_T >= 1`).
fn split_weights(cfg: &NetworkConfig) -> (Rational, Rational) {
    if cfg.kt() == 1 {
        // whole library shared by the single EN
        return (Rational::zero(), Rational::one());
    }
    let t_t = cfg.t_t();
    let kt = from_usize(cfg.kt());
    let denom = &kt - Rational::one();
    ((&kt - &t_t) / &denom, (t_t - Rational::one()) / denom)
}

/// Edge delay of IA-IC on the per-EN parts plus ZF-IC on the shared part.
pub fn delta_zf_ia(cfg: &NetworkConfig) -> Result<Rational, NdtError> {
    let t_t = cfg.t_t();
    if t_t < Rational::one() {
        return Err(NdtError::RegimeMismatch {
            scheme: Scheme::EdgeOnly,
            requirement: "t_T >= 1",
            t_t,
        });
    }
    let (ia, zf) = ia_zf_tables(cfg);
    let (w_ia, w_zf) = split_weights(cfg);
    Ok(w_ia * sum(&ia) + w_zf * sum(&zf))
}

pub fn delta_edge_only(cfg: &NetworkConfig) -> Result<Rational, NdtError> {
    let t_t = cfg.t_t();
    if t_t < Rational::one() {
        return Err(NdtError::InfeasibleEdgeOnly { t_t });
    }
    delta_zf_ia(cfg)
}

/// `(delta_f, delta_e)` of soft-transfer delivery of every requested bit.
pub fn delta_cloud_only(cfg: &NetworkConfig) -> Result<(Rational, Rational), NdtError> {
    let profile = class_profile(cfg);
    let (_, zf) = ia_zf_tables(cfg);
    let delta_e = sum(&zf);
    if profile.residual.is_zero() {
        return Ok((Rational::zero(), delta_e));
    }
    if !cfg.r().is_positive() {
        return Err(NdtError::InfeasibleCloudOnly);
    }
    let delta_f = from_usize(cfg.kr()) * &profile.residual / (from_usize(cfg.kt()) * cfg.r());
    Ok((delta_f, delta_e))
}

/// `(delta_f, delta_e)` of IA-IC from the EN caches plus soft-transfer of the
/// uncached remainder (`t_T <= 1`).
pub fn delta_hybrid(cfg: &NetworkConfig) -> Result<(Rational, Rational), NdtError> {
    let t_t = cfg.t_t();
    let one = Rational::one();
    if t_t > one {
        return Err(NdtError::RegimeMismatch {
            scheme: Scheme::Hybrid,
            requirement: "t_T <= 1",
            t_t,
        });
    }
    let (ia, _) = ia_zf_tables(cfg);
    let edge = &t_t * sum(&ia);
    if t_t == one {
        return Ok((Rational::zero(), edge));
    }
    let (cf, ce) = delta_cloud_only(cfg).map_err(|_| NdtError::InfeasibleHybrid)?;
    let w = one - t_t;
    Ok((&w * cf, edge + w * ce))
}

fn per_class(cfg: &NetworkConfig, scheme: Scheme) -> Vec<ClassContribution> {
    let (ia, zf) = ia_zf_tables(cfg);
    let t_t = cfg.t_t();
    let zero = Rational::zero;
    (0..cfg.kr())
        .map(|j| {
            let (ia_ic, zf_ic, soft) = match scheme {
                Scheme::EdgeOnly => {
                    let (w_ia, w_zf) = split_weights(cfg);
                    (w_ia * &ia[j], w_zf * &zf[j], zero())
                }
                Scheme::CloudOnly => (zero(), zero(), zf[j].clone()),
                Scheme::Hybrid => (
                    &t_t * &ia[j],
                    zero(),
                    (Rational::one() - &t_t) * &zf[j],
                ),
            };
            ClassContribution {
                j,
                ia_ic,
                zf_ic,
                soft_transfer: soft,
            }
        })
        .collect()
}

fn scheme_delays(cfg: &NetworkConfig, scheme: Scheme) -> Result<(Rational, Rational), NdtError> {
    match scheme {
        Scheme::EdgeOnly => delta_edge_only(cfg).map(|e| (Rational::zero(), e)),
        Scheme::CloudOnly => delta_cloud_only(cfg),
        Scheme::Hybrid => delta_hybrid(cfg),
    }
}

fn candidate(cfg: &NetworkConfig, scheme: Scheme, mode: Mode) -> Candidate {
    match scheme_delays(cfg, scheme) {
        Ok((f, e)) => Candidate {
            scheme,
            total: NdtValue::Finite(mode.combine(&f, &e)),
            delta_f: NdtValue::Finite(f),
            delta_e: NdtValue::Finite(e),
        },
        Err(_) => Candidate {
            scheme,
            delta_f: NdtValue::Infinite,
            delta_e: NdtValue::Infinite,
            total: NdtValue::Infinite,
        },
    }
}

/// Breakdown of one fixed scheme, without selection.
pub fn evaluate_scheme(cfg: &NetworkConfig, scheme: Scheme, mode: Mode) -> Result<NdtBreakdown, NdtError> {
    let (delta_f, delta_e) = scheme_delays(cfg, scheme)?;
    let delta_total = mode.combine(&delta_f, &delta_e);
    Ok(NdtBreakdown {
        candidates: vec![Candidate {
            scheme,
            delta_f: NdtValue::Finite(delta_f.clone()),
            delta_e: NdtValue::Finite(delta_e.clone()),
            total: NdtValue::Finite(delta_total.clone()),
        }],
        delta_f,
        delta_e,
        delta_total,
        scheme,
        mode,
        per_class: per_class(cfg, scheme),
        notes: Vec::new(),
    })
}

fn best(cands: &[Candidate]) -> Option<&Candidate> {
    cands
        .iter()
        .filter(|c| c.total != NdtValue::Infinite)
        .min_by(|a, b| {
            a.total
                .cmp(&b.total)
                .then_with(|| a.delta_f.cmp(&b.delta_f))
                .then_with(|| a.scheme.tie_rank().cmp(&b.scheme.tie_rank()))
        })
}

const PIPELINED_NOTE: &str =
    "t_T >= 1 pipelined branch evaluated as min{max{delta^c_F, delta^c_E}, delta^e_E}";

fn select(cfg: &NetworkConfig, mode: Mode) -> Result<NdtBreakdown, NdtError> {
    let t_t = cfg.t_t();
    let one = Rational::one();
    let low = [Scheme::Hybrid, Scheme::CloudOnly];
    let high = [Scheme::EdgeOnly, Scheme::CloudOnly];
    let considered: Vec<Scheme> = match t_t.cmp(&one) {
        Ordering::Less => low.to_vec(),
        Ordering::Greater => high.to_vec(),
        Ordering::Equal => vec![Scheme::EdgeOnly, Scheme::CloudOnly, Scheme::Hybrid],
    };
    let candidates: Vec<Candidate> = considered.iter().map(|&s| candidate(cfg, s, mode)).collect();

    let pick = if t_t == one {
        // both branches apply; they must agree, and the t_T >= 1 one is reported
        let branch = |schemes: &[Scheme]| {
            let c: Vec<Candidate> = candidates
                .iter()
                .filter(|c| schemes.contains(&c.scheme))
                .cloned()
                .collect();
            best(&c).cloned()
        };
        let lo = branch(&low);
        let hi = branch(&high);
        assert_eq!(
            lo.as_ref().map(|c| &c.total),
            hi.as_ref().map(|c| &c.total),
            "branches disagree at t_T = 1 for {cfg}"
        );
        hi
    } else {
        best(&candidates).cloned()
    };
    let pick = pick.ok_or_else(|| NdtError::NoFeasibleScheme { t_t: t_t.clone() })?;

    let mut out = evaluate_scheme(cfg, pick.scheme, mode)?;
    out.candidates = candidates;
    if mode == Mode::Pipelined && t_t >= one {
        out.notes.push(PIPELINED_NOTE.to_string());
    }
    Ok(out)
}

/// Best achievable NDT with serial fronthaul-then-edge transmission.
pub fn delta_serial(cfg: &NetworkConfig) -> Result<NdtBreakdown, NdtError> {
    select(cfg, Mode::Serial)
}

/// Best achievable NDT with pipelined transmission.
pub fn delta_pipelined(cfg: &NetworkConfig) -> Result<NdtBreakdown, NdtError> {
    select(cfg, Mode::Pipelined)
}

pub fn delta(cfg: &NetworkConfig, mode: Mode) -> Result<NdtBreakdown, NdtError> {
    select(cfg, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Mt,
    Mr,
    R,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Mt => "mt",
            Axis::Mr => "mr",
            Axis::R => "r",
        }
    }

    pub fn apply(self, template: &NetworkConfig, x: Rational) -> Result<NetworkConfig, ConfigError> {
        match self {
            Axis::Mt => template.with_mt(x),
            Axis::Mr => template.with_mr(x),
            Axis::R => template.with_r(x),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mt" | "m_t" => Ok(Axis::Mt),
            "mr" | "m_r" => Ok(Axis::Mr),
            "r" => Ok(Axis::R),
            _ => Err(format!("unknown axis `{s}` (expected mt, mr or r)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    pub x: Rational,
    pub outcome: Result<NdtBreakdown, NdtError>,
}

/// Evaluates every grid point independently; infeasible points are kept as
/// error entries. Output is sorted by `x`.
pub fn sweep(
    template: &NetworkConfig,
    axis: Axis,
    grid: &[Rational],
    mode: Mode,
) -> Result<Vec<SweepPoint>, ConfigError> {
    let cfgs = grid
        .iter()
        .map(|x| axis.apply(template, x.clone()).map(|c| (x.clone(), c)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut points: Vec<SweepPoint> = cfgs
        .into_par_iter()
        .map(|(x, cfg)| SweepPoint {
            outcome: delta(&cfg, mode),
            x,
        })
        .collect();
    points.sort_by(|a, b| a.x.cmp(&b.x));
    Ok(points)
}

/// First grid point where the selected scheme leaves cloud-only delivery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crossover {
    /// Last point still served cloud-only.
    pub before: Rational,
    /// First point served by another scheme.
    pub at: Rational,
    pub to: Scheme,
}

pub fn cloud_crossover(points: &[SweepPoint]) -> Option<Crossover> {
    points.windows(2).find_map(|w| match (&w[0].outcome, &w[1].outcome) {
        (Ok(a), Ok(b)) if a.scheme == Scheme::CloudOnly && b.scheme != Scheme::CloudOnly => Some(Crossover {
            before: w[0].x.clone(),
            at: w[1].x.clone(),
            to: b.scheme,
        }),
        _ => None,
    })
}
