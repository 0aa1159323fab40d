//! Seeded statistical checks of the finite-size placement against the
//! expected class fractions, and of bit-level delivery time against the
//! analytic NDT.
//!
//! Every trial draws its own seed from the master seed, so a report depends
//! only on `(cfg, F, trials, master_seed)`. Cell fractions are scored with
//! `z = (observed - f(j)) / sqrt(f(j) (1 - f(j)) / F)`; a cell whose expected
//! count `F f(j)` is below [`MIN_EXPECTED_COUNT`] is skipped and listed.

use std::fmt::{self, Write as _};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{class_profile, DemandVector, NetworkConfig, UserSet};
use crate::ndt::{self, Mode, NdtBreakdown, Scheme};
use crate::placement::{
    classify_bits, place_en_caches, place_user_caches, EmpiricalProfile, EnPlacement, PlacementError, UserPlacement,
};
use crate::rational::{self, Rational};
use crate::scheduler::{build_schedule, reconcile, PlacedCaches, ReconcileReport, ScheduleError, Sizes};

pub const MIN_FILE_SIZE: u64 = 1024;
pub const MIN_EXPECTED_COUNT: f64 = 32.0;
pub const Z_LIMIT: f64 = 5.0;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("file size {0} is below the minimum of {MIN_FILE_SIZE} bits")]
    FileTooSmall(u64),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("expected-fraction table has {found} entries, need {expected}")]
    BadExpectation { expected: usize, found: usize },
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Aggregates for one subfile class over all files, subsets and trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub j: usize,
    pub expected: f64,
    /// Mean observed fraction per cell.
    pub mean: f64,
    /// Spread of the per-trial class means.
    pub stddev: f64,
    pub max_abs_z: f64,
    pub cells_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedCell {
    pub file: usize,
    pub set: UserSet,
}

/// Bit-level against analytic delivery time for one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct NdtCheck {
    pub scheme: Scheme,
    pub mode: Mode,
    pub achieved_delta_f: f64,
    pub achieved_delta_e: f64,
    pub analytic_delta_f: f64,
    pub analytic_delta_e: f64,
    pub max_relative_gap: f64,
    pub bound: f64,
}

impl NdtCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_gap <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub master_seed: u64,
    pub file_size: u64,
    pub trials: usize,
    pub classes: Vec<ClassStats>,
    pub skipped: Vec<SkippedCell>,
    pub ndt: Vec<NdtCheck>,
}

impl TrialReport {
    pub fn z_passed(&self) -> bool {
        self.classes.iter().all(|c| c.max_abs_z <= Z_LIMIT)
    }

    pub fn passed(&self) -> bool {
        self.z_passed() && self.ndt.iter().all(NdtCheck::passed)
    }
}

impl fmt::Display for TrialReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "master_seed = {}", self.master_seed)?;
        writeln!(f, "file_size = {}", self.file_size)?;
        writeln!(f, "trials = {}", self.trials)?;
        writeln!(f, "z_limit = {Z_LIMIT}")?;
        for c in &self.classes {
            let p = format!("class.{}", c.j);
            writeln!(f, "{p}.expected = {:.12}", c.expected)?;
            writeln!(f, "{p}.mean = {:.12}", c.mean)?;
            writeln!(f, "{p}.stddev = {:.6e}", c.stddev)?;
            writeln!(f, "{p}.max_abs_z = {:.4}", c.max_abs_z)?;
            writeln!(f, "{p}.cells = {}", c.cells_scored)?;
        }
        let skipped: Vec<String> = self
            .skipped
            .iter()
            .map(|s| format!("{}:{}", s.file + 1, s.set))
            .collect();
        writeln!(f, "skipped = {}", skipped.join(" "))?;
        for n in &self.ndt {
            let p = format!("ndt.{}.{}", n.scheme, n.mode);
            writeln!(f, "{p}.delta_f = {:.12} analytic {:.12}", n.achieved_delta_f, n.analytic_delta_f)?;
            writeln!(f, "{p}.delta_e = {:.12} analytic {:.12}", n.achieved_delta_e, n.analytic_delta_e)?;
            writeln!(f, "{p}.relative_gap = {:.6e} bound {:.6e}", n.max_relative_gap, n.bound)?;
        }
        writeln!(f, "passed = {}", self.passed())
    }
}

/// Seed of trial `trial`, derived from the master seed.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

fn expected_table(cfg: &NetworkConfig, expected: Option<&[Rational]>) -> Result<Vec<f64>, MonteCarloError> {
    let kr = cfg.kr();
    match expected {
        Some(t) if t.len() != kr + 1 => Err(MonteCarloError::BadExpectation {
            expected: kr + 1,
            found: t.len(),
        }),
        Some(t) => Ok(t.iter().map(rational::to_f64).collect()),
        None => {
            let p = class_profile(cfg);
            Ok((0..=kr).map(|j| rational::to_f64(p.f(j))).collect())
        }
    }
}

fn check_preconditions(file_size: u64, trials: usize) -> Result<(), MonteCarloError> {
    if file_size < MIN_FILE_SIZE {
        return Err(MonteCarloError::FileTooSmall(file_size));
    }
    if trials == 0 {
        return Err(MonteCarloError::NoTrials);
    }
    Ok(())
}

fn placement(cfg: &NetworkConfig, file_size: u64, seed: u64) -> Result<(EnPlacement, UserPlacement, EmpiricalProfile), MonteCarloError> {
    let en = place_en_caches(cfg, file_size)?;
    let users = place_user_caches(cfg, file_size, seed)?;
    let profile = classify_bits(&en, &users)?;
    Ok((en, users, profile))
}

/// Observed fraction of every `(file, subset)` cell, file-major, subsets by bits.
fn cell_fractions(profile: &EmpiricalProfile) -> Vec<f64> {
    let f = profile.file_size as f64;
    (0..profile.n_files())
        .flat_map(|file| profile.subset_counts(file))
        .map(|c| c as f64 / f)
        .collect()
}

pub fn run_trials(cfg: &NetworkConfig, file_size: u64, trials: usize, master_seed: u64) -> Result<TrialReport, MonteCarloError> {
    run_trials_against(cfg, file_size, trials, master_seed, None)
}

/// As [`run_trials`], scoring against `expected[j]` instead of the class
/// profile when given.
pub fn run_trials_against(
    cfg: &NetworkConfig,
    file_size: u64,
    trials: usize,
    master_seed: u64,
    expected: Option<&[Rational]>,
) -> Result<TrialReport, MonteCarloError> {
    check_preconditions(file_size, trials)?;
    let expected = expected_table(cfg, expected)?;
    let kr = cfg.kr();
    let subsets = 1usize << kr;
    let cells_per_file = subsets;

    let observed: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| placement(cfg, file_size, trial_seed(master_seed, t)).map(|(_, _, p)| cell_fractions(&p)))
        .collect::<Result<_, _>>()?;

    let f = file_size as f64;
    let class_of = |cell: usize| (cell % cells_per_file).count_ones() as usize;
    let scored = |cell: usize| expected[class_of(cell)] * f >= MIN_EXPECTED_COUNT;
    let n_cells = cfg.n() * cells_per_file;

    let skipped = (0..n_cells)
        .filter(|&c| !scored(c))
        .map(|c| SkippedCell {
            file: c / cells_per_file,
            set: UserSet::from_bits((c % cells_per_file) as u64),
        })
        .collect();

    let classes = (0..=kr)
        .map(|j| {
            let cells: Vec<usize> = (0..n_cells).filter(|&c| class_of(c) == j).collect();
            let e = expected[j];
            let sigma = (e * (1.0 - e) / f).sqrt();
            let per_trial: Vec<f64> = observed
                .iter()
                .map(|obs| cells.iter().map(|&c| obs[c]).sum::<f64>() / cells.len() as f64)
                .collect();
            let mean = per_trial.iter().sum::<f64>() / trials as f64;
            let stddev = if trials > 1 {
                (per_trial.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
            } else {
                0.0
            };
            let mut max_abs_z: f64 = 0.0;
            let mut cells_scored = 0;
            for &c in cells.iter().filter(|&&c| scored(c)) {
                cells_scored += 1;
                for obs in &observed {
                    let dev = obs[c] - e;
                    let z = if sigma > 0.0 {
                        dev / sigma
                    } else if dev == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    max_abs_z = max_abs_z.max(z.abs());
                }
            }
            ClassStats {
                j,
                expected: e,
                mean,
                stddev,
                max_abs_z,
                cells_scored,
            }
        })
        .collect();

    let ndt = ndt_checks(cfg, file_size, trial_seed(master_seed, 0))?;
    Ok(TrialReport {
        master_seed,
        file_size,
        trials,
        classes,
        skipped,
        ndt,
    })
}

/// Serial-mode bit-level delivery time of every feasible scheme on one
/// placement.
fn ndt_checks(cfg: &NetworkConfig, file_size: u64, seed: u64) -> Result<Vec<NdtCheck>, MonteCarloError> {
    let feasible: Vec<Scheme> = Scheme::ALL
        .into_iter()
        .filter(|&s| ndt::evaluate_scheme(cfg, s, Mode::Serial).is_ok())
        .collect();
    if feasible.is_empty() {
        return Ok(Vec::new());
    }
    let placed = PlacedNetwork::new(cfg, file_size, seed)?;
    let demand = DemandVector::worst_case(cfg);
    feasible
        .into_iter()
        .map(|s| {
            let e = placed.empirical_ndt(&demand, s, Mode::Serial)?;
            Ok(e.check())
        })
        .collect()
}

/// A finite-size placement together with its classification, reusable for
/// several schemes and modes.
#[derive(Debug, Clone)]
pub struct PlacedNetwork {
    pub cfg: NetworkConfig,
    pub en: EnPlacement,
    pub users: UserPlacement,
    pub profile: EmpiricalProfile,
}

impl PlacedNetwork {
    pub fn new(cfg: &NetworkConfig, file_size: u64, seed: u64) -> Result<Self, MonteCarloError> {
        let (en, users, profile) = placement(cfg, file_size, seed)?;
        Ok(PlacedNetwork {
            cfg: cfg.clone(),
            en,
            users,
            profile,
        })
    }

    pub fn empirical_ndt(&self, demand: &DemandVector, scheme: Scheme, mode: Mode) -> Result<EmpiricalNdt, MonteCarloError> {
        let caches = PlacedCaches::new(&self.en, &self.users);
        let schedule = build_schedule(&self.cfg, Sizes::Empirical(&self.profile), &caches, demand, scheme, mode)?;
        let analytic = ndt::evaluate_scheme(&self.cfg, scheme, mode).map_err(ScheduleError::from)?;
        let report = reconcile(&schedule, &analytic)?;
        Ok(EmpiricalNdt {
            achieved_delta_f: schedule.achieved_delta_f,
            achieved_delta_e: schedule.achieved_delta_e,
            analytic,
            report,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalNdt {
    pub achieved_delta_f: Rational,
    pub achieved_delta_e: Rational,
    pub analytic: NdtBreakdown,
    pub report: ReconcileReport,
}

impl EmpiricalNdt {
    pub fn relative_gap(&self) -> f64 {
        self.report.max_relative_gap()
    }

    fn check(&self) -> NdtCheck {
        let bound = match self.report.tolerance {
            crate::scheduler::Tolerance::Statistical { file_size, coefficient } => coefficient / (file_size as f64).sqrt(),
            crate::scheduler::Tolerance::Exact => 0.0,
        };
        NdtCheck {
            scheme: self.analytic.scheme,
            mode: self.analytic.mode,
            achieved_delta_f: rational::to_f64(&self.achieved_delta_f),
            achieved_delta_e: rational::to_f64(&self.achieved_delta_e),
            analytic_delta_f: rational::to_f64(&self.analytic.delta_f),
            analytic_delta_e: rational::to_f64(&self.analytic.delta_e),
            max_relative_gap: self.relative_gap(),
            bound,
        }
    }
}

/// Places caches at size `F`, schedules the demand on the actual bits and
/// reconciles against the analytic NDT within `10 / sqrt(F)` relative.
pub fn empirical_ndt(
    cfg: &NetworkConfig,
    file_size: u64,
    seed: u64,
    demand: &DemandVector,
    scheme: Scheme,
    mode: Mode,
) -> Result<EmpiricalNdt, MonteCarloError> {
    check_preconditions(file_size, 1)?;
    PlacedNetwork::new(cfg, file_size, seed)?.empirical_ndt(demand, scheme, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub file_size: u64,
    /// Root-mean-square deviation of cell fractions from `f(j)`.
    pub rms_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub points: Vec<ConvergencePoint>,
    /// Least-squares slope of `ln rms_error` against `ln F`.
    pub slope: f64,
}

impl fmt::Display for ConvergenceStudy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.points {
            writeln!(f, "rms_error.{} = {:.6e}", p.file_size, p.rms_error)?;
        }
        writeln!(f, "slope = {:.4}", self.slope)
    }
}

pub fn convergence_study(
    cfg: &NetworkConfig,
    file_sizes: &[u64],
    trials: usize,
    master_seed: u64,
) -> Result<ConvergenceStudy, MonteCarloError> {
    let expected = expected_table(cfg, None)?;
    let cells_per_file = 1usize << cfg.kr();
    let mut points = Vec::with_capacity(file_sizes.len());
    for (k, &file_size) in file_sizes.iter().enumerate() {
        check_preconditions(file_size, trials)?;
        let sq: Vec<(f64, usize)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(master_seed ^ (k as u64).rotate_left(32), t);
                placement(cfg, file_size, seed).map(|(_, _, p)| {
                    let obs = cell_fractions(&p);
                    let sum = obs
                        .iter()
                        .enumerate()
                        .map(|(c, o)| (o - expected[(c % cells_per_file).count_ones() as usize]).powi(2))
                        .sum::<f64>();
                    (sum, obs.len())
                })
            })
            .collect::<Result<_, _>>()?;
        let (sum, count) = sq.iter().fold((0.0, 0), |(s, n), &(a, b)| (s + a, n + b));
        points.push(ConvergencePoint {
            file_size,
            rms_error: (sum / count as f64).sqrt(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.file_size as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.rms_error.ln()).collect();
    Ok(ConvergenceStudy {
        slope: ols_slope(&xs, &ys),
        points,
    })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// `[2^12, 2^14, .., 2^22]`.
pub fn default_file_sizes() -> Vec<u64> {
    (6..=11).map(|k| 1u64 << (2 * k)).collect()
}

/// Text summary used by the command line.
pub fn summary(report: &TrialReport, study: Option<&ConvergenceStudy>) -> String {
    let mut out = report.to_string();
    if let Some(s) = study {
        let _ = write!(out, "{s}");
    }
    out
}
