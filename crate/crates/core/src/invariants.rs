//! Structural checks run by `fran validate` and the test suites.

use std::fmt;

use num::traits::{One, Zero};
use rayon::prelude::*;

use crate::model::{class_profile, DemandVector, NetworkConfig};
use crate::ndt::{self, Candidate, Mode, NdtValue, Scheme};
use crate::rational::{binomial, exact_string, from_usize, ratio, Rational};
use crate::scheduler::{build_schedule, reconcile, LabelCaches, Sizes};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, failure: Option<String>) -> Self {
        CheckResult {
            name,
            passed: failure.is_none(),
            detail: failure.unwrap_or_default(),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "pass" } else { "FAIL" };
        if self.detail.is_empty() {
            write!(f, "{status} {}", self.name)
        } else {
            write!(f, "{status} {}: {}", self.name, self.detail)
        }
    }
}

/// Configurations over `K_T, K_R` in `1..=6` with rational cache sizes and
/// fronthaul gains, including the `t_T = 1` boundary.
pub fn default_grid() -> Vec<NetworkConfig> {
    let mut out = Vec::new();
    for kt in 1..=6usize {
        for kr in 1..=6usize {
            let n = kr + 1;
            let nq = from_usize(n);
            let ktq = from_usize(kt);
            let mut mts = vec![
                Rational::zero(),
                &nq / (from_usize(2) * &ktq),
                &nq / &ktq,
                nq.clone(),
            ];
            mts.sort();
            mts.dedup();
            for mt in &mts {
                for mr in [ratio(1, 2), &nq * ratio(2, 3)] {
                    for r in [Rational::zero(), ratio(3, 2)] {
                        out.push(NetworkConfig::new(kt, kr, n, mt.clone(), mr.clone(), r).expect("grid point is valid"));
                    }
                }
            }
        }
    }
    out
}

/// `sum_j C(K_R, j) f(j) = 1` and the requester-excluded residual equals
/// `1 - M_R / N`.
pub fn check_partition(cfg: &NetworkConfig) -> CheckResult {
    let p = class_profile(cfg);
    let kr = cfg.kr();
    let total = (0..=kr).fold(Rational::zero(), |a, j| a + binomial(kr, j) * p.f(j));
    let residual = (0..kr).fold(Rational::zero(), |a, j| a + binomial(kr - 1, j) * p.f(j));
    let want = Rational::one() - cfg.mr() / from_usize(cfg.n());
    let failure = if !total.is_one() {
        Some(format!("class sizes sum to {}", exact_string(&total)))
    } else if residual != want || p.residual != want {
        Some(format!("residual {} != {}", exact_string(&residual), exact_string(&want)))
    } else {
        None
    };
    CheckResult::new("partition", failure)
}

/// ZF-IC never needs more time than IA-IC for the same class.
pub fn check_class_dominance(cfg: &NetworkConfig) -> CheckResult {
    let failure = (0..cfg.kr()).find_map(|j| {
        let (zf, ia) = (ndt::delta_zf(cfg, j), ndt::delta_ia(cfg, j));
        (zf > ia).then(|| format!("class {j}: ZF {} > IA {}", exact_string(&zf), exact_string(&ia)))
    });
    CheckResult::new("class-dominance", failure)
}

pub fn check_pipelined_le_serial(cfg: &NetworkConfig) -> CheckResult {
    let failure = match (ndt::delta_serial(cfg), ndt::delta_pipelined(cfg)) {
        (Ok(s), Ok(p)) if p.delta_total > s.delta_total => Some(format!(
            "pipelined {} > serial {}",
            exact_string(&p.delta_total),
            exact_string(&s.delta_total)
        )),
        (Ok(_), Ok(_)) | (Err(_), Err(_)) => None,
        (s, p) => Some(format!("feasibility differs: serial {:?}, pipelined {:?}", s.is_ok(), p.is_ok())),
    };
    CheckResult::new("pipelined-le-serial", failure)
}

fn branch_best(cands: &[Candidate], schemes: &[Scheme]) -> NdtValue {
    cands
        .iter()
        .filter(|c| schemes.contains(&c.scheme))
        .map(|c| c.total.clone())
        .min()
        .unwrap_or(NdtValue::Infinite)
}

/// At `t_T = 1` the hybrid/cloud and edge/cloud selections coincide.
pub fn check_branch_agreement(cfg: &NetworkConfig) -> CheckResult {
    if cfg.t_t() != Rational::one() {
        return CheckResult::new("branch-agreement", None);
    }
    let mut failure = None;
    for mode in [Mode::Serial, Mode::Pipelined] {
        let cands: Vec<Candidate> = match ndt::delta(cfg, mode) {
            Ok(b) => b.candidates,
            Err(e) => {
                failure = Some(format!("{mode}: {e}"));
                break;
            }
        };
        let lo = branch_best(&cands, &[Scheme::Hybrid, Scheme::CloudOnly]);
        let hi = branch_best(&cands, &[Scheme::EdgeOnly, Scheme::CloudOnly]);
        if lo != hi {
            failure = Some(format!("{mode}: t_T <= 1 branch {lo}, t_T >= 1 branch {hi}"));
            break;
        }
    }
    CheckResult::new("branch-agreement", failure)
}

/// Edge-only delay does not increase as `t_T` grows over `[1, K_T]`.
pub fn check_edge_monotone(cfg: &NetworkConfig, steps: usize) -> CheckResult {
    let kt = from_usize(cfg.kt());
    let nq = from_usize(cfg.n());
    let mut prev: Option<(Rational, Rational)> = None;
    let mut failure = None;
    for s in 0..=steps {
        let t = Rational::one() + (&kt - Rational::one()) * from_usize(s) / from_usize(steps.max(1));
        let c = cfg.with_mt(&t * &nq / &kt).expect("M_T within [N/K_T, N]");
        let e = ndt::delta_edge_only(&c).expect("t_T >= 1");
        if let Some((pt, pe)) = &prev {
            if e > *pe {
                failure = Some(format!(
                    "t_T {} -> {}: {} -> {}",
                    exact_string(pt),
                    exact_string(&t),
                    exact_string(pe),
                    exact_string(&e)
                ));
                break;
            }
        }
        prev = Some((t, e));
    }
    CheckResult::new("edge-monotone-in-t_T", failure)
}

/// Cloud fronthaul delay strictly decreases in `r` whenever uncached bits remain.
pub fn check_cloud_fronthaul_decreasing(cfg: &NetworkConfig) -> CheckResult {
    let rs = [ratio(1, 4), ratio(1, 2), Rational::one(), ratio(7, 2), from_usize(10)];
    let residual_zero = class_profile(cfg).residual.is_zero();
    let mut failure = None;
    let mut prev: Option<Rational> = None;
    for r in rs {
        let c = cfg.with_r(r.clone()).expect("positive r is valid");
        let (f, _) = ndt::delta_cloud_only(&c).expect("r > 0");
        if let Some(p) = &prev {
            let ok = if residual_zero { f.is_zero() } else { f < *p };
            if !ok {
                failure = Some(format!("r = {}: {} after {}", exact_string(&r), exact_string(&f), exact_string(p)));
                break;
            }
        }
        prev = Some(f);
    }
    CheckResult::new("cloud-fronthaul-decreasing-in-r", failure)
}

/// Scaling `N`, `M_T` and `M_R` together leaves the NDT unchanged.
pub fn check_scale_invariance(cfg: &NetworkConfig) -> CheckResult {
    let k = 2usize;
    let scaled = NetworkConfig::new(
        cfg.kt(),
        cfg.kr(),
        cfg.n() * k,
        cfg.mt() * from_usize(k),
        cfg.mr() * from_usize(k),
        cfg.r().clone(),
    )
    .expect("scaled config stays valid");
    let failure = [Mode::Serial, Mode::Pipelined].into_iter().find_map(|mode| {
        let a = ndt::delta(cfg, mode).map(|b| b.delta_total);
        let b = ndt::delta(&scaled, mode).map(|b| b.delta_total);
        (a != b).then(|| format!("{mode}: {a:?} vs {b:?}"))
    });
    CheckResult::new("scale-invariance", failure)
}

/// Analytic schedules of every feasible scheme reproduce the formulas exactly.
pub fn check_schedule_equivalence(cfg: &NetworkConfig) -> CheckResult {
    let demand = DemandVector::worst_case(cfg);
    let mut failure = None;
    'outer: for scheme in Scheme::ALL {
        for mode in [Mode::Serial, Mode::Pipelined] {
            let Ok(analytic) = ndt::evaluate_scheme(cfg, scheme, mode) else {
                continue;
            };
            let outcome = build_schedule(cfg, Sizes::Analytic, &LabelCaches, &demand, scheme, mode)
                .map_err(|e| e.to_string())
                .and_then(|s| reconcile(&s, &analytic).map_err(|e| e.to_string()));
            if let Err(e) = outcome {
                failure = Some(format!("{scheme} {mode}: {e}"));
                break 'outer;
            }
        }
    }
    CheckResult::new("schedule-equivalence", failure)
}

/// Every single-config check.
pub fn check_config(cfg: &NetworkConfig) -> Vec<CheckResult> {
    let mut out = vec![
        check_partition(cfg),
        check_class_dominance(cfg),
        check_pipelined_le_serial(cfg),
        check_branch_agreement(cfg),
        check_cloud_fronthaul_decreasing(cfg),
        check_scale_invariance(cfg),
        check_schedule_equivalence(cfg),
    ];
    if cfg.kt() > 1 {
        out.push(check_edge_monotone(cfg, 8));
    }
    out
}

/// Runs [`check_config`] over `grid`, keeping the first failure per check.
pub fn run_suite(grid: &[NetworkConfig]) -> Vec<CheckResult> {
    let per_cfg: Vec<Vec<CheckResult>> = grid.par_iter().map(check_config).collect();
    let mut merged: Vec<CheckResult> = Vec::new();
    for (cfg, results) in grid.iter().zip(per_cfg) {
        for r in results {
            match merged.iter_mut().find(|m| m.name == r.name) {
                Some(m) if m.passed && !r.passed => {
                    m.passed = false;
                    m.detail = format!("{cfg}: {}", r.detail);
                }
                Some(_) => {}
                None if r.passed => merged.push(r),
                None => merged.push(CheckResult {
                    detail: format!("{cfg}: {}", r.detail),
                    ..r
                }),
            }
        }
    }
    merged
}
