//! End-to-end acceptance checks, one line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits nonzero if any check fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num::traits::Zero;
use num::{BigInt, BigRational};

use fran_ndt::invariants::{
    check_branch_agreement, check_class_dominance, check_cloud_fronthaul_decreasing, check_edge_monotone,
    check_partition, check_pipelined_le_serial, default_grid,
};
use fran_ndt::model::{enumerate_subfiles, DemandVector, NetworkConfig, UserSet};
use fran_ndt::montecarlo::{convergence_study, default_file_sizes, run_trials, PlacedNetwork};
use fran_ndt::ndt::{self, cloud_crossover, sweep, Axis, Mode, NdtError, Scheme};
use fran_ndt::rational::{from_usize, int, ratio};
use fran_ndt::scheduler::{
    build_schedule, reconcile, validate_block, LabelCaches, PlacedCaches, Schedule, ScheduleError, Sizes,
    TransmissionBlock, Violation,
};
use fran_ndt::Rational;

type Outcome = Result<String, String>;

/// Id, title, time limit, check.
type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn cfg(kt: usize, kr: usize, n: usize, mt: Rational, mr: Rational, r: Rational) -> NetworkConfig {
    NetworkConfig::new(kt, kr, n, mt, mr, r).expect("valid config")
}

fn reference(mt: Rational, r: Rational) -> NetworkConfig {
    cfg(3, 3, 3, mt, int(1), r)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ac1_identities() -> Outcome {
    let grid = default_grid();
    ensure(grid.len() >= 200, || format!("grid has only {} configs", grid.len()))?;
    for c in &grid {
        let r = check_partition(c);
        ensure(r.passed, || format!("{c}: {}", r.detail))?;
    }
    Ok(format!("{} configs", grid.len()))
}

/// Brute-force evaluation of the closed forms, written independently of the
/// library for the reference network.
mod oracle {
    use super::*;

    pub fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn choose(n: usize, k: usize) -> BigRational {
        let mut acc = q(1, 1);
        for i in 0..k {
            acc *= q((n - i) as i64, (i + 1) as i64);
        }
        acc
    }

    fn pow(x: &BigRational, e: usize) -> BigRational {
        (0..e).fold(q(1, 1), |a, _| a * x)
    }

    pub struct Net {
        pub kt: usize,
        pub kr: usize,
        pub n: usize,
        pub mt: BigRational,
        pub mr: BigRational,
        pub r: BigRational,
    }

    impl Net {
        fn f(&self, j: usize) -> BigRational {
            let p = &self.mr / q(self.n as i64, 1);
            pow(&p, j) * pow(&(q(1, 1) - &p), self.kr - j)
        }

        fn bits(&self, j: usize) -> BigRational {
            choose(self.kr - 1, j) * q(self.kr as i64, 1) * self.f(j)
        }

        pub fn ia(&self, j: usize) -> BigRational {
            let (kt, kr) = (self.kt as i64, self.kr as i64);
            let x = q(kt * kr, kt + kr - j as i64);
            let ic = q(j as i64 + 1, 1);
            self.bits(j) / if x > ic { x } else { ic }
        }

        pub fn zf(&self, j: usize) -> BigRational {
            self.bits(j) / q((self.kt + j).min(self.kr) as i64, 1)
        }

        pub fn t_t(&self) -> BigRational {
            q(self.kt as i64, self.n as i64) * &self.mt
        }

        pub fn edge(&self) -> BigRational {
            let t = self.t_t();
            let kt = q(self.kt as i64, 1);
            let ia: BigRational = (0..self.kr).map(|j| self.ia(j)).sum();
            let zf: BigRational = (0..self.kr).map(|j| self.zf(j)).sum();
            (&kt - &t) / (&kt - q(1, 1)) * ia + (t - q(1, 1)) / (kt - q(1, 1)) * zf
        }

        pub fn cloud(&self) -> (BigRational, BigRational) {
            let residual: BigRational = (0..self.kr).map(|j| choose(self.kr - 1, j) * self.f(j)).sum();
            let df = q(self.kr as i64, self.kt as i64) * residual / &self.r;
            (df, (0..self.kr).map(|j| self.zf(j)).sum())
        }

        pub fn hybrid(&self) -> (BigRational, BigRational) {
            let t = self.t_t();
            let (cf, ce) = self.cloud();
            let ia: BigRational = (0..self.kr).map(|j| self.ia(j)).sum();
            let w = q(1, 1) - &t;
            (&w * cf, t * ia + w * ce)
        }
    }

    pub fn net(mt: BigRational, r: BigRational) -> Net {
        Net {
            kt: 3,
            kr: 3,
            n: 3,
            mt,
            mr: q(1, 1),
            r,
        }
    }
}

fn ac2_derived_table() -> Outcome {
    use oracle::q;
    let table_ia = [q(16, 27), q(12, 27), q(2, 27)];
    let table_zf = [q(8, 27), q(8, 27), q(2, 27)];

    // the oracle reproduces the hand-derived table
    let o = oracle::net(q(1, 1), q(1, 1));
    for j in 0..3 {
        ensure(o.ia(j) == table_ia[j] && o.zf(j) == table_zf[j], || format!("oracle class {j} disagrees with table"))?;
    }
    ensure(o.edge() == q(10, 9), || "oracle edge t_T=1".into())?;
    ensure(oracle::net(q(3, 1), q(1, 1)).edge() == q(2, 3), || "oracle edge t_T=3".into())?;
    ensure(oracle::net(q(0, 1), q(1, 1)).cloud() == (q(2, 3), q(2, 3)), || "oracle cloud".into())?;
    let s = [o.edge(), {
        let (f, e) = o.cloud();
        f + e
    }]
    .into_iter()
    .min()
    .unwrap();
    ensure(s == q(10, 9), || "oracle serial".into())?;
    let o3 = oracle::net(q(3, 1), q(1, 1));
    let (cf, ce) = o3.cloud();
    let p = o3.edge().min(cf.max(ce));
    ensure(p == q(2, 3), || "oracle pipelined".into())?;

    // the library reproduces the table
    let c = reference(int(1), int(1));
    for j in 0..3 {
        ensure(ndt::delta_ia(&c, j) == table_ia[j], || format!("delta_IA({j}) = {}", ndt::delta_ia(&c, j)))?;
        ensure(ndt::delta_zf(&c, j) == table_zf[j], || format!("delta_ZF({j}) = {}", ndt::delta_zf(&c, j)))?;
    }
    ensure(ndt::delta_edge_only(&c).unwrap() == q(10, 9), || "edge t_T=1".into())?;
    ensure(ndt::delta_edge_only(&reference(int(3), int(1))).unwrap() == q(2, 3), || "edge t_T=3".into())?;
    ensure(
        ndt::delta_cloud_only(&reference(int(0), int(1))).unwrap() == (q(2, 3), q(2, 3)),
        || "cloud r=1".into(),
    )?;
    let serial = ndt::delta_serial(&c).map_err(|e| e.to_string())?;
    ensure(serial.delta_total == q(10, 9), || format!("serial total {}", serial.delta_total))?;
    let pipe = ndt::delta_pipelined(&reference(int(3), int(1))).map_err(|e| e.to_string())?;
    ensure(pipe.delta_total == q(2, 3), || format!("pipelined total {}", pipe.delta_total))?;

    // a hybrid point against the oracle, off the tabulated values
    let (hf, he) = ndt::delta_hybrid(&reference(ratio(1, 2), int(1))).map_err(|e| e.to_string())?;
    ensure((hf, he) == oracle::net(q(1, 2), q(1, 1)).hybrid(), || "hybrid M_T=1/2".into())?;
    Ok("11 values exact".into())
}

fn ac3_subfile_count() -> Outcome {
    let c = reference(int(1), int(0));
    let labels = enumerate_subfiles(&c);
    for file in 0..3 {
        let n = labels.iter().filter(|s| s.file == file).count();
        ensure(n == 24, || format!("file {} has {n} labels", file + 1))?;
    }
    Ok("24 labels per file".into())
}

fn ac4_properties() -> Outcome {
    let grid = default_grid();
    for c in &grid {
        let mut checks = vec![
            check_class_dominance(c),
            check_pipelined_le_serial(c),
            check_branch_agreement(c),
            check_cloud_fronthaul_decreasing(c),
        ];
        if c.kt() > 1 {
            checks.push(check_edge_monotone(c, 12));
        }
        for r in checks {
            ensure(r.passed, || format!("{c}: {} {}", r.name, r.detail))?;
        }
    }
    Ok(format!("{} configs x 5 properties", grid.len()))
}

fn ac5_figure_shapes() -> Outcome {
    // NDT against M_T, edge-only regime
    let base = reference(int(1), int(0));
    let grid: Vec<Rational> = (0..=16).map(|i| int(1) + ratio(i, 8)).collect();
    let pts = sweep(&base, Axis::Mt, &grid, Mode::Serial).map_err(|e| e.to_string())?;
    let totals: Vec<Rational> = pts
        .iter()
        .map(|p| p.outcome.as_ref().map(|b| b.delta_total.clone()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    ensure(totals.windows(2).all(|w| w[1] <= w[0]), || "M_T sweep not non-increasing".into())?;
    ensure(totals[0] > totals[totals.len() - 1], || "M_T sweep flat".into())?;

    // NDT against r with no EN cache
    let base = reference(int(0), int(1));
    let rs: Vec<Rational> = [ratio(1, 4), ratio(1, 2), int(1), int(2), int(5), int(20), int(100), int(10000)].to_vec();
    let plateau: Rational = (0..3).map(|j| ndt::delta_zf(&base, j)).sum();
    for mode in [Mode::Serial, Mode::Pipelined] {
        let pts = sweep(&base, Axis::R, &rs, mode).map_err(|e| e.to_string())?;
        let bs: Vec<_> = pts
            .iter()
            .map(|p| p.outcome.clone().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        ensure(bs.iter().all(|b| b.delta_e == plateau), || format!("{mode}: edge delay departs from plateau"))?;
        ensure(
            bs.windows(2).all(|w| w[1].delta_total <= w[0].delta_total),
            || format!("{mode}: r sweep not non-increasing"),
        )?;
        ensure(bs.windows(2).all(|w| w[1].delta_f < w[0].delta_f), || format!("{mode}: delta_f not decreasing"))?;
        let last = &bs[bs.len() - 1];
        ensure(
            &last.delta_total - &plateau <= ratio(1, 1000) && last.delta_total >= plateau,
            || format!("{mode}: r sweep ends at {} above plateau {}", last.delta_total, plateau),
        )?;
    }

    // large fronthaul: cloud-only at small M_T, edge delivery overtakes at large M_T
    let base = reference(int(0), int(10));
    let grid: Vec<Rational> = (0..=24).map(|i| ratio(i, 8)).collect();
    let pts = sweep(&base, Axis::Mt, &grid, Mode::Serial).map_err(|e| e.to_string())?;
    let first = pts[0].outcome.as_ref().map_err(|e| e.to_string())?;
    ensure(first.scheme == Scheme::CloudOnly, || format!("M_T = 0 selects {}", first.scheme))?;
    let last = pts[pts.len() - 1].outcome.as_ref().map_err(|e| e.to_string())?;
    ensure(last.scheme != Scheme::CloudOnly, || "cloud-only at M_T = N".into())?;
    let x = cloud_crossover(&pts).ok_or("no crossover")?;
    Ok(format!(
        "crossover to {} between M_T={} and M_T={}",
        x.to,
        fran_ndt::rational::exact_string(&x.before),
        fran_ndt::rational::exact_string(&x.at)
    ))
}

fn ac6_monte_carlo() -> Outcome {
    let c = reference(int(1), int(0));
    let report = run_trials(&c, 1 << 20, 32, 7).map_err(|e| e.to_string())?;
    let worst = report.classes.iter().map(|c| c.max_abs_z).fold(0.0, f64::max);
    ensure(report.z_passed(), || format!("max |z| = {worst:.3}\n{report}"))?;
    let study = convergence_study(&c, &default_file_sizes(), 8, 7).map_err(|e| e.to_string())?;
    ensure((study.slope + 0.5).abs() <= 0.15, || format!("slope {:.4}\n{study}", study.slope))?;
    Ok(format!("max |z| = {worst:.3}, slope = {:.4}", study.slope))
}

/// 50 configurations mixing regimes, EN counts and cache sizes.
fn reconciliation_grid() -> Vec<NetworkConfig> {
    let mut out = vec![
        reference(int(1), int(0)),
        reference(int(0), int(1)),
        reference(ratio(1, 2), int(1)),
        reference(int(3), int(1)),
        cfg(2, 2, 2, int(1), int(1), int(0)),
    ];
    let mut idx = 0usize;
    while out.len() < 50 {
        let kt = 1 + idx % 3;
        let kr = 1 + (idx / 3) % 4;
        let n = kr + idx % 2;
        let nq = from_usize(n);
        let ktq = from_usize(kt);
        let mt = [
            Rational::zero(),
            &nq / (int(2) * &ktq),
            &nq / &ktq,
            (&nq / &ktq + &nq) / int(2),
            nq.clone(),
        ][idx % 5]
            .clone();
        let mr = [ratio(1, 2), &nq / int(3), int(1), nq.clone(), Rational::zero()][(idx / 5) % 5].clone();
        let r = [Rational::zero(), int(1), ratio(5, 2)][(idx / 2) % 3].clone();
        out.push(cfg(kt, kr, n, mt, mr, r));
        idx += 1;
    }
    out
}

/// Empties the user set of the first stream that relies on a cache, and
/// returns the witness validation must report.
fn mutate(block: &TransmissionBlock) -> Option<(TransmissionBlock, Violation)> {
    if block.x_channel {
        return None;
    }
    let receivers: Vec<usize> = block.receivers().iter().collect();
    for (i, s) in block.streams.iter().enumerate() {
        let nulled = block.nulled[i];
        if let Some(&u) = receivers.iter().find(|&&u| u != s.rx && !nulled.contains(u)) {
            if !s.subfile.user_set.is_empty() {
                let mut b = block.clone();
                b.streams[i].subfile.user_set = UserSet::EMPTY;
                return Some((b, Violation::Interference { stream: i, receiver: u }));
            }
        }
    }
    None
}

fn check_mutations(c: &NetworkConfig, s: &Schedule) -> Result<usize, String> {
    let mut n = 0;
    for b in &s.blocks {
        if let Some((m, want)) = mutate(b) {
            let got = validate_block(&m, &LabelCaches, c.kt(), c.kr());
            ensure(got == Err(want.clone()), || format!("{c}: mutation gave {got:?}, want {want:?}"))?;
            n += 1;
        }
    }
    Ok(n)
}

fn worked_example_fixtures() -> Result<(), String> {
    // IC pair: W_{1,1,{2}} to U1 and W_{2,2,{1}} to U2
    let c = cfg(2, 2, 2, int(1), int(1), int(0));
    let s = build_schedule(&c, Sizes::Analytic, &LabelCaches, &DemandVector::worst_case(&c), Scheme::EdgeOnly, Mode::Serial)
        .map_err(|e| e.to_string())?;
    let pair = s
        .blocks
        .iter()
        .find(|b| b.class_j == 1 && b.streams.len() == 2 && b.streams[0].subfile.to_string() == "W_{1,1,{2}}")
        .ok_or("IC pair block missing")?;
    ensure(pair.streams[1].subfile.to_string() == "W_{2,2,{1}}", || "IC pair partner".into())?;
    ensure(pair.dof == int(2), || "IC pair dof".into())?;
    ensure(validate_block(pair, &LabelCaches, 2, 2).is_ok(), || "IC pair rejected".into())?;
    let mut bad = pair.clone();
    bad.streams[1].subfile.user_set = UserSet::EMPTY;
    ensure(
        validate_block(&bad, &LabelCaches, 2, 2) == Err(Violation::Interference { stream: 1, receiver: 0 }),
        || "IC pair mutation witness".into(),
    )?;

    // ZF triple: W_{1,*,{2}}, W_{2,*,{3}}, W_{3,*,{1}}
    let c = reference(int(3), int(0));
    let s = build_schedule(&c, Sizes::Analytic, &LabelCaches, &DemandVector::worst_case(&c), Scheme::EdgeOnly, Mode::Serial)
        .map_err(|e| e.to_string())?;
    let names = ["W_{1,*,{2}}", "W_{2,*,{3}}", "W_{3,*,{1}}"];
    let triple = s
        .blocks
        .iter()
        .find(|b| b.streams.iter().map(|st| st.subfile.to_string()).eq(names.iter().map(|n| n.to_string())))
        .ok_or("ZF triple block missing")?;
    ensure(triple.dof == int(3), || "ZF triple dof".into())?;
    ensure(triple.nulled[0] == UserSet::from_users([2]), || "ZF triple nulls U1's stream at U3".into())?;
    ensure(validate_block(triple, &LabelCaches, 3, 3).is_ok(), || "ZF triple rejected".into())?;
    let mut bad = triple.clone();
    bad.streams[0].subfile.user_set = UserSet::EMPTY;
    ensure(
        validate_block(&bad, &LabelCaches, 3, 3) == Err(Violation::Interference { stream: 0, receiver: 1 }),
        || "ZF triple mutation witness".into(),
    )
}

fn ac7_reconciliation() -> Outcome {
    const F: u64 = 1 << 20;
    let bound = 10.0 / (F as f64).sqrt();
    let grid = reconciliation_grid();
    ensure(grid.len() == 50, || "grid size".into())?;
    worked_example_fixtures()?;

    let mut schedules = 0;
    let mut mutations = 0;
    let mut worst_gap: f64 = 0.0;
    for c in &grid {
        let demand = DemandVector::worst_case(c);
        let placed = PlacedNetwork::new(c, F, 42).map_err(|e| e.to_string())?;
        let caches = PlacedCaches::new(&placed.en, &placed.users);
        for scheme in Scheme::ALL {
            for mode in [Mode::Serial, Mode::Pipelined] {
                let analytic = match ndt::evaluate_scheme(c, scheme, mode) {
                    Ok(b) => b,
                    Err(_) => {
                        let r = build_schedule(c, Sizes::Analytic, &LabelCaches, &demand, scheme, mode);
                        ensure(matches!(r, Err(ScheduleError::Infeasible(_))), || {
                            format!("{c}: {scheme} infeasible analytically but scheduled")
                        })?;
                        continue;
                    }
                };
                let s = build_schedule(c, Sizes::Analytic, &LabelCaches, &demand, scheme, mode)
                    .map_err(|e| format!("{c} {scheme} {mode}: {e}"))?;
                ensure(
                    s.achieved_delta_f == analytic.delta_f && s.achieved_delta_e == analytic.delta_e,
                    || format!("{c} {scheme} {mode}: analytic schedule differs"),
                )?;
                reconcile(&s, &analytic).map_err(|e| format!("{c} {scheme} {mode}: {e}"))?;
                for b in &s.blocks {
                    validate_block(b, &LabelCaches, c.kt(), c.kr()).map_err(|v| format!("{c}: {v}"))?;
                }
                mutations += check_mutations(c, &s)?;

                let bits = build_schedule(c, Sizes::Empirical(&placed.profile), &caches, &demand, scheme, mode)
                    .map_err(|e| format!("{c} {scheme} {mode} bit-level: {e}"))?;
                for b in &bits.blocks {
                    validate_block(b, &caches, c.kt(), c.kr()).map_err(|v| format!("{c} bit-level: {v}"))?;
                }
                let report = reconcile(&bits, &analytic).map_err(|e| format!("{c} {scheme} {mode} bit-level: {e}"))?;
                let gap = report.max_relative_gap();
                ensure(gap <= bound, || format!("{c} {scheme} {mode}: gap {gap:.3e}"))?;
                worst_gap = worst_gap.max(gap);
                schedules += 1;
            }
        }
    }
    Ok(format!(
        "{schedules} schedules, {mutations} mutations rejected, worst bit-level gap {worst_gap:.2e} (bound {bound:.2e})"
    ))
}

fn ac8_infeasibility() -> Outcome {
    let c = reference(ratio(1, 2), int(0));
    for mode in [Mode::Serial, Mode::Pipelined] {
        let r = ndt::delta(&c, mode);
        ensure(matches!(r, Err(NdtError::NoFeasibleScheme { .. })), || format!("{mode}: {r:?}"))?;
    }
    let out = Command::new(env!("CARGO_BIN_EXE_fran"))
        .args(["ndt", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "1/2", "--mr", "1", "--r", "0"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(2), || format!("exit status {:?}", out.status.code()))?;
    let err = String::from_utf8_lossy(&out.stderr);
    ensure(err.contains("t_T < 1 and r = 0"), || format!("message: {err}"))?;
    Ok("library NoFeasibleScheme, CLI exit 2".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("AC1", "exact partition identities", Duration::from_secs(1), ac1_identities),
        ("AC2", "derived-value table", Duration::from_secs(1), ac2_derived_table),
        ("AC3", "subfile labels of the reference network", Duration::from_secs(1), ac3_subfile_count),
        ("AC4", "NDT properties on the grid", Duration::from_secs(5), ac4_properties),
        ("AC5", "sweep shapes", Duration::from_secs(5), ac5_figure_shapes),
        ("AC6", "Monte Carlo concentration", Duration::from_secs(60), ac6_monte_carlo),
        ("AC7", "scheduler reconciliation", Duration::from_secs(120), ac7_reconciliation),
        ("AC8", "infeasibility contract", Duration::from_secs(5), ac8_infeasibility),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; took longer than {limit:?}")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] {id} {name} ({:.2}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
