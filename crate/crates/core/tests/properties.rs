use num::traits::{One, Zero};
use proptest::prelude::*;

use fran_ndt::invariants::{check_branch_agreement, check_partition};
use fran_ndt::model::{en_layout, enumerate_subfiles, DemandVector, EnTag, NetworkConfig};
use fran_ndt::ndt::{self, Mode, Scheme};
use fran_ndt::placement::{classify_bits, place_en_caches, place_user_caches, verify_capacity};
use fran_ndt::rational::{from_usize, ratio};
use fran_ndt::scheduler::{build_schedule, check_coverage, needed_subfiles, LabelCaches, Sizes};
use fran_ndt::Rational;

fn frac(max: usize, den: i64) -> impl Strategy<Value = Rational> {
    (0..=max as i64 * den).prop_map(move |k| ratio(k, den))
}

prop_compose! {
    fn network()(kt in 1usize..=5, kr in 1usize..=5, extra in 0usize..=2)
        (mt in frac(kr + extra, 4), mr in frac(kr + extra, 3), r in frac(4, 2),
         kt in Just(kt), kr in Just(kr), n in Just(kr + extra)) -> NetworkConfig {
        NetworkConfig::new(kt, kr, n, mt, mr, r).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn class_sizes_partition_the_file(c in network()) {
        prop_assert!(check_partition(&c).passed);
        let layout = en_layout(&c);
        let parts = layout.tags().iter().fold(Rational::zero(), |a, t| a + layout.size_of(*t));
        prop_assert!(parts.is_one());
    }

    #[test]
    fn selected_ndt_is_best_candidate(c in network()) {
        for mode in [Mode::Serial, Mode::Pipelined] {
            match ndt::delta(&c, mode) {
                Ok(b) => {
                    for cand in &b.candidates {
                        if let Some(t) = cand.total.finite() {
                            prop_assert!(b.delta_total <= *t);
                        }
                    }
                    prop_assert_eq!(mode.combine(&b.delta_f, &b.delta_e), b.delta_total.clone());
                }
                Err(_) => prop_assert!(c.t_t() < Rational::one() && c.r().is_zero()),
            }
        }
        prop_assert!(check_branch_agreement(&c).passed);
    }

    #[test]
    fn fronthaul_never_hurts(c in network()) {
        let faster = c.with_r(c.r() + Rational::one()).unwrap();
        for mode in [Mode::Serial, Mode::Pipelined] {
            if let Ok(slow) = ndt::delta(&c, mode) {
                prop_assert!(ndt::delta(&faster, mode).unwrap().delta_total <= slow.delta_total);
            }
        }
    }

    #[test]
    fn analytic_schedule_matches_formulas(c in network()) {
        let demand = DemandVector::worst_case(&c);
        let needed = needed_subfiles(&c, &demand);
        let tags = enumerate_subfiles(&c).iter().filter(|s| s.file == 0).count();
        prop_assert!(needed.len() <= c.kr() * tags);
        for scheme in Scheme::ALL {
            let Ok(b) = ndt::evaluate_scheme(&c, scheme, Mode::Serial) else { continue };
            let s = build_schedule(&c, Sizes::Analytic, &LabelCaches, &demand, scheme, Mode::Serial).unwrap();
            prop_assert_eq!(&s.achieved_delta_e, &b.delta_e);
            prop_assert_eq!(&s.achieved_delta_f, &b.delta_f);
            check_coverage(&c, &s, &needed, Sizes::Analytic).unwrap();

            // block order does not matter
            let mut rev = s.clone();
            rev.blocks.reverse();
            let total = rev.blocks.iter().fold(Rational::zero(), |a, b| a + b.duration());
            prop_assert_eq!(total, s.achieved_delta_e.clone());
        }
    }

    #[test]
    fn placement_respects_capacity(c in network(), f in 16u64..4096, seed in any::<u64>()) {
        let en = place_en_caches(&c, f).unwrap();
        let users = place_user_caches(&c, f, seed).unwrap();
        prop_assert!(verify_capacity(&en, &users, &c).is_ok());
        let prof = classify_bits(&en, &users).unwrap();
        for file in 0..c.n() {
            prop_assert_eq!(prof.subset_counts(file).iter().sum::<u64>(), f);
        }
    }

    #[test]
    fn bit_level_schedule_covers_every_bit(c in network(), seed in any::<u64>()) {
        let f = 2048;
        let en = place_en_caches(&c, f).unwrap();
        let users = place_user_caches(&c, f, seed).unwrap();
        let prof = classify_bits(&en, &users).unwrap();
        let caches = fran_ndt::scheduler::PlacedCaches::new(&en, &users);
        let demand = DemandVector::worst_case(&c);
        let scheme = match ndt::delta(&c, Mode::Serial) {
            Ok(b) => b.scheme,
            Err(_) => return Ok(()),
        };
        let s = build_schedule(&c, Sizes::Empirical(&prof), &caches, &demand, scheme, Mode::Serial).unwrap();
        // every needed bit of each requested file is sent exactly once
        let sent: Rational = s.blocks.iter().flat_map(|b| &b.streams).fold(Rational::zero(), |a, st| a + &st.size);
        let want: u64 = (0..c.kr()).map(|u| f - users.cache(u, demand.file_for(u)).count_ones()).sum();
        prop_assert_eq!(sent * from_usize(f as usize), from_usize(want as usize));
        prop_assert!(s.blocks.iter().all(|b| b.streams.iter().all(|st| st.subfile.en_tag != EnTag::CloudOnly || scheme != Scheme::EdgeOnly)));
    }
}
