//! Property tests for invariants that must hold for arbitrary inputs.

use mtar_core::cli::table::{format_number, round_sig, Table};
use mtar_core::forecast::{forecast, ForecastInput};
use mtar_core::gibbs::thresholds::{gap_fractions, propose_thresholds, thresholds_from_fractions};
use mtar_core::gibbs::{ChainControl, Draw, PosteriorDraws, Priors};
use mtar_core::model::{quantile, Thresholds};
use mtar_core::model::{ModelSpec, MultivariateSeries};
use mtar_core::rng::{derive_seed, stream};
use mtar_core::selection::equal_tailed;
use mtar_core::sim::{make_m2, simulate_mtar};
use mtar_core::stats::SymMatrix;
use mtar_core::stats::{ExtraParam, NoiseFamily};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wider_levels_give_nested_intervals(sample in prop::collection::vec(-1e3f64..1e3, 2..200), a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let s = sorted(sample);
        let (lo_level, hi_level) = if a < b { (a, b) } else { (b, a) };
        let (l1, u1) = equal_tailed(&s, lo_level);
        let (l2, u2) = equal_tailed(&s, hi_level);
        prop_assert!(l2 <= l1 && u1 <= u2);
        prop_assert!(l1 <= u1);
    }

    #[test]
    fn quantiles_are_monotone(sample in prop::collection::vec(-50f64..50.0, 1..100), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let s = sorted(sample);
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        prop_assert!(quantile(&s, lo) <= quantile(&s, hi));
        prop_assert!(quantile(&s, 0.0) == s[0] && quantile(&s, 1.0) == s[s.len() - 1]);
    }

    #[test]
    fn threshold_proposals_stay_ordered_inside_the_range(
        gaps in prop::collection::vec(0.01f64..1.0, 2..5),
        zeta in 1.0f64..500.0,
        seed in any::<u64>(),
    ) {
        let (z0, z1) = (-2.0, 3.0);
        let total: f64 = gaps.iter().sum();
        let fractions: Vec<f64> = gaps.iter().map(|g| g / total).collect();
        let c = thresholds_from_fractions(&fractions, z0, z1);
        prop_assert_eq!(c.len(), gaps.len() - 1);
        let back = gap_fractions(&c, z0, z1);
        for (x, y) in back.iter().zip(&fractions) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let mut rng = stream(seed, "prop", 0);
        let (proposal, log_ratio) = propose_thresholds(&c, z0, z1, zeta, &mut rng).unwrap();
        prop_assert!(log_ratio.is_finite());
        prop_assert!(proposal.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(proposal.iter().all(|&v| v > z0 && v < z1));
        prop_assert!(Thresholds::new(proposal).is_ok());
    }

    #[test]
    fn regimes_respect_the_interval_rule(mut c in prop::collection::vec(-10f64..10.0, 1..4), z in -20f64..20.0) {
        c.sort_by(f64::total_cmp);
        c.dedup();
        let t = Thresholds::new(c.clone()).unwrap();
        let j = t.regime_of(z);
        prop_assert_eq!(j, c.iter().filter(|&&v| v < z).count());
        if j > 0 {
            prop_assert!(z > c[j - 1]);
        }
        if j < c.len() {
            prop_assert!(z <= c[j]);
        }
    }

    #[test]
    fn rounding_is_idempotent_and_text_parses_back(x in prop::num::f64::NORMAL) {
        let r = round_sig(x);
        prop_assert_eq!(round_sig(r), r);
        let text = format_number(x);
        prop_assert_eq!(text.parse::<f64>().unwrap(), r);
        if x != 0.0 {
            prop_assert!(((r - x) / x).abs() <= 5e-10);
        }
    }

    #[test]
    fn csv_tables_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..30)) {
        let t = Table { columns: vec!["y1".into(), "x1".into(), "z".into()], rows };
        let text = t.to_csv().unwrap();
        let back = Table::parse(&text, "prop").unwrap();
        prop_assert_eq!(back.to_csv().unwrap(), text);
        for (a, b) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
            prop_assert_eq!(*a, round_sig(*b));
        }
    }

    #[test]
    fn seed_derivation_is_a_function_of_its_inputs(master in any::<u64>(), i in any::<u64>()) {
        prop_assert_eq!(derive_seed(master, "x", i), derive_seed(master, "x", i));
        prop_assert_ne!(derive_seed(master, "x", i), derive_seed(master, "y", i));
        let a: u64 = stream(master, "x", i).random();
        let b: u64 = stream(master, "x", i).random();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>()) {
        let m2 = make_m2();
        let a = simulate_mtar(&m2, 150, NoiseFamily::Gaussian, &ExtraParam::none(), 20, &mut stream(seed, "sim", 0)).unwrap();
        let b = simulate_mtar(&m2, 150, NoiseFamily::Gaussian, &ExtraParam::none(), 20, &mut stream(seed, "sim", 0)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn forecasts_ignore_draw_order(seed in any::<u64>()) {
        let spec = ModelSpec::uniform(1, 1, 0, 0, 0, 0, NoiseFamily::Gaussian);
        let draws: Vec<Draw> = (0..30)
            .map(|i| Draw {
                theta: vec![DMatrix::from_row_slice(2, 1, &[0.1 * (i % 7) as f64, 0.5])],
                sigma: vec![SymMatrix::from_diagonal(&[1.0 + 0.01 * i as f64])],
                c: Thresholds::empty(),
                h: 0,
                extra: ExtraParam::none(),
            })
            .collect();
        let mut chain = PosteriorDraws {
            draws,
            priors: Priors::non_informative(&spec, 1, 0),
            spec,
            control: ChainControl::default_for(NoiseFamily::Gaussian, 0),
            k: 1,
            r: 0,
            acceptance_rate: 0.0,
        };
        let history = MultivariateSeries::without_covariates(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), vec![0.0; 2]).unwrap();
        let input = ForecastInput::new(history, vec![0.0; 3], DMatrix::zeros(3, 0), 3);
        let a = forecast(&chain, &input, 0.9, &mut stream(seed, "f", 0)).unwrap();
        chain.draws.shuffle(&mut stream(seed, "perm", 0));
        let b = forecast(&chain, &input, 0.9, &mut stream(seed, "f", 0)).unwrap();
        prop_assert!((&a.point - &b.point).abs().max() < 1e-12);
        prop_assert_eq!(a.lower, b.lower);
        prop_assert_eq!(a.upper, b.upper);
    }
}
