use plnma::ivcomparator::iv_nma;
use plnma::simulation::{generate_dataset, ScenarioConfig};
use plnma::{fit, fletcher_phi, ArmRecord, DesignMatrix, DfMode, FitOptions, Network};
use proptest::prelude::*;

fn table() -> impl Strategy<Value = [(u64, u64); 2]> {
    let cell = (5u64..=50).prop_flat_map(|n| (0..=n, Just(n)));
    [cell.clone(), cell]
}

/// Connected network over A..D: a spanning chain of two-arm studies from the
/// reference plus optional extra studies.
fn network() -> impl Strategy<Value = Vec<ArmRecord>> {
    let arm = (5u64..=60).prop_flat_map(|n| (0..=n / 3, Just(n)));
    (2usize..=4)
        .prop_flat_map(move |t| {
            let chain = prop::collection::vec((arm.clone(), arm.clone()), t - 1);
            let extra = prop::collection::vec((0..t, 0..t, arm.clone(), arm.clone()), 0..3);
            (Just(t), chain, extra)
        })
        .prop_map(|(_, chain, extra)| {
            let labels = ["A", "B", "C", "D"];
            let mut recs = Vec::new();
            for (k, (a, b)) in chain.into_iter().enumerate() {
                let s = format!("C{k}");
                recs.push(ArmRecord::new(s.clone(), labels[k], a.0, a.1));
                recs.push(ArmRecord::new(s, labels[k + 1], b.0, b.1));
            }
            for (i, (x, y, a, b)) in extra.into_iter().enumerate() {
                if x != y {
                    let s = format!("E{i}");
                    recs.push(ArmRecord::new(s.clone(), labels[x], a.0, a.1));
                    recs.push(ArmRecord::new(s, labels[y], b.0, b.1));
                }
            }
            recs
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn firth_two_by_two_is_half_corrected_log_odds_ratio(t in table()) {
        let net = Network::validate(
            &[ArmRecord::new("S", "A", t[0].0, t[0].1), ArmRecord::new("S", "B", t[1].0, t[1].1)],
            None,
        ).unwrap();
        let f = fit(&net, &FitOptions::penalized()).unwrap();
        let (r1, n1, r2, n2) = (t[0].0 as f64, t[0].1 as f64, t[1].0 as f64, t[1].1 as f64);
        let want = ((r2 + 0.5) * (n1 - r1 + 0.5) / ((r1 + 0.5) * (n2 - r2 + 0.5))).ln();
        prop_assert!((f.theta_hat[1] - want).abs() < 1e-7);
    }

    #[test]
    fn penalized_fits_are_finite(recs in network(), zero_mask in prop::collection::vec(any::<bool>(), 20)) {
        let recs: Vec<ArmRecord> = recs
            .into_iter()
            .enumerate()
            .map(|(i, r)| if zero_mask[i % 20] { ArmRecord { events: 0, ..r } } else { r })
            .collect();
        let net = Network::validate(&recs, None).unwrap();
        let f = fit(&net, &FitOptions::penalized()).unwrap();
        prop_assert!(f.converged);
        prop_assert!(f.theta_hat.iter().all(|x| x.is_finite() && x.abs() < 50.0));
        prop_assert!((0..f.theta_hat.len()).all(|j| f.se(j).is_finite() && f.se(j) > 0.0));
    }

    #[test]
    fn contrasts_do_not_depend_on_reference(recs in network()) {
        let net = Network::validate(&recs, None).unwrap();
        let last = net.treatments().last().unwrap().clone();
        let a = fit(&net, &FitOptions::penalized()).unwrap().effects();
        let b = fit(&net.with_reference(&last).unwrap(), &FitOptions::penalized()).unwrap().effects();
        for t1 in net.treatments() {
            for t2 in net.treatments() {
                let (x, y) = (a.contrast(t1, t2).unwrap(), b.contrast(t1, t2).unwrap());
                prop_assert!((x.estimate - y.estimate).abs() < 1e-8);
                prop_assert!((x.se - y.se).abs() < 1e-7 * x.se.max(1.0));
            }
        }
    }

    #[test]
    fn phi_is_at_least_one_and_label_free(recs in network()) {
        let net = Network::validate(&recs, None).unwrap();
        let f = fit(&net, &FitOptions::penalized()).unwrap();
        let phi = fletcher_phi(&f, &net, DfMode::Paper).unwrap();
        prop_assert!(phi.phi >= 1.0);

        let renamed: Vec<ArmRecord> = recs
            .iter()
            .rev()
            .map(|r| ArmRecord {
                study: format!("x{}", r.study),
                treatment: format!("t{}", r.treatment.to_lowercase()),
                ..r.clone()
            })
            .collect();
        let net2 = Network::validate(&renamed, None).unwrap();
        let f2 = fit(&net2, &FitOptions::penalized()).unwrap();
        let phi2 = fletcher_phi(&f2, &net2, DfMode::Paper).unwrap();
        prop_assert!((phi.phi_raw - phi2.phi_raw).abs() < 1e-9 * phi.phi_raw.abs().max(1.0));
    }

    #[test]
    fn iv_single_study_is_corrected_log_odds_ratio(t in table()) {
        prop_assume!(!(t[0].0 == 0 && t[1].0 == 0));
        let net = Network::validate(
            &[ArmRecord::new("S", "A", t[0].0, t[0].1), ArmRecord::new("S", "B", t[1].0, t[1].1)],
            None,
        ).unwrap();
        let (iv, _, _) = iv_nma(&net, false).unwrap();
        let zero = t.iter().any(|&(r, n)| r == 0 || r == n);
        let c = if zero { 0.5 } else { 0.0 };
        let (r1, n1, r2, n2) = (t[0].0 as f64, t[0].1 as f64, t[1].0 as f64, t[1].1 as f64);
        let want = ((r2 + c) * (n1 - r1 + c) / ((r1 + c) * (n2 - r2 + c))).ln();
        let var = 1.0 / (r1 + c) + 1.0 / (n1 - r1 + c) + 1.0 / (r2 + c) + 1.0 / (n2 - r2 + c);
        prop_assert!((iv.effects().d()[1] - want).abs() < 1e-12);
        prop_assert!((iv.effects().cov()[(1, 1)] - var).abs() < 1e-12 * var);
    }

    #[test]
    fn generated_networks_are_valid_and_reproducible(row in 1usize..=32, seed in any::<u64>(), rep in 0u64..1000) {
        let cfg = ScenarioConfig::preset(row, seed, 1).unwrap();
        let net = generate_dataset(&cfg, rep).unwrap();
        prop_assert!(net.is_connected());
        prop_assert_eq!(net.n_studies(), cfg.n_studies());
        prop_assert!(DesignMatrix::build(&net).is_ok());
        prop_assert_eq!(&net, &generate_dataset(&cfg, rep).unwrap());
    }
}
