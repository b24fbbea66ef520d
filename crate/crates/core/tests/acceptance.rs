//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;

use nalgebra::DVector;
use plnma::inference::TreatmentEffects;
use plnma::overdispersion::fletcher_from_probabilities;
use plnma::plfit::{modified_score, penalized_log_likelihood, SEPARATION_THRESHOLD};
use plnma::simulation::{run_scenario, zero_study_profile, Method, ScenarioConfig};
use plnma::{
    fit, fletcher_phi, wald_table, ArmRecord, DesignMatrix, DfMode, Error, FitOptions, Inflate,
    Network,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Penalized log-likelihood of a single 2×2 table written out directly:
/// binomial kernels plus half the log of `det [[w1 + w2, w2], [w2, w2]] = w1 w2`.
fn table_objective(alpha: f64, d: f64, t: &[(u64, u64); 2]) -> f64 {
    let mut l = 0.0;
    let mut det = 1.0;
    for (k, &(r, n)) in t.iter().enumerate() {
        let p = expit(if k == 0 { alpha } else { alpha + d });
        let (r, n) = (r as f64, n as f64);
        l += r * p.ln() + (n - r) * (1.0 - p).ln();
        det *= n * p * (1.0 - p);
    }
    l + 0.5 * det.ln()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn two_arm(t: &[(u64, u64); 2]) -> Network {
    Network::validate(
        &[
            ArmRecord::new("S1", "A", t[0].0, t[0].1),
            ArmRecord::new("S1", "B", t[1].0, t[1].1),
        ],
        None,
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_closed, mut worst_numeric) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..200 {
        let mut t = [(0, 0); 2];
        for cell in t.iter_mut() {
            let n = rng.random_range(5..=50u64);
            *cell = (rng.random_range(0..=n), n);
        }
        let f = match fit(&two_arm(&t), &FitOptions::penalized()) {
            Ok(f) if f.converged => f,
            _ => {
                failures += 1;
                continue;
            }
        };
        let d_hat = f.theta_hat[1];
        let (r1, n1) = (t[0].0 as f64, t[0].1 as f64);
        let (r2, n2) = (t[1].0 as f64, t[1].1 as f64);
        let closed = ((r2 + 0.5) * (n1 - r1 + 0.5) / ((r1 + 0.5) * (n2 - r2 + 0.5))).ln();
        let profile = |d: f64| {
            let a = golden_max(|a| table_objective(a, d, &t), -25.0, 25.0, 1e-10);
            table_objective(a, d, &t)
        };
        let numeric = golden_max(profile, -25.0, 25.0, 1e-9);
        worst_closed = worst_closed.max((d_hat - closed).abs());
        worst_numeric = worst_numeric.max((d_hat - numeric).abs());
    }
    outcome(
        failures == 0 && worst_closed <= 1e-6 && worst_numeric <= 1e-5,
        format!(
            "200 tables: max |d - closed form| = {worst_closed:.2e} (tol 1e-6), \
             max |d - numeric max| = {worst_numeric:.2e} (tol 1e-5), fit failures = {failures}"
        ),
    )
}

/// Random connected network with `2..=max_t` treatments and `2..=max_n` studies.
fn random_network(rng: &mut ChaCha8Rng, max_t: usize, max_n: usize) -> Network {
    let labels = ["A", "B", "C", "D", "E", "F"];
    loop {
        let t = rng.random_range(2..=max_t);
        let n = rng.random_range(2..=max_n);
        let mut recs = Vec::new();
        for i in 0..n {
            let mut arms: Vec<usize> = (0..t).collect();
            arms.shuffle(rng);
            let k = rng.random_range(2..=t);
            for &a in &arms[..k] {
                let size = rng.random_range(5..=50u64);
                let events = rng.random_range(0..=size);
                recs.push(ArmRecord::new(format!("S{i}"), labels[a], events, size));
            }
        }
        if let Ok(net) = Network::validate(&recs, None) {
            if net.is_connected() && net.n_treatments() == t {
                return net;
            }
        }
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut points = 0;
    for _ in 0..20 {
        let net = random_network(&mut rng, 4, 6);
        let dm = DesignMatrix::build(&net).unwrap();
        for _ in 0..5 {
            let theta = DVector::from_iterator(
                dm.ncols(),
                (0..dm.ncols()).map(|j| {
                    let base = if j < dm.n_studies() { -1.0 } else { 0.0 };
                    base + rng.random_range(-1.5..1.5)
                }),
            );
            let u = modified_score(&theta, &net, &dm).unwrap();
            let f = |x: &DVector<f64>| penalized_log_likelihood(x, &net, &dm).unwrap();
            let h = 1e-3;
            for j in 0..dm.ncols() {
                let at = |s: f64| {
                    let mut x = theta.clone();
                    x[j] += s * h;
                    f(&x)
                };
                // Fourth-order central difference.
                let fd = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h);
                worst = worst.max((fd - u[j]).abs() / u[j].abs().max(1.0));
            }
            points += 1;
        }
    }
    outcome(
        worst < 1e-5,
        format!("{points} points on 20 networks: max relative error = {worst:.2e} (tol 1e-5)"),
    )
}

/// Every study is all-zero or has exactly one zero arm.
fn zero_heavy_network(rng: &mut ChaCha8Rng) -> Network {
    let labels = ["A", "B", "C", "D"];
    loop {
        let t = rng.random_range(2..=4);
        let n = rng.random_range(1..=6);
        let mut recs = Vec::new();
        for i in 0..n {
            let mut arms: Vec<usize> = (0..t).collect();
            arms.shuffle(rng);
            let k = rng.random_range(2..=t);
            let all_zero = rng.random_bool(0.5);
            for (pos, &a) in arms[..k].iter().enumerate() {
                let size = rng.random_range(5..=200u64);
                let events = if all_zero || pos == 0 {
                    0
                } else {
                    rng.random_range(1..=size.min(10))
                };
                recs.push(ArmRecord::new(format!("S{i}"), labels[a], events, size));
            }
        }
        if let Ok(net) = Network::validate(&recs, None) {
            if net.is_connected() && net.n_treatments() == t {
                return net;
            }
        }
    }
}

fn all_zero_version(net: &Network) -> Network {
    let recs: Vec<ArmRecord> = net
        .records()
        .into_iter()
        .map(|r| ArmRecord { events: 0, ..r })
        .collect();
    Network::validate(&recs, None).unwrap()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut bad_penalized = 0;
    let mut not_separated = 0;
    let mut max_abs = 0.0f64;
    for _ in 0..100 {
        let net = zero_heavy_network(&mut rng);
        match fit(&net, &FitOptions::penalized()) {
            Ok(f) => {
                let se_ok = (0..f.theta_hat.len()).all(|j| f.se(j).is_finite());
                max_abs = max_abs.max(f.theta_hat.amax());
                if !(f.converged && se_ok && f.theta_hat.amax() < SEPARATION_THRESHOLD) {
                    bad_penalized += 1;
                }
            }
            Err(_) => bad_penalized += 1,
        }
        let zero = all_zero_version(&net);
        if !matches!(
            fit(&zero, &FitOptions::unpenalized()),
            Err(Error::SeparationDetected { .. })
        ) {
            not_separated += 1;
        }
    }
    outcome(
        bad_penalized == 0 && not_separated == 0,
        format!(
            "100 networks: penalized failures = {bad_penalized}, max |theta| = {max_abs:.2}; \
             fully-zero unpenalized fits without SeparationDetected = {not_separated}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let cfg = ScenarioConfig::preset(1, 20240401, 300).unwrap();
    let report = run_scenario(&cfg, &[Method::PlWald, Method::IvCommon]).unwrap();
    let bias = |m| {
        report
            .method(m)
            .and_then(|s| s.aggregate)
            .map(|a| a.mean_bias)
            .unwrap_or(f64::NAN)
    };
    let (pl, iv) = (bias(Method::PlWald), bias(Method::IvCommon));
    outcome(
        pl.abs() <= 0.06 && iv.abs() > pl.abs(),
        format!("scenario 1, 300 reps: PL mean bias = {pl:.4} (|.| <= 0.06), IV-common = {iv:.4}"),
    )
}

fn criterion_5() -> Outcome {
    let cfg = ScenarioConfig::preset(13, 20240413, 300).unwrap();
    let report = run_scenario(&cfg, &[Method::PlWald, Method::PlProfile]).unwrap();
    let agg = |m| report.method(m).and_then(|s| s.aggregate).unwrap();
    let (wald, prof) = (agg(Method::PlWald), agg(Method::PlProfile));
    let failures = report
        .method(Method::PlProfile)
        .unwrap()
        .convergence_failures;
    outcome(
        prof.coverage >= 0.90 && prof.mean_ci_length > wald.mean_ci_length,
        format!(
            "scenario 13, 300 reps: profile coverage = {:.3} (>= 0.90), mean length profile = {:.4} \
             vs Wald = {:.4}, profile failures = {failures}",
            prof.coverage, prof.mean_ci_length, wald.mean_ci_length
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = ScenarioConfig::preset(13, 20240413, 300).unwrap();
    let (q, _) = zero_study_profile(&cfg, 300).unwrap();
    outcome(
        [0.0, 1.0, 2.0].contains(&q.median) && q.max <= 8.0,
        format!(
            "scenario 13 generator, 300 reps: min/q1/median/q3/max = {}/{}/{}/{}/{}",
            q.min, q.q1, q.median, q.q3, q.max
        ),
    )
}

fn criterion_7() -> Outcome {
    // Observed proportions as fitted values: zero residuals, φ clamps to 1.
    let recs = [
        ArmRecord::new("S1", "A", 3, 20),
        ArmRecord::new("S1", "B", 6, 20),
        ArmRecord::new("S2", "A", 5, 30),
        ArmRecord::new("S2", "C", 9, 30),
        ArmRecord::new("S3", "B", 4, 25),
        ArmRecord::new("S3", "C", 7, 25),
    ];
    let net = Network::validate(&recs, None).unwrap();
    let observed: Vec<f64> = net
        .arms()
        .map(|(_, a)| a.events as f64 / a.sample_size as f64)
        .collect();
    let perfect = fletcher_from_probabilities(&net, &observed, DfMode::Paper).unwrap();
    let clamp_ok = perfect.phi == 1.0;

    let f = fit(&net, &FitOptions::penalized()).unwrap();
    let inflated = f.inflate(4.0).unwrap();
    let mut inflate_ok = inflated.theta_hat == f.theta_hat;
    for j in 0..f.theta_hat.len() {
        inflate_ok &= inflated.se(j) == 2.0 * f.se(j);
    }
    let effects: TreatmentEffects = f.effects();
    let table = wald_table(&effects, 0.95, 1.0).unwrap();
    let table4 = table.inflate(4.0).unwrap();
    for (a, b) in table.rows.iter().zip(&table4.rows) {
        inflate_ok &= a.estimate == b.estimate && b.se == 2.0 * a.se;
    }

    let cfg = ScenarioConfig::preset(16, 20240416, 300).unwrap();
    let report = run_scenario(&cfg, &[Method::PlPhi]).unwrap();
    let phi = report.method(Method::PlPhi).unwrap().phi.unwrap();
    outcome(
        clamp_ok && inflate_ok && phi.fraction_phi_above_one < 0.10,
        format!(
            "perfect fit phi = {} ; inflate(4) doubles SEs with unchanged estimates = {inflate_ok}; \
             scenario 16, 300 reps: phi > 1 in {} reps ({:.3}, < 0.10)",
            perfect.phi, phi.reps_with_phi_above_one, phi.fraction_phi_above_one
        ),
    )
}

fn relabel(net: &Network, rng: &mut ChaCha8Rng) -> Network {
    let mut treatments: Vec<String> = net.treatments().to_vec();
    treatments.shuffle(rng);
    let map = |t: &str| {
        let k = net.treatments().iter().position(|x| x == t).unwrap();
        format!("X{}", treatments[k])
    };
    let mut recs: Vec<ArmRecord> = net
        .records()
        .into_iter()
        .map(|r| ArmRecord {
            study: format!("Z{}", r.study.chars().rev().collect::<String>()),
            treatment: map(&r.treatment),
            ..r
        })
        .collect();
    recs.shuffle(rng);
    Network::validate(&recs, Some(&map(net.reference_label()))).unwrap()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut ref_err, mut closure_err, mut phi_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut antisymmetric = true;
    for _ in 0..30 {
        let net = random_network(&mut rng, 4, 6);
        let f = fit(&net, &FitOptions::penalized()).unwrap();
        let eff = f.effects();
        let labels = net.treatments().to_vec();

        let other = &labels[labels.len() - 1];
        let g = fit(
            &net.with_reference(other).unwrap(),
            &FitOptions::penalized(),
        )
        .unwrap();
        let eff_g = g.effects();
        for a in &labels {
            for b in &labels {
                let (x, y) = (eff.contrast(a, b).unwrap(), eff_g.contrast(a, b).unwrap());
                ref_err = ref_err.max((x.estimate - y.estimate).abs());
                let back = eff.contrast(b, a).unwrap();
                antisymmetric &= back.estimate == -x.estimate && back.se == x.se;
                for c in &labels {
                    let ac = eff.contrast(a, c).unwrap().estimate;
                    let bc = eff.contrast(b, c).unwrap().estimate;
                    closure_err = closure_err.max((ac - (x.estimate + bc)).abs());
                }
            }
        }

        let relabelled = relabel(&net, &mut rng);
        let phi_a = fletcher_phi(&f, &net, DfMode::Paper).unwrap();
        let h = fit(&relabelled, &FitOptions::penalized()).unwrap();
        let phi_b = fletcher_phi(&h, &relabelled, DfMode::Paper).unwrap();
        phi_err = phi_err.max((phi_a.phi_raw - phi_b.phi_raw).abs() / phi_a.phi_raw.abs().max(1.0));
    }
    outcome(
        ref_err <= 1e-8 && closure_err <= 1e-12 && antisymmetric && phi_err <= 1e-8,
        format!(
            "30 networks: reference change max diff = {ref_err:.1e} (1e-8), closure = {closure_err:.1e} \
             (1e-12), antisymmetry = {antisymmetric}, phi relabelling diff = {phi_err:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("2x2 Firth oracle", criterion_1),
        ("modified score gradient", criterion_2),
        ("separation robustness", criterion_3),
        ("scenario 1 bias", criterion_4),
        ("scenario 13 profile intervals", criterion_5),
        ("zero-study profile", criterion_6),
        ("phi pipeline", criterion_7),
        ("invariances", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
