use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plnma_cli::report::FitReportDocument;
use tempfile::TempDir;

const PAIR: &str = "study,treatment,events,n\nS1,A,3,10\nS1,B,6,10\n";

const TRIANGLE: &str = "study,treatment,events,n
S1,A,3,40
S1,B,7,41
S2,B,2,30
S2,C,5,33
S3,A,1,25
S3,C,4,25
";

/// Two all-zero studies; treatment D is only compared in one of them.
const DISCONNECTS_WITHOUT_ZERO_STUDIES: &str = "study,treatment,events,n
S1,A,2,50
S1,B,5,50
S2,A,1,60
S2,C,4,60
S3,B,3,45
S3,C,2,45
S4,A,0,40
S4,D,0,40
S5,A,0,35
S5,B,0,35
";

/// Zero-heavy network where every treatment stays connected without the all-zero studies.
const ZERO_HEAVY: &str = "study,treatment,events,n
S1,A,1,80
S1,B,3,80
S2,A,0,90
S2,C,2,90
S3,B,1,70
S3,C,2,70
S4,A,0,100
S4,B,0,100
S5,A,0,120
S5,C,0,120
S6,B,0,60
S6,C,0,60
";

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plnma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json_report(args: &[&str]) -> FitReportDocument {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let o = run(&all);
    assert!(o.status.success(), "{}", stderr(&o));
    FitReportDocument::from_json(&stdout(&o)).unwrap()
}

#[test]
fn pair_toy_fit() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "pair.csv", PAIR);
    let doc = json_report(&["fit", p(&data), "--method", "pl"]);
    let row = &doc.estimates[0];
    let want = (6.5f64 * 7.5 / (3.5 * 4.5)).ln();
    assert_eq!(row.contrast, "B:A");
    assert!((row.estimate - want).abs() < 1e-7);
    assert!((row.estimate - 1.1301).abs() < 5e-4);
    assert!(row.se > 0.0 && row.ci_low < row.estimate && row.estimate < row.ci_high);

    let o = run(&["fit", p(&data)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("B:A"));
    assert!(o.stderr.is_empty());
}

#[test]
fn json_round_trips_and_matches_csv() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tri.csv", TRIANGLE);
    let o = run(&["fit", p(&data), "--format", "json"]);
    let text = stdout(&o);
    let doc = FitReportDocument::from_json(&text).unwrap();
    assert_eq!(doc.to_json() + "\n", text);
    assert_eq!(doc.schema_version, 1);
    assert_eq!(doc.input.studies, 3);
    assert_eq!(doc.league.len(), 3);

    let csv_text = stdout(&run(&["fit", p(&data), "--format", "csv"]));
    let mut lines = csv_text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,contrast,estimate,se,ci_low,ci_high,ci_kind,phi"
    );
    for (line, row) in lines.zip(&doc.estimates) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], row.method);
        assert_eq!(f[1], row.contrast);
        assert_eq!(f[2].parse::<f64>().unwrap(), row.estimate);
        assert_eq!(f[3].parse::<f64>().unwrap(), row.se);
        assert_eq!(f[4].parse::<f64>().unwrap(), row.ci_low);
        assert_eq!(f[5].parse::<f64>().unwrap(), row.ci_high);
        assert_eq!(f[6], "wald");
        assert_eq!(f[7].parse::<f64>().unwrap(), row.phi);
    }
}

#[test]
fn iv_exclusion_can_disconnect() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "sparse.csv", DISCONNECTS_WITHOUT_ZERO_STUDIES);
    let o = run(&["fit", p(&data), "--method", "iv-common"]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).starts_with("error[disconnection]"),
        "{}",
        stderr(&o)
    );
    assert_eq!(o.status.code(), Some(5));
    assert!(o.stdout.is_empty());

    let doc = json_report(&["fit", p(&data), "--method", "pl"]);
    assert_eq!(doc.all_zero.all_zero_studies, vec!["S4", "S5"]);
    assert!(doc.estimates.iter().any(|r| r.contrast == "D:A"));
}

#[test]
fn excluding_all_zero_studies_widens_intervals() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "zero.csv", ZERO_HEAVY);
    for ci in ["wald", "profile"] {
        let with = json_report(&["fit", p(&data), "--ci", ci, "--include-all-zero", "yes"]);
        let without = json_report(&["fit", p(&data), "--ci", ci, "--include-all-zero", "no"]);
        assert_eq!(without.all_zero.excluded_studies, vec!["S4", "S5", "S6"]);
        for (a, b) in with.estimates.iter().zip(&without.estimates) {
            assert_eq!(a.contrast, b.contrast);
            assert_eq!(a.estimate.signum(), b.estimate.signum());
            assert!(
                b.ci_high - b.ci_low > a.ci_high - a.ci_low,
                "{ci}: {a:?} vs {b:?}"
            );
        }
    }
}

#[test]
fn contrast_command() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tri.csv", TRIANGLE);
    let same = json_report(&["contrast", p(&data), "--pair", "A,A"]);
    assert_eq!(same.estimates[0].estimate, 0.0);

    for ci in ["wald", "profile"] {
        let ab = json_report(&["contrast", p(&data), "--pair", "A,B", "--ci", ci]);
        let ba = json_report(&["contrast", p(&data), "--pair", "B,A", "--ci", ci]);
        let (ab, ba) = (&ab.estimates[0], &ba.estimates[0]);
        assert_eq!(ab.estimate, -ba.estimate);
        assert_eq!(ab.se, ba.se);
        assert!((ab.ci_low + ba.ci_high).abs() < 1e-3);

        let bc = json_report(&["contrast", p(&data), "--pair", "B,C", "--ci", ci]);
        let league = json_report(&["fit", p(&data), "--ci", ci]);
        let cell = league.league.iter().find(|r| r.contrast == "C:B").unwrap();
        let bc = &bc.estimates[0];
        assert!((bc.estimate - cell.estimate).abs() < 1e-12);
        assert!((bc.ci_low - cell.ci_low).abs() < 1e-6);
        assert!((bc.ci_high - cell.ci_high).abs() < 1e-6);
    }

    let o = run(&["contrast", p(&data), "--pair", "A,Z"]);
    assert!(stderr(&o).starts_with("error[validation]"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn input_errors_are_categorised() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "study,treatment,events,n\nS1,A,x,10\n");
    let o = run(&["fit", p(&bad)]);
    assert!(stderr(&o).starts_with("error[parse]"));
    assert_eq!(o.status.code(), Some(3));

    let over = write(
        &dir,
        "over.csv",
        "study,treatment,events,n\nS1,A,11,10\nS1,B,1,10\n",
    );
    let o = run(&["fit", p(&over)]);
    assert!(stderr(&o).starts_with("error[validation]"));

    let split = write(
        &dir,
        "split.csv",
        "study,treatment,events,n\nS1,A,1,10\nS1,B,2,10\nS2,C,1,10\nS2,D,2,10\n",
    );
    let o = run(&["fit", p(&split)]);
    assert!(stderr(&o).starts_with("error[disconnection]"));

    let zero = write(
        &dir,
        "zero.csv",
        "study,treatment,events,n\nS1,A,0,10\nS1,B,0,10\n",
    );
    let o = run(&["fit", p(&zero), "--method", "mle"]);
    assert!(stderr(&o).starts_with("error[convergence]"));
    assert!(run(&["fit", p(&zero)]).status.success());

    let data = write(&dir, "pair.csv", PAIR);
    let o = run(&["fit", p(&data), "--method", "iv-common", "--ci", "profile"]);
    assert!(stderr(&o).starts_with("error[config]"));
}

#[test]
fn simulate_writes_reproducible_reports() {
    let dir = TempDir::new().unwrap();
    let scenario = write(
        &dir,
        "s1.toml",
        "name = \"scenario-1\"
treatments = 5
arm_size = [30, 60]
cgr = [0.03, 0.05]
tau = 0.0
seed = 7
reps = 300

[design]
kind = \"two-arm\"
studies_per_comparison = 2
",
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = run(&[
            "simulate",
            "--scenario",
            p(&scenario),
            "--methods",
            "pl-wald,iv-common",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["estimates.csv", "summary.json"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    let methods = summary["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    for m in methods {
        for key in [
            "mean_bias",
            "coverage",
            "mse",
            "mean_ci_length",
            "mc_se_bias",
        ] {
            assert!(
                m["aggregate"][key].is_f64(),
                "{key} missing for {}",
                m["method"]
            );
        }
        assert_eq!(m["per_estimand"].as_array().unwrap().len(), 4);
    }
    assert!(summary["zero_study_profile"]["median"].is_f64());

    let csv_text = std::fs::read_to_string(out_a.join("estimates.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 1 + 2 * 5);

    let o = run(&[
        "simulate",
        "--scenario",
        p(&scenario),
        "--reps",
        "0",
        "--out",
        p(&out_a),
    ]);
    assert!(stderr(&o).starts_with("error[config]"));
    assert_eq!(o.status.code(), Some(7));
}

#[test]
fn simulate_presets_and_seed_override() {
    let dir = TempDir::new().unwrap();
    let out = |name: &str| dir.path().join(name);
    let go = |seed: &str, name: &str| {
        let o = run(&[
            "simulate",
            "--preset",
            "21",
            "--reps",
            "5",
            "--seed",
            seed,
            "--methods",
            "pl-wald",
            "--out",
            p(&out(name)),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out(name).join("summary.json")).unwrap()
    };
    assert_ne!(go("1", "x"), go("2", "y"));
    let o = run(&[
        "simulate",
        "--preset",
        "21",
        "--methods",
        "bayes",
        "--out",
        p(&out("z")),
    ]);
    assert!(stderr(&o).starts_with("error[config]"));
}
