use std::io::Write;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosefind"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("valid JSON")
}

#[test]
fn standard_table_csv() {
    let o = run(&["table", "--design", "std33", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "dlts,n3,n6\n0,E,E\n1,S,E\n2,DU,DU\n3,DU,DU\n4,,DU\n");
}

#[test]
fn tpi_table_reproduces_standard_cells() {
    let o = run(&[
        "table", "--design", "tpi", "--p-target", "0.17", "--k1", "1", "--k2", "0.1", "--xi",
        "0.7", "--prior", "0.005,0.005", "--metric", "length-normalized", "--group-sizes", "3,6",
        "--format", "csv",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(&rows[..6], ["dlts,n3,n6", "0,E,E", "1,S,E", "2,DU,DU", "3,DU,DU", "4,,DU"]);
}

#[test]
fn table_text_is_aligned() {
    let o = run(&["table", "--design", "sym4"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().contains("4   8"));
    let widths: Vec<usize> = text.lines().skip(2).map(str::len).collect();
    assert!(widths.iter().all(|w| *w == widths[0]));
}

#[test]
fn worst_case_values() {
    let o = run(&["worst-case", "--v", "0.25"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("v,r_3p3,r_2p2,r_4p4,r_hybrid123\n"));
    assert!(text.contains("0.25,0.571615263983,"));

    let o = run(&["worst-case", "--v", "1.0"]);
    assert_eq!(stdout(&o).lines().nth(1), Some("1,0,0,0,0"));
}

#[test]
fn worst_case_grid_svg_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("fig.svg");
    let o = run(&["worst-case", "--verify", "--svg", svg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 20);
    assert!(stderr(&o).contains("PASS"));
    let picture = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(picture.matches("<polyline").count(), 4);
    for label in ["3+3", "2+2", "4+4", "1+2+3/3+3"] {
        assert!(picture.contains(&format!(">{label}</text>")));
    }
    assert_eq!(picture.matches("stroke-dasharray").count(), 6);
}

#[test]
fn worst_case_rejects_bad_grid() {
    assert_eq!(code(&run(&["worst-case", "--grid", "0.9:0.1:0.1"])), 2);
    assert_eq!(code(&run(&["worst-case", "--grid", "a:b:c"])), 2);
}

#[test]
fn simulate_sums_to_one_and_is_stable() {
    let args = [
        "simulate", "--design", "std33", "--curve", "0.05,0.15,0.30,0.50", "--reps", "100000",
        "--seed", "7",
    ];
    let first = run(&args);
    assert_eq!(code(&first), 0);
    let v = json(&first);
    let dist = &v["mtd_distribution"];
    let total: f64 = dist["none"].as_f64().unwrap()
        + dist["by_dose"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum::<f64>();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(stderr(&first).contains("P(MTD)"));
    assert_eq!(first.stdout, run(&args).stdout);
}

#[test]
fn simulate_tpi_respects_budget() {
    let o = run(&[
        "simulate", "--design", "tpi", "--curve", "0.05,0.15,0.30,0.50", "--max-patients", "30",
        "--reps", "5000",
    ]);
    assert_eq!(code(&o), 0);
    assert!(json(&o)["max_total_patients"].as_u64().unwrap() <= 30);
}

#[test]
fn simulate_all_toxic_selects_nothing() {
    let o = run(&["simulate", "--design", "std33", "--curve", "1.0", "--reps", "10", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["mtd_distribution"]["none"].as_f64(), Some(1.0));
}

#[test]
fn config_file_with_flag_override() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write!(
        file,
        r#"{{"design": "hybrid123", "curve": [0.1, 0.2, 0.4], "reps": 50, "seed": 3}}"#
    )
    .unwrap();
    let path = file.path().to_str().unwrap();
    let o = run(&["simulate", "--config", path, "--reps", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["reps"], 20);
    assert_eq!(v["seed"], 3);
}

#[test]
fn config_errors_name_the_field() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write!(file, r#"{{"design": "std33", "curve": [0.1], "metric": "bogus"}}"#).unwrap();
    let o = run(&["simulate", "--config", file.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("metric"));

    let mut file = tempfile::NamedTempFile::new().unwrap();
    write!(file, r#"{{"desing": "std33"}}"#).unwrap();
    let o = run(&["simulate", "--config", file.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let o = run(&["simulate", "--design", "std33"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("curve"));

    let o = run(&["simulate", "--design", "std33", "--curve", "0.1,0.2", "--num-doses", "3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("num_doses"));

    let o = run(&["simulate", "--design", "tpi", "--curve", "0.1", "--xi", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("xi"));
}

#[test]
fn equivalence_default_passes() {
    let o = run(&["equivalence"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    assert!(!stdout(&o).contains('\x1b'));
}

#[test]
fn equivalence_raw_mass_fails_on_two_cells() {
    let o = run(&["equivalence", "--metric", "raw-mass"]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("(3,1)") && err.contains("(6,1)"), "{err}");
}

#[test]
fn equivalence_isotonic_only() {
    let o = run(&["equivalence", "--isotonic-only"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("isotonic D=4"));
    assert!(!text.contains("table"));
}

#[test]
fn isotonic_examples() {
    let o = run(&["isotonic", "--counts", "0/3,1/6,2/3", "--p-target", "0.2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("MTD (largest-below): dose 2"));
    assert!(text.contains("0.666666666667"));

    let o = run(&["isotonic", "--counts", "2/6,0/3"]);
    assert_eq!(stdout(&o).matches("0.222222222222").count(), 2);

    let o = run(&["isotonic", "--counts", "1/6", "--p-target", "0.17", "--rule", "closest"]);
    assert!(stdout(&o).contains("MTD (closest): dose 1"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["isotonic", "--counts", "3/2"])), 2);
    assert_eq!(code(&run(&["isotonic", "--counts", "1-3"])), 2);
    assert_eq!(code(&run(&["table", "--design", "nope"])), 2);
    assert_eq!(code(&run(&["table", "--design", "symmetric"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}
