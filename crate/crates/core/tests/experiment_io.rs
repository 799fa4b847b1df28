use std::fs;
use std::path::Path;

use bsgd::array_io::load_array;
use bsgd::experiment::{execute_phantom, execute_rates, execute_run, execute_sweep, RunConfig, HISTORY_HEADER};
use bsgd::solver::RunStatus;

const SCHLIEREN: &str = r#"
[model]
kind = "schlieren"
batch_size = 4
size = 12
n_angles = 12
phantom_seed = 2

[solver]
mode = "practice"
r_x = 1.5
r_y = 2.0
epochs = 20
initial = 0.05
seed = 4

[schedule]
mu0 = 0.5

[noise]
kind = "gaussian"
epsilon = 0.01
seed = 7
"#;

const BENCHMARK: &str = r#"
[model]
kind = "benchmark"
batch_size = 2
dim = 10
diag_min = 1.0
diag_max = 2.0

[solver]
r_x = 2.0
r_y = 2.0
epochs = 50

[schedule]
kind = "constant"
mu0 = 0.25
"#;

fn config(text: &str) -> RunConfig {
    RunConfig::from_toml_str(text).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn run_writes_parseable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let report = execute_run(&config(SCHLIEREN), dir.path()).unwrap();
    assert_eq!(report.status, RunStatus::Completed);
    assert_eq!(report.iterations, 60);
    let (header, rows) = csv_rows(&dir.path().join("history.csv"));
    assert_eq!(header, HISTORY_HEADER);
    assert_eq!(rows.len(), 21);
    for row in &rows {
        assert_eq!(row.len(), 8);
        for (k, field) in row.iter().enumerate() {
            if !field.is_empty() {
                assert!(field.parse::<f64>().is_ok(), "column {k}: {field}");
            }
        }
    }
    assert!(rows[0][2].is_empty() && rows[0][3].is_empty());
    assert!(rows[1][3].parse::<usize>().unwrap() < 3);
    assert_eq!(load_array(dir.path().join("best.bsgd")).unwrap().shape(), &[12, 12]);
    assert_eq!(load_array(dir.path().join("final.bsgd")).unwrap().shape(), &[12, 12]);
}

#[test]
fn manifest_records_every_stochastic_choice() {
    let dir = tempfile::tempdir().unwrap();
    execute_run(&config(SCHLIEREN), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let table: toml::Table = text.parse().unwrap();
    let diag = table["diagnostics"].as_table().unwrap();
    for key in [
        "block_sampling_seed",
        "noise_seed",
        "estimate_seed",
        "estimate_radius",
        "estimate_center",
        "gamma_hat",
        "l_max_hat",
        "noise_level",
        "wall_time_s",
        "iterations",
    ] {
        assert!(diag.contains_key(key), "{key}");
    }
    assert_eq!(table["model"]["phantom_seed"].as_integer(), Some(2));
    assert_eq!(table["solver"]["seed"].as_integer(), Some(4));
}

#[test]
fn rerun_from_manifest_is_bitwise_identical() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    execute_run(&config(SCHLIEREN), first.path()).unwrap();
    let manifest = fs::read_to_string(first.path().join("manifest.txt")).unwrap();
    execute_run(&RunConfig::from_toml_str(&manifest).unwrap(), second.path()).unwrap();
    for name in ["history.csv", "best.bsgd", "final.bsgd"] {
        assert_eq!(
            fs::read(first.path().join(name)).unwrap(),
            fs::read(second.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn analytic_bounds_and_a_priori_index_reach_the_manifest() {
    let text = format!(
        "{BENCHMARK}\n[noise]\nkind = \"gaussian\"\nepsilon = 0.01\n\n[stopping]\nrule = \"a_priori\"\ndelta = 0.125\ngamma_budget = 1.0\n"
    );
    let dir = tempfile::tempdir().unwrap();
    let report = execute_run(&config(&text), dir.path()).unwrap();
    assert_eq!(report.iterations, 250);
    let table: toml::Table = fs::read_to_string(dir.path().join("manifest.txt")).unwrap().parse().unwrap();
    let diag = table["diagnostics"].as_table().unwrap();
    assert_eq!(diag["bounds_source"].as_str(), Some("analytic"));
    assert_eq!(diag["k_delta"].as_integer(), Some(256));
    assert_eq!(diag["gamma_hat"].as_float(), Some(0.0));
}

#[test]
fn sweep_has_one_summary_row_per_value() {
    let text = format!("{SCHLIEREN}\n[sweep]\naxis = \"batch_size\"\nvalues = [2, 3, 4, 6]\n");
    let dir = tempfile::tempdir().unwrap();
    let rows = execute_sweep(&config(&text), dir.path()).unwrap();
    assert_eq!(rows.len(), 4);
    let (header, csv) = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(header[0], "axis");
    assert_eq!(csv.len(), 4);
    assert!(csv.iter().all(|r| r.len() == header.len() && r[0] == "batch_size"));
    for v in ["2", "3", "4", "6"] {
        assert!(dir.path().join(format!("batch_size_{v}")).join("history.csv").exists());
    }
}

#[test]
fn multi_seed_sweep_cells_get_their_own_directories() {
    let text = format!(
        "{}\n[sweep]\naxis = \"space_exponent\"\nvalues = [2.0, 1.5]\n",
        SCHLIEREN.replace("seed = 4", "seed = 4\nseeds = 3")
    );
    let dir = tempfile::tempdir().unwrap();
    let rows = execute_sweep(&config(&text), dir.path()).unwrap();
    assert!(rows.iter().all(|r| r.n_seeds == 3 && r.min_best <= r.median_best && r.median_best <= r.max_best));
    let seed2 = dir.path().join("space_exponent_1.5/seed_2/manifest.txt");
    let table: toml::Table = fs::read_to_string(seed2).unwrap().parse().unwrap();
    assert_eq!(table["solver"]["seed"].as_integer(), Some(6));
    assert_eq!(table["noise"]["seed"].as_integer(), Some(9));
    assert_eq!(table["solver"]["r_x"].as_float(), Some(1.5));
}

#[test]
fn noise_sweep_needs_a_noise_section() {
    let text = format!("{BENCHMARK}\n[sweep]\naxis = \"noise_level\"\nvalues = [0.01]\n");
    let dir = tempfile::tempdir().unwrap();
    assert!(execute_sweep(&config(&text), dir.path()).is_err());
}

#[test]
fn rates_require_noise_levels() {
    let text = format!("{BENCHMARK}\n[rates]\nstudy = \"noisy\"\n");
    let dir = tempfile::tempdir().unwrap();
    assert!(execute_rates(&config(&text), dir.path()).is_err());
}

#[test]
fn exact_rate_study_writes_curve_and_summary() {
    let text = format!("{}\n[rates]\nstudy = \"exact\"\n", BENCHMARK.replace("epochs = 50", "epochs = 40\nseeds = 10"));
    let dir = tempfile::tempdir().unwrap();
    let report = execute_rates(&config(&text), dir.path()).unwrap();
    assert!(report.passed, "{}", report.summary);
    assert!(report.summary.contains("\"theoretical_factor\""));
    let (header, rows) = csv_rows(&dir.path().join("mean_bregman.csv"));
    assert_eq!(header, ["iter", "mean_bregman"]);
    assert_eq!(rows.len(), 41);
}

#[test]
fn phantom_sidecar_lists_the_acquisition() {
    let dir = tempfile::tempdir().unwrap();
    let image = execute_phantom(&config(SCHLIEREN), dir.path()).unwrap();
    assert_eq!(load_array(dir.path().join("phantom.bsgd")).unwrap(), image);
    let side: toml::Table = fs::read_to_string(dir.path().join("phantom.txt")).unwrap().parse().unwrap();
    assert_eq!(side["angles"].as_array().unwrap().len(), 12);
    assert_eq!(side["n_detectors"].as_integer(), Some(18));
    assert_eq!(side["batches"].as_array().unwrap().len(), 3);
    let frac = side["nonzero_fraction"].as_float().unwrap();
    assert!(frac > 0.0 && frac < 0.2);
}
