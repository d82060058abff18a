//! End-to-end checks of the command-line interface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_afnet");

const CONFIG: &str = r#"
schema_version = 1

[topology]
h13 = 1.0
h14 = 1.0
h23 = 1.0
h24 = 1.0
h35 = 1.0
h45 = 1.0
h36 = 1.0
h46 = 1.0

[power]
p1 = 1.0
p2 = 1.0
p3 = 1.0
p4 = 1.0

[grid.p1]
min = 0.5
max = 2.0
steps = 4

[grid.p2]
min = 0.5
max = 2.0
steps = 4
"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn rates_prints_report_and_converts_to_bits() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let config = config.to_str().unwrap();

    let nats = run(&["rates", "--config", config]);
    assert!(nats.status.success());
    let text = stdout(&nats);
    // joint = ln(3)/2 = 0.549306144
    assert!(text.contains("joint         0.549306144 nats"), "{text}");
    assert!(text.contains("regime        Indeterminate"), "{text}");

    let bits = run(&["rates", "--config", config, "--bits"]);
    let text = stdout(&bits);
    // ln(3)/2 / ln(2) = 0.792481250
    assert!(text.contains("joint         0.792481250 bits"), "{text}");

    // explicit point override and sink selection
    let point = run(&[
        "rates", "--config", config, "--p1", "100", "--p2", "0.01", "--sink", "5",
    ]);
    assert!(stdout(&point).contains("regime        HighLow"));

    let bad_sink = run(&["rates", "--config", config, "--sink", "7"]);
    assert!(!bad_sink.status.success());
}

#[test]
fn sweep_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let config = config.to_str().unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");

    let first = run(&["sweep", "--config", config, "--out", out_a.to_str().unwrap()]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = run(&["sweep", "--config", config, "--out", out_b.to_str().unwrap()]);
    assert!(second.status.success());

    let bytes_a = fs::read(&out_a).unwrap();
    let bytes_b = fs::read(&out_b).unwrap();
    assert_eq!(bytes_a, bytes_b);

    let text = String::from_utf8(bytes_a).unwrap();
    assert!(text.starts_with(afnet::sweep::CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 16);

    // plot emission piggybacks on the same records
    let plot = dir.path().join("joint.dat");
    let with_plot = run(&[
        "sweep",
        "--config",
        config,
        "--out",
        out_a.to_str().unwrap(),
        "--plot-column",
        "joint",
        "--plot-out",
        plot.to_str().unwrap(),
    ]);
    assert!(with_plot.status.success());
    assert!(fs::read_to_string(&plot).unwrap().starts_with("# p1 p2 joint"));

    // output paths can come from the config instead of flags
    let from_config = dir.path().join("from_config.csv");
    let body = format!(
        "{CONFIG}\n[output]\ncsv = \"{}\"\n",
        from_config.display()
    );
    let config_with_output = dir.path().join("with_output.toml");
    fs::write(&config_with_output, body).unwrap();
    let defaulted = run(&["sweep", "--config", config_with_output.to_str().unwrap()]);
    assert!(defaulted.status.success(), "{}", String::from_utf8_lossy(&defaulted.stderr));
    assert_eq!(fs::read(&from_config).unwrap(), fs::read(&out_a).unwrap());
}

#[test]
fn alloc_eta_and_budget_modes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let config = config.to_str().unwrap();

    // unit topology at p=(1,1): h_eq^2 = 2, sigma = 2. With eta = 0.25 and
    // forced p2 = 2: p1* = 4 - 2 - 1 = 1.
    let eta_mode = run(&["alloc", "--config", config, "--eta", "0.25", "--p2", "2"]);
    assert!(eta_mode.status.success());
    let text = stdout(&eta_mode);
    assert!(text.contains("p1  p* = 1.000000000"), "{text}");

    let budget_mode = run(&["alloc", "--config", config, "--budget", "6"]);
    assert!(budget_mode.status.success());
    let text = stdout(&budget_mode);
    assert!(text.contains("budget residual"), "{text}");
    assert!(text.contains("piggyback ordered"), "{text}");

    let fixed_point = run(&["alloc", "--config", config, "--budget", "6", "--fixed-point"]);
    assert!(fixed_point.status.success());
    assert!(stdout(&fixed_point).contains("converged = true"));

    let neither = run(&["alloc", "--config", config]);
    assert!(!neither.status.success());
}

#[test]
fn immse_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let config = config.to_str().unwrap();

    let pass = run(&["immse-check", "--config", config, "--scheme", "joint", "--step", "1e-4"]);
    assert!(pass.status.success(), "{}", String::from_utf8_lossy(&pass.stderr));
    assert!(stdout(&pass).contains("status             pass"));

    // the cancellation chain has more curvature here; a finer step keeps
    // the truncation probe happy
    let sic = run(&["immse-check", "--config", config, "--scheme", "sic", "--step", "1e-5"]);
    assert!(sic.status.success(), "{}", String::from_utf8_lossy(&sic.stderr));

    // absurd tolerance: the step-size probe rejects the request
    let too_tight = run(&[
        "immse-check", "--config", config, "--scheme", "joint", "--step", "1e-4",
        "--tolerance", "1e-30",
    ]);
    assert!(!too_tight.status.success());
}

#[test]
fn immse_check_seed_env_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{CONFIG}\n[inputs]\ndist1 = \"bpsk\"\ndist2 = \"bpsk\"\n");
    let config = write_config(dir.path(), &body);
    let config = config.to_str().unwrap();

    let run_seeded = |seed: &str| {
        let output = Command::new(BIN)
            .args(["immse-check", "--config", config, "--scheme", "joint", "--step", "1e-4"])
            .env("AFNET_SEED", seed)
            .output()
            .unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        stdout(&output)
    };
    let a = run_seeded("7");
    let b = run_seeded("7");
    assert_eq!(a, b);
    assert!(a.contains("monte-carlo"));
    let c = run_seeded("8");
    assert_ne!(a, c);
}

#[test]
fn regime_prints_label() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let config = config.to_str().unwrap();

    let output = run(&["regime", "--config", config, "--p1", "100", "--p2", "0.01"]);
    assert!(output.status.success());
    assert_eq!(stdout(&output).trim(), "HighLow");

    let output = run(&["regime", "--config", config, "--p1", "1", "--p2", "1"]);
    assert_eq!(stdout(&output).trim(), "Indeterminate");
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, CONFIG.replace("[power]", "[power]\nbogus = 1")).unwrap();
    let output = run(&["rates", "--config", path.to_str().unwrap()]);
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("bogus"), "{err}");
}
