use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lodempc_cli::OUTPUT_DIR_ENV;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn bundled(name: &str) -> PathBuf {
    configs().join(format!("{name}.toml"))
}

fn lodempc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lodempc"))
        .args(args)
        .env(OUTPUT_DIR_ENV, out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn baseline_text() -> String {
    std::fs::read_to_string(bundled("paper_regulation_baseline")).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_trajectory_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("paper_regulation_baseline");
    let o = lodempc(&["run", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,u1,std_x1,std_x2,std_u1");
    assert_eq!(lines.clone().count(), 101);
    assert!(lines.all(|l| l.split(',').count() == 7));

    let metrics: toml::Table = std::fs::read_to_string(tmp.path().join("metrics.toml"))
        .unwrap()
        .parse()
        .unwrap();
    for key in ["constraint_error", "control_error", "wall_time_s", "final_state_norm"] {
        assert!(metrics[key].as_float().unwrap().is_finite(), "{key}");
    }
    let hp = metrics["hyperparameters"].as_table().unwrap();
    assert!(hp["signal_variance"].as_float().unwrap() > 0.0);
    assert!(hp["lengthscale_sq"].as_float().unwrap() > 0.0);

    // same config, same bytes
    let tmp2 = tempfile::tempdir().unwrap();
    let o = lodempc(&["run", cfg.to_str().unwrap()], tmp2.path());
    assert!(o.status.success());
    let again = std::fs::read_to_string(tmp2.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv, again);
}

#[test]
fn inverted_box_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text().replace("z_min = [-1.0, -1.0, -2.5]", "z_min = [2.0, -1.0, -2.5]");
    let cfg = write_config(tmp.path(), &text);
    let o = lodempc(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("z_min > z_max"), "{err}");
}

#[test]
fn malformed_and_missing_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "name = 3\n");
    assert_eq!(lodempc(&["run", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(1));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(lodempc(&["run", missing.to_str().unwrap()], tmp.path()).status.code(), Some(1));
    assert_eq!(lodempc(&["frobnicate"], tmp.path()).status.code(), Some(1));
}

#[test]
fn infeasible_reference_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text()
        .replace("a = [[0.0, 1.0], [1.0, 1.0]]", "a = [[1.0, 0.0], [0.0, 0.0]]")
        .replace("x_ref = [0.0, 0.0]", "x_ref = [1.0, 0.0]");
    let cfg = write_config(tmp.path(), &text);
    let o = lodempc(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("steady-state"), "{}", stderr(&o));
}

#[test]
fn divergence_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text()
        .replace("t_end = 10.0", "t_end = 40.0")
        .replace("count = 100", "count = 0")
        .replace("\"subgrid_interpolation\"", "\"hold_endpoint\"")
        .replace(
            "lengthscale_sq_bounds = [0.01, 0.25]",
            "lengthscale_sq_bounds = [0.01, 0.25]\nsignal_variance = 1e-6\nlengthscale_sq = 0.01",
        );
    let cfg = write_config(tmp.path(), &text);
    let o = lodempc(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn samples_shape_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("paper_regulation_baseline");
    let cfg = cfg.to_str().unwrap();
    let o = lodempc(&["samples", cfg, "--count", "50", "--seed", "3"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read_to_string(tmp.path().join("samples.csv")).unwrap();
    assert_eq!(a.lines().next().unwrap(), "sample_id,t,channel,value");
    assert_eq!(a.lines().count() - 1, 50 * 101 * 3);

    let o = lodempc(&["samples", cfg, "--count", "50", "--seed", "3"], tmp.path());
    assert!(o.status.success());
    let b = std::fs::read_to_string(tmp.path().join("samples.csv")).unwrap();
    assert_eq!(a, b);

    let o = lodempc(&["samples", cfg, "--count", "0"], tmp.path());
    assert!(o.status.success());
    let empty = std::fs::read_to_string(tmp.path().join("samples.csv")).unwrap();
    assert_eq!(empty.trim_end(), "sample_id,t,channel,value");
}

#[test]
fn algebra_of_the_bundled_system() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("paper_regulation_past");
    let o = lodempc(&["algebra", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("D =\n1; 0; 0\n0; 1; 0\n"), "{text}");
    assert!(text.contains("k[2,2] ="));
}

#[test]
fn algebra_of_an_integrator() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text()
        .replace("a = [[0.0, 1.0], [1.0, 1.0]]", "a = [[0.0]]")
        .replace("b = [[0.0], [1.0]]", "b = [[1.0]]")
        .replace("channel_names = [\"x1\", \"x2\", \"u1\"]", "")
        .replace("x_ref = [0.0, 0.0]", "x_ref = [0.0]")
        .replace("x0 = [1.0, 0.0]", "x0 = [1.0]")
        .replace("z_min = [-1.0, -1.0, -2.5]", "z_min = [-1.0, -2.5]")
        .replace("z_max = [1.0, 1.0, 2.5]", "z_max = [1.0, 2.5]");
    let cfg = write_config(tmp.path(), &text);
    let o = lodempc(&["algebra", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("nullspace columns =\n1\nd\n"), "{text}");
}

#[test]
fn algebra_names_the_offending_factor() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text()
        .replace("a = [[0.0, 1.0], [1.0, 1.0]]", "a = [[0.0, 0.0], [0.0, 0.0]]")
        .replace("b = [[0.0], [1.0]]", "b = [[1.0], [0.0]]");
    let cfg = write_config(tmp.path(), &text);
    let o = lodempc(&["algebra", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("non-constant invariant factor d"), "{err}");
    assert!(String::from_utf8(o.stdout).unwrap().contains("D ="));
}

#[test]
fn output_dir_comes_from_config_without_override() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text().replace("t_end = 10.0", "t_end = 0.5");
    let cfg = write_config(tmp.path(), &text);
    let o = Command::new(env!("CARGO_BIN_EXE_lodempc"))
        .args(["run", cfg.to_str().unwrap()])
        .env_remove(OUTPUT_DIR_ENV)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("out/paper_regulation_baseline/trajectory.csv").exists());
}
