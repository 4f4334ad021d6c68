use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use converter_forge_cli::report::{self, CascadeJson, DesignReport, LossReport, SimulationReport};
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_converter-forge");

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN)
        .args(args)
        .env(key, value)
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

fn write_spec(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn paper() -> String {
    example("paper_three_stage.json")
        .to_str()
        .unwrap()
        .to_string()
}

/// The paper example with stage 3 alone and a short step count.
fn stage3_spec(dir: &TempDir, sim: &str) -> String {
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(paper()).unwrap()).unwrap();
    let stage3 = doc["stages"][2].clone();
    doc["stages"] = Value::Array(vec![stage3]);
    doc["sim"] = serde_json::from_str(sim).unwrap();
    write_spec(dir, "stage3.json", &doc.to_string())
}

fn signal_mean(report: &SimulationReport, name: &str) -> f64 {
    report
        .signals
        .iter()
        .find(|s| s.name == name)
        .unwrap()
        .stats
        .mean
}

#[test]
fn design_reports_duty_and_round_trips() {
    let o = run(&["design", &paper()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("\"duty\": 0.1791044776"), "{text}");
    let parsed: DesignReport = report::read(&text).unwrap();
    assert_eq!(parsed.stages.len(), 3);
    assert_eq!(report::to_json(&parsed), text);
    assert_eq!(stdout(&run(&["design", &paper()])), text);
}

#[test]
fn design_pretty_and_out_file() {
    let o = run(&["design", "--pretty", &paper()]);
    let table = stdout(&o);
    assert!(table.contains("µH") && table.contains("µF"), "{table}");
    assert!(table.contains("D = 0.7059"));

    let dir = TempDir::new().unwrap();
    let out = dir.path().join("design.json");
    let o = run(&["design", &paper(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    assert!(fs::read_to_string(out)
        .unwrap()
        .contains("\"duty\": 0.7058823529"));
}

#[test]
fn parse_errors_exit_1_with_location() {
    let dir = TempDir::new().unwrap();
    let bad = write_spec(
        &dir,
        "bad.json",
        "{\n  \"stages\": [\n    {\"topology\": \"sepic\",,}\n  ]\n}",
    );
    let o = run(&["design", &bad]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("column"), "{err}");

    let unknown = write_spec(&dir, "unknown.json", r#"{"stages": [], "stage_count": 3}"#);
    let o = run(&["design", &unknown]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("stage_count"));

    assert_eq!(code(&run(&["design", "/nonexistent/spec.json"])), 1);
}

#[test]
fn validation_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(paper())
        .unwrap()
        .replace("\"vo_volts\": 5", "\"vo_volts\": -5");
    let spec = write_spec(&dir, "polarity.json", &text);
    let o = run(&["design", &spec]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("stage 2"), "{}", stderr(&o));

    let o = run(&["simulate", &paper(), "--stage", "5"]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("stage 5 out of range"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn simulate_stage3_and_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("s3.csv");
    let o = run(&[
        "simulate",
        &paper(),
        "--stage",
        "3",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let sim: SimulationReport = report::read(&text).unwrap();
    assert!(sim.converged);
    assert!((signal_mean(&sim, "v_out") + 12.0).abs() < 0.12);
    assert!((signal_mean(&sim, "i_out").abs() - 0.5).abs() < 0.005);
    assert!(sim.switch_power_factor.is_some());
    assert_eq!(report::to_json(&sim), text);

    let csv = fs::read_to_string(csv).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "t (s),i_L (A),v_C (V),v_L (V),i_C (A),v_out (V),i_out (A),i_in (A),i_sw (A),v_sw (V),i_D (A),p_sw (W)"
    );
    assert_eq!(lines.count(), 2001);
}

#[test]
fn simulate_several_cycles_and_full_transient() {
    let dir = TempDir::new().unwrap();
    let spec = stage3_spec(&dir, r#"{"steps_per_period": 100}"#);
    let csv = dir.path().join("cycles.csv");
    let o = run(&[
        "simulate",
        &spec,
        "--csv",
        csv.to_str().unwrap(),
        "--cycles",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 301);

    let o = run(&[
        "simulate",
        &spec,
        "--csv",
        csv.to_str().unwrap(),
        "--full-transient",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sim: SimulationReport = report::read(&stdout(&o)).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), sim.cycles_run * 100 + 1);
    assert!(rows[0].starts_with("0,0,0,"), "{}", rows[0]);

    let o = run(&["simulate", &spec, "--full-transient"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn non_convergence_exits_3_and_keeps_csv() {
    let dir = TempDir::new().unwrap();
    let spec = stage3_spec(&dir, r#"{"steps_per_period": 100, "max_cycles": 2}"#);
    let csv = dir.path().join("partial.csv");
    let o = run(&["simulate", &spec, "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("did not reach steady state"));
    let sim: SimulationReport = report::read(&stdout(&o)).unwrap();
    assert!(!sim.converged);
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 102);
}

#[test]
fn losses_with_and_without_parasitics() {
    let lossy = example("stage3_with_parasitics.json");
    let o = run(&["losses", lossy.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).is_empty());
    let r: LossReport = report::read(&stdout(&o)).unwrap();
    let l = &r.stages[0].losses;
    for (actual, expected) in [
        (l.inductor_loss, 0.411),
        (l.switch_conduction_loss, 0.204),
        (l.capacitor_loss, 0.412),
        (l.diode_loss, 0.3),
    ] {
        assert!(
            (actual - expected).abs() / expected < 0.005,
            "{actual} vs {expected}"
        );
    }

    let o = run(&["losses", &paper(), "--stage", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("stage 2 has no parasitics block"));
    let r: LossReport = report::read(&stdout(&o)).unwrap();
    assert_eq!(r.stages[0].stage, 2);
    assert_eq!(r.stages[0].losses.total, 0.0);
    assert_eq!(r.stages[0].losses.efficiency, 1.0);
}

#[test]
fn cascade_ratios() {
    let o = run(&["cascade", &paper()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let c: CascadeJson = report::read(&text).unwrap();
    assert!(c.converged);
    let ratios: Vec<_> = c
        .power_ratios
        .iter()
        .map(|r| (r.ratio, r.feasible))
        .collect();
    assert_eq!(
        ratios,
        [(0.04363636364, true), (0.2083333333, true), (1.2, false)]
    );
    assert!(stderr(&o).contains("stage 3 specifies more output than input power"));
    assert_eq!(report::to_json(&c), text);

    let scenario = example("reduced_power_35w.json");
    let o = run(&["cascade", scenario.to_str().unwrap()]);
    let c: CascadeJson = report::read(&stdout(&o)).unwrap();
    let ratios: Vec<_> = c
        .power_ratios
        .iter()
        .map(|r| (r.ratio, r.feasible))
        .collect();
    assert_eq!(
        ratios,
        [(0.3142857143, true), (0.5454545455, true), (5.76, false)]
    );
}

#[test]
fn single_stage_cascade_matches_simulate_and_losses() {
    let lossy = example("stage3_with_parasitics.json");
    let path = lossy.to_str().unwrap();
    let c: CascadeJson = report::read(&stdout(&run(&["cascade", path]))).unwrap();
    let sim: SimulationReport = report::read(&stdout(&run(&["simulate", path]))).unwrap();
    let losses: LossReport = report::read(&stdout(&run(&["losses", path]))).unwrap();
    assert_eq!(c.stages[0].simulation.as_ref(), Some(&sim));
    assert_eq!(c.stages[0].losses, losses.stages[0]);
    assert!(signal_mean(&sim, "v_out") > -12.0);
}

#[test]
fn cascade_chain_mismatch_exits_2() {
    let dir = TempDir::new().unwrap();
    let text =
        fs::read_to_string(paper())
            .unwrap()
            .replacen("\"vs_volts\": 12", "\"vs_volts\": 9", 1);
    let spec = write_spec(&dir, "mismatch.json", &text);
    let o = run(&["cascade", &spec]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("chain mismatch at stage 2"),
        "{}",
        stderr(&o)
    );
    assert_eq!(code(&run(&["design", &spec])), 0);
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn sweep_inductance_crosses_boundary() {
    let args = [
        "sweep",
        &paper(),
        "--param",
        "stage.3.inductance_factor",
        "--from",
        "0.5",
        "--to",
        "2",
        "--points",
        "16",
    ];
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text
        .starts_with("stage.3.inductance_factor,v_out.mean,v_out.peak_to_peak,conduction_mode\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 16);
    for row in &rows {
        let factor: f64 = row[0].parse().unwrap();
        if factor < 0.99 {
            assert_eq!(row[3], "DCM", "{row:?}");
        } else if factor > 1.01 {
            assert_eq!(row[3], "CCM", "{row:?}");
        }
    }
    assert_eq!(
        stdout(&run_env(&args, "CONVERTER_FORGE_THREADS", "1")),
        text
    );
    assert_eq!(code(&run_env(&args, "CONVERTER_FORGE_THREADS", "zero")), 2);
}

#[test]
fn sweep_duty_is_monotone() {
    let o = run(&[
        "sweep",
        &paper(),
        "--param",
        "stage.3.duty",
        "--from",
        "0.3",
        "--to",
        "0.7",
        "--points",
        "5",
        "--metric",
        "v_out.mean",
        "--metric",
        "i_L.rms",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let magnitudes: Vec<f64> = csv_rows(&stdout(&o))
        .iter()
        .map(|r| r[1].parse::<f64>().unwrap().abs())
        .collect();
    assert!(magnitudes.windows(2).all(|w| w[1] > w[0]), "{magnitudes:?}");
}

#[test]
fn one_point_sweep_matches_simulate() {
    let o = run(&[
        "sweep",
        &paper(),
        "--param",
        "stage.2.vs_volts",
        "--from",
        "12",
    ]);
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    let sim: SimulationReport =
        report::read(&stdout(&run(&["simulate", &paper(), "--stage", "2"]))).unwrap();
    let v = sim
        .signals
        .iter()
        .find(|s| s.name == "v_out")
        .unwrap()
        .stats;
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), v.mean);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), v.peak_to_peak);
    assert_eq!(rows[0][3], "CCM");
}

#[test]
fn sweep_rejects_bad_paths_and_metrics() {
    for (param, metric) in [
        ("stage.3.l_uh", "v_out.mean"),
        ("stage.4.duty", "v_out.mean"),
        ("stage.3.duty", "v_x.mean"),
    ] {
        let o = run(&[
            "sweep",
            &paper(),
            "--param",
            param,
            "--from",
            "0.5",
            "--metric",
            metric,
        ]);
        assert_eq!(code(&o), 2, "{param} {metric}: {}", stderr(&o));
    }
}
