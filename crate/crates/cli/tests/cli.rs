use cqed_core::circuit_model::serialize_circuit;
use cqed_core::hamiltonian_assembly::{charge_qubit_couplings_exact, ChargeQubitParams};
use serde_json::Value;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::Instant;

fn cqed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqed"))
        .args(args)
        .env_remove("CQED_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    (dir, path)
}

/// Rows of a CSV body as parsed columns, header checked.
fn csv(text: &str, header: &str) -> Vec<Vec<String>> {
    let mut lines = text.split('\n');
    assert_eq!(lines.next(), Some(header));
    assert!(text.ends_with('\n') && !text.contains('\r'));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn f(cell: &str) -> f64 {
    cell.parse().unwrap()
}

#[test]
fn quantize_device_a_peaks_at_the_cutoff() {
    let out = stdout(&cqed(&[
        "quantize", "--preset", "device-a", "--n-max", "200",
    ]));
    let rows = csv(&out, "n,f_n_Hz,g_capacitive_Hz,g_inductive_Hz,channel_id");
    assert_eq!(rows.len(), 200);
    let peak = rows
        .iter()
        .max_by(|a, b| f(&a[2]).abs().total_cmp(&f(&b[2]).abs()))
        .unwrap();
    let n: usize = peak[0].parse().unwrap();
    assert!((80..=82).contains(&n), "peak at {n}");
    // the general assembly path reproduces the closed-form table
    let table = charge_qubit_couplings_exact(&ChargeQubitParams::device_a(), 200).unwrap();
    for (row, (g, fr)) in rows.iter().zip(table.g.iter().zip(&table.f)) {
        assert!(
            (f(&row[2]).abs() / (g / (2.0 * PI)) - 1.0).abs() < 1e-9,
            "{row:?}"
        );
        assert!((f(&row[1]) / fr - 1.0).abs() < 1e-12);
        assert_eq!(f(&row[3]), 0.0);
    }
}

#[test]
fn csv_is_byte_identical_and_seventeen_digits() {
    let a = stdout(&cqed(&[
        "quantize", "--preset", "device-a", "--n-max", "50",
    ]));
    let b = stdout(&cqed(&[
        "quantize", "--preset", "device-a", "--n-max", "50",
    ]));
    assert_eq!(a, b);
    let row = &csv(&a, "n,f_n_Hz,g_capacitive_Hz,g_inductive_Hz,channel_id")[7];
    let mantissa = row[1].split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
}

#[test]
fn input_file_matches_preset() {
    let (_dir, path) = scratch("device_a.json");
    std::fs::write(
        &path,
        serialize_circuit(&ChargeQubitParams::device_a().to_circuit()),
    )
    .unwrap();
    let from_file = stdout(&cqed(&[
        "quantize",
        "--input",
        path.to_str().unwrap(),
        "--n-max",
        "40",
    ]));
    let preset = stdout(&cqed(&[
        "quantize", "--preset", "device-a", "--n-max", "40",
    ]));
    assert_eq!(from_file, preset);
    let approx_file = stdout(&cqed(&[
        "quantize",
        "--input",
        path.to_str().unwrap(),
        "--approx",
        "--n-max",
        "40",
    ]));
    let approx_preset = stdout(&cqed(&[
        "quantize", "--preset", "device-a", "--approx", "--n-max", "40",
    ]));
    assert_eq!(approx_file, approx_preset);
}

#[test]
fn modes_of_the_bare_line() {
    let out = stdout(&cqed(&[
        "modes", "--alpha", "0", "--beta", "inf", "--length", "1", "--n-max", "100",
    ]));
    let rows = csv(&out, "n,k_n,f_n_Hz,u_n0,partial_sum_s1,partial_sum_s2");
    assert_eq!(rows.len(), 100);
    for (n, row) in rows.iter().enumerate() {
        let want = (2 * n + 1) as f64 * PI / 2.0;
        assert!((f(&row[1]) / want - 1.0).abs() < 1e-12, "{row:?}");
        assert_eq!(row[5], "");
    }
}

#[test]
fn modes_sums_with_dressing() {
    let out = stdout(&cqed(&[
        "modes",
        "--alpha",
        "1e-3",
        "--beta",
        "2e-2",
        "--length",
        "1",
        "--n-max",
        "2000",
        "--far-end",
        "open",
    ]));
    let rows = csv(&out, "n,k_n,f_n_Hz,u_n0,partial_sum_s1,partial_sum_s2");
    let last = rows.last().unwrap();
    // far above the cutoff the first sum is short by about 2L/(π²αN)
    let deficit = 2.0 / (PI * PI * 1e-3 * 2000.0);
    assert!(
        ((1.0 - f(&last[4])) / deficit - 1.0).abs() < 0.05,
        "{last:?}"
    );
    // open far end: second completeness sum tends to one
    assert!((f(&last[5]) - 1.0).abs() < 1e-3, "{last:?}");
}

#[test]
fn example3_preset_csv() {
    let out = stdout(&cqed(&[
        "example3",
        "--preset",
        "fig9",
        "--n-max",
        "1000",
        "--threads",
        "2",
    ]));
    let rows = csv(&out, "alpha,f_alpha_Hz,g_alpha_port1_Hz,g_alpha_port2_Hz");
    assert_eq!(rows[0][0], "1");
    assert!((f(&rows[0][1]) / 4.26e9 - 1.0).abs() < 0.02);
    assert!(f(&rows[0][2]) >= 0.0);
}

#[test]
fn thread_budget_does_not_change_output() {
    let one = stdout(&cqed(&["example3", "--n-max", "400", "--threads", "1"]));
    let env = Command::new(env!("CARGO_BIN_EXE_cqed"))
        .args(["example3", "--n-max", "400"])
        .env("CQED_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(one, stdout(&env));
}

#[test]
fn foster_stage_table() {
    let out = stdout(&cqed(&[
        "foster", "--c", "1e-10", "--l", "4e-7", "--length", "0.01", "--n-max", "5",
    ]));
    let rows = csv(&out, "impedance,stage,form,C_F,L_H,f_Hz,t_port1,t_port2");
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][4], "");
    let f1 = 1.0 / (2.0 * 0.01 * (1e-10f64 * 4e-7).sqrt());
    assert!((f(&rows[1][5]) / f1 - 1.0).abs() < 1e-12);
    let json: Value = serde_json::from_str(&stdout(&cqed(&[
        "foster", "--n-max", "3", "--emit", "json",
    ])))
    .unwrap();
    assert_eq!(json["impedances"][0]["stage_inds"][0], Value::Null);
}

#[test]
fn spectral_summary_reports_exponents() {
    let (_dir, summary) = scratch("summary.json");
    let out = stdout(&cqed(&[
        "spectral",
        "--kind",
        "halfline",
        "--l-g",
        "1e-9",
        "--summary",
        summary.to_str().unwrap(),
    ]));
    let rows = csv(&out, "omega_Hz,J_value,kind");
    assert_eq!(rows.len(), 2 * 601);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let slopes: Vec<f64> = s["exponents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["fit"]["slope"].as_f64().unwrap())
        .collect();
    assert!((slopes[0] + 1.0).abs() < 0.01, "{slopes:?}");
    assert!((slopes[1] + 3.0).abs() < 0.01, "{slopes:?}");

    let json: Value = serde_json::from_str(&stdout(&cqed(&[
        "spectral",
        "--kind",
        "inductive",
        "--l-g",
        "1e-9",
        "--emit",
        "json",
    ])))
    .unwrap();
    assert_eq!(json["series"][0]["kind"], "inductive");
    assert!(
        json["summary"]["exponents"][0]["fit"]["slope"]
            .as_f64()
            .unwrap()
            < -2.5
    );
}

#[test]
fn check_invertibility_reports_conditions() {
    let json: Value = serde_json::from_str(&stdout(&cqed(&[
        "check-invertibility",
        "--preset",
        "device-a",
        "--emit",
        "json",
    ])))
    .unwrap();
    let c = &json["couplers"][0];
    assert_eq!(c["cap_degenerate"], false);
    assert!(c["cap_condition"].as_f64().unwrap() > 0.0);
}

fn error_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap()
}

#[test]
fn input_errors_exit_two_with_json() {
    for args in [
        vec!["quantize"],
        vec!["quantize", "--preset", "device-a", "--n-max", "0"],
        vec!["quantize", "--unknown-flag"],
        vec!["quantize", "--input", "/definitely/not/here.json"],
        vec!["example3", "--preset", "device-a"],
    ] {
        let o = cqed(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(error_json(&o)["error"]["kind"], "input", "{args:?}");
    }
    let (_dir, path) = scratch("unknown_key.json");
    std::fs::write(&path, r#"{"blocks": [], "wires": []}"#).unwrap();
    let o = cqed(&["quantize", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("wires"));
}

#[test]
fn quick_validation_passes_within_a_minute() {
    let start = Instant::now();
    let o = cqed(&["validate", "--quick"]);
    let secs = start.elapsed().as_secs_f64();
    let table = stdout(&o);
    assert_eq!(
        table.lines().filter(|l| l.starts_with("PASS")).count(),
        11,
        "{table}"
    );
    assert!(secs < 60.0, "{secs} s");
}

#[test]
fn validate_json_for_one_suite() {
    let json: Value = serde_json::from_str(&stdout(&cqed(&[
        "validate",
        "--suite",
        "sum_rules",
        "--json",
    ])))
    .unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
    assert_eq!(json[0]["passed"], true);
    assert_eq!(
        cqed(&["validate", "--suite", "nonsense"]).status.code(),
        Some(2)
    );
}

#[test]
fn documented_example_is_the_device_a_preset() {
    let doc = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../docs/examples/charge_qubit.json"
    );
    let from_doc = stdout(&cqed(&["quantize", "--input", doc, "--n-max", "100"]));
    let preset = stdout(&cqed(&[
        "quantize", "--preset", "device-a", "--n-max", "100",
    ]));
    let a = csv(
        &from_doc,
        "n,f_n_Hz,g_capacitive_Hz,g_inductive_Hz,channel_id",
    );
    let b = csv(
        &preset,
        "n,f_n_Hz,g_capacitive_Hz,g_inductive_Hz,channel_id",
    );
    // prefixed units round to the nearest double, so compare values
    for (ra, rb) in a.iter().zip(&b) {
        for col in 1..3 {
            assert!(
                (f(&ra[col]) / f(&rb[col]) - 1.0).abs() < 1e-12,
                "{ra:?} {rb:?}"
            );
        }
    }
}
