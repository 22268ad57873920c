use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn validator(name: &str) -> jsonschema::Validator {
    let text = fs::read_to_string(root().join("schemas").join(name)).unwrap();
    jsonschema::validator_for(&serde_json::from_str::<Value>(&text).unwrap()).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, instance: &Value) {
    let errors: Vec<String> = v.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn mrd(args: &[&str]) -> std::process::Output {
    let o = Command::new(env!("CARGO_BIN_EXE_mrd")).args(args).env_remove("MRD_THREADS").output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn analysis_reports_validate() {
    let schema = validator("analysis_report.schema.json");
    let dir = tempfile::tempdir().unwrap();
    for (name, constant) in [("varied.csv", false), ("flat.csv", true)] {
        let mut csv = String::from("buyer_id,seller_id,w_buyer,w_seller,outcome\n");
        for b in 0..5 {
            for s in 0..4 {
                let y = if constant { 2.0 } else { 1.0 + 0.3 * b as f64 + 0.7 * s as f64 + ((b * s) % 3) as f64 };
                csv.push_str(&format!("b{b},s{s},{},{},{y}\n", (b < 2) as u8, (s % 2) as u8));
            }
        }
        let path = dir.path().join(name);
        fs::write(&path, csv).unwrap();
        let o = mrd(&["analyze", "--outcomes", path.to_str().unwrap(), "--estimand", "0.5,0.5,-1,0"]);
        let mut report: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_valid(&schema, &report);
        report["provenance"]["extra"] = json!(1);
        assert!(!schema.is_valid(&report));
    }
}

#[test]
fn simulation_summary_validates() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    fs::write(
        &config,
        r#"{"design":{"rows":10,"cols":8,"treated_rows":4,"treated_cols":3},
            "outcomes":{"mu_0":3.0,"mu_b":-1.0,"mu_s":-1.0,"mu_1":6.0,"sigma_0":1.0,"sigma_b":1.0,
                        "sigma_s":1.0,"sigma_1":1.0,"p_b":0.45,"p_s":0.55},
            "outcome_seed":1,"estimands":["ate","1,-1,0,0"]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    mrd(&["simulate", "--config", config.to_str().unwrap(), "--reps", "50", "--out-dir", out.to_str().unwrap()]);
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_valid(&validator("mc_report.schema.json"), &summary);
    assert!(summary["estimands"][1]["estimand"]["name"].is_null());
}

#[test]
fn shipped_configs_validate() {
    let schema = validator("simulation_config.schema.json");
    for entry in fs::read_dir(root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_valid(&schema, &v);
    }
}

#[test]
fn design_specs_validate_and_match_parser() {
    let schema = validator("design_spec.schema.json");
    let good = [
        json!({"kind": "smrd", "rows": 6, "cols": 5, "treated_rows": 3, "treated_cols": 2}),
        json!({"kind": "buyer_srd", "rows": 6, "cols": 5, "treated_rows": 3}),
        json!({"kind": "seller_srd", "rows": 6, "cols": 5, "treated_cols": 2}),
        json!({"kind": "crossover", "rows": 6, "cols": 8, "treated_per_row": 4, "balance": "double"}),
        json!({"kind": "multigroup", "cols": 6, "buyer_group_sizes": [2, 3], "seller_thresholds": [2, 4]}),
        json!({"kind": "hybrid", "rows": 6, "cols": 8, "group_a_sellers": 4, "treated_buyers": 3, "treated_group_b_sellers": 2}),
        json!({"kind": "clustered", "rows": 6, "group_a_buyers": 3, "cluster_sizes": [2, 2, 2], "treated_clusters": 1, "treated_group_b_sellers": 3}),
    ];
    let dir = tempfile::tempdir().unwrap();
    for (k, spec) in good.iter().enumerate() {
        assert_valid(&schema, spec);
        let path = dir.path().join(format!("{k}.json"));
        fs::write(&path, spec.to_string()).unwrap();
        mrd(&["design", "--spec", path.to_str().unwrap(), "--seed", "4"]);
    }
    let bad = json!({"kind": "smrd", "rows": 6, "cols": 5, "treated_rows": 3, "treated_cols": 2, "x": 0});
    assert!(!schema.is_valid(&bad));
}
