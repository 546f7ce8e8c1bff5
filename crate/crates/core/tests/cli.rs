use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridwave::image::save_image;
use gridwave::synth::{clean_scene, inject_grid, texture_corpus};
use gridwave::Seed;
use serde_json::Value;

fn gridwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridwave")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = gridwave(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema(command: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../docs/schemas/{command}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn type_matches(name: &str, v: &Value) -> bool {
    match name {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "integer" => v.is_u64() || v.is_i64(),
        "number" => v.is_number(),
        other => panic!("unsupported schema type {other}"),
    }
}

/// Checks the subset of JSON Schema the report schemas use.
fn validate(schema: &Value, v: &Value, at: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let names: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().map(|x| x.as_str().unwrap()).collect(),
            _ => panic!("bad type keyword"),
        };
        if !names.iter().any(|n| type_matches(n, v)) {
            return Err(format!("{at}: {v} is not of type {names:?}"));
        }
    }
    if let Some(c) = schema.get("const") {
        if c != v {
            return Err(format!("{at}: {v} != const {c}"));
        }
    }
    if let Some(Value::Array(allowed)) = schema.get("enum") {
        if !allowed.contains(v) {
            return Err(format!("{at}: {v} not in {allowed:?}"));
        }
    }
    if let (Some(min), Some(n)) = (schema.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if n < min {
            return Err(format!("{at}: {n} < {min}"));
        }
    }
    if let Value::Object(map) = v {
        let props = schema.get("properties").and_then(Value::as_object);
        for req in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !map.contains_key(req.as_str().unwrap()) {
                return Err(format!("{at}: missing {req}"));
            }
        }
        for (k, child) in map {
            match props.and_then(|p| p.get(k)) {
                Some(s) => validate(s, child, &format!("{at}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{at}: unexpected property {k}"));
                }
                None => {}
            }
        }
    }
    if let Value::Array(items) = v {
        let len = items.len() as u64;
        if schema.get("minItems").and_then(Value::as_u64).is_some_and(|m| len < m) {
            return Err(format!("{at}: too few items"));
        }
        if schema.get("maxItems").and_then(Value::as_u64).is_some_and(|m| len > m) {
            return Err(format!("{at}: too many items"));
        }
        if let Some(s) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                validate(s, item, &format!("{at}[{i}]"))?;
            }
        }
    }
    Ok(())
}

fn assert_schema(command: &str, report: &Value) {
    if let Err(e) = validate(&schema(command), report, "$") {
        panic!("{command} report violates its schema: {e}");
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Four 64×64 textures, one with an injected period-16 grid.
fn png_dir(root: &Path) -> PathBuf {
    let dir = root.join("pngs");
    std::fs::create_dir_all(&dir).unwrap();
    for (i, img) in texture_corpus(Seed(5), 3, 64).unwrap().iter().enumerate() {
        save_image(img, dir.join(format!("t{i}.png"))).unwrap();
    }
    let grid = inject_grid(&clean_scene(Seed(6), 64).unwrap(), Seed(7), 16, 0.2).unwrap();
    save_image(&grid, dir.join("a_grid.png")).unwrap();
    dir
}

fn tiny_model(root: &Path) -> PathBuf {
    let path = root.join("model.toml");
    std::fs::write(&path, "layers = 1\nlags = [2, 4]\n").unwrap();
    path
}

#[test]
fn usage_errors_exit_2_and_domain_errors_exit_1() {
    assert_eq!(gridwave(&[]).status.code(), Some(2));
    assert_eq!(gridwave(&["rope-analyze", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(gridwave(&["frobnicate"]).status.code(), Some(2));
    let missing = gridwave(&["artifact-scan", "/nonexistent/x.png"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));
    assert_eq!(gridwave(&["rope-analyze", "--d", "0"]).status.code(), Some(1));
}

#[test]
fn rope_analyze_reports_strong_bandwidth() {
    let standard = ok_json(&["rope-analyze"]);
    assert_schema("rope-analyze", &standard);
    assert_eq!(standard["pairs"], 28);
    assert_eq!(standard["strong_dims"], 8);
    assert!(standard.get("zone_cells").is_none());
    let rescaled = ok_json(&["rope-analyze", "--theta", "100", "--grid", "16", "--samples", "8"]);
    assert_schema("rope-analyze", &rescaled);
    assert_eq!(rescaled["strong_dims"], 15);
    assert!(rescaled["zone_cells"].as_u64().unwrap() >= 1);
}

#[test]
fn rope_map_exports() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, png) = (dir.path().join("map.csv"), dir.path().join("map.png"));
    ok_json(&["rope-analyze", "--grid", "9", "--samples", "4", "--map-csv", s(&csv), "--map-png", s(&png)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.lines().all(|l| l.split(',').count() == 9));
    assert_eq!(gridwave::image::load_image(&png).unwrap().shape(), (9, 9, 1));
}

#[test]
fn demo_tile_is_flagged_and_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("tile.png");
    let args = ["demo-tile", "--out", s(&png), "--size", "128"];
    let (first, second) = (gridwave(&args), gridwave(&args));
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let ja = first.stdout;
    let report: Value = serde_json::from_slice(&ja).unwrap();
    assert_schema("demo-tile", &report);
    assert_eq!(report["spectrum"]["flagged"], true);
    assert_eq!(report["spatial"]["flagged"], true);
}

#[test]
fn artifact_scan_is_sorted_deterministic_and_flags_the_grid() {
    let root = tempfile::tempdir().unwrap();
    let dir = png_dir(root.path());
    let spectra = root.path().join("spectra");
    let args = ["artifact-scan", s(&dir), "--period", "16", "--spectrum-png", s(&spectra)];
    let (first, second) = (gridwave(&args), gridwave(&args));
    assert_eq!(first.stdout, second.stdout);
    let report: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_schema("artifact-scan", &report);
    let paths: Vec<&str> = report["records"].as_array().unwrap().iter().map(|r| r["path"].as_str().unwrap()).collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
    assert_eq!(report["images"], 4);
    assert!(paths[0].ends_with("a_grid.png"));
    assert_eq!(report["records"][0]["spectrum"]["flagged"], true);
    assert_eq!(std::fs::read_dir(&spectra).unwrap().count(), 4);
}

#[test]
fn loss_eval_report() {
    let root = tempfile::tempdir().unwrap();
    let dir = png_dir(root.path());
    let (pred, gt) = (dir.join("t0.png"), dir.join("t1.png"));
    let report = ok_json(&["loss-eval", "--pred", s(&pred), "--gt", s(&gt), "--lags", "2,4,8", "--grad"]);
    assert_schema("loss-eval", &report);
    assert!(report["loss"].as_f64().unwrap() > 0.0);
    assert!(report["grad_l2"].as_f64().unwrap() > 0.0);
    assert_eq!(report["pred_terms"].as_array().unwrap().len(), 4 * 3 * 3 * 2);
    let same = ok_json(&["loss-eval", "--pred", s(&gt), "--gt", s(&gt), "--lags", "2,4"]);
    assert_eq!(same["loss"], 0.0);
    assert_eq!(gridwave(&["loss-eval", "--pred", s(&pred), "--gt", s(&gt), "--lags", "2,x"]).status.code(), Some(2));
    assert_eq!(gridwave(&["loss-eval", "--pred", s(&pred), "--gt", s(&gt), "--lags", "40"]).status.code(), Some(1));
}

#[test]
fn curate_keeps_half_sorted_by_path() {
    let root = tempfile::tempdir().unwrap();
    let dir = png_dir(root.path());
    let out = root.path().join("curation.json");
    assert_eq!(gridwave(&["curate", s(&dir), "--keep", "0.5", "--out", s(&out)]).status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_schema("curate", &report);
    let kept: Vec<&str> = report["kept"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(kept.len(), 2);
    assert!(kept.windows(2).all(|w| w[0] < w[1]));
    let rejected = report["rejected"].as_array().unwrap();
    assert_eq!(rejected.len(), 2);
    assert!(rejected.iter().all(|r| r["reason"] == "ranked"));
    assert_eq!(report["config"]["resolved"]["keep_fraction"], 0.5);
}

#[test]
fn train_then_infer_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("hr");
    std::fs::create_dir_all(&data).unwrap();
    for (i, img) in texture_corpus(Seed(8), 2, 64).unwrap().iter().enumerate() {
        save_image(img, data.join(format!("hr{i}.png"))).unwrap();
    }
    let (model, ckpt, log) = (tiny_model(root.path()), root.path().join("ck.json"), root.path().join("log.csv"));
    let args = ["train", "--config", s(&model), "--data", s(&data), "--iterations", "3", "--out", s(&ckpt), "--log", s(&log)];
    let report = ok_json(&args);
    assert_schema("train", &report);
    assert_eq!(report["config"]["model"]["layers"], 1);
    assert_eq!(report["last"]["iteration"], 2);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);
    let first_ckpt = std::fs::read(&ckpt).unwrap();
    ok_json(&args);
    assert_eq!(std::fs::read(&ckpt).unwrap(), first_ckpt, "training is deterministic");

    let lr = root.path().join("lr.png");
    save_image(&texture_corpus(Seed(9), 1, 32).unwrap()[0], &lr).unwrap();
    let sr = root.path().join("sr.png");
    let report = ok_json(&["infer", "--checkpoint", s(&ckpt), "--input", s(&lr), "--out", s(&sr)]);
    assert_schema("infer", &report);
    assert_eq!(report["output_shape"], serde_json::json!([64, 64, 3]));
    assert_eq!(report["forward_passes"], 1);
    assert_eq!(gridwave::image::load_image(&sr).unwrap().shape(), (64, 64, 3));

    let bad = root.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"something-else\"}").unwrap();
    assert_eq!(gridwave(&["infer", "--checkpoint", s(&bad), "--input", s(&lr), "--out", s(&sr)]).status.code(), Some(1));
}

#[test]
fn ablate_short_run() {
    let root = tempfile::tempdir().unwrap();
    let (model, out) = (tiny_model(root.path()), root.path().join("ablation.json"));
    let args = ["ablate", "--config", s(&model), "--iterations", "2", "--train-count", "2", "--eval-count", "2", "--out", s(&out)];
    assert_eq!(gridwave(&args).status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_schema("ablate", &report);
    let arms: Vec<&str> = report["report"]["arms"].as_array().unwrap().iter().map(|a| a["arm"].as_str().unwrap()).collect();
    assert_eq!(arms, ["base", "rfr", "ap", "both"]);
}

#[test]
fn metrics_text_and_json() {
    let root = tempfile::tempdir().unwrap();
    let dir = png_dir(root.path());
    let (a, b) = (dir.join("t0.png"), dir.join("t1.png"));
    let text = gridwave(&["metrics", s(&a), s(&a)]);
    assert_eq!(text.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&text.stdout).starts_with("psnr_y 100.0000 dB  ssim_y 1.000000"));
    let report = ok_json(&["metrics", s(&a), s(&b), "--patch", "32", "--json"]);
    assert_schema("metrics", &report);
    assert_eq!(report["per_patch"].as_array().unwrap().len(), 4);
    let small = root.path().join("small.png");
    save_image(&texture_corpus(Seed(1), 1, 32).unwrap()[0], &small).unwrap();
    assert_eq!(gridwave(&["metrics", s(&a), s(&small)]).status.code(), Some(1));
}

#[test]
fn outputs_are_written_atomically() {
    let root = tempfile::tempdir().unwrap();
    let dest = root.path().join("report.json");
    std::fs::write(&dest, "previous").unwrap();
    // a failing run leaves the previous file untouched
    let out = gridwave(&["rope-analyze", "--d", "0", "--json", s(&dest)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(&dest).unwrap(), "previous");
    assert_eq!(gridwave(&["rope-analyze", "--json", s(&dest)]).status.code(), Some(0));
    let names: Vec<String> = std::fs::read_dir(root.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["report.json"], "no temporary files remain");
    assert_schema("rope-analyze", &serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap());
    let missing_dir = root.path().join("no/such/dir/report.json");
    assert_eq!(gridwave(&["rope-analyze", "--json", s(&missing_dir)]).status.code(), Some(1));
}
