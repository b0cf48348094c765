use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const W: usize = 800;
const H: usize = 700;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tomatoscan"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_pgm(path: &Path, w: usize, h: usize, value: u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(std::iter::repeat_n(value, w * h));
    fs::write(path, bytes).unwrap();
}

/// 16-bit big-endian millimetres.
fn write_depth_mm(path: &Path, w: usize, h: usize, mm: impl Fn(usize, usize) -> u16) {
    let mut bytes = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            bytes.extend(mm(x, y).to_be_bytes());
        }
    }
    fs::write(path, bytes).unwrap();
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Value {
    json!([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
}

/// Three fruits: upright 250x500 rectangle, a 200x100 rectangle whose
/// carpopodium points right, and one sitting on a depth hole.
fn scene(dir: &Path) -> PathBuf {
    write_pgm(&dir.join("scene.pgm"), W, H, 128);
    write_depth_mm(&dir.join("scene_depth.pgm"), W, H, |x, y| {
        if (600..700).contains(&x) && (100..200).contains(&y) {
            0
        } else {
            500
        }
    });
    let manifest = json!({
        "image": "scene.pgm",
        "depth": "scene_depth.pgm",
        "fruits": [
            {
                "id": 1,
                "box": [40.0, 60.0, 290.0, 560.0],
                "confidence": 0.95,
                "body": [185.0, 560.0],
                "carpopodium": [185.0, 90.0],
                "pred_polygon": rect(60.0, 80.0, 310.0, 580.0),
            },
            {
                "id": 2,
                "box": [380.0, 300.0, 240.0, 240.0],
                "confidence": 0.9,
                "body": [400.0, 420.0],
                "carpopodium": [600.0, 420.0],
                "pred_polygon": rect(400.0, 370.0, 600.0, 470.0),
            },
            {
                "id": 3,
                "box": [610.0, 110.0, 80.0, 80.0],
                "confidence": 0.8,
                "body": [650.0, 180.0],
                "carpopodium": [650.0, 120.0],
                "pred_polygon": rect(620.0, 120.0, 680.0, 180.0),
            }
        ]
    });
    let path = dir.join("scene.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

fn model(dir: &Path, k: f64) -> PathBuf {
    let path = dir.join("cal.model");
    fs::write(&path, format!("k={k}\n")).unwrap();
    path
}

fn fruit(report: &Value, id: i64) -> &Value {
    report["fruits"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["id"] == id)
        .unwrap()
}

#[test]
fn phenotype_scene_end_to_end() {
    let dir = TempDir::new().unwrap();
    let manifest = scene(dir.path());
    let cal = model(dir.path(), 5000.0);
    let out = run(&["phenotype", "--manifest", p(&manifest), "--calibration", p(&cal)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["schema"], 1);

    let upright = fruit(&report, 1);
    assert_eq!(upright["status"], "ok");
    let m = &upright["metric"];
    assert!((m["width_cm"].as_f64().unwrap() - 2.5).abs() < 1e-9);
    assert!((m["height_cm"].as_f64().unwrap() - 5.0).abs() < 1e-9);
    assert!((upright["depth_used_cm"].as_f64().unwrap() - 50.0).abs() < 1e-9);

    let sideways = fruit(&report, 2);
    assert_eq!(sideways["status"], "ok");
    assert!((sideways["theta_deg"].as_f64().unwrap() - 90.0).abs() < 1e-6);
    let h = sideways["pixel"]["height_px"].as_f64().unwrap();
    assert!((h - 200.0).abs() <= 2.0, "height {h}");

    let hole = fruit(&report, 3);
    assert_eq!(hole["status"], "error");
    assert!(stderr(&out).contains("fruit 3"));

    let measured = report["measured_count"].as_u64().unwrap();
    let errors = report["error_count"].as_u64().unwrap();
    assert_eq!((measured, errors), (2, 1));
    assert_eq!(measured + errors, 3);
}

#[test]
fn phenotype_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let manifest = scene(dir.path());
    let cal = model(dir.path(), 5000.0);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&[
            "phenotype",
            "--manifest",
            p(&manifest),
            "--calibration",
            p(&cal),
            "--depth-mode",
            "mask-median",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn phenotype_writes_crops() {
    let dir = TempDir::new().unwrap();
    let manifest = scene(dir.path());
    let cal = model(dir.path(), 5000.0);
    let crops = dir.path().join("crops");
    fs::create_dir(&crops).unwrap();
    let o = run(&[
        "phenotype",
        "--manifest",
        p(&manifest),
        "--calibration",
        p(&cal),
        "--crops",
        p(&crops),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(crops.join("fruit_1.pgm").exists());
    assert!(crops.join("fruit_2.pgm").exists());
}

#[test]
fn phenotype_rejects_bad_manifest() {
    let dir = TempDir::new().unwrap();
    let manifest = dir.path().join("bad.json");
    fs::write(&manifest, "{\"image\": 3}").unwrap();
    let cal = model(dir.path(), 5000.0);
    let o = run(&["phenotype", "--manifest", p(&manifest), "--calibration", p(&cal)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn phenotype_accepts_calibration_csv() {
    let dir = TempDir::new().unwrap();
    let manifest = scene(dir.path());
    let csv = dir.path().join("cal.csv");
    fs::write(&csv, "depth_cm,pixels_per_cm\n25,200\n50,100\n100,50\n").unwrap();
    let o = run(&["phenotype", "--manifest", p(&manifest), "--calibration", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((report["calibration_k"].as_f64().unwrap() - 5000.0).abs() < 1e-9);
}

#[test]
fn stats_bundled_prints_medians() {
    let o = run(&["stats", "--bundled"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trait,median,q1,q3,min,max,n"));
    let medians: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let rounded: Vec<f64> = medians.iter().map(|m| (m * 100.0).round() / 100.0).collect();
    assert_eq!(rounded, vec![5.63, 7.03, -0.64, 37.06]);
}

#[test]
fn stats_single_row_and_out_file() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("one.csv");
    fs::write(
        &csv,
        "plant,fruit,W_t,W_p,W_e,H_t,H_p,H_e,A_t,A_p,A_e,V_t,V_p,V_e\n\
         1,1,5.0,5.5,10.0,6.0,6.0,0.0,20.0,19.0,-5.0,80.0,100.0,25.0\n",
    )
    .unwrap();
    let out = dir.path().join("stats.csv");
    let o = run(&["stats", "--csv", p(&csv), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = fs::read_to_string(&out).unwrap();
    let width: Vec<&str> = written.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(width, vec!["width", "10", "10", "10", "10", "10", "1"]);
    let _: Value = serde_json::from_str(&stdout(&o)).unwrap();
}

#[test]
fn calibrate_exact_and_noisy() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("ruler.csv");
    fs::write(&csv, "depth_cm,pixels_per_cm\n20,50\n40,25\n100,10\n").unwrap();
    let o = run(&["calibrate", "--csv", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let k: f64 = text.lines().next().unwrap().strip_prefix("k=").unwrap().parse().unwrap();
    assert!((k - 1000.0).abs() < 1e-9);
    let saved = fs::read_to_string(dir.path().join("ruler.model")).unwrap();
    assert!(saved.starts_with("k="));

    fs::write(&csv, "depth_cm,pixels_per_cm\n20,52\n40,24\n100,11\n").unwrap();
    let out = dir.path().join("noisy.model");
    let o = run(&["calibrate", "--csv", p(&csv), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let k: f64 = stdout(&o).lines().next().unwrap()[2..].parse().unwrap();
    // closed-form least squares: sum(p/d) / sum(1/d^2)
    let (num, den) = [(20.0, 52.0), (40.0, 24.0), (100.0, 11.0)]
        .iter()
        .fold((0.0, 0.0), |(n, d), (depth, px): &(f64, f64)| {
            (n + px / depth, d + 1.0 / (depth * depth))
        });
    assert!((k - num / den).abs() < 1e-9);
}

#[test]
fn calibrate_reports_bad_row() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("ruler.csv");
    fs::write(&csv, "depth_cm,pixels_per_cm\n20,50\n0,25\n").unwrap();
    let o = run(&["calibrate", "--csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

/// Manifest whose fruits carry both a prediction and a ground-truth contour.
fn eval_manifest(dir: &Path, name: &str, fruits: &[(i64, Value, Value, f64)]) -> PathBuf {
    let image = dir.join("eval.pgm");
    if !image.exists() {
        write_pgm(&image, 64, 64, 0);
        write_depth_mm(&dir.join("eval_depth.pgm"), 64, 64, |_, _| 500);
    }
    let fruits: Vec<Value> = fruits
        .iter()
        .map(|(id, pred, gt, conf)| {
            json!({
                "id": id,
                "box": [0.0, 0.0, 40.0, 40.0],
                "confidence": conf,
                "body": [5.0, 9.0],
                "carpopodium": [5.0, 1.0],
                "pred_polygon": pred,
                "gt_polygon": gt,
            })
        })
        .collect();
    let path = dir.join(name);
    let m = json!({"image": "eval.pgm", "depth": "eval_depth.pgm", "fruits": fruits});
    fs::write(&path, m.to_string()).unwrap();
    path
}

fn eval_json(args: &[&str]) -> Value {
    let o = run(args);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn eval_identity_scores() {
    let dir = TempDir::new().unwrap();
    let sq = rect(2.0, 2.0, 22.0, 22.0);
    let m = eval_manifest(dir.path(), "same.json", &[(1, sq.clone(), sq.clone(), 0.9)]);
    let r = eval_json(&["eval", "mee", "--pred", p(&m)]);
    assert_eq!(r["mee_pct"].as_f64().unwrap(), 0.0);
    let r = eval_json(&["eval", "map", "--pred", p(&m), "--gt", p(&m)]);
    assert_eq!(r["detection"]["map50"].as_f64().unwrap(), 1.0);
    let r = eval_json(&["eval", "edgeloss", "--pred", p(&m)]);
    assert_eq!(r["edge_loss"].as_f64().unwrap(), 0.0);
}

#[test]
fn eval_shifted_square() {
    let dir = TempDir::new().unwrap();
    let m = eval_manifest(
        dir.path(),
        "shift.json",
        &[(1, rect(1.0, 0.0, 11.0, 10.0), rect(0.0, 0.0, 10.0, 10.0), 0.9)],
    );
    let csv = dir.path().join("pairs.csv");
    let r = eval_json(&["eval", "mee", "--pred", p(&m), "--out", p(&csv)]);
    let mee = r["mee_pct"].as_f64().unwrap();
    // mean distance 0.5 px over a 10*sqrt(2) diagonal
    let expected = 0.5 / (10.0 * 2f64.sqrt()) * 100.0;
    assert!((mee - expected).abs() < 0.01, "{mee} vs {expected}");
    assert!(fs::read_to_string(&csv).unwrap().starts_with("scene,id,value\n"));
}

#[test]
fn eval_unpaired_ids_fail() {
    let dir = TempDir::new().unwrap();
    let sq = rect(2.0, 2.0, 22.0, 22.0);
    let pred = eval_manifest(dir.path(), "pred.json", &[(1, sq.clone(), sq.clone(), 0.9)]);
    let gt = eval_manifest(dir.path(), "gt.json", &[(2, sq.clone(), sq.clone(), 1.0)]);
    let o = run(&["eval", "mee", "--pred", p(&pred), "--gt", p(&gt)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn boost_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.pgm");
    let mut bytes = b"P5\n4 4\n255\n".to_vec();
    bytes.extend((0..16u8).map(|i| 10 + 15 * i));
    fs::write(&input, bytes).unwrap();
    let out = dir.path().join("out.pgm");
    let o = run(&["boost", "--in", p(&input), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = fs::read(&out).unwrap();
    let header = b"P5\n4 4\n255\n";
    assert_eq!(&written[..header.len()], header);
    assert_eq!(
        &written[header.len()..],
        &[0, 0, 0, 21, 44, 61, 88, 111, 134, 157, 183, 201, 224, 246, 255, 255]
    );

    let same = dir.path().join("same.pgm");
    let o = run(&[
        "boost", "--in", p(&input), "--out", p(&same), "--contrast", "1", "--acutance", "1",
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(&same).unwrap(), fs::read(&input).unwrap());
}
