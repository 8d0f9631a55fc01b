use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pyrotune::cloop::PlantMatrix;
use pyrotune::reference::{reference_plant, MODELS, RGA_PAIRS};
use pyrotune::sysid::PairFits;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pyrotune"))
}

fn manifest(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn ok(out: &Path, args: &[&str]) {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn linearize_scalar_golden() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "linearize",
            manifest("tests/golden/scalar/jacobians.json")
                .to_str()
                .unwrap(),
        ],
    );
    for name in ["state_space.json", "dc_gain.csv"] {
        assert_eq!(
            read(dir.path(), name),
            read(&manifest("tests/golden/scalar"), name),
            "{name}"
        );
    }
}

#[test]
fn linearize_frequency_zero_is_dc_gain() {
    let dir = TempDir::new().unwrap();
    let j = manifest("tests/golden/scalar/jacobians.json");
    ok(
        dir.path(),
        &["linearize", j.to_str().unwrap(), "--frequency", "0"],
    );
    assert_eq!(read(dir.path(), "dc_gain.csv"), "output,u1\nz1,-1\n");
    ok(
        dir.path(),
        &["linearize", j.to_str().unwrap(), "--frequency", "0.5"],
    );
    assert_eq!(read(dir.path(), "gain.csv"), "output,u1\nz1,-0.8-0.4i\n");
}

#[test]
fn empty_jacobians_are_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let empty = r#"{"rows": 0, "cols": 0, "data": []}"#;
    let doc = ["fx", "fy", "fu", "gx", "gy", "gu", "hx", "hy", "hu"]
        .map(|k| format!("\"{k}\": {empty}"))
        .join(", ");
    let path = dir.path().join("empty.json");
    fs::write(&path, format!("{{{doc}}}")).unwrap();
    let o = run(dir.path(), &["linearize", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn singular_algebraic_jacobian_exits_one() {
    let dir = TempDir::new().unwrap();
    let text = read(&manifest("tests/golden/scalar"), "jacobians.json")
        .replace("\"data\":[-1]}, \"gu\"", "\"data\":[0]}, \"gu\"");
    assert!(text.contains("\"data\":[0]}, \"gu\""));
    let path = dir.path().join("singular.json");
    fs::write(&path, text).unwrap();
    let o = run(dir.path(), &["linearize", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular"));
}

#[test]
fn bad_arguments_exit_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["simulate"]).status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["rga", "missing.csv"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_steady_state_names_the_field() {
    let dir = TempDir::new().unwrap();
    let mut doc: serde_json::Value =
        serde_json::from_str(&read(&manifest("fixtures"), "reference_plant.json")).unwrap();
    doc.as_object_mut().unwrap().remove("z_ss");
    let path = dir.path().join("plant.json");
    fs::write(&path, doc.to_string()).unwrap();
    let o = run(dir.path(), &["pipeline", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("z_ss"), "{err}");
    assert!(err.contains("load"), "{err}");
}

#[test]
fn subcommands_are_idempotent() {
    let plant = manifest("fixtures/reference_plant.json");
    let plant = plant.to_str().unwrap();
    let rga = manifest("fixtures/rga_table.csv");
    let j = manifest("tests/golden/scalar/jacobians.json");
    let mut loops: serde_json::Value =
        serde_json::from_str(&read(&manifest("fixtures"), "loops_imc.json")).unwrap();
    loops["horizon"] = 20_000.0.into();
    let tmp = TempDir::new().unwrap();
    let loops_path = tmp.path().join("loops.json");
    fs::write(&loops_path, loops.to_string()).unwrap();

    let commands: Vec<Vec<&str>> = vec![
        vec!["linearize", j.to_str().unwrap()],
        vec![
            "rga",
            rga.to_str().unwrap(),
            "--lambda",
            "--method",
            "assignment",
        ],
        vec!["tune", plant, "--tau-c", "recommended"],
        vec!["--plots", "simulate", plant, loops_path.to_str().unwrap()],
        vec!["step", plant, "--mv", "F_f_K"],
    ];
    for args in commands {
        let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        ok(a.path(), &args);
        ok(b.path(), &args);
        let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
        assert!(!sa.is_empty());
        assert!(sa == sb, "{args:?} differs between runs");
    }
}

#[test]
fn rga_of_table_marks_pairs() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "rga",
            manifest("fixtures/rga_table.csv").to_str().unwrap(),
            "--lambda",
        ],
    );
    let want: Vec<(String, String)> = RGA_PAIRS
        .iter()
        .map(|(c, m)| (c.to_string(), m.to_string()))
        .collect();
    assert_eq!(pairs(dir.path()), want);
    assert!(read(dir.path(), "phi.csv").starts_with("cv,v_grate,P_ph"));
    assert_eq!(
        read(dir.path(), "lambda.csv"),
        read(&manifest("fixtures"), "rga_table.csv")
    );

    let plant = manifest("fixtures/reference_plant.json");
    assert_eq!(
        run(dir.path(), &["rga", plant.to_str().unwrap(), "--lambda"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn project_file_supplies_paths() {
    let dir = TempDir::new().unwrap();
    fs::copy(
        manifest("fixtures/reference_plant.json"),
        dir.path().join("plant.json"),
    )
    .unwrap();
    fs::write(
        dir.path().join("project.json"),
        r#"{"plant": "plant.json", "out": "results", "tau_c": "recommended"}"#,
    )
    .unwrap();
    let o = bin()
        .arg("--config")
        .arg(dir.path().join("project.json"))
        .args(["tune"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("results/tuning.json").exists());

    fs::write(dir.path().join("bad.json"), r#"{"plant": "nowhere.json"}"#).unwrap();
    let o = bin()
        .arg("--config")
        .arg(dir.path().join("bad.json"))
        .arg("tune")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn fitted(dir: &Path) -> Vec<PairFits> {
    serde_json::from_str(&read(dir, "fits.json")).unwrap()
}

fn pairs(dir: &Path) -> Vec<(String, String)> {
    let v: serde_json::Value = serde_json::from_str(&read(dir, "pairing.json")).unwrap();
    v["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            (
                p["cv"].as_str().unwrap().to_string(),
                p["mv"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn pipeline_on_reference_plant() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "pipeline",
            manifest("fixtures/reference_plant.json").to_str().unwrap(),
        ],
    );
    for name in [
        "models.json",
        "lambda.csv",
        "tuning.json",
        "loops.json",
        "trace.csv",
        "saturation.json",
        "responsiveness.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }

    let fits = fitted(dir.path());
    assert_eq!(fits.len(), MODELS.len());
    for row in MODELS {
        let f = fits
            .iter()
            .find(|f| f.cv == row.cv && f.mv == row.mv)
            .unwrap();
        let m = &f.mean;
        let close = |a: f64, b: f64| (a - b).abs() <= 0.01 * b.abs();
        let z = m.zeros().first().copied().unwrap_or(0.0);
        assert!(close(m.k0(), row.k0), "{}: {m:?}", row.cv);
        assert!(
            close(m.poles()[0], row.tau1.max(row.tau2)),
            "{}: {m:?}",
            row.cv
        );
        assert!(
            close(m.poles()[1], row.tau1.min(row.tau2)),
            "{}: {m:?}",
            row.cv
        );
        assert!(close(z, row.tau_z), "{}: {m:?}", row.cv);
        assert!(close(m.delay(), row.tau_d), "{}: {m:?}", row.cv);
    }

    let mut got = pairs(dir.path());
    got.sort();
    let mut want: Vec<(String, String)> = MODELS
        .iter()
        .map(|r| (r.cv.to_string(), r.mv.to_string()))
        .collect();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn swapped_rows_permute_pairing() {
    let plant = reference_plant();
    let order = [1, 0, 3, 2, 5, 4];
    let swapped: PlantMatrix = plant.permute_cvs(&order).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("swapped.json");
    fs::write(&path, swapped.to_json()).unwrap();
    let out = dir.path().join("out");
    ok(&out, &["pipeline", path.to_str().unwrap()]);
    let mv_of =
        |pairs: Vec<(String, String)>, cv: &str| pairs.into_iter().find(|p| p.0 == cv).unwrap().1;
    for row in MODELS {
        assert_eq!(mv_of(pairs(&out), row.cv), row.mv);
    }
    let lambda = read(&out, "lambda.csv");
    let first_cv = lambda
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .to_string();
    assert_eq!(first_cv, swapped.cv_names()[0]);
    assert_eq!(first_cv, plant.cv_names()[1]);
}
