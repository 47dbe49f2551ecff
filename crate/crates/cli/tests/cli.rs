use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn tiptail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiptail"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tiptail(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    tiptail(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_generate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "synth-generate",
            "--signers",
            "3",
            "--samples",
            "4",
            "--forgeries",
            "2",
            "--seed",
            "9",
            "--out",
            p(out),
        ]);
    }
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(ca.len(), 3 * 4 + 3 * 2 + 1);
    assert_eq!(ca, cb);
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert!(manifest.starts_with("signer_id,sample_id,kind,target_id,path\n"));
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let d = |name: &str| tmp.path().join(name);
    let (gen, interp, aug, model, eval) = (d("gen"), d("interp"), d("aug"), d("model"), d("eval"));
    let split = d("split.txt");
    ok(&[
        "synth-generate",
        "--signers",
        "3",
        "--samples",
        "5",
        "--forgeries",
        "2",
        "--out",
        p(&gen),
    ]);
    ok(&[
        "interpolate",
        "--input",
        p(&gen),
        "--out",
        p(&interp),
        "--t",
        "64",
    ]);
    ok(&[
        "split",
        "--manifest",
        p(&interp),
        "--out",
        p(&split),
        "--seed",
        "1",
    ]);
    ok(&[
        "augment",
        "--input",
        p(&interp),
        "--out",
        p(&aug),
        "--split",
        p(&split),
    ]);
    let train_ids = fs::read_to_string(&split)
        .unwrap()
        .lines()
        .filter(|l| l.ends_with(",train"))
        .count();
    assert_eq!(fs::read_dir(&aug).unwrap().count(), 30 * train_ids);
    ok(&[
        "train",
        "--data",
        p(&interp),
        "--split",
        p(&split),
        "--augmented",
        p(&aug),
        "--variant",
        "two-stream",
        "--t",
        "64",
        "--epochs",
        "2",
        "--learning-rate",
        "1e-4",
        "--out",
        p(&model),
    ]);
    let history = fs::read_to_string(model.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_accuracy\n"));
    let ckpt = model.join("model.ckpt");
    let stdout = ok(&[
        "evaluate",
        "--model",
        p(&ckpt),
        "--data",
        p(&interp),
        "--split",
        p(&split),
        "--out",
        p(&eval),
    ]);
    assert!(stdout.contains("recognition_accuracy="));
    assert!(stdout.contains("eer_skilled="));
    let report = eval.join("report.txt");
    assert!(fs::read_to_string(&report).unwrap().contains("[roc_random]"));
    let svg = d("roc.svg");
    ok(&["roc", "--report", p(&report), "--out", p(&svg)]);
    assert_eq!(fs::read(&svg).unwrap(), fs::read(eval.join("roc.svg")).unwrap());
}

#[test]
fn stereo_path_reconstructs_a_trajectory() {
    let tmp = TempDir::new().unwrap();
    let d = |name: &str| tmp.path().join(name);
    let (frames, raw, tt, trace) = (d("frames"), d("raw.csv"), d("tt.csv"), d("trace.pgm"));
    ok(&[
        "render-stereo",
        "--signers",
        "2",
        "--signer",
        "1",
        "--sample",
        "0",
        "--out",
        p(&frames),
    ]);
    assert!(fs::read(frames.join("0000_L.ppm")).unwrap().starts_with(b"P6"));
    ok(&["detect", "--frames", p(&frames), "--out", p(&raw)]);
    ok(&[
        "reconstruct",
        "--input",
        p(&raw),
        "--out",
        p(&tt),
        "--trace",
        p(&trace),
    ]);
    let rows = fs::read_to_string(&tt).unwrap().lines().count();
    assert!(rows > 50, "{rows}");
    assert!(fs::read(&trace).unwrap().starts_with(b"P5"));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["split"]), 2);

    let missing_cfg = tmp.path().join("absent.cfg");
    assert_eq!(
        code(&["synth-generate", "--config", p(&missing_cfg), "--out", p(&out)]),
        3
    );
    let bad_cfg = tmp.path().join("bad.cfg");
    fs::write(&bad_cfg, "colour = red\n").unwrap();
    assert_eq!(
        code(&["synth-generate", "--config", p(&bad_cfg), "--out", p(&out)]),
        3
    );

    let absent = tmp.path().join("absent.csv");
    assert_eq!(code(&["interpolate", "--input", p(&absent), "--out", p(&out)]), 4);

    let garbage = tmp.path().join("garbage.csv");
    fs::write(&garbage, "1,2,x\n").unwrap();
    assert_eq!(
        code(&["interpolate", "--input", p(&garbage), "--out", p(&out)]),
        5
    );
}

#[test]
fn gradcheck_passes() {
    let stdout = ok(&["gradcheck", "--seed", "3"]);
    assert!(stdout.lines().count() > 10);
    assert!(!stdout.contains("FAIL"));
}
