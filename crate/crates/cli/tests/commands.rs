use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use ucbmir_core::dataset::{decode_image_bytes, load_manifest, Split};
use ucbmir_core::index::{embed_images, load_index, Metric};
use ucbmir_core::model::load_checkpoint;

fn ucbmir(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ucbmir"));
    cmd.args(args).env_remove("UCBMIR_CONFIG").env("UCBMIR_LOG", "error");
    if let Some(c) = config {
        cmd.env("UCBMIR_CONFIG", c);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ucbmir(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and parsed stderr error of a failing run.
fn fails(args: &[&str], config: Option<&Path>) -> (i32, String, String) {
    let out = ucbmir(args, config);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let v: Value = serde_json::from_str(stderr.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {stderr}"));
    (
        out.status.code().unwrap(),
        v["error"]["category"].as_str().unwrap().to_string(),
        v["error"]["message"].as_str().unwrap().to_string(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Run {
    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn synth_and_train() -> Run {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let run = Run { _dir: dir, root };
    let data = run.p("data");
    let line = ok(&["synth", "--classes", "3", "--per-class", "10", "--size", "32", "--seed", "3", "--out", s(&data)]);
    assert!(line.starts_with("synth: 30 images (21 train, 3 val, 6 test)"), "{line}");
    let manifest = run.p("data/manifest.csv");
    let line =
        ok(&["train", "--manifest", s(&manifest), "--seed", "1", "--epochs", "1", "--out", s(&run.p("model.ucae"))]);
    assert!(line.starts_with("train: 21 images, 1 epochs"), "{line}");
    let line = ok(&[
        "index",
        "--manifest",
        s(&manifest),
        "--checkpoint",
        s(&run.p("model.ucae")),
        "--out",
        s(&run.p("index.ucbm")),
    ]);
    assert!(line.starts_with("index: 24 entries, dim 200"), "{line}");
    run
}

#[test]
fn artifacts_are_reproducible() {
    let a = synth_and_train();
    let b = synth_and_train();
    for f in ["data/manifest.csv", "data/images/synthetic_class2_0007.png", "model.ucae", "index.ucbm"] {
        assert_eq!(fs::read(a.p(f)).unwrap(), fs::read(b.p(f)).unwrap(), "{f} differs");
    }
    let (model, state) = load_checkpoint(a.p("model.ucae")).unwrap();
    assert_eq!(state.epoch, 1);
    assert_eq!(model.config.adam.lr, 5e-5);
    assert_eq!(model.config.input_size, (32, 32));
    assert_eq!(model.config.seed, 1);
}

#[test]
fn pipeline_commands() {
    let run = synth_and_train();
    let manifest_path = run.p("data/manifest.csv");
    let (ckpt, idx) = (run.p("model.ucae"), run.p("index.ucbm"));

    // search agrees with a direct ranking.
    let manifest = load_manifest(&manifest_path).unwrap();
    let query = manifest.split(Split::Test)[0];
    let out = ok(&["search", "--index", s(&idx), "--checkpoint", s(&ckpt), "--query", s(&query.path), "--k", "5"]);
    let (model, _) = load_checkpoint(&ckpt).unwrap();
    let index = load_index(&idx).unwrap();
    let img = decode_image_bytes(&fs::read(&query.path).unwrap(), (32, 32)).unwrap();
    let v = embed_images(&model, &img).unwrap().remove(0);
    let want: Vec<String> = index
        .top_k("q", &v, 5, Metric::Euclidean, None)
        .unwrap()
        .hits
        .iter()
        .map(|h| format!("{}\t{}\t{}", h.id, h.label, h.distance))
        .collect();
    assert_eq!(out.lines().collect::<Vec<_>>(), want);
    let cos = ok(&[
        "search",
        "--index",
        s(&idx),
        "--checkpoint",
        s(&ckpt),
        "--query",
        s(&query.path),
        "--metric",
        "cosine",
        "--k",
        "3",
    ]);
    assert_eq!(cos.lines().count(), 3);

    // eval: config file supplies paths, flags override it.
    let reports = run.p("reports");
    let config = run.p("ucbmir.conf");
    fs::write(
        &config,
        "# test run\nindex = index.ucbm\ncheckpoint = model.ucae\nmanifest = data/manifest.csv\nreport_dir = reports\nk_values = 3,5\nmetric = euclidean\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ucbmir"))
        .args(["eval", "--metric", "cosine", "--contact-sheet", "--sheet-rows", "3"])
        .env("UCBMIR_CONFIG", &config)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("eval: 6 queries, ACC@3 "), "{line}");
    let report: Value = serde_json::from_str(&fs::read_to_string(reports.join("eval-cosine.json")).unwrap()).unwrap();
    assert_eq!(report["metadata"]["metric"], "cosine");
    assert_eq!(report["metadata"]["k_values"], serde_json::json!([3, 5]));
    let echo = &report["metadata"]["config"];
    assert_eq!(echo["metric"], "cosine");
    assert_eq!(echo["k_values"], "3,5");
    assert_eq!(echo["command"], "eval");
    assert_eq!(echo["index"], s(&run.p("index.ucbm")));
    assert_eq!(fs::read(reports.join("latest.json")).unwrap(), fs::read(reports.join("eval-cosine.json")).unwrap());
    let sheet = image::open(reports.join("contact-sheet-cosine.png")).unwrap();
    assert!(sheet.height() > 3 * 96);

    // export / import round trip.
    let emb = run.p("vectors.uemb");
    ok(&["export", "--index", s(&idx), "--out", s(&emb)]);
    ok(&[
        "import",
        "--embeddings",
        s(&emb),
        "--manifest",
        s(&manifest_path),
        "--dim",
        "200",
        "--out",
        s(&run.p("again.ucbm")),
    ]);
    assert_eq!(fs::read(&idx).unwrap(), fs::read(run.p("again.ucbm")).unwrap());
    let (code, cat, _) = fails(
        &[
            "import",
            "--embeddings",
            s(&emb),
            "--manifest",
            s(&manifest_path),
            "--dim",
            "64",
            "--out",
            s(&run.p("x.ucbm")),
        ],
        None,
    );
    assert_eq!((code, cat.as_str()), (3, "config"));

    // xeval with a shifted second dataset and a reference histogram.
    let b = run.p("data_b");
    ok(&[
        "synth",
        "--classes",
        "3",
        "--per-class",
        "10",
        "--size",
        "32",
        "--seed",
        "4",
        "--red-shift",
        "0.25",
        "--dataset-id",
        "other",
        "--out",
        s(&b),
    ]);
    let manifest_b = b.join("manifest.csv");
    let line = ok(&[
        "xeval",
        "--index",
        s(&idx),
        "--checkpoint",
        s(&ckpt),
        "--manifest-b",
        s(&manifest_b),
        "--reference",
        s(&manifest_path),
        "--report-dir",
        s(&reports),
    ]);
    assert!(line.contains("unmatched ACC@3") && line.contains("; matched ACC@3"), "{line}");
    let x: Value = serde_json::from_str(&fs::read_to_string(reports.join("xeval-euclidean.json")).unwrap()).unwrap();
    assert_eq!(x["unmatched"]["metadata"]["variant"], "unmatched");
    assert_eq!(x["matched"]["metadata"]["variant"], "histogram-matched");
    assert_eq!(x["matched"]["metadata"]["config"]["reference"], s(&manifest_path));

    let map = run.p("labels.map");
    fs::write(&map, "class0 = tumour\n").unwrap();
    let (code, cat, msg) = fails(
        &[
            "xeval",
            "--index",
            s(&idx),
            "--checkpoint",
            s(&ckpt),
            "--manifest-b",
            s(&manifest_b),
            "--label-map",
            s(&map),
            "--report-dir",
            s(&reports),
        ],
        None,
    );
    assert_eq!((code, cat.as_str()), (4, "input"));
    assert!(msg.contains("class0"), "{msg}");
}

#[test]
fn failures_exit_with_categories() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let (code, cat, msg) = fails(&["train", "--manifest", "m.csv"], None);
    assert_eq!((code, cat.as_str()), (2, "usage"));
    assert!(msg.contains("--seed"), "{msg}");
    let (code, cat, _) = fails(&["synth", "--out", s(d)], None);
    assert_eq!((code, cat.as_str()), (2, "usage"));
    let (code, cat, _) = fails(&["search", "--query", "q.png", "--metric", "manhattan"], None);
    assert_eq!((code, cat.as_str()), (2, "usage"));

    let (code, cat, _) =
        fails(&["train", "--manifest", s(&d.join("missing.csv")), "--seed", "1", "--out", s(&d.join("m.ucae"))], None);
    assert_eq!((code, cat.as_str()), (4, "input"));
    let (code, cat, msg) = fails(&["train", "--seed", "1"], None);
    assert_eq!((code, cat.as_str()), (2, "usage"));
    assert!(msg.contains("manifest"), "{msg}");

    let (code, cat, _) = fails(&["synth", "--classes", "1", "--seed", "1", "--out", s(d)], None);
    assert_eq!((code, cat.as_str()), (3, "config"));

    let conf = d.join("bad.conf");
    fs::write(&conf, "index = a\ncolour = blue\n").unwrap();
    let (code, cat, msg) = fails(&["export", "--out", "x"], Some(&conf));
    assert_eq!((code, cat.as_str()), (3, "config"));
    assert!(msg.contains("line 2") && msg.contains("colour"), "{msg}");

    let garbage = d.join("garbage.ucbm");
    fs::write(&garbage, b"not an index at all").unwrap();
    let (code, cat, _) = fails(&["export", "--index", s(&garbage), "--out", s(&d.join("x"))], None);
    assert_eq!((code, cat.as_str()), (5, "format"));
}
