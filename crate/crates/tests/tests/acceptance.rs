//! Workspace acceptance suite. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;
use ucbmir_cli::service::{router, AppState};
use ucbmir_core::dataset::{
    build_reference_cdf, decode_records, generate_synthetic, histogram_match, ChannelCdf, Manifest, Split,
    SyntheticSpec,
};
use ucbmir_core::eval::{
    classification_scores, confusion_matrix, correct_count_histogram, cross_evaluate, ev1_acc_at_k,
    ev2_precision_recall, predict_label, run_evaluation, EvalConfig, EvalReport, LabelMap, QueryLabels,
};
use ucbmir_core::index::{
    build_index, load_index, save_index, EmbeddingIndex, Hit, IndexEntry, IndexError, Metric, RetrievalResult,
};
use ucbmir_core::model::{
    build_cae, embedding_rows, train, CaeConfig, CaeModel, Checkpoint, CheckpointError, TrainState,
};
use ucbmir_core::numerics::{Shape, Tensor};
use ucbmir_core::testing;

type Verdict = (bool, String);

/// A synthetic dataset with a model trained on it.
struct TrainedRun {
    _dir: TempDir,
    root: PathBuf,
    manifest: Manifest,
    model: CaeModel,
    state: TrainState,
    index: EmbeddingIndex,
    report: EvalReport,
    centroid_acc: f64,
    seconds: f64,
}

fn synthetic_spec() -> SyntheticSpec {
    SyntheticSpec::new(3, 100, 64)
}

fn train_config(seed: u64) -> CaeConfig {
    let mut c = CaeConfig::published(64, 64);
    c.epochs = 10;
    c.adam.lr = 5e-5;
    c.batch_size = 16;
    c.seed = seed;
    c
}

/// Nearest class centroid in pixel space: train centroids, test queries.
fn centroid_accuracy(m: &Manifest) -> f64 {
    let labels = m.labels();
    let train = m.split(Split::Train);
    let x = decode_records(&train, (64, 64)).unwrap();
    let dim = x.shape().sample_len();
    let mut centroids = vec![vec![0.0f64; dim]; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    for (i, r) in train.iter().enumerate() {
        let k = labels.iter().position(|l| *l == r.label).unwrap();
        counts[k] += 1;
        for (c, &v) in centroids[k].iter_mut().zip(x.sample(i)) {
            *c += v as f64;
        }
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= *n as f64);
    }
    let test = m.split(Split::Test);
    let q = decode_records(&test, (64, 64)).unwrap();
    let correct = test
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            let d = |c: &Vec<f64>| c.iter().zip(q.sample(*i)).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>();
            let best = (0..labels.len()).min_by(|&a, &b| d(&centroids[a]).total_cmp(&d(&centroids[b]))).unwrap();
            labels[best] == r.label
        })
        .count();
    correct as f64 / test.len() as f64
}

fn trained_run(seed: u64) -> TrainedRun {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let manifest = generate_synthetic(&synthetic_spec(), seed, &root.join("a")).unwrap();
    let centroid_acc = centroid_accuracy(&manifest);
    let started = Instant::now();
    let mut model = build_cae(train_config(seed), seed).unwrap();
    let mut state = TrainState::new(&model);
    let images = decode_records(&manifest.split(Split::Train), (64, 64)).unwrap();
    train(&mut model, &mut state, &images, |_, _| {}).unwrap();
    let seconds = started.elapsed().as_secs_f64();
    let index = build_index(&model, &manifest, &[Split::Train, Split::Val]).unwrap();
    let report = run_evaluation(&index, &model, &manifest, &EvalConfig::default()).unwrap();
    TrainedRun { _dir: dir, root, manifest, model, state, index, report, centroid_acc, seconds }
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let checks = testing::gradient_suite(20, 2024);
    let secs = started.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.worst_rel_err).fold(0.0, f64::max);
    let mut pass = secs < 120.0;
    let mut parts = Vec::new();
    for c in &checks {
        pass &= c.instances >= 20 && c.worst_rel_err <= 1e-5;
        parts.push(format!("{} {:.1e}", c.name, c.worst_rel_err));
    }
    (pass, format!("{} checks x20, worst rel err {worst:.2e}, {secs:.1}s [{}]", checks.len(), parts.join(", ")))
}

fn shapes(size: usize) -> (Shape, Shape, Shape, usize) {
    let model: CaeModel = build_cae(CaeConfig::published(size, size), 0).unwrap();
    let batch = Tensor::full(Shape::new(1, 3, size, size), 0.5).unwrap();
    let (recon, cache) = model.forward_reconstruct(&batch).unwrap();
    let emb = embedding_rows(&model.encode(&batch).unwrap());
    (cache.bottleneck_output().shape(), cache.embedding().shape(), recon.shape(), emb[0].len())
}

fn criterion_2() -> Verdict {
    let (b64, e64, r64, len64) = shapes(64);
    let (b512, _, r512, len512) = shapes(512);
    let pass = b64 == Shape::new(1, 256, 2, 2)
        && e64 == Shape::new(1, 200, 1, 1)
        && len64 == 200
        && r64 == Shape::new(1, 3, 64, 64)
        && b512 == Shape::new(1, 256, 16, 16)
        && len512 == 200
        && r512 == Shape::new(1, 3, 512, 512);
    let s = |x: Shape| format!("{}x{}x{}", x.c, x.h, x.w);
    (
        pass,
        format!(
            "64: bottleneck {} embedding {len64} recon {}; 512: bottleneck {} recon {}",
            s(b64),
            s(r64),
            s(b512),
            s(r512)
        ),
    )
}

fn criterion_3(a: &TrainedRun, again: &TrainedRun) -> Verdict {
    let h = &a.state.loss_history;
    let first = h[0];
    let last = *h.last().unwrap();
    let ratio = last / first;
    let identical = h.len() == 10
        && again.state.loss_history.len() == 10
        && h.iter().zip(&again.state.loss_history).all(|(x, y)| x.to_bits() == y.to_bits());
    let secs = a.seconds + again.seconds;
    (
        ratio <= 0.5 && identical && secs < 900.0,
        format!(
            "first-epoch mse {first:.6}, final {last:.6}, ratio {ratio:.3} (need <= 0.5); histories bit-identical: {identical}; {secs:.0}s for two runs"
        ),
    )
}

fn random_entries(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<IndexEntry> {
    (0..n)
        .map(|i| IndexEntry {
            id: format!("r{i:05}"),
            label: format!("c{}", i % 5),
            dataset_id: "random".into(),
            vector: (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        })
        .collect()
}

fn full_sort(entries: &[IndexEntry], q: &[f32], metric: Metric) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|e| {
            let d = match metric {
                Metric::Euclidean => {
                    e.vector.iter().zip(q).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>().sqrt()
                }
                Metric::Cosine => {
                    let dot: f64 = e.vector.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
                    let na = e.vector.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
                    let nb = q.iter().map(|&b| (b as f64).powi(2)).sum::<f64>().sqrt();
                    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
                }
            };
            (e.id.clone(), d)
        })
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut entries = random_entries(&mut rng, 2000, 200);
    for i in 0..25 {
        entries[1500 + i].vector = entries[i].vector.clone();
    }
    let mut shuffled = entries.clone();
    shuffled.reverse();
    let index = EmbeddingIndex::new(200, shuffled).unwrap();
    let mut queries: Vec<Vec<f32>> = random_entries(&mut rng, 190, 200).into_iter().map(|e| e.vector).collect();
    queries.extend((0..10).map(|i| entries[i].vector.clone()));
    let mut compared = 0;
    let mut mismatches = 0;
    for metric in [Metric::Euclidean, Metric::Cosine] {
        for (qi, q) in queries.iter().enumerate() {
            let oracle = full_sort(&entries, q, metric);
            for k in [1, 3, 5, 7, 50] {
                let got: Vec<(String, f64)> = index
                    .top_k(&format!("q{qi}"), q, k, metric, None)
                    .unwrap()
                    .hits
                    .into_iter()
                    .map(|h| (h.id, h.distance))
                    .collect();
                compared += 1;
                if got != oracle[..k] {
                    mismatches += 1;
                }
            }
        }
    }
    (mismatches == 0, format!("{compared} rankings compared, {mismatches} differ from the full sort"))
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/eval_fixture.json")
}

struct Fixture {
    results: Vec<RetrievalResult>,
    labels: QueryLabels,
    counts: BTreeMap<String, usize>,
    label_set: Vec<String>,
    expected: BTreeMap<String, Value>,
}

fn load_fixture() -> Fixture {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(fixture_path()).unwrap()).unwrap();
    let mut results = Vec::new();
    let mut labels = QueryLabels::new();
    for q in v["queries"].as_array().unwrap() {
        let id = q["id"].as_str().unwrap().to_string();
        labels.insert(id.clone(), q["label"].as_str().unwrap().to_string());
        let hits = q["retrieved"]
            .as_array()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, l)| Hit {
                id: format!("{id}-n{}", i + 1),
                label: l.as_str().unwrap().into(),
                distance: (i + 1) as f64 / 8.0,
            })
            .collect();
        results.push(RetrievalResult { query_id: id, hits });
    }
    Fixture {
        results,
        labels,
        counts: serde_json::from_value(v["index_label_counts"].clone()).unwrap(),
        label_set: serde_json::from_value(v["labels"].clone()).unwrap(),
        expected: serde_json::from_value(v["expected"].clone()).unwrap(),
    }
}

fn frac(v: &Value) -> f64 {
    v[0].as_f64().unwrap() / v[1].as_f64().unwrap()
}

fn criterion_5() -> Verdict {
    let f = load_fixture();
    let mut failures = Vec::new();
    let near = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    for (k, want) in &f.expected {
        let k: usize = k.parse().unwrap();
        let n = f.results.len() as f64;
        if !near(ev1_acc_at_k(&f.results, &f.labels, k).unwrap(), frac(&want["acc_at_k"])) {
            failures.push(format!("acc@{k}"));
        }
        let (mut p, mut r) = (0.0, 0.0);
        for res in &f.results {
            let label = &f.labels[&res.query_id];
            let (qp, qr) = ev2_precision_recall(res, label, k, f.counts[label]).unwrap();
            p += qp;
            r += qr;
        }
        if !near(p / n, frac(&want["ev2_precision"])) || !near(r / n, frac(&want["ev2_recall"])) {
            failures.push(format!("ev2@{k}"));
        }
        let predicted: Vec<String> = f.results.iter().map(|res| predict_label(res, k).unwrap()).collect();
        if predicted != serde_json::from_value::<Vec<String>>(want["predicted"].clone()).unwrap() {
            failures.push(format!("predict@{k}"));
        }
        let cm = confusion_matrix(&f.results, &f.labels, k, &f.label_set).unwrap();
        if cm.counts != serde_json::from_value::<Vec<Vec<usize>>>(want["confusion"].clone()).unwrap() {
            failures.push(format!("confusion@{k}"));
        }
        if correct_count_histogram(&f.results, &f.labels, k).unwrap()
            != serde_json::from_value::<Vec<usize>>(want["histogram"].clone()).unwrap()
        {
            failures.push(format!("histogram@{k}"));
        }
        let scores = classification_scores(&cm);
        if !near(scores.macro_precision, frac(&want["ev1_macro_precision"]))
            || !near(scores.macro_recall, frac(&want["ev1_macro_recall"]))
        {
            failures.push(format!("ev1@{k}"));
        }
    }
    let detail = if failures.is_empty() {
        format!("10-query fixture, K in {:?}: all values reproduced", f.expected.keys().collect::<Vec<_>>())
    } else {
        format!("mismatches: {}", failures.join(", "))
    };
    (failures.is_empty(), detail)
}

fn monotone(report: &EvalReport) -> bool {
    let acc = |k| report.acc_at(k).unwrap();
    acc(3) <= acc(5) && acc(5) <= acc(7) && report.metrics.values().all(|m| m.acc_at_k + 1e-12 >= m.ev2.precision)
}

fn criterion_6(runs: &[&TrainedRun]) -> Verdict {
    let f = load_fixture();
    let acc: Vec<f64> = [3, 5, 7].iter().map(|&k| ev1_acc_at_k(&f.results, &f.labels, k).unwrap()).collect();
    let mut fixture_ok = acc[0] <= acc[1] && acc[1] <= acc[2];
    for k in [3, 5, 7] {
        let p = f.results.iter().map(|r| ev2_precision_recall(r, &f.labels[&r.query_id], k, 1).unwrap().0).sum::<f64>()
            / f.results.len() as f64;
        fixture_ok &= ev1_acc_at_k(&f.results, &f.labels, k).unwrap() + 1e-12 >= p;
    }
    let synthetic_ok = runs.iter().all(|r| monotone(&r.report));
    let accs: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "{:.3}/{:.3}/{:.3}",
                r.report.acc_at(3).unwrap(),
                r.report.acc_at(5).unwrap(),
                r.report.acc_at(7).unwrap()
            )
        })
        .collect();
    (
        fixture_ok && synthetic_ok,
        format!("fixture ACC@3/5/7 {:.1}/{:.1}/{:.1}; synthetic ACC@3/5/7 {}", acc[0], acc[1], acc[2], accs.join(", ")),
    )
}

fn criterion_7(runs: &[(u64, &TrainedRun)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, r) in runs {
        let acc5 = r.report.acc_at(5).unwrap();
        pass &= r.centroid_acc >= 0.95 && acc5 >= 0.90;
        parts.push(format!("seed {seed}: centroid {:.3}, ACC@5 {acc5:.3}", r.centroid_acc));
    }
    (pass, parts.join("; "))
}

fn criterion_8(run: &TrainedRun) -> Verdict {
    let dir = &run.root;
    let mut problems = Vec::new();

    let index_path = dir.join("index.ucbm");
    save_index(&run.index, &index_path).unwrap();
    let bytes = std::fs::read(&index_path).unwrap();
    let loaded = load_index(&index_path).unwrap();
    if loaded != run.index || loaded.to_bytes().unwrap() != bytes {
        problems.push("index round trip".to_string());
    }
    let mut corrupt = bytes.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x5a;
    let corrupt_kind = EmbeddingIndex::from_bytes(&corrupt);
    if !matches!(corrupt_kind, Err(IndexError::Checksum { .. })) {
        problems.push(format!("corrupt index gave {corrupt_kind:?}"));
    }
    let mut bumped = bytes.clone();
    bumped[4..8].copy_from_slice(&2u32.to_le_bytes());
    if !matches!(EmbeddingIndex::from_bytes(&bumped), Err(IndexError::Version { found: 2, .. })) {
        problems.push("index version bump".to_string());
    }

    let ckpt = Checkpoint::new(run.model.clone(), run.state.clone());
    let ckpt_path = dir.join("model.ucae");
    ckpt.save(&ckpt_path).unwrap();
    let bytes = std::fs::read(&ckpt_path).unwrap();
    let loaded = Checkpoint::load(&ckpt_path).unwrap();
    if loaded != ckpt || loaded.to_bytes().unwrap() != bytes {
        problems.push("checkpoint round trip".to_string());
    }
    let mut corrupt = bytes.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x5a;
    if !matches!(Checkpoint::from_bytes(&corrupt), Err(CheckpointError::Checksum { .. })) {
        problems.push("corrupt checkpoint".to_string());
    }
    let mut bumped = bytes.clone();
    bumped[4..8].copy_from_slice(&2u32.to_le_bytes());
    if !matches!(Checkpoint::from_bytes(&bumped), Err(CheckpointError::Version { found: 2, .. })) {
        problems.push("checkpoint version bump".to_string());
    }

    let detail = if problems.is_empty() {
        format!(
            "index ({} B) and checkpoint ({} B) byte-identical after reload; flipped byte -> checksum error, version 2 -> version error",
            std::fs::metadata(&index_path).unwrap().len(),
            bytes.len()
        )
    } else {
        problems.join("; ")
    };
    (problems.is_empty(), detail)
}

fn uniform_noise(seed: u64, side: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(Shape::new(1, 3, side, side), (0..3 * side * side).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn max_diff(a: &Tensor, b: &Tensor) -> f32 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn criterion_9(run: &TrainedRun) -> Verdict {
    // A reference with a different shape in every channel.
    let reference = {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let side = 128;
        let data = (0..3 * side * side)
            .map(|i| {
                let u: f32 = rng.random();
                [u * u, u.sqrt(), 0.25 + 0.5 * u][i / (side * side)]
            })
            .collect();
        ChannelCdf::from_images([&Tensor::from_vec(Shape::new(1, 3, side, side), data).unwrap()]).unwrap()
    };
    let mut sup = 0.0f64;
    for seed in 0..4 {
        let out = histogram_match(&uniform_noise(seed, 256), &reference);
        sup = sup.max(ChannelCdf::from_images([&out]).unwrap().sup_distance(&reference));
    }

    let images = decode_records(&run.manifest.split(Split::Test)[..12], (64, 64)).unwrap();
    let mut self_diff = 0.0f32;
    for i in 0..12 {
        let img = images.sample_tensor(i);
        let own = ChannelCdf::from_images([&img]).unwrap();
        self_diff = self_diff.max(max_diff(&img, &histogram_match(&img, &own)));
    }
    let noise = uniform_noise(7, 128);
    let own = ChannelCdf::from_images([&noise]).unwrap();
    self_diff = self_diff.max(max_diff(&noise, &histogram_match(&noise, &own)));

    (
        sup <= 2.0 / 256.0 && self_diff <= 1.0 / 255.0 + 1e-6,
        format!(
            "matched sup-distance {:.5} (bound {:.5}); self-match max change {:.5} (bound {:.5})",
            sup,
            2.0 / 256.0,
            self_diff,
            1.0 / 255.0
        ),
    )
}

fn criterion_10(a: &TrainedRun) -> Verdict {
    let spec_b = SyntheticSpec { red_shift: 0.25, dataset_id: "synthetic-b".into(), ..synthetic_spec() };
    let b = generate_synthetic(&spec_b, 107, &a.root.join("b")).unwrap();
    let reference = build_reference_cdf(&a.manifest.in_splits(&[Split::Train, Split::Val]), (64, 64)).unwrap();
    let report =
        cross_evaluate(&a.model, &a.index, &b, Some(&reference), &LabelMap::new(), &EvalConfig::default()).unwrap();
    let json: Value = serde_json::from_str(&report.to_json()).unwrap();
    let both = json["unmatched"]["metadata"]["variant"] == "unmatched"
        && json["matched"]["metadata"]["variant"] == "histogram-matched";
    let unmatched = report.unmatched.acc_at(5).unwrap();
    let matched = report.matched.as_ref().map_or(f64::NAN, |m| m.acc_at(5).unwrap());
    (
        both && matched >= unmatched,
        format!("red shift +0.25: unmatched ACC@5 {unmatched:.3}, matched ACC@5 {matched:.3}; both variants in one report: {both}"),
    )
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Bytes) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

fn upload(bytes: &[u8], k: usize) -> Request<Body> {
    let boundary = "acceptance-boundary";
    let mut body = Vec::new();
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"q.png\"\r\nContent-Type: image/png\r\n\r\n")
            .as_bytes(),
    );
    body.extend_from_slice(bytes);
    body.extend_from_slice(
        format!("\r\n--{boundary}\r\nContent-Disposition: form-data; name=\"k\"\r\n\r\n{k}\r\n--{boundary}--\r\n")
            .as_bytes(),
    );
    Request::post("/api/query")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

fn criterion_11(run: &TrainedRun) -> Verdict {
    let state = Arc::new(AppState {
        index: run.index.clone(),
        model: run.model.clone(),
        manifest: Some(run.manifest.clone()),
        report_dir: None,
        metric_default: Metric::Euclidean,
    });
    let app = router(state, None);
    let query = run.manifest.split(Split::Test)[0].clone();
    let png = std::fs::read(&query.path).unwrap();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    runtime.block_on(async {
        let (status, serial) = send(&app, upload(&png, 7)).await;
        let tasks: Vec<_> = (0..32)
            .map(|_| {
                let app = app.clone();
                let png = png.clone();
                tokio::spawn(async move { send(&app, upload(&png, 7)).await })
            })
            .collect();
        let mut identical = 0;
        for t in tasks {
            let (s, body) = t.await.unwrap();
            if s == StatusCode::OK && body == serial {
                identical += 1;
            }
        }
        let (bad_status, bad_body) = send(&app, upload(b"\x89PNG\r\n\x1a\nthis is not a png", 7)).await;
        let structured = serde_json::from_slice::<Value>(&bad_body)
            .ok()
            .and_then(|v| v["error"]["category"].as_str().map(str::to_string));
        let pass = status == StatusCode::OK
            && identical == 32
            && bad_status == StatusCode::BAD_REQUEST
            && structured.is_some();
        (
            pass,
            format!(
                "{identical}/32 concurrent bodies equal the serial one; malformed upload -> {} {}",
                bad_status.as_u16(),
                structured.unwrap_or_else(|| "unstructured".into())
            ),
        )
    })
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let started = Instant::now();
    let mut verdicts: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut report = |n: u8, name: &'static str, v: Verdict| {
        println!("[{}] {n:>2} {name}: {}", if v.0 { "PASS" } else { "FAIL" }, v.1);
        verdicts.push((n, name, v));
    };

    report(1, "gradient suite", guarded(criterion_1));
    report(2, "shape suite", guarded(criterion_2));

    let run7 = trained_run(7);
    let run7_again = trained_run(7);
    report(3, "training sanity", guarded(|| criterion_3(&run7, &run7_again)));
    report(4, "retrieval oracle", guarded(criterion_4));
    report(5, "metric fixtures", guarded(criterion_5));

    let run8 = trained_run(8);
    let run9 = trained_run(9);
    report(6, "monotonicity", guarded(|| criterion_6(&[&run7, &run8, &run9])));
    report(7, "end-to-end synthetic retrieval", guarded(|| criterion_7(&[(7, &run7), (8, &run8), (9, &run9)])));
    report(8, "persistence", guarded(|| criterion_8(&run7)));
    report(9, "histogram matching", guarded(|| criterion_9(&run7)));
    report(10, "cross-dataset harness", guarded(|| criterion_10(&run7)));
    report(11, "service determinism", guarded(|| criterion_11(&run7)));

    let failed: Vec<String> = verdicts.iter().filter(|v| !v.2 .0).map(|v| v.0.to_string()).collect();
    println!(
        "acceptance: {} passed, {} failed{} ({:.0}s)",
        verdicts.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" [{}]", failed.join(", ")) },
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
