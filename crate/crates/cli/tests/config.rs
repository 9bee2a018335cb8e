use std::path::{Path, PathBuf};

use ucbmir_cli::commands::parse_label_map;
use ucbmir_cli::{Category, RunConfig};
use ucbmir_core::index::Metric;

#[test]
fn file_values_parse_and_resolve_paths() {
    let text = "\
# comment line
manifest = data/m.csv   # trailing comment
report_dir=/abs/reports
size = 128
epochs = 3
lr = 1e-4
batch_size = 8
k_values = 1, 3,9
metric = cosine
bind = 0.0.0.0
port = 9000
";
    let c = RunConfig::parse(text, Path::new("/etc/ucbmir")).unwrap();
    assert_eq!(c.manifest, Some(PathBuf::from("/etc/ucbmir/data/m.csv")));
    assert_eq!(c.report_dir, Some(PathBuf::from("/abs/reports")));
    assert_eq!((c.size, c.epochs, c.lr, c.batch_size), (Some(128), Some(3), Some(1e-4), Some(8)));
    assert_eq!(c.k_values, Some(vec![1, 3, 9]));
    assert_eq!(c.metric, Some(Metric::Cosine));
    assert_eq!((c.bind.as_deref(), c.port), (Some("0.0.0.0"), Some(9000)));
    assert_eq!(c.checkpoint, None);

    let e = c.eval_config().unwrap();
    assert_eq!((e.k_values, e.metric), (vec![1, 3, 9], Metric::Cosine));
}

#[test]
fn flags_override_file_values() {
    let file = RunConfig::parse("metric = cosine\nk_values = 3,5\nindex = a.ucbm\n", Path::new("")).unwrap();
    let flags = RunConfig { metric: Some(Metric::Euclidean), checkpoint: Some("c.ucae".into()), ..Default::default() };
    let c = file.overlay(&flags);
    assert_eq!(c.metric, Some(Metric::Euclidean));
    assert_eq!(c.k_values, Some(vec![3, 5]));
    assert_eq!(c.index, Some(PathBuf::from("a.ucbm")));
    assert_eq!(c.checkpoint, Some(PathBuf::from("c.ucae")));

    let echo = c.echo();
    assert_eq!(echo["metric"], "euclidean");
    assert_eq!(echo["k_values"], "3,5");
    assert!(!echo.contains_key("port"));
}

#[test]
fn bad_files_are_config_errors() {
    for (text, needle) in [
        ("epochs = ten\n", "line 1"),
        ("\n\nwhat\n", "line 3"),
        ("metric = hamming\n", "hamming"),
        ("k_values = 3,x\n", "x"),
        ("shape = 4\n", "unknown key"),
    ] {
        let e = RunConfig::parse(text, Path::new("")).unwrap_err();
        assert_eq!(e.category, Category::Config);
        assert!(e.message.contains(needle), "{text:?}: {}", e.message);
    }
    let c = RunConfig { k_values: Some(vec![5, 3]), ..Default::default() };
    assert_eq!(c.eval_config().unwrap_err().category, Category::Config);
    assert_eq!(RunConfig::default().require("index").unwrap_err().category, Category::Usage);
}

#[test]
fn label_maps() {
    let m = parse_label_map("# B -> A\nbenign = NC\n malignant=G4 \n\n").unwrap();
    assert_eq!(m.len(), 2);
    assert_eq!(m["benign"], "NC");
    assert_eq!(m["malignant"], "G4");
    assert_eq!(parse_label_map("oops\n").unwrap_err().category, Category::Config);
}
