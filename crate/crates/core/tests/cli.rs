use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyaug::batch::{augment_bytes, AugmentRequest};
use polyaug::label_io::{parse_label_file, ParseMode};
use polyaug::raster::ImageBuffer;
use polyaug::TransformSpec;

fn polyaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyaug"))
        .args(args)
        .output()
        .expect("binary runs")
}

struct Dataset {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Dataset {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        fs::create_dir_all(root.join("images")).unwrap();
        fs::create_dir_all(root.join("labels")).unwrap();
        Self { _tmp: tmp, root }
    }

    fn images(&self) -> PathBuf {
        self.root.join("images")
    }

    fn labels(&self) -> PathBuf {
        self.root.join("labels")
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn add(&self, stem: &str, w: u32, h: u32, labels: Option<&str>) {
        let data = (0..w * h * 3).map(|v| (v * 31 % 253) as u8).collect();
        ImageBuffer::new(w, h, 3, data)
            .unwrap()
            .save_png(&self.images().join(format!("{stem}.png")))
            .unwrap();
        if let Some(text) = labels {
            fs::write(self.labels().join(format!("{stem}.txt")), text).unwrap();
        }
    }

    fn augment(&self, extra: &[&str]) -> Output {
        let (i, l, o) = (self.images(), self.labels(), self.out());
        let mut args = vec![
            "augment",
            "--images",
            i.to_str().unwrap(),
            "--labels",
            l.to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        polyaug(&args)
    }
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

const TWO: &str = "0 0.1 0.1 0.4 0.1 0.4 0.4\n3 0.5 0.5 0.9 0.5 0.9 0.9 0.5 0.9\n";

#[test]
fn vflip_two_images() {
    let ds = Dataset::new();
    ds.add("a", 40, 30, Some(TWO));
    ds.add("b", 20, 20, Some("1 0.2 0.2 0.8 0.2 0.5 0.7\n"));
    let out = ds.augment(&["--transform", "vflip", "--threshold", "0"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("a: kept 2 dismissed 0"), "{stdout}");
    assert!(stdout.contains("b: kept 1 dismissed 0"), "{stdout}");

    let a = parse_label_file(&read(&ds.out().join("labels/a_aug.txt"))).unwrap();
    assert_eq!(a.len(), 2);
    let v = a.annotations[0].vertices()[0];
    assert!((v.x - 0.1).abs() < 1e-6 && (v.y - 0.9).abs() < 1e-6);
    let img = ImageBuffer::open(&ds.out().join("images/b_aug.png")).unwrap();
    assert_eq!((img.width(), img.height()), (20, 20));
    // Inputs untouched.
    assert_eq!(read(&ds.labels().join("a.txt")), TWO);
}

#[test]
fn crop_threshold_reports_dismissal() {
    let ds = Dataset::new();
    // Instance 0 spans x in [0, 20) px of 100; the crop keeps x >= 18.
    ds.add(
        "scene",
        100,
        100,
        Some("0 0.0 0.3 0.2 0.3 0.2 0.5 0.0 0.5\n1 0.5 0.5 0.7 0.5 0.7 0.7 0.5 0.7\n"),
    );
    let out = ds.augment(&["--transform", "crop=18,0,82,100", "--threshold", "0.2"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("scene: kept 1 dismissed 1"), "{stdout}");
    let labels = parse_label_file(&read(&ds.out().join("labels/scene_aug.txt"))).unwrap();
    assert_eq!(labels.len(), 1);
    assert_eq!(labels.annotations[0].class_id(), 1);
}

#[test]
fn empty_and_missing_labels_write_empty_files() {
    let ds = Dataset::new();
    ds.add("empty", 10, 10, Some(""));
    ds.add("nolabel", 10, 10, None);
    fs::write(ds.labels().join("orphan.txt"), TWO).unwrap();
    let out = ds.augment(&["--transform", "hflip", "--suffix", "_x"]);
    assert!(out.status.success());
    assert_eq!(read(&ds.out().join("labels/empty_x.txt")), "");
    assert_eq!(read(&ds.out().join("labels/nolabel_x.txt")), "");
    assert!(String::from_utf8_lossy(&out.stderr).contains("orphan.txt"));
}

#[test]
fn partial_failure_exits_one_and_continues() {
    let ds = Dataset::new();
    ds.add("good", 10, 10, Some(TWO));
    ds.add("badlabel", 10, 10, Some("0 0.1 0.2 0.3\n"));
    fs::write(ds.images().join("corrupt.png"), b"not a png").unwrap();
    let out = ds.augment(&["--transform", "vflip"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("badlabel: failed") && stderr.contains("line 1"),
        "{stderr}"
    );
    assert!(stderr.contains("corrupt: failed"), "{stderr}");
    assert!(ds.out().join("labels/good_aug.txt").exists());
}

#[test]
fn lenient_clamps_out_of_range_input() {
    let ds = Dataset::new();
    ds.add("a", 10, 10, Some("0 -0.1 0.1 0.5 0.1 0.5 1.2\n"));
    assert_eq!(ds.augment(&["--transform", "vflip"]).status.code(), Some(1));
    let out = ds.augment(&["--transform", "vflip", "--lenient"]);
    assert!(out.status.success());
}

#[test]
fn usage_errors_exit_two() {
    let ds = Dataset::new();
    ds.add("a", 10, 10, Some(TWO));
    for extra in [
        &["--transform", "warp"][..],
        &["--transform", "vflip", "--threshold", "1.5"],
        &["--transform", "vflip", "--jobs", "0"],
        &[],
    ] {
        assert_eq!(ds.augment(extra).status.code(), Some(2), "{extra:?}");
    }
    // Output directory overlapping the inputs.
    let root = ds.root.to_str().unwrap().to_string();
    let out = polyaug(&[
        "augment",
        "--images",
        ds.images().to_str().unwrap(),
        "--labels",
        ds.labels().to_str().unwrap(),
        "--out",
        &root,
        "--transform",
        "vflip",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        polyaug(&["bench", "--n-images", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn bench_text_and_json() {
    let out = polyaug(&["bench"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("polygon") && text.contains("mask") && text.contains("space ratio"));

    let out = polyaug(&[
        "bench",
        "--n-images",
        "2",
        "--size",
        "64",
        "--transform",
        "rotate=15",
        "--json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["dataset"]["n_images"], 2);
    assert_eq!(v["transform"], "rotate=15");
    assert!(v["polygon"]["annotation_bytes"].as_u64().unwrap() > 0);
    assert!(v["mask"]["peak_transient_bytes"].as_u64().unwrap() > 0);
}

// The byte-level entry point must reproduce the CLI output exactly; it is
// the surface scripting bindings call.
#[test]
fn byte_entry_point_matches_cli() {
    let ds = Dataset::new();
    let label = "2 0.1 0.1 0.6 0.2 0.5 0.8 0.15 0.7\n0 0.7 0.7 0.95 0.7 0.9 0.95\n";
    ds.add("img7", 64, 48, Some(label));
    let specs = ["crop=0..10,0..8,50,40", "rotate=-20..20"];
    let out = ds.augment(&[
        "--transform",
        specs[0],
        "--transform",
        specs[1],
        "--threshold",
        "0.3",
        "--seed",
        "11",
    ]);
    assert!(out.status.success());

    let spec = TransformSpec::parse_chain(&specs.join(";")).unwrap();
    let req = AugmentRequest {
        transform: &spec,
        threshold: 0.3,
        seed: 11,
        stem: "img7",
        mode: ParseMode::Strict,
    };
    let image_bytes = fs::read(ds.images().join("img7.png")).unwrap();
    let got = augment_bytes(&image_bytes, label, &req).unwrap();
    assert_eq!(got.labels, read(&ds.out().join("labels/img7_aug.txt")));
    assert_eq!(
        got.png,
        fs::read(ds.out().join("images/img7_aug.png")).unwrap()
    );
}
