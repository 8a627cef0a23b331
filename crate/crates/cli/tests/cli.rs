use std::path::Path;
use std::process::{Command, Output};

use rasterflow::raster::{read_header, write_raster};
use rasterflow::{DataType, Extent, GeoInfo};
use rasterflow_cli::bench::{fits, r_squared, write_csv, BenchRow};
use rasterflow_cli::demo::random_image;

fn rf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rasterflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rf(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn raster(dir: &Path, name: &str, size: &str, bands: &str) {
    ok(
        dir,
        &[
            "make-demo",
            "raster",
            "--size",
            size,
            "--bands",
            bands,
            "--seed",
            "3",
            "--output",
            name,
        ],
    );
}

fn model(dir: &Path, name: &str, kind: &str) {
    ok(
        dir,
        &[
            "make-demo",
            "model",
            "--kind",
            kind,
            "--channels",
            "3",
            "--output",
            name,
        ],
    );
}

#[test]
fn identity_serving_copies_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    raster(d, "in.rfraw", "37x29", "3");
    model(d, "id", "identity");
    for split in ["whole", "striped:5", "tiled:7x4", "budget:2K"] {
        ok(
            d,
            &[
                "serve",
                "--input",
                "in.rfraw",
                "--model",
                "id",
                "--split",
                split,
                "-q",
                "--output",
                "out.rfraw",
            ],
        );
        assert_eq!(
            std::fs::read(d.join("out.rfraw")).unwrap(),
            std::fs::read(d.join("in.rfraw")).unwrap(),
            "{split}"
        );
    }
}

#[test]
fn striped_matches_whole_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    raster(d, "in.rfraw", "211x180", "3");
    model(d, "fcn", "fcn80");
    ok(
        d,
        &[
            "serve",
            "--input",
            "image=in.rfraw",
            "--model",
            "fcn",
            "--split",
            "whole",
            "-q",
            "--output",
            "whole.rfraw",
        ],
    );
    let whole = std::fs::read(d.join("whole.rfraw")).unwrap();
    let header = read_header(&d.join("whole.rfraw")).unwrap();
    assert_eq!((header.rows, header.cols, header.channels), (144, 112, 2));
    for extra in [
        &["--split", "striped:16"][..],
        &["--split", "tiled:48x20", "--prefetch"],
        &["--split", "budget:300K"],
    ] {
        let mut args = vec![
            "serve",
            "--input",
            "image=in.rfraw",
            "--model",
            "fcn",
            "-q",
            "--output",
            "s.rfraw",
        ];
        args.extend_from_slice(extra);
        ok(d, &args);
        assert_eq!(std::fs::read(d.join("s.rfraw")).unwrap(), whole, "{extra:?}");
    }
    ok(
        d,
        &[
            "serve",
            "--input",
            "in.rfraw",
            "--model",
            "fcn",
            "--mode",
            "patch",
            "--fields",
            "rf=80x80,ef=16x16,sf=1",
            "--batch",
            "7",
            "-q",
            "--output",
            "p.rfraw",
        ],
    );
    assert_eq!(read_header(&d.join("p.rfraw")).unwrap().bounds(), header.bounds());
}

#[test]
fn serve_failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    raster(d, "in.rfraw", "100x100", "3");
    model(d, "fcn", "fcn80");

    let out = rf(
        d,
        &[
            "serve", "--input", "in.rfraw", "--model", "missing", "--output", "o.rfraw",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ngraph.json"));

    let out = rf(
        d,
        &[
            "serve",
            "--input",
            "nothere.rfraw",
            "--model",
            "fcn",
            "--output",
            "o.rfraw",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothere.rfraw"));

    let out = rf(
        d,
        &[
            "serve",
            "--input",
            "in.rfraw",
            "--model",
            "fcn",
            "--fields",
            "rf=80x80,ef=8x8,sf=1",
            "--output",
            "o.rfraw",
        ],
    );
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));

    let out = rf(
        d,
        &[
            "serve",
            "--input",
            "other=in.rfraw",
            "--model",
            "fcn",
            "--output",
            "o.rfraw",
        ],
    );
    assert_eq!(code(&out), 2);
    let out = rf(
        d,
        &[
            "serve",
            "--input",
            "in.rfraw",
            "--model",
            "fcn",
            "--split",
            "striped:0",
            "--output",
            "o.rfraw",
        ],
    );
    assert_eq!(code(&out), 2);
    let out = rf(d, &["serve", "--bogus"]);
    assert_eq!(code(&out), 2);

    model(d, "same", "same-padding");
    let out = rf(
        d,
        &[
            "serve",
            "--input",
            "in.rfraw",
            "--model",
            "same",
            "--fields",
            "rf=3x3,ef=1x1,sf=1",
            "--output",
            "o.rfraw",
        ],
    );
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn two_input_model_serves_with_named_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    model(d, "hy", "hybrid");
    ok(
        d,
        &[
            "make-demo",
            "raster",
            "--size",
            "12x10",
            "--bands",
            "3",
            "--spacing",
            "4",
            "--output",
            "coarse.rfraw",
        ],
    );
    ok(
        d,
        &[
            "make-demo",
            "raster",
            "--size",
            "48x40",
            "--bands",
            "3",
            "--output",
            "fine.rfraw",
        ],
    );
    let fields = "rf=coarse:1x1+fine:25x25,ef=1x1,sf=1,ref=coarse";
    let serve = |mode: &str, fine: &str| {
        rf(
            d,
            &[
                "serve",
                "--input",
                "coarse=coarse.rfraw",
                "--input",
                fine,
                "--model",
                "hy",
                "--mode",
                mode,
                "--fields",
                fields,
                "-q",
                "--output",
                "o.rfraw",
            ],
        )
    };
    let out = serve("patch", "fine=fine.rfraw");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let h = read_header(&d.join("o.rfraw")).unwrap();
    assert_eq!((h.rows, h.cols, h.channels), (6, 4, 2));
    let out = serve("fullconv", "fine=fine.rfraw");
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("patch mode"));

    ok(
        d,
        &[
            "make-demo",
            "raster",
            "--size",
            "40x40",
            "--bands",
            "3",
            "--spacing",
            "4",
            "--output",
            "same.rfraw",
        ],
    );
    let out = rf(
        d,
        &[
            "serve",
            "--input",
            "coarse=same.rfraw",
            "--input",
            "fine=same.rfraw",
            "--model",
            "hy",
            "--mode",
            "fullconv",
            "--fields",
            fields,
            "-q",
            "--output",
            "o.rfraw",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_header(&d.join("o.rfraw")).unwrap().rows, 16);
    let out = rf(
        d,
        &[
            "serve",
            "--input",
            "coarse.rfraw",
            "--input",
            "fine.rfraw",
            "--model",
            "hy",
            "--output",
            "o.rfraw",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn sampling_grid_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    raster(d, "in.rfraw", "100x100", "3");
    ok(
        d,
        &[
            "sample",
            "--input",
            "in.rfraw",
            "--patch",
            "5x5",
            "--grid",
            "10",
            "--output",
            "g.rfraw",
            "--save-positions",
            "g.txt",
        ],
    );
    let h = read_header(&d.join("g.rfraw")).unwrap();
    let per_axis = (2..=97).step_by(10).count();
    assert_eq!((h.rows, h.cols, h.channels), (per_axis * per_axis * 5, 5, 3));
    assert_eq!(h.rows, 500);
    let text = std::fs::read_to_string(d.join("g.txt")).unwrap();
    assert!(text.lines().any(|l| l == "92 92"));

    for name in ["a.rfraw", "b.rfraw"] {
        ok(
            d,
            &[
                "sample", "--input", "in.rfraw", "--patch", "7x3", "--random", "20", "--seed", "7", "--output", name,
            ],
        );
    }
    assert_eq!(
        std::fs::read(d.join("a.rfraw")).unwrap(),
        std::fs::read(d.join("b.rfraw")).unwrap()
    );
    ok(
        d,
        &[
            "sample", "--input", "in.rfraw", "--patch", "7x3", "--random", "20", "--seed", "8", "--output", "c.rfraw",
        ],
    );
    assert_ne!(
        std::fs::read(d.join("a.rfraw")).unwrap(),
        std::fs::read(d.join("c.rfraw")).unwrap()
    );

    let out = rf(
        d,
        &[
            "sample", "--input", "in.rfraw", "--patch", "101x5", "--grid", "1", "--output", "x.rfraw",
        ],
    );
    assert_eq!(code(&out), 2);
    let out = rf(
        d,
        &["sample", "--input", "in.rfraw", "--patch", "5x5", "--output", "x.rfraw"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn sampling_from_a_labelled_position_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let img = random_image(Extent::new(20, 30), 2, DataType::U16, 1);
    write_raster(d.join("in.rfraw"), &img, GeoInfo::default()).unwrap();
    std::fs::write(d.join("pos.txt"), "4 5 3\n10 12 1\n").unwrap();
    ok(
        d,
        &[
            "sample",
            "--input",
            "in.rfraw",
            "--patch",
            "3x3",
            "--positions",
            "pos.txt",
            "--output",
            "p.rfraw",
            "--labels",
            "l.rfraw",
        ],
    );
    let labels = std::fs::read(d.join("l.rfraw")).unwrap();
    assert_eq!(labels, [3u8, 0, 1, 0]);
    let patches = std::fs::read(d.join("p.rfraw")).unwrap();
    assert_eq!(patches.len(), 2 * 9 * 2 * 2);
    // First row of the first patch: columns 3..6 of row 4.
    let row4 = &img.data().to_le_bytes()[(4 * 30 + 3) * 4..(4 * 30 + 6) * 4];
    assert_eq!(&patches[..12], row4);
}

#[test]
fn derive_fields_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    model(d, "cpc", "conv-pool-conv");
    let out = ok(d, &["derive-fields", "--model", "cpc"]);
    assert!(out.contains("image (reference): r=8x8 e=1x1 f=2"), "{out}");
    assert!(out.contains("validation passed"));

    model(d, "id", "identity");
    let out = ok(d, &["derive-fields", "--model", "id"]);
    assert!(out.contains("r=1x1 e=1x1 f=1"), "{out}");

    model(d, "fcn", "fcn80");
    let out = ok(d, &["derive-fields", "--model", "fcn", "--expression", "32x32"]);
    assert!(out.contains("r=96x96 e=32x32 f=1"), "{out}");

    let out = rf(
        d,
        &["derive-fields", "--model", "fcn", "--fields", "rf=80x80,ef=16x16,sf=2"],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));

    model(d, "same", "same-padding");
    let out = rf(d, &["derive-fields", "--model", "same"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("validation failed"));
}

#[test]
fn benchmark_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(
        d,
        &[
            "benchmark",
            "--sizes",
            "96",
            "--split",
            "whole,striped:16",
            "--bands",
            "2",
        ],
    );
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("pixels,strategy,stripe,seconds,peak_bytes"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("1024,whole,32,"), "{}", rows[0]);
    assert!(rows[1].starts_with("1024,striped:16,16,"), "{}", rows[1]);

    ok(
        d,
        &[
            "benchmark",
            "--sizes",
            "96,128",
            "--split",
            "whole",
            "--bands",
            "1",
            "--csv",
            "b.csv",
        ],
    );
    let csv = std::fs::read_to_string(d.join("b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let out = rf(
        d,
        &[
            "benchmark",
            "--sizes",
            "96",
            "--split",
            "whole",
            "--bands",
            "1",
            "--csv",
            "c.csv",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("whole: R^2 = n/a"));
}

#[test]
fn fit_statistics() {
    assert_eq!(r_squared(&[(1.0, 2.0)]), None);
    assert_eq!(r_squared(&[(1.0, 2.0), (1.0, 3.0)]), None);
    let line: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect();
    assert!((r_squared(&line).unwrap() - 1.0).abs() < 1e-12);
    // y = x^2 on 0..4: slope 4, intercept -2, SS_res 14, SS_tot 174.
    let quad: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, (i * i) as f64)).collect();
    assert!((r_squared(&quad).unwrap() - (1.0 - 14.0 / 174.0)).abs() < 1e-12);

    let rows = vec![
        BenchRow {
            pixels: 10,
            strategy: "a".into(),
            stripe: 1,
            seconds: 1.0,
            peak_bytes: 0,
        },
        BenchRow {
            pixels: 10,
            strategy: "b".into(),
            stripe: 1,
            seconds: 1.0,
            peak_bytes: 0,
        },
        BenchRow {
            pixels: 20,
            strategy: "a".into(),
            stripe: 1,
            seconds: 2.0,
            peak_bytes: 0,
        },
    ];
    let f = fits(&rows);
    assert_eq!(f[0].0, "a");
    assert!((f[0].1.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(f[1], ("b".to_string(), None));
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    assert!(String::from_utf8(buf)
        .unwrap()
        .starts_with("pixels,strategy,stripe,seconds,peak_bytes\n10,a,1,1.0,0\n"));
}
