//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rasterflow::geometry::Axis;
use rasterflow::netgraph::presets::{self, RandomGraphOptions, OUTPUT};
use rasterflow::netgraph::{derive_fields, validate_fields, ActivationKind, GraphBuilder, Padding, Tensor};
use rasterflow::pipeline::{ExecMode, ImageSource, MemorySink, MemorySource, SplitStrategy};
use rasterflow::raster::{read_header, write_raster, PixelData, RasterReader};
use rasterflow::serve::{ServeConfig, ServeMode};
use rasterflow::{DataType, Extent, FieldSpec, GeoInfo, ImageRegion, ModelGraph, PixelBuffer};
use rasterflow_cli::args::SampleArgs;
use rasterflow_cli::bench::{fits, run_benchmark, BenchPlan};
use rasterflow_cli::demo::random_image;
use rasterflow_cli::sample::cmd_sample;
use rasterflow_cli::serve::{cmd_serve, run_serve, FieldsChoice, ServeJob};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("streaming invariance", streaming_invariance),
        ("field derivation oracle", field_oracle),
        ("declared two-input serving", declared_two_input),
        ("linearity", linearity),
        ("memory budget", memory_budget),
        ("patch format", patch_format),
        ("mode equivalence", mode_equivalence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn f32s(buf: &PixelBuffer) -> &[f32] {
    match buf.data() {
        PixelData::F32(v) => v,
        _ => panic!("expected f32 pixels"),
    }
}

fn single_config(graph: ModelGraph, mode: ServeMode) -> ServeConfig<f32> {
    let spec = derive_fields(&graph, "image", OUTPUT).unwrap();
    ServeConfig::new(mode, Arc::new(graph), spec, vec!["image".into()], OUTPUT).unwrap()
}

fn serve_memory(
    config: &ServeConfig<f32>,
    img: &PixelBuffer,
    split: SplitStrategy,
    mode: ExecMode,
) -> (PixelBuffer, GeoInfo) {
    let geo = GeoInfo::new((100.0, 200.0), (2.0, -2.0), "");
    let src: Arc<dyn ImageSource> = Arc::new(MemorySource::new("image", img.clone(), geo).unwrap());
    let mut sink = MemorySink::new();
    run_serve(config.clone(), vec![src], &mut sink, split, mode, None).unwrap();
    let geo = sink.geo().unwrap().clone();
    (sink.into_image().unwrap(), geo)
}

fn unit_scale(spec: &FieldSpec, allowed: &[u64]) -> bool {
    Axis::BOTH.iter().all(|&a| {
        let f = spec.scale(a);
        *f.denom() == 1 && allowed.contains(f.numer())
    })
}

fn streaming_invariance() -> Result<String, String> {
    let mut cases = 0;
    let mut seed = 0u64;
    let mut kinds = [0usize; 3];
    while cases < 200 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = RandomGraphOptions {
            transposed_tail: rng.gen(),
            ..RandomGraphOptions::default()
        };
        let graph: ModelGraph = presets::random_graph(&mut rng, &opts).unwrap();
        let spec = derive_fields(&graph, "image", OUTPUT).unwrap();
        let r = spec.reference_receptive();
        if r.rows > 32 || r.cols > 32 || !unit_scale(&spec, &[1, 2]) {
            continue;
        }
        let rows = rng.gen_range(r.rows..=512);
        let cols = rng.gen_range(r.cols..=512);
        let ch = graph.input_channels("image").unwrap();
        let img = random_image(Extent::new(rows, cols), ch, DataType::F32, seed);
        let config = ServeConfig::new(
            ServeMode::FullyConvolutional,
            Arc::new(graph),
            spec,
            vec!["image".into()],
            OUTPUT,
        )
        .unwrap();
        let kind = cases % 3;
        let split = match kind {
            0 => SplitStrategy::Striped(rng.gen_range(1..64)),
            1 => SplitStrategy::Tiled(rng.gen_range(1..160), rng.gen_range(1..160)),
            _ => SplitStrategy::MemoryBudget(rng.gen_range(4_000..2_000_000)),
        };
        let mode = if cases % 2 == 0 {
            ExecMode::Sequential
        } else {
            ExecMode::Pipelined
        };
        let (whole, whole_geo) = serve_memory(&config, &img, SplitStrategy::Whole, ExecMode::Sequential);
        let (streamed, streamed_geo) = serve_memory(&config, &img, split, mode);
        ensure(whole == streamed && whole_geo == streamed_geo, || {
            format!("seed {seed}: {split} ({mode:?}) differs from whole on {rows}x{cols}")
        })?;
        kinds[kind] += 1;
        cases += 1;
    }
    Ok(format!(
        "{cases} cases bit-identical (striped {}, tiled {}, budget {})",
        kinds[0], kinds[1], kinds[2]
    ))
}

/// Input rows (or columns) whose perturbation changes each output row (or
/// column), reduced to per-block bounds, checked against the derived window
/// `[k * step, k * step + r)`.
fn dependency_bounds_match(
    graph: &rasterflow::netgraph::ModelGraph<f64>,
    base: &Tensor<f64>,
    out0: &Tensor<f64>,
    spec: &FieldSpec,
    axis: Axis,
) -> Result<(), String> {
    let n = base.rows();
    let ch = base.channels();
    let e = spec.expression().get(axis);
    let r = spec.reference_receptive().get(axis);
    let d = spec.step().get(axis);
    let out_len = match axis {
        Axis::Row => out0.rows(),
        Axis::Col => out0.cols(),
    };
    let blocks = out_len / e;
    let mut lo = vec![usize::MAX; blocks];
    let mut hi = vec![0usize; blocks];
    for p in 0..n {
        let mut t = base.clone();
        for q in 0..n {
            let (row, col) = if axis == Axis::Row { (p, q) } else { (q, p) };
            for c in 0..ch {
                let i = t.index(0, row, col, c);
                t.data_mut()[i] += 1.0;
            }
        }
        let out = graph.run(vec![("image".into(), t)], &[OUTPUT], None).unwrap().remove(0);
        for (i, (a, b)) in out.data().iter().zip(out0.data()).enumerate() {
            if a != b {
                let px = i / out.channels();
                let o = if axis == Axis::Row {
                    px / out.cols()
                } else {
                    px % out.cols()
                };
                let k = o / e;
                lo[k] = lo[k].min(p);
                hi[k] = hi[k].max(p);
            }
        }
    }
    for k in 0..blocks {
        ensure(lo[k] == k * d && hi[k] == k * d + r - 1, || {
            format!(
                "{axis:?} block {k}: dependencies [{}, {}], derived [{}, {}]",
                lo[k],
                hi[k],
                k * d,
                k * d + r - 1
            )
        })?;
    }
    Ok(())
}

fn field_oracle() -> Result<String, String> {
    const N: usize = 64;
    let mut checked = 0;
    let mut seed = 1000u64;
    while checked < 24 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = RandomGraphOptions {
            positive: true,
            transposed_tail: rng.gen(),
            ..RandomGraphOptions::default()
        };
        let graph = presets::random_graph::<f64>(&mut rng, &opts).unwrap();
        let spec = derive_fields(&graph, "image", OUTPUT).unwrap();
        let (r, step) = (spec.reference_receptive(), spec.step());
        if r.rows + step.rows > N || r.cols + step.cols > N {
            continue;
        }
        let ch = graph.input_channels("image").unwrap();
        let base = Tensor::from_fn([1, N, N, ch], |_| rng.gen_range(0.5..1.5));
        let out0 = graph
            .run(vec![("image".into(), base.clone())], &[OUTPUT], None)
            .unwrap()
            .remove(0);
        for axis in Axis::BOTH {
            dependency_bounds_match(&graph, &base, &out0, &spec, axis)
                .map_err(|e| format!("seed {seed} {spec}: {e}"))?;
        }
        // Shifting the input by one step shifts the output by one block.
        let e = spec.expression();
        let shifted = base.slice_spatial(0, step.rows, step.cols, N - step.rows, N - step.cols);
        let out1 = graph
            .run(vec![("image".into(), shifted)], &[OUTPUT], None)
            .unwrap()
            .remove(0);
        for i in 0..out1.rows() {
            for j in 0..out1.cols() {
                for c in 0..out1.channels() {
                    ensure(out1.at(0, i, j, c) == out0.at(0, i + e.rows, j + e.cols, c), || {
                        format!("seed {seed} {spec}: shift by {step} is not a shift by {e} at ({i}, {j})")
                    })?;
                }
            }
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} random graphs match receptive bounds and step exactly"
    ))
}

fn declared_two_input() -> Result<String, String> {
    let fcn = presets::fcn_80_16::<f32>("image", 4, 2, 5).unwrap();
    let declared = FieldSpec::parse_with_default_input("rf=80x80,ef=16x16,sf=1", "image").unwrap();
    let report = validate_fields(&fcn, &declared, OUTPUT);
    ensure(report.passed, || format!("r=80 e=16 f=1 rejected:\n{report}"))?;

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (cb, fb, classes) = (5, 4, 3);
    let graph = presets::hybrid::<f32>(("coarse", cb), ("fine", fb), classes, 11).unwrap();
    graph.save(d.join("hybrid")).unwrap();
    let coarse_geo = GeoInfo::new((5.0, -5.0), (10.0, -10.0), "");
    let fine_geo = GeoInfo::new((0.6, -0.6), (1.5, -1.5), "");
    let coarse = random_image(Extent::new(11, 13), cb, DataType::F32, 1);
    let fine = random_image(Extent::new(80, 90), fb, DataType::U16, 2);
    write_raster(d.join("coarse.rfraw"), &coarse, coarse_geo.clone()).unwrap();
    write_raster(d.join("fine.rfraw"), &fine, fine_geo.clone()).unwrap();
    let job = ServeJob {
        inputs: vec![
            (Some("coarse".into()), d.join("coarse.rfraw")),
            (Some("fine".into()), d.join("fine.rfraw")),
        ],
        model: d.join("hybrid"),
        fields: FieldsChoice::Declared("rf=coarse:1x1+fine:25x25,ef=1x1,sf=1,ref=coarse".into()),
        node: None,
        mode: ServeMode::PatchBased,
        split: SplitStrategy::Striped(2),
        batch: 5,
        output: d.join("out.rfraw"),
        exec_mode: ExecMode::Pipelined,
        quiet: true,
    };
    cmd_serve(&job).map_err(|e| e.to_string())?;
    let reader = RasterReader::open(d.join("out.rfraw")).unwrap();
    let out_geo = reader.header().geo.clone();
    let out = reader.read_all().unwrap();

    let mut compared = 0;
    let mut worst = 0.0f32;
    for row in 0..coarse.region().rows {
        for col in 0..coarse.region().cols {
            let (x, y) = coarse_geo.pixel_to_world(col as f64, row as f64);
            let u = (x - fine_geo.origin_x) / fine_geo.spacing_x;
            let v = (y - fine_geo.origin_y) / fine_geo.spacing_y;
            assert!(
                (u.fract() - 0.5).abs() > 1e-3 && (v.fract() - 0.5).abs() > 1e-3,
                "tie in the oracle geometry"
            );
            let (c0, r0) = (u.round() as i64 - 12, v.round() as i64 - 12);
            let fits = c0 >= 0 && r0 >= 0 && c0 + 25 <= 90 && r0 + 25 <= 80;
            let oc = (x - out_geo.origin_x) / out_geo.spacing_x;
            let or = (y - out_geo.origin_y) / out_geo.spacing_y;
            let inside = oc > -0.5
                && or > -0.5
                && oc.round() < out.region().cols as f64
                && or.round() < out.region().rows as f64;
            ensure(fits == inside, || {
                format!("coarse pixel ({col}, {row}): window fits {fits}, output covers {inside}")
            })?;
            if !fits {
                continue;
            }
            let feeds = vec![
                (
                    "coarse".to_string(),
                    Tensor::new(
                        [1, 1, 1, cb],
                        coarse
                            .crop(&ImageRegion::new(col as i64, row as i64, 1, 1))
                            .unwrap()
                            .values_as(),
                    )
                    .unwrap(),
                ),
                (
                    "fine".to_string(),
                    Tensor::new(
                        [1, 25, 25, fb],
                        fine.crop(&ImageRegion::new(c0, r0, 25, 25)).unwrap().values_as(),
                    )
                    .unwrap(),
                ),
            ];
            let want = graph.run(feeds, &[OUTPUT], None).unwrap().remove(0);
            for ch in 0..classes {
                let got = out.get(oc.round() as i64, or.round() as i64, ch) as f32;
                worst = worst.max((got - want.data()[ch]).abs());
            }
            compared += 1;
        }
    }
    ensure(compared == out.region().pixel_count() && compared > 0, || {
        format!("{compared} oracle pixels for a {} output", out.region())
    })?;
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!(
        "r=80/e=16/f=1 validates; two-input patch serving matches {compared} per-patch forwards (max dev {worst:e})"
    ))
}

fn linearity() -> Result<String, String> {
    let mut plan = BenchPlan::builtin(4, 3).unwrap();
    plan.sizes = vec![256, 512, 768, 1024];
    plan.strategies = vec![
        SplitStrategy::Whole,
        SplitStrategy::Striped(64),
        SplitStrategy::Tiled(256, 128),
        SplitStrategy::MemoryBudget(16 << 20),
    ];
    plan.repeats = 5;
    let rows = run_benchmark(&plan).map_err(|e| e.to_string())?;
    let (lo, hi) = (
        rows.iter().map(|r| r.pixels).min().unwrap(),
        rows.iter().map(|r| r.pixels).max().unwrap(),
    );
    ensure(hi >= 16 * lo, || format!("pixel range {lo}..{hi} spans less than 16x"))?;
    let mut summary = Vec::new();
    for (name, r2) in fits(&rows) {
        let r2 = r2.ok_or_else(|| format!("{name}: no fit"))?;
        ensure(r2 >= 0.95, || format!("{name}: R^2 {r2:.4} < 0.95"))?;
        summary.push(format!("{name} {r2:.4}"));
    }
    Ok(format!("output pixels {lo}..{hi}, R^2: {}", summary.join(", ")))
}

fn memory_budget() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let img = random_image(Extent::square(2048), 4, DataType::F32, 9);
    write_raster(d.join("big.rfraw"), &img, GeoInfo::default()).unwrap();
    let input_bytes = std::fs::metadata(d.join("big.rfraw")).unwrap().len() as usize;
    drop(img);
    presets::small_fcn::<f32>("image", 4, 3, 4)
        .unwrap()
        .save(d.join("fcn"))
        .unwrap();
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for budget in [4_000_000usize, 64_000_000] {
        ensure(input_bytes > budget, || {
            format!("input of {input_bytes} B fits the {budget} B budget")
        })?;
        let job = ServeJob {
            inputs: vec![(None, d.join("big.rfraw"))],
            model: d.join("fcn"),
            fields: FieldsChoice::Auto,
            node: None,
            mode: ServeMode::FullyConvolutional,
            split: SplitStrategy::MemoryBudget(budget),
            batch: 64,
            output: d.join(format!("out{budget}.rfraw")),
            exec_mode: ExecMode::Sequential,
            quiet: true,
        };
        let report = cmd_serve(&job).map_err(|e| e.to_string())?;
        let s = &report.stats;
        let row = s.footprint * s.info.cols;
        ensure(s.regions > 1, || format!("budget {budget}: not streamed"))?;
        ensure(s.peak_bytes <= budget + row, || {
            format!("budget {budget}: peak {} > budget + one row {row}", s.peak_bytes)
        })?;
        summary.push(format!(
            "B={budget}: peak {} over {} stripes of {}",
            s.peak_bytes,
            s.regions,
            s.stripe_height.unwrap_or(0)
        ));
        outputs.push(std::fs::read(&job.output).unwrap());
    }
    ensure(outputs[0] == outputs[1], || "outputs differ between budgets".into())?;
    Ok(format!("{input_bytes} B input; {}", summary.join("; ")))
}

fn patch_format() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (rows, cols, bands) = (120usize, 97usize, 4usize);
    let img = random_image(Extent::new(rows, cols), bands, DataType::F32, 5);
    write_raster(d.join("src.rfraw"), &img, GeoInfo::default()).unwrap();
    let args = SampleArgs {
        input: d.join("src.rfraw"),
        patch: Extent::square(25),
        grid: None,
        random: Some(10),
        positions: None,
        seed: 7,
        output: d.join("patches.rfraw"),
        labels: None,
        save_positions: Some(d.join("pos.txt")),
    };
    cmd_sample(&args).map_err(|e| e.to_string())?;
    let h = read_header(&d.join("patches.rfraw")).unwrap();
    ensure((h.rows, h.cols, h.channels) == (250, 25, 4), || {
        format!("patch image is {}x{}x{}", h.rows, h.cols, h.channels)
    })?;

    let src = std::fs::read(d.join("src.rfraw")).unwrap();
    let patches = std::fs::read(d.join("patches.rfraw")).unwrap();
    let pixel = bands * 4;
    let positions: Vec<(usize, usize)> = std::fs::read_to_string(d.join("pos.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace().map(|v| v.parse::<usize>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    ensure(positions.len() == 10, || format!("{} positions", positions.len()))?;
    for (i, &(c, r)) in positions.iter().enumerate() {
        for dr in 0..25 {
            let from = ((r - 12 + dr) * cols + (c - 12)) * pixel;
            let to = (i * 25 + dr) * 25 * pixel;
            ensure(src[from..from + 25 * pixel] == patches[to..to + 25 * pixel], || {
                format!("patch {i} at ({c}, {r}) row {dr} differs from the source")
            })?;
        }
    }
    Ok("10 patches of 25x25x4 -> 250x25x4, every row block equals its source window".into())
}

fn stride_one_graph(rng: &mut ChaCha8Rng) -> ModelGraph {
    let mut g = GraphBuilder::new();
    let mut h = g.input("image", rng.gen_range(1..5));
    for _ in 0..rng.gen_range(1..5) {
        let k = Extent::new(rng.gen_range(1..6), rng.gen_range(1..6));
        let cout = rng.gen_range(1..5);
        let n = k.pixel_count() * g.channels(h) * cout;
        let w = (0..n).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let b = (0..cout).map(|_| rng.gen_range(-0.1..0.1)).collect();
        h = g.conv(h, k, Extent::square(1), Padding::Valid, cout, w, b);
        let act = [ActivationKind::Relu, ActivationKind::Tanh, ActivationKind::Sigmoid][rng.gen_range(0..3)];
        h = g.activation(h, act);
    }
    g.output(OUTPUT, h);
    g.build().unwrap()
}

fn mode_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f32;
    let cases = 30;
    for case in 0..cases {
        let graph = stride_one_graph(&mut rng);
        let ch = graph.input_channels("image").unwrap();
        let img = random_image(
            Extent::new(rng.gen_range(20..80), rng.gen_range(20..80)),
            ch,
            DataType::F32,
            case,
        );
        let batch = rng.gen_range(1..100);
        let full = single_config(graph.clone(), ServeMode::FullyConvolutional);
        let patch = single_config(graph, ServeMode::PatchBased).with_batch(batch).unwrap();
        let (a, ga) = serve_memory(
            &full,
            &img,
            SplitStrategy::Striped(rng.gen_range(1..20)),
            ExecMode::Sequential,
        );
        let (b, gb) = serve_memory(
            &patch,
            &img,
            SplitStrategy::Tiled(rng.gen_range(1..40), rng.gen_range(1..40)),
            ExecMode::Pipelined,
        );
        ensure(a.region() == b.region() && ga == gb, || {
            format!("case {case}: {} vs {}", a.region(), b.region())
        })?;
        let dev = f32s(&a)
            .iter()
            .zip(f32s(&b))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f32::max);
        ensure(dev <= 1e-5, || format!("case {case}: deviation {dev:e}"))?;
        worst = worst.max(dev);
    }
    Ok(format!("{cases} stride-1 graphs, max |patch - fullconv| = {worst:e}"))
}
