//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use dsex::bsim::{self, BsConfig, LatencyEvaluator, ModelParams};
use dsex::cli::{self, RunArgs, RunManifest};
use dsex::metrics::{
    apply_transform, Cache, CommandSpec, EvalErrorKind, Evaluator, EvaluatorRef, ExprEvaluator,
    ExternalCommand, FailPolicy, FnEvaluator, MetricExpr, MetricsError,
};
use dsex::space::{
    build_space, project_space, DesignSpace, ParamDomain, ParamSpec, Point, PointRef, Schema,
};
use dsex::strategy::{
    two_decimals, ExhaustiveMap, ExhaustivePrune, ExhaustiveSort, GradientSort, KeepSide, Pipeline,
    PipelineStep, QuickPrune, Step, StepContext,
};
use dsex::surrogate::{fixtures, ModelEvaluator};
use dsex::Executor;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn expr(s: &str) -> MetricExpr {
    MetricExpr::parse(s).unwrap()
}

fn grid(cards: &[usize]) -> DesignSpace {
    let params = cards
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            ParamSpec::new(&format!("x{k}"), ParamDomain::Linear(0, c as i64 - 1), &[]).unwrap()
        })
        .collect();
    build_space(Schema::new(params).unwrap())
}

fn with_ctx<T>(policy: FailPolicy, f: impl FnOnce(&StepContext<'_>) -> T) -> T {
    let cache = Cache::new();
    let exec = Executor::sequential();
    f(&StepContext {
        cache: &cache,
        exec: &exec,
        policy: &policy,
    })
}

fn c1_cardinality() -> Outcome {
    let schema = Schema::parse(fixtures::DUMMY_SCHEMA).unwrap();
    let full = build_space(schema);
    let resource = project_space(&full, "resource", true).unwrap().len();
    let qos = project_space(&full, "qos", true).unwrap().len();
    check((full.len(), resource, qos) == (459, 153, 51), || {
        format!("got {}/{resource}/{qos}", full.len())
    })?;
    Ok(format!(
        "full {}, resource {resource}, qos {qos}",
        full.len()
    ))
}

fn c2_efficiency() -> Outcome {
    let schema = Arc::new(Schema::parse(fixtures::DUMMY_SCHEMA).unwrap());
    // p1 = 0, p2 = 1, p3 = 4.
    let space = DesignSpace::new(schema, vec![Point::new(vec![0, 0, 0])]).unwrap();
    let synth: EvaluatorRef = Arc::new(FnEvaluator::new("synth", &["freq", "lut_pct"], |_| {
        Ok(vec![247.56, 0.77])
    }));
    let eff: EvaluatorRef =
        Arc::new(ExprEvaluator::single("eff", "eff", "freq / lut_pct").unwrap());
    let out = with_ctx(FailPolicy::Abort, |ctx| {
        let s = ExhaustiveMap::new(vec![synth])
            .apply(&space, ctx)
            .unwrap()
            .space;
        ExhaustiveMap::new(vec![eff]).apply(&s, ctx).unwrap().space
    });
    let p = &out.points()[0];
    let v = p.metric("eff").unwrap();
    let rendered = two_decimals(v);
    check(rendered == "321.50", || format!("rendered {rendered}"))?;
    let shown: f64 = rendered.parse().unwrap();
    check((shown - 321.50).abs() <= 0.005, || format!("{shown}"))?;
    check(out.point_ref(p).raw_values() == vec![0, 1, 4], || {
        "wrong example point".into()
    })?;
    Ok(format!("eff = {v} renders as {rendered}"))
}

/// Best point and evaluation count of hill climbing vs exhaustive on
/// `space` for `model`'s throughput.
fn climb_vs_exhaustive(
    space: &DesignSpace,
    model: dsex::surrogate::ResourceModel,
) -> (Vec<i64>, u64, Vec<i64>, u64) {
    let ev: EvaluatorRef = Arc::new(ModelEvaluator::new(model));
    let policy = FailPolicy::PruneFailed;
    let run = |steps: Vec<PipelineStep>| {
        Pipeline::new(steps)
            .with_fail_policy(policy.clone())
            .run(space, &Cache::new())
            .unwrap()
    };
    let g = run(vec![PipelineStep::new(GradientSort::new(
        vec![ev.clone()],
        expr("throughput"),
        true,
    ))]);
    let e = run(vec![
        PipelineStep::new(ExhaustiveMap::new(vec![ev])),
        PipelineStep::new(ExhaustiveSort::new(vec![], expr("throughput"), false)),
    ]);
    let best = |s: &DesignSpace| s.point_ref(&s.points()[0]).raw_values();
    (
        best(&g.space),
        g.provenance.evaluations,
        best(&e.space),
        e.provenance.evaluations,
    )
}

fn c3_table_structure() -> Outcome {
    let mut notes = Vec::new();
    for (label, (schema, model), budget) in [
        ("fft-like/7", fixtures::fft_like(), 7u64),
        ("fft-like/9", fixtures::fft_like_9(), 9),
    ] {
        let space = build_space(schema);
        let (gb, ge, eb, ee) = climb_vs_exhaustive(&space, model);
        check(gb == eb, || {
            format!("{label}: gradient {gb:?} vs exhaustive {eb:?}")
        })?;
        check(ge <= budget, || format!("{label}: {ge} evaluations"))?;
        notes.push(format!("{label} best {gb:?} in {ge} vs {ee}"));
    }
    let (schema, model) = fixtures::gemm_like();
    let full = build_space(schema);
    let space = with_ctx(FailPolicy::Abort, |ctx| {
        ExhaustivePrune::new(vec![], fixtures::gemm_buildable())
            .apply(&full, ctx)
            .unwrap()
            .space
    });
    check(space.len() == 41, || {
        format!("gemm has {} points", space.len())
    })?;
    let (gb, ge, eb, ee) = climb_vs_exhaustive(&space, model);
    check(gb == eb, || {
        format!("gemm: gradient {gb:?} vs exhaustive {eb:?}")
    })?;
    check(ge <= 15 && ee == 41, || {
        format!("gemm: {ge} vs {ee} evaluations")
    })?;
    notes.push(format!("gemm-like/41 best {gb:?} in {ge} vs {ee}"));
    Ok(notes.join("; "))
}

/// A random keep-predicate over the grid's parameters, closed towards `side`.
fn monotone_predicate(rng: &mut StdRng, cards: &[usize], side: KeepSide) -> String {
    let ge = match side {
        KeepSide::UpwardClosed => ">=",
        KeepSide::DownwardClosed => "<=",
    };
    let d = cards.len();
    let threshold = |rng: &mut StdRng, k: usize| rng.gen_range(0..=cards[k]);
    match rng.gen_range(0..4) {
        0 => {
            let w: Vec<u32> = (0..d).map(|_| rng.gen_range(0..=5)).collect();
            let max: usize = w
                .iter()
                .zip(cards)
                .map(|(w, c)| *w as usize * (c - 1))
                .sum();
            let t = rng.gen_range(0..=max + 1);
            let sum: Vec<String> = w
                .iter()
                .enumerate()
                .map(|(k, w)| format!("{w} * x{k}"))
                .collect();
            format!("{} {ge} {t}", sum.join(" + "))
        }
        1 => {
            let parts: Vec<String> = (0..d)
                .map(|k| format!("x{k} {ge} {}", threshold(rng, k)))
                .collect();
            parts.join(" || ")
        }
        2 => {
            let parts: Vec<String> = (0..d)
                .map(|k| format!("x{k} {ge} {}", threshold(rng, k)))
                .collect();
            parts.join(" && ")
        }
        _ => {
            let a = rng.gen_range(1..=3);
            let b = rng.gen_range(1..=3);
            let t = rng.gen_range(0..=a * (cards[0] - 1) + b * (cards[d - 1] - 1));
            format!(
                "({a} * x0 + {b} * x{} {ge} {t}) && x0 {ge} {}",
                d - 1,
                threshold(rng, 0)
            )
        }
    }
}

fn brute_kept(space: &DesignSpace, keep: &MetricExpr) -> Vec<usize> {
    (0..space.len())
        .filter(|&i| {
            let r = space.at(i);
            keep.eval_bool(&|n| r.lookup(n)).unwrap()
        })
        .collect()
}

fn c4_quick_prune_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst_ratio: f64 = 0.0;
    let mut budget_cases = 0;
    for case in 0..200 {
        let cards: Vec<usize> = if case % 4 == 0 {
            vec![rng.gen_range(10..=12), rng.gen_range(10..=12)]
        } else {
            match rng.gen_range(1..=3) {
                1 => vec![rng.gen_range(1..=12)],
                2 => vec![rng.gen_range(1..=12), rng.gen_range(1..=12)],
                _ => vec![
                    rng.gen_range(1..=12),
                    rng.gen_range(1..=12),
                    rng.gen_range(1..=4),
                ],
            }
        };
        let side = if rng.gen_bool(0.5) {
            KeepSide::UpwardClosed
        } else {
            KeepSide::DownwardClosed
        };
        let text = monotone_predicate(&mut rng, &cards, side);
        let keep = expr(&text);
        let space = grid(&cards);
        let result = with_ctx(FailPolicy::Abort, |ctx| {
            QuickPrune::new(vec![], keep.clone())
                .side(side)
                .search(&space, ctx)
                .unwrap()
        });
        let want = brute_kept(&space, &keep);
        check(result.kept == want, || {
            format!(
                "case {case} {cards:?} {side:?} `{text}`: {} kept vs {}",
                result.kept.len(),
                want.len()
            )
        })?;
        let via_step = with_ctx(FailPolicy::Abort, |ctx| {
            QuickPrune::new(vec![], keep.clone())
                .side(side)
                .apply(&space, ctx)
                .unwrap()
                .space
        });
        let exhaustive = with_ctx(FailPolicy::Abort, |ctx| {
            ExhaustivePrune::new(vec![], keep.clone())
                .apply(&space, ctx)
                .unwrap()
                .space
        });
        let set = |s: &DesignSpace| -> BTreeSet<Vec<usize>> {
            s.points().iter().map(|p| p.coords().to_vec()).collect()
        };
        check(set(&via_step) == set(&exhaustive), || {
            format!("case {case}: step output differs")
        })?;
        if cards.len() == 2 && cards[0] >= 10 && cards[1] >= 10 {
            budget_cases += 1;
            let ratio = result.predicate_evaluations as f64 / space.len() as f64;
            worst_ratio = worst_ratio.max(ratio);
            check(ratio < 0.6, || {
                format!(
                    "case {case} {cards:?} `{text}`: {} of {} evaluated",
                    result.predicate_evaluations,
                    space.len()
                )
            })?;
        }
    }
    Ok(format!(
        "200 predicates equal; worst evaluation ratio on {budget_cases} 2-D grids >= 10x10: {:.0}%",
        worst_ratio * 100.0
    ))
}

fn c5_frontier_definition() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let mut total = 0;
    for case in 0..100 {
        let cards = vec![rng.gen_range(2..=12), rng.gen_range(2..=12)];
        let side = if case % 2 == 0 {
            KeepSide::UpwardClosed
        } else {
            KeepSide::DownwardClosed
        };
        let text = monotone_predicate(&mut rng, &cards, side);
        let keep = expr(&text);
        let space = grid(&cards);
        let kept: BTreeSet<usize> = brute_kept(&space, &keep).into_iter().collect();
        let brute: Vec<usize> = kept
            .iter()
            .copied()
            .filter(|&p| {
                space
                    .neighbour_positions(p, dsex::space::Norm::Linf, 1)
                    .iter()
                    .any(|q| !kept.contains(q))
            })
            .collect();
        let result = with_ctx(FailPolicy::Abort, |ctx| {
            QuickPrune::new(vec![], keep.clone())
                .side(side)
                .search(&space, ctx)
                .unwrap()
        });
        check(result.frontier == brute, || {
            format!(
                "case {case} {cards:?} `{text}`: {:?} vs {:?}",
                result.frontier, brute
            )
        })?;
        total += brute.len();
    }
    Ok(format!("100 instances, {total} frontier points, all equal"))
}

fn c6_gradient_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let mut evals_total = 0;
    let mut points_total = 0;
    for case in 0..100 {
        let dims = rng.gen_range(1..=5);
        let mut cards = Vec::new();
        let mut product = 1;
        for _ in 0..dims {
            let cap = (2000 / product).min(15);
            if cap < 1 {
                break;
            }
            let c = rng.gen_range(1..=cap);
            product *= c;
            cards.push(c);
        }
        let centers: Vec<f64> = cards
            .iter()
            .map(|&c| rng.gen_range(0..c) as f64 + rng.gen_range(-0.4..0.4))
            .collect();
        let weights: Vec<f64> = cards.iter().map(|_| rng.gen_range(0.1..5.0)).collect();
        let f = move |v: &[i64]| -> f64 {
            -v.iter()
                .zip(&centers)
                .zip(&weights)
                .map(|((&x, c), w)| w * (x as f64 - c).powi(2))
                .sum::<f64>()
        };
        let base = grid(&cards);
        let mut points = base.points().to_vec();
        points.shuffle(&mut rng);
        let space = DesignSpace::new(base.schema_arc().clone(), points).unwrap();

        let calls = Arc::new(AtomicUsize::new(0));
        let counter = calls.clone();
        let g = f.clone();
        let ev: EvaluatorRef = Arc::new(FnEvaluator::new(
            "obj",
            &["score"],
            move |p: PointRef<'_>| {
                counter.fetch_add(1, Ordering::SeqCst);
                Ok(vec![g(&p.raw_values())])
            },
        ));
        let out = with_ctx(FailPolicy::Abort, |ctx| {
            GradientSort::new(vec![ev], expr("score"), true)
                .apply(&space, ctx)
                .unwrap()
                .space
        });
        let brute = space
            .points()
            .iter()
            .max_by(|a, b| {
                f(&space.point_ref(a).raw_values()).total_cmp(&f(&space.point_ref(b).raw_values()))
            })
            .unwrap();
        let n = calls.load(Ordering::SeqCst);
        check(out.points()[0].coords() == brute.coords(), || {
            format!(
                "case {case} {cards:?}: {:?} vs {:?}",
                out.points()[0].coords(),
                brute.coords()
            )
        })?;
        check(n <= space.len(), || {
            format!("case {case}: {n} evaluations on {}", space.len())
        })?;
        evals_total += n;
        points_total += space.len();
    }
    Ok(format!(
        "100 objectives, {evals_total} evaluations over {points_total} points"
    ))
}

fn blackscholes_manifest(out: &Path, parallelism: usize) -> RunManifest {
    RunManifest::from_args(&RunArgs {
        manifest: Some(configs().join("blackscholes/manifest.toml")),
        out: Some(out.to_path_buf()),
        parallelism: Some(parallelism),
        seed: Some(42),
        ..RunArgs::default()
    })
    .unwrap()
}

fn c7_parallel_determinism(warm: &mut Option<Cache>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut frames = Vec::new();
    for p in [1, 2, 8] {
        let out = dir.path().join(format!("p{p}"));
        let cache = Cache::new();
        cli::run_with_cache(&blackscholes_manifest(&out, p), &cache).map_err(|e| e.to_string())?;
        if p == 1 {
            *warm = Some(cache);
        }
        let csv = std::fs::read(out.join("frame.csv")).unwrap();
        let jsonl = std::fs::read(out.join("frame.jsonl")).unwrap();
        frames.push((csv, jsonl));
    }
    check(frames[0] == frames[1] && frames[0] == frames[2], || {
        "frames differ between parallelism levels".into()
    })?;
    Ok(format!(
        "frame.csv ({} bytes) and frame.jsonl identical at parallelism 1, 2, 8",
        frames[0].0.len()
    ))
}

fn c8_black_scholes_numerics() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let still = ModelParams {
        mu: 0.0,
        sigma: 0.0,
        ..ModelParams::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.gen_range(8..=32);
        let p = rng.gen_range(8..=32);
        let n = 1u64 << rng.gen_range(5..=10);
        let e = 1u32 << rng.gen_range(1..=6);
        let cfg = BsConfig::new(d, p, n, e)
            .with_model(still)
            .with_seed(rng.gen());
        let cf = bsim::closed_form(&still);
        let err = (bsim::euler_estimate(&cfg).value - cf).abs() / cf;
        let bound = e as f64 * 2f64.powi(1 - p as i32);
        check(err <= bound, || {
            format!("sigma=0 {d}/{p}/{n}/{e}: {err} > {bound}")
        })?;
        worst = worst.max(err / bound);
    }

    let cf = bsim::closed_form(&ModelParams::default());
    for (d, p, e) in [(16u32, 16u32, 8u32), (24, 24, 16), (32, 32, 4)] {
        let means: Vec<f64> = (5..=10)
            .map(|k| {
                (0..32u64)
                    .map(|seed| {
                        let cfg = BsConfig::new(d, p, 1 << k, e).with_seed(seed);
                        (bsim::euler_estimate(&cfg).value - cf).abs() / cf
                    })
                    .sum::<f64>()
                    / 32.0
            })
            .collect();
        check(means.windows(2).all(|w| w[1] <= w[0]), || {
            format!("slice ({d}, {p}, nbEuler {e}): mean |error| {means:?}")
        })?;
    }

    for _ in 0..10 {
        let base = BsConfig::new(
            rng.gen_range(8..=32),
            rng.gen_range(8..=32),
            1 << rng.gen_range(5..=8),
            1 << rng.gen_range(1..=4),
        )
        .with_seed(rng.gen());
        let reference = bsim::euler_estimate(&base);
        for k in 2..=10 {
            let cfg = BsConfig {
                nb_core: 1 << k,
                ..base
            };
            let est = bsim::euler_estimate(&cfg);
            check(est.value.to_bits() == reference.value.to_bits(), || {
                format!("nbCore {} changes the estimate", 1 << k)
            })?;
        }
    }
    let schema = fixtures::blackscholes_schema();
    let qos = bsim::QosEvaluator::new(ModelParams::default(), 42);
    for core in 0..9 {
        let a = qos
            .evaluate(PointRef::new(&schema, &Point::new(vec![4, 8, 1, 2, core])))
            .unwrap();
        let b = qos
            .evaluate(PointRef::new(&schema, &Point::new(vec![4, 8, 1, 2, 0])))
            .unwrap();
        check(a == b, || "qos depends on nbCore".into())?;
    }
    Ok(format!(
        "sigma=0 bound holds (worst {:.2} of bound); mean |error| non-increasing on 3 slices; nbCore-invariant",
        worst
    ))
}

fn c9_throughput_scaling() -> Outcome {
    let schema = fixtures::blackscholes_schema();
    let latency: EvaluatorRef = Arc::new(LatencyEvaluator::default());
    let synth: EvaluatorRef = Arc::new(ModelEvaluator::new(fixtures::bs_synth()));
    let throughput: EvaluatorRef = Arc::new(
        ExprEvaluator::single("throughput", "throughput", "freq_mhz * 1e6 / latency").unwrap(),
    );
    let cache = Cache::new();
    let exec = Executor::sequential();
    let mut pairs = 0;
    // nbCore index 4 is 64 cores, index 3 is 32; nbIteration from 64 up.
    for d in [0, 4, 13, 24] {
        for p in [0, 13, 24] {
            for it in 1..6 {
                for eu in 0..6 {
                    let pts = vec![
                        Point::new(vec![d, p, it, eu, 4]),
                        Point::new(vec![d, p, it, eu, 3]),
                    ];
                    let space = DesignSpace::new(Arc::new(schema.clone()), pts).unwrap();
                    let (out, _) = apply_transform(
                        &space,
                        &[latency.clone(), synth.clone(), throughput.clone()],
                        &cache,
                        &FailPolicy::Abort,
                        &exec,
                    )
                    .unwrap();
                    let t64 = out.points()[0].metric("throughput").unwrap();
                    let t32 = out.points()[1].metric("throughput").unwrap();
                    check(t64 == 2.0 * t32, || {
                        format!("{t64} vs {t32} at {d},{p},{it},{eu}")
                    })?;
                    pairs += 1;
                }
            }
        }
    }
    let row = Point::new(vec![4, 13, 1, 0, 4]);
    let space = DesignSpace::new(
        Arc::new(schema),
        vec![row.clone(), Point::new(vec![4, 13, 1, 0, 3])],
    )
    .unwrap();
    let (out, _) = apply_transform(
        &space,
        &[latency, synth, throughput],
        &cache,
        &FailPolicy::Abort,
        &exec,
    )
    .unwrap();
    Ok(format!(
        "{pairs} pairs exactly x2, e.g. [12, 21, 64, 2, 64] {} vs nbCore 32 {}",
        out.points()[0].metric("throughput").unwrap(),
        out.points()[1].metric("throughput").unwrap()
    ))
}

fn c10_external_protocol() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_dsex");
    let (schema, models) = fixtures::dummy();
    let space = build_space(schema);
    let exec = Executor::new(4);
    for (file, model) in ["models/dummy-estim.toml", "models/dummy-synth.toml"]
        .iter()
        .zip(models)
    {
        let cmd = CommandSpec {
            argv: vec![
                exe.into(),
                "serve-model".into(),
                "--model".into(),
                configs().join(file).display().to_string(),
            ],
            env: Default::default(),
            timeout_s: 60.0,
            produces: model.produces.clone(),
        };
        let external: EvaluatorRef = Arc::new(ExternalCommand::new("external", cmd));
        let inproc: EvaluatorRef = Arc::new(ModelEvaluator::new(model));
        let (a, _) = apply_transform(
            &space,
            &[external],
            &Cache::new(),
            &FailPolicy::Abort,
            &exec,
        )
        .map_err(|e| e.to_string())?;
        let (b, _) =
            apply_transform(&space, &[inproc], &Cache::new(), &FailPolicy::Abort, &exec).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            let bits = |pt: &Point| {
                pt.metrics()
                    .iter()
                    .map(|m| m.value.to_bits())
                    .collect::<Vec<_>>()
            };
            check(bits(p) == bits(q), || {
                format!("{file} differs at {:?}", p.coords())
            })?;
        }
    }

    let (schema, model) = fixtures::gemm_like();
    let gemm_file = configs().join("models/gemm-like.toml");
    let full = build_space(schema);
    let small = with_ctx(FailPolicy::Abort, |ctx| {
        ExhaustivePrune::new(
            vec![],
            expr("matSize == 32 && nbCore >= 32 && nbCore <= 128"),
        )
        .apply(&full, ctx)
        .unwrap()
        .space
    });
    let cmd = CommandSpec {
        argv: vec![
            exe.into(),
            "serve-model".into(),
            "--model".into(),
            gemm_file.display().to_string(),
        ],
        env: Default::default(),
        timeout_s: 0.5,
        produces: model.produces.clone(),
    };
    let tool: EvaluatorRef = Arc::new(ExternalCommand::new("gemm-tool", cmd));
    let seq = Executor::sequential();
    let err = apply_transform(
        &small,
        &[tool.clone()],
        &Cache::new(),
        &FailPolicy::Abort,
        &seq,
    )
    .unwrap_err();
    check(
        matches!(&err, MetricsError::Eval(e) if e.kind == EvalErrorKind::Timeout),
        || format!("abort: {err:?}"),
    )?;
    let (pruned, report) = apply_transform(
        &small,
        &[tool.clone()],
        &Cache::new(),
        &FailPolicy::PruneFailed,
        &seq,
    )
    .unwrap();
    check(
        pruned.len() == 1
            && report.pruned.len() == 2
            && report
                .pruned
                .iter()
                .all(|e| e.kind == EvalErrorKind::Timeout),
        || {
            format!(
                "prune-failed kept {} pruned {:?}",
                pruned.len(),
                report.pruned
            )
        },
    )?;
    let worst = FailPolicy::AssignWorst(
        [("freq_mhz", 0.0), ("dsp", 1e9), ("throughput", 0.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    );
    let (degraded, report) = apply_transform(&small, &[tool], &Cache::new(), &worst, &seq).unwrap();
    let flagged = degraded.points().iter().filter(|p| p.is_degraded()).count();
    check(
        degraded.len() == 3 && report.degraded == 2 && flagged == 2,
        || {
            format!(
                "assign-worst: {} points, {flagged} degraded",
                degraded.len()
            )
        },
    )?;
    check(
        degraded
            .points()
            .iter()
            .filter(|p| p.is_degraded())
            .all(|p| p.metric("dsp") == Some(1e9)),
        || "worst values not assigned".into(),
    )?;
    Ok("918 subprocess evaluations bit-identical; timeout handled by abort, prune-failed, assign-worst".into())
}

fn c11_warm_cache(warm: &mut Option<Cache>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let mut warm_time = Duration::ZERO;
    for name in ["dsp-pipeline", "gradient-synth", "blackscholes"] {
        let m = RunManifest::from_args(&RunArgs {
            manifest: Some(configs().join(name).join("manifest.toml")),
            out: Some(dir.path().join(name)),
            ..RunArgs::default()
        })
        .unwrap();
        let reused = if name == "blackscholes" {
            warm.take()
        } else {
            None
        };
        let cache = match reused {
            Some(c) => c,
            None => {
                let c = Cache::new();
                cli::run_with_cache(&m, &c).map_err(|e| e.to_string())?;
                c
            }
        };
        let t0 = Instant::now();
        let rerun = cli::run_with_cache(&m, &cache).map_err(|e| e.to_string())?;
        warm_time += t0.elapsed();
        let misses = rerun.provenance.evaluations;
        check(misses == 0, || {
            format!("{name}: {misses} evaluations on a warm cache")
        })?;
        check(
            rerun.provenance.steps.iter().all(|s| s.evaluations == 0),
            || format!("{name}: a step evaluated"),
        )?;
        notes.push(format!("{name} 0 misses"));
    }
    check(warm_time < Duration::from_secs(10), || {
        format!("warm re-runs took {warm_time:?}")
    })?;
    Ok(format!(
        "{} (warm re-runs {:.2}s)",
        notes.join(", "),
        warm_time.as_secs_f64()
    ))
}

fn main() {
    let mut warm = None;
    let criteria: Vec<(&str, u64, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("cardinality reproduction", 1, Box::new(c1_cardinality)),
        ("efficiency example", 1, Box::new(c2_efficiency)),
        (
            "gradient vs exhaustive structure",
            10,
            Box::new(c3_table_structure),
        ),
        (
            "quick-prune oracle equivalence",
            60,
            Box::new(c4_quick_prune_oracle),
        ),
        ("frontier definition", 30, Box::new(c5_frontier_definition)),
        ("gradient oracle", 60, Box::new(c6_gradient_oracle)),
    ];
    let mut failures = 0;
    let mut report = |n: usize, name: &str, budget: u64, outcome: Outcome, took: Duration| {
        let over = took > Duration::from_secs(budget);
        let (status, detail) = match outcome {
            Ok(_) if over => ("FAIL", format!("exceeded {budget}s budget")),
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {status} [{name}] ({:.2}s) {detail}",
            took.as_secs_f64()
        );
    };
    let run = |f: Box<dyn FnOnce() -> Outcome + '_>| -> (Outcome, Duration) {
        let t0 = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        (r, t0.elapsed())
    };
    for (i, (name, budget, f)) in criteria.into_iter().enumerate() {
        let (r, t) = run(f);
        report(i + 1, name, budget, r, t);
    }
    let (r, t) = run(Box::new(|| c7_parallel_determinism(&mut warm)));
    report(7, "determinism under parallelism", 300, r, t);
    let (r, t) = run(Box::new(c8_black_scholes_numerics));
    report(8, "black-scholes numerics", 300, r, t);
    let (r, t) = run(Box::new(c9_throughput_scaling));
    report(9, "throughput scaling", 1, r, t);
    let (r, t) = run(Box::new(c10_external_protocol));
    report(10, "external tool protocol", 30, r, t);
    let (r, t) = run(Box::new(|| c11_warm_cache(&mut warm)));
    report(11, "cache idempotence", 60, r, t);
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
