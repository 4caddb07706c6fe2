//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use lineartist::asw::{
    asw_map, compute_asw, edge_weights, pagerank, similarity_matrix, NodeMatrix,
};
use lineartist::dataset::{build_dataset, DatasetOptions, PairManifest, MANIFEST_NAME};
use lineartist::edge::{canny, CannyParams};
use lineartist::feature::{build_bank, extract, BankSpec, FeatureMap};
use lineartist::imgio::{load_image, resize};
use lineartist::pencil::{classify, make_line_kernels, pencil_sketch, SketchParams};
use lineartist::smooth::{grad_count, l0_smooth, solve_m, GradientField, L0Params};
use lineartist::transfer::{stylize_run, Objective, TransferConfig};
use lineartist::{GrayImage, ImageBuf};
use rand::Rng;

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let bank = build_bank(BankSpec {
        layers: 2,
        ..BankSpec::default()
    })
    .map_err(err)?;
    let d = random_image(16, 16, 3, 0.1, 0.9, 101);
    let styles = [
        random_image(16, 16, 3, 0.1, 0.9, 102),
        random_image(16, 16, 3, 0.1, 0.9, 103),
    ];
    let sf: Vec<Vec<FeatureMap>> = styles
        .iter()
        .map(|s| extract(s, &bank))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let (asw, _) = compute_asw(&sf, 0.85, 1e-4).map_err(err)?;
    let cfg = TransferConfig::default();
    let obj =
        Objective::new(&bank, extract(&d, &bank).map_err(err)?, &sf, asw, &cfg).map_err(err)?;
    let x = random_image(16, 16, 3, 0.1, 0.9, 104);
    let (_, grad) = obj.evaluate(&x).map_err(err)?;
    let mut pick = rng(105);
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..20 {
        let i = pick.gen_range(0..grad.len());
        let mut plus = x.data().to_vec();
        let mut minus = plus.clone();
        plus[i] += h;
        minus[i] -= h;
        let lp = obj
            .evaluate(&ImageBuf::new(16, 16, 3, plus).map_err(err)?)
            .map_err(err)?
            .0;
        let lm = obj
            .evaluate(&ImageBuf::new(16, 16, 3, minus).map_err(err)?)
            .map_err(err)?
            .0;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-12));
    }
    let took = start.elapsed();
    check(
        worst <= 1e-5 && took < Duration::from_secs(10),
        format!("worst relative error {worst:.2e} over 20 samples, {took:.2?}"),
    )
}

fn pagerank_closed_form() -> Outcome {
    let mut delta = NodeMatrix::zeros(5);
    for p in 0..5 {
        for q in 0..5 {
            if p != q {
                delta.set(p, q, 1.0);
            }
        }
    }
    let mu = edge_weights(&similarity_matrix(&delta)).map_err(err)?;
    let pr = pagerank(&mu, 0.85, 1e-4, 200).map_err(err)?;
    let worst = pr
        .pr
        .iter()
        .map(|v| (v - 0.0361446).abs())
        .fold(0.0, f64::max);
    check(
        pr.iterations_used <= 200 && worst <= 1e-6,
        format!(
            "{} iterations, max |PR - 0.0361446| = {worst:.2e}",
            pr.iterations_used
        ),
    )
}

fn sigmoid_endpoints() -> Outcome {
    let w = asw_map(&[0.02, 0.05, 0.031, 0.044]);
    let (lo, hi) = (w[0], w[1]);
    check(
        (lo - 0.119203).abs() <= 1e-6 && (hi - 0.880797).abs() <= 1e-6,
        format!("omega(min) = {lo:.7}, omega(max) = {hi:.7}"),
    )
}

fn outlier_suppression() -> Outcome {
    let start = Instant::now();
    // five variations of one scene stand in for one artist's samples
    let base = resize(&scene(0), 64, 64).map_err(err)?;
    let mut styles: Vec<ImageBuf> = (0..5u64)
        .map(|i| {
            let n = random_image(64, 64, 3, 0.0, 0.1, 200 + i);
            let gain = 0.85 + 0.05 * i as f64;
            let data = base
                .data()
                .iter()
                .zip(n.data())
                .map(|(v, e)| v * gain + e - 0.05)
                .collect();
            ImageBuf::from_clamped(64, 64, 3, data)
        })
        .collect::<Result<_, _>>()
        .map_err(err)?;
    styles.push(ImageBuf::filled(64, 64, 3, 0.0).map_err(err)?);
    let bank = build_bank(BankSpec::default()).map_err(err)?;
    let feats: Vec<Vec<FeatureMap>> = styles
        .iter()
        .map(|s| extract(s, &bank))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let (table, _) = compute_asw(&feats, 0.85, 1e-4).map_err(err)?;
    let black = 5;
    let mut margins = Vec::new();
    for row in &table.omega_bar {
        let others = row[..black].iter().cloned().fold(f64::INFINITY, f64::min);
        margins.push(others - row[black]);
    }
    let took = start.elapsed();
    check(
        margins.iter().all(|&m| m > 0.0) && took < Duration::from_secs(30),
        format!(
            "black weight below the next smallest by {:?} per layer, {took:.2?}",
            margins
                .iter()
                .map(|m| format!("{m:.2e}"))
                .collect::<Vec<_>>()
        ),
    )
}

fn l0_monotonicity() -> Outcome {
    let img = scene_gray(0, 64).to_buf();
    let mut counts = Vec::new();
    for lambda in [0.002, 0.02, 0.2] {
        let m = l0_smooth(
            &img,
            &L0Params {
                lambda,
                kappa: 1.2,
                ..L0Params::default()
            },
        )
        .map_err(err)?;
        counts.push(grad_count(&m.channel(0)));
    }
    let monotone = counts.windows(2).all(|w| w[1] <= w[0]);

    let r = random_gray(8, 8, 300);
    let mut hv = GradientField::zeros(8, 8);
    let mut g = rng(301);
    for y in 0..8 {
        for x in 0..8 {
            hv.gx.set(x, y, g.gen_range(-0.5..0.5));
            hv.gy.set(x, y, g.gen_range(-0.5..0.5));
        }
    }
    let beta = 7.5;
    let fast = solve_m(&r, &hv, beta).map_err(err)?;
    let dense = dense_m_8x8(&r, &hv, beta);
    let dev = max_abs_diff(fast.data(), &dense);
    check(
        monotone && dev <= 1e-8,
        format!("grad_count {counts:?} for lambda 0.002/0.02/0.2; solve_m vs dense {dev:.2e}"),
    )
}

/// Normal equations of the M step, assembled and solved densely.
fn dense_m_8x8(r: &GrayImage, hv: &GradientField, beta: f64) -> Vec<f64> {
    let (w, h) = (r.width(), r.height());
    let n = w * h;
    let mut a = vec![0.0; n * n];
    let mut b = r.data().to_vec();
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for y in 0..h {
        for x in 0..w {
            let m = y * w + x;
            for (p, t) in [
                ((y * w) + (x + 1) % w, hv.gx.get(x, y)),
                (((y + 1) % h) * w + x, hv.gy.get(x, y)),
            ] {
                a[p * n + p] += beta;
                a[m * n + m] += beta;
                a[p * n + m] -= beta;
                a[m * n + p] -= beta;
                b[p] += beta * t;
                b[m] -= beta * t;
            }
        }
    }
    dense_solve(a, b)
}

fn pencil_partition() -> Outcome {
    let params = SketchParams::default();
    let kernels = make_line_kernels(&params, 32, 32).map_err(err)?;
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let g = random_gray(32, 32, 400 + seed);
        let total = classify(&g, &kernels).total();
        worst = worst.max(max_abs_diff(total.data(), g.data()));
    }
    let flat = pencil_sketch(&GrayImage::filled(32, 32, 0.37), &params).map_err(err)?;
    let white = flat.data().iter().all(|&v| v == 1.0);
    check(
        worst <= 1e-12 && white,
        format!("max |sum C_i - G| = {worst:.1e} over 50 maps; constant input all white: {white}"),
    )
}

fn canny_oracle() -> Outcome {
    let img = GrayImage::from_fn(16, 16, |x, _| if x >= 8 { 1.0 } else { 0.0 });
    let params = CannyParams {
        sigma: 0.0,
        ..CannyParams::default()
    };
    let e = canny(&img, &params).map_err(err)?;
    let cols: Vec<usize> = (0..16).filter(|&x| (0..16).any(|y| e.get(x, y))).collect();
    let full_column = cols.len() == 1 && (0..16).all(|y| e.get(cols[0], y));
    let interior = cols.first().is_some_and(|&c| c > 0 && c < 15);
    let matches = e.mask() == &reference_canny(&img, params.t_low, params.t_high)[..];
    check(
        full_column && interior && matches,
        format!("edge columns {cols:?}, matches reference: {matches}"),
    )
}

fn end_to_end_descent() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(err)?;
    pool.install(|| {
        let start = Instant::now();
        let content = resize(&scene(0), 64, 64).map_err(err)?;
        let styles: Vec<ImageBuf> = (1..4).map(|i| resize(&scene(i), 64, 64)).collect::<Result<_, _>>().map_err(err)?;
        let bank = build_bank(BankSpec::default()).map_err(err)?;
        let cfg = TransferConfig { alpha: 8.0, beta: 500.0, lr: 1.0, iterations: 200, ..TransferConfig::default() };
        let run = stylize_run(&content, &styles, &cfg, &bank, None).map_err(err)?;
        let took = start.elapsed();
        let again = stylize_run(&content, &styles, &cfg, &bank, None).map_err(err)?;
        let (first, last) = (run.losses[0], *run.losses.last().expect("losses recorded"));
        let same = run.image == again.image;
        check(
            took < Duration::from_secs(60) && last < first && same,
            format!("loss {first:.4e} -> {last:.4e} in {took:.2?} on one thread; rerun identical: {same}"),
        )
    })
}

fn dataset_round_trip() -> Outcome {
    let out = tempfile::tempdir().map_err(err)?;
    let manifest =
        build_dataset(data_dir(), out.path(), &DatasetOptions::default()).map_err(err)?;
    let text = std::fs::read_to_string(out.path().join(MANIFEST_NAME)).map_err(err)?;
    let parsed = PairManifest::parse_jsonl(&text).map_err(err)?;
    let identical = parsed == manifest && parsed.to_jsonl() == text;
    let mut sizes_ok = manifest.records.len() == 5;
    for r in &manifest.records {
        let s = load_image(out.path().join(&r.sketch_path)).map_err(err)?;
        sizes_ok &= (s.width(), s.height()) == (256, 256) && (r.width, r.height) == (256, 256);
    }
    check(
        identical && sizes_ok,
        format!(
            "{} records, re-parse identical: {identical}, sketches 256x256: {sizes_ok}",
            manifest.records.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient oracle", gradient_oracle),
        ("pagerank closed form", pagerank_closed_form),
        ("sigmoid endpoints", sigmoid_endpoints),
        ("outlier suppression", outlier_suppression),
        ("l0 monotonicity", l0_monotonicity),
        ("pencil partition", pencil_partition),
        ("canny oracle", canny_oracle),
        ("end-to-end descent", end_to_end_descent),
        ("dataset round-trip", dataset_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
