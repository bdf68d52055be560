//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `DPPSD_ACCEPTANCE_SCALE=ci` runs the detection criteria (7–9) at 8×8 with
//! a smaller training set; the default is the 16×16 desk-scale setup, which
//! takes the better part of an hour. Every criterion writes a CSV under the
//! target tmpdir; the whole suite then runs a second time with the same
//! seeds and the files are compared byte for byte.
//!
//! The process exits successfully once every criterion has been evaluated,
//! so a failing criterion does not keep the rest of the workspace tests from
//! running. Set `DPPSD_ACCEPTANCE_STRICT=1` to exit with failure on any FAIL.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use dppsd::channel::{draw_channel_instance, Constellation};
use dppsd::dpp::{
    dpp_detect_prepared, ml_detect_prepared, se_sd_detect_prepared, BaselineRadius, DetectorConfig, PreparedInstance,
};
use dppsd::numerics::{gaussian_complex_vector, substream_rng};
use dppsd::predictor::{
    hidden_dim, input_dim, load_model, FeatureVector, Normalization, Objective, RbfnModel, TrainerConfig,
    TrainingExample,
};
use dppsd::search::{conventional_radius, subtree_min_metrics};
use dppsd_bench::commands::{cmd_ber, cmd_gen_dataset, cmd_train};
use dppsd_bench::config::{DatasetJob, ExperimentSpec, TrainJob};
use dppsd_bench::detectors::DetectorId;
use dppsd_bench::results::{write_csv, ResultRow};
use rand::Rng;
use rayon::prelude::*;

const SEED: u64 = 20_240_611;

#[derive(Clone, Copy)]
struct Scale {
    name: &'static str,
    n: usize,
    samples: usize,
    epochs: usize,
    trials: u64,
    lambda_table: Option<usize>,
}

impl Scale {
    fn from_env() -> Self {
        match std::env::var("DPPSD_ACCEPTANCE_SCALE").as_deref() {
            Ok("ci") => Scale {
                name: "ci (8x8)",
                n: 8,
                samples: 20_000,
                epochs: 500,
                trials: 20_000,
                lambda_table: Some(16),
            },
            _ => Scale {
                name: "full (16x16)",
                n: 16,
                samples: 50_000,
                epochs: 2000,
                trials: 20_000,
                lambda_table: None,
            },
        }
    }
}

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, title: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, title, pass, detail }
}

fn report(v: &Verdict, started: Instant) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {:>2} [{tag}] {}: {} ({:.1} s)",
        v.id,
        v.title,
        v.detail,
        started.elapsed().as_secs_f64()
    );
}

fn prepare(n: usize, snr: f64, stream: u64, i: u64) -> (f64, PreparedInstance) {
    let c = Constellation::qpsk();
    let mut rng = substream_rng(SEED, stream, i);
    let inst = draw_channel_instance(n, n, &c, snr, &mut rng).unwrap();
    let prep = PreparedInstance::new(&inst.y, &inst.h).unwrap();
    (inst.noise_variance, prep)
}

/// Criteria 1 and 2 share one 4×4 corpus.
fn oracle_corpus(dir: &Path) -> (Verdict, Verdict) {
    let c = Constellation::qpsk();
    let snrs = [5.0, 9.0, 13.0];
    let rows: Vec<(u64, f64, f64, f64, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let snr = snrs[i as usize % 3];
            let (_, prep) = prepare(4, snr, 1, i);
            let ml = ml_detect_prepared(&prep, &c).unwrap().metric;
            let se = se_sd_detect_prepared(&prep, 1.0, &c, BaselineRadius::Infinite).unwrap().metric;
            let mut p = prep.problem(&c, f64::INFINITY).unwrap();
            let sub = subtree_min_metrics(&mut p).into_iter().fold(f64::INFINITY, f64::min);
            (i, snr, ml, se, sub)
        })
        .collect();
    write_csv(&dir.join("c1_c2_oracle.csv"), &rows).unwrap();
    let worst = |k: fn(&(u64, f64, f64, f64, f64)) -> f64| rows.iter().map(k).fold(0.0, f64::max);
    let se_ok = rows.iter().filter(|r| (r.3 - r.2).abs() < 1e-9).count();
    let sub_ok = rows.iter().filter(|r| (r.4 - r.2).abs() < 1e-9).count();
    (
        verdict(
            1,
            "infinite-radius SE equals exhaustive ML",
            se_ok == rows.len(),
            format!("{se_ok}/{} instances, max |Δ| = {:e}", rows.len(), worst(|r| (r.3 - r.2).abs())),
        ),
        verdict(
            2,
            "smallest sub-tree minimum equals ML metric",
            sub_ok == rows.len(),
            format!("{sub_ok}/{} instances, max |Δ| = {:e}", rows.len(), worst(|r| (r.4 - r.2).abs())),
        ),
    )
}

fn radius_coverage(dir: &Path) -> Verdict {
    let draws = 100_000u64;
    let mut rows = Vec::new();
    for (k, (n_r, sigma2)) in [(16usize, 1.0f64), (24, 2.0)].into_iter().enumerate() {
        let f = conventional_radius(sigma2, n_r, 0.999);
        let inside = (0..draws)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = substream_rng(SEED, 30 + k as u64, i);
                gaussian_complex_vector(n_r, sigma2, &mut rng).iter().map(|v| v.norm_sqr()).sum::<f64>() <= f * f
            })
            .count() as u64;
        rows.push((n_r, sigma2, f * f, inside, draws, inside as f64 / draws as f64));
    }
    write_csv(&dir.join("c3_coverage.csv"), &rows).unwrap();
    let pass = rows.iter().all(|r| (0.997..=1.0).contains(&r.5));
    let detail = rows
        .iter()
        .map(|r| format!("P = {} at (N_r = {}, σ² = {})", r.5, r.0, r.1))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(3, "conventional radius covers the noise", pass, detail)
}

fn dimensions(dir: &Path) -> Verdict {
    let rows: Vec<(usize, usize, usize, usize, usize)> = [4usize, 8, 16, 24]
        .iter()
        .map(|&n| {
            let m = RbfnModel::zeros(n, 4);
            (n, input_dim(n), m.input_dim(), hidden_dim(n, 4), m.hidden_dim())
        })
        .collect();
    write_csv(&dir.join("c4_dimensions.csv"), &rows).unwrap();
    let pass = input_dim(24) == 50 && rows.iter().all(|r| r.1 == r.2 && r.3 == r.4 && r.4 == 2 * r.0 + 8);
    let r24 = rows.last().unwrap();
    verdict(
        4,
        "input and hidden widths",
        pass,
        format!("N_t = 24: input {}, hidden {}", r24.2, r24.4),
    )
}

fn gradient_check(dir: &Path) -> Verdict {
    let h = 1e-6;
    let rows: Vec<(u64, usize, f64)> = (0..100u64)
        .into_par_iter()
        .map(|pair| {
            let n_t = [2, 4, 8][pair as usize % 3];
            let mut rng = substream_rng(SEED, 50, pair);
            let mut model = RbfnModel::zeros(n_t, 4);
            let theta: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-1.5..1.5)).collect();
            model.set_params(&theta);
            let ex = TrainingExample {
                features: FeatureVector((0..input_dim(n_t)).map(|_| rng.random_range(-2.0..2.0)).collect()),
                targets: (0..4).map(|_| rng.random_range(0.0..3.0)).collect(),
            };
            let obj = Objective::new(&model, &Normalization::identity(input_dim(n_t)), &[ex]).unwrap();
            let mut worst: f64 = 0.0;
            for o in 0..4 {
                let (_, grad) = obj.output_gradient(&theta, 0, o);
                for i in 0..theta.len() {
                    let mut plus = theta.clone();
                    let mut minus = theta.clone();
                    plus[i] += h;
                    minus[i] -= h;
                    let fd = (obj.output(&plus, 0, o) - obj.output(&minus, 0, o)) / (2.0 * h);
                    let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-3);
                    worst = worst.max(rel);
                }
            }
            (pair, n_t, worst)
        })
        .collect();
    write_csv(&dir.join("c5_gradients.csv"), &rows).unwrap();
    let worst = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    verdict(
        5,
        "analytic gradients match central differences",
        worst < 1e-6,
        format!("worst relative error {worst:e} over {} pairs", rows.len()),
    )
}

fn train_model(dir: &Path, n: usize, samples: usize, epochs: usize, seed: u64, stem: &str) -> PathBuf {
    let dataset = DatasetJob {
        n_t: n,
        n_r: n,
        constellation: "qpsk".into(),
        snr_range_db: [4.0, 14.0],
        sample_count: samples,
        seed,
        output: dir.join(format!("{stem}.bin")),
    };
    cmd_gen_dataset(&dataset).unwrap();
    let job = TrainJob {
        dataset: dataset.output.clone(),
        model_output: dir.join(format!("{stem}.json")),
        report_output: None,
        trainer: TrainerConfig {
            max_epochs: epochs,
            ..TrainerConfig::default()
        },
    };
    cmd_train(&job).unwrap();
    fs::remove_file(&dataset.output).unwrap();
    job.model_output
}

fn degradation(dir: &Path) -> Verdict {
    let c = Constellation::qpsk();
    let model = load_model(&train_model(dir, 8, 3000, 200, SEED, "c6_model")).unwrap();
    let inf = f64::INFINITY;
    let snrs = [5.0, 7.0, 9.0, 11.0];
    let rows: Vec<(u64, f64, f64, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let snr = snrs[i as usize % 4];
            let (sigma2, prep) = prepare(8, snr, 6, i);
            let se = se_sd_detect_prepared(&prep, sigma2, &c, BaselineRadius::default()).unwrap();
            let dpp = dpp_detect_prepared(&prep, sigma2, &model, &DetectorConfig::full(inf, inf), &c).unwrap();
            (i, snr, se.metric, dpp.metric)
        })
        .collect();
    write_csv(&dir.join("c6_degradation.csv"), &rows).unwrap();
    let equal = rows.iter().filter(|r| (r.2 - r.3).abs() < 1e-9).count();
    verdict(
        6,
        "infinite λ reduces to the conventional detector",
        equal == rows.len(),
        format!("{equal}/{} paired 8x8 instances", rows.len()),
    )
}

fn detection(dir: &Path, scale: Scale) -> (Verdict, Verdict, Verdict) {
    let model = train_model(dir, scale.n, scale.samples, scale.epochs, SEED, "c7_model");
    let spec = ExperimentSpec {
        n_t: scale.n,
        n_r: scale.n,
        constellation: "qpsk".into(),
        snr_grid_db: vec![5.0, 7.0, 9.0, 11.0],
        trials_per_point: scale.trials,
        detectors: vec![
            DetectorId::SeSd,
            DetectorId::DppSd,
            DetectorId::DppRadius,
            DetectorId::DppOrdering,
        ],
        model_path: Some(model),
        lambda1: None,
        lambda2: None,
        lambda_table: scale.lambda_table,
        epsilon_complement: 0.999,
        seed: SEED,
        output: Some(dir.join("c7_c9_detection")),
        checkpoint_every: 0,
        checkpoint: None,
        noise_variance_override: None,
        audit_termination: true,
    };
    let rows: Vec<ResultRow> = cmd_ber(&spec).unwrap().into_iter().map(|t| t.row).collect();
    let get = |snr: f64, id: DetectorId| rows.iter().find(|r| r.snr_db == snr && r.detector == id).unwrap();

    let (mut ber_ok, mut cx_ok, mut ablation_ok) = (true, true, true);
    let (mut ber_detail, mut cx_detail) = (Vec::new(), Vec::new());
    let (mut changed, mut violations, mut instances) = (0, 0, 0);
    for &snr in &spec.snr_grid_db {
        let se = get(snr, DetectorId::SeSd);
        let dpp = get(snr, DetectorId::DppSd);
        let ratio = |r: &ResultRow| r.avg_tree_ops() / se.avg_tree_ops();
        let (full, radius, ordering) = (
            ratio(dpp),
            ratio(get(snr, DetectorId::DppRadius)),
            ratio(get(snr, DetectorId::DppOrdering)),
        );
        let ber_ratio = match (se.bit_errors, dpp.bit_errors) {
            (0, 0) => 1.0,
            (0, _) => f64::INFINITY,
            _ => dpp.ber / se.ber,
        };
        ber_ok &= ber_ratio <= 1.15;
        cx_ok &= full <= 0.80;
        ablation_ok &= radius >= full && ordering >= full;
        ber_detail.push(format!("{snr} dB {}/{} = {ber_ratio:.3}", dpp.bit_errors, se.bit_errors));
        cx_detail.push(format!("{snr} dB {full:.3} (radius {radius:.3}, ordering {ordering:.3})"));
        changed += dpp.termination_changed_results;
        violations += dpp.justified_changed_results;
        instances += dpp.trials;
    }
    let rate = changed as f64 / instances as f64;
    (
        verdict(
            7,
            "BER parity within 15%",
            ber_ok,
            format!("{}: {}", scale.name, ber_detail.join(", ")),
        ),
        verdict(
            8,
            "tree-op ratio <= 0.80 with ablation ordering",
            cx_ok && ablation_ok,
            format!(
                "{}: {}{}",
                scale.name,
                cx_detail.join(", "),
                if ablation_ok { "" } else { "; ablation ordering violated" }
            ),
        ),
        verdict(
            9,
            "early termination is safe",
            violations == 0 && rate <= 0.005,
            format!(
                "{violations} justified stops changed the answer, mispredictions {changed}/{instances} = {:.4}%",
                100.0 * rate
            ),
        ),
    )
}

fn run_all(dir: &Path, scale: Scale, verbose: bool) -> Vec<Verdict> {
    fs::create_dir_all(dir).unwrap();
    let mut out = Vec::new();
    let mut step = |f: &mut dyn FnMut() -> Vec<Verdict>| {
        let started = Instant::now();
        for v in f() {
            if verbose {
                report(&v, started);
            }
            out.push(v);
        }
    };
    step(&mut || {
        let (a, b) = oracle_corpus(dir);
        vec![a, b]
    });
    step(&mut || vec![radius_coverage(dir)]);
    step(&mut || vec![dimensions(dir)]);
    step(&mut || vec![gradient_check(dir)]);
    step(&mut || vec![degradation(dir)]);
    step(&mut || {
        let (a, b, c) = detection(dir, scale);
        vec![a, b, c]
    });
    out
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
}

fn main() -> ExitCode {
    // `cargo test -- --list` and similar harness probes
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let scale = Scale::from_env();
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = fs::remove_dir_all(&root);
    println!("acceptance scale: {}", scale.name);

    let mut verdicts = run_all(&root.join("first"), scale, true);

    let started = Instant::now();
    run_all(&root.join("second"), scale, false);
    let first = csv_files(&root.join("first"));
    let second = csv_files(&root.join("second"));
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    let differing: Vec<String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| fs::read(a).unwrap() != fs::read(b).unwrap())
        .map(|(a, _)| a.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let same_set = names(&first) == names(&second);
    let v = verdict(
        10,
        "rerun is byte-identical",
        same_set && differing.is_empty(),
        if differing.is_empty() {
            format!("{} CSV files identical", first.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    );
    report(&v, started);
    verdicts.push(v);

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failed: {failed:?}")
        }
    );
    let strict = std::env::var("DPPSD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed.is_empty() || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
