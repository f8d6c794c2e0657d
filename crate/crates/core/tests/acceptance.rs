//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria marked soft are reported but do not fail the target.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{desk_config, flat, numeric_grad, random_matrix, relative_error, small_bundle, REL_TOL};
use rand::Rng as _;
use vda_core::adaptation::{
    adapt, discriminator_objective, discriminator_objective_grads, discriminator_outputs,
    discriminator_value_from_outputs, generator_extractor_grads, generator_objective_for_inputs,
    generator_value_from_outputs, uncertainty_weights, AdaptConfig, AdaptObserver, AdaptOutcome, GeneratorLoss,
    TargetInputs,
};
use vda_core::exec;
use vda_core::harness::{run_pipeline, ExperimentConfig, MetricsReport};
use vda_core::linalg::Matrix;
use vda_core::models::{classification_grads, classify, cross_entropy, Mlp, ModelBundle, NetworkSpec};
use vda_core::rng::seeded_rng;
use vda_core::virtual_domain::{build_virtual_domain, estimate_sigma, extract_prototypes, DistanceMetric, VirtualDomainGmm};
use vda_core::Result;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const MIN_GAIN: f64 = 0.10;
const MAX_SECONDS_PER_SEED: f64 = 300.0;
const LAMBDA_BAND: f64 = 0.05;
const EXACT_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-6;
const MC_SAMPLES_PER_CLASS: usize = 10_000;
const COV_FROBENIUS_TOL: f64 = 0.20;
const DISC_FINAL_MAX: f64 = 0.75;
const DISC_FIRST_MIN: f64 = 0.9;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict { passed, detail: detail.into() }
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn single_threaded<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool").install(f)
}

fn run_all(configs: &[ExperimentConfig]) -> Vec<MetricsReport> {
    exec::map(configs, |c| run_pipeline(c).expect("pipeline run"))
}

fn with(seed: u64, edit: impl Fn(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = desk_config(seed);
    edit(&mut c);
    c
}

struct Runs {
    tc_on: Vec<MetricsReport>,
    tc_off: Vec<MetricsReport>,
    lambdas: Vec<(f64, Vec<MetricsReport>)>,
    repeat: MetricsReport,
}

fn experiments() -> Runs {
    // Timed runs go one at a time on a single core.
    let tc_on: Vec<MetricsReport> =
        single_threaded(|| SEEDS.iter().map(|&s| run_pipeline(&desk_config(s)).expect("pipeline run")).collect());
    let repeat = single_threaded(|| run_pipeline(&desk_config(SEEDS[0])).expect("pipeline run"));
    let tc_off = run_all(&SEEDS.map(|s| with(s, |c| c.tc_enabled = false)));
    let mut lambdas = Vec::new();
    for lambda in [4.0, 6.0, 8.0, 10.0] {
        let reports =
            if lambda == 6.0 { tc_on.clone() } else { run_all(&SEEDS.map(|s| with(s, |c| c.lambda = lambda))) };
        lambdas.push((lambda, reports));
    }
    Runs { tc_on, tc_off, lambdas, repeat }
}

fn adaptation_gain(runs: &Runs) -> Verdict {
    let src = mean(runs.tc_on.iter().map(|r| r.source_only_accuracy));
    let adapted = mean(runs.tc_on.iter().map(|r| r.average_accuracy));
    let slowest = runs.tc_on.iter().map(|r| r.wall_time_seconds).fold(0.0, f64::max);
    Verdict::new(
        adapted - src >= MIN_GAIN && slowest <= MAX_SECONDS_PER_SEED,
        format!(
            "source-only {src:.4}, adapted {adapted:.4}, gain {:+.2} points (need >= {:.0}); slowest seed {slowest:.1}s",
            100.0 * (adapted - src),
            100.0 * MIN_GAIN
        ),
    )
}

fn ablation_trend(runs: &Runs) -> Verdict {
    let on = mean(runs.tc_on.iter().map(|r| r.average_accuracy));
    let off = mean(runs.tc_off.iter().map(|r| r.average_accuracy));
    Verdict::new(on >= off, format!("with compactness {on:.4}, without {off:.4}"))
}

fn lambda_robustness(runs: &Runs) -> Verdict {
    let means: Vec<(f64, f64)> =
        runs.lambdas.iter().map(|(l, rs)| (*l, mean(rs.iter().map(|r| r.average_accuracy)))).collect();
    let lo = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let hi = means.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    let listed: Vec<String> = means.iter().map(|(l, a)| format!("{l}: {a:.4}")).collect();
    Verdict::new(
        hi - lo <= LAMBDA_BAND,
        format!("{}; band {:.2} points (limit {:.0})", listed.join(", "), 100.0 * (hi - lo), 100.0 * LAMBDA_BAND),
    )
}

fn closed_form_invariants() -> Verdict {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    // prototypes and sigma on a seeded network of the experiment's shape
    let spec = NetworkSpec::new(16, 16, vec![64], 4);
    for seed in 0..5 {
        let bundle = ModelBundle::init(&spec, seed).unwrap();
        let protos = extract_prototypes(&bundle.classifier).unwrap();
        check(
            protos.iter_rows().all(|r| (r.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= NORM_TOL),
            "prototype norms",
        );
        for (metric, lambda) in [(DistanceMetric::SquaredEuclidean, 6.0), (DistanceMetric::CosineDistance, 4.0)] {
            let mut best = f64::INFINITY;
            for m in 0..protos.rows() {
                for n in 0..protos.rows() {
                    if m == n {
                        continue;
                    }
                    let (a, b) = (protos.row(m), protos.row(n));
                    let d = match metric {
                        DistanceMetric::SquaredEuclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>(),
                        DistanceMetric::CosineDistance => {
                            let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                            1.0 - ab / (na * nb)
                        }
                    };
                    best = best.min(d);
                }
            }
            let sigma = estimate_sigma(&protos, lambda, metric).unwrap();
            check((sigma - best / lambda).abs() <= EXACT_TOL, "sigma against pair enumeration");
        }
    }

    // uncertainty weights
    let k = 4;
    let uniform = Matrix::from_vec(1, k, vec![0.25; k]).unwrap();
    check((uncertainty_weights(&uniform).unwrap()[0] - 1.0).abs() <= EXACT_TOL, "alpha of uniform");
    let one_hot = Matrix::from_vec(1, k, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    check(uncertainty_weights(&one_hot).unwrap()[0] == 0.0, "alpha of one-hot");
    let skewed = Matrix::from_vec(1, k, vec![0.7, 0.1, 0.1, 0.1]).unwrap();
    let oracle = -(0.7f64 * 0.7f64.ln() + 3.0 * 0.1 * 0.1f64.ln()) / 4f64.ln();
    check((uncertainty_weights(&skewed).unwrap()[0] - oracle).abs() <= EXACT_TOL, "alpha of skewed row");
    check((oracle - 0.6784).abs() <= 1e-3, "alpha reference value");
    let mut rng = seeded_rng(7);
    let rows: Vec<f64> = (0..10_000)
        .flat_map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| (rng.random_range(-6.0..6.0f64)).exp()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(move |x| x / s)
        })
        .collect();
    let alphas = uncertainty_weights(&Matrix::from_vec(10_000, k, rows).unwrap()).unwrap();
    check(alphas.iter().all(|a| (0.0..=1.0).contains(a)), "alpha range on random rows");

    // balanced virtual sampling
    let gmm = build_virtual_domain(&ModelBundle::init(&spec, 11).unwrap(), 6.0, DistanceMetric::SquaredEuclidean).unwrap();
    for n in [4, 32, 33, 37, 1000] {
        let (_, labels) = gmm.sample_batch(n, &mut seeded_rng(n as u64));
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        check(hi - lo <= 1 && (n % k != 0 || lo == n / k), "class-balanced sampling");
    }

    // mixture density against explicit two-term summation
    let two = NetworkSpec::new(3, 5, vec![4], 2);
    let gmm2 = build_virtual_domain(&ModelBundle::init(&two, 3).unwrap(), 6.0, DistanceMetric::SquaredEuclidean).unwrap();
    let s2 = gmm2.sigma_sq();
    let mut rng = seeded_rng(5);
    for _ in 0..20 {
        let f: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct: f64 = (0..2)
            .map(|c| {
                let d2: f64 = f.iter().zip(gmm2.prototypes().row(c)).map(|(x, m)| (x - m).powi(2)).sum();
                0.5 * (2.0 * std::f64::consts::PI * s2).powf(-2.5) * (-d2 / (2.0 * s2)).exp()
            })
            .sum();
        check((gmm2.log_density(&f).unwrap() - direct.ln()).abs() <= EXACT_TOL, "mixture log-density");
    }

    // loss values against hand summation
    let dv = [0.9, 0.6, 0.75];
    let dt = [0.2, 0.55, 0.4];
    let a = [0.3, 1.0, 0.5];
    let weighted = (0.9f64.ln() + 0.6f64.ln() + 0.75f64.ln()) / 3.0
        + (0.3 * 0.8f64.ln() + 1.0 * 0.45f64.ln() + 0.5 * 0.6f64.ln()) / 3.0;
    check((discriminator_value_from_outputs(&dv, &dt, &a).unwrap() - weighted).abs() <= EXACT_TOL, "weighted objective");
    let plain = (0.9f64.ln() + 0.6f64.ln() + 0.75f64.ln()) / 3.0 + (0.8f64.ln() + 0.45f64.ln() + 0.6f64.ln()) / 3.0;
    check(
        (discriminator_value_from_outputs(&dv, &dt, &[1.0; 3]).unwrap() - plain).abs() <= EXACT_TOL,
        "unweighted objective",
    );
    check(
        (discriminator_value_from_outputs(&[0.5; 3], &[0.5; 3], &[1.0; 3]).unwrap() - 2.0 * 0.5f64.ln()).abs()
            <= EXACT_TOL,
        "uninformative discriminator",
    );
    let gen = -(0.3 * 0.2f64.ln() + 1.0 * 0.55f64.ln() + 0.5 * 0.4f64.ln()) / 3.0;
    check(
        (generator_value_from_outputs(&dt, &a, GeneratorLoss::NonSaturating).unwrap() - gen).abs() <= EXACT_TOL,
        "generator objective",
    );
    let b = small_bundle(4);
    let (fv, ft) = (random_matrix(5, 4, 1), random_matrix(6, 4, 2));
    let at = [0.1, 0.4, 0.9, 1.0, 0.0, 0.7];
    let (ov, ot) = (discriminator_outputs(&b.discriminator, &fv).unwrap(), discriminator_outputs(&b.discriminator, &ft).unwrap());
    let by_hand = ov.iter().map(|d| d.ln()).sum::<f64>() / 5.0
        + ot.iter().zip(at).map(|(d, w)| w * (1.0 - d).ln()).sum::<f64>() / 6.0;
    check(
        (discriminator_objective(&fv, &ft, &at, &b.discriminator).unwrap() - by_hand).abs() <= EXACT_TOL,
        "objective through the discriminator",
    );

    if failures.is_empty() {
        Verdict::new(true, "prototypes, sigma, weights, sampling counts, density and losses all within tolerance")
    } else {
        failures.dedup();
        Verdict::new(false, format!("failed: {}", failures.join(", ")))
    }
}

fn gradient_correctness() -> Verdict {
    let mut worst: f64 = 0.0;

    let b = small_bundle(1);
    let x = random_matrix(7, 3, 2);
    let y = vec![0, 1, 2, 2, 1, 0, 1];
    let loss = |b: &ModelBundle| cross_entropy(&classify(b, &b.extractor.forward(&x).unwrap()).unwrap(), &y).unwrap();
    let g = classification_grads(&b, &x, &y).unwrap();
    let mut analytic = flat(&g.extractor.slices());
    analytic.extend_from_slice(g.classifier.as_slice());
    let mut numeric = numeric_grad(&b, |b| b.extractor.param_slices_mut(), loss).concat();
    numeric.extend(numeric_grad(&b, |b| vec![b.classifier.as_mut_slice()], loss).concat());
    worst = worst.max(relative_error(&analytic, &numeric));

    let b = small_bundle(3);
    let (fv, ft) = (random_matrix(5, 4, 4), random_matrix(6, 4, 5));
    let alpha = [0.1, 0.9, 0.4, 1.0, 0.0, 0.6];
    let eval = discriminator_objective_grads(&fv, &ft, &alpha, &b.discriminator).unwrap();
    let num = numeric_grad(&b.discriminator, |d: &mut Mlp| d.param_slices_mut(), |d| {
        discriminator_objective(&fv, &ft, &alpha, d).unwrap()
    });
    worst = worst.max(relative_error(&flat(&eval.grads.slices()), &num.concat()));

    let b = small_bundle(8);
    let x = random_matrix(6, 3, 7);
    let alpha = [0.3, 1.0, 0.5, 0.8, 0.2, 0.9];
    for normalize in [true, false] {
        let form = GeneratorLoss::NonSaturating;
        let (_, grads) = generator_extractor_grads(&b, &x, &alpha, normalize, form).unwrap();
        let num = numeric_grad(&b, |b| b.extractor.param_slices_mut(), |b| {
            generator_objective_for_inputs(b, &x, &alpha, normalize, form).unwrap()
        });
        worst = worst.max(relative_error(&flat(&grads.unwrap().slices()), &num.concat()));
    }

    Verdict::new(worst <= REL_TOL, format!("worst relative error {worst:.2e} (limit {REL_TOL:.0e})"))
}

fn monte_carlo_fidelity() -> Verdict {
    let spec = NetworkSpec::new(16, 16, vec![64], 4);
    let gmm = build_virtual_domain(&ModelBundle::init(&spec, 21).unwrap(), 6.0, DistanceMetric::SquaredEuclidean).unwrap();
    let (k, d, s2) = (gmm.num_classes(), gmm.dim(), gmm.sigma_sq());
    let (samples, labels) = gmm.sample_batch(k * MC_SAMPLES_PER_CLASS, &mut seeded_rng(99));
    let bound = 3.0 * s2.sqrt() / (MC_SAMPLES_PER_CLASS as f64).sqrt();
    let mut worst_mean: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    for c in 0..k {
        let rows: Vec<&[f64]> = samples.iter_rows().zip(&labels).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        let n = rows.len() as f64;
        let m: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        for (mj, pj) in m.iter().zip(gmm.prototypes().row(c)) {
            worst_mean = worst_mean.max((mj - pj).abs() / bound);
        }
        let mut err = 0.0;
        for a in 0..d {
            for b in 0..d {
                let cov = rows.iter().map(|r| (r[a] - m[a]) * (r[b] - m[b])).sum::<f64>() / (n - 1.0);
                let target = if a == b { s2 } else { 0.0 };
                err += (cov - target).powi(2);
            }
        }
        worst_cov = worst_cov.max(err.sqrt() / (s2 * (d as f64).sqrt()));
    }
    Verdict::new(
        worst_mean <= 1.0 && worst_cov <= COV_FROBENIUS_TOL,
        format!(
            "largest mean deviation {:.2} of the 3-sigma/sqrt(n) bound; largest covariance error {:.1}% (limit {:.0}%)",
            worst_mean,
            100.0 * worst_cov,
            100.0 * COV_FROBENIUS_TOL
        ),
    )
}

fn source_free_contract(runs: &Runs) -> Verdict {
    // The entry point's type admits only the model, the virtual domain and
    // unlabeled target inputs. A mismatch here is a compile error.
    type Entry = fn(ModelBundle, &VirtualDomainGmm, &TargetInputs, &AdaptConfig, &mut dyn AdaptObserver) -> Result<AdaptOutcome>;
    let _entry: Entry = adapt;
    let released = runs.tc_on.iter().chain(&runs.tc_off).all(|r| r.source_released);
    Verdict::new(released, format!("adaptation entry point typed on target inputs only; source released in all runs: {released}"))
}

fn determinism(runs: &Runs) -> Verdict {
    let a = runs.tc_on[0].to_json_without_wall_time();
    let b = runs.repeat.to_json_without_wall_time();
    Verdict::new(a == b, format!("{} report bytes, identical: {}", a.len(), a == b))
}

fn alignment_diagnostic(runs: &Runs) -> Verdict {
    let first = mean(runs.tc_on.iter().map(|r| r.discriminator_accuracy_curve[0]));
    let last = mean(runs.tc_on.iter().map(|r| *r.discriminator_accuracy_curve.last().unwrap()));
    Verdict::new(
        first >= DISC_FIRST_MIN && last <= DISC_FINAL_MAX,
        format!(
            "discriminator accuracy first epoch {first:.3} (need >= {DISC_FIRST_MIN}), final epoch {last:.3} (need <= {DISC_FINAL_MAX})"
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let runs = experiments();
    let results: Vec<(u32, &str, bool, Verdict)> = vec![
        (1, "adaptation gain", false, adaptation_gain(&runs)),
        (2, "ablation trend", false, ablation_trend(&runs)),
        (3, "lambda robustness", false, lambda_robustness(&runs)),
        (4, "closed-form invariants", false, closed_form_invariants()),
        (5, "gradient correctness", false, gradient_correctness()),
        (6, "Monte-Carlo mixture fidelity", false, monte_carlo_fidelity()),
        (7, "source-free contract", false, source_free_contract(&runs)),
        (8, "determinism", false, determinism(&runs)),
        (9, "alignment diagnostic", true, alignment_diagnostic(&runs)),
    ];
    let mut hard_failure = false;
    for (id, name, soft, v) in &results {
        let status = if v.passed { "PASS" } else { "FAIL" };
        let kind = if *soft { " (soft)" } else { "" };
        println!("criterion {id} {status}{kind} {name}: {}", v.detail);
        hard_failure |= !v.passed && !soft;
    }
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if hard_failure {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
