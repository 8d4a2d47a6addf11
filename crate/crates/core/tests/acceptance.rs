//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::process::Command;
use std::time::Instant;

use copdep::bandwidth::{self, DEFAULT_MC_PAIRS};
use copdep::datagen::{self, Generator, GeneratorSpec};
use copdep::kernel::{self, Bandwidth, StatisticEngine, WeightedAtoms};
use copdep::nulldist;
use copdep::powerlab::{self, DataSource, ExperimentSpec, Method, TieMode};
use copdep::ranks::{self, DataMatrix, RankMatrix, TiePolicy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn bw(s: f64) -> Bandwidth {
    Bandwidth::new(s).unwrap()
}

fn random_ranks(rng: &mut ChaCha8Rng, n: usize, d: usize) -> RankMatrix {
    let cols = (0..d)
        .map(|_| {
            let mut c: Vec<u32> = (1..=n as u32).collect();
            c.shuffle(rng);
            c
        })
        .collect();
    RankMatrix::from_rank_columns(cols).unwrap()
}

/// Random ranks with some dependence, so that checks see a range of values.
fn dependent_ranks(rng: &mut ChaCha8Rng, n: usize, d: usize) -> RankMatrix {
    let loadings: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            loadings
                .iter()
                .map(|a| {
                    let e: f64 = rng.sample(rand_distr::StandardNormal);
                    a * z + e
                })
                .collect()
        })
        .collect();
    ranks::normalized_ranks(&DataMatrix::from_rows(&rows).unwrap(), TiePolicy::Error).unwrap()
}

fn experiment(generator: &str, n: usize, reps: usize, seed: u64, methods: Vec<Method>) -> powerlab::PowerResult {
    let spec = ExperimentSpec {
        data_source: DataSource::Generator(GeneratorSpec {
            generator: generator.parse::<Generator>().unwrap(),
            n,
            seed: 0,
        }),
        n_reps: reps,
        alpha: 0.05,
        b_null: 2000,
        master_seed: seed,
        method_set: methods,
        ties: TieMode::Error,
        mc_pairs: DEFAULT_MC_PAIRS,
    };
    powerlab::run_experiment(&spec).unwrap()
}

fn monotone_orientations() -> Check {
    let n = 1000;
    let sigmas = [bw(0.05), bw(0.2), bw(1.0)];
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for d in 3..=5 {
        let engine = StatisticEngine::new(n, d, &sigmas).unwrap();
        let base = RankMatrix::comonotone(n, d).unwrap();
        for mask in 0u32..(1 << (d - 1)) {
            let mut y = base.clone();
            for j in 0..d - 1 {
                if mask & (1 << j) != 0 {
                    y = y.reverse_column(j + 1).unwrap();
                }
            }
            for v in engine.i_hats(&y).unwrap() {
                worst = worst.max((v - 1.0).abs());
            }
            cases += 1;
        }
    }
    let msg = format!("{cases} orientation patterns x 3 bandwidths, max |I - 1| = {worst:.2e}");
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn closed_form_vs_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sigmas = [0.1, 0.3, 1.0];
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = rng.random_range(2..=12);
        let d = rng.random_range(2..=3);
        let sigma = bw(sigmas[case % 3]);
        let y = random_ranks(&mut rng, n, d);
        let closed = kernel::statistic(&y, sigma).unwrap().i_hat;
        let pi = WeightedAtoms::uniform_copula(n, d).unwrap();
        let num = kernel::brute_force_gamma(&WeightedAtoms::empirical_copula(&y), &pi, sigma).unwrap();
        let den = kernel::brute_force_gamma(&WeightedAtoms::max_copula(n, d), &pi, sigma).unwrap();
        worst = worst.max((closed - num / den).abs());
    }
    let msg = format!("200 cases, max deviation {worst:.2e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gram_representation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut out_of_range = 0;
    for case in 0..100 {
        let n = rng.random_range(3..=50);
        let sigma = bw([0.05, 0.1, 0.3, 1.0][case % 4]);
        let y = if case % 2 == 0 {
            random_ranks(&mut rng, n, 2)
        } else {
            dependent_ranks(&mut rng, n, 2)
        };
        let stat = kernel::statistic(&y, sigma).unwrap().i_hat;
        let gram = kernel::gram_oracle_d2(&y, sigma).unwrap();
        worst = worst.max((stat - gram).abs());
        if !(0.0..=1.0).contains(&stat) {
            out_of_range += 1;
        }
    }
    let msg = format!("100 cases, max deviation {worst:.2e}, {out_of_range} outside [0,1]");
    if worst <= 1e-9 && out_of_range == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Adaptive Simpson on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

fn limit_constants() -> Check {
    let gauss = |x: f64, v: f64, s: f64| (-(x - v) * (x - v) / (2.0 * s * s)).exp();
    let mut worst_kappa: f64 = 0.0;
    let mut worst_lambda: f64 = 0.0;
    for &s in &[0.05, 0.1, 0.2, 0.5, 1.0, 3.0] {
        let inner = |u: f64| simpson(&|v| gauss(u, v, s), 0.0, 1.0, 1e-13);
        let k = simpson(&inner, 0.0, 1.0, 1e-11);
        worst_kappa = worst_kappa.max((k - kernel::kappa(bw(s))).abs());
        for d in [1, 2, 3, 5] {
            let li = simpson(&|u| inner(u).powi(d as i32), 0.0, 1.0, 1e-11);
            worst_lambda = worst_lambda.max((li - kernel::lambda_power_integral(bw(s), d)).abs());
        }
    }
    let c1 = [0.05, 0.2, 1.0, 5.0]
        .iter()
        .map(|&s| kernel::c_sigma_d(bw(s), 1).unwrap().abs())
        .fold(0.0, f64::max);
    let c = kernel::c_sigma_d(bw(0.2), 2).unwrap();
    let gap_values: Vec<f64> = [250, 500, 1000, 2000]
        .iter()
        .map(|&n| (kernel::reference_terms(n, 2, bw(0.2)).denominator_sq() - c).abs())
        .collect();
    let gaps = gap_values.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(" > ");
    let decreasing = gap_values.windows(2).all(|w| w[1] < w[0]);
    let msg = format!(
        "kappa err {worst_kappa:.1e}, lambda^d err {worst_lambda:.1e}, |C_(s,1)| {c1:.1e}, gaps {gaps}"
    );
    if worst_kappa <= 1e-8 && worst_lambda <= 1e-8 && c1 <= 1e-12 && decreasing {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn large_bandwidth_limit() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sigma = bw(50.0);
    let mut worst: f64 = 0.0;
    for d in [2, 3] {
        for _ in 0..20 {
            let y = dependent_ranks(&mut rng, 500, d);
            let i = kernel::statistic(&y, sigma).unwrap().i_hat;
            worst = worst.max((i * i - kernel::spearman_limit(&y).unwrap()).abs());
        }
    }
    let msg = format!("40 data sets, max |I^2 - spearman| = {worst:.2e}");
    if worst <= 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn size_validity() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for generator in ["four_clouds", "normal2d:0"] {
        for n in [25, 50] {
            let r = experiment(generator, n, 2000, 6000 + n as u64, vec![Method::TMax, Method::Fdr]);
            let t_max = r.power(&Method::TMax).unwrap();
            let fdr = r.power(&Method::Fdr).unwrap();
            ok &= (t_max - 0.05).abs() <= 0.015 && fdr <= 0.065;
            lines.push(format!("{generator} n={n}: t_max {t_max:.4} fdr {fdr:.4}"));
        }
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn bandwidth_sensitivity() -> Check {
    let q01 = Method::PerSigma { q: 0.01 };
    let q50 = Method::PerSigma { q: 0.5 };
    let a = experiment("two_parabolas", 25, 1000, 71, vec![q01, q50]);
    let b = experiment("normal2d:0.5", 25, 1000, 72, vec![q01, q50]);
    let (a01, a50) = (a.power(&q01).unwrap(), a.power(&q50).unwrap());
    let (b01, b50) = (b.power(&q01).unwrap(), b.power(&q50).unwrap());
    let msg = format!("two_parabolas q.01 {a01:.3} vs q.5 {a50:.3}; normal2d(0.5) q.5 {b50:.3} vs q.01 {b01:.3}");
    if a01 - a50 >= 0.2 && b50 >= b01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn non_monotone_detection() -> Check {
    let r = experiment("circle", 100, 500, 81, vec![Method::TMax, Method::SpearmanAvgBaseline]);
    let t = r.power(&Method::TMax).unwrap();
    let s = r.power(&Method::SpearmanAvgBaseline).unwrap();
    let msg = format!("circle n=100: t_max {t:.3}, spearman {s:.3}");
    if t >= 0.5 && s <= 0.10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn irreducible_dependence() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, generator) in ["example_a", "example_b"].into_iter().enumerate() {
        let r = experiment(generator, 100, 500, 91 + i as u64, vec![Method::TMax, Method::SpearmanAvgBaseline]);
        let t = r.power(&Method::TMax).unwrap();
        let s = r.power(&Method::SpearmanAvgBaseline).unwrap();
        ok &= t - s >= 0.3;
        lines.push(format!("{generator}: t_max {t:.3}, spearman {s:.3}"));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn normal_monotonicity() -> Check {
    let n = 5000;
    let sigma = bw(bandwidth::quantile_bandwidth(n, 2, 0.5, DEFAULT_MC_PAIRS, 10).unwrap());
    let rs = [0.2, 0.5, 0.8];
    let values: Vec<f64> = rs
        .iter()
        .map(|&r| {
            let data = datagen::generate(&GeneratorSpec {
                generator: Generator::Normal2d { r },
                n,
                seed: 100,
            })
            .unwrap();
            let y = ranks::normalized_ranks(&data, TiePolicy::Error).unwrap();
            kernel::statistic(&y, sigma).unwrap().i_hat
        })
        .collect();
    let increasing = values.windows(2).all(|w| w[0] < w[1]);
    let bounded = values.iter().zip(rs).all(|(v, r)| *v <= r + 0.05);
    let msg = format!("sigma {:.4}, I = {values:.4?}", sigma.get());
    if increasing && bounded {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let increasing: [fn(f64) -> f64; 3] = [|x| x.exp(), |x| x.atan(), |x| 3.0 * x + 1.0];
    let decreasing: [fn(f64) -> f64; 3] = [|x| -x, |x| (-x).exp(), |x| 1.0 / (1.0 + x.exp())];
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(10..=200);
        let d = rng.random_range(2..=5);
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
            .collect();
        // a shared latent makes the statistic non-trivial
        let cols: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().zip(&cols[0]).map(|(a, z)| a + z).collect()).collect();
        let data = DataMatrix::from_columns(&cols).unwrap();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        let transformed: Vec<Vec<f64>> = order
            .iter()
            .map(|&j| {
                let f = if rng.random_bool(0.5) {
                    increasing[rng.random_range(0..3)]
                } else {
                    decreasing[rng.random_range(0..3)]
                };
                cols[j].iter().map(|&x| f(x)).collect()
            })
            .collect();
        let other = DataMatrix::from_columns(&transformed).unwrap();
        let ladder = bandwidth::build_ladder(n, d, 20_000, 1).unwrap();
        let engine = StatisticEngine::new(n, d, &ladder.sigmas).unwrap();
        let a = engine.i_hats(&ranks::normalized_ranks(&data, TiePolicy::Error).unwrap()).unwrap();
        let b = engine.i_hats(&ranks::normalized_ranks(&other, TiePolicy::Error).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs() / x.abs().max(f64::MIN_POSITIVE));
        }
    }
    let msg = format!("50 data sets, max relative change {worst:.2e}");
    if worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn determinism() -> Check {
    let table_bytes = || {
        let ladder = bandwidth::build_ladder(40, 3, 50_000, 12).unwrap();
        nulldist::encode_table(&nulldist::build_null_table(40, 3, &ladder, 300, 12).unwrap()).unwrap()
    };
    let generator_bytes = || {
        let mut out = Vec::new();
        for name in [
            "four_clouds", "w", "diamond", "parabola", "two_parabolas", "circle", "hyperplane2d", "normal2d",
            "aug8:circle", "hyperplane8d", "normal8d_ar", "example_a", "example_b",
        ] {
            let data = datagen::generate(&GeneratorSpec {
                generator: name.parse().unwrap(),
                n: 700,
                seed: 12,
            })
            .unwrap();
            copdep::csv_io::write_matrix(&data, &mut out).unwrap();
        }
        out
    };
    let power_bytes = || {
        let r = experiment("w", 30, 200, 12, vec![Method::TMax, Method::Fdr, Method::PerSigma { q: 0.1 }, Method::SpearmanAvgBaseline]);
        serde_json::to_vec(&r).unwrap()
    };
    let big_statistic = || {
        let y = dependent_ranks(&mut ChaCha8Rng::seed_from_u64(12), 1500, 3);
        kernel::statistic(&y, bw(0.1)).unwrap().i_hat.to_bits()
    };

    let mut mismatches = Vec::new();
    if in_pool(1, table_bytes) != in_pool(4, table_bytes) || table_bytes() != table_bytes() {
        mismatches.push("null table");
    }
    if in_pool(1, generator_bytes) != in_pool(4, generator_bytes) || generator_bytes() != generator_bytes() {
        mismatches.push("generators");
    }
    if in_pool(1, power_bytes) != in_pool(4, power_bytes) || power_bytes() != power_bytes() {
        mismatches.push("power run");
    }
    if in_pool(1, big_statistic) != in_pool(4, big_statistic) {
        mismatches.push("statistic");
    }

    // the CLI end to end, as separate processes
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_copdep");
    let csv = dir.path().join("data.csv");
    let run = |args: &[&str]| {
        let status = Command::new(exe).args(args).status().unwrap();
        assert!(status.success(), "{args:?}");
    };
    run(&["gen", "--name", "parabola", "--n", "60", "--seed", "4", "--out", csv.to_str().unwrap()]);
    let mut reports = Vec::new();
    for threads in ["1", "4", "4"] {
        let out = dir.path().join(format!("r{}.json", reports.len()));
        run(&["--threads", threads, "test", csv.to_str().unwrap(), "--seed", "9", "--b", "500", "--out", out.to_str().unwrap()]);
        reports.push(std::fs::read(&out).unwrap());
    }
    if reports.windows(2).any(|w| w[0] != w[1]) {
        mismatches.push("cli report");
    }

    if mismatches.is_empty() {
        Ok("null table, generators, power run, statistic and CLI report identical across runs and 1/4 threads".into())
    } else {
        Err(format!("differences in: {}", mismatches.join(", ")))
    }
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("monotone orientations give I = 1", monotone_orientations),
        ("closed form equals brute-force kernel distance ratio", closed_form_vs_brute_force),
        ("two-dimensional Gram representation", gram_representation),
        ("limit constants and denominator convergence", limit_constants),
        ("large-bandwidth Spearman limit", large_bandwidth_limit),
        ("size under independence", size_validity),
        ("bandwidth sensitivity pattern", bandwidth_sensitivity),
        ("non-monotone dependence detection", non_monotone_detection),
        ("dependence invisible to pairs", irreducible_dependence),
        ("normal correlation monotonicity", normal_monotonicity),
        ("invariance to monotone maps and column order", invariance),
        ("determinism across runs and thread counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
