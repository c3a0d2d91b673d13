//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.
//!
//!     cargo test -p ouq-cli --test acceptance

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ouq_cli::config::{BandEndpoints, MeanBand};
use ouq_cli::{best_run, load_config, solve_runs, RunConfig, RunOutcome};
use ouq_core::{
    ballistic_limit, de_solve, flatten, pack, perforation_area, unflatten, unpack, Bounds,
    DESettings, DiscreteMeasure, FeasibilityAudit, OuqRun, ProductMeasure, SurrogateParams,
    TerminationRule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const THIN: f64 = 1.524;
const THICK: f64 = 2.667;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, outcome: Result<String, String>) {
        match outcome {
            Ok(detail) => println!("PASS  [{id}] {name}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL  [{id}] {name}: {detail}");
            }
        }
    }
}

fn check(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../paper.config")
}

fn load_reference() -> RunConfig {
    load_config(&reference_config()).expect("reference config loads")
}

struct BestOf {
    outcomes: Vec<RunOutcome>,
    elapsed: Duration,
}

impl BestOf {
    fn run(config: &RunConfig) -> Self {
        let start = Instant::now();
        let outcomes = solve_runs(config).expect("restarts succeed");
        Self {
            outcomes,
            elapsed: start.elapsed(),
        }
    }

    fn best(&self) -> &RunOutcome {
        best_run(&self.outcomes).expect("at least one run")
    }

    fn bound(&self) -> f64 {
        self.best().result.probability_bound
    }
}

fn analytic_bound() -> f64 {
    let p = SurrogateParams::default();
    let v = ballistic_limit(THICK, 0.0, &p).unwrap();
    1.0 - 5.5 / perforation_area(THIN, 0.0, v, &p).unwrap()
}

fn mass_within(factor: &DiscreteMeasure, centre: f64, radius: f64) -> f64 {
    let total = factor.mass();
    factor
        .weights()
        .iter()
        .zip(factor.coords())
        .filter(|(_, x)| (x - centre).abs() <= radius)
        .map(|(w, _)| w / total)
        .sum()
}

fn criterion_best_bound(wide: &BestOf) -> Result<String, String> {
    let bound = wide.bound();
    let per_run = wide.elapsed / wide.outcomes.len() as u32;
    check(
        (bound - 0.379).abs() <= 0.010 && per_run <= Duration::from_secs(300),
        format!(
            "best of {} = {bound:.6} (run {}), {:.2?} total",
            wide.outcomes.len(),
            wide.best().run,
            wide.elapsed
        ),
    )
}

fn criterion_analytic(wide: &BestOf) -> Result<String, String> {
    let oracle = analytic_bound();
    let bound = wide.bound();
    check(
        (bound - oracle).abs() <= 0.01 && bound <= oracle + 0.005,
        format!("oracle {oracle:.6}, optimizer {bound:.6}"),
    )
}

fn criterion_structure(wide: &BestOf) -> Result<String, String> {
    let m = &wide.best().result.maximizer;
    let [h, theta, v] = m.factors() else {
        return Err("maximizer is not three-dimensional".into());
    };
    let near_endpoint = h
        .weights()
        .iter()
        .zip(h.coords())
        .filter(|(w, _)| **w > 0.0)
        .all(|(_, x)| (x - THIN).abs() <= 0.01 * THIN || (x - THICK).abs() <= 0.01 * THICK);
    let thin = mass_within(h, THIN, 0.01 * THIN);
    let speed = mass_within(v, 2.289, 0.01);
    let flat = mass_within(theta, 0.0, 0.02);
    check(
        near_endpoint && (thin - 0.621).abs() <= 0.02 && speed >= 1.0 - 1e-9 && flat >= 1.0 - 1e-9,
        format!(
            "thickness at endpoints: {near_endpoint}, thin weight {thin:.4}, \
             speed mass near 2.289 {speed:.6}, obliquity mass near 0 {flat:.6}"
        ),
    )
}

fn criterion_ballistic_limit() -> Result<String, String> {
    let v = ballistic_limit(THICK, 0.0, &SurrogateParams::default()).unwrap();
    check((v - 2.2885).abs() <= 0.0005, format!("{v:.6} km/s"))
}

fn random_factor(rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let n = rng.gen_range(1..=4);
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    DiscreteMeasure::from_parts(&w, &x, -5.0, 5.0).unwrap()
}

fn random_product(rng: &mut ChaCha8Rng) -> ProductMeasure {
    let d = rng.gen_range(1..=4);
    pack((0..d).map(|_| random_factor(rng)).collect()).unwrap()
}

fn brute_force(
    factors: &[DiscreteMeasure],
    prefix: &mut Vec<f64>,
    f: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let Some((head, tail)) = factors.split_first() else {
        return f(prefix);
    };
    let mut acc = 0.0;
    for (w, x) in head.weights().into_iter().zip(head.coords()) {
        prefix.push(x);
        acc += w * brute_force(tail, prefix, f);
        prefix.pop();
    }
    acc
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn criterion_measure_properties() -> Result<String, String> {
    const CASES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failed = Vec::new();
    let response = |x: &[f64]| {
        x.iter()
            .enumerate()
            .map(|(i, v)| v * (i as f64 + 1.0) + v.cos())
            .sum::<f64>()
    };
    for case in 0..CASES {
        let p = random_product(&mut rng);
        if unflatten(&flatten(&p), &p.layout()).unwrap() != p {
            failed.push(format!("flatten #{case}"));
        }
        if pack(unpack(p.clone())).unwrap() != p {
            failed.push(format!("pack #{case}"));
        }

        let m = random_factor(&mut rng);
        let (mean, range, mass) = (m.mean().unwrap(), m.range(), m.mass());
        let n = m.normalize().unwrap();
        if !(close(n.mean().unwrap(), mean) && close(n.range(), range) && close(n.mass(), 1.0)) {
            failed.push(format!("normalize #{case}"));
        }
        let target = rng.gen_range(-10.0..10.0);
        let s = m.set_mean(target).unwrap();
        if !(close(s.mean().unwrap(), target) && close(s.range(), range) && close(s.mass(), mass)) {
            failed.push(format!("set_mean #{case}"));
        }
        if range > 0.0 {
            let target = rng.gen_range(0.0..10.0);
            let r = m.set_range(target).unwrap();
            if !(close(r.range(), target)
                && close(r.mean().unwrap(), mean)
                && close(r.mass(), mass))
            {
                failed.push(format!("set_range #{case}"));
            }
        }

        let q = p.normalized().unwrap();
        let e = q.expectation(response).unwrap();
        if !close(e, brute_force(q.factors(), &mut Vec::new(), &response)) {
            failed.push(format!("expectation #{case}"));
        }
        let cut = rng.gen_range(-5.0..5.0);
        let event = |x: &[f64]| x.iter().sum::<f64>() <= cut;
        let pr = q.event_probability(event).unwrap();
        let oracle = brute_force(q.factors(), &mut Vec::new(), &|x| {
            f64::from(u8::from(event(x)))
        });
        if !close(pr, oracle) {
            failed.push(format!("event_probability #{case}"));
        }
    }
    check(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{CASES} cases of each property")
        } else {
            format!("{} failures, first: {}", failed.len(), failed[0])
        },
    )
}

fn criterion_feasibility(config: &RunConfig) -> Result<String, String> {
    let mut evaluations = 0;
    let mut mass_dev: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut violations = 0;
    for k in 0..config.runs {
        let problem = config.problem(config.seed + k as u64).unwrap();
        let audit = FeasibilityAudit::new();
        OuqRun::new(&problem).with_audit(&audit).solve().unwrap();
        let s = audit.stats();
        evaluations += s.evaluations;
        violations += s.mass_violations + s.band_violations;
        mass_dev = mass_dev.max(s.max_mass_deviation);
        lo = lo.min(s.min_expectation);
        hi = hi.max(s.max_expectation);
    }
    check(
        violations == 0 && mass_dev <= 1e-9 && lo >= 5.5 - 1e-6 && hi <= 7.5 + 1e-6,
        format!(
            "{evaluations} evaluations, max |mass-1| {mass_dev:.2e}, E[H] in [{lo:.6}, {hi:.6}]"
        ),
    )
}

fn criterion_sphere() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for seed in 0..10 {
        let report = de_solve(
            |x| x.iter().map(|v| v * v).sum(),
            Bounds::new(vec![(-5.0, 5.0); 5]).unwrap(),
            DESettings {
                npop: 40,
                seed,
                max_generations: 500,
                ..DESettings::default()
            },
            |x| x.to_vec(),
            TerminationRule::MaxGenerations { limit: 500 },
        )
        .unwrap();
        worst = worst.max(report.opt_cost);
        monotone &= report
            .trace
            .windows(2)
            .all(|w| w[1].best_cost <= w[0].best_cost);
    }
    check(
        worst <= 1e-6 && monotone,
        format!("worst of 10 seeds {worst:.3e}, monotone history: {monotone}"),
    )
}

fn criterion_reproducible() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_ouq"))
            .arg("solve")
            .arg(reference_config())
            .args(["--seed", "42", "--runs", "1", "--output-dir"])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(status.status.success(), "{status:?}");
        let read = |f: &str| std::fs::read(dir.join(f)).unwrap();
        (read("trace_0.csv"), read("result_0.json"))
    };
    let a = run("a");
    let b = run("b");
    check(
        a == b,
        format!("trace {} bytes, result {} bytes", a.0.len(), a.1.len()),
    )
}

fn criterion_narrow_band(wide: &BestOf, config: &RunConfig) -> Result<String, String> {
    let mut narrow = config.clone();
    narrow.mean_band = MeanBand::Endpoints(BandEndpoints { m1: 6.4, m2: 6.6 });
    let narrow = BestOf::run(&narrow);
    check(
        narrow.bound() <= wide.bound() + 0.01,
        format!(
            "[6.4, 6.6]: {:.6}, [5.5, 7.5]: {:.6}",
            narrow.bound(),
            wide.bound()
        ),
    )
}

fn main() -> ExitCode {
    let config = load_reference();
    let wide = BestOf::run(&config);
    let mut report = Report { failures: 0 };
    report.record(
        1,
        "best-of-10 bound near 0.379",
        criterion_best_bound(&wide),
    );
    report.record(
        2,
        "agreement with analytic bound",
        criterion_analytic(&wide),
    );
    report.record(3, "maximizer structure", criterion_structure(&wide));
    report.record(
        4,
        "ballistic limit of thickest plate",
        criterion_ballistic_limit(),
    );
    report.record(
        5,
        "measure algebra properties",
        criterion_measure_properties(),
    );
    report.record(
        6,
        "feasibility of every evaluated measure",
        criterion_feasibility(&config),
    );
    report.record(7, "optimizer on the 5-D sphere", criterion_sphere());
    report.record(8, "byte-identical reruns", criterion_reproducible());
    report.record(
        9,
        "narrower band gives no larger bound",
        criterion_narrow_band(&wide, &config),
    );
    if report.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
