//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::time::{Duration, Instant};

use rloco::bench::{
    benchmark_learner, contamination_experiment, counterexample_separability, lime_switch_study, mask_eval,
    run_synthetic_benchmark, switch_check, verify_centroids, verify_locality, verify_theorem1, BenchMethod,
    BenchmarkConfig, BenchmarkReport,
};
use rloco::pwl::{generate, ModelId, SyntheticSpec};
use rloco::regions::{RlocoConfig, RlocoPipeline};
use rloco::SeedTree;

const SEED: u64 = 20240531;

struct Outcome {
    criterion: usize,
    title: &'static str,
    checks: Vec<(bool, String)>,
    info: Vec<String>,
}

impl Outcome {
    fn new(criterion: usize, title: &'static str) -> Self {
        Outcome { criterion, title, checks: Vec::new(), info: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.checks.push((ok, what));
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.0)
    }

    fn print(&self) {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict}: {}", self.criterion, self.title);
        for (ok, what) in &self.checks {
            println!("    [{}] {what}", if *ok { "ok" } else { "miss" });
        }
        for line in &self.info {
            println!("    (info) {line}");
        }
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn tp(report: &BenchmarkReport, m: BenchMethod) -> Option<f64> {
    report.summary(m).and_then(|s| s.metrics.as_ref()).map(|m| m.tp_rate)
}

fn ni(report: &BenchmarkReport, m: BenchMethod) -> Option<f64> {
    report.summary(m).and_then(|s| s.metrics.as_ref()).map(|m| m.ni_mean)
}

fn at_least(v: Option<f64>, bound: f64) -> bool {
    v.is_some_and(|v| v >= bound)
}

fn at_most(v: Option<f64>, bound: f64) -> bool {
    v.is_some_and(|v| v <= bound)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("NA".into(), |v| format!("{v:.4}"))
}

fn criteria_1_to_3() -> Vec<Outcome> {
    let t = Instant::now();
    let thm = verify_theorem1(200, 8, 4, SEED).expect("theorem 1 suite");
    let thm_time = t.elapsed();
    let t = Instant::now();
    let sw = switch_check(100, SeedTree::new(SEED).derive("switch", 1)).expect("switch suite");
    let sw_time = t.elapsed();

    let mut c1 = Outcome::new(1, "closed-form local Shapley values equal subset enumeration");
    c1.check(thm.trials == 200, format!("{} random models with p <= 8, m <= 4", thm.trials));
    c1.check(thm.max_discrepancy < 1e-9, format!("max |closed form - enumeration| = {:.3e} < 1e-9", thm.max_discrepancy));
    c1.check(secs(thm_time) < 60.0, format!("runtime {:.2} s < 60 s", secs(thm_time)));

    let mut c2 = Outcome::new(2, "switch model: phi_4 / x_4 is constant and nonzero when x_6 <= 0");
    let spread = sw.ratio_max - sw.ratio_min;
    c2.check(sw.points == 100, format!("{} observations", sw.points));
    c2.check(spread < 1e-9, format!("ratio spread {spread:.3e} < 1e-9"));
    c2.check(sw.ratio_min.abs() > 1e-9, format!("ratio {:.12} is nonzero (expected {})", sw.ratio_min, sw.expected));
    c2.check(secs(sw_time) < 5.0, format!("runtime {:.3} s < 5 s", secs(sw_time)));

    let mut c3 = Outcome::new(3, "efficiency holds on every exact evaluation of criteria 1 and 2");
    let eff = thm.max_efficiency_error.max(thm.switch.max_efficiency_error).max(sw.max_efficiency_error);
    c3.check(eff < 1e-9, format!("max |sum phi - (f(x) - E f)| = {eff:.3e} < 1e-9"));
    vec![c1, c2, c3]
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let r = verify_centroids(100_000, SEED).expect("centroid suite");
    let elapsed = t.elapsed();
    let mut c = Outcome::new(4, "regime centroids in importance and input space");
    for (name, err) in [
        ("importance, x6 <= 0", r.importance_a_error),
        ("importance, x6 > 0", r.importance_b_error),
        ("input, x6 <= 0", r.input_a_error),
        ("input, x6 > 0", r.input_b_error),
    ] {
        c.check(err <= 0.02, format!("{name}: L-inf error {err:.4} <= 0.02"));
    }
    c.check(secs(elapsed) < 30.0, format!("runtime {:.2} s < 30 s at n = {}", secs(elapsed), r.n));
    c.info.push(format!("importance centroids {:.3?} and {:.3?}", r.importance_a, r.importance_b));
    c
}

fn criterion_5() -> Outcome {
    let seeds: Vec<u64> = (0..10).map(|i| SeedTree::new(SEED).derive("separability", i)).collect();
    let r = counterexample_separability(5000, &seeds).expect("separability suite");
    let mut c = Outcome::new(5, "sign counterexample: 2-means purity in base and enriched spaces");
    c.check(r.base_median <= 0.6, format!("base space median purity {:.4} <= 0.6", r.base_median));
    c.check(r.enriched_median >= 0.95, format!("enriched space median purity {:.4} >= 0.95", r.enriched_median));
    c.info.push(format!("enriched purity per seed {:.3?}", r.enriched_purity));
    c
}

fn criteria_6_and_7() -> Vec<Outcome> {
    let t = Instant::now();
    let first = run_synthetic_benchmark(&BenchmarkConfig::new(ModelId::FirstOrder, SEED)).expect("first-order benchmark");
    let mut second_cfg = BenchmarkConfig::new(ModelId::SecondOrder, SEED);
    second_cfg.methods = vec![BenchMethod::Loco, BenchMethod::RlocoTrueClusters];
    let second = run_synthetic_benchmark(&second_cfg).expect("second-order benchmark");
    let elapsed = t.elapsed();
    println!("first-order table ({} runs, n = {}):\n{}", first.config.runs, first.config.n, first.to_tsv());
    println!("second-order table ({} runs, n = {}):\n{}", second.config.runs, second.config.n, second.to_tsv());

    let mut c6 = Outcome::new(6, "ranking benchmark on the first- and second-order models");
    let r = tp(&first, BenchMethod::Rloco);
    c6.check(at_least(r, 0.87), format!("R-LOCO (affinity propagation, damping 0.8) tp {} >= 0.87", fmt(r)));
    let tc1 = tp(&first, BenchMethod::RlocoTrueClusters);
    c6.check(at_least(tc1, 0.95), format!("oracle clusters tp {} >= 0.95 on first-order", fmt(tc1)));
    let tc2 = tp(&second, BenchMethod::RlocoTrueClusters);
    c6.check(at_least(tc2, 0.95), format!("oracle clusters tp {} >= 0.95 on second-order", fmt(tc2)));
    let loco = tp(&first, BenchMethod::Loco);
    c6.check(loco.is_some_and(|v| (v - 0.50).abs() <= 0.05), format!("LOCO tp {} within 0.50 +/- 0.05", fmt(loco)));
    let lsv = tp(&first, BenchMethod::Lsv);
    c6.check(at_most(lsv, 0.60), format!("L-SV tp {} <= 0.60", fmt(lsv)));
    let lime = tp(&first, BenchMethod::Lime);
    c6.check(at_most(lime, 0.65), format!("LIME tp {} <= 0.65", fmt(lime)));
    let ni_r = ni(&first, BenchMethod::Rloco);
    c6.check(at_most(ni_r, 0.05), format!("R-LOCO NI mean {} <= 0.05", fmt(ni_r)));
    let ni_l = ni(&first, BenchMethod::Lsv);
    c6.check(at_least(ni_l, 0.07), format!("L-SV NI mean {} >= 0.07", fmt(ni_l)));
    c6.check(secs(elapsed) < 1800.0, format!("benchmark runtime {:.0} s < 1800 s", secs(elapsed)));
    c6.info.push(format!(
        "R-LOCO with nearest-centroid assignment: tp {}, NI mean {}",
        fmt(tp(&first, BenchMethod::RlocoCentroid)),
        fmt(ni(&first, BenchMethod::RlocoCentroid))
    ));
    c6.info.push(format!("second-order LOCO tp {}", fmt(tp(&second, BenchMethod::Loco))));
    if let Some(s) = first.summary(BenchMethod::Loco) {
        let worst = s.tp_by_run.iter().map(|t| (t - 0.5).abs()).fold(0.0, f64::max);
        c6.info.push(format!("LOCO per-run tp max |tp - 0.50| = {worst:.4} over {} runs", s.tp_by_run.len()));
    }
    let median_tp = |m: BenchMethod| {
        first.summary(m).map(|s| {
            let mut v = s.tp_by_run.clone();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
    };
    if let Some(r) = median_tp(BenchMethod::Rloco) {
        for m in [BenchMethod::Lsv, BenchMethod::Lime] {
            if let Some(t) = median_tp(m) {
                c6.info.push(format!("median per-run tp gap R-LOCO - {m:?} = {:.4}", r - t));
            }
        }
    }

    let mut c7 = Outcome::new(7, "k-means variants of R-LOCO on the first-order model");
    for k in [2, 4, 8, 20] {
        let v = tp(&first, BenchMethod::RlocoKMeans(k));
        c7.check(at_least(v, 0.85), format!("KMeans-{k} tp {} >= 0.85", fmt(v)));
    }
    vec![c6, c7]
}

fn criterion_8() -> Outcome {
    let loc = verify_locality(50, 2000, SEED).expect("locality suite");
    let grid: Vec<f64> = (0..=10).map(|i| 0.05 * i as f64).collect();
    let con = contamination_experiment(&grid, 100_000, SEED).expect("contamination suite");
    let mut c = Outcome::new(8, "locality under oracle clusters and linear contamination bias");
    c.check(
        loc.max_outside_mass == 0.0,
        format!("mass outside active and boundary features {} == 0 over {} models", loc.max_outside_mass, loc.trials),
    );
    c.check(con.r_squared >= 0.99, format!("bias vs rho linear fit R^2 {:.6} >= 0.99", con.r_squared));
    c.info.push(format!("{} of {} locality trials populated both regions", loc.informative_trials, loc.trials));
    c.info.push(format!("contamination slope {:.4}", con.slope));
    c
}

fn criterion_9() -> Outcome {
    let r = lime_switch_study(20, 5000, SEED).expect("LIME suite");
    let mut c = Outcome::new(9, "LIME on the switch model");
    let bound = 0.1 * r.a4.abs();
    c.check(r.mean_abs_x3 > bound, format!("mean |x3 coefficient| {:.4} > 0.1 |a4| = {bound}", r.mean_abs_x3));
    c.check(
        r.points_with_sign_flip >= 1,
        format!("halving the bandwidth flips a sign at {} of {} points", r.points_with_sign_flip, r.points),
    );
    c.info.push(format!("fraction of coefficients that flipped {:.3}", r.sign_flip_fraction));
    c
}

fn criterion_10() -> Outcome {
    let seeds = SeedTree::new(SEED);
    let (data, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 4000, seeds.derive("mask-data", 0))).unwrap();
    let split = data.split(seeds.derive("mask-split", 0)).unwrap();
    let cfg = RlocoConfig { learner: benchmark_learner(data.p()), seed: seeds.derive("mask-rloco", 0), ..Default::default() };
    let pipe = RlocoPipeline::fit(&split.fit, &split.calibration, &cfg, None).expect("R-LOCO pipeline");
    let scores: Vec<Vec<f64>> =
        pipe.explain_dataset(&split.test, true).unwrap().into_iter().map(|e| e.attribution.scores).collect();
    let attrs = vec![("R-LOCO".to_string(), scores)];
    let r = mask_eval(&split.test, &pipe.models.full, &attrs, &[0, 1]).expect("masking");
    let curve = r.curve("R-LOCO").unwrap();
    let mut c = Outcome::new(10, "masking sanity on the first-order model with a forest");
    c.check(
        curve.top_change[0] == 0.0 && curve.bottom_change[0] == 0.0,
        format!("k = 0 changes {} and {} are exactly 0", curve.top_change[0], curve.bottom_change[0]),
    );
    let (top, bottom) = (curve.top_change[1].abs(), curve.bottom_change[1].abs());
    c.check(bottom < 0.1 * top, format!("|bottom-1 change| {bottom:.5} < 10% of |top-1 change| {top:.5}"));
    c.info.push(format!("baseline mean absolute error {:.5}", r.baseline_error));
    c
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = criteria_1_to_3();
    outcomes.push(criterion_4());
    outcomes.push(criterion_5());
    outcomes.extend(criteria_6_and_7());
    outcomes.push(criterion_8());
    outcomes.push(criterion_9());
    outcomes.push(criterion_10());
    outcomes.sort_by_key(|o| o.criterion);
    println!();
    for o in &outcomes {
        o.print();
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.criterion).collect();
    println!("\n{} of {} criteria pass", outcomes.len() - failed.len(), outcomes.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
