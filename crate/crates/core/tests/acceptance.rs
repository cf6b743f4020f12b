//! Acceptance suite: one PASS/FAIL line per criterion, followed by a
//! summary. Runs without the libtest harness so the lines are always shown;
//! the process exits non-zero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use cluster_limits::cli::{run_experiment, Experiment, ExperimentConfig, ExperimentReport};
use cluster_limits::exceed::{CycleClusterer, LevelSchedule};
use cluster_limits::laws::{make_cluster_law, Aperiodicity, ClusterLaw, LawDescriptor, Pmf};
use cluster_limits::oracle::{oracle_report, ConditionalClusterLaw, OracleGrid};
use cluster_limits::pathgen::{segments, Construction, Model};
use cluster_limits::seed::replication_rng;
use cluster_limits::stats::{sup_distance, EmpiricalPmf};

struct Suite {
    results: Vec<(String, bool)>,
}

impl Suite {
    fn line(&mut self, id: &str, pass: bool, detail: String) -> bool {
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id.to_string(), pass));
        pass
    }
}

fn custom_g1_g5() -> LawDescriptor {
    LawDescriptor::Custom(vec![(1, 0.5), (5, 0.5)])
}

fn config(experiment: Experiment, law: LawDescriptor, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(experiment, law);
    c.out = out.to_path_buf();
    c.seed = 20_240_601;
    c
}

fn run(c: &ExperimentConfig) -> ExperimentReport {
    run_experiment(c).unwrap_or_else(|e| panic!("{} {}: {e}", c.experiment, c.law))
}

fn stat(report: &ExperimentReport, name: &str) -> (f64, bool) {
    let c = report
        .check(name)
        .unwrap_or_else(|| panic!("report has no check `{name}`"));
    (c.statistic.unwrap_or(f64::NAN), c.pass)
}

fn criterion1(s: &mut Suite) {
    let laws = [
        ("delta:1", LawDescriptor::Delta(1)),
        ("delta:3", LawDescriptor::Delta(3)),
        ("geometric:0.5", LawDescriptor::Geometric(0.5)),
        ("custom g1=g5=0.5", custom_g1_g5()),
        ("zeta:1.5", LawDescriptor::Zeta(1.5)),
    ];
    let mut all = true;
    for (name, d) in laws {
        let law = ClusterLaw::new(&d, Aperiodicity::Allow).unwrap();
        let rows = oracle_report(&law, &OracleGrid::default()).unwrap();
        let worst = |check: &str| {
            rows.iter()
                .filter(|r| r.check == check)
                .map(|r| r.abs_error)
                .fold(f64::NAN, f64::max)
        };
        let nu = rows
            .iter()
            .find(|r| r.check == "nu_below_bound")
            .map(|r| r.lhs)
            .unwrap();
        let failing: Vec<_> = rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| format!("{}[{}]", r.check, r.param))
            .collect();
        let pass = failing.is_empty();
        all &= pass;
        s.line(
            &format!("1 oracle identities [{name}]"),
            pass,
            format!(
                "{} rows; p_j err {:.1e} (<1e-10), sum p err {:.1e} (<1e-10), nu {nu:.6} (<=1.581977), \
                 stationarity err {:.1e} (<1e-8), delayed renewal {}{}",
                rows.len(),
                worst("p_closed_vs_quadrature"),
                worst("p_sums_to_one"),
                worst("stationarity_identity"),
                match worst("finite_delayed_renewal_linear") {
                    e if e.is_nan() => "not applicable (infinite mean)".to_string(),
                    e => format!("err {e:.1e} (<1e-9)"),
                },
                if pass { String::new() } else { format!("; failing {failing:?}") },
            ),
        );
    }
    s.line("1 oracle identities", all, "all five laws".into());
}

fn criterion2(s: &mut Suite, out: &Path) {
    let mut all = true;
    for (name, d) in [
        ("geometric:0.5", LawDescriptor::Geometric(0.5)),
        ("custom g1=g5=0.5", custom_g1_g5()),
    ] {
        let mut c = config(Experiment::Theorem1, d, out);
        c.construction = Construction::FiniteMean;
        c.n = 1_000_000;
        c.schedule = LevelSchedule::ClusterRate(100.0);
        c.reps = 120;
        let t = Instant::now();
        let r = run(&c);
        let clusters = r.results["clusters"].as_u64().unwrap();
        let (tv, tv_ok) = stat(&r, "tv-distance");
        let (p, p_ok) = stat(&r, "chi-square-p-value");
        let pass = clusters >= 10_000 && tv_ok && p_ok;
        all &= pass;
        s.line(
            &format!("2 theorem1 finite-mean [{name}]"),
            pass,
            format!(
                "{clusters} clusters with k>=2 (>=10000), TV {tv:.4} (<0.03), chi-square p {p:.4} (>0.001), {:.1}s",
                t.elapsed().as_secs_f64()
            ),
        );
    }
    s.line("2 theorem1 finite-mean", all, "geometric and custom".into());
}

fn criterion3(s: &mut Suite) {
    let g = make_cluster_law(&LawDescriptor::Zeta(1.5)).unwrap();
    let model = Model::censored(&g);
    let u = 10.0;
    let n = 10_000_000;
    let reps = 36;
    let t = Instant::now();
    let mut pmf = EmpiricalPmf::new();
    for r in 0..reps {
        let mut clusters = CycleClusterer::new(u);
        for seg in segments(&model, n, replication_rng(31, r)) {
            clusters.push(&seg);
        }
        pmf.merge(&EmpiricalPmf::from_sizes(
            clusters
                .finish()
                .iter()
                .filter(|c| !c.delayed)
                .map(|c| c.size),
        ));
    }
    let bound = g.tail(11);
    let se = pmf.max_std_error();
    let sup = sup_distance(&pmf, &g, pmf.max_size());
    let exact = ConditionalClusterLaw::new(&g, u);
    let exact_sup = sup_distance(&exact, &g, 400);
    let mc = pmf.total() >= 10_000 && sup <= bound + 3.0 * se;
    let oracle = exact_sup <= bound;
    s.line(
        "3 theorem1 infinite-mean [zeta:1.5, censored, u=10]",
        mc && oracle,
        format!(
            "{} clusters (>=10000), empirical sup {sup:.4} <= g_bar_11 + 3 se = {bound:.4} + {:.4}; \
             exact conditional sup {exact_sup:.4} <= {bound:.4}, {:.1}s",
            pmf.total(),
            3.0 * se,
            t.elapsed().as_secs_f64()
        ),
    );
}

fn criterion4(s: &mut Suite, out: &Path) {
    let mut all = true;
    let cases = [
        (
            "finite-mean geometric:0.5",
            LawDescriptor::Geometric(0.5),
            Construction::FiniteMean,
        ),
        (
            "censored zeta:1.5",
            LawDescriptor::Zeta(1.5),
            Construction::Censored,
        ),
    ];
    for (name, d, construction) in cases {
        let mut c = config(Experiment::CompoundPoisson, d, out);
        c.construction = construction;
        c.n = 100_000;
        c.schedule = LevelSchedule::ClusterRate(5.0);
        c.reps = 4000;
        let t = Instant::now();
        let r = run(&c);
        let (d, d_ok) = stat(&r, "dispersion-index");
        let (p, p_ok) = stat(&r, "gap-ks-p-value");
        all &= d_ok && p_ok;
        s.line(
            &format!("4 compound Poisson [{name}, rho=5]"),
            d_ok && p_ok,
            format!(
                "{} replications, dispersion {d:.4} (in [0.9, 1.1]), gap KS p {p:.4} (>0.001), {:.1}s",
                c.reps,
                t.elapsed().as_secs_f64()
            ),
        );
    }
    s.line("4 compound Poisson", all, "both constructions".into());
}

fn criterion5(s: &mut Suite, out: &Path) {
    let mut all = true;
    for (name, d) in [
        ("geometric:0.5", LawDescriptor::Geometric(0.5)),
        ("zeta:1.5", LawDescriptor::Zeta(1.5)),
    ] {
        let mut c = config(Experiment::Remark1, d, out);
        c.n = 1_000_000;
        c.reps = 1;
        let r = run(&c);
        let (ks, ok) = stat(&r, "marginal-ks-distance");
        all &= ok;
        s.line(
            &format!("5 marginal law [{name}, censored]"),
            ok,
            format!(
                "{} samples, KS distance {ks:.5} (<0.005)",
                r.results["samples"]
            ),
        );
    }
    s.line("5 marginal law", all, "geometric and zeta".into());
}

fn criterion6(s: &mut Suite, out: &Path) {
    // (a) i.i.d. case at u = ln n
    let mut c = config(Experiment::Remark2, LawDescriptor::Delta(1), out);
    c.construction = Construction::FiniteMean;
    c.n = 1_000_000;
    c.schedule = LevelSchedule::TailRate(1.0);
    c.reps = 20;
    let r = run(&c);
    let (theta, ok_a) = stat(&r, "extremal-index");
    s.line(
        "6a extremal index [delta:1]",
        ok_a,
        format!("theta {theta:.4} (in [0.9, 1.1])"),
    );

    // (b) finite mean 2
    let mut c = config(Experiment::Remark2, LawDescriptor::Geometric(0.5), out);
    c.construction = Construction::FiniteMean;
    c.n = 10_000_000;
    c.schedule = LevelSchedule::ClusterRate(1000.0);
    c.reps = 4;
    let r = run(&c);
    let (theta, blocks_ok) = stat(&r, "extremal-index");
    let mut c = config(Experiment::Remark2, LawDescriptor::Geometric(0.5), out);
    c.construction = Construction::FiniteMean;
    c.n = 100_000;
    c.schedule = LevelSchedule::TailRate(1.0);
    c.reps = 4000;
    let r = run(&c);
    let (gap, maxima_ok) = stat(&r, "maxima");
    let m = &r.results["maxima"];
    let se = m["std_error"].as_f64().unwrap();
    s.line(
        "6b extremal index [geometric:0.5, finite-mean]",
        blocks_ok && maxima_ok,
        format!(
            "theta {theta:.4} at n=1e7 (in [0.45, 0.55]); P(M_n <= u_n) {:.4} vs e^-0.5 = {:.4}, \
             |diff| {gap:.4} (<0.02 + 3 se = {:.4}) over {} replications",
            m["empirical"].as_f64().unwrap(),
            m["predicted"].as_f64().unwrap(),
            0.02 + 3.0 * se,
            c.reps
        ),
    );

    // (c) infinite mean
    let mut c = config(Experiment::Remark2, LawDescriptor::Zeta(1.5), out);
    c.construction = Construction::Censored;
    c.n = 10_000_000;
    c.schedule = LevelSchedule::ClusterRate(100.0);
    c.reps = 100;
    let t = Instant::now();
    let r = run(&c);
    let thetas: Vec<f64> = r.results["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["theta"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let decreasing = r.check("extremal-index-decreasing").is_some_and(|c| c.pass);
    let (top, top_ok) = stat(&r, "extremal-index-top");
    s.line(
        "6c extremal index [zeta:1.5, censored]",
        decreasing && top_ok,
        format!(
            "theta at n = 1e5, 1e6, 1e7: {:.4}, {:.4}, {:.4}; decreasing {decreasing}; theta(1e7) {top:.4} (<0.1), {:.1}s",
            thetas[0],
            thetas[1],
            thetas[2],
            t.elapsed().as_secs_f64()
        ),
    );
}

fn criterion7(s: &mut Suite) {
    let base = tempfile::tempdir().unwrap();
    let mut all = true;
    let cases = [
        (Experiment::Theorem1, LawDescriptor::Geometric(0.5)),
        (Experiment::CompoundPoisson, LawDescriptor::Zeta(1.5)),
        (Experiment::Remark1, LawDescriptor::Geometric(0.5)),
        (Experiment::Remark2, LawDescriptor::Zeta(1.5)),
        (Experiment::Oracle, LawDescriptor::Delta(3)),
    ];
    for (experiment, law) in cases {
        let bytes: Vec<Vec<u8>> = (0..2)
            .map(|i| {
                let dir = base.path().join(format!("{experiment}-{i}"));
                let mut c = config(experiment, law.clone(), &dir);
                c.n = 20_000;
                c.reps = 40;
                c.threads = 2;
                run(&c);
                std::fs::read(dir.join("report.json")).unwrap()
            })
            .collect();
        let same = bytes[0] == bytes[1];
        all &= same;
        s.line(
            &format!("7 determinism [{experiment}]"),
            same,
            format!(
                "report.json {} bytes, identical across two runs: {same}",
                bytes[0].len()
            ),
        );
    }
    s.line("7 determinism", all, "every experiment".into());
}

fn main() {
    let mut s = Suite {
        results: Vec::new(),
    };
    let out = tempfile::tempdir().unwrap();
    let start = Instant::now();
    criterion1(&mut s);
    criterion2(&mut s, out.path());
    criterion3(&mut s);
    criterion4(&mut s, out.path());
    criterion5(&mut s, out.path());
    criterion6(&mut s, out.path());
    criterion7(&mut s);
    let failed: Vec<_> = s
        .results
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.as_str())
        .collect();
    println!(
        "acceptance: {} lines, {} failed, {:.1}s",
        s.results.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join("; "));
        std::process::exit(1);
    }
}
