//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs every registered experiment at its default (full) scale with a fixed
//! seed. Plain `main` so the output is a readable table rather than a list of
//! libtest names.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use vrjp_lab::experiments::{execute, Outcome, Params};
use vrjp_lab::stats::TestReport;

const SEED: u64 = 20_240_611;

struct Criterion {
    id: u32,
    experiment: &'static str,
    title: &'static str,
    /// Wall-clock budget, when the criterion states one.
    budget: Option<Duration>,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, experiment: "dufresne_diagonal", title: "continuum diagonal kernel ~ 1/(2 gamma)", budget: Some(Duration::from_secs(120)) },
    Criterion { id: 2, experiment: "dufresne_ratio", title: "truncated ratio ~ 1/(2 gamma) at lambda 0.1, 5, 40", budget: None },
    Criterion { id: 3, experiment: "functional_identity", title: "quadratic form ~ (int f)^2/(2 gamma)", budget: None },
    Criterion { id: 4, experiment: "discrete_green_law", title: "discrete diagonal Green entry ~ 1/(2 gamma)", budget: None },
    Criterion { id: 5, experiment: "explicit_inverse", title: "explicit inverse matches dense solve", budget: None },
    Criterion { id: 6, experiment: "matsumoto_yor_kernel", title: "chain Z_20 and kernel Z_20 agree in law", budget: None },
    Criterion { id: 7, experiment: "intertwining", title: "psi_n | Z_n ~ IG(1, 1/z) by deciles", budget: None },
    Criterion { id: 8, experiment: "z_diffusion", title: "pathwise Z_1 and Euler-Maruyama Z_1 agree", budget: None },
    Criterion { id: 9, experiment: "mbg_transform", title: "ln V_t has mean -t/2 and variance t", budget: None },
    Criterion { id: 10, experiment: "mean_t1_quadrature", title: "quadrature gives pi/sqrt(E)", budget: Some(Duration::from_secs(10)) },
    Criterion { id: 11, experiment: "renewal", title: "interarrival mean pi/sqrt(E), no lag-1 correlation", budget: None },
    Criterion { id: 12, experiment: "dos_sweep", title: "N(E)/(2 lambda) -> sqrt(E)/pi", budget: Some(Duration::from_secs(600)) },
    Criterion { id: 13, experiment: "deterministic_spectrum", title: "flat-path spectrum and phase bracket", budget: None },
    Criterion { id: 14, experiment: "ks_null_calibration", title: "KS rejection rate under the null", budget: None },
];

fn describe(r: &TestReport) -> String {
    format!("{} {:.4e} {} {:.4e}", r.label, r.statistic, if r.passed() { "<" } else { ">=" }, r.critical)
}

fn main() -> ExitCode {
    let mut failures = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let result: Result<Outcome, _> = execute(c.experiment, &Params::new(), SEED + c.id as u64);
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(outcome) => {
                let in_time = c.budget.is_none_or(|b| elapsed <= b);
                let mut parts: Vec<String> = outcome.reports.iter().map(describe).collect();
                if let Some(b) = c.budget {
                    parts.push(format!("runtime {:.1}s (budget {}s)", elapsed.as_secs_f64(), b.as_secs()));
                }
                (outcome.passed() && in_time, parts.join("; "))
            }
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!ok);
        println!(
            "{} [{:>2}] {:<22} {} ({:.1}s) | {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.experiment,
            c.title,
            elapsed.as_secs_f64(),
            detail
        );
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failures, CRITERIA.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
