//! The course-scheduling family: `n` courses to place in `n` consecutive
//! periods, with `p` breaks spread through the morning, and a runner that
//! averages the revision distance and time over a series of variants.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::algebra::{AlgebraSpec, Relation};
use crate::closure::ClosureFormula;
use crate::qcn::VariableUniverse;
use crate::revision::{revise_with, RevisionError, RevisionOptions, RevisionProblem};

const ZOE_COURSES: [&str; 4] = ["English", "biology", "history", "maths"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Revision(#[from] RevisionError),
}

#[derive(Debug, Clone)]
pub struct ScheduleProblem {
    pub n: usize,
    pub p: usize,
    pub variant: usize,
    pub courses: Vec<String>,
    pub periods: Vec<String>,
    pub breaks: Vec<String>,
    /// The two courses that must not be adjacent this year.
    pub separated: (String, String),
    pub psi_hat: ClosureFormula,
    pub mu_hat: ClosureFormula,
    pub universe: Arc<VariableUniverse>,
}

impl ScheduleProblem {
    pub fn revision_problem<'a>(&self, a: &'a AlgebraSpec) -> RevisionProblem<'a> {
        RevisionProblem::with_universe(
            self.psi_hat.clone(),
            self.mu_hat.clone(),
            self.universe.clone(),
            a,
        )
    }
}

fn rel(a: &AlgebraSpec, names: &[&str]) -> Relation {
    a.relation_from_names(names.iter().copied())
        .expect("Allen relation names")
}

/// Positions (indices of the period each break follows) of `p` breaks.
fn break_positions(n: usize, p: usize) -> Vec<usize> {
    (1..=p).map(|k| k * (n - 1) / (p + 1)).collect()
}

/// Builds variant `variant` of the `(n, p)` scheduling problem over the
/// Allen algebra.
///
/// Periods form a meets-chain with the breaks inserted after the periods
/// given by [`break_positions`]. Courses are pairwise distinct, each equal to
/// some period, and last year course `k` was in period `k`. The new
/// constraint separates (`b` or `bi`) one pair of courses that were in
/// adjacent periods; `variant` picks the pair, cycling when there are fewer
/// adjacent pairs than variants.
pub fn generate_schedule(
    n: usize,
    p: usize,
    variant: usize,
    a: &AlgebraSpec,
) -> Result<ScheduleProblem, BenchError> {
    if n < 2 {
        return Err(BenchError::InvalidParameters(format!(
            "n = {n}, need at least 2 courses"
        )));
    }
    if variant >= n - 1 {
        return Err(BenchError::InvalidParameters(format!(
            "variant {variant} out of range 0..{}",
            n - 1
        )));
    }
    for name in ["b", "bi", "m", "eq"] {
        if a.base_index(name).is_none() {
            return Err(BenchError::InvalidParameters(format!(
                "algebra `{}` has no `{name}` relation",
                a.name()
            )));
        }
    }

    let courses: Vec<String> = if n == 4 {
        ZOE_COURSES.iter().map(|c| c.to_string()).collect()
    } else {
        (1..=n).map(|k| format!("course{k}")).collect()
    };
    let periods: Vec<String> = (0..n).map(|k| format!("t{}_{}", 8 + k, 9 + k)).collect();
    let positions = break_positions(n, p);
    let breaks: Vec<String> = (1..=p).map(|k| format!("break{k}")).collect();

    let mut chain: Vec<&str> = Vec::new();
    for (k, period) in periods.iter().enumerate() {
        chain.push(period);
        for (b, &pos) in breaks.iter().zip(&positions) {
            if pos == k {
                chain.push(b);
            }
        }
    }

    let adjacent: Vec<usize> = (0..n - 1).filter(|k| !positions.contains(k)).collect();
    if adjacent.is_empty() {
        return Err(BenchError::InvalidParameters(format!(
            "no two consecutive periods without a break for n = {n}, p = {p}"
        )));
    }
    let first = adjacent[variant % adjacent.len()];
    let separated = (courses[first].clone(), courses[first + 1].clone());

    let meets = rel(a, &["m"]);
    let eq = rel(a, &["eq"]);
    let beta1 = chain
        .windows(2)
        .map(|w| ClosureFormula::atom(w[0], meets, w[1]));
    let mut beta2 = Vec::new();
    for (i, c1) in courses.iter().enumerate() {
        for c2 in &courses[i + 1..] {
            beta2.push(ClosureFormula::atom(c1, eq, c2).negate());
        }
    }
    let beta3 = courses
        .iter()
        .map(|c| ClosureFormula::or(periods.iter().map(|t| ClosureFormula::atom(c, eq, t))));
    let beta: Vec<ClosureFormula> = beta1.chain(beta2).chain(beta3).collect();

    let pi = courses
        .iter()
        .zip(&periods)
        .map(|(c, t)| ClosureFormula::atom(c, eq, t));
    let gamma = ClosureFormula::atom(&separated.0, rel(a, &["b", "bi"]), &separated.1);

    let psi_hat = ClosureFormula::and(beta.iter().cloned().chain(pi));
    let mu_hat = ClosureFormula::and(beta.iter().cloned().chain([gamma]));

    let universe = Arc::new(VariableUniverse::new(
        chain
            .iter()
            .map(|v| v.to_string())
            .chain(courses.iter().cloned()),
    ));

    Ok(ScheduleProblem {
        n,
        p,
        variant,
        courses,
        periods,
        breaks,
        separated,
        psi_hat,
        mu_hat,
        universe,
    })
}

/// One `(n, p)` line of the benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub p: usize,
    pub variable_count: usize,
    /// Distance of each variant in the series.
    pub deltas: Vec<u32>,
    /// Average distance; `None` when the row ran out of time.
    pub delta: Option<f64>,
    /// Average seconds per revision.
    pub wall_time: f64,
    pub timed_out: bool,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Per-row time budget.
    pub time_budget: Option<Duration>,
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            time_budget: Some(Duration::from_secs(3600)),
            parallel: false,
        }
    }
}

/// Runs the `n - 1` variants of each `(n, p)` and averages distance and time.
pub fn run_bench(
    params: &[(usize, usize)],
    a: &AlgebraSpec,
    options: &BenchOptions,
) -> Result<Vec<BenchRow>, BenchError> {
    for &(n, p) in params {
        generate_schedule(n, p, 0, a)?;
    }
    let mut rows = Vec::new();
    for &(n, p) in params {
        let start = Instant::now();
        let deadline = options.time_budget.map(|b| start + b);
        let mut deltas = Vec::new();
        let mut elapsed = Duration::ZERO;
        let mut timed_out = false;
        let mut variable_count = 2 * n + p;
        for variant in 0..n.saturating_sub(1) {
            let problem = generate_schedule(n, p, variant, a)?;
            variable_count = problem.universe.len();
            let revision_options = RevisionOptions {
                parallel: options.parallel,
                deadline,
                ..Default::default()
            };
            let t0 = Instant::now();
            let outcome = revise_with(&problem.revision_problem(a), &revision_options);
            elapsed += t0.elapsed();
            match outcome {
                Ok(result) => deltas.push(result.delta.unwrap_or(0)),
                Err(RevisionError::TimeBudgetExceeded) => {
                    timed_out = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let runs = deltas.len().max(1) as f64;
        rows.push(BenchRow {
            n,
            p,
            variable_count,
            delta: (!timed_out && !deltas.is_empty())
                .then(|| deltas.iter().map(|&d| f64::from(d)).sum::<f64>() / deltas.len() as f64),
            deltas,
            wall_time: elapsed.as_secs_f64() / runs,
            timed_out,
        });
    }
    Ok(rows)
}

/// Aligned text table: n, p, #Variables, Avg distance, Avg time (s).
pub fn render_table(rows: &[BenchRow]) -> String {
    let header = ["n", "p", "#Variables", "Avg distance", "Avg time (s)"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.n.to_string(),
                r.p.to_string(),
                r.variable_count.to_string(),
                r.delta
                    .map_or_else(|| "---".to_string(), |d| format!("{d:.1}")),
                if r.timed_out {
                    "> budget".to_string()
                } else {
                    format!("{:.3}", r.wall_time)
                },
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "| {} |", parts.join(" | "));
    };
    line(&mut out, &header);
    let _ = writeln!(
        out,
        "|{}|",
        widths
            .iter()
            .map(|w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("|")
    );
    for row in &cells {
        line(
            &mut out,
            &row.iter().map(String::as_str).collect::<Vec<_>>(),
        );
    }
    out
}

/// CSV with columns `n,p,variables,delta,seconds`; unknown values are empty.
pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,p,variables,delta,seconds\n");
    for r in rows {
        let delta = r.delta.map(|d| format!("{d:.3}")).unwrap_or_default();
        let seconds = if r.timed_out {
            String::new()
        } else {
            format!("{:.6}", r.wall_time)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n, r.p, r.variable_count, delta, seconds
        );
    }
    out
}
