use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use qrev::algebra::AlgebraSpec;
use qrev::bench::{self, BenchError, BenchOptions};
use qrev::closure::{
    self, ClosureError, ClosureFormula, ModelOracle, ParseError, ProblemDocument,
    DEFAULT_ORACLE_BOUND,
};
use qrev::qcn::{self, VariableUniverse};
use qrev::revision::{self, RevisionError, RevisionKind, RevisionOptions, RevisionProblem};

#[derive(Parser)]
#[command(
    name = "qrev",
    version,
    about = "Belief revision and contraction over qualitative algebras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Built-in algebra name (allen, rcc8) or path to an algebra file
    #[arg(long, global = true, default_value = "allen")]
    algebra: String,

    /// Print base-relation normal forms (dnf)
    #[arg(long, global = true)]
    base: bool,

    /// Only accept revisions within this distance
    #[arg(long, global = true)]
    distmax: Option<u32>,

    /// Largest universe the model oracle will enumerate
    #[arg(long, global = true, default_value_t = DEFAULT_ORACLE_BOUND)]
    oracle_bound: usize,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Worker threads; more than one revises disjunct pairs in parallel
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Give up after this many seconds
    #[arg(long, global = true)]
    time_budget: Option<f64>,

    /// Do not print the `delta:` line of revise
    #[arg(long, global = true)]
    no_delta: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Revise psi by mu
    Revise { input: Option<PathBuf> },
    /// Contract psi by mu
    Contract { input: Option<PathBuf> },
    /// Decide consistency of a formula
    Consistent { input: Option<PathBuf> },
    /// Negation-free disjunctive normal form
    Dnf { input: Option<PathBuf> },
    /// List the scenarios satisfying a formula
    Models { input: Option<PathBuf> },
    /// Run the course-scheduling benchmark
    Bench {
        /// Comma-separated n:p pairs
        #[arg(long, default_value = "3:0,3:1,4:0")]
        sizes: String,
    },
    /// Print an algebra document
    DumpAlgebra,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

enum Failure {
    Inconsistent,
    Invalid(String),
    Resource(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Inconsistent => 1,
            Failure::Invalid(_) => 2,
            Failure::Resource(_) => 3,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<qcn::QcnError> for Failure {
    fn from(e: qcn::QcnError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<RevisionError> for Failure {
    fn from(e: RevisionError) -> Self {
        match e {
            RevisionError::Qcn(e) => e.into(),
            RevisionError::TimeBudgetExceeded => Failure::Resource(e.to_string()),
        }
    }
}

impl From<ClosureError> for Failure {
    fn from(e: ClosureError) -> Self {
        match e {
            ClosureError::Qcn(e) => e.into(),
            ClosureError::UniverseTooLarge { .. } => Failure::Resource(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = io::stdout().lock();
    match run(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = out.flush();
            match &f {
                Failure::Inconsistent => {}
                Failure::Invalid(msg) | Failure::Resource(msg) => eprintln!("qrev: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli, out: &mut impl Write) -> Result<(), Failure> {
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Failure::Invalid(e.to_string()))?;
    }
    let a = load_algebra(&cli.algebra)?;
    match &cli.command {
        Command::Revise { input } => cmd_revise(cli, &a, &read_document(input.as_ref(), &a)?, out),
        Command::Contract { input } => {
            cmd_contract(cli, &a, &read_document(input.as_ref(), &a)?, out)
        }
        Command::Consistent { input } => {
            let doc = read_document(input.as_ref(), &a)?;
            let (f, universe) = single_formula(&doc)?;
            let dnf = closure::to_dnf_won(&f, universe, &a)?;
            let yes = dnf.disjuncts.iter().any(|d| qcn::is_consistent(d, &a));
            writeln!(out, "{}", if yes { "yes" } else { "no" })?;
            Ok(())
        }
        Command::Dnf { input } => {
            let doc = read_document(input.as_ref(), &a)?;
            let (f, universe) = single_formula(&doc)?;
            let dnf = if cli.base {
                closure::to_dnf_base(&f, universe, &a)?
            } else {
                closure::to_dnf_won(&f, universe, &a)?
            };
            if dnf.is_unsat() {
                writeln!(out, "UNSAT")?;
                return Ok(());
            }
            for d in &dnf.disjuncts {
                writeln!(out, "{}", d.display(&a))?;
            }
            Ok(())
        }
        Command::Models { input } => {
            let doc = read_document(input.as_ref(), &a)?;
            let (f, universe) = single_formula(&doc)?;
            let oracle = ModelOracle::new(universe, &a, cli.oracle_bound)?;
            let mut lines: Vec<String> = oracle
                .models(&f)?
                .iter()
                .map(|s| s.formula().display(&a).to_string())
                .collect();
            lines.sort();
            for line in lines {
                writeln!(out, "{line}")?;
            }
            Ok(())
        }
        Command::Bench { sizes } => cmd_bench(cli, &a, sizes, out),
        Command::DumpAlgebra => {
            write!(out, "{}", a.source())?;
            Ok(())
        }
    }
}

fn load_algebra(selector: &str) -> Result<AlgebraSpec, Failure> {
    if AlgebraSpec::builtin_names().contains(&selector) {
        return AlgebraSpec::builtin(selector).map_err(|e| Failure::Invalid(e.to_string()));
    }
    let text = std::fs::read_to_string(selector)
        .map_err(|e| Failure::Invalid(format!("algebra `{selector}`: {e}")))?;
    AlgebraSpec::parse(&text).map_err(|e| Failure::Invalid(format!("{selector}: {e}")))
}

fn read_document(
    input: Option<&PathBuf>,
    a: &AlgebraSpec,
) -> Result<(String, ProblemDocument), Failure> {
    let (name, text) = match input {
        Some(p) if p.as_os_str() != "-" => (
            p.display().to_string(),
            std::fs::read_to_string(p)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?,
        ),
        _ => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            ("<stdin>".to_string(), text)
        }
    };
    let doc = closure::parse_document(&text, a)
        .map_err(|e: ParseError| Failure::Invalid(format!("{name}:{e}")))?;
    Ok((name, doc))
}

fn single_formula(
    (name, doc): &(String, ProblemDocument),
) -> Result<(ClosureFormula, Arc<VariableUniverse>), Failure> {
    let universe = Arc::new(doc.universe.clone());
    if let Some(body) = &doc.body {
        return Ok((body.clone(), universe));
    }
    let parts: Vec<ClosureFormula> = doc.psi.iter().chain(doc.mu.iter()).cloned().collect();
    if parts.is_empty() {
        return Err(Failure::Invalid(format!("{name}: empty document")));
    }
    Ok((ClosureFormula::and(parts), universe))
}

fn problem<'a>(
    (name, doc): &(String, ProblemDocument),
    a: &'a AlgebraSpec,
) -> Result<RevisionProblem<'a>, Failure> {
    match (&doc.psi, &doc.mu) {
        (Some(psi), Some(mu)) => Ok(RevisionProblem::with_universe(
            psi.clone(),
            mu.clone(),
            Arc::new(doc.universe.clone()),
            a,
        )),
        _ => Err(Failure::Invalid(format!(
            "{name}: expected `psi:` and `mu:` sections"
        ))),
    }
}

fn options(cli: &Cli) -> RevisionOptions {
    RevisionOptions {
        parallel: cli.jobs > 1,
        deadline: cli
            .time_budget
            .map(|s| Instant::now() + Duration::from_secs_f64(s)),
        distmax: cli.distmax,
        ..Default::default()
    }
}

fn sorted_lines(formulas: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut lines: Vec<String> = formulas.into_iter().collect();
    lines.sort();
    lines.dedup();
    lines
}

fn cmd_revise(
    cli: &Cli,
    a: &AlgebraSpec,
    doc: &(String, ProblemDocument),
    out: &mut impl Write,
) -> Result<(), Failure> {
    let result = revision::revise_with(&problem(doc, a)?, &options(cli))?;
    match result.kind {
        RevisionKind::InconsistentMu => {
            writeln!(out, "UNSAT")?;
            return Err(Failure::Inconsistent);
        }
        RevisionKind::BeyondDistmax => {
            writeln!(out, "FAILURE")?;
            return Err(Failure::Inconsistent);
        }
        RevisionKind::Revised | RevisionKind::InconsistentPsi => {}
    }
    if let (Some(delta), false) = (result.delta, cli.no_delta) {
        writeln!(out, "delta: {delta}")?;
    }
    let lines = sorted_lines(
        result
            .disjuncts
            .iter()
            .map(|d| closure::qa_to_formula(d, a).display(a).to_string()),
    );
    for line in lines {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn cmd_contract(
    cli: &Cli,
    a: &AlgebraSpec,
    doc: &(String, ProblemDocument),
    out: &mut impl Write,
) -> Result<(), Failure> {
    let problem = problem(doc, a)?;
    let f = revision::contract_with(&problem, &options(cli))?;
    let disjuncts = match f {
        ClosureFormula::Or(children) => children,
        other => vec![other],
    };
    let mut satisfiable = Vec::new();
    for d in disjuncts {
        if !closure::to_dnf_won(&d, problem.universe.clone(), a)?.is_unsat() {
            satisfiable.push(d.display(a).to_string());
        }
    }
    if satisfiable.is_empty() {
        writeln!(out, "UNSAT")?;
        return Ok(());
    }
    for line in sorted_lines(satisfiable) {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_sizes(sizes: &str) -> Result<Vec<(usize, usize)>, Failure> {
    sizes
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (n, p) = item.split_once(':').unwrap_or((item, "0"));
            match (n.trim().parse(), p.trim().parse()) {
                (Ok(n), Ok(p)) => Ok((n, p)),
                _ => Err(Failure::Invalid(format!("bad size `{item}`, expected n:p"))),
            }
        })
        .collect()
}

fn cmd_bench(cli: &Cli, a: &AlgebraSpec, sizes: &str, out: &mut impl Write) -> Result<(), Failure> {
    let params = parse_sizes(sizes)?;
    let options = BenchOptions {
        time_budget: cli.time_budget.map(Duration::from_secs_f64),
        parallel: cli.jobs > 1,
    };
    let rows = bench::run_bench(&params, a, &options).map_err(|e| match e {
        BenchError::InvalidParameters(_) => Failure::Invalid(e.to_string()),
        BenchError::Revision(e) => e.into(),
    })?;
    let rendered = match cli.format {
        Format::Text => bench::render_table(&rows),
        Format::Csv => bench::render_csv(&rows),
    };
    write!(out, "{rendered}")?;
    if rows.iter().any(|r| r.timed_out) {
        return Err(Failure::Resource("time budget exceeded".to_string()));
    }
    Ok(())
}
