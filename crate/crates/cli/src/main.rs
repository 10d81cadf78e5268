use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use pcfg_sandbox::grammar::{parse_grammar, to_cnf, Sampler};
use pcfg_sandbox::{
    build_right_influenced, cky_viterbi, execute, induce_tree, verify_theorem, CnfPcfg, ContextSpec, DistanceSeq,
    LeftContext, Paradigm, RightInfluencedSpec, Sentence, TheoremReport, TransitionSeq,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit statuses other than success.
#[derive(Debug, Clone, Copy)]
enum Status {
    Input = 2,
    Unparseable = 3,
    Inconsistent = 4,
}

#[derive(Debug)]
struct Failure {
    status: Status,
    error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for Failure {}

trait OrStatus<T> {
    fn or_status(self, status: Status) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> OrStatus<T> for Result<T, E> {
    fn or_status(self, status: Status) -> anyhow::Result<T> {
        self.map_err(|e| Failure { status, error: e.into() }.into())
    }
}

fn fail(status: Status, msg: impl fmt::Display) -> anyhow::Error {
    Failure { status, error: anyhow!("{msg}") }.into()
}

#[derive(Parser)]
#[command(name = "pcfg-sandbox", version, about = "PCFG sandbox: grammars, parsers and restricted-context certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, convert or sample from a grammar file.
    #[command(subcommand)]
    Grammar(GrammarCommand),
    /// Parse a sentence with CKY, or decode distances or transitions for it.
    Parse(ParseArgs),
    /// Certify the restricted-context bounds on right-influenced grammars.
    Theorems(TheoremArgs),
}

#[derive(Subcommand)]
enum GrammarCommand {
    /// Print the validation report; exit 0 iff the grammar is well-formed.
    Validate { file: PathBuf },
    /// Convert to Chomsky normal form.
    ToCnf {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw sentences, one per line.
    Sample {
        file: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, env = "PCFG_SANDBOX_SEED", default_value_t = 0)]
        seed: u64,
        /// Append the derivation tree after a tab.
        #[arg(long)]
        trees: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ParseMode {
    Cky,
    DistanceFile,
    TransitionsFile,
}

#[derive(Args)]
struct ParseArgs {
    /// Grammar file for cky mode.
    #[arg(long, conflicts_with_all = ["m", "lprime"])]
    grammar: Option<PathBuf>,
    /// Use the right-influenced grammar with this m (cky mode).
    #[arg(long, requires = "lprime")]
    m: Option<usize>,
    #[arg(long, requires = "m")]
    lprime: Option<usize>,
    #[arg(long, value_enum, default_value_t = ParseMode::Cky)]
    mode: ParseMode,
    /// JSON distance array, or a transition sequence (text or JSON).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Whitespace-separated tokens.
    #[arg(required = true, num_args = 1..)]
    sentence: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Serialize)]
struct TheoremArgs {
    /// One or more values of m, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
    /// One or more values of L', comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    lprime: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "distance,gates,transitions")]
    #[serde(serialize_with = "as_strings")]
    paradigm: Vec<Paradigm>,
    /// Right lookahead; defaults to L'.
    #[arg(long)]
    lookahead: Option<usize>,
    /// Bounded left window instead of the whole prefix.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    include_position: bool,
    /// Give predictors the whole sentence and position.
    #[arg(long)]
    full_sentence: bool,
    /// Also write the JSON reports here.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    #[serde(skip)]
    format: Format,
    /// Worker threads (defaults to the number of processors).
    #[arg(long)]
    #[serde(skip)]
    jobs: Option<usize>,
}

fn as_strings<S: serde::Serializer>(p: &[Paradigm], ser: S) -> Result<S::Ok, S::Error> {
    ser.collect_seq(p.iter().map(Paradigm::to_string))
}

impl TheoremArgs {
    fn context(&self, l_prime: usize) -> ContextSpec {
        if self.full_sentence {
            return ContextSpec::full_sentence();
        }
        let mut spec = ContextSpec::left_unbounded(self.lookahead.unwrap_or(l_prime));
        if let Some(w) = self.window {
            spec.left = LeftContext::Window(w);
        }
        spec.include_position = self.include_position;
        spec
    }
}

#[derive(Serialize)]
struct ReportEntry<'a> {
    version: &'static str,
    config: &'a TheoremArgs,
    #[serde(flatten)]
    report: TheoremReport,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).or_status(Status::Input)
}

fn load_grammar(path: &Path) -> anyhow::Result<pcfg_sandbox::Pcfg> {
    parse_grammar(&read(path)?).with_context(|| format!("in {}", path.display())).or_status(Status::Input)
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())).or_status(Status::Input),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn grammar(cmd: GrammarCommand) -> anyhow::Result<()> {
    match cmd {
        GrammarCommand::Validate { file } => {
            let g = load_grammar(&file)?;
            let report = g.validate();
            println!("{}", report.to_string().trim_end());
            if !report.is_clean() {
                return Err(fail(Status::Input, format!("{} is not a well-formed grammar", file.display())));
            }
        }
        GrammarCommand::ToCnf { file, output } => {
            let g = to_cnf(&load_grammar(&file)?).or_status(Status::Input)?;
            emit(output.as_deref(), &g.to_string())?;
        }
        GrammarCommand::Sample { file, n, seed, trees, output } => {
            let g = load_grammar(&file)?;
            let report = g.validate();
            if !report.is_clean() {
                return Err(fail(Status::Input, report.to_string().trim_end()));
            }
            let mut sampler = Sampler::new(&g, seed);
            let mut out = String::new();
            for _ in 0..n {
                let (tree, sentence) = sampler.sample().or_status(Status::Input)?;
                if trees {
                    out.push_str(&format!("{sentence}\t{tree}\n"));
                } else {
                    out.push_str(&format!("{sentence}\n"));
                }
            }
            emit(output.as_deref(), &out)?;
        }
    }
    Ok(())
}

fn parse(args: ParseArgs) -> anyhow::Result<()> {
    let sentence = Sentence::new(args.sentence.iter().flat_map(|s| s.split_whitespace()));
    if sentence.is_empty() {
        return Err(fail(Status::Unparseable, "empty sentence"));
    }
    let input = || -> anyhow::Result<String> {
        let path = args.input.as_deref().ok_or_else(|| fail(Status::Input, "--input is required for this mode"))?;
        read(path)
    };
    match args.mode {
        ParseMode::Cky => {
            let g: CnfPcfg = match (&args.grammar, args.m, args.lprime) {
                (Some(path), _, _) => {
                    let g = load_grammar(path)?;
                    match CnfPcfg::try_from(g.clone()) {
                        Ok(c) => c,
                        Err(_) => to_cnf(&g).or_status(Status::Input)?,
                    }
                }
                (None, Some(m), Some(l)) => {
                    let spec = RightInfluencedSpec::new(m, l).or_status(Status::Input)?;
                    build_right_influenced(spec).or_status(Status::Input)?
                }
                _ => return Err(fail(Status::Input, "cky mode needs --grammar or --m/--lprime")),
            };
            let parse = cky_viterbi(&g, &sentence).or_status(Status::Unparseable)?;
            println!("{}", parse.tree);
            println!("log-prob: {}", parse.log_prob);
        }
        ParseMode::DistanceFile => {
            let d: DistanceSeq = serde_json::from_str(&input()?).context("distance file").or_status(Status::Input)?;
            let induced = induce_tree(&sentence, &d).or_status(Status::Input)?;
            println!("{}", induced.tree);
            if induced.tie {
                eprintln!("note: a tie was broken towards the leftmost split");
            }
        }
        ParseMode::TransitionsFile => {
            let text = input()?;
            let z: TransitionSeq = if text.trim_start().starts_with('{') {
                serde_json::from_str(&text).context("transition file").or_status(Status::Input)?
            } else {
                text.parse().or_status(Status::Input)?
            };
            let tree = execute(&sentence, &z).or_status(Status::Unparseable)?;
            println!("{tree}");
        }
    }
    Ok(())
}

fn render_table(entries: &[ReportEntry]) -> String {
    let header = ["paradigm", "m", "L'", "context", "mass", "mirrored", "bound", "full", "ok"];
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            let r = &e.report;
            vec![
                r.paradigm.to_string(),
                r.m.to_string(),
                r.l_prime.to_string(),
                r.context.clone(),
                format!("{:.6}", r.represented_mass),
                format!("{:.6}", r.mirrored_mass),
                format!("{:.6}", r.bound),
                format!("{:.6}", r.full_context_mass),
                if r.consistent { "yes".into() } else { "NO".into() },
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in &rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn theorems(args: TheoremArgs) -> anyhow::Result<()> {
    if let Some(&m) = args.m.iter().find(|&&m| m < 2) {
        return Err(fail(Status::Input, format!("m must be ≥ 2 (got {m})")));
    }
    if let Some(&l) = args.lprime.iter().find(|&&l| l < 1) {
        return Err(fail(Status::Input, format!("L' must be ≥ 1 (got {l})")));
    }
    let mut jobs = Vec::new();
    for &m in &args.m {
        for &l in &args.lprime {
            for &p in &args.paradigm {
                jobs.push((RightInfluencedSpec { m, l_prime: l }, p));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .context("cannot start worker pool")?;
    let reports: Vec<TheoremReport> = pool.install(|| {
        jobs.par_iter()
            .map(|&(spec, p)| verify_theorem(spec, p, &args.context(spec.l_prime)))
            .collect::<Result<_, _>>()
    })?;
    let entries: Vec<ReportEntry> =
        reports.into_iter().map(|report| ReportEntry { version: VERSION, config: &args, report }).collect();
    let json = serde_json::to_string_pretty(&entries)? + "\n";
    if let Some(path) = &args.output {
        fs::write(path, &json).with_context(|| format!("cannot write {}", path.display())).or_status(Status::Input)?;
    }
    match args.format {
        Format::Json => print!("{json}"),
        Format::Table => print!("{}", render_table(&entries)),
    }
    let bad: Vec<String> = entries
        .iter()
        .filter(|e| !e.report.consistent)
        .map(|e| format!("{} m={} L'={}: {}", e.report.paradigm, e.report.m, e.report.l_prime, e.report.problems.join("; ")))
        .collect();
    if !bad.is_empty() {
        return Err(fail(Status::Inconsistent, format!("inconsistent reports:\n{}", bad.join("\n"))));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Status::Input as u8) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Grammar(cmd) => grammar(cmd),
        Command::Parse(args) => parse(args),
        Command::Theorems(args) => theorems(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let status = e.downcast_ref::<Failure>().map_or(1, |f| f.status as u8);
            ExitCode::from(status)
        }
    }
}
