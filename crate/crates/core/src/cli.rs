//! The `privlink` command line.
//!
//! Every subcommand writes machine-readable output to the path given by
//! `--out` and nothing else. Delimited outputs open with a `#` header block
//! carrying the tool version, the seed and the parameters of the run; the
//! readers in this crate skip such lines, so outputs can be fed back in.
//!
//! Exit status is 0 on success, 1 when the work itself fails (a tampered
//! log, an aborted protocol, a bad input file) and 2 for usage errors.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baseline::{exact_match_moments_ratio, pmf_table};
use crate::corpus::{
    generate_pairs, load_table, person_features, person_schema, read_truth, surname_dictionary,
    write_table, write_truth, ErrorProfile,
};
use crate::disclosure::{
    audit_verify_detailed, reident_risk, ru_sweep, synthetic_microtable, utility_loss_complement,
    write_ru, Gate, GateOutcome, Microtable, Policy, ReleasePlan, Stat, SweepGrid,
};
use crate::linkage::{evaluate, link, read_link_config, write_report, LinkConfig};
use crate::privmatch::{
    demo_asymmetry, demo_inflation, derive_group, render_transcript, run_intersection, run_party,
    DomainParams, FramedStream, PartyOptions, PartyState, Role, TranscriptEntry,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Label mixed into the group search when parameters come from `--bits`, so
/// both parties derive the same group without exchanging a file.
const PARAMS_LABEL: &[u8] = b"privlink-domain-params";

#[derive(Debug, Parser)]
#[command(
    name = "privlink",
    version,
    about = "Record linkage, private matching and disclosure limitation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a pair of linkable person files and their true pairs.
    Synth(SynthArgs),
    /// Link two person files and write the classified pairs.
    Link(LinkArgs),
    /// Distribution of correct matches under a random linkage.
    Baseline(BaselineArgs),
    /// Private set intersection: run one role, both roles, or a demo.
    Pmatch(PmatchArgs),
    /// Release a numeric table through microaggregation or noise.
    Anonymize(AnonymizeArgs),
    /// Risk and utility along a parameter grid.
    Rumap(RumapArgs),
    /// Replay a query log through the release gate.
    Gate(GateArgs),
    /// Check an audit log's hash chain.
    AuditVerify(AuditVerifyArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Records per file.
    #[arg(long)]
    n: usize,
    /// Fraction of file A copied into file B.
    #[arg(long, default_value_t = 1.0)]
    overlap: f64,
    /// Probability that a copied field receives one typo.
    #[arg(long, default_value_t = 0.0)]
    error_rate: f64,
    /// Probability that a copied field is blanked.
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
    /// Also write `microdata.csv` with this many numeric rows.
    #[arg(long)]
    microdata: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Output directory; receives `a.csv`, `b.csv` and `truth.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LinkArgs {
    /// Linkage configuration (TOML). Defaults to the person features
    /// without blocking.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// True pairs; adds precision and recall to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// File size.
    #[arg(long)]
    n: usize,
    /// Write the mean and variance instead of the pmf.
    #[arg(long)]
    moments: bool,
    /// Also write rows with zero probability.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Demo {
    Asymmetry,
    Inflation,
}

#[derive(Debug, Args)]
struct PmatchArgs {
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    /// Wait for the peer on `host:port`; port 0 picks a free port.
    #[arg(long, conflicts_with_all = ["connect", "loopback"])]
    listen: Option<String>,
    #[arg(long, conflicts_with = "loopback")]
    connect: Option<String>,
    /// Run both roles in this process; needs `--peer-list`.
    #[arg(long)]
    loopback: bool,
    #[arg(long, value_enum)]
    demo: Option<Demo>,
    /// Own items, one per line.
    #[arg(long)]
    list: Option<PathBuf>,
    /// The responder's items for loopback runs and demos.
    #[arg(long)]
    peer_list: Option<PathBuf>,
    /// Dictionary file for the inflation demo.
    #[arg(long, conflicts_with = "dict_size")]
    dict: Option<PathBuf>,
    /// Use the first N built-in surnames as the inflation dictionary.
    #[arg(long)]
    dict_size: Option<usize>,
    /// Group parameters file.
    #[arg(long, conflicts_with = "bits")]
    params: Option<PathBuf>,
    /// Derive a group of this size instead of reading `--params`.
    #[arg(long)]
    bits: Option<u64>,
    /// Write the parameters for `--bits` to `--out` and stop.
    #[arg(long, requires = "bits")]
    gen_params: bool,
    /// Accept parameters below the minimum size.
    #[arg(long)]
    allow_toy: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Send the intersection back to the responder.
    #[arg(long)]
    honest: bool,
    #[arg(long)]
    no_shuffle: bool,
    /// Also write the framed messages, one per line.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Microaggregate,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatArg {
    Mean,
    Sum,
}

impl From<StatArg> for Stat {
    fn from(s: StatArg) -> Stat {
        match s {
            StatArg::Mean => Stat::Mean,
            StatArg::Sum => Stat::Sum,
        }
    }
}

#[derive(Debug, Args)]
struct AnonymizeArgs {
    /// Numeric table with an `id` column.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "mean")]
    stat: StatArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RumapArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Comma-separated group sizes.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    ks: Vec<usize>,
    /// Comma-separated noise scales.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,1")]
    lambdas: Vec<f64>,
    #[arg(long, value_enum, default_value = "mean")]
    stat: StatArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GateArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    table: PathBuf,
    /// One JSON query per line.
    #[arg(long)]
    queries: PathBuf,
    /// Output directory; receives `decisions.csv`, `audit.log` and
    /// `audit.head`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AuditVerifyArgs {
    #[arg(long)]
    log: PathBuf,
    /// Expected head digest, as hex or as a file holding it.
    #[arg(long)]
    head: Option<String>,
}

/// Failure of a subcommand, mapped to the exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    fn domain(e: impl std::fmt::Display) -> Failure {
        Failure::Domain(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit status.
pub fn dispatch(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Link(a) => link_cmd(a),
        Command::Baseline(a) => baseline(a),
        Command::Pmatch(a) => pmatch(a),
        Command::Anonymize(a) => anonymize(a),
        Command::Rumap(a) => rumap(a),
        Command::Gate(a) => gate(a),
        Command::AuditVerify(a) => audit_verify(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn header(command: &str, seed: Option<u64>, params: &[(&str, String)]) -> String {
    let mut h = format!("# privlink {VERSION}\n# command={command}\n");
    match seed {
        Some(s) => writeln!(h, "# seed={s}"),
        None => writeln!(h, "# seed=none"),
    }
    .expect("string write");
    for (k, v) in params {
        writeln!(h, "# {k}={v}").expect("string write");
    }
    h
}

fn input(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "input `{}` is not a readable file",
            path.display()
        )))
    }
}

fn output_file(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        return Err(Failure::Usage(format!(
            "output `{}` is a directory",
            path.display()
        )));
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Failure::Usage(format!(
            "output directory `{}` does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn output_dir(path: &Path) -> Result<(), Failure> {
    if path.exists() && !path.is_dir() {
        return Err(Failure::Usage(format!(
            "output `{}` is not a directory",
            path.display()
        )));
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Failure::Usage(format!(
            "parent of `{}` does not exist",
            path.display()
        ))),
        _ => Ok(()),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64, Failure> {
    seed.ok_or_else(|| Failure::Usage(format!("{what} requires --seed")))
}

fn synth(a: SynthArgs) -> Outcome {
    output_dir(&a.out)?;
    let profile = ErrorProfile {
        field_error_rate: a.error_rate,
        missing_rate: a.missing_rate,
        ..ErrorProfile::clean()
    };
    let pair = generate_pairs(a.n, a.overlap, &profile, a.seed).map_err(Failure::domain)?;
    let schema = person_schema();
    let mut params = vec![
        ("n", a.n.to_string()),
        ("overlap", a.overlap.to_string()),
        ("error_rate", a.error_rate.to_string()),
        ("missing_rate", a.missing_rate.to_string()),
    ];
    if let Some(m) = a.microdata {
        params.push(("microdata", m.to_string()));
    }
    let head = header("synth", Some(a.seed), &params);

    let table = |records| -> Result<Vec<u8>, Failure> {
        let mut buf = head.clone().into_bytes();
        write_table(&mut buf, records, &schema).map_err(Failure::domain)?;
        Ok(buf)
    };
    let file_a = table(&pair.file_a)?;
    let file_b = table(&pair.file_b)?;
    let mut truth = head.clone().into_bytes();
    write_truth(&mut truth, &pair.truth).map_err(Failure::domain)?;
    let micro = match a.microdata {
        Some(rows) => {
            let mut buf = head.clone().into_bytes();
            synthetic_microtable(rows, a.seed)
                .write_csv(&mut buf)
                .map_err(Failure::domain)?;
            Some(buf)
        }
        None => None,
    };

    fs::create_dir_all(&a.out).map_err(|e| Failure::Domain(format!("{}: {e}", a.out.display())))?;
    write(&a.out.join("a.csv"), file_a)?;
    write(&a.out.join("b.csv"), file_b)?;
    write(&a.out.join("truth.csv"), truth)?;
    if let Some(buf) = micro {
        write(&a.out.join("microdata.csv"), buf)?;
    }
    Ok(())
}

fn link_cmd(a: LinkArgs) -> Outcome {
    for p in [Some(&a.a), Some(&a.b), a.config.as_ref(), a.truth.as_ref()]
        .into_iter()
        .flatten()
    {
        input(p)?;
    }
    output_file(&a.out)?;
    let schema = person_schema();
    let config = match &a.config {
        Some(path) => {
            let file = read_link_config(path).map_err(Failure::domain)?;
            if file.id_field != schema.id_field() {
                return Err(Failure::Domain(format!(
                    "id field `{}` does not match the person schema's `{}`",
                    file.id_field,
                    schema.id_field()
                )));
            }
            file.to_link_config().map_err(Failure::domain)?
        }
        None => LinkConfig::new(person_features()),
    };
    let file_a = load_table(&a.a, &schema).map_err(Failure::domain)?;
    let file_b = load_table(&a.b, &schema).map_err(Failure::domain)?;
    let truth = match &a.truth {
        Some(p) => Some(read_truth(p).map_err(Failure::domain)?),
        None => None,
    };
    let result = link(&file_a, &file_b, &schema, &config).map_err(Failure::domain)?;

    let mut params = vec![
        ("a", a.a.display().to_string()),
        ("b", a.b.display().to_string()),
        ("mu", config.mu.to_string()),
        ("lambda", config.lambda.to_string()),
        (
            "block_field",
            config.block_field.clone().unwrap_or_else(|| "none".into()),
        ),
    ];
    if let Some(c) = &a.config {
        params.push(("config", c.display().to_string()));
    }
    let mut buf = header("link", None, &params).into_bytes();
    let names: Vec<String> = config.specs.iter().map(|s| s.name.clone()).collect();
    write_report(&mut buf, &result, &names).map_err(Failure::domain)?;
    if let Some(truth) = &truth {
        let acc = evaluate(&result, truth);
        let line = format!(
            "precision={:.6} recall={:.6} f1={:.6} true_links={}",
            acc.precision, acc.recall, acc.f1, acc.true_links
        );
        writeln!(buf, "# {line}").expect("vec write");
        println!("{line}");
    }
    write(&a.out, buf)
}

fn baseline(a: BaselineArgs) -> Outcome {
    output_file(&a.out)?;
    let mut params = vec![("n", a.n.to_string())];
    let mut body = String::new();
    if a.moments {
        params.push(("moments", "true".into()));
        let (mean, var) = exact_match_moments_ratio(a.n).map_err(Failure::domain)?;
        let f =
            |x: &num_rational::BigRational| num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::NAN);
        body.push_str("statistic,value,exact\n");
        writeln!(body, "mean,{},{mean}", f(&mean)).expect("string write");
        writeln!(body, "variance,{},{var}", f(&var)).expect("string write");
    } else {
        let pmf = pmf_table(a.n).map_err(Failure::domain)?;
        body.push_str("r,probability\n");
        for (r, p) in pmf.probs.iter().enumerate() {
            if a.all || *p > 0.0 {
                writeln!(body, "{r},{p}").expect("string write");
            }
        }
    }
    let mut out = header("baseline", None, &params);
    out.push_str(&body);
    write(&a.out, out)
}

fn read_list(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn pmatch_params(a: &PmatchArgs) -> Result<DomainParams, Failure> {
    match (&a.params, a.bits) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
            DomainParams::from_toml(&text, a.allow_toy).map_err(Failure::domain)
        }
        (None, Some(bits)) => derive_group(bits, PARAMS_LABEL).map_err(Failure::domain),
        _ => Err(Failure::Usage(
            "one of --params or --bits is required".into(),
        )),
    }
}

fn connect_with_retry(addr: &str) -> Result<TcpStream, Failure> {
    let mut last = None;
    for _ in 0..100 {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    Err(Failure::Domain(format!(
        "cannot connect to {addr}: {}",
        last.map_or_else(String::new, |e| e.to_string())
    )))
}

fn item_lines(items: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let mut s = String::new();
    for i in items {
        s.push_str(i.as_ref());
        s.push('\n');
    }
    s
}

fn pmatch(a: PmatchArgs) -> Outcome {
    for p in [&a.list, &a.peer_list, &a.dict, &a.params]
        .into_iter()
        .flatten()
    {
        input(p)?;
    }
    output_file(&a.out)?;
    if let Some(t) = &a.transcript {
        output_file(t)?;
    }
    if a.gen_params {
        let params = pmatch_params(&a)?;
        let mut out = header("pmatch", None, &[("bits", params.bits().to_string())]);
        out.push_str(&params.to_toml());
        return write(&a.out, out);
    }
    let seed = require_seed(a.seed, "pmatch")?;
    let options = PartyOptions {
        honest: a.honest,
        shuffle: !a.no_shuffle,
    };

    if let Some(demo) = a.demo {
        let peer = a
            .peer_list
            .as_deref()
            .ok_or_else(|| Failure::Usage("--demo requires --peer-list".into()))?;
        let list_b = read_list(peer)?;
        let params = pmatch_params(&a)?;
        let mut common = vec![("bits", params.bits().to_string())];
        let body = match demo {
            Demo::Asymmetry => {
                let list_a =
                    read_list(a.list.as_deref().ok_or_else(|| {
                        Failure::Usage("--demo asymmetry requires --list".into())
                    })?)?;
                common.push(("demo", "asymmetry".into()));
                common.push(("honest", a.honest.to_string()));
                demo_asymmetry(&list_a, &list_b, &params, seed, a.honest)
                    .map_err(Failure::domain)?
                    .render()
            }
            Demo::Inflation => {
                let dict = match (&a.dict, a.dict_size) {
                    (Some(p), None) => read_list(p)?,
                    (None, Some(n)) => surname_dictionary(n),
                    _ => {
                        return Err(Failure::Usage(
                            "--demo inflation requires --dict or --dict-size".into(),
                        ))
                    }
                };
                common.push(("demo", "inflation".into()));
                common.push(("dictionary", dict.len().to_string()));
                let found =
                    demo_inflation(&dict, &list_b, &params, seed).map_err(Failure::domain)?;
                let in_dict = list_b.iter().filter(|b| dict.contains(b)).count();
                let mut s = format!(
                    "# recovered={} responder_items_in_dictionary={in_dict}\n",
                    found.len()
                );
                s.push_str(&item_lines(&found));
                s
            }
        };
        let mut out = header("pmatch", Some(seed), &common);
        out.push_str(&body);
        return write(&a.out, out);
    }

    let list = read_list(
        a.list
            .as_deref()
            .ok_or_else(|| Failure::Usage("pmatch requires --list".into()))?,
    )?;
    let params = pmatch_params(&a)?;
    let mut common = vec![
        ("bits", params.bits().to_string()),
        ("honest", a.honest.to_string()),
        ("shuffle", options.shuffle.to_string()),
    ];

    let (intersection, transcript): (Option<Vec<String>>, Vec<TranscriptEntry>) = if a.loopback {
        let peer = a
            .peer_list
            .as_deref()
            .ok_or_else(|| Failure::Usage("--loopback requires --peer-list".into()))?;
        let list_b = read_list(peer)?;
        common.push(("transport", "loopback".into()));
        let run =
            run_intersection(&list, &list_b, &params, seed, options).map_err(Failure::domain)?;
        (Some(run.intersection), run.transcript)
    } else {
        let role = match a.role {
            Some(RoleArg::Initiator) => Role::Initiator,
            Some(RoleArg::Responder) => Role::Responder,
            None => {
                return Err(Failure::Usage(
                    "--role is required without --loopback".into(),
                ))
            }
        };
        let stream = match (&a.listen, &a.connect) {
            (Some(addr), None) => {
                let listener = TcpListener::bind(addr)
                    .map_err(|e| Failure::Domain(format!("cannot listen on {addr}: {e}")))?;
                let local = listener.local_addr().map_err(Failure::domain)?;
                eprintln!("listening on {local}");
                let _ = std::io::stderr().flush();
                listener.accept().map_err(Failure::domain)?.0
            }
            (None, Some(addr)) => connect_with_retry(addr)?,
            _ => {
                return Err(Failure::Usage(
                    "one of --listen, --connect or --loopback is required".into(),
                ))
            }
        };
        common.push(("transport", "tcp".into()));
        common.push((
            "role",
            match role {
                Role::Initiator => "initiator",
                Role::Responder => "responder",
            }
            .into(),
        ));
        let state =
            PartyState::from_seed(role, &list, &params, seed, options).map_err(Failure::domain)?;
        let mut framed = FramedStream::new(stream);
        let outcome = run_party(state, &mut framed).map_err(Failure::domain)?;
        (outcome.intersection, outcome.transcript)
    };

    let mut out = header("pmatch", Some(seed), &common);
    match &intersection {
        Some(items) => {
            writeln!(out, "# intersection={}", items.len()).expect("string write");
            out.push_str(&item_lines(items));
        }
        None => out.push_str("# intersection=withheld\n"),
    }
    if let Some(path) = &a.transcript {
        let mut t = header("pmatch", Some(seed), &common);
        t.push_str(&render_transcript(&transcript));
        write(path, t)?;
    }
    write(&a.out, out)
}

fn release_plan(
    method: MethodArg,
    k: Option<usize>,
    stat: StatArg,
    lambda: Option<f64>,
    seed: Option<u64>,
) -> Result<ReleasePlan, Failure> {
    let plan = match method {
        MethodArg::Microaggregate => ReleasePlan::Microaggregate {
            k: k.ok_or_else(|| Failure::Usage("microaggregate requires --k".into()))?,
            stat: stat.into(),
        },
        MethodArg::Noise => ReleasePlan::Noise {
            lambda: lambda.ok_or_else(|| Failure::Usage("noise requires --lambda".into()))?,
            seed: require_seed(seed, "noise")?,
        },
    };
    plan.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(plan)
}

fn anonymize(a: AnonymizeArgs) -> Outcome {
    input(&a.table)?;
    output_file(&a.out)?;
    let plan = release_plan(a.method, a.k, a.stat, a.lambda, a.seed)?;
    let table = Microtable::load(&a.table).map_err(Failure::domain)?;
    let released = plan.apply(&table).map_err(Failure::domain)?;
    let risk = reident_risk(&table, &released).map_err(Failure::domain)?;
    let utility = utility_loss_complement(&table, &released).map_err(Failure::domain)?;
    let seed = match plan {
        ReleasePlan::Noise { seed, .. } => Some(seed),
        _ => None,
    };
    let mut out = header(
        "anonymize",
        seed,
        &[
            ("table", a.table.display().to_string()),
            ("plan", plan.to_string()),
            ("risk", format!("{risk:.6}")),
            ("utility", format!("{utility:.6}")),
        ],
    )
    .into_bytes();
    released.write_csv(&mut out).map_err(Failure::domain)?;
    write(&a.out, out)
}

fn rumap(a: RumapArgs) -> Outcome {
    input(&a.table)?;
    output_file(&a.out)?;
    let (grid, seed) = match a.method {
        MethodArg::Microaggregate => {
            if let Some(&k) = a.ks.iter().find(|&&k| k < 2) {
                return Err(Failure::Usage(format!("group size {k} is below 2")));
            }
            (
                SweepGrid::Microaggregate {
                    ks: a.ks.clone(),
                    stat: a.stat.into(),
                },
                None,
            )
        }
        MethodArg::Noise => {
            if let Some(l) = a.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
                return Err(Failure::Usage(format!("noise scale {l} is not >= 0")));
            }
            let seed = require_seed(a.seed, "noise")?;
            (
                SweepGrid::Noise {
                    lambdas: a.lambdas.clone(),
                    seed,
                },
                Some(seed),
            )
        }
    };
    let table = Microtable::load(&a.table).map_err(Failure::domain)?;
    let points = ru_sweep(&table, &grid).map_err(Failure::domain)?;
    let grid_text = match &grid {
        SweepGrid::Microaggregate { ks, .. } => {
            ks.iter().map(|k| k.to_string()).collect::<Vec<_>>()
        }
        SweepGrid::Noise { lambdas, .. } => lambdas.iter().map(|l| l.to_string()).collect(),
    }
    .join(",");
    let mut out = header(
        "rumap",
        seed,
        &[
            ("table", a.table.display().to_string()),
            ("method", grid.method_name().into()),
            ("grid", grid_text),
        ],
    )
    .into_bytes();
    write_ru(&mut out, &points).map_err(Failure::domain)?;
    write(&a.out, out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn gate(a: GateArgs) -> Outcome {
    for p in [&a.policy, &a.table, &a.queries] {
        input(p)?;
    }
    output_dir(&a.out)?;
    let policy = Policy::load(&a.policy).map_err(Failure::domain)?;
    let table = Microtable::load(&a.table).map_err(Failure::domain)?;
    let queries = fs::read_to_string(&a.queries)
        .map_err(|e| Failure::Domain(format!("{}: {e}", a.queries.display())))?;
    let gate = Gate::new(policy, table);

    let mut decisions = header(
        "gate",
        None,
        &[
            ("policy", a.policy.display().to_string()),
            ("table", a.table.display().to_string()),
            ("queries", a.queries.display().to_string()),
        ],
    );
    decisions.push_str(
        "line,query_id,level,decision,plan_level,plan,reason,rows_selected,measured_risk,value\n",
    );
    let (mut released, mut refused) = (0usize, 0usize);
    for (i, line) in queries.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = match gate.evaluate_line(line) {
            GateOutcome::Released(r) => {
                released += 1;
                [
                    r.query_id,
                    r.level.to_string(),
                    "released".into(),
                    r.plan_level.to_string(),
                    r.plan,
                    String::new(),
                    r.rows_selected.to_string(),
                    format!("{:.6}", r.measured_risk),
                    r.value.map_or_else(String::new, |v| v.to_string()),
                ]
            }
            GateOutcome::Refused(r) => {
                refused += 1;
                [
                    r.query_id,
                    r.level.to_string(),
                    "refused".into(),
                    String::new(),
                    String::new(),
                    r.reason.as_str().into(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]
            }
        };
        let fields: Vec<String> = std::iter::once((i + 1).to_string())
            .chain(row.iter().map(|f| csv_field(f)))
            .collect();
        decisions.push_str(&fields.join(","));
        decisions.push('\n');
    }
    let log = gate.into_log();
    println!(
        "released={released} refused={refused} head={}",
        log.head_hex()
    );

    fs::create_dir_all(&a.out).map_err(|e| Failure::Domain(format!("{}: {e}", a.out.display())))?;
    write(&a.out.join("decisions.csv"), decisions)?;
    write(&a.out.join("audit.log"), log.to_text())?;
    write(&a.out.join("audit.head"), format!("{}\n", log.head_hex()))
}

fn audit_verify(a: AuditVerifyArgs) -> Outcome {
    input(&a.log)?;
    let expected = match &a.head {
        Some(h) if Path::new(h).is_file() => Some(
            fs::read_to_string(h)
                .map_err(|e| Failure::Domain(format!("{h}: {e}")))?
                .trim()
                .to_string(),
        ),
        Some(h) if h.len() == 64 && h.chars().all(|c| c.is_ascii_hexdigit()) => Some(h.clone()),
        Some(h) => {
            return Err(Failure::Usage(format!(
                "--head `{h}` is neither a file nor a 64-digit hex digest"
            )))
        }
        None => None,
    };
    let text = fs::read_to_string(&a.log)
        .map_err(|e| Failure::Domain(format!("{}: {e}", a.log.display())))?;
    match audit_verify_detailed(&text) {
        Err((seq, reason)) => {
            println!("FAIL seq={seq} {reason}");
            Err(Failure::Domain(format!(
                "audit log fails at seq {seq}: {reason}"
            )))
        }
        Ok((count, head)) => match expected {
            Some(e) if !e.eq_ignore_ascii_case(&head) => {
                println!("FAIL seq={count} head {head} does not match expected {e}");
                Err(Failure::Domain(format!(
                    "audit log head does not match; entries from seq {count} on are missing or replaced"
                )))
            }
            _ => {
                println!("OK entries={count} head={head}");
                Ok(())
            }
        },
    }
}
