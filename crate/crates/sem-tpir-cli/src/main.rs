//! Command-line front end for the semantic T-private retrieval crate.
//!
//! Five workflows: `capacity` (exact rate bounds), `plan` (sub-packetization
//! and download ledger), `simulate` (full sessions against simulated
//! servers), `compare` (baseline scoreboard), `audit` (privacy checks).
//!
//! Exit codes are a stable contract: 0 success, 2 invalid specification,
//! 3 infeasible plan, 4 decode/runtime failure, 5 audit failure, 1 other.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sem_tpir::audit::{audit_document, audit_report_with};
use sem_tpir::document::{decimal_string, rational_string};
use sem_tpir::gf::PrimeField;
use sem_tpir::params::{compare_rates, compute_plan, feasibility_lift, ProblemSpec, SubpacketPlan};
use sem_tpir::runtime::{generate_messages, run_session, transcript_document, Transcript};
use sem_tpir::scheme::{build_ledger, Mutant};
use sem_tpir::{Error, Int, Rat};

/// Default prime modulus: 2^16 + 1, large enough for every worked example.
const DEFAULT_FIELD: u64 = 65537;
const DEFAULT_SAMPLES: usize = 5000;
/// Family-wise significance for the statistical audit layer.
const SIGNIFICANCE: f64 = 0.01;

#[derive(Parser)]
#[command(
    name = "sem-tpir",
    version,
    about = "Semantic T-private information retrieval: planning, simulation, auditing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact capacity, converse bound, and the alpha*D identity.
    Capacity(CapacityArgs),
    /// Sub-packetization plan and the per-subset download ledger.
    Plan(PlanArgs),
    /// Run retrieval sessions against simulated servers and verify recovery.
    Simulate(SimulateArgs),
    /// Compare against equal-length and zero-padding baselines.
    Compare(CapacityArgs),
    /// Structural, counting, and (optionally) statistical privacy audit.
    Audit(AuditArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Flat key=value configuration file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of servers N.
    #[arg(long)]
    servers: Option<usize>,
    /// Collusion threshold T (1 <= T < N).
    #[arg(long)]
    collusion: Option<usize>,
    /// Comma-separated message lengths, e.g. 192,128,64.
    #[arg(long)]
    lengths: Option<String>,
    /// Comma-separated retrieval priors as exact fractions, e.g. 1/2,1/3,1/6.
    #[arg(long)]
    priors: Option<String>,
    /// Prime field modulus (default 65537).
    #[arg(long)]
    field: Option<u64>,
    /// Base seed; every derived random choice is a function of it.
    #[arg(long)]
    seed: Option<u64>,
    /// Emit a structured document (stable key order) instead of plain lines.
    #[arg(long)]
    json_style: bool,
}

#[derive(Args)]
struct CapacityArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scale all lengths by the smallest factor that makes the plan integral.
    #[arg(long)]
    lift: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Target message, 1-based, in the order lengths were given.
    /// Omitted: sampled from the priors each session.
    #[arg(long)]
    theta: Option<usize>,
    /// Number of independent sessions to run (default 1).
    #[arg(long)]
    sessions: Option<usize>,
    /// Write the (last) session transcript document to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale all lengths by the smallest factor that makes the plan integral.
    #[arg(long)]
    lift: bool,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also run the statistical projection tests (Monte-Carlo).
    #[arg(long)]
    stats: bool,
    /// Sessions per target for the statistical layer (default 5000).
    #[arg(long)]
    samples: Option<usize>,
    /// Plant a defect to demonstrate detection: extra-singleton | unscrambled.
    #[arg(long)]
    mutant: Option<String>,
    /// Write the audit report document to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale all lengths by the smallest factor that makes the plan integral.
    #[arg(long)]
    lift: bool,
}

/// Fully resolved run configuration: defaults, then config file, then flags.
#[derive(Clone, Default)]
struct RunConfig {
    servers: Option<usize>,
    collusion: Option<usize>,
    lengths: Option<Vec<u64>>,
    priors: Option<Vec<Rat>>,
    theta: Option<usize>,
    seed: u64,
    field: u64,
    lift: bool,
    stats: bool,
    samples: usize,
    sessions: usize,
    out: Option<PathBuf>,
    mutant: Option<Mutant>,
    json_style: bool,
}

/// CLI-level failure carrying the exit code contract.
enum Failure {
    /// Library error; the variant decides the code.
    Lib(Error),
    /// Bad flags/config/values: exit 2.
    Usage(String),
    /// Audit ran and rejected: exit 5.
    AuditFailed,
    /// Filesystem trouble: exit 1.
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::AuditFailed => 5,
            Failure::Io(_) => 1,
            Failure::Lib(e) => match e {
                Error::InvalidSpec(_)
                | Error::FieldTooSmall { .. }
                | Error::TooFewSamples { .. } => 2,
                Error::Infeasible { .. } | Error::PlanCorruption(_) => 3,
                Error::DecodeMismatch(_)
                | Error::Inconsistent(_)
                | Error::InsufficientData { .. }
                | Error::DimensionMismatch(_) => 4,
                _ => 1,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Usage(m) => m.clone(),
            Failure::AuditFailed => "audit failed: at least one privacy check rejected".into(),
            Failure::Io(m) => m.clone(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Capacity(a) => resolve(&a.common, &[]).and_then(|c| cmd_capacity(&c)),
        Command::Plan(a) => resolve(&a.common, &[("lift", a.lift)]).and_then(|c| cmd_plan(&c)),
        Command::Simulate(a) => {
            let mut cfg = resolve(&a.common, &[("lift", a.lift)]);
            if let Ok(c) = cfg.as_mut() {
                if let Some(t) = a.theta {
                    c.theta = Some(t);
                }
                if let Some(s) = a.sessions {
                    c.sessions = s;
                }
                if let Some(o) = a.out {
                    c.out = Some(o);
                }
            }
            cfg.and_then(|c| cmd_simulate(&c))
        }
        Command::Compare(a) => resolve(&a.common, &[]).and_then(|c| cmd_compare(&c)),
        Command::Audit(a) => {
            let mut cfg = resolve(&a.common, &[("lift", a.lift), ("stats", a.stats)]);
            if let Ok(c) = cfg.as_mut() {
                if let Some(s) = a.samples {
                    c.samples = s;
                }
                if let Some(o) = a.out {
                    c.out = Some(o);
                }
                if let Some(m) = &a.mutant {
                    match parse_mutant(m) {
                        Ok(parsed) => c.mutant = Some(parsed),
                        Err(e) => {
                            eprintln!("error: {e}");
                            return ExitCode::from(2);
                        }
                    }
                }
            }
            cfg.and_then(|c| cmd_audit(&c))
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration resolution
// ---------------------------------------------------------------------------

const CONFIG_KEYS: &[&str] = &[
    "servers",
    "collusion",
    "lengths",
    "priors",
    "theta",
    "seed",
    "field",
    "lift",
    "stats",
    "samples",
    "sessions",
    "out",
    "mutant",
    "json-style",
];

fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::Usage(format!(
                "config {} line {}: expected key=value, got `{line}`",
                path.display(),
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Failure::Usage(format!(
                "config {} line {}: unknown key `{key}`",
                path.display(),
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_lengths(s: &str) -> CliResult<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<u64>().map_err(|_| {
                Failure::Usage(format!("bad length `{}`: expected an integer", p.trim()))
            })
        })
        .collect()
}

fn parse_rational(s: &str) -> CliResult<Rat> {
    let bad = || Failure::Usage(format!("bad rational `{s}`: expected `a` or `a/b`"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let numer: Int = n.parse().map_err(|_| bad())?;
    let denom: Int = d.parse().map_err(|_| bad())?;
    if denom == Int::from(0) {
        return Err(Failure::Usage(format!(
            "bad rational `{s}`: zero denominator"
        )));
    }
    Ok(Rat::new(numer, denom))
}

fn parse_priors(s: &str) -> CliResult<Vec<Rat>> {
    s.split(',').map(parse_rational).collect()
}

fn parse_bool(key: &str, s: &str) -> CliResult<bool> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Failure::Usage(format!("bad boolean for `{key}`: `{s}`"))),
    }
}

fn parse_mutant(s: &str) -> Result<Mutant, String> {
    match s {
        "extra-singleton" => Ok(Mutant::ExtraSingleton),
        "unscrambled" => Ok(Mutant::UnscrambledInterference),
        _ => Err(format!(
            "unknown mutant `{s}`: expected extra-singleton or unscrambled"
        )),
    }
}

/// Merges defaults <- config file <- shared flags. `bool_flags` carries the
/// per-command boolean switches (a set flag turns the option on).
fn resolve(common: &CommonArgs, bool_flags: &[(&str, bool)]) -> CliResult<RunConfig> {
    let mut cfg = RunConfig {
        seed: 0,
        field: DEFAULT_FIELD,
        samples: DEFAULT_SAMPLES,
        sessions: 1,
        ..RunConfig::default()
    };
    if let Some(path) = &common.config {
        let map = parse_config_file(path)?;
        for (key, value) in &map {
            match key.as_str() {
                "servers" => cfg.servers = Some(parse_usize(key, value)?),
                "collusion" => cfg.collusion = Some(parse_usize(key, value)?),
                "lengths" => cfg.lengths = Some(parse_lengths(value)?),
                "priors" => cfg.priors = Some(parse_priors(value)?),
                "theta" => cfg.theta = Some(parse_usize(key, value)?),
                "seed" => cfg.seed = parse_u64(key, value)?,
                "field" => cfg.field = parse_u64(key, value)?,
                "lift" => cfg.lift = parse_bool(key, value)?,
                "stats" => cfg.stats = parse_bool(key, value)?,
                "samples" => cfg.samples = parse_usize(key, value)?,
                "sessions" => cfg.sessions = parse_usize(key, value)?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                "mutant" => cfg.mutant = Some(parse_mutant(value).map_err(Failure::Usage)?),
                "json-style" => cfg.json_style = parse_bool(key, value)?,
                _ => unreachable!("key list already validated"),
            }
        }
    }
    if let Some(v) = common.servers {
        cfg.servers = Some(v);
    }
    if let Some(v) = common.collusion {
        cfg.collusion = Some(v);
    }
    if let Some(v) = &common.lengths {
        cfg.lengths = Some(parse_lengths(v)?);
    }
    if let Some(v) = &common.priors {
        cfg.priors = Some(parse_priors(v)?);
    }
    if let Some(v) = common.field {
        cfg.field = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if common.json_style {
        cfg.json_style = true;
    }
    for &(name, set) in bool_flags {
        if set {
            match name {
                "lift" => cfg.lift = true,
                "stats" => cfg.stats = true,
                _ => unreachable!(),
            }
        }
    }
    Ok(cfg)
}

fn parse_usize(key: &str, s: &str) -> CliResult<usize> {
    s.parse()
        .map_err(|_| Failure::Usage(format!("bad integer for `{key}`: `{s}`")))
}

fn parse_u64(key: &str, s: &str) -> CliResult<u64> {
    s.parse()
        .map_err(|_| Failure::Usage(format!("bad integer for `{key}`: `{s}`")))
}

/// Builds the validated problem spec. Priors fall back to uniform when the
/// command tolerates it; otherwise their absence is a usage error.
fn build_spec(cfg: &RunConfig, priors_required: bool) -> CliResult<ProblemSpec> {
    let servers = cfg
        .servers
        .ok_or_else(|| Failure::Usage("missing --servers".into()))?;
    let collusion = cfg
        .collusion
        .ok_or_else(|| Failure::Usage("missing --collusion".into()))?;
    let lengths = cfg
        .lengths
        .as_ref()
        .ok_or_else(|| Failure::Usage("missing --lengths".into()))?;
    let field = PrimeField::new(cfg.field)?;
    match &cfg.priors {
        Some(priors) => Ok(ProblemSpec::new(
            servers, collusion, lengths, priors, field,
        )?),
        None if priors_required => Err(Failure::Usage(
            "missing --priors (required for this command)".into(),
        )),
        None => Ok(ProblemSpec::with_uniform_priors(
            servers, collusion, lengths, field,
        )?),
    }
}

/// Applies the feasibility lift when requested; returns the working spec
/// and the scale factor actually applied (1 = untouched).
fn maybe_lift(spec: ProblemSpec, want: bool) -> CliResult<(ProblemSpec, u64)> {
    if want {
        Ok(feasibility_lift(&spec)?)
    } else {
        Ok((spec, 1))
    }
}

fn emit_document(cfg: &RunConfig, doc: &Value) -> CliResult<()> {
    let text = format!("{:#}\n", doc);
    if let Some(path) = &cfg.out {
        std::fs::write(path, &text)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    if cfg.json_style {
        print!("{text}");
    }
    Ok(())
}

fn spec_header(spec: &ProblemSpec) -> String {
    format!(
        "spec: N={} T={} K={} field={}",
        spec.servers(),
        spec.collusion(),
        spec.message_count(),
        spec.field().modulus()
    )
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn rat_with_decimal(r: &Rat) -> String {
    format!("{} ({})", rational_string(r), decimal_string(r))
}

fn spec_document(spec: &ProblemSpec) -> Value {
    json!({
        "servers": spec.servers().to_string(),
        "collusion": spec.collusion().to_string(),
        "lengths": spec.lengths().iter().map(|l| l.to_string()).collect::<Vec<_>>(),
        "priors": spec.priors().iter().map(rational_string).collect::<Vec<_>>(),
        "field": spec.field().modulus().to_string(),
    })
}

// ---------------------------------------------------------------------------
// capacity
// ---------------------------------------------------------------------------

fn cmd_capacity(cfg: &RunConfig) -> CliResult<()> {
    let spec = build_spec(cfg, true)?;
    let expected = spec.expected_length();
    let converse = spec.converse_bound();
    let capacity = spec.capacity();

    // The identity needs an integral plan; the lift never changes the
    // capacity, so apply it silently just for this check.
    let (lifted, lambda) = feasibility_lift(&spec)?;
    let plan = compute_plan(&lifted)?;
    let alpha_d = Rat::from(Int::from(plan.alpha) * Int::from(plan.download));
    let rhs = Rat::from(Int::from(lambda)) * &converse;
    let identity_pass = alpha_d == rhs;

    if !cfg.json_style {
        println!("{}", spec_header(&spec));
        println!("lengths: {}", join(spec.lengths()));
        println!(
            "priors: {}",
            spec.priors()
                .iter()
                .map(rational_string)
                .collect::<Vec<_>>()
                .join(",")
        );
        println!("expected length: {}", rat_with_decimal(&expected));
        println!("converse bound: {}", rat_with_decimal(&converse));
        println!("capacity: {}", rat_with_decimal(&capacity));
        println!(
            "identity: alpha*D = {}, lift = {}, lift*converse = {}, {}",
            rational_string(&alpha_d),
            lambda,
            rational_string(&rhs),
            if identity_pass { "PASS" } else { "FAIL" }
        );
    }
    let doc = json!({
        "spec": spec_document(&spec),
        "expected_length": rational_string(&expected),
        "converse_bound": rational_string(&converse),
        "capacity": rational_string(&capacity),
        "capacity_decimal": decimal_string(&capacity),
        "identity": {
            "alpha": plan.alpha.to_string(),
            "download": plan.download.to_string(),
            "lift": lambda.to_string(),
            "pass": identity_pass,
        },
    });
    emit_document(cfg, &doc)?;
    if !identity_pass {
        return Err(Failure::Lib(Error::Internal(
            "alpha*D does not equal lift*converse".into(),
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

fn plan_document(plan: &SubpacketPlan, lambda: u64) -> CliResult<Value> {
    let ledger = build_ledger(plan, 0)?;
    let counts: Vec<Value> = ledger
        .per_server_counts()
        .iter()
        .map(|(s, c)| json!({"subset": format!("{s:?}"), "per_server": c.to_string()}))
        .collect();
    Ok(json!({
        "spec": spec_document(&plan.spec),
        "lift": lambda.to_string(),
        "alpha": plan.alpha.to_string(),
        "u": plan.u.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "nu": plan.nu.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "download_per_iteration": plan.download.to_string(),
        "session_download": plan.session_download().to_string(),
        "ledger_per_server": counts,
        "slots_per_server": ledger.slots_per_server().to_string(),
    }))
}

fn cmd_plan(cfg: &RunConfig) -> CliResult<()> {
    let spec = build_spec(cfg, false)?;
    let (spec, lambda) = maybe_lift(spec, cfg.lift)?;
    let plan = compute_plan(&spec)?;
    let ledger = build_ledger(&plan, 0)?;

    if !cfg.json_style {
        println!("{}", spec_header(&spec));
        println!("lengths: {}", join(spec.lengths()));
        if cfg.lift {
            println!("lift: {lambda}");
        }
        println!("alpha: {}", plan.alpha);
        println!("u: {}", join(&plan.u));
        println!("nu: {}", join(&plan.nu));
        println!("download per iteration: {}", plan.download);
        println!("session download: {}", plan.session_download());
        for theta in 0..spec.message_count() {
            let rate = plan.rate_for(theta);
            println!(
                "rate[theta={}]: {}",
                spec.input_index_of_sorted(theta) + 1,
                rat_with_decimal(&rate)
            );
        }
        println!(
            "ledger (per-server counts, {} slots/server):",
            ledger.slots_per_server()
        );
        for (subset, count) in ledger.per_server_counts() {
            println!("  {subset:?}: {count}");
        }
    }
    let doc = plan_document(&plan, lambda)?;
    emit_document(cfg, &doc)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// splitmix64 finalizer: cheap, well-distributed session-seed derivation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SALT_SESSION: u64 = 0x5E55_0000_0000;
const SALT_TARGET: u64 = 0x7A7A_0000_0000;

/// Position `index` of the splitmix64 stream seeded by `base ^ salt`.
/// Mixing the base first keeps streams for nearby seeds unrelated.
fn stream(base: u64, salt: u64, index: u64) -> u64 {
    mix(mix(base ^ salt).wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Samples a sorted message index from the exact prior distribution; the
/// uniform variate is the dyadic rational `draw / 2^64`, compared exactly.
fn sample_theta(spec: &ProblemSpec, draw: u64) -> usize {
    let u = Rat::new(Int::from(draw), Int::from(1u128 << 64));
    let mut cumulative = Rat::from(Int::from(0));
    for (i, p) in spec.priors().iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    spec.message_count() - 1
}

fn cmd_simulate(cfg: &RunConfig) -> CliResult<()> {
    let priors_required = cfg.theta.is_none();
    let spec = build_spec(cfg, priors_required)?;
    let (spec, lambda) = maybe_lift(spec, cfg.lift)?;
    if cfg.sessions == 0 {
        return Err(Failure::Usage("--sessions must be at least 1".into()));
    }
    let fixed_theta = match cfg.theta {
        None => None,
        Some(t) => {
            if t == 0 || t > spec.message_count() {
                return Err(Failure::Usage(format!(
                    "--theta {t} out of range 1..={}",
                    spec.message_count()
                )));
            }
            Some(spec.sorted_index_of_input(t - 1)?)
        }
    };

    let mut mean_rate = Rat::from(Int::from(0));
    let mut last: Option<Transcript> = None;
    if !cfg.json_style && cfg.lift {
        println!("lift: {lambda}");
    }
    for s in 0..cfg.sessions {
        let session_seed = if cfg.sessions == 1 {
            cfg.seed
        } else {
            stream(cfg.seed, SALT_SESSION, s as u64)
        };
        let theta = match fixed_theta {
            Some(t) => t,
            None => sample_theta(&spec, stream(cfg.seed, SALT_TARGET, s as u64)),
        };
        let transcript = run_session(&spec, theta, session_seed)?;
        let store = generate_messages(&spec, session_seed);
        if transcript.recovered != store.message(theta) {
            return Err(Failure::Lib(Error::DecodeMismatch(format!(
                "session {s}: recovered message differs from the stored message"
            ))));
        }
        if !cfg.json_style {
            println!(
                "session {s}: theta={} seed={} downloads={} rate={} recovery=exact",
                spec.input_index_of_sorted(theta) + 1,
                session_seed,
                transcript.downloads,
                rat_with_decimal(&transcript.rate),
            );
        }
        mean_rate += &transcript.rate;
        last = Some(transcript);
    }
    mean_rate /= Rat::from(Int::from(cfg.sessions as u64));
    if !cfg.json_style && cfg.sessions > 1 {
        println!("sessions: {}", cfg.sessions);
        println!("mean rate: {}", rat_with_decimal(&mean_rate));
        println!("capacity: {}", rat_with_decimal(&spec.capacity()));
    }
    let last = last.expect("at least one session ran");
    let doc = transcript_document(&last);
    emit_document(cfg, &doc)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

fn cmd_compare(cfg: &RunConfig) -> CliResult<()> {
    let spec = build_spec(cfg, true)?;
    let report = compare_rates(&spec);
    let rows: [(&str, &Rat); 6] = [
        ("semantic T-private (this scheme)", &report.sem_tpir),
        ("semantic non-colluding", &report.sem_pir),
        ("equal-length T-private", &report.tpir),
        ("equal-length non-colluding", &report.pir),
        ("zero-padding T-private", &report.zero_pad_tpir),
        ("zero-padding non-colluding", &report.zero_pad_pir),
    ];
    if !cfg.json_style {
        println!("{}", spec_header(&spec));
        println!("rates:");
        for (name, rate) in &rows {
            println!("  {name}: {}", rat_with_decimal(rate));
        }
        println!("comparisons:");
        for v in &report.comparisons {
            let verdict = if v.holds {
                "HOLDS"
            } else if v.sufficient_only {
                "not established (sufficient condition only)"
            } else {
                "FAILS"
            };
            println!(
                "  {}: condition = {}, {verdict}",
                v.name,
                rat_with_decimal(&v.condition)
            );
        }
    }
    let doc = json!({
        "spec": spec_document(&spec),
        "rates": rows
            .iter()
            .map(|(name, rate)| json!({"name": name, "rate": rational_string(rate),
                                        "decimal": decimal_string(rate)}))
            .collect::<Vec<_>>(),
        "comparisons": report
            .comparisons
            .iter()
            .map(|v| json!({
                "name": v.name,
                "condition": rational_string(&v.condition),
                "holds": v.holds,
                "sufficient_only": v.sufficient_only,
            }))
            .collect::<Vec<_>>(),
    });
    emit_document(cfg, &doc)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

fn cmd_audit(cfg: &RunConfig) -> CliResult<()> {
    let spec = build_spec(cfg, false)?;
    let (spec, _lambda) = maybe_lift(spec, cfg.lift)?;
    let samples = if cfg.stats { Some(cfg.samples) } else { None };
    let report = audit_report_with(&spec, cfg.seed, samples, SIGNIFICANCE, cfg.mutant)?;

    if !cfg.json_style {
        println!("{}", spec_header(&spec));
        println!(
            "structure check: {}",
            if report.structure_pass {
                "PASS"
            } else {
                "FAIL"
            }
        );
        let tight = report.counting.iter().filter(|r| r.tight).count();
        println!(
            "counting check: {} ({} rows, {} tight)",
            if report.counting_pass { "PASS" } else { "FAIL" },
            report.counting.len(),
            tight
        );
        match &report.stats {
            None => println!("statistical check: skipped (pass --stats to run)"),
            Some(s) => println!(
                "statistical check: {} (tests={}, rejected={}, samples={}, corrected significance={:.3e})",
                if s.pass { "PASS" } else { "FAIL" },
                s.tests.len(),
                s.rejected,
                s.samples,
                s.corrected_significance
            ),
        }
        println!("audit: {}", if report.pass() { "PASS" } else { "FAIL" });
    }
    let doc = audit_document(&report);
    emit_document(cfg, &doc)?;
    if !report.pass() {
        return Err(Failure::AuditFailed);
    }
    Ok(())
}
