mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polybreak::binpack::{self, InstanceRecord, DEFAULT_CAPACITY};
use polybreak::breakers::{
    self, ProfileLabel, Provenance, SizeProfile, Template, DEFAULT_PRODUCT_LENGTH,
};
use polybreak::io::{self as pio, FamilyFile, FamilyManifest, StatsRecord};
use polybreak::perm::{self, Generator, Permutation};
use polybreak::solver::{self, Configuration, SolveOptions, ValueOrder};
use polybreak::verify::{
    self, CheckRecord, CheckResult, Guard, LinearExistence, VerificationReport, VerifyError,
};
use polybreak::{BinPackingInstance, Polynomial};

use manifest::RunManifest;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY_FAILED: u8 = 2;
const EXIT_GUARD: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "polybreak",
    version,
    about = "Polynomial symmetry breakers for 0-1 bin packing"
)]
struct Cli {
    /// Also write a run manifest (arguments, seeds, output hashes) here.
    #[arg(long, global = true, value_name = "PATH")]
    run_manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a near half-capacity bin-packing instance.
    Bench(BenchArgs),
    /// Generate breaker families for an instance.
    Breakers(BreakersArgs),
    /// Export an instance model, optionally with breakers, in LP format.
    Emit(EmitArgs),
    /// Run the exact verification oracles and write a JSON report.
    Verify(VerifyArgs),
    /// Solve with and without breakers and write a statistics CSV.
    Solve(SolveArgs),
    /// Aggregate relative node counts per template and profile.
    Report(ReportArgs),
    /// Re-run the command recorded in a run manifest and compare output hashes.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_parser = ["3", "5", "7", "9"])]
    classes: String,
    /// Number of items (and bins). Defaults to the size used for the class count.
    #[arg(long)]
    items: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CAPACITY)]
    capacity: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BreakersArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Template names separated by commas, or `all`.
    #[arg(long)]
    template: String,
    /// Profile names separated by commas, or `all`.
    #[arg(long)]
    profile: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_PRODUCT_LENGTH)]
    product_length: usize,
    /// Override the number of permutations of every profile.
    #[arg(long)]
    perms: Option<usize>,
    /// Override the variable budget of every profile.
    #[arg(long)]
    target_vars: Option<usize>,
    /// Output directory; one `<template>_<profile>.json` per family.
    #[arg(long, default_value = "families")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EmitArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    family: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GuardArgs {
    #[arg(long, default_value_t = Guard::default().max_points)]
    max_points: u64,
    #[arg(long, default_value_t = Guard::default().max_orbit)]
    max_orbit: usize,
}

impl GuardArgs {
    fn guard(&self) -> Guard {
        Guard {
            max_points: self.max_points,
            max_orbit: self.max_orbit,
        }
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    family: Option<PathBuf>,
    /// Also sample the fundamental-region checks for the family's base polynomial.
    #[arg(long, requires = "family")]
    fundamental: bool,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    guard: GuardArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrderArg {
    OneFirst,
    ZeroFirst,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    family: Vec<PathBuf>,
    #[arg(long)]
    node_limit: Option<u64>,
    #[arg(long, value_enum, default_value_t = OrderArg::OneFirst)]
    value_order: OrderArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    glob: String,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    VerifyFailed,
    GuardExceeded,
}

/// What a command produced, for the run manifest and the exit code.
#[derive(Debug)]
struct Outcome {
    status: Status,
    manifest: RunManifest,
    outputs: Vec<PathBuf>,
}

impl Outcome {
    fn ok(outputs: Vec<PathBuf>) -> Self {
        Self {
            status: Status::Ok,
            manifest: RunManifest::default(),
            outputs,
        }
    }
}

/// A command-line problem detected after parsing; exits with the usage code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_instance(path: &Path) -> Result<(InstanceRecord, BinPackingInstance)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record: InstanceRecord =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let inst = record.to_instance()?;
    Ok((record, inst))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn parse_list<T>(arg: &str, all: &[T], what: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr + Copy,
    T::Err: std::fmt::Display,
{
    if arg == "all" {
        return Ok(all.to_vec());
    }
    arg.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| usage(format!("bad {what} {s:?}: {e}")))
        })
        .collect()
}

fn bench(args: &BenchArgs) -> Result<Outcome> {
    let classes: usize = args.classes.parse()?;
    let items = match args.items {
        Some(0) => return Err(usage("--items must be positive")),
        Some(n) => n,
        None => binpack::default_items(classes).expect("validated class count"),
    };
    let interval =
        binpack::near_half_interval(classes, args.capacity).map_err(|e| usage(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(pio::stage_seed(args.seed, "bench"));
    let inst = binpack::generate_benchmark(classes, items, interval, args.capacity, &mut rng)?;
    let record =
        InstanceRecord::from_instance(&inst, Some(args.seed), Some(interval), Some(classes));
    write_json(&args.out, &record)?;
    let mut out = Outcome::ok(vec![args.out.clone()]);
    out.manifest.global_seed = Some(args.seed);
    Ok(out)
}

fn family_stem(template: Template, profile: ProfileLabel) -> String {
    format!("{}_{}", template.name(), profile.name())
}

fn breakers_cmd(args: &BreakersArgs) -> Result<Outcome> {
    let templates = parse_list(&args.template, &Template::ALL, "template")?;
    let profiles = parse_list(&args.profile, &ProfileLabel::ALL, "profile")?;
    if args.product_length == 0 {
        return Err(usage("--product-length must be positive"));
    }
    let (record, inst) = read_instance(&args.instance)?;
    let instance_id = record.id();
    let layout = inst.layout();
    let boundaries = inst.size_boundaries();
    std::fs::create_dir_all(&args.out)?;

    let jobs: Vec<(Template, ProfileLabel)> = templates
        .iter()
        .flat_map(|&t| profiles.iter().map(move |&p| (t, p)))
        .collect();
    let results: Vec<Result<(PathBuf, FamilyFile)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(template, label)| {
                let (instance_id, boundaries) = (&instance_id, &boundaries);
                scope.spawn(move || -> Result<(PathBuf, FamilyFile)> {
                    let mut profile = SizeProfile::preset(label);
                    profile.generator_product_length = args.product_length;
                    if let Some(p) = args.perms {
                        profile.perm_count = p;
                    }
                    if let Some(t) = args.target_vars {
                        profile.target_vars = t;
                    }
                    let stem = family_stem(template, label);
                    let mut rng = ChaCha8Rng::seed_from_u64(pio::stage_seed(
                        args.seed,
                        &format!("breakers/{stem}"),
                    ));
                    let h = breakers::instantiate_template(template, &profile, layout, &mut rng)?;
                    let family = breakers::generate_family(
                        &h, template, layout, boundaries, &profile, &mut rng,
                    )?;
                    let provenance = Provenance {
                        instance_id: instance_id.clone(),
                        template,
                        profile: label,
                        seed: args.seed,
                    };
                    let file = FamilyFile {
                        manifest: FamilyManifest::for_family(
                            &family,
                            &provenance,
                            profile.generator_product_length,
                        ),
                        breakers: family.polynomials().cloned().collect(),
                    };
                    Ok((args.out.join(format!("{stem}.json")), file))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("breaker job panicked"))
            .collect()
    });
    let mut outputs = Vec::new();
    for r in results {
        let (path, file) = r?;
        pio::write_family(&path, &file)?;
        let c = &file.manifest.counts;
        eprintln!(
            "{}: kept {} (zero {}, linear {}, duplicate {})",
            path.display(),
            c.kept,
            c.dropped_zero,
            c.dropped_linear,
            c.dropped_duplicate
        );
        outputs.push(pio::breakers_path(&path));
        outputs.push(path);
    }
    let mut out = Outcome::ok(outputs);
    out.manifest.global_seed = Some(args.seed);
    out.manifest.instance_file = Some(args.instance.clone());
    out.manifest.template = templates.iter().map(|t| t.name().to_string()).collect();
    out.manifest.profile = profiles.iter().map(|p| p.name().to_string()).collect();
    out.manifest.generator_product_length = Some(args.product_length);
    Ok(out)
}

fn load_families(paths: &[PathBuf]) -> Result<Vec<(PathBuf, FamilyFile)>> {
    paths
        .iter()
        .map(|p| {
            let f =
                pio::read_family(p).with_context(|| format!("reading family {}", p.display()))?;
            Ok((p.clone(), f))
        })
        .collect()
}

fn check_family_matches(record: &InstanceRecord, families: &[(PathBuf, FamilyFile)]) -> Result<()> {
    for (path, f) in families {
        if f.manifest.instance_id != record.id() {
            return Err(usage(format!(
                "family {} was generated for instance {}, not {}",
                path.display(),
                f.manifest.instance_id,
                record.id()
            )));
        }
    }
    Ok(())
}

fn emit(args: &EmitArgs) -> Result<Outcome> {
    let (record, inst) = read_instance(&args.instance)?;
    let families = load_families(&args.family)?;
    check_family_matches(&record, &families)?;
    let model = inst
        .build_model()
        .with_side_constraints(families.iter().flat_map(|(_, f)| &f.breakers))?;
    pio::export_lp(&model, &args.out)?;
    let mut out = Outcome::ok(vec![args.out.clone()]);
    out.manifest.instance_file = Some(args.instance.clone());
    Ok(out)
}

fn generator_name(g: Generator) -> String {
    match g {
        Generator::Bin { k } => format!("bins(1,{k})"),
        Generator::Item { a, b } => format!("items({a},{b})"),
    }
}

fn record(name: String, instance: &str, seed: Option<u64>, result: CheckResult) -> CheckRecord {
    CheckRecord {
        name,
        instance: instance.to_string(),
        seed,
        result,
        witness: None,
    }
}

/// Maps an oracle error to an inconclusive record when it is a guard refusal.
fn guarded<T>(res: Result<T, VerifyError>, guard_hit: &mut bool) -> Result<Option<T>> {
    match res {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_guard() => {
            *guard_hit = true;
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn verify_cmd(args: &VerifyArgs) -> Result<Outcome> {
    let (rec, inst) = read_instance(&args.instance)?;
    let id = rec.id();
    let guard = args.guard.guard();
    let model = inst.build_model();
    let layout = inst.layout();
    let gens = perm::generators(layout, &inst.size_boundaries())?;
    let family = match &args.family {
        Some(p) => {
            let fams = load_families(std::slice::from_ref(p))?;
            check_family_matches(&rec, &fams)?;
            fams.into_iter().next().map(|(_, f)| f)
        }
        None => None,
    };
    let mut guard_hit = false;
    let mut checks = Vec::new();

    for &g in &gens {
        let k = g.to_kronecker(layout);
        let res = guarded(
            verify::symmetry_violation(&k, &model, &guard),
            &mut guard_hit,
        )?;
        let mut r = record(
            format!("symmetry:{}", generator_name(g)),
            &id,
            None,
            CheckResult::Inconclusive,
        );
        if let Some(violation) = res {
            r.result = if violation.is_none() {
                CheckResult::Pass
            } else {
                CheckResult::Fail
            };
            r.witness = violation;
        }
        checks.push(r);
    }

    if let Some(f) = &family {
        let res = guarded(
            verify::check_theorem1(&model, &f.breakers, &guard),
            &mut guard_hit,
        )?;
        let mut r = record(
            "theorem1".into(),
            &id,
            Some(f.manifest.seed),
            CheckResult::Inconclusive,
        );
        if let Some(rep) = res {
            r.result = if rep.holds {
                CheckResult::Pass
            } else {
                CheckResult::Fail
            };
            r.witness = rep.witness;
        }
        checks.push(r);
    }

    if args.fundamental {
        let f = family.as_ref().expect("clap requires --family");
        let h: Polynomial = f.manifest.base.parse()?;
        let perms: Vec<Permutation> = gens.iter().map(|g| g.to_permutation(layout)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(pio::stage_seed(args.seed, "verify/fundamental"));
        let res = guarded(
            verify::check_fundamental_region(&perms, &h, args.samples, &mut rng, &guard),
            &mut guard_hit,
        )?;
        let mut r = record(
            "fundamental_region".into(),
            &id,
            Some(args.seed),
            CheckResult::Inconclusive,
        );
        if let Some(rep) = res {
            eprintln!(
                "fundamental region: |G| = {}, {} of {} samples in F, violations {}/{}/{}",
                rep.group_order,
                rep.in_region,
                rep.samples,
                rep.membership_violations,
                rep.overlap_violations,
                rep.cover_violations
            );
            r.result = if rep.checks_pass() {
                CheckResult::Pass
            } else {
                CheckResult::Fail
            };
        }
        checks.push(r);

        let res = guarded(
            verify::check_linear_existence(&perms, 20, &mut rng, &guard),
            &mut guard_hit,
        )?;
        let result = match res {
            Some(LinearExistence::Found(_) | LinearExistence::Trivial) => CheckResult::Pass,
            _ => CheckResult::Inconclusive,
        };
        checks.push(record(
            "linear_existence".into(),
            &id,
            Some(args.seed),
            result,
        ));
    }

    let report = VerificationReport {
        checks,
        guard_settings: guard,
    };
    write_json(&args.out, &report)?;
    for c in &report.checks {
        eprintln!("{:?} {}", c.result, c.name);
    }
    let mut out = Outcome::ok(vec![args.out.clone()]);
    out.status = if !report.all_passed() {
        Status::VerifyFailed
    } else if guard_hit {
        Status::GuardExceeded
    } else {
        Status::Ok
    };
    out.manifest.instance_file = Some(args.instance.clone());
    out.manifest.global_seed = Some(args.seed);
    out.manifest.guard = Some(guard);
    Ok(out)
}

fn solve_cmd(args: &SolveArgs) -> Result<Outcome> {
    let (rec, inst) = read_instance(&args.instance)?;
    let families = load_families(&args.family)?;
    check_family_matches(&rec, &families)?;
    let configs: Vec<Configuration> = families
        .into_iter()
        .map(|(path, f)| Configuration {
            config_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            template: Some(f.manifest.template.name().to_string()),
            profile: Some(f.manifest.profile.name().to_string()),
            breakers: f.breakers,
        })
        .collect();
    let options = SolveOptions {
        node_limit: args.node_limit,
        value_order: match args.value_order {
            OrderArg::OneFirst => ValueOrder::OneFirst,
            OrderArg::ZeroFirst => ValueOrder::ZeroFirst,
        },
    };
    let rows = solver::compare(&inst.build_model(), &configs, &options)?;
    let id = rec.id();
    let records: Vec<StatsRecord> = rows.iter().map(|r| StatsRecord::from_row(&id, r)).collect();
    for r in &records {
        eprintln!(
            "{}: optimum {:?}, {} nodes ({}%)",
            r.config_id, r.optimum, r.nodes, r.relative_nodes_pct
        );
    }
    let file = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    pio::write_stats(&records, file)?;
    let mut out = Outcome::ok(vec![args.out.clone()]);
    out.manifest.instance_file = Some(args.instance.clone());
    Ok(out)
}

fn report_cmd(args: &ReportArgs) -> Result<Outcome> {
    let mut paths: Vec<PathBuf> = glob::glob(&args.glob)
        .map_err(|e| usage(format!("bad glob {:?}: {e}", args.glob)))?
        .collect::<Result<_, _>>()?;
    paths.sort();
    if paths.is_empty() {
        bail!("no files match {:?}", args.glob);
    }
    let mut records = Vec::new();
    for p in &paths {
        records.extend(pio::read_stats(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let rows = pio::aggregate(&records)?;
    match &args.out {
        Some(path) => {
            let file = BufWriter::new(File::create(path)?);
            pio::write_report(&rows, file)?;
            Ok(Outcome::ok(vec![path.clone()]))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            pio::write_report(&rows, &mut lock)?;
            lock.flush()?;
            Ok(Outcome::ok(Vec::new()))
        }
    }
}

fn replay(args: &ReplayArgs) -> Result<Outcome> {
    let recorded = manifest::read(&args.manifest)?;
    let argv = std::iter::once("polybreak".to_string()).chain(recorded.command.iter().cloned());
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| usage(format!("recorded command does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(usage("a manifest cannot record a replay"));
    }
    let rerun = run(&cli.command)?;
    let mut mismatches = 0;
    for o in &recorded.outputs {
        let now = manifest::sha256_file(&o.path)?;
        let same = now == o.sha256;
        if !same {
            mismatches += 1;
        }
        eprintln!(
            "{} {}",
            if same { "identical" } else { "DIFFERS" },
            o.path.display()
        );
    }
    let mut out = Outcome::ok(Vec::new());
    out.status = if mismatches > 0 {
        Status::VerifyFailed
    } else {
        rerun.status
    };
    Ok(out)
}

fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::Bench(a) => bench(a),
        Command::Breakers(a) => breakers_cmd(a),
        Command::Emit(a) => emit(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Replay(a) => replay(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = run(&cli.command).and_then(|mut outcome| {
        if let Some(path) = &cli.run_manifest {
            if matches!(cli.command, Command::Replay(_)) {
                return Err(usage("--run-manifest cannot be combined with replay"));
            }
            outcome.manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
            outcome.manifest.command = manifest::strip_manifest_flag(std::env::args().skip(1));
            outcome.manifest.outputs = manifest::hash_outputs(&outcome.outputs)?;
            manifest::write(path, &outcome.manifest)?;
        }
        Ok(outcome)
    });
    match outcome {
        Ok(o) => match o.status {
            Status::Ok => ExitCode::SUCCESS,
            Status::VerifyFailed => ExitCode::from(EXIT_VERIFY_FAILED),
            Status::GuardExceeded => ExitCode::from(EXIT_GUARD),
        },
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(EXIT_USAGE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn fundamental_requires_family() {
        let err = Cli::try_parse_from([
            "polybreak",
            "verify",
            "--instance",
            "i",
            "--out",
            "r",
            "--fundamental",
        ])
        .unwrap_err();
        assert!(err.use_stderr());
    }

    #[test]
    fn template_lists() {
        assert_eq!(
            parse_list("all", &Template::ALL, "template").unwrap().len(),
            9
        );
        assert_eq!(
            parse_list("xy,x2+y2", &Template::ALL, "template").unwrap(),
            [Template::XY, Template::X2PlusY2]
        );
        assert!(parse_list("z", &Template::ALL, "template").is_err());
    }
}
