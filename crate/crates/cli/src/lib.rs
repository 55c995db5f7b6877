//! `helia` command line: topology experiments, simulated scenarios, crypto
//! test vectors and a validation throughput benchmark.
//!
//! Exit codes: 0 success, 1 a checked requirement failed, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use helia_core::source::Strategy;
use helia_core::units::parse_bandwidth;
use helia_core::Bandwidth;
use helia_simnet::{assert_requirement, requirements_csv, run_scenario, Scenario};
use helia_topo::output::{write_cover, write_edges, write_reservations, RunKey};
use helia_topo::plot::{line_chart, Series};
use helia_topo::{cover_grid, parse_strategy, strategy_name, ExperimentConfig};
use rayon::prelude::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "helia", version, about = "Flyover reservation experiments and tools")]
struct Cli {
    /// Worker threads for independent runs (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Topology generation.
    #[command(subcommand)]
    Topo(TopoCmd),
    /// Reservation-size and cover experiments.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Packet-level attack scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Print the crypto test vectors.
    Vectors,
    /// Data-plane throughput measurements.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Debug, Subcommand)]
enum TopoCmd {
    /// Generate a graph and print its edges as CSV.
    Gen {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum SimCmd {
    /// Per (source, destination) reservation sizes.
    Reservations {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0.1)]
        r: f64,
        #[arg(long, default_value = "max", value_parser = strategy_arg)]
        strategy: Strategy,
        #[arg(long, default_value_t = 1)]
        rho_min: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Median γ-cover for every combination of the given values.
    Cover(CoverArgs),
    /// SVG charts of median cover against γ and against graph size.
    Plot {
        #[command(flatten)]
        cover: CoverArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioCmd {
    /// Run scenario files and check their requirements.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Overrides the seed in every file.
        #[arg(long)]
        seed: Option<u64>,
        /// Event log (single scenario only).
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum BenchCmd {
    /// Data-packet validations per second, parallel and sequential.
    Validate {
        #[arg(long, default_value = "1e6", value_parser = count_arg)]
        packets: u64,
        #[arg(long, default_value_t = 100)]
        payload: usize,
    },
}

#[derive(Debug, Args)]
struct GraphArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Edges attached per new node.
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct CoverArgs {
    #[arg(long, value_delimiter = ',', default_value = "500")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    r: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "max", value_parser = strategy_arg)]
    strategy: Vec<Strategy>,
    #[arg(long, default_value = "100kbps", value_parser = bandwidth_arg)]
    gamma: Bandwidth,
    #[arg(long, default_value_t = 1)]
    rho_min: u64,
}

fn strategy_arg(s: &str) -> Result<Strategy, String> {
    parse_strategy(s).ok_or_else(|| format!("unknown strategy {s:?} (concurrent or max)"))
}

fn bandwidth_arg(s: &str) -> Result<Bandwidth, String> {
    parse_bandwidth(s).map_err(|e| e.to_string())
}

/// Accepts `1000000` as well as `1e6`.
fn count_arg(s: &str) -> Result<u64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v < 1.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(format!("need a positive whole number, got {s:?}"));
    }
    Ok(v as u64)
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failed(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<helia_topo::TopoError> for CliError {
    fn from(e: helia_topo::TopoError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<helia_simnet::ConfigError> for CliError {
    fn from(e: helia_simnet::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

type Res = Result<(), CliError>;

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            let _ = writeln!(err, "error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli.cmd, &mut *out, &mut *err)) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Failed(m)) => {
            let _ = writeln!(err, "FAILED: {m}");
            EXIT_FAILED
        }
    }
}

fn dispatch(cmd: Cmd, out: &mut dyn Write, err: &mut dyn Write) -> Res {
    match cmd {
        Cmd::Topo(TopoCmd::Gen { graph, out: path }) => topo_gen(&graph, path.as_deref(), out, err),
        Cmd::Sim(SimCmd::Reservations {
            graph,
            r,
            strategy,
            rho_min,
            out: path,
        }) => reservations(&graph, r, strategy, rho_min, path.as_deref(), out, err),
        Cmd::Sim(SimCmd::Cover(args)) => cover(&args, out, err),
        Cmd::Sim(SimCmd::Plot { cover, out_dir }) => plot(&cover, &out_dir, out, err),
        Cmd::Scenario(ScenarioCmd::Run { configs, seed, log }) => scenarios(&configs, seed, log.as_deref(), out, err),
        Cmd::Vectors => {
            writeln!(err, "# vectors")?;
            write!(out, "{}", helia_core::vectors::render_vectors())?;
            Ok(())
        }
        Cmd::Bench(BenchCmd::Validate { packets, payload }) => bench_validate(packets, payload, out, err),
    }
}

fn experiment(g: &GraphArgs) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig {
        n_nodes: g.n,
        attachment: g.m,
        seed: g.seed,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn sink<'a>(path: Option<&Path>, out: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(out),
    })
}

fn topo_gen(g: &GraphArgs, path: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Res {
    let cfg = experiment(g)?;
    writeln!(err, "# topo gen n={} m={} seed={}", cfg.n_nodes, cfg.attachment, cfg.seed)?;
    let graph = helia_topo::generate_topology(&cfg);
    write_edges(sink(path, out)?, &graph)?;
    Ok(())
}

fn reservations(
    g: &GraphArgs,
    r: f64,
    strategy: Strategy,
    rho_min: u64,
    path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Res {
    let cfg = ExperimentConfig {
        r,
        strategy,
        rho_min,
        ..experiment(g)?
    };
    cfg.validate()?;
    writeln!(
        err,
        "# sim reservations n={} m={} seed={} r={} strategy={} rho_min={}",
        cfg.n_nodes,
        cfg.attachment,
        cfg.seed,
        cfg.r,
        strategy_name(strategy),
        cfg.rho_min
    )?;
    let e = helia_topo::run_experiment(&cfg)?;
    let key = RunKey {
        seed: cfg.seed,
        n: cfg.n_nodes,
        r,
        strategy,
    };
    write_reservations(sink(path, out)?, key, &e.reservations)?;
    Ok(())
}

fn print_cover_config(a: &CoverArgs, err: &mut dyn Write, what: &str) -> Res {
    let strategies: Vec<&str> = a.strategy.iter().map(|&s| strategy_name(s)).collect();
    writeln!(
        err,
        "# {what} n={:?} m={} seed={:?} r={:?} strategy={:?} gamma={} rho_min={}",
        a.n, a.m, a.seed, a.r, strategies, a.gamma.0, a.rho_min
    )?;
    Ok(())
}

type CoverRows = Vec<(RunKey, helia_topo::CoverResult)>;

/// All (n, seed) graphs in parallel; rates and strategies share each graph.
fn cover_rows(a: &CoverArgs, gamma: Bandwidth) -> Result<CoverRows, CliError> {
    let jobs: Vec<(usize, u64)> = a.n.iter().flat_map(|&n| a.seed.iter().map(move |&s| (n, s))).collect();
    let runs: Result<Vec<CoverRows>, helia_topo::TopoError> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let base = ExperimentConfig {
                n_nodes: n,
                attachment: a.m,
                seed,
                rho_min: a.rho_min,
                gamma,
                ..Default::default()
            };
            Ok(cover_grid(&base, &a.r, &a.strategy)?
                .into_iter()
                .map(|(r, strategy, c)| (RunKey { seed, n, r, strategy }, c))
                .collect())
        })
        .collect();
    Ok(runs?.into_iter().flatten().collect())
}

fn cover(a: &CoverArgs, out: &mut dyn Write, err: &mut dyn Write) -> Res {
    print_cover_config(a, err, "sim cover")?;
    let rows = cover_rows(a, a.gamma)?;
    write_cover(out, rows.iter().map(|(k, c)| (*k, c)))?;
    Ok(())
}

/// 1 kbps to 100 Mbps in 1-2-5 steps.
fn gamma_sweep() -> Vec<Bandwidth> {
    let mut v = Vec::new();
    let mut decade = 1_000u64;
    while decade <= 100_000_000 {
        for k in [1, 2, 5] {
            if decade * k <= 100_000_000 {
                v.push(Bandwidth(decade * k));
            }
        }
        decade *= 10;
    }
    v
}

type Groups = std::collections::BTreeMap<(usize, &'static str, String), Vec<f64>>;

/// Median over seeds for each (n, strategy, r).
fn by_setting(rows: &CoverRows) -> Groups {
    let mut groups = Groups::new();
    for (k, c) in rows {
        groups
            .entry((k.n, strategy_name(k.strategy), k.r.to_string()))
            .or_default()
            .push(c.median);
    }
    groups
}

fn plot(a: &CoverArgs, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Res {
    print_cover_config(a, err, "sim plot")?;
    std::fs::create_dir_all(dir)?;
    writeln!(out, "chart,n,r,strategy,gamma,median_cover")?;
    let mut curves: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();

    let first = CoverArgs { n: vec![a.n[0]], ..a.clone() };
    for g in gamma_sweep() {
        for ((n, s, r), meds) in by_setting(&cover_rows(&first, g)?) {
            let m = helia_topo::median(&meds);
            writeln!(out, "gamma,{n},{r},{s},{},{m}", g.0)?;
            curves.entry(format!("{s} r={r}")).or_default().push((g.0 as f64, m));
        }
    }
    let series: Vec<Series> = std::mem::take(&mut curves)
        .into_iter()
        .map(|(label, points)| Series { label, points })
        .collect();
    line_chart(&dir.join("cover_vs_gamma.svg"), "Median cover by threshold", "gamma [bps]", &series, true)?;

    for ((n, s, r), meds) in by_setting(&cover_rows(a, a.gamma)?) {
        let m = helia_topo::median(&meds);
        writeln!(out, "n,{n},{r},{s},{},{m}", a.gamma.0)?;
        curves.entry(format!("{s} r={r}")).or_default().push((n as f64, m));
    }
    let series: Vec<Series> = curves.into_iter().map(|(label, points)| Series { label, points }).collect();
    line_chart(&dir.join("cover_vs_n.svg"), "Median cover by graph size", "nodes", &series, false)?;
    Ok(())
}

/// Looks next to the current directory first, then under `scenarios/`.
fn resolve_config(p: &Path) -> PathBuf {
    if p.exists() {
        return p.to_path_buf();
    }
    let alt = Path::new("scenarios").join(p);
    if alt.exists() {
        alt
    } else {
        p.to_path_buf()
    }
}

fn scenarios(configs: &[PathBuf], seed: Option<u64>, log: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Res {
    if log.is_some() && configs.len() != 1 {
        return Err(CliError::Usage("--log needs exactly one scenario".into()));
    }
    let mut loaded = Vec::new();
    for p in configs {
        let mut sc = Scenario::load(&resolve_config(p))?;
        if let Some(s) = seed {
            sc.seed = s;
        }
        writeln!(err, "# scenario {} seed={}", sc.name, sc.seed)?;
        for line in sc.to_toml().lines() {
            writeln!(err, "#   {line}")?;
        }
        loaded.push(sc);
    }
    let reports: Vec<Result<helia_simnet::Report, helia_simnet::ConfigError>> = match log {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            let r = run_scenario(&loaded[0], Some(&mut f));
            f.flush()?;
            vec![r]
        }
        None => loaded.par_iter().map(|sc| run_scenario(sc, None)).collect(),
    };
    let mut failures = Vec::new();
    for (sc, report) in loaded.iter().zip(reports) {
        let report = report?;
        let results: Vec<_> = sc.assert.iter().map(|&r| (r, assert_requirement(&report, r))).collect();
        write!(out, "{}\n{}\n{}", report.flows_csv(), report.summary_csv(), requirements_csv(&results))?;
        for (r, res) in &results {
            if let Err(m) = res {
                failures.push(format!("{} {r:?}: {m}", sc.name));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failures.join("; ")))
    }
}

fn bench_validate(packets: u64, payload: usize, out: &mut dyn Write, err: &mut dyn Write) -> Res {
    use helia_core::crypto::{compute_authenticator, SecretKey};
    use helia_core::router::{verify_batch, verify_batch_sequential, BatchItem, RouterConfig};
    use helia_core::source::build_data_packet;
    use helia_core::{AsId, IfId, Timestamp};

    writeln!(
        err,
        "# bench validate packets={packets} payload={payload} threads={}",
        rayon::current_num_threads()
    )?;
    let secret = SecretKey::from_bytes([9; 16]);
    let cfg = RouterConfig::default();
    let now = Timestamp::from_secs(100);
    let distinct = packets.min(1 << 16) as usize;
    let pkts: Vec<_> = (0..distinct)
        .map(|i| {
            let src = AsId(i as u64 % 1024);
            let a = compute_authenticator(&secret, src, IfId(1), IfId(2));
            let p = build_data_packet(src, Timestamp(now.0 - i as u64), &[(0, a)], &[], 0, vec![0; payload])
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let len = p.encoded_len();
            Ok((p, len))
        })
        .collect::<Result<_, CliError>>()?;
    let items: Vec<BatchItem<'_>> = pkts
        .iter()
        .map(|(p, len)| BatchItem {
            pkt: p,
            wire_len: *len,
            hop: 0,
            ingress: IfId(1),
            egress: IfId(2),
        })
        .collect();
    writeln!(out, "mode,packets,seconds,validations_per_sec")?;
    type Verify = fn(
        &SecretKey,
        &RouterConfig,
        &[BatchItem<'_>],
        Timestamp,
    ) -> Vec<Result<helia_core::Direction, helia_core::router::Annotation>>;
    for (mode, f) in [("parallel", verify_batch as Verify), ("sequential", verify_batch_sequential as Verify)] {
        let mut done = 0u64;
        let mut valid = 0u64;
        let t = Instant::now();
        while done < packets {
            let take = ((packets - done) as usize).min(items.len());
            valid += f(&secret, &cfg, &items[..take], now).iter().filter(|r| r.is_ok()).count() as u64;
            done += take as u64;
        }
        let secs = t.elapsed().max(Duration::from_nanos(1)).as_secs_f64();
        if valid != packets {
            return Err(CliError::Failed(format!("{mode}: {} of {packets} packets failed validation", packets - valid)));
        }
        writeln!(out, "{mode},{packets},{secs:.3},{:.0}", packets as f64 / secs)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("helia").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn counts_accept_exponents() {
        assert_eq!(count_arg("1e6"), Ok(1_000_000));
        assert_eq!(count_arg("250"), Ok(250));
        assert!(count_arg("1.5").is_err());
        assert!(count_arg("0").is_err());
    }

    #[test]
    fn sweep_spans_thresholds() {
        let s = gamma_sweep();
        assert_eq!(s.first(), Some(&Bandwidth::kbps(1)));
        assert_eq!(s.last(), Some(&Bandwidth::mbps(100)));
        assert_eq!(s.len(), 16);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_str(&["sim", "cover", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["sim", "cover", "--strategy", "greedy"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["sim", "cover", "--r", "0"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["topo", "gen", "--n", "1"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["scenario", "run", "/nonexistent.cfg"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["--jobs", "0", "vectors"]).0, EXIT_USAGE);
        assert_eq!(run_str(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_str(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("scenario"));
    }
}
