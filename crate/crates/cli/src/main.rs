use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use perctree::harness::config::{DEFAULT_SEED, DEFAULT_TOP_K};
use perctree::harness::{self, RawConfig};
use perctree::oracle::{self, ClusterMeasure, MaskRecord};
use perctree::percolation::{clusters, percolate, ClusterRecord, PercolationParams};
use perctree::regular_tree::{percolate_regular, RegularParams, RegularRecord};
use perctree::rng::stream_from_seed;
use perctree::split_tree::{GenerateOptions, Insertion, SplitTree, SplitTreeParams};
use perctree::split_vector::{entropy_mu, parse_multiset, SplitVectorKind, SplitVectorSpec};
use perctree::{exponential_rate, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_GATE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "perctree", version, about = "Split trees, regular trees and supercritical bond percolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one split tree and print its statistics (or its dump).
    Generate(GenerateArgs),
    /// Percolate one split tree and print its cluster record.
    Percolate(PercolateArgs),
    /// Percolate one complete d-ary tree and print its cluster record.
    Regular(RegularArgs),
    /// Run a replicated experiment from a config file and flags.
    Experiment(ExperimentArgs),
    /// Exact percolation law of a tiny tree by enumerating every edge mask.
    Oracle(OracleArgs),
    /// Print mu, the lattice span and the exponential rate for a split vector.
    Mu(MuArgs),
}

#[derive(Args, Debug, Clone)]
struct VectorArgs {
    /// Split-vector kind: uniform-binary, deterministic-uniform or fixed-multiset.
    #[arg(long, default_value = "uniform-binary")]
    kind: String,
    /// Branching factor (required for deterministic-uniform).
    #[arg(long)]
    b: Option<usize>,
    /// Comma-separated probabilities for fixed-multiset, e.g. 1/2,1/4,1/8,1/8.
    #[arg(long)]
    multiset: Option<String>,
}

impl VectorArgs {
    fn spec(&self) -> perctree::Result<SplitVectorSpec> {
        let kind: SplitVectorKind = self.kind.parse()?;
        let multiset = self.multiset.as_deref().map(parse_multiset).transpose()?;
        SplitVectorSpec::from_parts(kind, self.b, multiset.as_deref())
    }
}

#[derive(Args, Debug, Clone)]
struct TreeArgs {
    #[command(flatten)]
    vector: VectorArgs,
    /// Leaf capacity.
    #[arg(long, default_value_t = 1)]
    s: u32,
    /// Balls kept by internal vertices.
    #[arg(long, default_value_t = 1)]
    s0: u32,
    /// Balls handed to every child on a split.
    #[arg(long, default_value_t = 0)]
    s1: u32,
    /// Number of balls.
    #[arg(long)]
    n: u64,
    /// Insertion method: sequential or recursive.
    #[arg(long, default_value = "sequential")]
    insertion: String,
}

impl TreeArgs {
    fn params(&self) -> perctree::Result<(SplitTreeParams, Insertion)> {
        let spec = self.vector.spec()?;
        let params = SplitTreeParams::new(spec.branch_factor(), self.s, self.s0, self.s1, spec, self.n)?;
        Ok((params, self.insertion.parse()?))
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Print the vertex dump instead of summary statistics.
    #[arg(long)]
    dump: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("regime").required(true).args(["c", "p"])))]
struct PercolateArgs {
    #[command(flatten)]
    tree: TreeArgs,
    /// Supercritical constant: keep probability 1 - c / ln n.
    #[arg(long)]
    c: Option<f64>,
    /// Explicit keep probability.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("regime").required(true).args(["c", "p"])))]
struct RegularArgs {
    #[arg(long)]
    d: u32,
    #[arg(long)]
    h: u32,
    /// Supercritical constant: keep probability 1 - c / h.
    #[arg(long)]
    c: Option<f64>,
    /// Explicit keep probability.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// theorem1, theorem2, theorem3, theorem4, prop_m or process_n.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    multiset: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    s0: Option<String>,
    #[arg(long)]
    s1: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    h_grid: Option<String>,
    #[arg(long)]
    t_grid: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
    /// Output directory for report.json, report.csv and records.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 when any acceptance gate fails.
    #[arg(long)]
    gate: bool,
}

impl ExperimentArgs {
    fn raw_config(&self) -> perctree::Result<RawConfig> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        let overrides = [
            ("experiment", "kind", &self.experiment),
            ("split_vector", "kind", &self.kind),
            ("split_vector", "b", &self.b),
            ("split_vector", "multiset", &self.multiset),
            ("split_tree", "s", &self.s),
            ("split_tree", "s0", &self.s0),
            ("split_tree", "s1", &self.s1),
            ("regular_tree", "d", &self.d),
            ("experiment", "c", &self.c),
            ("experiment", "p", &self.p),
            ("experiment", "seed", &self.seed),
            ("experiment", "reps", &self.reps),
            ("experiment", "n_grid", &self.n_grid),
            ("experiment", "h_grid", &self.h_grid),
            ("experiment", "t_grid", &self.t_grid),
            ("experiment", "top_k", &self.top_k),
        ];
        for (section, key, value) in overrides {
            if let Some(v) = value {
                raw.set(section, key, v.clone());
            }
        }
        if let Some(out) = &self.out {
            raw.set("experiment", "out", out.display().to_string());
        }
        Ok(raw)
    }
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("shape").required(true).args(["tree", "d"])))]
struct OracleArgs {
    /// Split-tree dump file (`index parent depth ball_count` per line).
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Branching factor of the dumped tree.
    #[arg(long, default_value_t = 2)]
    b: usize,
    /// Degree of a complete d-ary tree.
    #[arg(long, requires = "h")]
    d: Option<u32>,
    #[arg(long)]
    h: Option<u32>,
    /// Keep probability.
    #[arg(long)]
    p: f64,
    /// Key split-tree outcomes by vertex counts instead of ball counts.
    #[arg(long)]
    vertices: bool,
    /// Print the per-mask table instead of the outcome law.
    #[arg(long)]
    masks: bool,
    /// Compare against this many Monte Carlo samples.
    #[arg(long, default_value_t = 0)]
    samples: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MuArgs {
    #[command(flatten)]
    vector: VectorArgs,
    /// Supercritical constant; enables the exponential rate.
    #[arg(long)]
    c: Option<f64>,
    /// Monte Carlo samples for mu (0 uses the closed form).
    #[arg(long, default_value_t = 0)]
    samples: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Runtime(String),
    Gate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> CliResult {
    let (params, method) = args.tree.params()?;
    let opts = GenerateOptions { method, ..Default::default() };
    let tree = SplitTree::generate_with(&params, &opts, &mut stream_from_seed(args.seed))?;
    let text = if args.dump {
        format!("# seed {}\n{}", args.seed, tree.dump())
    } else {
        let leaves = tree.vertices().iter().filter(|v| v.is_leaf()).count();
        let stats = serde_json::json!({
            "seed": args.seed,
            "n": tree.n_balls(),
            "b": tree.branch_factor(),
            "vertices": tree.vertex_count(),
            "leaves": leaves,
            "height": tree.height(),
            "vertices_per_ball": tree.vertex_count() as f64 / tree.n_balls() as f64,
        });
        format!("{stats}\n")
    };
    emit(args.out.as_deref(), &text)
}

fn percolate_split(args: PercolateArgs) -> CliResult {
    let (params, method) = args.tree.params()?;
    let n = params.n();
    let (perc, c) = match (args.c, args.p) {
        (Some(c), None) => (PercolationParams::split_regime(c, n)?, c),
        (None, Some(p)) => (PercolationParams::explicit(p)?, (1.0 - p) * (n as f64).ln()),
        _ => return Err(Failure::Usage("give exactly one of --c and --p".into())),
    };
    let mut rng = stream_from_seed(args.seed);
    let opts = GenerateOptions { method, ..Default::default() };
    let tree = SplitTree::generate_with(&params, &opts, &mut rng)?;
    let mask = percolate(&tree, &perc, &mut rng);
    let report = clusters(&tree, &mask)?;
    let record = ClusterRecord::new(&report, args.seed, n, c, args.top_k);
    emit(args.out.as_deref(), &(record.to_json_line() + "\n"))
}

fn percolate_regular_tree(args: RegularArgs) -> CliResult {
    let params = match (args.c, args.p) {
        (Some(c), None) => RegularParams::new(args.d, args.h, c)?,
        (None, Some(p)) => RegularParams::with_keep(args.d, args.h, p)?,
        _ => return Err(Failure::Usage("give exactly one of --c and --p".into())),
    };
    let report = percolate_regular(&params, &mut stream_from_seed(args.seed));
    let record = RegularRecord::new(&report, &params, args.seed, args.top_k);
    emit(args.out.as_deref(), &(record.to_json_line() + "\n"))
}

fn experiment(args: ExperimentArgs) -> CliResult {
    let config = args.raw_config()?.build()?;
    let (campaign, mut report) = harness::run(&config)?;
    match &config.output {
        Some(dir) => {
            let paths = harness::write_outputs(dir, &mut report, &campaign.to_jsonl())?;
            eprintln!("wrote {}", paths.report.display());
        }
        None => emit(None, &report.to_json())?,
    }
    for g in &report.gates {
        eprintln!("{} {}: {}", if g.passed { "PASS" } else { "FAIL" }, g.name, g.detail);
    }
    if args.gate && !report.gates_passed() {
        return Err(Failure::Gate(format!("{} gate(s) failed", report.gates.iter().filter(|g| !g.passed).count())));
    }
    Ok(())
}

fn oracle_cmd(args: OracleArgs) -> CliResult {
    let measure = if args.vertices { ClusterMeasure::Vertices } else { ClusterMeasure::Balls };
    let mut header = format!("# seed {}\n", args.seed);
    let (law, table, edges): (Vec<(String, f64)>, Vec<MaskRecord>, usize) = match (&args.tree, args.d) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let tree = SplitTree::from_dump(&text, args.b).map_err(|e| Failure::Usage(e.to_string()))?;
            header.push_str(&format!("# split tree {} b={} p={}\n", path.display(), args.b, args.p));
            let exact = oracle::exact_ranked_law::<f64>(&tree, args.p, measure)?;
            let law: Vec<(String, f64)> = exact.iter().map(|(k, p)| (oracle::format_ranked_key(k), *p)).collect();
            let table = if args.masks && !args.vertices { oracle::split_mask_table(&tree, args.p)? } else { Vec::new() };
            if args.samples > 0 {
                let mut rng = stream_from_seed(args.seed);
                let perc = PercolationParams::explicit(args.p)?;
                let samples: Vec<String> = (0..args.samples)
                    .map(|_| {
                        let report = clusters(&tree, &percolate(&tree, &perc, &mut rng)).expect("mask matches tree");
                        oracle::format_ranked_key(&oracle::ranked_key(&report, measure))
                    })
                    .collect();
                header.push_str(&sample_lines(&law, &samples));
            }
            (law, table, tree.edge_count())
        }
        (None, Some(d)) => {
            let h = args.h.expect("clap requires h with d");
            let table = oracle::regular_mask_table(d, h, args.p)?;
            header.push_str(&format!("# regular tree d={d} h={h} q={}\n", args.p));
            let law: Vec<(String, f64)> = oracle::table_law(&table).iter().map(|(k, p)| (k.clone(), *p)).collect();
            if args.samples > 0 {
                let params = RegularParams::with_keep(d, h, args.p)?;
                let mut rng = stream_from_seed(args.seed);
                let samples: Vec<String> = (0..args.samples)
                    .map(|_| oracle::format_regular_key(&percolate_regular(&params, &mut rng)))
                    .collect();
                header.push_str(&sample_lines(&law, &samples));
            }
            let edges = oracle::regular_edge_count(d, h) as usize;
            (law, if args.masks { table } else { Vec::new() }, edges)
        }
        (None, None) => return Err(Failure::Usage("give --tree or --d/--h".into())),
    };
    if args.masks && args.vertices && args.tree.is_some() {
        return Err(Failure::Usage("--masks tables are keyed by ball counts".into()));
    }
    let body = if args.masks {
        oracle::format_mask_table(&table, edges)
    } else {
        let mut s = String::from("# key probability\n");
        for (k, p) in &law {
            s.push_str(&format!("{k} {p:.17e}\n"));
        }
        s
    };
    emit(args.out.as_deref(), &(header + &body))
}

/// Comment lines comparing sampled frequencies with the exact law.
fn sample_lines(law: &[(String, f64)], samples: &[String]) -> String {
    let exact = oracle::table_law(
        &law.iter().map(|(k, p)| MaskRecord { bits: 0, key: k.clone(), probability: *p }).collect::<Vec<_>>(),
    );
    let checks = oracle::compare_with_samples(&exact, samples, harness::tolerances::ORACLE_MIN_PROBABILITY);
    let mut out = format!("# samples {}\n", samples.len());
    for c in checks {
        let verdict = if c.within(harness::tolerances::ORACLE_SIGMAS) { "ok" } else { "off" };
        out.push_str(&format!(
            "# {} exact {:.6} sampled {:.6} se {:.6} {verdict}\n",
            c.key, c.exact, c.frequency, c.std_error
        ));
    }
    out
}

fn mu_cmd(args: MuArgs) -> CliResult {
    let spec = args.vector.spec()?;
    let mu = entropy_mu(&spec, args.samples, &mut stream_from_seed(args.seed))?;
    let mut out = format!("mu={}\n", mu.value);
    if args.samples > 0 {
        out.push_str(&format!("mu_std_error={}\n", mu.std_error));
    }
    if let Some(c) = args.c {
        out.push_str(&format!("lambda={}\n", exponential_rate(c, mu.value, 1.0)?));
        out.push_str(&format!("giant_fraction={}\n", (-c / mu.value).exp()));
    }
    match spec.lattice_span() {
        Some(a) => out.push_str(&format!("span={a}\n")),
        None => out.push_str("span=none\n"),
    }
    out.push_str(&format!("seed={}\n", args.seed));
    emit(None, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Percolate(a) => percolate_split(a),
        Command::Regular(a) => percolate_regular_tree(a),
        Command::Experiment(a) => experiment(a),
        Command::Oracle(a) => oracle_cmd(a),
        Command::Mu(a) => mu_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Gate(msg)) => {
            eprintln!("gate failure: {msg}");
            ExitCode::from(EXIT_GATE)
        }
    }
}
