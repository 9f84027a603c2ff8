//! Seeded, replicated experiments for the limit theorems.
//!
//! [`simulate`] runs `R` replications per grid point, each on its own stream
//! `replication_stream(master_seed, grid_index, rep)`, in parallel; results
//! are collected in replication order, so the thread count never changes the
//! output. The `run_*` functions turn a [`Campaign`] into an
//! [`ExperimentReport`] with targets, standard errors, test statistics and
//! pass/fail gates.

pub mod config;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ExperimentKind, RawConfig, TreeModel};
pub use report::{write_outputs, Estimate, ExperimentReport, Gate, OutputPaths, Phase, StatRow};

use crate::error::{Error, Result};
use crate::limit_laws::gof::{ks_test, poisson_increment_test};
use crate::limit_laws::{exponential_rate, giant_fraction, regular_giant_fraction, regular_phase, split_phase, LimitLaw};
use crate::percolation::{clusters_with_counts, counting_process, percolate, ClusterRecord};
use crate::regular_tree::{percolate_regular, RegularRecord};
use crate::rng::{replication_stream, RandomStream};
use crate::split_tree::{m_statistic_grid, GenerateOptions, SplitTree};
use crate::split_vector::{entropy_mu, MuEstimate};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PERCTREE_THREADS";

/// Pinned gate tolerances.
pub mod tolerances {
    /// `|mean C0/n - e^(-c/mu)|` for non-lattice split trees.
    pub const GIANT_SPLIT: f64 = 0.02;
    /// Same for lattice split trees.
    pub const GIANT_LATTICE: f64 = 0.025;
    /// `|mean G0 d^-h - d e^-c / (d-1)|`.
    pub const GIANT_REGULAR: f64 = 0.015;
    pub const KS_MIN_P: f64 = 0.01;
    /// Relative error of `mean M_n(t) / ln n`.
    pub const M_RELATIVE: f64 = 0.15;
    pub const POISSON_MIN_P: f64 = 0.01;
    /// Binomial standard errors allowed for `P(tau_1 > i)`.
    pub const TAU_SIGMAS: f64 = 4.0;
    /// `P(tau_1 > i)` is gated for `i = 1..=TAU_LEVELS`.
    pub const TAU_LEVELS: u32 = 5;
    pub const ORACLE_SIGMAS: f64 = 3.0;
    pub const ORACLE_MIN_PROBABILITY: f64 = 0.005;
    pub const CLOSED_FORM: f64 = 1e-12;
}

/// One split-tree replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub grid_index: u32,
    pub rep: u32,
    #[serde(flatten)]
    pub clusters: ClusterRecord,
    /// Vertex count `N`.
    pub vertices: u64,
    /// `M_n(t)` on the t-grid.
    pub m_t: Vec<u64>,
    /// `N_n(t)` on the t-grid.
    pub n_t: Vec<u64>,
}

/// One regular-tree replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularRepRecord {
    pub grid_index: u32,
    pub rep: u32,
    #[serde(flatten)]
    pub clusters: RegularRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecords<R> {
    /// `n` or `h`.
    pub value: u64,
    pub records: Vec<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Split(Vec<GridRecords<SplitRecord>>),
    Regular(Vec<GridRecords<RegularRepRecord>>),
}

/// Raw replications of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub config: ExperimentConfig,
    pub records: Records,
}

fn truncate<R: Clone>(grids: &[GridRecords<R>], reps: usize) -> Vec<GridRecords<R>> {
    grids
        .iter()
        .map(|g| GridRecords { value: g.value, records: g.records.iter().take(reps).cloned().collect() })
        .collect()
}

impl Campaign {
    /// The first `reps` replications of every grid point.
    pub fn truncated(&self, reps: u32) -> Campaign {
        let records = match &self.records {
            Records::Split(g) => Records::Split(truncate(g, reps as usize)),
            Records::Regular(g) => Records::Regular(truncate(g, reps as usize)),
        };
        let mut config = self.config.clone();
        config.replications = config.replications.min(reps);
        Campaign { config, records }
    }

    /// Same replications relabelled as another experiment on the same tree model.
    pub fn as_experiment(&self, experiment: ExperimentKind) -> Result<Campaign> {
        let mut config = self.config.clone();
        config.experiment = experiment;
        config.validate()?;
        Ok(Campaign { config, records: self.records.clone() })
    }

    pub fn split(&self) -> Option<&[GridRecords<SplitRecord>]> {
        match &self.records {
            Records::Split(g) => Some(g),
            Records::Regular(_) => None,
        }
    }

    pub fn regular(&self) -> Option<&[GridRecords<RegularRepRecord>]> {
        match &self.records {
            Records::Regular(g) => Some(g),
            Records::Split(_) => None,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: String| {
            out.push_str(&line);
            out.push('\n');
        };
        match &self.records {
            Records::Split(grids) => grids
                .iter()
                .flat_map(|g| &g.records)
                .for_each(|r| push(serde_json::to_string(r).expect("record serializes"))),
            Records::Regular(grids) => grids
                .iter()
                .flat_map(|g| &g.records)
                .for_each(|r| push(serde_json::to_string(r).expect("record serializes"))),
        }
        out
    }
}

/// Worker pool honouring [`THREADS_ENV`].
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var(THREADS_ENV) {
        let threads: usize = text
            .trim()
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{text}`")))?;
        builder = builder.num_threads(threads);
    }
    builder.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn index_u32(i: usize) -> u32 {
    u32::try_from(i).expect("index fits in u32")
}

/// Runs every replication of `config`.
pub fn simulate(config: &ExperimentConfig) -> Result<Campaign> {
    config.validate()?;
    let pool = worker_pool()?;
    let records = pool.install(|| match &config.tree {
        TreeModel::Split { .. } => simulate_split(config).map(Records::Split),
        TreeModel::Regular { .. } => simulate_regular(config).map(Records::Regular),
    })?;
    Ok(Campaign { config: config.clone(), records })
}

fn simulate_split(config: &ExperimentConfig) -> Result<Vec<GridRecords<SplitRecord>>> {
    let TreeModel::Split { params, insertion } = &config.tree else {
        unreachable!("split model checked by caller");
    };
    let opts = GenerateOptions { method: *insertion, ..Default::default() };
    config
        .grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let params = params.with_n(n)?;
            let perc = config.percolation_at(n)?;
            let records = (0..config.replications)
                .into_par_iter()
                .map(|rep| {
                    let mut rng: RandomStream = replication_stream(config.master_seed, index_u32(gi), rep);
                    let tree = SplitTree::generate_with(&params, &opts, &mut rng)?;
                    let mask = percolate(&tree, &perc, &mut rng);
                    let counts = tree.subtree_ball_counts();
                    let report = clusters_with_counts(&tree, &counts, &mask)?;
                    Ok(SplitRecord {
                        grid_index: index_u32(gi),
                        rep,
                        clusters: ClusterRecord::new(&report, config.master_seed, n, config.c, config.top_k),
                        vertices: tree.vertex_count() as u64,
                        m_t: m_statistic_grid(&counts, n, &config.t_grid),
                        n_t: counting_process(&report, n, &config.t_grid),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GridRecords { value: n, records })
        })
        .collect()
}

fn simulate_regular(config: &ExperimentConfig) -> Result<Vec<GridRecords<RegularRepRecord>>> {
    config
        .grid
        .iter()
        .enumerate()
        .map(|(gi, &h)| {
            let params = config.regular_at(h)?;
            let records = (0..config.replications)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replication_stream(config.master_seed, index_u32(gi), rep);
                    let report = percolate_regular(&params, &mut rng);
                    let mut clusters = RegularRecord::new(&report, &params, config.master_seed, config.top_k);
                    clusters.c = Some(config.c);
                    RegularRepRecord { grid_index: index_u32(gi), rep, clusters }
                })
                .collect();
            Ok(GridRecords { value: h, records })
        })
        .collect()
}

fn base_report(config: &ExperimentConfig) -> ExperimentReport {
    ExperimentReport {
        schema_version: report::SCHEMA_VERSION,
        experiment: config.experiment,
        master_seed: config.master_seed,
        // The output directory is not part of the experiment, so reruns
        // into different directories stay byte-identical.
        config: ExperimentConfig { output: None, ..config.clone() }.to_raw(),
        mu: None,
        lattice_span: None,
        alpha: None,
        rate: None,
        phases: Vec::new(),
        rows: Vec::new(),
        gates: Vec::new(),
        tolerance_note: report::TOLERANCE_NOTE.to_string(),
        raw_records: None,
    }
}

fn split_mu(config: &ExperimentConfig) -> Result<MuEstimate> {
    let params = config.split_params().ok_or_else(|| Error::Config("not a split-tree experiment".into()))?;
    entropy_mu(params.vector(), 0, &mut replication_stream(config.master_seed, u32::MAX, 0))
}

fn split_grids<'a>(campaign: &'a Campaign, kind: ExperimentKind) -> Result<&'a [GridRecords<SplitRecord>]> {
    if campaign.config.experiment != kind {
        return Err(Error::Config(format!(
            "campaign was configured for {}, not {kind}",
            campaign.config.experiment
        )));
    }
    campaign.split().ok_or_else(|| Error::Config(format!("{kind} needs split-tree records")))
}

fn stat_at(name: &str, x: f64) -> String {
    format!("{name}@{x}")
}

/// `|value - target|` strictly decreasing along the series.
fn errors_decreasing(rows: &[&StatRow]) -> (bool, String) {
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.error()).collect();
    trend(&errors)
}

fn trend(values: &[f64]) -> (bool, String) {
    let ok = values.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.5}")).collect();
    (ok, format!("[{}]", shown.join(", ")))
}

fn within_gate(name: &str, row: Option<&StatRow>, tol: f64) -> Gate {
    match row.and_then(|r| r.error().map(|e| (r, e))) {
        Some((r, e)) => Gate {
            name: name.to_string(),
            passed: e <= tol,
            detail: format!(
                "mean {:.6} vs target {:.6} at {}: error {e:.6}, tolerance {tol}",
                r.value,
                r.target.unwrap_or(f64::NAN),
                r.n_or_h
            ),
        },
        None => Gate { name: name.to_string(), passed: false, detail: "statistic missing".into() },
    }
}

fn trend_gate(name: &str, (passed, detail): (bool, String)) -> Gate {
    Gate { name: name.to_string(), passed, detail }
}

fn p_gate(name: &str, row: Option<&StatRow>, min_p: f64) -> Gate {
    match row.and_then(|r| r.p_value.map(|p| (r, p))) {
        Some((r, p)) => Gate {
            name: name.to_string(),
            passed: p > min_p,
            detail: format!("statistic {:.5}, p = {p:.4} at {} (needs > {min_p})", r.value, r.n_or_h),
        },
        None => Gate { name: name.to_string(), passed: false, detail: "statistic missing".into() },
    }
}

fn exponential_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() }
}

/// `n / (C ln n)`, infinite when the cluster does not exist.
fn inverse_scaled(n: u64, cluster: Option<u64>) -> f64 {
    match cluster {
        Some(c) if c > 0 => n as f64 / (c as f64 * (n as f64).ln()),
        _ => f64::INFINITY,
    }
}

/// Root cluster and ranked clusters in balls or vertices.
fn pick(r: &SplitRecord, vertex_counts: bool) -> (u64, &[u64]) {
    if vertex_counts {
        (r.clusters.c0_hat, &r.clusters.top_vertices)
    } else {
        (r.clusters.c0, &r.clusters.top_balls)
    }
}

/// Theorems 1 and 2 share everything except the cluster measure.
fn giant_and_spacings(campaign: &Campaign, kind: ExperimentKind) -> Result<ExperimentReport> {
    let grids = split_grids(campaign, kind)?;
    let config = &campaign.config;
    let vertex_counts = kind == ExperimentKind::Theorem2;
    let mu = split_mu(config)?;
    let mut report = base_report(config);
    report.mu = Some(mu);

    let last = grids.last().expect("grid is non-empty");
    let (alpha, target_giant) = if vertex_counts {
        let a = Estimate::of_sample(last.records.iter().map(|r| r.vertices as f64 / last.value as f64));
        report.alpha = Some(a);
        (a, a.value * giant_fraction(config.c, mu.value))
    } else {
        (Estimate { value: 1.0, std_error: 0.0, sample_size: 0 }, giant_fraction(config.c, mu.value))
    };
    let rate = exponential_rate(config.c, mu.value, alpha.value)?;
    report.rate = Some(Estimate { value: rate, std_error: rate * alpha.std_error / alpha.value, sample_size: alpha.sample_size });

    let giant_stat = if vertex_counts { "c0_hat_fraction" } else { "c0_fraction" };
    let pick = |r| pick(r, vertex_counts);
    for g in grids {
        let n = g.value;
        let giant = Estimate::of_sample(g.records.iter().map(|r| pick(r).0 as f64 / n as f64));
        report.rows.push(StatRow::estimate(n, giant_stat, giant, Some(target_giant)));
        if vertex_counts {
            let per_ball = Estimate::of_sample(g.records.iter().map(|r| r.vertices as f64 / n as f64));
            report.rows.push(StatRow::estimate(n, "vertices_per_ball", per_ball, None));
        }

        let first: Vec<f64> = g.records.iter().map(|r| inverse_scaled(n, pick(r).1.first().copied())).collect();
        let ks = ks_test(&first, exponential_cdf(rate))?;
        report.rows.push(StatRow::test(n, "ks_top", ks.statistic, ks.p_value, ks.n));
        let inv_mean = Estimate::of_sample(first.iter().copied().filter(|x| x.is_finite()));
        report.rows.push(StatRow::estimate(n, "inverse_top_mean", inv_mean, Some(1.0 / rate)));

        if config.top_k >= 2 {
            let spacings: Vec<f64> = g
                .records
                .iter()
                .zip(&first)
                .map(|(r, &x1)| {
                    let x2 = inverse_scaled(n, pick(r).1.get(1).copied());
                    if x1.is_finite() { x2 - x1 } else { f64::INFINITY }
                })
                .collect();
            let ks = ks_test(&spacings, exponential_cdf(rate))?;
            report.rows.push(StatRow::test(n, "ks_spacing", ks.statistic, ks.p_value, ks.n));
        }
    }

    let giant_rows = report.series(giant_stat);
    let ks_rows = report.series("ks_top");
    let ks_values: Vec<f64> = ks_rows.iter().map(|r| r.value).collect();
    let gates = vec![
        within_gate("giant_within_tolerance", giant_rows.last().copied(), tolerances::GIANT_SPLIT),
        trend_gate("giant_error_decreasing", errors_decreasing(&giant_rows)),
        p_gate("ks_top_p", ks_rows.last().copied(), tolerances::KS_MIN_P),
        trend_gate("ks_top_distance_decreasing", trend(&ks_values)),
    ];
    report.gates = gates;
    Ok(report)
}

/// Giant fraction and exponential spacings of the ranked ball-count clusters.
pub fn run_theorem1(campaign: &Campaign) -> Result<ExperimentReport> {
    giant_and_spacings(campaign, ExperimentKind::Theorem1)
}

/// As [`run_theorem1`] on vertex counts, with `alpha` estimated from the
/// largest grid point.
pub fn run_theorem2(campaign: &Campaign) -> Result<ExperimentReport> {
    giant_and_spacings(campaign, ExperimentKind::Theorem2)
}

/// Regular-tree giant cluster, lattice top-atom law and `tau_1` survival.
pub fn run_theorem3(campaign: &Campaign) -> Result<ExperimentReport> {
    let config = &campaign.config;
    if config.experiment != ExperimentKind::Theorem3 {
        return Err(Error::Config(format!("campaign was configured for {}", config.experiment)));
    }
    let grids = campaign.regular().ok_or_else(|| Error::Config("theorem3 needs regular-tree records".into()))?;
    let TreeModel::Regular { d } = config.tree else {
        unreachable!("regular records imply a regular model");
    };
    let mut report = base_report(config);
    let target = regular_giant_fraction(config.c, d);
    let dd = d as f64;
    let scale = config.c * dd / (dd - 1.0) * (-config.c).exp();
    for g in grids {
        let h = g.value;
        let params = config.regular_at(h)?;
        let size = dd.powi(h as i32);
        let reps = g.records.len();
        let giant = Estimate::of_sample(g.records.iter().map(|r| r.clusters.g0 as f64 / size));
        report.rows.push(StatRow::estimate(h, "g0_fraction", giant, Some(target)));

        let phase = regular_phase::<f64>(d, h as u32);
        report.phases.push(Phase { n_or_h: h, value: phase });
        let law = LimitLaw::lattice_lambda(scale, d, phase)?;
        let scaled: Vec<f64> = g
            .records
            .iter()
            .map(|r| r.clusters.top.first().map_or(0.0, |&g1| h as f64 * g1 as f64 / size))
            .collect();
        for &x in &config.x_grid {
            let hit = Estimate::of_sample(scaled.iter().map(|&v| if v >= x { 1.0 } else { 0.0 }));
            let p = law.top_atom_exceedance(x)?;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            let mut row = StatRow::estimate(h, stat_at("top_exceedance", x), hit, Some(p));
            row.stderr = Some(se);
            report.rows.push(row);
        }

        for i in 1..=tolerances::TAU_LEVELS.min(h as u32) {
            let p = params.tau_survival_exact(i)?;
            let survive = Estimate::of_sample(
                g.records.iter().map(|r| if r.clusters.tau.first().is_none_or(|&t| t > i) { 1.0 } else { 0.0 }),
            );
            let mut row = StatRow::estimate(h, stat_at("tau_survival", i as f64), survive, Some(p));
            row.stderr = Some((p * (1.0 - p) / reps as f64).sqrt());
            report.rows.push(row);
        }
    }

    let giant_rows = report.series("g0_fraction");
    let mut gates = vec![within_gate("giant_within_tolerance", giant_rows.last().copied(), tolerances::GIANT_REGULAR)];
    let last_h = grids.last().expect("grid is non-empty").value;
    let tau_rows: Vec<&StatRow> =
        report.rows.iter().filter(|r| r.n_or_h == last_h && r.stat.starts_with("tau_survival@")).collect();
    let mut bad = Vec::new();
    for r in &tau_rows {
        let se = r.stderr.unwrap_or(0.0);
        if r.error().unwrap_or(f64::INFINITY) > tolerances::TAU_SIGMAS * se {
            bad.push(format!("{}: {:.5} vs {:.5} (se {se:.5})", r.stat, r.value, r.target.unwrap_or(f64::NAN)));
        }
    }
    gates.push(Gate {
        name: "tau_survival_within_se".into(),
        passed: bad.is_empty() && !tau_rows.is_empty(),
        detail: if bad.is_empty() {
            format!("{} levels within {} standard errors at h = {last_h}", tau_rows.len(), tolerances::TAU_SIGMAS)
        } else {
            bad.join("; ")
        },
    });
    report.gates = gates;
    Ok(report)
}

/// Lattice split trees: giant fraction and the lattice top-atom law.
pub fn run_theorem4(campaign: &Campaign) -> Result<ExperimentReport> {
    let grids = split_grids(campaign, ExperimentKind::Theorem4)?;
    let config = &campaign.config;
    let mu = split_mu(config)?;
    let span = config
        .split_params()
        .and_then(|p| p.vector().lattice_span())
        .ok_or_else(|| Error::Config("theorem4 needs a lattice split vector".into()))?;
    let mut report = base_report(config);
    report.mu = Some(mu);
    report.lattice_span = Some(span);
    let target = giant_fraction(config.c, mu.value);
    let scale = config.c / mu.value * target;
    for g in grids {
        let n = g.value;
        let reps = g.records.len();
        let giant = Estimate::of_sample(g.records.iter().map(|r| r.clusters.c0 as f64 / n as f64));
        report.rows.push(StatRow::estimate(n, "c0_fraction", giant, Some(target)));

        let phase = split_phase(n, span);
        report.phases.push(Phase { n_or_h: n, value: phase });
        let law = LimitLaw::lattice_xi(scale, span, phase)?;
        let ln_n = (n as f64).ln();
        let scaled: Vec<f64> = g
            .records
            .iter()
            .map(|r| r.clusters.top_balls.first().map_or(0.0, |&c1| ln_n * c1 as f64 / n as f64))
            .collect();
        for &x in &config.x_grid {
            let hit = Estimate::of_sample(scaled.iter().map(|&v| if v >= x { 1.0 } else { 0.0 }));
            let p = law.top_atom_exceedance(x)?;
            let mut row = StatRow::estimate(n, stat_at("top_exceedance", x), hit, Some(p));
            row.stderr = Some((p * (1.0 - p) / reps as f64).sqrt());
            report.rows.push(row);
        }
    }
    let giant_rows = report.series("c0_fraction");
    report.gates = vec![within_gate("giant_within_tolerance", giant_rows.last().copied(), tolerances::GIANT_LATTICE)];
    Ok(report)
}

/// `M_n(t) / ln n` against `t / mu`, or its lattice analogue.
pub fn run_prop_m(campaign: &Campaign) -> Result<ExperimentReport> {
    let grids = split_grids(campaign, ExperimentKind::PropM)?;
    let config = &campaign.config;
    let mu = split_mu(config)?;
    let span = config.split_params().and_then(|p| p.vector().lattice_span());
    let mut report = base_report(config);
    report.mu = Some(mu);
    report.lattice_span = span;
    for g in grids {
        let n = g.value;
        let ln_n = (n as f64).ln();
        let law = match span {
            Some(a) => {
                let phase = split_phase(n, a);
                report.phases.push(Phase { n_or_h: n, value: phase });
                Some(LimitLaw::lattice_xi(1.0, a, phase)?)
            }
            None => None,
        };
        for (j, &t) in config.t_grid.iter().enumerate() {
            let target = if t == 0.0 {
                0.0
            } else {
                match &law {
                    Some(law) => law.tail(1.0 / t)? / mu.value,
                    None => t / mu.value,
                }
            };
            let est = Estimate::of_sample(g.records.iter().map(|r| r.m_t[j] as f64 / ln_n));
            report.rows.push(StatRow::estimate(n, stat_at("m_over_ln_n", t), est, Some(target)));
        }
    }
    for &t in config.t_grid.iter().filter(|&&t| t > 0.0) {
        let stat = stat_at("m_over_ln_n", t);
        let rows = report.series(&stat);
        let last = rows.last().copied();
        let tol = last.and_then(|r| r.target).map_or(0.0, |target| tolerances::M_RELATIVE * target);
        let mut within = within_gate(&format!("m_within_15pct@{t}"), last, tol);
        within.detail.push_str(" (15% of target)");
        let decreasing = trend_gate(&format!("m_error_decreasing@{t}"), errors_decreasing(&rows));
        report.gates.extend([within, decreasing]);
    }
    Ok(report)
}

/// Increments of `N_n(t)` against independent Poisson counts.
pub fn run_process_n(campaign: &Campaign) -> Result<ExperimentReport> {
    let grids = split_grids(campaign, ExperimentKind::ProcessN)?;
    let config = &campaign.config;
    let mu = split_mu(config)?;
    let mut report = base_report(config);
    report.mu = Some(mu);
    let column = |t: f64| config.t_grid.iter().position(|&s| s == t);
    let labels: Vec<String> = config.intervals.iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
    let means: Vec<f64> = config.intervals.iter().map(|(lo, hi)| config.c / mu.value * (hi - lo)).collect();
    for g in grids {
        let n = g.value;
        let counts: Vec<Vec<u64>> = g
            .records
            .iter()
            .map(|r| {
                config
                    .intervals
                    .iter()
                    .map(|&(lo, hi)| {
                        let at = |t: f64| column(t).map_or(0, |j| r.n_t[j]);
                        at(hi) - at(lo)
                    })
                    .collect()
            })
            .collect();
        let test = poisson_increment_test(&counts, &means)?;
        for (j, label) in labels.iter().enumerate() {
            let mean = Estimate::of_sample(counts.iter().map(|row| row[j] as f64));
            report.rows.push(StatRow::estimate(n, format!("increment_mean@{label}"), mean, Some(means[j])));
            let chi = &test.columns[j];
            report.rows.push(StatRow::test(n, format!("increment_chi2@{label}"), chi.statistic, chi.p_value, counts.len()));
            for k in j + 1..labels.len() {
                report.rows.push(StatRow {
                    n_or_h: n,
                    stat: format!("increment_cov@{label}|{}", labels[k]),
                    value: test.covariance[j][k],
                    stderr: None,
                    target: Some(0.0),
                    p_value: None,
                    sample_size: counts.len(),
                });
            }
        }
    }
    let last_n = grids.last().expect("grid is non-empty").value;
    for label in &labels {
        let stat = format!("increment_chi2@{label}");
        report.gates.push(p_gate(&format!("poisson_p@{label}"), report.row(last_n, &stat), tolerances::POISSON_MIN_P));
    }
    Ok(report)
}

/// Summarises a campaign according to its configured experiment.
pub fn summarize(campaign: &Campaign) -> Result<ExperimentReport> {
    match campaign.config.experiment {
        ExperimentKind::Theorem1 => run_theorem1(campaign),
        ExperimentKind::Theorem2 => run_theorem2(campaign),
        ExperimentKind::Theorem3 => run_theorem3(campaign),
        ExperimentKind::Theorem4 => run_theorem4(campaign),
        ExperimentKind::PropM => run_prop_m(campaign),
        ExperimentKind::ProcessN => run_process_n(campaign),
    }
}

/// Simulates and summarises.
pub fn run(config: &ExperimentConfig) -> Result<(Campaign, ExperimentReport)> {
    let campaign = simulate(config)?;
    let report = summarize(&campaign)?;
    Ok((campaign, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split_tree::{Insertion, SplitTreeParams};
    use crate::split_vector::SplitVectorSpec;

    fn bst_config(kind: ExperimentKind, grid: Vec<u64>, reps: u32) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            tree: TreeModel::Split { params: SplitTreeParams::bst(2).unwrap(), insertion: Insertion::Recursive },
            c: 0.5,
            grid,
            replications: reps,
            t_grid: vec![0.0, 0.5, 1.0, 2.0],
            x_grid: vec![0.5, 1.0, 2.0],
            intervals: vec![(0.0, 1.0), (1.0, 2.0)],
            keep: None,
            master_seed: 11,
            top_k: 10,
            output: None,
        }
    }

    #[test]
    fn full_keep_gives_whole_tree() {
        let mut cfg = bst_config(ExperimentKind::Theorem1, vec![500, 1000], 5);
        cfg.keep = Some(1.0);
        let campaign = simulate(&cfg).unwrap();
        for g in campaign.split().unwrap() {
            for r in &g.records {
                assert_eq!(r.clusters.c0, g.value);
                assert!(r.clusters.top_balls.is_empty());
                assert!(r.n_t.iter().all(|&x| x == 0));
            }
        }
        let mut reg = regular_config(vec![4, 6], 3);
        reg.keep = Some(1.0);
        let campaign = simulate(&reg).unwrap();
        for g in campaign.regular().unwrap() {
            assert!(g.records.iter().all(|r| r.clusters.g0 == (2u64 << g.value) - 1));
        }
    }

    fn regular_config(grid: Vec<u64>, reps: u32) -> ExperimentConfig {
        ExperimentConfig {
            experiment: ExperimentKind::Theorem3,
            tree: TreeModel::Regular { d: 2 },
            c: 1.0,
            grid,
            master_seed: 3,
            ..bst_config(ExperimentKind::Theorem1, vec![10], reps)
        }
    }

    #[test]
    fn records_are_reproducible_and_seed_dependent() {
        let cfg = bst_config(ExperimentKind::Theorem1, vec![300], 6);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = simulate(&cfg.with_seed(12)).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
        assert_eq!(summarize(&a).unwrap().to_json(), summarize(&b).unwrap().to_json());
    }

    #[test]
    fn truncation_keeps_leading_replications() {
        let cfg = bst_config(ExperimentKind::Theorem1, vec![200], 8);
        let full = simulate(&cfg).unwrap();
        let short = simulate(&ExperimentConfig { replications: 3, ..cfg }).unwrap();
        assert_eq!(full.truncated(3), short);
    }

    #[test]
    fn theorem2_on_bst_matches_theorem1() {
        let cfg = bst_config(ExperimentKind::Theorem1, vec![300, 3000], 30);
        let campaign = simulate(&cfg).unwrap();
        let one = run_theorem1(&campaign).unwrap();
        let two = run_theorem2(&campaign.as_experiment(ExperimentKind::Theorem2).unwrap()).unwrap();
        assert_eq!(two.alpha.unwrap().value, 1.0);
        assert_eq!(two.alpha.unwrap().std_error, 0.0);
        for stat in ["ks_top", "ks_spacing"] {
            assert_eq!(one.series(stat), two.series(stat));
        }
        let a: Vec<f64> = one.series("c0_fraction").iter().map(|r| r.value).collect();
        let b: Vec<f64> = two.series("c0_hat_fraction").iter().map(|r| r.value).collect();
        assert_eq!(a, b);
        let passes = |r: &ExperimentReport| r.gates.iter().map(|g| g.passed).collect::<Vec<_>>();
        assert_eq!(passes(&one), passes(&two));
    }

    #[test]
    fn report_targets() {
        let cfg = bst_config(ExperimentKind::PropM, vec![1000], 4);
        let report = run(&cfg).unwrap().1;
        assert_eq!(report.row(1000, "m_over_ln_n@0").unwrap().value, 0.0);
        assert_eq!(report.row(1000, "m_over_ln_n@1").unwrap().target, Some(2.0));
        assert_eq!(report.row(1000, "m_over_ln_n@2").unwrap().target, Some(4.0));

        let process = run(&ExperimentConfig { experiment: ExperimentKind::ProcessN, ..cfg.clone() }).unwrap().1;
        assert_eq!(process.row(1000, "increment_mean@0:1").unwrap().target, Some(1.0));
        assert!(process.gate("poisson_p@1:2").is_some());

        let t1 = run(&ExperimentConfig { experiment: ExperimentKind::Theorem1, ..cfg }).unwrap().1;
        let target = t1.row(1000, "c0_fraction").unwrap().target.unwrap();
        assert!((target - (-1f64).exp()).abs() < 1e-15);
        assert!((t1.rate.unwrap().value - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn lattice_reports_record_phases() {
        let dyadic = SplitVectorSpec::fixed_multiset(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
        let params = SplitTreeParams::new(4, 1, 1, 0, dyadic, 2).unwrap();
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::Theorem4,
            tree: TreeModel::Split { params, insertion: Insertion::Recursive },
            c: 0.6,
            ..bst_config(ExperimentKind::Theorem4, vec![1000, 1_000_000], 2)
        };
        let report = run(&cfg).unwrap().1;
        assert!((report.lattice_span.unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((report.phases[1].value - 0.788_2).abs() < 1e-4);
        let target = report.row(1000, "c0_fraction").unwrap().target.unwrap();
        assert!((target - 0.609_791_4).abs() < 1e-6);
        let m = run(&ExperimentConfig { experiment: ExperimentKind::PropM, ..cfg }).unwrap().1;
        assert_eq!(m.phases.len(), 2);
        let row = m.row(1000, "m_over_ln_n@1").unwrap();
        let law = LimitLaw::lattice_xi(1.0, 2f64.ln(), m.phases[0].value).unwrap();
        assert_eq!(row.target, Some(law.tail(1.0).unwrap() / m.mu.unwrap().value));
    }

    #[test]
    fn theorem3_rows() {
        let report = run(&regular_config(vec![8, 10], 50)).unwrap().1;
        let target = report.row(10, "g0_fraction").unwrap().target.unwrap();
        assert!((target - 2.0 * (-1f64).exp()).abs() < 1e-15);
        let tau = report.row(10, "tau_survival@1").unwrap();
        assert!((tau.target.unwrap() - 0.81).abs() < 1e-12);
        assert!(report.row(10, "tau_survival@5").is_some());
        assert!(report.row(8, "top_exceedance@1").is_some());
        assert_eq!(report.phases[0].value, 0.0);
    }

    #[test]
    fn mismatched_campaigns_are_rejected() {
        let campaign = simulate(&bst_config(ExperimentKind::Theorem1, vec![100], 2)).unwrap();
        assert!(run_theorem3(&campaign).is_err());
        assert!(run_prop_m(&campaign).is_err());
        assert!(campaign.as_experiment(ExperimentKind::Theorem4).is_err());
    }
}
