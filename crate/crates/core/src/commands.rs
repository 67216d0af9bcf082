//! Subcommand implementations. Each writes its artifacts under an output
//! directory together with a `manifest.json`; every other artifact is a pure
//! function of the inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::epidemic::{risk_report, EpidemicTrace};
use crate::error::{Error, Result};
use crate::featuregen::{group_counts, hill_number, spec_counts};
use crate::netgen::NetworkSnapshot;
use crate::netmetrics::{js_divergence, patterns, summarize_patterns, Patterns, SummaryStats};
use crate::optimizer::{optimize, Candidate, OptimizerConfig, ReplicateSet};
use crate::pipeline::{generate_paradigm, simulate_epidemic, Paradigm, TargetSpec};
use crate::scenario::{AgeShape, Rule, Scenario};

pub const MANIFEST: &str = "manifest.json";
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CNSIM_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub stages: Vec<StageTime>,
    pub total_seconds: f64,
}

/// Tracks files and stage timings for one command run.
struct Run {
    root: PathBuf,
    started: Instant,
    outputs: Vec<String>,
    stages: Vec<StageTime>,
}

impl Run {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            started: Instant::now(),
            outputs: Vec::new(),
            stages: Vec::new(),
        })
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self)?;
        self.stages.push(StageTime {
            stage: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_file(&self.root.join(rel), bytes)?;
        self.outputs.push(rel.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write(rel, &json_bytes(value)?)
    }

    fn finish(mut self, command: &str, scenario: &Scenario) -> Result<RunManifest> {
        self.outputs.push(MANIFEST.to_string());
        let manifest = RunManifest {
            command: command.to_string(),
            scenario_hash: scenario.hash(),
            master_seed: scenario.master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs,
            stages: self.stages,
            total_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_file(&self.root.join(MANIFEST), &json_bytes(&manifest)?)?;
        for rel in &manifest.outputs {
            let len = fs::metadata(self.root.join(rel)).map(|m| m.len()).unwrap_or(0);
            if len == 0 {
                return Err(Error::Invariant(format!("output {rel} is missing or empty")));
            }
        }
        Ok(manifest)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Invariant(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::Invariant(format!("csv encoding: {e}")))?;
    Ok(buf)
}

/// Resolves a scenario from a file or a named preset, then applies
/// `key=value` overrides and validates.
pub fn resolve_scenario(path: Option<&Path>, preset: Option<&str>, seed: Option<u64>, overrides: &[String]) -> Result<Scenario> {
    let mut overrides = overrides.to_vec();
    if let Some(seed) = seed {
        overrides.push(format!("master_seed={seed}"));
    }
    match (path, preset) {
        (Some(path), None) => crate::scenario::load_scenario_with(path, &overrides),
        (None, Some(name)) => {
            let base = Scenario::preset(name, 0)?;
            Scenario::from_toml_with_overrides(&base.to_canonical_string(), name, &overrides)
        }
        (None, None) => Scenario::from_toml_with_overrides("", "<defaults>", &overrides),
        (Some(_), Some(_)) => Err(Error::invalid("scenario", "give either a scenario file or a preset, not both")),
    }
}

#[derive(Serialize)]
struct GroupCountsFile {
    shape: AgeShape,
    groups: Vec<GroupEntry>,
    hill: Vec<HillEntry>,
}

#[derive(Serialize)]
struct GroupEntry {
    group: usize,
    label: String,
    count: usize,
}

#[derive(Serialize)]
struct HillEntry {
    q: f64,
    value: f64,
}

fn group_counts_file(shape: AgeShape, node_count: usize) -> Result<GroupCountsFile> {
    let spec = group_counts(shape, node_count);
    let counts = spec_counts(&spec);
    let hill = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
        .into_iter()
        .map(|q| Ok(HillEntry { q, value: hill_number(&counts, q)? }))
        .collect::<Result<_>>()?;
    Ok(GroupCountsFile {
        shape,
        groups: spec
            .iter()
            .map(|g| GroupEntry {
                group: g.group,
                label: g.label(),
                count: g.count,
            })
            .collect(),
        hill,
    })
}

/// Files produced for one generated network. Paths are relative to `prefix`.
fn write_generation(run: &mut Run, prefix: &str, scenario: &Scenario, paradigm: &Paradigm, pats: &Patterns) -> Result<SummaryStats> {
    let net = &paradigm.network;
    run.write(&format!("{prefix}scenario.toml"), scenario.to_canonical_string().as_bytes())?;
    run.write(&format!("{prefix}population.csv"), &csv_bytes(|b| paradigm.population.write_csv(b))?)?;
    run.write_json(
        &format!("{prefix}group_counts.json"),
        &group_counts_file(scenario.age_shape, scenario.node_count)?,
    )?;
    run.write(&format!("{prefix}network.csv"), &csv_bytes(|b| net.write_edge_csv(b))?)?;
    run.write_json(&format!("{prefix}network.json"), &net.header(scenario.edge_budget))?;
    let summary = summarize_patterns(net, pats);
    run.write_json(&format!("{prefix}summary.json"), &summary)?;
    run.write(&format!("{prefix}degree.csv"), &csv_bytes(|b| pats.degree.write_csv(b))?)?;
    run.write(
        &format!("{prefix}clustering.csv"),
        &csv_bytes(|b| pats.clustering.distribution.write_csv(b))?,
    )?;
    run.write(&format!("{prefix}paths.csv"), &csv_bytes(|b| pats.paths.distribution.write_csv(b))?)?;
    Ok(summary)
}

fn write_epidemic(run: &mut Run, prefix: &str, paradigm: &Paradigm, trace: &EpidemicTrace) -> Result<()> {
    let report = risk_report(&paradigm.network, &paradigm.population, trace)?;
    run.write(&format!("{prefix}trace.csv"), &csv_bytes(|b| trace.write_csv(b))?)?;
    run.write(
        &format!("{prefix}infection_by_distance.csv"),
        &csv_bytes(|b| report.infection_by_distance.write_csv(b))?,
    )?;
    run.write_json(&format!("{prefix}risk.json"), &report)?;
    Ok(())
}

pub fn cmd_generate(scenario: &Scenario, out: &Path) -> Result<RunManifest> {
    let mut run = Run::new(out)?;
    let paradigm = run.stage("generate", |_| generate_paradigm(scenario))?;
    let pats = run.stage("metrics", |_| Ok(patterns(&paradigm.network)))?;
    run.stage("write", |run| write_generation(run, "", scenario, &paradigm, &pats))?;
    run.finish("generate", scenario)
}

/// Runs the epidemic on the scenario's network, or on `network` (an edge
/// list from a prior run) when given. The population is always regenerated
/// from the scenario.
pub fn cmd_epidemic(scenario: &Scenario, network: Option<&Path>, out: &Path) -> Result<RunManifest> {
    let mut run = Run::new(out)?;
    let mut paradigm = run.stage("generate", |_| generate_paradigm(scenario))?;
    if let Some(path) = network {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        paradigm.network = NetworkSnapshot::read_edge_csv(scenario.node_count, text.as_slice())?;
    }
    let trace = run.stage("epidemic", |_| simulate_epidemic(&paradigm, scenario, &scenario.rng_policy()))?;
    run.stage("write", |run| write_epidemic(run, "", &paradigm, &trace))?;
    run.finish("epidemic", scenario)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxes {
    pub shapes: Vec<AgeShape>,
    pub rules: Vec<Rule>,
    pub transmissibilities: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            shapes: AgeShape::ALL.to_vec(),
            rules: Rule::ALL.to_vec(),
            transmissibilities: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

/// Scenario for one sweep cell. The base sDNA override is kept only for
/// `PH`; pure rules always use their presets.
pub fn cell_scenario(base: &Scenario, shape: AgeShape, rule: Rule, tau: f64) -> Scenario {
    let mut s = base.clone();
    s.age_shape = shape;
    s.rule = rule;
    s.transmissibility = tau;
    if rule != Rule::PH {
        s.sdna = None;
    }
    s
}

pub fn cell_dir(shape: AgeShape, rule: Rule, tau: f64) -> String {
    format!("{}_{}_t{}", shape.code(), rule.slug(), tau)
}

struct ParadigmResult {
    shape: AgeShape,
    rule: Rule,
    paradigm: Paradigm,
    patterns: Patterns,
    traces: Vec<(f64, EpidemicTrace)>,
}

pub fn cmd_sweep(base: &Scenario, axes: &SweepAxes, target: &TargetSpec, jobs: usize, out: &Path) -> Result<RunManifest> {
    if axes.shapes.is_empty() || axes.rules.is_empty() || axes.transmissibilities.is_empty() {
        return Err(Error::invalid("axes", "every sweep axis needs at least one value"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Invariant(e.to_string()))?;
    let mut run = Run::new(out)?;
    let policy = base.rng_policy();
    let target_net = run.stage("target", |_| target.build(&policy))?;
    let target_patterns = patterns(&target_net);

    let cells: Vec<(AgeShape, Rule)> = axes
        .shapes
        .iter()
        .flat_map(|&s| axes.rules.iter().map(move |&r| (s, r)))
        .collect();
    let results: Vec<ParadigmResult> = run.stage("simulate", |_| {
        pool.install(|| {
            cells
                .par_iter()
                .map(|&(shape, rule)| {
                    let scenario = cell_scenario(base, shape, rule, base.transmissibility);
                    let paradigm = generate_paradigm(&scenario)?;
                    let pats = patterns(&paradigm.network);
                    let traces = axes
                        .transmissibilities
                        .iter()
                        .map(|&tau| {
                            let cell = cell_scenario(base, shape, rule, tau);
                            cell.validate()?;
                            Ok((tau, simulate_epidemic(&paradigm, &cell, &cell.rng_policy())?))
                        })
                        .collect::<Result<_>>()?;
                    Ok(ParadigmResult {
                        shape,
                        rule,
                        paradigm,
                        patterns: pats,
                        traces,
                    })
                })
                .collect::<Result<_>>()
        })
    })?;

    run.stage("write", |run| {
        let summary = summarize_patterns(&target_net, &target_patterns);
        run.write_json("target/summary.json", &summary)?;
        run.write("target/network.csv", &csv_bytes(|b| target_net.write_edge_csv(b))?)?;
        run.write("target/degree.csv", &csv_bytes(|b| target_patterns.degree.write_csv(b))?)?;

        let mut topology = csv::Writer::from_writer(Vec::new());
        let mut js_long = csv::Writer::from_writer(Vec::new());
        let mut par_table = csv::Writer::from_writer(Vec::new());
        let mut group_table = csv::Writer::from_writer(Vec::new());
        let mut seeds = csv::Writer::from_writer(Vec::new());
        let enc = |e: csv::Error| Error::Invariant(format!("csv encoding: {e}"));
        topology
            .write_record([
                "shape", "rule", "connected", "unconnected", "degree_mean", "degree_std", "degree_max", "degree_min",
                "clustering_mean", "clustering_std", "clustering_max", "clustering_min", "fake_paths", "path_mean",
                "path_std", "path_max", "path_min",
            ])
            .map_err(enc)?;
        js_long
            .write_record(["shape", "rule", "degree", "clustering", "shortest_path"])
            .map_err(enc)?;
        par_table
            .write_record(["shape", "rule", "tau", "par_1_1", "par_2_2", "final_infected", "reachable_within_cap"])
            .map_err(enc)?;
        group_table
            .write_record(["shape", "rule", "tau", "t", "d", "group", "par"])
            .map_err(enc)?;
        seeds
            .write_record(["shape", "rule", "seed", "seed_degree", "max_degree"])
            .map_err(enc)?;

        let mut js_degree = vec![vec![0.0; axes.rules.len()]; axes.shapes.len()];
        for (idx, res) in results.iter().enumerate() {
            let (si, ri) = (idx / axes.rules.len(), idx % axes.rules.len());
            let (shape, rule) = (res.shape.name().to_string(), res.rule.name().to_string());
            let s = summarize_patterns(&res.paradigm.network, &res.patterns);
            let mut row = vec![shape.clone(), rule.clone(), s.connected.to_string(), s.unconnected.to_string()];
            for st in [s.degree, s.clustering] {
                row.extend([st.mean, st.std, st.max, st.min].map(|v| v.to_string()));
            }
            row.push(s.fake_paths.to_string());
            row.extend([s.path_length.mean, s.path_length.std, s.path_length.max, s.path_length.min].map(|v| v.to_string()));
            topology.write_record(&row).map_err(enc)?;

            let jd = js_divergence(&res.patterns.degree, &target_patterns.degree);
            js_degree[si][ri] = jd;
            let jc = js_divergence(&res.patterns.clustering.distribution, &target_patterns.clustering.distribution);
            let jp = js_divergence(&res.patterns.paths.distribution, &target_patterns.paths.distribution);
            js_long
                .write_record([shape.clone(), rule.clone(), jd.to_string(), jc.to_string(), jp.to_string()])
                .map_err(enc)?;

            let max_degree = res.paradigm.network.degrees().into_iter().max().unwrap_or(0);
            if let Some((_, trace)) = res.traces.first() {
                for &seed in &trace.seeds {
                    seeds
                        .write_record([
                            shape.clone(),
                            rule.clone(),
                            seed.to_string(),
                            res.paradigm.network.degree(seed).to_string(),
                            max_degree.to_string(),
                        ])
                        .map_err(enc)?;
                }
            }

            for (tau, trace) in &res.traces {
                let cell = cell_scenario(base, res.shape, res.rule, *tau);
                let prefix = format!("cells/{}/", cell_dir(res.shape, res.rule, *tau));
                let mut paradigm = res.paradigm.clone();
                paradigm.network.provenance.scenario_hash = cell.hash();
                write_generation(run, &prefix, &cell, &paradigm, &res.patterns)?;
                write_epidemic(run, &prefix, &paradigm, trace)?;
                let window = |t: usize, d: usize| -> Result<String> {
                    if t <= trace.horizon && d <= trace.distance_cap {
                        Ok(crate::epidemic::par(trace, t, d)?.to_string())
                    } else {
                        Ok(String::new())
                    }
                };
                par_table
                    .write_record([
                        shape.clone(),
                        rule.clone(),
                        tau.to_string(),
                        window(1, 1)?,
                        window(2, 2)?,
                        trace.final_infected().to_string(),
                        trace.reachable_within_cap().to_string(),
                    ])
                    .map_err(enc)?;
                for (t, d) in [(1, 1), (2, 2)] {
                    if t > trace.horizon || d > trace.distance_cap {
                        continue;
                    }
                    let groups = crate::epidemic::par_by_group(trace, &res.paradigm.population, t, d)?;
                    for (g, v) in groups.iter().enumerate() {
                        group_table
                            .write_record([
                                shape.clone(),
                                rule.clone(),
                                tau.to_string(),
                                t.to_string(),
                                d.to_string(),
                                g.to_string(),
                                v.map(|x| x.to_string()).unwrap_or_default(),
                            ])
                            .map_err(enc)?;
                    }
                }
            }
        }

        let mut wide = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["shape".to_string()];
        header.extend(axes.rules.iter().map(|r| r.name().to_string()));
        wide.write_record(&header).map_err(enc)?;
        for (si, shape) in axes.shapes.iter().enumerate() {
            let mut row = vec![shape.name().to_string()];
            row.extend(js_degree[si].iter().map(|v| v.to_string()));
            wide.write_record(&row).map_err(enc)?;
        }

        let finish = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| Error::Invariant(e.to_string()));
        run.write("js_degree.csv", &finish(wide)?)?;
        run.write("js_patterns.csv", &finish(js_long)?)?;
        run.write("topology.csv", &finish(topology)?)?;
        run.write("par.csv", &finish(par_table)?)?;
        run.write("par_by_group.csv", &finish(group_table)?)?;
        run.write("seeds.csv", &finish(seeds)?)?;
        Ok(())
    })?;
    run.finish("sweep", base)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleComparison {
    pub rule: String,
    pub objective: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestCandidateFile {
    pub sdna: crate::scenario::Preferences,
    pub objective: f64,
    pub variance: f64,
    pub replicates: usize,
    pub evaluations: usize,
    pub grid_size: usize,
    pub target: String,
    /// Pure rules scored on the same replicates.
    pub pure_rules: Vec<RuleComparison>,
}

pub fn cmd_optimize(scenario: &Scenario, target: &TargetSpec, config: &OptimizerConfig, out: &Path) -> Result<RunManifest> {
    let mut run = Run::new(out)?;
    let target_net = run.stage("target", |_| target.build(&scenario.rng_policy()))?;
    let target_degree = crate::netmetrics::degree_distribution(&target_net);
    let result = run.stage("optimize", |_| optimize(scenario, &target_degree, config))?;
    let pure = run.stage("compare", |_| {
        let set = ReplicateSet::new(scenario, config.replicates)?;
        [Rule::Pplus, Rule::Pminus, Rule::Hplus, Rule::Hminus]
            .into_iter()
            .map(|rule| {
                let divs = set.divergences(rule.preset(scenario.age_shape), &target_degree)?;
                let n = divs.len() as f64;
                let mean = divs.iter().sum::<f64>() / n;
                let variance = if divs.len() > 1 {
                    divs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                Ok(RuleComparison {
                    rule: rule.name().to_string(),
                    objective: mean,
                    variance,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    run.stage("write", |run| {
        let best: Candidate = result.best;
        run.write("optimizer_log.csv", &csv_bytes(|b| result.write_log_csv(b))?)?;
        run.write_json(
            "best_candidate.json",
            &BestCandidateFile {
                sdna: best.preferences(),
                objective: best.objective,
                variance: best.variance,
                replicates: best.replicates,
                evaluations: result.evaluated.len(),
                grid_size: result.grid_size,
                target: target.to_string(),
                pure_rules: pure.clone(),
            },
        )?;
        let mut fitted = scenario.clone();
        fitted.rule = Rule::PH;
        fitted.sdna = Some(best.preferences());
        run.write("fitted_scenario.toml", fitted.to_canonical_string().as_bytes())
    })?;
    run.finish("optimize", scenario)
}

#[derive(Serialize)]
struct ReportFile {
    summary: SummaryStats,
    target: String,
    js_degree: f64,
    js_clustering: f64,
    js_shortest_path: f64,
}

/// Metrics of an existing edge list, compared against a target.
pub fn cmd_report(network: &Path, node_count: Option<usize>, scenario: &Scenario, target: &TargetSpec, out: &Path) -> Result<RunManifest> {
    let mut run = Run::new(out)?;
    let net = run.stage("load", |_| {
        TargetSpec::EdgeList {
            path: network.to_path_buf(),
            node_count,
        }
        .build(&scenario.rng_policy())
    })?;
    let target_net = run.stage("target", |_| target.build(&scenario.rng_policy()))?;
    let (pats, tpats) = run.stage("metrics", |_| Ok((patterns(&net), patterns(&target_net))))?;
    run.stage("write", |run| {
        run.write("degree.csv", &csv_bytes(|b| pats.degree.write_csv(b))?)?;
        run.write("clustering.csv", &csv_bytes(|b| pats.clustering.distribution.write_csv(b))?)?;
        run.write("paths.csv", &csv_bytes(|b| pats.paths.distribution.write_csv(b))?)?;
        run.write_json(
            "report.json",
            &ReportFile {
                summary: summarize_patterns(&net, &pats),
                target: target.to_string(),
                js_degree: js_divergence(&pats.degree, &tpats.degree),
                js_clustering: js_divergence(&pats.clustering.distribution, &tpats.clustering.distribution),
                js_shortest_path: js_divergence(&pats.paths.distribution, &tpats.paths.distribution),
            },
        )
    })?;
    run.finish("report", scenario)
}
