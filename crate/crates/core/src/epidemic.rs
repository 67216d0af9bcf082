//! Susceptible–infected spreading with feature-scored seeding.
//!
//! Updates are synchronous: a susceptible node's risk at step `t` depends on
//! neighbours infected at `t - 1`, so contagion advances at most one edge per
//! step. Each node's draw at step `t` is keyed by `(t, node)`.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::featuregen::{Population, GROUP_COUNT};
use crate::netgen::NetworkSnapshot;
use crate::netmetrics::bfs_distances;
use crate::rng::{pair_key, Stream};
use crate::scenario::{Scenario, Sign};

/// Seeding rule over the extended feature vector: node features followed by
/// degree.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRule {
    pub preference: Vec<Sign>,
    pub weights: Vec<f64>,
    pub count: usize,
}

impl SeedRule {
    /// Prefers the highest-degree nodes of a single-feature population.
    pub fn max_degree(count: usize) -> Self {
        Self {
            preference: vec![Sign::Neutral, Sign::Positive],
            weights: vec![1.0, 1.0],
            count,
        }
    }
}

pub fn extended_features(net: &NetworkSnapshot, population: &Population, v: usize) -> Vec<f64> {
    let mut f = population.features[v].clone();
    f.push(net.degree(v) as f64);
    f
}

/// Top `count` nodes by seed score, ties to the lower id.
pub fn select_seeds(net: &NetworkSnapshot, population: &Population, rule: &SeedRule) -> Result<Vec<usize>> {
    let n = net.node_count();
    if rule.count > n {
        return Err(Error::invalid("seed_count", format!("{} seeds requested from {n} nodes", rule.count)));
    }
    if rule.preference.len() != rule.weights.len() {
        return Err(Error::LengthMismatch {
            left: rule.preference.len(),
            right: rule.weights.len(),
        });
    }
    if let Some(w) = rule.weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
        return Err(Error::invalid("seed weight", format!("{w} is outside (0, 1]")));
    }
    let mut scored = Vec::with_capacity(n);
    for v in 0..n {
        let f = extended_features(net, population, v);
        if f.len() != rule.preference.len() {
            return Err(Error::LengthMismatch {
                left: f.len(),
                right: rule.preference.len(),
            });
        }
        let score: f64 = f
            .iter()
            .zip(rule.preference.iter().zip(&rule.weights))
            .map(|(x, (s, w))| x * s.value() * w)
            .sum();
        scored.push((score, v));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(rule.count).map(|(_, v)| v).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    /// Number of infected neighbours at the previous step.
    Exposure,
    /// Age in years.
    Age,
    Degree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtLeast,
    Below,
    Equals,
}

/// One pDNA entry: when the condition meets its threshold, the multiplier
/// scales the per-exposure transmission probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Condition {
    pub kind: ConditionKind,
    pub comparison: Comparison,
    pub threshold: f64,
    pub multiplier: f64,
}

impl Condition {
    pub fn met(&self, ctx: &NodeContext) -> bool {
        let value = match self.kind {
            ConditionKind::Exposure => ctx.exposures as f64,
            ConditionKind::Age => ctx.age,
            ConditionKind::Degree => ctx.degree as f64,
        };
        match self.comparison {
            Comparison::AtLeast => value >= self.threshold,
            Comparison::Below => value < self.threshold,
            Comparison::Equals => value == self.threshold,
        }
    }
}

/// What a node's conditions are evaluated against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeContext {
    pub age: f64,
    pub degree: usize,
    pub exposures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PDna {
    conditions: Vec<Condition>,
}

impl PDna {
    /// Multipliers may be 0, which makes a node fully resilient when the
    /// condition holds.
    pub fn new(conditions: Vec<Condition>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::invalid("pdna", "needs at least one condition"));
        }
        if let Some(c) = conditions.iter().find(|c| !(c.multiplier >= 0.0 && c.multiplier <= 1.0)) {
            return Err(Error::invalid("pdna", format!("multiplier {} outside [0, 1]", c.multiplier)));
        }
        Ok(Self { conditions })
    }

    /// Fixed transmissibility per exposure.
    pub fn exposure(transmissibility: f64) -> Result<Self> {
        Self::new(vec![Condition {
            kind: ConditionKind::Exposure,
            comparison: Comparison::AtLeast,
            threshold: 1.0,
            multiplier: transmissibility,
        }])
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    /// Product of the multipliers of every met condition.
    pub fn per_exposure(&self, ctx: &NodeContext) -> f64 {
        self.conditions
            .iter()
            .filter(|c| c.met(ctx))
            .map(|c| c.multiplier)
            .product()
    }
}

/// Probability that a susceptible node becomes infected this step, with
/// independent exposures compounding.
pub fn transition_probability(ctx: &NodeContext, pdna: &PDna) -> f64 {
    if ctx.exposures == 0 {
        return 0.0;
    }
    let per = pdna.per_exposure(ctx);
    let exposures = i32::try_from(ctx.exposures).unwrap_or(i32::MAX);
    1.0 - (1.0 - per).powi(exposures)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpidemicConfig {
    pub horizon: usize,
    pub distance_cap: usize,
    pub pdna: PDna,
}

impl EpidemicConfig {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        Ok(Self {
            horizon: scenario.horizon,
            distance_cap: scenario.distance_cap,
            pdna: PDna::exposure(scenario.transmissibility)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpidemicTrace {
    pub seeds: Vec<usize>,
    /// `status[t][v]` for `t = 0..=horizon`; step 0 holds only the seeds.
    pub status: Vec<Vec<bool>>,
    /// Hop distance to the nearest seed; `None` when unreachable.
    pub distance: Vec<Option<usize>>,
    pub horizon: usize,
    pub distance_cap: usize,
}

impl EpidemicTrace {
    pub fn node_count(&self) -> usize {
        self.distance.len()
    }

    pub fn infected_at(&self, t: usize) -> &[bool] {
        &self.status[t.min(self.horizon)]
    }

    pub fn final_infected(&self) -> usize {
        self.status[self.horizon].iter().filter(|&&x| x).count()
    }

    /// Nodes reachable within the distance cap, seeds included.
    pub fn reachable_within_cap(&self) -> usize {
        self.distance
            .iter()
            .filter(|d| d.is_some_and(|d| d <= self.distance_cap))
            .count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "node", "infected", "distance"])?;
        for (t, row) in self.status.iter().enumerate() {
            for (v, &inf) in row.iter().enumerate() {
                let d = self.distance[v].map(|d| d.to_string()).unwrap_or_default();
                out.write_record([t.to_string(), v.to_string(), u8::from(inf).to_string(), d])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_si(
    net: &NetworkSnapshot,
    population: &Population,
    seeds: &[usize],
    config: &EpidemicConfig,
    stream: &Stream,
) -> Result<EpidemicTrace> {
    let n = net.node_count();
    if population.len() != n {
        return Err(Error::invalid(
            "population",
            format!("{} nodes but the network has {n}", population.len()),
        ));
    }
    if let Some(&s) = seeds.iter().find(|&&s| s >= n) {
        return Err(Error::invalid("seeds", format!("node {s} out of range")));
    }
    let distance = bfs_distances(net, seeds);
    let in_range: Vec<bool> = distance
        .iter()
        .map(|d| d.is_some_and(|d| d <= config.distance_cap))
        .collect();

    let mut current = vec![false; n];
    for &s in seeds {
        current[s] = true;
    }
    let mut status = Vec::with_capacity(config.horizon + 1);
    status.push(current.clone());
    for t in 1..=config.horizon {
        let previous = status[t - 1].clone();
        for v in 0..n {
            if previous[v] || !in_range[v] {
                continue;
            }
            let exposures = net.neighbors(v).iter().filter(|&&u| previous[u]).count();
            if exposures == 0 {
                continue;
            }
            let ctx = NodeContext {
                age: population.ages[v] as f64,
                degree: net.degree(v),
                exposures,
            };
            let p = transition_probability(&ctx, &config.pdna);
            if stream.keyed(pair_key(t, v)).random::<f64>() < p {
                current[v] = true;
            }
        }
        status.push(current.clone());
    }
    Ok(EpidemicTrace {
        seeds: seeds.to_vec(),
        status,
        distance,
        horizon: config.horizon,
        distance_cap: config.distance_cap,
    })
}

/// Infected counts by seed distance for every step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceTable {
    /// `exact[t][d]`: infected by step `t` at distance exactly `d`.
    pub exact: Vec<Vec<usize>>,
    /// `cumulative[t][d]`: infected by step `t` within distance `d`.
    pub cumulative: Vec<Vec<usize>>,
}

impl DistanceTable {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "distance", "count", "cumulative"])?;
        for (t, (ex, cu)) in self.exact.iter().zip(&self.cumulative).enumerate() {
            for (d, (e, c)) in ex.iter().zip(cu).enumerate() {
                out.write_record([t.to_string(), d.to_string(), e.to_string(), c.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn infection_by_distance(trace: &EpidemicTrace) -> DistanceTable {
    let cap = trace.distance_cap;
    let exact: Vec<Vec<usize>> = trace
        .status
        .iter()
        .map(|row| {
            let mut counts = vec![0; cap + 1];
            for (v, &inf) in row.iter().enumerate() {
                if let (true, Some(d)) = (inf, trace.distance[v]) {
                    if d <= cap {
                        counts[d] += 1;
                    }
                }
            }
            counts
        })
        .collect();
    let cumulative = exact
        .iter()
        .map(|row| {
            row.iter()
                .scan(0, |acc, &c| {
                    *acc += c;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    DistanceTable { exact, cumulative }
}

fn check_window(trace: &EpidemicTrace, t: usize, d: usize) -> Result<()> {
    if d > t {
        return Err(Error::invalid("D", format!("distance {d} exceeds time {t}")));
    }
    if t > trace.horizon {
        return Err(Error::invalid("T", format!("time {t} exceeds horizon {}", trace.horizon)));
    }
    if d > trace.distance_cap {
        return Err(Error::invalid("D", format!("distance {d} exceeds cap {}", trace.distance_cap)));
    }
    Ok(())
}

fn at_risk(trace: &EpidemicTrace, t: usize, d: usize) -> impl Iterator<Item = usize> + '_ {
    trace.status[t]
        .iter()
        .enumerate()
        .filter(move |&(v, &inf)| inf && trace.distance[v].is_some_and(|x| x <= d))
        .map(|(v, _)| v)
}

/// Share of the population infected by step `t` within `d` hops of a seed.
pub fn par(trace: &EpidemicTrace, t: usize, d: usize) -> Result<f64> {
    check_window(trace, t, d)?;
    Ok(at_risk(trace, t, d).count() as f64 / trace.node_count() as f64)
}

/// Share infected by step `t` at exactly `d` hops.
pub fn par_exact(trace: &EpidemicTrace, t: usize, d: usize) -> Result<f64> {
    check_window(trace, t, d)?;
    let hits = at_risk(trace, t, d)
        .filter(|&v| trace.distance[v] == Some(d))
        .count();
    Ok(hits as f64 / trace.node_count() as f64)
}

/// Per age group, the share of the group infected by step `t` within `d`
/// hops. Empty groups yield `None`.
pub fn par_by_group(trace: &EpidemicTrace, population: &Population, t: usize, d: usize) -> Result<Vec<Option<f64>>> {
    check_window(trace, t, d)?;
    let sizes = population.group_sizes();
    let mut hits = [0usize; GROUP_COUNT];
    for v in at_risk(trace, t, d) {
        hits[population.groups[v]] += 1;
    }
    Ok((0..GROUP_COUNT)
        .map(|g| (sizes[g] > 0).then(|| hits[g] as f64 / sizes[g] as f64))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParEntry {
    pub t: usize,
    pub d: usize,
    pub par: f64,
    pub par_exact: f64,
    pub by_group: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskReport {
    pub seeds: Vec<usize>,
    pub seed_degrees: Vec<usize>,
    pub final_infected: usize,
    pub reachable_within_cap: usize,
    pub par: Vec<ParEntry>,
    pub infection_by_distance: DistanceTable,
}

pub fn risk_report(net: &NetworkSnapshot, population: &Population, trace: &EpidemicTrace) -> Result<RiskReport> {
    let mut entries = Vec::new();
    for t in 0..=trace.horizon {
        for d in 0..=t.min(trace.distance_cap) {
            entries.push(ParEntry {
                t,
                d,
                par: par(trace, t, d)?,
                par_exact: par_exact(trace, t, d)?,
                by_group: par_by_group(trace, population, t, d)?,
            });
        }
    }
    Ok(RiskReport {
        seeds: trace.seeds.clone(),
        seed_degrees: trace.seeds.iter().map(|&s| net.degree(s)).collect(),
        final_infected: trace.final_infected(),
        reachable_within_cap: trace.reachable_within_cap(),
        par: entries,
        infection_by_distance: infection_by_distance(trace),
    })
}
