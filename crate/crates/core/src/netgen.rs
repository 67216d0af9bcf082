//! Score-ranked network formation and the Barabási–Albert target.
//!
//! Every unordered pair `(i, j)` receives a score blending a preferential
//! attachment term and a homophily term, plus Gaussian noise, zeroed when the
//! pair did not encounter. The `edge_budget` best encountered pairs become
//! edges. Random draws for a pair are keyed by `(i, j)`, so pairs can be
//! scored in parallel without changing the result.

use std::cmp::Ordering;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuregen::{Population, Sdna};
use crate::rng::{pair_key, RngPolicy, Stream, StreamLabel};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: String,
    pub streams: Vec<String>,
}

/// Undirected simple graph frozen at one time point.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSnapshot {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    pub provenance: Provenance,
    /// Set when fewer pairs encountered than the edge budget asked for.
    pub shortfall: Option<usize>,
}

impl NetworkSnapshot {
    /// Builds a snapshot from unordered edges. Endpoints are normalized to
    /// `i < j`; self-loops, duplicates, out-of-range ids and intensities
    /// outside `(0, 1]` are rejected.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut list: Vec<Edge> = Vec::new();
        for e in edges {
            let (i, j) = (e.i.min(e.j), e.i.max(e.j));
            if i == j {
                return Err(Error::invalid("edge", format!("self-loop on node {i}")));
            }
            if j >= node_count {
                return Err(Error::invalid("edge", format!("node {j} out of range for {node_count} nodes")));
            }
            if !(e.gamma > 0.0 && e.gamma <= 1.0) {
                return Err(Error::invalid("gamma", format!("intensity {} of ({i}, {j}) outside (0, 1]", e.gamma)));
            }
            list.push(Edge { i, j, gamma: e.gamma });
        }
        list.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = list.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::invalid("edge", format!("duplicate edge ({}, {})", w[0].i, w[0].j)));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &list {
            adjacency[e.i].push(e.j);
            adjacency[e.j].push(e.i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: list,
            adjacency,
            provenance: Provenance::default(),
            shortfall: None,
        })
    }

    /// Unit-intensity graph from plain pairs.
    pub fn from_pairs(node_count: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(node_count, pairs.iter().map(|&(i, j)| Edge { i, j, gamma: 1.0 }))
    }

    pub fn empty(node_count: usize) -> Self {
        Self::from_edges(node_count, []).expect("empty graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges sorted by `(i, j)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Intensity of `(a, b)`; zero when absent.
    pub fn intensity(&self, a: usize, b: usize) -> f64 {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&key))
            .map(|idx| self.edges[idx].gamma)
            .unwrap_or(0.0)
    }

    pub fn write_edge_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "gamma"])?;
        for e in &self.edges {
            out.write_record([e.i.to_string(), e.j.to_string(), e.gamma.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn header(&self, edge_budget: usize) -> NetworkHeader {
        NetworkHeader {
            node_count: self.node_count,
            edge_budget,
            edge_count: self.edges.len(),
            shortfall: self.shortfall,
            scenario_hash: self.provenance.scenario_hash.clone(),
            streams: self.provenance.streams.clone(),
        }
    }

    /// Reads an `i,j[,gamma]` edge list. A missing intensity column means 1.
    pub fn read_edge_csv<R: Read>(node_count: usize, r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(r);
        let mut edges = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse {
                path: "edge list".into(),
                message: e.to_string(),
            })?;
            let field = |k: usize| -> Result<&str> {
                record.get(k).map(str::trim).ok_or_else(|| Error::Parse {
                    path: "edge list".into(),
                    message: format!("row {} has too few columns", line + 2),
                })
            };
            let parse_err = |what: &str| Error::Parse {
                path: "edge list".into(),
                message: format!("row {}: bad {what}", line + 2),
            };
            let i = field(0)?.parse().map_err(|_| parse_err("i"))?;
            let j = field(1)?.parse().map_err(|_| parse_err("j"))?;
            let gamma = match record.get(2).map(str::trim) {
                Some(g) if !g.is_empty() => g.parse().map_err(|_| parse_err("gamma"))?,
                _ => 1.0,
            };
            edges.push(Edge { i, j, gamma });
        }
        Self::from_edges(node_count, edges)
    }
}

/// JSON companion of an exported edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub node_count: usize,
    pub edge_budget: usize,
    pub edge_count: usize,
    pub shortfall: Option<usize>,
    pub scenario_hash: String,
    pub streams: Vec<String>,
}

fn check_lengths(fi: &[f64], fj: &[f64], si: &Sdna, sj: &Sdna) -> Result<usize> {
    let l = fi.len();
    for other in [fj.len(), si.p.len(), si.wp.len(), si.h.len(), si.wh.len(), sj.p.len(), sj.wp.len(), sj.h.len(), sj.wh.len()] {
        if other != l {
            return Err(Error::LengthMismatch { left: l, right: other });
        }
    }
    if l == 0 {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    Ok(l)
}

/// Preferential attachment score: each side weighs the other's features by
/// its own signed preference weights.
pub fn preferential_score(fi: &[f64], fj: &[f64], si: &Sdna, sj: &Sdna) -> Result<f64> {
    let l = check_lengths(fi, fj, si, sj)? as f64;
    let side = |f: &[f64], s: &Sdna| -> f64 {
        f.iter()
            .zip(s.p.iter().zip(&s.wp))
            .map(|(x, (p, w))| x * p.value() * w)
            .sum()
    };
    Ok(side(fj, si) / (2.0 * l) + side(fi, sj) / (2.0 * l) + 1.0)
}

/// Homophily score over absolute feature differences. Negative `h` prefers
/// similar partners, positive `h` dissimilar ones.
pub fn homophily_score(fi: &[f64], fj: &[f64], si: &Sdna, sj: &Sdna) -> Result<f64> {
    let l = check_lengths(fi, fj, si, sj)? as f64;
    let side = |s: &Sdna| -> f64 {
        fi.iter()
            .zip(fj)
            .zip(s.h.iter().zip(&s.wh))
            .map(|((a, b), (h, w))| (a - b).abs() * h.value() * w)
            .sum()
    };
    Ok(side(si) / (2.0 * l) + side(sj) / (2.0 * l) + 1.0)
}

/// Blends the two component scores with the noise term, gated by encounter.
pub fn blend(pi_p: f64, pi_h: f64, noise: f64, encountered: bool) -> f64 {
    if encountered {
        0.5 * pi_p + 0.5 * pi_h + noise
    } else {
        0.0
    }
}

/// Intensity of a selected edge with score `total` over `l` features.
pub fn edge_intensity(total: f64, l: usize) -> f64 {
    let l = l as f64;
    (total + 2.0 * l) / (4.0 * l)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub pi_p: f64,
    pub pi_h: f64,
    pub noise: f64,
    pub encountered: bool,
    pub total: f64,
}

/// Randomness and rates shared by every pair of one generation run.
#[derive(Clone, Debug)]
pub struct PairSampler {
    pub encounter_rate: f64,
    pub noise: Option<Normal<f64>>,
    pub encounter: Stream,
    pub noise_stream: Stream,
}

impl PairSampler {
    pub fn new(encounter_rate: f64, noise_sigma: f64, policy: &RngPolicy) -> Result<Self> {
        let noise = if noise_sigma > 0.0 {
            Some(Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            encounter_rate,
            noise,
            encounter: policy.stream(StreamLabel::Encounter),
            noise_stream: policy.stream(StreamLabel::Noise),
        })
    }

    pub fn encountered(&self, i: usize, j: usize) -> bool {
        let key = pair_key(i.min(j), i.max(j));
        self.encounter.keyed(key).random::<f64>() < self.encounter_rate
    }

    pub fn noise(&self, i: usize, j: usize) -> f64 {
        match &self.noise {
            Some(dist) => dist.sample(&mut self.noise_stream.keyed(pair_key(i.min(j), i.max(j)))),
            None => 0.0,
        }
    }
}

pub fn pair_score(i: usize, j: usize, population: &Population, sampler: &PairSampler) -> Result<PairScore> {
    if i == j {
        return Err(Error::invalid("pair", format!("self pair ({i}, {i})")));
    }
    let (a, b) = (i.min(j), i.max(j));
    let (fa, fb) = (&population.features[a], &population.features[b]);
    let (sa, sb) = (&population.sdna[a], &population.sdna[b]);
    let pi_p = preferential_score(fa, fb, sa, sb)?;
    let pi_h = homophily_score(fa, fb, sa, sb)?;
    let encountered = sampler.encountered(a, b);
    let noise = sampler.noise(a, b);
    Ok(PairScore {
        i: a,
        j: b,
        pi_p,
        pi_h,
        noise,
        encountered,
        total: blend(pi_p, pi_h, noise, encountered),
    })
}

/// Descending score, then ascending `(i, j)`.
pub fn rank_order(a: &PairScore, b: &PairScore) -> Ordering {
    b.total.total_cmp(&a.total).then((a.i, a.j).cmp(&(b.i, b.j)))
}

/// Scores all pairs and keeps the top `edge_budget` encountered ones.
pub fn generate_network(population: &Population, scenario: &Scenario, policy: &RngPolicy) -> Result<NetworkSnapshot> {
    let sampler = PairSampler::new(scenario.encounter_rate, scenario.noise_sigma, policy)?;
    let mut net = select_edges(population, scenario.edge_budget, &sampler)?;
    net.provenance = Provenance {
        scenario_hash: scenario.hash(),
        streams: [StreamLabel::FeatureGen, StreamLabel::Encounter, StreamLabel::Noise]
            .iter()
            .map(|l| l.to_string())
            .collect(),
    };
    Ok(net)
}

/// Encounter flags and noise for every unordered pair, indexed in
/// row-major `i < j` order. Holding these fixed lets many sDNA candidates be
/// ranked against the same random draws.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDraws {
    node_count: usize,
    encountered: Vec<bool>,
    noise: Vec<f64>,
}

impl PairDraws {
    pub fn sample(node_count: usize, sampler: &PairSampler) -> Self {
        let rows: Vec<(Vec<bool>, Vec<f64>)> = (0..node_count)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..node_count)
                    .map(|j| (sampler.encountered(i, j), sampler.noise(i, j)))
                    .unzip()
            })
            .collect();
        let mut encountered = Vec::with_capacity(node_count * node_count.saturating_sub(1) / 2);
        let mut noise = Vec::with_capacity(encountered.capacity());
        for (e, z) in rows {
            encountered.extend(e);
            noise.extend(z);
        }
        Self {
            node_count,
            encountered,
            noise,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let n = self.node_count;
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> (bool, f64) {
        let k = self.index(i.min(j), i.max(j));
        (self.encountered[k], self.noise[k])
    }

    pub fn encountered_count(&self) -> usize {
        self.encountered.iter().filter(|&&e| e).count()
    }
}

pub fn select_edges(population: &Population, edge_budget: usize, sampler: &PairSampler) -> Result<NetworkSnapshot> {
    let draws = PairDraws::sample(population.len(), sampler);
    select_from_draws(population, edge_budget, &draws)
}

/// Ranks encountered pairs under fixed draws and keeps the top `edge_budget`.
pub fn select_from_draws(population: &Population, edge_budget: usize, draws: &PairDraws) -> Result<NetworkSnapshot> {
    let n = population.len();
    if draws.node_count() != n {
        return Err(Error::invalid(
            "population",
            format!("{n} nodes but draws cover {}", draws.node_count()),
        ));
    }
    let max_pairs = n * n.saturating_sub(1) / 2;
    if edge_budget > max_pairs {
        return Err(Error::invalid(
            "edge_budget",
            format!("{edge_budget} exceeds the {max_pairs} available node pairs"),
        ));
    }
    let l = population.features.first().map_or(1, Vec::len);
    let mut candidates = Vec::with_capacity(draws.encountered_count());
    for i in 0..n {
        for j in (i + 1)..n {
            let (encountered, noise) = draws.get(i, j);
            if !encountered {
                continue;
            }
            let (fi, fj) = (&population.features[i], &population.features[j]);
            let (si, sj) = (&population.sdna[i], &population.sdna[j]);
            let pi_p = preferential_score(fi, fj, si, sj)?;
            let pi_h = homophily_score(fi, fj, si, sj)?;
            candidates.push(PairScore {
                i,
                j,
                pi_p,
                pi_h,
                noise,
                encountered,
                total: blend(pi_p, pi_h, noise, encountered),
            });
        }
    }
    candidates.sort_unstable_by(rank_order);

    let shortfall = if candidates.len() < edge_budget {
        log::warn!(
            "only {} pairs encountered, fewer than the edge budget of {edge_budget}; connecting all of them",
            candidates.len()
        );
        Some(edge_budget - candidates.len())
    } else {
        None
    };
    candidates.truncate(edge_budget);
    let mut net = NetworkSnapshot::from_edges(
        n,
        candidates.iter().map(|s| Edge {
            i: s.i,
            j: s.j,
            gamma: edge_intensity(s.total, l),
        }),
    )?;
    net.shortfall = shortfall;
    Ok(net)
}

/// Barabási–Albert graph grown from `m` isolated nodes. Each arriving node
/// links to `m` distinct earlier nodes drawn proportionally to degree (to
/// `degree + 1` while every degree is still zero), giving `m * (n - m)` edges.
pub fn ba_target(n: usize, m: usize, stream: &Stream) -> Result<NetworkSnapshot> {
    if m == 0 || m >= n {
        return Err(Error::invalid("ba", format!("need 1 <= m < n, got n = {n}, m = {m}")));
    }
    let mut rng = stream.sequential();
    let mut degree = vec![0usize; n];
    let mut pairs = Vec::with_capacity(m * (n - m));
    for v in m..n {
        let degree_sum: usize = degree[..v].iter().sum();
        let smoothing = usize::from(degree_sum == 0);
        let picked = rand::seq::index::sample_weighted(&mut rng, v, |u| (degree[u] + smoothing) as f64, m)
            .map_err(|e| Error::Invariant(format!("attachment sampling failed: {e}")))?;
        let mut targets = picked.into_vec();
        targets.sort_unstable();
        for u in targets {
            degree[u] += 1;
            degree[v] += 1;
            pairs.push((u, v));
        }
    }
    let mut net = NetworkSnapshot::from_pairs(n, &pairs)?;
    net.provenance.streams = vec![stream.label().to_string()];
    Ok(net)
}

/// Attachment count whose BA graph on `n` nodes best matches `edge_budget`.
pub fn ba_attachments_for(n: usize, edge_budget: usize) -> usize {
    (1..n.max(2))
        .min_by_key(|&m| (m * (n - m)).abs_diff(edge_budget))
        .unwrap_or(1)
}
