//! End-to-end composition of the stages for one scenario.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::epidemic::{run_si, select_seeds, EpidemicConfig, EpidemicTrace, SeedRule};
use crate::error::{Error, Result};
use crate::featuregen::{group_counts, sample_ages, Population};
use crate::netgen::{ba_target, generate_network, NetworkSnapshot};
use crate::rng::{RngPolicy, StreamLabel};
use crate::scenario::Scenario;

/// Ages drawn for the scenario's shape, carrying the scenario's sDNA.
pub fn build_population(scenario: &Scenario, policy: &RngPolicy) -> Population {
    let spec = group_counts(scenario.age_shape, scenario.node_count);
    let ages = sample_ages(&spec, &policy.stream(StreamLabel::FeatureGen));
    Population::homogeneous(ages, scenario.preferences())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Paradigm {
    pub population: Population,
    pub network: NetworkSnapshot,
}

pub fn generate_paradigm(scenario: &Scenario) -> Result<Paradigm> {
    generate_paradigm_with(scenario, &scenario.rng_policy())
}

pub fn generate_paradigm_with(scenario: &Scenario, policy: &RngPolicy) -> Result<Paradigm> {
    let population = build_population(scenario, policy);
    let network = generate_network(&population, scenario, policy)?;
    Ok(Paradigm { population, network })
}

/// Degree-seeded SI run under the scenario's transmissibility and budgets.
pub fn simulate_epidemic(paradigm: &Paradigm, scenario: &Scenario, policy: &RngPolicy) -> Result<EpidemicTrace> {
    let seeds = select_seeds(
        &paradigm.network,
        &paradigm.population,
        &SeedRule::max_degree(scenario.seed_count),
    )?;
    let config = EpidemicConfig::from_scenario(scenario)?;
    run_si(
        &paradigm.network,
        &paradigm.population,
        &seeds,
        &config,
        &policy.stream(StreamLabel::Infection),
    )
}

/// Where a comparison target network comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetSpec {
    Ba { n: usize, m: usize },
    EdgeList { path: PathBuf, node_count: Option<usize> },
}

impl TargetSpec {
    /// Barabási–Albert target whose edge count best matches the scenario.
    pub fn ba_for(scenario: &Scenario) -> Self {
        let n = scenario.node_count.max(2);
        TargetSpec::Ba {
            n,
            m: crate::netgen::ba_attachments_for(n, scenario.edge_budget),
        }
    }

    pub fn build(&self, policy: &RngPolicy) -> Result<NetworkSnapshot> {
        match self {
            TargetSpec::Ba { n, m } => ba_target(*n, *m, &policy.stream(StreamLabel::Target)),
            TargetSpec::EdgeList { path, node_count } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let n = match node_count {
                    Some(n) => *n,
                    None => infer_node_count(&text)?,
                };
                NetworkSnapshot::read_edge_csv(n, text.as_bytes())
            }
        }
    }
}

fn infer_node_count(text: &str) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let mut max = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: "edge list".into(),
            message: e.to_string(),
        })?;
        for k in 0..2 {
            if let Some(v) = record.get(k).and_then(|s| s.trim().parse::<usize>().ok()) {
                max = Some(max.map_or(v, |m: usize| m.max(v)));
            }
        }
    }
    Ok(max.map_or(0, |m| m + 1))
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Ba { n, m } => write!(f, "ba:{n},{m}"),
            TargetSpec::EdgeList { path, node_count: None } => write!(f, "edgelist:{}", path.display()),
            TargetSpec::EdgeList {
                path,
                node_count: Some(n),
            } => write!(f, "edgelist:{}#{n}", path.display()),
        }
    }
}

impl FromStr for TargetSpec {
    type Err = Error;

    /// `ba:<n>,<m>` or `edgelist:<path>[#<node_count>]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("target", format!("`{s}` is not ba:n,m or edgelist:path"));
        if let Some(rest) = s.strip_prefix("ba:") {
            let (n, m) = rest.split_once(',').ok_or_else(bad)?;
            let n = n.trim().parse().map_err(|_| bad())?;
            let m = m.trim().parse().map_err(|_| bad())?;
            return Ok(TargetSpec::Ba { n, m });
        }
        if let Some(rest) = s.strip_prefix("edgelist:") {
            let (path, node_count) = match rest.rsplit_once('#') {
                Some((p, n)) => (p, Some(n.parse().map_err(|_| bad())?)),
                None => (rest, None),
            };
            if path.is_empty() {
                return Err(bad());
            }
            return Ok(TargetSpec::EdgeList {
                path: PathBuf::from(path),
                node_count,
            });
        }
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_spec_parsing() {
        assert_eq!("ba:90,20".parse::<TargetSpec>().unwrap(), TargetSpec::Ba { n: 90, m: 20 });
        assert_eq!(
            "edgelist:net.csv#90".parse::<TargetSpec>().unwrap(),
            TargetSpec::EdgeList {
                path: "net.csv".into(),
                node_count: Some(90)
            }
        );
        for bad in ["ba:90", "ba:x,2", "edgelist:", "er:1,2"] {
            assert!(bad.parse::<TargetSpec>().is_err(), "{bad}");
        }
        assert_eq!(TargetSpec::ba_for(&Scenario::with_seed(0)), TargetSpec::Ba { n: 90, m: 20 });
    }

    #[test]
    fn edge_list_target_infers_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "i,j,gamma\n0,4,1\n2,3,0.5\n").unwrap();
        let net = TargetSpec::EdgeList {
            path: path.clone(),
            node_count: None,
        }
        .build(&RngPolicy::new(1))
        .unwrap();
        assert_eq!(net.node_count(), 5);
        assert_eq!(net.edge_count(), 2);
    }

    #[test]
    fn paradigm_is_deterministic() {
        let s = Scenario::preset("B_H-", 17).unwrap();
        let a = generate_paradigm(&s).unwrap();
        let b = generate_paradigm(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.network.edge_count(), 1400);
        let ta = simulate_epidemic(&a, &s, &s.rng_policy()).unwrap();
        let tb = simulate_epidemic(&b, &s, &s.rng_policy()).unwrap();
        assert_eq!(ta, tb);
    }
}
