//! Degree, clustering and shortest-path patterns, summary statistics, and
//! Jensen–Shannon divergence between patterns.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::netgen::NetworkSnapshot;

/// Equal-width bins over `[0, 1]` for clustering coefficients.
pub const CLUSTERING_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Degree,
    Clustering,
    ShortestPath,
}

/// Probability mass over ordered bin labels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternDistribution {
    pub kind: PatternKind,
    pub support: Vec<f64>,
    pub mass: Vec<f64>,
}

impl PatternDistribution {
    /// Normalizes `counts` over `support`. With zero total the result has no
    /// support at all.
    pub fn from_counts(kind: PatternKind, support: Vec<f64>, counts: &[usize]) -> Self {
        debug_assert_eq!(support.len(), counts.len());
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Self {
                kind,
                support: Vec::new(),
                mass: Vec::new(),
            };
        }
        let mass = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self { kind, support, mass }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.mass).map(|(x, m)| x * m).sum()
    }

    pub fn std(&self) -> f64 {
        let mu = self.mean();
        self.support
            .iter()
            .zip(&self.mass)
            .map(|(x, m)| m * (x - mu).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin", "mass"])?;
        for (b, m) in self.support.iter().zip(&self.mass) {
            out.write_record([b.to_string(), m.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Histogram over integer degrees `0..N-1`, normalized by `N`.
pub fn degree_distribution(net: &NetworkSnapshot) -> PatternDistribution {
    let n = net.node_count();
    let mut counts = vec![0usize; n.max(1)];
    for d in net.degrees() {
        counts[d] += 1;
    }
    let support = (0..counts.len()).map(|d| d as f64).collect();
    PatternDistribution::from_counts(PatternKind::Degree, support, &counts)
}

/// Local clustering coefficient per node; nodes of degree below two get 0.
pub fn local_clustering(net: &NetworkSnapshot) -> Vec<f64> {
    (0..net.node_count())
        .map(|v| {
            let nbrs = net.neighbors(v);
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (a, &u) in nbrs.iter().enumerate() {
                links += nbrs[a + 1..].iter().filter(|&&w| net.has_edge(u, w)).count();
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect()
}

pub fn clustering_bin(c: f64) -> usize {
    ((c * CLUSTERING_BINS as f64).floor() as usize).min(CLUSTERING_BINS - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering {
    pub per_node: Vec<f64>,
    pub distribution: PatternDistribution,
}

pub fn clustering_coefficients(net: &NetworkSnapshot) -> Clustering {
    let per_node = local_clustering(net);
    let mut counts = vec![0usize; CLUSTERING_BINS];
    for &c in &per_node {
        counts[clustering_bin(c)] += 1;
    }
    let support = (0..CLUSTERING_BINS)
        .map(|b| b as f64 / CLUSTERING_BINS as f64)
        .collect();
    Clustering {
        distribution: PatternDistribution::from_counts(PatternKind::Clustering, support, &counts),
        per_node,
    }
}

/// Hop distances from `source`; `None` where unreachable.
pub fn bfs_distances(net: &NetworkSnapshot, sources: &[usize]) -> Vec<Option<usize>> {
    let mut dist = vec![None; net.node_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s].is_none() {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let next = dist[v].map(|d| d + 1);
        for &u in net.neighbors(v) {
            if dist[u].is_none() {
                dist[u] = next;
                queue.push_back(u);
            }
        }
    }
    dist
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShortestPaths {
    /// All-pairs hop counts; disconnected pairs hold the sentinel `N`.
    pub matrix: Vec<Vec<usize>>,
    pub sentinel: usize,
    /// Unordered pairs assigned the sentinel.
    pub fake_paths: usize,
    pub distribution: PatternDistribution,
}

impl ShortestPaths {
    /// Lengths of all unordered pairs `i < j`.
    pub fn pair_lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.matrix
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row[i + 1..].iter().copied())
    }
}

pub fn shortest_path_lengths(net: &NetworkSnapshot) -> ShortestPaths {
    let n = net.node_count();
    let sentinel = n;
    let matrix: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|s| {
            bfs_distances(net, &[s])
                .into_iter()
                .map(|d| d.unwrap_or(sentinel))
                .collect()
        })
        .collect();
    let mut counts = vec![0usize; sentinel + 1];
    let mut fake_paths = 0;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &d) in row.iter().enumerate().skip(i + 1) {
            counts[d] += 1;
            if d == sentinel && i != j {
                fake_paths += 1;
            }
        }
    }
    let (support, counts): (Vec<f64>, Vec<usize>) = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(len, &c)| (len as f64, c))
        .unzip();
    ShortestPaths {
        distribution: PatternDistribution::from_counts(PatternKind::ShortestPath, support, &counts),
        matrix,
        sentinel,
        fake_paths,
    }
}

/// Base-2 Jensen–Shannon divergence of two mass vectors on a shared support.
/// Shorter vectors are zero-padded.
pub fn js_divergence_mass(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    let mut js = 0.0;
    for k in 0..len {
        let (a, b) = (at(p, k), at(q, k));
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / m).log2();
        }
    }
    js.clamp(0.0, 1.0)
}

/// Jensen–Shannon divergence after aligning both distributions on the union
/// of their bin labels.
pub fn js_divergence(p: &PatternDistribution, q: &PatternDistribution) -> f64 {
    let (a, b) = align(p, q);
    js_divergence_mass(&a, &b)
}

/// Zero-padded masses of `p` and `q` over the sorted union of supports.
pub fn align(p: &PatternDistribution, q: &PatternDistribution) -> (Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    while i < p.support.len() || j < q.support.len() {
        let x = p.support.get(i).copied();
        let y = q.support.get(j).copied();
        match (x, y) {
            (Some(x), Some(y)) if x == y => {
                a.push(p.mass[i]);
                b.push(q.mass[j]);
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                a.push(p.mass[i]);
                b.push(0.0);
                i += 1;
            }
            (Some(_), None) => {
                a.push(p.mass[i]);
                b.push(0.0);
                i += 1;
            }
            _ => {
                a.push(0.0);
                b.push(q.mass[j]);
                j += 1;
            }
        }
    }
    (a, b)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

impl Stats {
    /// Population statistics; all zero for an empty sample.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// One row of the topology table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub connected: usize,
    pub unconnected: usize,
    pub degree: Stats,
    pub clustering: Stats,
    pub fake_paths: usize,
    pub path_length: Stats,
}

/// All three patterns of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Patterns {
    pub degree: PatternDistribution,
    pub clustering: Clustering,
    pub paths: ShortestPaths,
}

pub fn patterns(net: &NetworkSnapshot) -> Patterns {
    Patterns {
        degree: degree_distribution(net),
        clustering: clustering_coefficients(net),
        paths: shortest_path_lengths(net),
    }
}

pub fn summarize(net: &NetworkSnapshot) -> SummaryStats {
    summarize_patterns(net, &patterns(net))
}

pub fn summarize_patterns(net: &NetworkSnapshot, p: &Patterns) -> SummaryStats {
    let degrees = net.degrees();
    let connected = degrees.iter().filter(|&&d| d >= 1).count();
    SummaryStats {
        node_count: net.node_count(),
        edge_count: net.edge_count(),
        connected,
        unconnected: net.node_count() - connected,
        degree: Stats::of(degrees.iter().map(|&d| d as f64)),
        clustering: Stats::of(p.clustering.per_node.iter().copied()),
        fake_paths: p.paths.fake_paths,
        path_length: Stats::of(p.paths.pair_lengths().map(|d| d as f64)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn complete(n: usize) -> NetworkSnapshot {
        let pairs: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        NetworkSnapshot::from_pairs(n, &pairs).unwrap()
    }

    fn path(n: usize) -> NetworkSnapshot {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        NetworkSnapshot::from_pairs(n, &pairs).unwrap()
    }

    fn star(n: usize) -> NetworkSnapshot {
        let pairs: Vec<_> = (1..n).map(|i| (0, i)).collect();
        NetworkSnapshot::from_pairs(n, &pairs).unwrap()
    }

    #[test]
    fn degree_examples() {
        let tri = degree_distribution(&complete(3));
        assert_eq!(tri.mass, vec![0.0, 0.0, 1.0]);
        let empty = degree_distribution(&NetworkSnapshot::empty(5));
        assert_eq!(empty.mass[0], 1.0);
        assert!(empty.mass[1..].iter().all(|&m| m == 0.0));
        assert_eq!(empty.support.len(), 5);
    }

    #[test]
    fn clustering_examples() {
        assert!(local_clustering(&complete(5)).iter().all(|&c| c == 1.0));
        assert!(local_clustering(&star(6)).iter().all(|&c| c == 0.0));
        assert_eq!(local_clustering(&path(3))[1], 0.0);
        let k5 = clustering_coefficients(&complete(5));
        assert_eq!(k5.distribution.mass[CLUSTERING_BINS - 1], 1.0);
        // Triangle with a pendant: node 0 sees 1 of 3 neighbor pairs linked.
        let net = NetworkSnapshot::from_pairs(4, &[(0, 1), (0, 2), (1, 2), (0, 3)]).unwrap();
        let c = local_clustering(&net);
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(c[1], 1.0);
        assert_eq!(c[3], 0.0);
    }

    #[test]
    fn shortest_path_examples() {
        let p4 = shortest_path_lengths(&path(4));
        assert_eq!(p4.matrix[0][3], 3);
        assert_eq!(p4.fake_paths, 0);
        let two = shortest_path_lengths(&NetworkSnapshot::from_pairs(4, &[(0, 1), (2, 3)]).unwrap());
        assert_eq!(two.fake_paths, 4);
        assert_eq!(two.matrix[0][2], 4);
        assert_eq!(two.distribution.support, vec![1.0, 4.0]);
        assert!((two.distribution.mass[1] - 4.0 / 6.0).abs() < 1e-12);
        let k = shortest_path_lengths(&complete(6));
        assert_eq!(k.distribution.support, vec![1.0]);
    }

    #[test]
    fn js_examples() {
        assert_eq!(js_divergence_mass(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert!((js_divergence_mass(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-12);
        // 0.5 * log2(4/3) + 0.25 * log2(2/3) + 0.25 * log2(2)
        let expected = 0.5 * (4.0f64 / 3.0).log2() + 0.25 * (2.0f64 / 3.0).log2() + 0.25;
        let got = js_divergence_mass(&[1.0, 0.0], &[0.5, 0.5]);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.3113).abs() < 1e-4);
    }

    #[test]
    fn js_aligns_support() {
        let p = PatternDistribution {
            kind: PatternKind::ShortestPath,
            support: vec![1.0, 2.0],
            mass: vec![0.5, 0.5],
        };
        let q = PatternDistribution {
            kind: PatternKind::ShortestPath,
            support: vec![2.0, 90.0],
            mass: vec![0.5, 0.5],
        };
        let (a, b) = align(&p, &q);
        assert_eq!(a, vec![0.5, 0.5, 0.0]);
        assert_eq!(b, vec![0.0, 0.5, 0.5]);
        assert!((js_divergence(&p, &q) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn summary_examples() {
        let empty = summarize(&NetworkSnapshot::empty(7));
        assert_eq!((empty.connected, empty.unconnected), (0, 7));
        assert_eq!(empty.fake_paths, 21);
        let k90 = summarize(&complete(90));
        assert_eq!(k90.degree.mean, 89.0);
        assert_eq!(k90.fake_paths, 0);
        assert_eq!(k90.path_length.max, 1.0);
    }

    fn arb_graph() -> impl Strategy<Value = NetworkSnapshot> {
        (2usize..14).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                let pairs: Vec<_> = (0..n)
                    .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                    .zip(bits)
                    .filter_map(|(p, b)| b.then_some(p))
                    .collect();
                NetworkSnapshot::from_pairs(n, &pairs).unwrap()
            })
        })
    }

    fn arb_mass() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, 1..12).prop_filter_map("non-zero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-9).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn js_bounds_and_symmetry(p in arb_mass(), q in arb_mass()) {
            let pq = js_divergence_mass(&p, &q);
            let qp = js_divergence_mass(&q, &p);
            prop_assert!((pq - qp).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!(js_divergence_mass(&p, &p).abs() < 1e-12);
            let len = p.len().max(q.len());
            let differs = (0..len).any(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs() > 1e-9);
            if differs {
                prop_assert!(pq > 0.0);
            }
        }

        #[test]
        fn path_matrix_is_a_metric(net in arb_graph()) {
            let sp = shortest_path_lengths(&net);
            let n = net.node_count();
            for i in 0..n {
                prop_assert_eq!(sp.matrix[i][i], 0);
                for j in 0..n {
                    prop_assert_eq!(sp.matrix[i][j], sp.matrix[j][i]);
                    for k in 0..n {
                        let (a, b, c) = (sp.matrix[i][j], sp.matrix[i][k], sp.matrix[k][j]);
                        if a != n && b != n && c != n {
                            prop_assert!(a <= b + c);
                        }
                    }
                }
            }
            let connected = (0..n).all(|j| sp.matrix[0][j] != n);
            prop_assert_eq!(sp.fake_paths == 0, connected);
        }

        #[test]
        fn degree_sum_and_masses(net in arb_graph()) {
            prop_assert_eq!(net.degrees().iter().sum::<usize>(), 2 * net.edge_count());
            let p = patterns(&net);
            for d in [&p.degree, &p.clustering.distribution, &p.paths.distribution] {
                prop_assert!((d.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(d.mass.iter().all(|&m| m >= 0.0));
            }
            let s = summarize(&net);
            prop_assert_eq!(s.connected + s.unconnected, n_of(&net));
        }
    }

    fn n_of(net: &NetworkSnapshot) -> usize {
        net.node_count()
    }
}
