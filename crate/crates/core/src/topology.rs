//! Interference network and its clustering.
//!
//! Units are 1-indexed in every public signature (`1..=n_units`). Both types
//! are immutable once built and can be shared freely between replications.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected, unweighted interference network over units `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n_units: usize,
    // row-major n x n, symmetric, zero diagonal
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl Network {
    /// Builds the symmetric closure of `edges`. Repeated edges are harmless.
    pub fn new(n_units: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_units == 0 {
            return Err(Error::Structure("a network needs at least one unit".into()));
        }
        let mut adjacency = vec![false; n_units * n_units];
        for &(i, j) in edges {
            for u in [i, j] {
                if u == 0 || u > n_units {
                    return Err(Error::Structure(format!(
                        "edge ({i}, {j}) has endpoint {u} outside 1..={n_units}"
                    )));
                }
            }
            if i == j {
                return Err(Error::Structure(format!("self-loop on unit {i}")));
            }
            adjacency[(i - 1) * n_units + (j - 1)] = true;
            adjacency[(j - 1) * n_units + (i - 1)] = true;
        }
        let neighbors = (0..n_units)
            .map(|r| {
                (0..n_units)
                    .filter(|&c| adjacency[r * n_units + c])
                    .map(|c| c + 1)
                    .collect()
            })
            .collect();
        Ok(Self {
            n_units,
            adjacency,
            neighbors,
        })
    }

    /// Cycle `1 - 2 - ... - n - 1`.
    pub fn ring(n_units: usize) -> Result<Self> {
        if n_units < 3 {
            return Err(Error::Structure("a ring needs at least three units".into()));
        }
        let edges: Vec<_> = (1..=n_units).map(|i| (i, i % n_units + 1)).collect();
        Self::new(n_units, &edges)
    }

    /// Path `1 - 2 - ... - n`.
    pub fn path(n_units: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n_units).map(|i| (i, i + 1)).collect();
        Self::new(n_units, &edges)
    }

    /// Unit 1 joined to every unit in `2..=outer + 1`.
    pub fn star(outer: usize) -> Result<Self> {
        let edges: Vec<_> = (2..=outer + 1).map(|i| (1, i)).collect();
        Self::new(outer + 1, &edges)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn is_edge(&self, i: usize, j: usize) -> Result<bool> {
        self.check_unit(i)?;
        self.check_unit(j)?;
        Ok(self.adjacency[(i - 1) * self.n_units + (j - 1)])
    }

    /// Sorted neighbours of `unit`.
    pub fn neighbors(&self, unit: usize) -> Result<&[usize]> {
        self.check_unit(unit)?;
        Ok(&self.neighbors[unit - 1])
    }

    pub fn degree(&self, unit: usize) -> Result<usize> {
        self.neighbors(unit).map(<[usize]>::len)
    }

    /// All undirected edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(r, ns)| {
                ns.iter()
                    .filter(move |&&c| c > r + 1)
                    .map(move |&c| (r + 1, c))
            })
            .collect()
    }

    fn check_unit(&self, unit: usize) -> Result<()> {
        if unit == 0 || unit > self.n_units {
            Err(Error::Structure(format!(
                "unit {unit} outside 1..={}",
                self.n_units
            )))
        } else {
            Ok(())
        }
    }
}

/// Disjoint, exhaustive partition of the units into clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    clusters: Vec<Vec<usize>>,
    // 0-based cluster index per 0-based unit
    cluster_of: Vec<usize>,
}

impl Clustering {
    /// Validates that `clusters` partitions the units of `network`.
    ///
    /// Cluster order is preserved; members are sorted within each cluster.
    pub fn new(network: &Network, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let n = network.n_units();
        if clusters.is_empty() {
            return Err(Error::Structure("clustering has no clusters".into()));
        }
        let mut cluster_of = vec![usize::MAX; n];
        let mut sorted = Vec::with_capacity(clusters.len());
        for (q, members) in clusters.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Structure(format!("cluster {} is empty", q + 1)));
            }
            let members: BTreeSet<usize> = members.into_iter().collect();
            for &u in &members {
                if u == 0 || u > n {
                    return Err(Error::Structure(format!(
                        "cluster {} contains unit {u} outside 1..={n}",
                        q + 1
                    )));
                }
                if cluster_of[u - 1] != usize::MAX {
                    return Err(Error::Structure(format!(
                        "unit {u} appears in clusters {} and {}",
                        cluster_of[u - 1] + 1,
                        q + 1
                    )));
                }
                cluster_of[u - 1] = q;
            }
            sorted.push(members.into_iter().collect());
        }
        if let Some(u) = cluster_of.iter().position(|&q| q == usize::MAX) {
            return Err(Error::Structure(format!(
                "unit {} is not covered by any cluster",
                u + 1
            )));
        }
        Ok(Self {
            clusters: sorted,
            cluster_of,
        })
    }

    /// One cluster per unit.
    pub fn singletons(network: &Network) -> Self {
        let n = network.n_units();
        Self {
            clusters: (1..=n).map(|u| vec![u]).collect(),
            cluster_of: (0..n).collect(),
        }
    }

    /// All units in one cluster.
    pub fn global(network: &Network) -> Self {
        let n = network.n_units();
        Self {
            clusters: vec![(1..=n).collect()],
            cluster_of: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.clusters[cluster]
    }

    /// 0-based index of the cluster containing the 1-based `unit`.
    pub fn cluster_of(&self, unit: usize) -> Result<usize> {
        self.cluster_of
            .get(unit.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Structure(format!("unit {unit} is not clustered")))
    }

    /// 0-based cluster index for each unit in order.
    pub fn assignment(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn n_units(&self) -> usize {
        self.cluster_of.len()
    }
}

/// Plain-text form of a network and its clustering.
///
/// ```toml
/// n_units = 4
/// edges = [[1, 2], [3, 4]]
/// clusters = [[1, 2], [3, 4]]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub n_units: usize,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    pub clusters: Vec<Vec<usize>>,
}

impl TopologyDoc {
    pub fn from_parts(network: &Network, clustering: &Clustering) -> Self {
        Self {
            n_units: network.n_units(),
            edges: network.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            clusters: clustering.clusters().to_vec(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("topology", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn build(&self) -> Result<(Network, Clustering)> {
        let edges: Vec<_> = self.edges.iter().map(|&[i, j]| (i, j)).collect();
        let network = Network::new(self.n_units, &edges)?;
        let clustering = Clustering::new(&network, self.clusters.clone())?;
        Ok((network, clustering))
    }
}
