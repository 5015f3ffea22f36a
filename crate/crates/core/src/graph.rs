//! Canonical lvLiNGAM causal graphs and the structural queries the estimators need.
//!
//! Nodes are dense ids `0..node_count`. Every node is either observed or latent; the
//! column order of the mixing matrix is the observed list followed by the latent list.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed acyclic graph with an observed/latent partition of its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    observed: Vec<usize>,
    latent: Vec<usize>,
    names: Vec<String>,
}

/// JSON description of a graph: `{"nodes": N, "observed": [...], "latent": [...], "edges": [[i,j],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: usize,
    pub observed: Vec<usize>,
    pub latent: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl Dag {
    /// Builds a DAG from an edge list. Duplicate edges are merged.
    pub fn new(
        node_count: usize,
        edges: &[(usize, usize)],
        observed: &[usize],
        latent: &[usize],
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidInput("graph must have at least one node".into()));
        }
        let mut parents = vec![Vec::new(); node_count];
        let mut children = vec![Vec::new(); node_count];
        for &(from, to) in edges {
            if from >= node_count {
                return Err(Error::UnknownNode(from));
            }
            if to >= node_count {
                return Err(Error::UnknownNode(to));
            }
            if from == to {
                return Err(Error::InvalidInput(format!("self loop on node {from}")));
            }
            if !children[from].contains(&to) {
                children[from].push(to);
                parents[to].push(from);
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }

        let mut seen = vec![false; node_count];
        for &v in observed.iter().chain(latent) {
            if v >= node_count {
                return Err(Error::UnknownNode(v));
            }
            if seen[v] {
                return Err(Error::InvalidInput(format!(
                    "node {v} listed twice in the observed/latent partition"
                )));
            }
            seen[v] = true;
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "node {v} is neither observed nor latent"
            )));
        }

        let dag = Self {
            parents,
            children,
            observed: observed.to_vec(),
            latent: latent.to_vec(),
            names: (0..node_count).map(|i| format!("V{i}")).collect(),
        };
        if dag.topological_order().len() != node_count {
            return Err(Error::InvalidInput("graph contains a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn with_names<S: AsRef<str>>(mut self, names: &[S]) -> Result<Self> {
        if names.len() != self.node_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} node names, got {}",
                self.node_count(),
                names.len()
            )));
        }
        self.names = names.iter().map(|s| s.as_ref().to_string()).collect();
        Ok(self)
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self> {
        let edges: Vec<(usize, usize)> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
        let dag = Self::new(spec.nodes, &edges, &spec.observed, &spec.latent)?;
        match &spec.names {
            Some(names) => dag.with_names(names),
            None => Ok(dag),
        }
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let spec: GraphSpec = serde_json::from_str(json)?;
        Self::from_spec(&spec)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            nodes: self.node_count(),
            observed: self.observed.clone(),
            latent: self.latent.clone(),
            edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            names: Some(self.names.clone()),
        }
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn latent(&self) -> &[usize] {
        &self.latent
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_latent(&self, v: usize) -> bool {
        self.latent.contains(&v)
    }

    /// Position of `v` among the observed nodes (the data column it occupies).
    pub fn observed_index(&self, v: usize) -> Option<usize> {
        self.observed.iter().position(|&o| o == v)
    }

    /// Column of `v` in the mixing matrix: observed nodes first, then latent nodes.
    pub fn column_index(&self, v: usize) -> Option<usize> {
        self.observed_index(v).or_else(|| {
            self.latent
                .iter()
                .position(|&l| l == v)
                .map(|p| self.observed.len() + p)
        })
    }

    /// Node occupying mixing-matrix column `col`.
    pub fn column_node(&self, col: usize) -> usize {
        if col < self.observed.len() {
            self.observed[col]
        } else {
            self.latent[col - self.observed.len()]
        }
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// All edges `(from, to)` in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(from, ch)| ch.iter().map(move |&to| (from, to)))
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children.get(from).is_some_and(|c| c.contains(&to))
    }

    /// Kahn's algorithm; ties resolved by smallest node id.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..self.node_count()).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(self.node_count());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v < self.node_count() {
            Ok(())
        } else {
            Err(Error::UnknownNode(v))
        }
    }

    /// Nodes with a directed path into `v`, excluding `v`.
    pub fn ancestors(&self, v: usize) -> Result<BTreeSet<usize>> {
        self.check_node(v)?;
        Ok(self.walk(v, |u| &self.parents[u]))
    }

    /// Nodes reachable from `v` by a directed path, excluding `v`.
    pub fn descendants(&self, v: usize) -> Result<BTreeSet<usize>> {
        self.check_node(v)?;
        Ok(self.walk(v, |u| &self.children[u]))
    }

    fn walk<'a>(&'a self, start: usize, next: impl Fn(usize) -> &'a [usize]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in next(u) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.remove(&start);
        seen
    }

    /// Every latent node has no parents and at least two children.
    pub fn is_canonical(&self) -> bool {
        self.latent
            .iter()
            .all(|&l| self.parents[l].is_empty() && self.children[l].len() >= 2)
    }

    /// Copy of the graph without the listed edges.
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Self {
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .filter(|e| !removed.contains(e))
            .collect();
        let mut dag = Self::new(self.node_count(), &edges, &self.observed, &self.latent)
            .expect("removing edges keeps the graph acyclic");
        dag.names = self.names.clone();
        dag
    }

    /// d-separation of `x` and `y` given `z` via the reachable-set (Bayes-ball) procedure.
    pub fn d_separated(&self, x: usize, y: usize, z: &BTreeSet<usize>) -> Result<bool> {
        self.check_node(x)?;
        self.check_node(y)?;
        for &v in z {
            self.check_node(v)?;
        }
        if x == y {
            return Err(Error::InvalidInput("d-separation needs two distinct nodes".into()));
        }
        if z.contains(&x) || z.contains(&y) {
            return Err(Error::InvalidInput(
                "endpoints must not belong to the conditioning set".into(),
            ));
        }
        Ok(!self.reachable(x, z).contains(&y))
    }

    /// Nodes d-connected to `x` given `z`.
    fn reachable(&self, x: usize, z: &BTreeSet<usize>) -> BTreeSet<usize> {
        // Conditioning set together with its ancestors: colliders there are open.
        let mut z_anc: BTreeSet<usize> = z.clone();
        for &v in z {
            z_anc.extend(self.walk(v, |u| &self.parents[u]));
        }

        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
        enum Dir {
            // arrived from a child, moving against edge direction
            Up,
            // arrived from a parent, moving along edge direction
            Down,
        }

        let mut visited: BTreeSet<(usize, Dir)> = BTreeSet::new();
        let mut reachable = BTreeSet::new();
        let mut stack = vec![(x, Dir::Up)];
        while let Some((v, dir)) = stack.pop() {
            if !visited.insert((v, dir)) {
                continue;
            }
            let conditioned = z.contains(&v);
            if !conditioned {
                reachable.insert(v);
            }
            match dir {
                Dir::Up if !conditioned => {
                    stack.extend(self.parents[v].iter().map(|&p| (p, Dir::Up)));
                    stack.extend(self.children[v].iter().map(|&c| (c, Dir::Down)));
                }
                Dir::Up => {}
                Dir::Down => {
                    if !conditioned {
                        stack.extend(self.children[v].iter().map(|&c| (c, Dir::Down)));
                    }
                    if z_anc.contains(&v) {
                        stack.extend(self.parents[v].iter().map(|&p| (p, Dir::Up)));
                    }
                }
            }
        }
        reachable.remove(&x);
        reachable
    }

    /// Instrument validity of `instrument` for `treatments` on `outcome`:
    /// (a) the instrument is a parent of every treatment;
    /// (b) it shares no latent ancestor with any treatment;
    /// (c) it is d-separated from the outcome once every treatment→outcome edge is removed.
    pub fn is_valid_instrument(
        &self,
        instrument: usize,
        treatments: &[usize],
        outcome: usize,
    ) -> Result<bool> {
        self.check_node(instrument)?;
        self.check_node(outcome)?;
        for &t in treatments {
            self.check_node(t)?;
        }
        if treatments.is_empty() {
            return Err(Error::InvalidInput("at least one treatment is required".into()));
        }
        for &v in treatments.iter().chain([&instrument, &outcome]) {
            if self.is_latent(v) {
                return Err(Error::InvalidInput(format!(
                    "node {} is latent; instrument, treatments and outcome must be observed",
                    self.name(v)
                )));
            }
        }
        if treatments.contains(&instrument) || treatments.contains(&outcome) || instrument == outcome {
            return Err(Error::InvalidInput(
                "instrument, treatments and outcome must be distinct".into(),
            ));
        }

        if !treatments.iter().all(|&t| self.parents[t].contains(&instrument)) {
            return Ok(false);
        }
        let instrument_anc = self.ancestors(instrument)?;
        for &t in treatments {
            let shared = self.ancestors(t)?;
            if instrument_anc
                .intersection(&shared)
                .any(|&v| self.is_latent(v))
            {
                return Ok(false);
            }
        }
        let removed: Vec<(usize, usize)> = treatments.iter().map(|&t| (t, outcome)).collect();
        self.without_edges(&removed)
            .d_separated(instrument, outcome, &BTreeSet::new())
    }
}

/// The fixed graphs used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphPreset {
    /// Proxy Z, treatment T, outcome Y, one latent confounder; no Z→T edge.
    G1,
    /// As `G1` with two latent confounders.
    G2,
    /// As `G1` with an edge Z→T.
    G3,
    /// Two latent confounders and an edge Z→T.
    Proxy2LatEdge,
    /// One instrument, two treatments, two latent confounders.
    Iv2T1I,
    /// Two instruments, three treatments, two observed covariates, three latents.
    Iv3T2I,
}

/// Role assignment for the estimators on a preset graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Roles {
    Proxy {
        proxy: usize,
        treatment: usize,
        outcome: usize,
        latents: usize,
    },
    Iv {
        instruments: Vec<usize>,
        treatments: Vec<usize>,
        outcome: usize,
    },
}

impl GraphPreset {
    pub const ALL: [GraphPreset; 6] = [
        GraphPreset::G1,
        GraphPreset::G2,
        GraphPreset::G3,
        GraphPreset::Proxy2LatEdge,
        GraphPreset::Iv2T1I,
        GraphPreset::Iv3T2I,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GraphPreset::G1 => "G1",
            GraphPreset::G2 => "G2",
            GraphPreset::G3 => "G3",
            GraphPreset::Proxy2LatEdge => "PROXY_2LAT_EDGE",
            GraphPreset::Iv2T1I => "IV_2T_1I",
            GraphPreset::Iv3T2I => "IV_3T_2I",
        }
    }

    pub fn dag(self) -> Dag {
        let (n, edges, observed, latent, names): (usize, Vec<(usize, usize)>, Vec<usize>, Vec<usize>, Vec<&str>) =
            match self {
                // Z=0 T=1 Y=2 L1=3
                GraphPreset::G1 => (
                    4,
                    vec![(3, 0), (3, 1), (3, 2), (1, 2)],
                    vec![0, 1, 2],
                    vec![3],
                    vec!["Z", "T", "Y", "L1"],
                ),
                // Z=0 T=1 Y=2 L1=3 L2=4
                GraphPreset::G2 => (
                    5,
                    vec![(3, 0), (3, 1), (3, 2), (4, 0), (4, 1), (4, 2), (1, 2)],
                    vec![0, 1, 2],
                    vec![3, 4],
                    vec!["Z", "T", "Y", "L1", "L2"],
                ),
                GraphPreset::G3 => (
                    4,
                    vec![(3, 0), (3, 1), (3, 2), (1, 2), (0, 1)],
                    vec![0, 1, 2],
                    vec![3],
                    vec!["Z", "T", "Y", "L1"],
                ),
                GraphPreset::Proxy2LatEdge => (
                    5,
                    vec![(3, 0), (3, 1), (3, 2), (4, 0), (4, 1), (4, 2), (1, 2), (0, 1)],
                    vec![0, 1, 2],
                    vec![3, 4],
                    vec!["Z", "T", "Y", "L1", "L2"],
                ),
                // I=0 T1=1 T2=2 Y=3 L1=4 L2=5
                GraphPreset::Iv2T1I => (
                    6,
                    vec![(0, 1), (0, 2), (1, 3), (2, 3), (4, 1), (4, 3), (5, 2), (5, 3)],
                    vec![0, 1, 2, 3],
                    vec![4, 5],
                    vec!["I", "T1", "T2", "Y", "L1", "L2"],
                ),
                // I1=0 I2=1 X1=2 X2=3 T1=4 T2=5 T3=6 Y=7 L1=8 L2=9 L3=10
                GraphPreset::Iv3T2I => (
                    11,
                    vec![
                        (0, 4),
                        (0, 5),
                        (1, 4),
                        (1, 5),
                        (1, 6),
                        (2, 0),
                        (2, 4),
                        (3, 0),
                        (3, 5),
                        (4, 7),
                        (5, 7),
                        (8, 4),
                        (8, 7),
                        (9, 4),
                        (9, 6),
                        (9, 7),
                        (10, 5),
                        (10, 7),
                    ],
                    vec![0, 1, 2, 3, 4, 5, 6, 7],
                    vec![8, 9, 10],
                    vec!["I1", "I2", "X1", "X2", "T1", "T2", "T3", "Y", "L1", "L2", "L3"],
                ),
            };
        Dag::new(n, &edges, &observed, &latent)
            .and_then(|d| d.with_names(&names))
            .expect("preset graphs are valid")
    }

    pub fn roles(self) -> Roles {
        match self {
            GraphPreset::G1 | GraphPreset::G3 => Roles::Proxy {
                proxy: 0,
                treatment: 1,
                outcome: 2,
                latents: 1,
            },
            GraphPreset::G2 | GraphPreset::Proxy2LatEdge => Roles::Proxy {
                proxy: 0,
                treatment: 1,
                outcome: 2,
                latents: 2,
            },
            GraphPreset::Iv2T1I => Roles::Iv {
                instruments: vec![0],
                treatments: vec![1, 2],
                outcome: 3,
            },
            GraphPreset::Iv3T2I => Roles::Iv {
                instruments: vec![0, 1],
                treatments: vec![4, 5, 6],
                outcome: 7,
            },
        }
    }
}

impl fmt::Display for GraphPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraphPreset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown graph preset '{s}'")))
    }
}
