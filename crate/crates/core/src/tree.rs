use std::collections::BTreeMap;

use crate::error::{domain, shape, Result};
use crate::histogram::Histogram;
use crate::matrix::Kernel;

/// An edge of a [`TreeCgm`]; `kernel[(i, j)]` pairs state `i` at `u` with
/// state `j` at `v`. Endpoints are positions in the node list.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEdge {
    pub u: usize,
    pub v: usize,
    pub kernel: Kernel,
}

/// Collective graphical model on a tree with noiseless node observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCgm {
    node_ids: Vec<u64>,
    edges: Vec<TreeEdge>,
    observations: Vec<Option<Histogram>>,
    degrees: Vec<usize>,
    n_states: usize,
    mass: f64,
}

impl TreeCgm {
    /// `edges` refer to node ids; `observations` maps node id to histogram.
    pub fn new(
        node_ids: Vec<u64>,
        edges: Vec<(u64, u64, Kernel)>,
        observations: BTreeMap<u64, Histogram>,
    ) -> Result<Self> {
        if node_ids.is_empty() {
            return Err(domain("tree has no nodes"));
        }
        let mut position = BTreeMap::new();
        for (p, &id) in node_ids.iter().enumerate() {
            if position.insert(id, p).is_some() {
                return Err(domain(format!("node id {id} appears twice")));
            }
        }
        let nv = node_ids.len();
        if edges.len() + 1 != nv {
            return Err(domain(format!(
                "a tree on {nv} nodes has {} edges, got {}: graph is disconnected or has a cycle",
                nv - 1,
                edges.len()
            )));
        }
        let n_states = match edges.first() {
            Some((_, _, k)) => k.n(),
            None => observations.values().next().map(Histogram::len).unwrap_or(0),
        };
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut degrees = vec![0; nv];
        let mut out_edges = Vec::with_capacity(edges.len());
        for (uid, vid, kernel) in edges {
            let u = *position.get(&uid).ok_or_else(|| domain(format!("edge references unknown node {uid}")))?;
            let v = *position.get(&vid).ok_or_else(|| domain(format!("edge references unknown node {vid}")))?;
            if u == v {
                return Err(domain(format!("self-loop at node {uid}")));
            }
            if kernel.n() != n_states {
                return Err(shape(format!("kernel on edge ({uid}, {vid}) is {0}x{0}, expected {n_states}", kernel.n())));
            }
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru == rv {
                return Err(domain(format!("edge ({uid}, {vid}) closes a cycle")));
            }
            parent[ru] = rv;
            degrees[u] += 1;
            degrees[v] += 1;
            out_edges.push(TreeEdge { u, v, kernel });
        }
        if observations.is_empty() {
            return Err(domain("at least one node must be observed"));
        }
        let mut obs = vec![None; nv];
        let mut mass = None;
        for (id, h) in observations {
            let p = *position.get(&id).ok_or_else(|| domain(format!("observation for unknown node {id}")))?;
            if h.len() != n_states {
                return Err(shape(format!("observation at node {id} has length {}, expected {n_states}", h.len())));
            }
            match mass {
                None => mass = Some(h.mass()),
                Some(f) => {
                    let f: f64 = f;
                    if (h.mass() - f).abs() > 1e-9 * f.abs().max(h.mass().abs()) {
                        return Err(domain(format!("observation at node {id} has mass {}, expected {f}", h.mass())));
                    }
                }
            }
            obs[p] = Some(h);
        }
        let mass = mass.expect("non-empty observations");
        if !(mass > 0.0) {
            return Err(domain("observed histograms must have positive mass"));
        }
        Ok(Self { node_ids, edges: out_edges, observations: obs, degrees, n_states, mass })
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn observation(&self, node: usize) -> Option<&Histogram> {
        self.observations[node].as_ref()
    }

    /// `ν_u`, the number of edges incident to `u`.
    pub fn degree(&self, node: usize) -> usize {
        self.degrees[node]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.node_ids.iter().position(|&x| x == id)
    }

    /// Adjacency as `(neighbour, edge index)` lists.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for (e, edge) in self.edges.iter().enumerate() {
            adj[edge.u].push((edge.v, e));
            adj[edge.v].push((edge.u, e));
        }
        adj
    }
}
