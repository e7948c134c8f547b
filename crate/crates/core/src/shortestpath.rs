//! DAG machinery for bandit shortest path: flow-polytope construction, the
//! shortest-path vertex minimizer, and path sampling from a fractional flow.
//!
//! The flow polytope lives in `R^|E|` but has empty interior there (the
//! conservation equalities pin it to an affine subspace). [`FlowLift`] maps it
//! to reduced coordinates `z` with `x = origin + N z`, `N` an orthonormal basis
//! of the equality null space, where the capacity constraints do have an
//! interior and a log barrier is finite.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{LinearConstraint, PolytopeDomain, VertexOracle};
use crate::linalg::{dot, jacobi_eigen};

/// A directed acyclic graph with a source and a sink. Edges that lie on no
/// source-to-sink path are pruned at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DagSpec", into = "DagSpec")]
pub struct Dag {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
    source: usize,
    sink: usize,
    topo: Vec<usize>,
    /// Index of each kept edge in the edge list given to [`Dag::new`].
    kept: Vec<usize>,
}

/// Serialized DAG: `{"vertices": n, "edges": [[tail, head], ...], "source": u, "sink": v}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSpec {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub source: usize,
    pub sink: usize,
}

impl TryFrom<DagSpec> for Dag {
    type Error = Error;
    fn try_from(s: DagSpec) -> Result<Self> {
        Dag::new(s.vertices, s.edges, s.source, s.sink)
    }
}

impl From<Dag> for DagSpec {
    fn from(d: Dag) -> Self {
        DagSpec { vertices: d.n_vertices, edges: d.edges, source: d.source, sink: d.sink }
    }
}

fn topological_order(n: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(t, h) in edges {
        indeg[h] += 1;
        out[t].push(h);
    }
    let mut stack: Vec<usize> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = stack.pop() {
        order.push(v);
        for &h in out[v].iter().rev() {
            indeg[h] -= 1;
            if indeg[h] == 0 {
                stack.push(h);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Graph("graph has a directed cycle".into()));
    }
    Ok(order)
}

impl Dag {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize)>, source: usize, sink: usize) -> Result<Self> {
        if source >= n_vertices || sink >= n_vertices {
            return Err(Error::Graph("source or sink out of range".into()));
        }
        if source == sink {
            return Err(Error::Graph("source equals sink".into()));
        }
        if let Some(&(t, h)) = edges.iter().find(|&&(t, h)| t >= n_vertices || h >= n_vertices) {
            return Err(Error::Graph(format!("edge ({t}, {h}) references a missing vertex")));
        }
        let topo = topological_order(n_vertices, &edges)?;

        let mut from_source = vec![false; n_vertices];
        from_source[source] = true;
        for &v in &topo {
            if from_source[v] {
                for &(t, h) in &edges {
                    if t == v {
                        from_source[h] = true;
                    }
                }
            }
        }
        let mut to_sink = vec![false; n_vertices];
        to_sink[sink] = true;
        for &v in topo.iter().rev() {
            for &(t, h) in &edges {
                if t == v && to_sink[h] {
                    to_sink[v] = true;
                }
            }
        }
        let kept: Vec<usize> = (0..edges.len())
            .filter(|&e| from_source[edges[e].0] && to_sink[edges[e].1])
            .collect();
        if kept.is_empty() {
            return Err(Error::Graph("no path from source to sink".into()));
        }
        let edges = kept.iter().map(|&e| edges[e]).collect();
        Ok(Self { n_vertices, edges, source, sink, topo, kept })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn kept_edges(&self) -> &[usize] {
        &self.kept
    }

    fn out_edges(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(move |(_, &(t, _))| t == v).map(|(e, _)| e)
    }

    /// Every source-to-sink path as an edge-index list, in lexicographic order.
    pub fn enumerate_paths(&self) -> Vec<Vec<usize>> {
        let mut paths = Vec::new();
        let mut current = Vec::new();
        self.paths_from(self.source, &mut current, &mut paths);
        paths
    }

    fn paths_from(&self, v: usize, current: &mut Vec<usize>, acc: &mut Vec<Vec<usize>>) {
        if v == self.sink {
            acc.push(current.clone());
            return;
        }
        for e in self.out_edges(v).collect::<Vec<_>>() {
            current.push(e);
            self.paths_from(self.edges[e].1, current, acc);
            current.pop();
        }
    }

    /// Number of edges on the longest source-to-sink path.
    pub fn longest_path_edges(&self) -> usize {
        let mut best = vec![None::<usize>; self.n_vertices];
        best[self.sink] = Some(0);
        for &v in self.topo.iter().rev() {
            for e in self.out_edges(v) {
                if let Some(b) = best[self.edges[e].1] {
                    best[v] = Some(best[v].map_or(b + 1, |cur| cur.max(b + 1)));
                }
            }
        }
        best[self.source].unwrap_or(0)
    }

    pub fn path_indicator(&self, path: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_edges()];
        for &e in path {
            x[e] = 1.0;
        }
        x
    }

    /// Edge marginals of the uniform distribution over source-to-sink paths.
    /// Computed by path counting, without enumeration.
    pub fn uniform_path_marginals(&self) -> Vec<f64> {
        let n = self.n_vertices;
        let mut to_sink = vec![0.0f64; n];
        to_sink[self.sink] = 1.0;
        for &v in self.topo.iter().rev() {
            if v != self.sink {
                to_sink[v] = self.out_edges(v).map(|e| to_sink[self.edges[e].1]).sum();
            }
        }
        let mut from_source = vec![0.0f64; n];
        from_source[self.source] = 1.0;
        for &v in &self.topo {
            for e in self.out_edges(v) {
                from_source[self.edges[e].1] += from_source[v];
            }
        }
        let total = to_sink[self.source];
        self.edges
            .iter()
            .map(|&(t, h)| from_source[t] * to_sink[h] / total)
            .collect()
    }
}

/// Linear inequalities describing unit source-to-sink flows with edge
/// capacities in `[0, 1]`. Equalities are stored as inequality pairs.
#[derive(Debug, Clone)]
pub struct FlowPolytope {
    dag: Dag,
    constraints: Vec<LinearConstraint>,
    /// Rows `(a, b)` with `⟨a, x⟩ = b`: conservation at each internal vertex,
    /// then unit out-flow at the source.
    equalities: Vec<(Vec<f64>, f64)>,
}

pub fn build_flow_polytope(dag: &Dag) -> FlowPolytope {
    let m = dag.n_edges();
    let mut constraints = Vec::new();
    for e in 0..m {
        let mut up = vec![0.0; m];
        up[e] = 1.0;
        constraints.push(LinearConstraint::new(up, 1.0));
        let mut lo = vec![0.0; m];
        lo[e] = -1.0;
        constraints.push(LinearConstraint::new(lo, 0.0));
    }
    let mut equalities = Vec::new();
    for v in 0..dag.n_vertices() {
        if v == dag.source || v == dag.sink {
            continue;
        }
        let mut a = vec![0.0; m];
        let mut touched = false;
        for (e, &(t, h)) in dag.edges.iter().enumerate() {
            if h == v {
                a[e] += 1.0;
                touched = true;
            }
            if t == v {
                a[e] -= 1.0;
                touched = true;
            }
        }
        if touched {
            equalities.push((a, 0.0));
        }
    }
    let mut a = vec![0.0; m];
    for e in dag.out_edges(dag.source) {
        a[e] = 1.0;
    }
    equalities.push((a, 1.0));
    for (a, b) in &equalities {
        constraints.push(LinearConstraint::new(a.clone(), *b));
        constraints.push(LinearConstraint::new(a.iter().map(|v| -v).collect(), -b));
    }
    FlowPolytope { dag: dag.clone(), constraints, equalities }
}

impl FlowPolytope {
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn equalities(&self) -> &[(Vec<f64>, f64)] {
        &self.equalities
    }

    /// Whether `x` satisfies every inequality within `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.constraints.iter().all(|c| c.slack(x) >= -tol)
    }

    /// Reduced-coordinate barrier domain with a shortest-path vertex oracle.
    ///
    /// Capacity constraints that are constant on the affine hull (edges on
    /// every path) are dropped; the equality pairs are absorbed by the
    /// parameterization. Errors if only one path exists.
    pub fn reduce(&self) -> Result<(PolytopeDomain, Arc<FlowLift>)> {
        let lift = Arc::new(FlowLift::new(self)?);
        let mut reduced = Vec::new();
        for c in self.constraints.iter().take(2 * self.dag.n_edges()) {
            let a_z = lift.project_weights(&c.a);
            if a_z.iter().all(|v| v.abs() < 1e-12) {
                continue;
            }
            reduced.push(LinearConstraint::new(a_z, c.b - dot(&c.a, &lift.origin)));
        }
        let start = vec![0.0; lift.reduced_dim()];
        let domain = PolytopeDomain::new(reduced, &start, VertexOracle::Flow(lift.clone()))?;
        Ok((domain, lift))
    }
}

/// Affine map between reduced coordinates and edge flows.
#[derive(Debug, Clone)]
pub struct FlowLift {
    dag: Dag,
    /// Centroid of all path indicators; maps to `z = 0`.
    origin: Vec<f64>,
    /// Orthonormal null-space basis of the equality rows, one vector per
    /// reduced coordinate.
    basis: Vec<Vec<f64>>,
}

impl FlowLift {
    fn new(poly: &FlowPolytope) -> Result<Self> {
        let m = poly.dag.n_edges();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for (a, _) in &poly.equalities {
            for i in 0..m {
                for j in 0..m {
                    gram[(i, j)] += a[i] * a[j];
                }
            }
        }
        let eig = jacobi_eigen(&gram)?;
        let scale = eig.values.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let basis: Vec<Vec<f64>> = eig
            .values
            .iter()
            .zip(&eig.vectors)
            .filter(|(v, _)| v.abs() <= 1e-9 * scale)
            .map(|(_, vec)| vec.clone())
            .collect();
        if basis.is_empty() {
            return Err(Error::InvalidDomain("flow polytope is a single point (only one path)".into()));
        }
        Ok(Self { dag: poly.dag.clone(), origin: poly.dag.uniform_path_marginals(), basis })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn reduced_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// `x = origin + N z`.
    pub fn to_edge(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.origin.clone();
        for (zi, col) in z.iter().zip(&self.basis) {
            for (xe, ne) in x.iter_mut().zip(col) {
                *xe += zi * ne;
            }
        }
        x
    }

    /// `z = Nᵀ (x − origin)`.
    pub fn to_reduced(&self, x: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = x.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        self.basis.iter().map(|col| dot(col, &diff)).collect()
    }

    /// `Nᵀ w`: edge weights to reduced linear loss.
    pub fn project_weights(&self, w: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|col| dot(col, w)).collect()
    }

    /// `N l`: a reduced linear loss lifted to edge weights with
    /// `⟨N l, x⟩ = ⟨l, z⟩ + const` on the flow polytope.
    pub fn lift_weights(&self, l: &[f64]) -> Vec<f64> {
        self.to_edge(l).iter().zip(&self.origin).map(|(a, b)| a - b).collect()
    }

    /// Reduced coordinates of the shortest path under lifted weights.
    pub fn vertex_minimizer(&self, l: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.reduced_dim(), l.len())?;
        let path = dag_shortest_path(&self.dag, &self.lift_weights(l))?;
        Ok(self.to_reduced(&self.dag.path_indicator(&path)))
    }
}

/// Minimum-weight source-to-sink path by DP in reverse topological order.
/// Negative weights are allowed. Exact ties go to the lexicographically
/// smallest edge sequence.
pub fn dag_shortest_path(dag: &Dag, weights: &[f64]) -> Result<Vec<usize>> {
    check_dim(dag.n_edges(), weights.len())?;
    check_finite("edge weights", weights)?;
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; dag.n_vertices];
    best[dag.sink] = Some((0.0, Vec::new()));
    for &v in dag.topo.iter().rev() {
        if v == dag.sink {
            continue;
        }
        let mut choice: Option<(f64, Vec<usize>)> = None;
        for e in dag.out_edges(v) {
            let Some((cost, suffix)) = &best[dag.edges[e].1] else { continue };
            let total = weights[e] + cost;
            let better = match &choice {
                None => true,
                Some((c, seq)) => {
                    total < *c || (total == *c && std::iter::once(&e).chain(suffix.iter()).lt(seq.iter()))
                }
            };
            if better {
                let mut seq = Vec::with_capacity(suffix.len() + 1);
                seq.push(e);
                seq.extend_from_slice(suffix);
                choice = Some((total, seq));
            }
        }
        best[v] = choice;
    }
    best[dag.source]
        .take()
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Graph("no path from source to sink".into()))
}

/// Samples a path by walking from the source and taking each outgoing edge
/// with probability proportional to its flow. The walk's edge marginals equal
/// the flow.
pub fn flow_sample_path<R: Rng + ?Sized>(dag: &Dag, flow: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    check_dim(dag.n_edges(), flow.len())?;
    check_finite("flow", flow)?;
    let mut v = dag.source;
    let mut path = Vec::new();
    while v != dag.sink {
        let outs: Vec<usize> = dag.out_edges(v).collect();
        let mass: f64 = outs.iter().map(|&e| flow[e].max(0.0)).sum();
        if !(mass > 0.0) {
            return Err(Error::Graph(format!("vertex {v} has no outgoing flow")));
        }
        let u: f64 = rng.gen::<f64>() * mass;
        let mut acc = 0.0;
        let mut chosen = *outs.last().expect("nonempty");
        for &e in &outs {
            let w = flow[e].max(0.0);
            if w == 0.0 {
                continue;
            }
            acc += w;
            if u < acc {
                chosen = e;
                break;
            }
        }
        // guard against landing on a zero-flow trailing edge through rounding
        if flow[chosen] <= 0.0 {
            chosen = *outs.iter().rev().find(|&&e| flow[e] > 0.0).expect("mass > 0");
        }
        path.push(chosen);
        v = dag.edges[chosen].1;
    }
    Ok(path)
}

/// Exact edge marginals of [`flow_sample_path`]'s walk by forward
/// propagation of reach probabilities.
pub fn walk_edge_marginals(dag: &Dag, flow: &[f64]) -> Result<Vec<f64>> {
    check_dim(dag.n_edges(), flow.len())?;
    let mut reach = vec![0.0; dag.n_vertices];
    reach[dag.source] = 1.0;
    let mut marg = vec![0.0; dag.n_edges()];
    for &v in &dag.topo {
        if v == dag.sink || reach[v] == 0.0 {
            continue;
        }
        let outs: Vec<usize> = dag.out_edges(v).collect();
        let mass: f64 = outs.iter().map(|&e| flow[e].max(0.0)).sum();
        if !(mass > 0.0) {
            return Err(Error::Graph(format!("vertex {v} has no outgoing flow")));
        }
        for e in outs {
            let p = reach[v] * flow[e].max(0.0) / mass;
            marg[e] = p;
            reach[dag.edges[e].1] += p;
        }
    }
    Ok(marg)
}

pub fn path_weight(path: &[usize], weights: &[f64]) -> f64 {
    path.iter().map(|&e| weights[e]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn diamond() -> Dag {
        // u=0, a=1, b=2, v=3; edges u→a, u→b, a→v, b→v
        Dag::new(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)], 0, 3).unwrap()
    }

    #[test]
    fn rejects_cycles_and_missing_paths() {
        assert!(matches!(Dag::new(3, vec![(0, 1), (1, 2), (2, 1)], 0, 2), Err(Error::Graph(_))));
        assert!(Dag::new(3, vec![(0, 1)], 0, 2).is_err());
    }

    #[test]
    fn prunes_dead_edges() {
        let d = Dag::new(4, vec![(0, 1), (1, 3), (0, 2)], 0, 3).unwrap();
        assert_eq!(d.edges(), &[(0, 1), (1, 3)]);
        assert_eq!(d.kept_edges(), &[0, 1]);
    }

    #[test]
    fn flow_polytope_constraint_counts() {
        let par = Dag::new(2, vec![(0, 1), (0, 1)], 0, 1).unwrap();
        let fp = build_flow_polytope(&par);
        assert_eq!(fp.constraints().len(), 4 + 2);
        assert!(fp.contains(&[0.3, 0.7], 1e-12));
        assert!(!fp.contains(&[0.3, 0.6], 1e-12));

        let chain = Dag::new(3, vec![(0, 1), (1, 2)], 0, 2).unwrap();
        let fc = build_flow_polytope(&chain);
        assert!(fc.contains(&[1.0, 1.0], 1e-12));
        assert!(!fc.contains(&[1.0, 0.5], 1e-12));

        let fd = build_flow_polytope(&diamond());
        assert_eq!(fd.constraints().len(), 14);
        let d = diamond();
        assert!(fd.constraints().len() <= 2 * d.n_edges() + 2 * d.n_vertices());
    }

    #[test]
    fn shortest_path_examples() {
        let par = Dag::new(2, vec![(0, 1), (0, 1)], 0, 1).unwrap();
        assert_eq!(dag_shortest_path(&par, &[0.3, 0.7]).unwrap(), vec![0]);
        assert_eq!(dag_shortest_path(&par, &[0.5, 0.5]).unwrap(), vec![0]);
        let d = diamond();
        // path via b has a negative edge and lower total
        assert_eq!(dag_shortest_path(&d, &[0.5, 0.4, 0.1, -0.3]).unwrap(), vec![1, 3]);
        assert_eq!(dag_shortest_path(&d, &[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![0, 2]);
    }

    #[test]
    fn walk_sampling_examples() {
        let d = diamond();
        let flow = [0.4, 0.6, 0.4, 0.6];
        let marg = walk_edge_marginals(&d, &flow).unwrap();
        for (a, b) in marg.iter().zip(flow) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        let single = d.path_indicator(&[1, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(flow_sample_path(&d, &single, &mut rng).unwrap(), vec![1, 3]);
        }
        let par = Dag::new(2, vec![(0, 1), (0, 1)], 0, 1).unwrap();
        let n = 20_000;
        let hits = (0..n).filter(|_| flow_sample_path(&par, &[0.3, 0.7], &mut rng).unwrap() == vec![0]).count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.3).abs() < 4.0 * (0.3f64 * 0.7 / n as f64).sqrt());
    }

    #[test]
    fn zero_outflow_is_an_error() {
        let d = diamond();
        assert!(walk_edge_marginals(&d, &[0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_marginals_on_diamond() {
        assert_eq!(diamond().uniform_path_marginals(), vec![0.5; 4]);
        assert_eq!(diamond().longest_path_edges(), 2);
    }

    #[test]
    fn reduced_diamond_roundtrip() {
        let (dom, lift) = build_flow_polytope(&diamond()).reduce().unwrap();
        assert_eq!(lift.reduced_dim(), 1);
        assert_eq!(dom.dim(), 1);
        // analytic center maps back to the half/half flow
        let x = lift.to_edge(dom.center());
        for v in x {
            assert_relative_eq!(v, 0.5, epsilon = 1e-9);
        }
        let z = lift.to_reduced(&[1.0, 0.0, 1.0, 0.0]);
        let back = lift.to_edge(&z);
        assert_relative_eq!(back[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(back[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_path_graph_has_no_interior() {
        let chain = Dag::new(3, vec![(0, 1), (1, 2)], 0, 2).unwrap();
        assert!(matches!(build_flow_polytope(&chain).reduce(), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn dag_json_roundtrip() {
        let text = r#"{"vertices": 4, "edges": [[0,1],[0,2],[1,3],[2,3]], "source": 0, "sink": 3}"#;
        let d: Dag = serde_json::from_str(text).unwrap();
        assert_eq!(d, diamond());
        let cyclic = r#"{"vertices": 2, "edges": [[0,1],[1,0]], "source": 0, "sink": 1}"#;
        assert!(serde_json::from_str::<Dag>(cyclic).is_err());
    }
}
