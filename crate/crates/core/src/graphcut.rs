//! Exact max-flow/min-cut (shortest augmenting paths) and multi-label
//! alpha-expansion minimization of Potts energies.

use alloc::vec;
use alloc::vec::Vec;

use crate::energy::{total_energy, PairwiseWeights, UnaryTable};

/// Default cap on full expansion cycles.
pub const DEFAULT_MAX_CYCLES: usize = 10;

#[derive(Debug, Clone)]
struct Arc {
    to: u32,
    cap: f64,
}

/// A directed flow network with paired reverse arcs (arc `i`'s reverse is
/// `i ^ 1`). Capacities are finite nonnegative reals; hard constraints are
/// encoded as large finite values, never infinity.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    source: usize,
    sink: usize,
    adjacency: Vec<Vec<u32>>,
    arcs: Vec<Arc>,
    initial_caps: Vec<f64>,
}

/// Flow value and the source side of one minimum cut.
#[derive(Debug, Clone)]
pub struct MaxFlowResult {
    pub flow: f64,
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Self {
        assert!(source < node_count && sink < node_count && source != sink);
        Self {
            source,
            sink,
            adjacency: vec![Vec::new(); node_count],
            arcs: Vec::new(),
            initial_caps: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Adds a directed arc and its zero-capacity reverse.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) {
        self.add_pair(from, to, capacity, 0.0);
    }

    /// Adds an undirected edge: full capacity in both directions.
    pub fn add_edge(&mut self, a: usize, b: usize, capacity: f64) {
        self.add_pair(a, b, capacity, capacity);
    }

    fn add_pair(&mut self, from: usize, to: usize, cap_fwd: f64, cap_rev: f64) {
        assert!(
            cap_fwd.is_finite() && cap_fwd >= 0.0,
            "capacity must be finite and nonnegative"
        );
        assert!(
            cap_rev.is_finite() && cap_rev >= 0.0,
            "capacity must be finite and nonnegative"
        );
        let id = self.arcs.len() as u32;
        self.arcs.push(Arc {
            to: to as u32,
            cap: cap_fwd,
        });
        self.arcs.push(Arc {
            to: from as u32,
            cap: cap_rev,
        });
        self.initial_caps.push(cap_fwd);
        self.initial_caps.push(cap_rev);
        self.adjacency[from].push(id);
        self.adjacency[to].push(id + 1);
    }

    /// Runs Edmonds–Karp to completion. The returned source side is the set
    /// of nodes reachable from the source in the final residual graph, which
    /// is the minimal minimum cut; deterministic given arc insertion order.
    pub fn max_flow(&mut self) -> MaxFlowResult {
        let n = self.node_count();
        let mut flow = 0.0;
        let mut parent_arc = vec![u32::MAX; n];
        let mut visited = vec![false; n];
        let mut queue = Vec::with_capacity(n);
        loop {
            visited.iter_mut().for_each(|v| *v = false);
            queue.clear();
            queue.push(self.source as u32);
            visited[self.source] = true;
            let mut head = 0;
            while head < queue.len() && !visited[self.sink] {
                let u = queue[head] as usize;
                head += 1;
                for &arc_id in &self.adjacency[u] {
                    let arc = &self.arcs[arc_id as usize];
                    let to = arc.to as usize;
                    if arc.cap > 0.0 && !visited[to] {
                        visited[to] = true;
                        parent_arc[to] = arc_id;
                        queue.push(to as u32);
                    }
                }
            }
            if !visited[self.sink] {
                return MaxFlowResult {
                    flow,
                    source_side: visited,
                };
            }
            // bottleneck along the path, then augment
            let mut bottleneck = f64::INFINITY;
            let mut node = self.sink;
            while node != self.source {
                let arc_id = parent_arc[node] as usize;
                bottleneck = bottleneck.min(self.arcs[arc_id].cap);
                node = self.arcs[arc_id ^ 1].to as usize;
            }
            let mut node = self.sink;
            while node != self.source {
                let arc_id = parent_arc[node] as usize;
                self.arcs[arc_id].cap -= bottleneck;
                self.arcs[arc_id ^ 1].cap += bottleneck;
                node = self.arcs[arc_id ^ 1].to as usize;
            }
            flow += bottleneck;
        }
    }

    /// Net flow leaving `node` (pushed minus received); zero at every
    /// non-terminal node once `max_flow` has run.
    pub fn net_outflow(&self, node: usize) -> f64 {
        let mut net = 0.0;
        for &arc_id in &self.adjacency[node] {
            let i = arc_id as usize;
            net += self.initial_caps[i] - self.arcs[i].cap;
        }
        net
    }

    /// Total initial capacity of arcs crossing from `side` to its complement.
    pub fn cut_capacity(&self, side: &[bool]) -> f64 {
        let mut total = 0.0;
        for (from, arc_ids) in self.adjacency.iter().enumerate() {
            if !side[from] {
                continue;
            }
            for &arc_id in arc_ids {
                let i = arc_id as usize;
                // only arcs originating here, not the reverse stubs of
                // arcs pointing at `from`
                if i.is_multiple_of(2) || self.initial_caps[i] > 0.0 {
                    let to = self.arcs[i].to as usize;
                    if !side[to] {
                        total += self.initial_caps[i];
                    }
                }
            }
        }
        total
    }
}

/// A full region-to-label assignment with its energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub labels: Vec<usize>,
    pub energy: f64,
}

impl Labeling {
    pub fn from_labels(labels: Vec<usize>, unary: &UnaryTable, pairwise: &PairwiseWeights) -> Self {
        let energy = total_energy(&labels, unary, pairwise);
        Self { labels, energy }
    }
}

/// The optimal single-alpha expansion move: every region either keeps its
/// label or switches to `alpha`, chosen by an exact binary min-cut.
///
/// Node convention: a region on the cut's source side takes `alpha`, on the
/// sink side it keeps its label. Edges whose endpoints currently disagree
/// get an auxiliary node carrying the disagreement cost. Using the minimal
/// source side means regions indifferent between the two choices keep
/// their current label.
pub fn expansion_move(
    current: &Labeling,
    alpha: usize,
    unary: &UnaryTable,
    pairwise: &PairwiseWeights,
) -> Labeling {
    let n = unary.region_count();
    assert_eq!(current.labels.len(), n);
    assert!(alpha < unary.label_count());

    let disagree: Vec<usize> = pairwise
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            let (la, lb) = (current.labels[e.a], current.labels[e.b]);
            pairwise.lambda * e.weight > 0.0 && la != lb && la != alpha && lb != alpha
        })
        .map(|(i, _)| i)
        .collect();

    let aux_base = n;
    let source = n + disagree.len();
    let sink = source + 1;
    let mut network = FlowNetwork::new(sink + 1, source, sink);

    // t-links: cap(s->p) pays when p keeps, cap(p->t) pays when p takes alpha
    let mut keep_cost: Vec<f64> = (0..n).map(|r| unary.cost(r, current.labels[r])).collect();
    let take_cost: Vec<f64> = (0..n).map(|r| unary.cost(r, alpha)).collect();

    let mut plain_edges: Vec<(usize, usize, f64)> = Vec::new();
    for edge in &pairwise.edges {
        let w = pairwise.lambda * edge.weight;
        if w <= 0.0 {
            continue;
        }
        let (la, lb) = (current.labels[edge.a], current.labels[edge.b]);
        match (la == alpha, lb == alpha) {
            (true, true) => {}
            (true, false) => keep_cost[edge.b] += w,
            (false, true) => keep_cost[edge.a] += w,
            (false, false) => {
                if la == lb {
                    plain_edges.push((edge.a, edge.b, w));
                }
                // disagreeing edges handled below via auxiliary nodes
            }
        }
    }

    for r in 0..n {
        network.add_arc(source, r, keep_cost[r]);
        network.add_arc(r, sink, take_cost[r]);
    }
    for (a, b, w) in plain_edges {
        network.add_edge(a, b, w);
    }
    for (aux_index, &edge_index) in disagree.iter().enumerate() {
        let edge = &pairwise.edges[edge_index];
        let w = pairwise.lambda * edge.weight;
        let aux = aux_base + aux_index;
        network.add_edge(edge.a, aux, w);
        network.add_edge(aux, edge.b, w);
        network.add_arc(source, aux, w);
    }

    let result = network.max_flow();
    let labels: Vec<usize> = (0..n)
        .map(|r| {
            if result.source_side[r] {
                alpha
            } else {
                current.labels[r]
            }
        })
        .collect();
    Labeling::from_labels(labels, unary, pairwise)
}

/// Cycles expansion moves over labels `0..=K` until a full cycle brings no
/// energy decrease (or `max_cycles` is hit). Starts from the per-region
/// unary argmin when no initial labeling is given. Moves are accepted only
/// on strict decrease, so equal-energy alternatives never displace the
/// current labeling and rerunning on the result returns it unchanged.
pub fn alpha_expansion(
    unary: &UnaryTable,
    pairwise: &PairwiseWeights,
    initial: Option<&[usize]>,
    max_cycles: usize,
) -> Labeling {
    let labels = match initial {
        Some(l) => l.to_vec(),
        None => unary.argmin_labeling(),
    };
    let mut current = Labeling::from_labels(labels, unary, pairwise);
    for _ in 0..max_cycles {
        let mut improved = false;
        for alpha in 0..unary.label_count() {
            let candidate = expansion_move(&current, alpha, unary, pairwise);
            debug_assert!(
                candidate.energy <= current.energy * (1.0 + 1e-9) + 1e-9,
                "expansion move increased energy"
            );
            if candidate.energy < current.energy {
                current = candidate;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::PairEdge;

    #[test]
    fn single_arc_flow() {
        let mut network = FlowNetwork::new(2, 0, 1);
        network.add_arc(0, 1, 3.0);
        let result = network.max_flow();
        assert_eq!(result.flow, 3.0);
        assert_eq!(result.source_side, vec![true, false]);
    }

    #[test]
    fn diamond_flow_is_five() {
        // s=0, a=1, b=2, t=3
        let mut network = FlowNetwork::new(4, 0, 3);
        network.add_arc(0, 1, 3.0);
        network.add_arc(0, 2, 2.0);
        network.add_arc(1, 3, 2.0);
        network.add_arc(2, 3, 3.0);
        network.add_arc(1, 2, 1.0);
        let result = network.max_flow();
        assert!((result.flow - 5.0).abs() < 1e-12);
        // strong duality: flow equals the returned cut's capacity
        assert!((network.cut_capacity(&result.source_side) - result.flow).abs() < 1e-12);
        // conservation at the non-terminals
        assert!(network.net_outflow(1).abs() < 1e-12);
        assert!(network.net_outflow(2).abs() < 1e-12);
    }

    #[test]
    fn disconnected_sink_gives_zero_flow() {
        let mut network = FlowNetwork::new(3, 0, 2);
        network.add_arc(0, 1, 5.0);
        let result = network.max_flow();
        assert_eq!(result.flow, 0.0);
        assert!(result.source_side[0] && result.source_side[1] && !result.source_side[2]);
    }

    fn chain_problem() -> (UnaryTable, PairwiseWeights) {
        let costs = vec![0.0, 2.0, 1.5, 3.0, 0.2, 0.6, 0.1, 4.0, 0.3];
        let unary = UnaryTable::from_costs(3, costs);
        let pairwise = PairwiseWeights {
            edges: vec![
                PairEdge {
                    a: 0,
                    b: 1,
                    weight: 0.9,
                },
                PairEdge {
                    a: 1,
                    b: 2,
                    weight: 1.4,
                },
            ],
            lambda: 1.0,
        };
        (unary, pairwise)
    }

    #[test]
    fn expansion_on_all_alpha_is_identity() {
        let (unary, pairwise) = chain_problem();
        let current = Labeling::from_labels(vec![1, 1, 1], &unary, &pairwise);
        let moved = expansion_move(&current, 1, &unary, &pairwise);
        assert_eq!(moved.labels, current.labels);
        assert_eq!(moved.energy, current.energy);
    }

    #[test]
    fn zero_pairwise_move_decomposes_per_region() {
        let (unary, _) = chain_problem();
        let pairwise = PairwiseWeights::none();
        let current = Labeling::from_labels(vec![1, 1, 1], &unary, &pairwise);
        let moved = expansion_move(&current, 0, &unary, &pairwise);
        // each region takes min(cost(current), cost(alpha)) independently
        assert_eq!(moved.labels, vec![0, 1, 0]);
    }

    #[test]
    fn expansion_move_matches_exhaustive_binary_search() {
        let (unary, pairwise) = chain_problem();
        let current = Labeling::from_labels(vec![1, 2, 0], &unary, &pairwise);
        for alpha in 0..3 {
            let moved = expansion_move(&current, alpha, &unary, &pairwise);
            let mut best = f64::INFINITY;
            for mask in 0..8u32 {
                let labels: Vec<usize> = (0..3)
                    .map(|r| {
                        if mask & (1 << r) != 0 {
                            alpha
                        } else {
                            current.labels[r]
                        }
                    })
                    .collect();
                best = best.min(total_energy(&labels, &unary, &pairwise));
            }
            assert!(
                (moved.energy - best).abs() < 1e-9,
                "alpha {alpha}: move {} vs exhaustive {best}",
                moved.energy
            );
        }
    }

    #[test]
    fn zero_pairwise_expansion_is_argmin() {
        let (unary, _) = chain_problem();
        let result = alpha_expansion(&unary, &PairwiseWeights::none(), None, DEFAULT_MAX_CYCLES);
        assert_eq!(result.labels, unary.argmin_labeling());
    }

    #[test]
    fn hard_constrained_regions_settle_on_their_labels() {
        // three regions hard-forced to (1, 1, 1): expansion satisfies every
        // constraint and, with uniform labels, pays nothing
        let large = 1e7;
        let mut costs = vec![large; 9];
        for region in 0..3 {
            costs[region * 3 + 1] = 0.0;
        }
        let unary = UnaryTable::from_costs(3, costs);
        let pairwise = PairwiseWeights {
            edges: vec![
                PairEdge {
                    a: 0,
                    b: 1,
                    weight: 1.0,
                },
                PairEdge {
                    a: 1,
                    b: 2,
                    weight: 1.0,
                },
            ],
            lambda: 1.0,
        };
        let result = alpha_expansion(&unary, &pairwise, None, DEFAULT_MAX_CYCLES);
        assert_eq!(result.labels, vec![1, 1, 1]);
        assert_eq!(result.energy, 0.0);

        // mixed constraints: the cut honors each one and pays only the
        // boundary
        let mut costs = vec![large; 9];
        costs[1] = 0.0; // region 0 -> label 1
        costs[3 + 2] = 0.0; // region 1 -> label 2
        costs[6 + 2] = 0.0; // region 2 -> label 2
        let unary = UnaryTable::from_costs(3, costs);
        let result = alpha_expansion(&unary, &pairwise, None, DEFAULT_MAX_CYCLES);
        assert_eq!(result.labels, vec![1, 2, 2]);
        assert_eq!(result.energy, 1.0);
    }

    #[test]
    fn expansion_is_idempotent() {
        let (unary, pairwise) = chain_problem();
        let first = alpha_expansion(&unary, &pairwise, None, DEFAULT_MAX_CYCLES);
        let second = alpha_expansion(&unary, &pairwise, Some(&first.labels), DEFAULT_MAX_CYCLES);
        assert_eq!(first, second);
    }
}
