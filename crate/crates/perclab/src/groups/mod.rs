//! Group contexts: marked groups and explicit graphs under one interface.
//!
//! A context provides the group law (where one exists), word lengths with
//! respect to the fixed symmetric generating set, ball/annulus enumeration,
//! and neighbor iteration on the Cayley or explicit graph. Kinds:
//!
//! - `zd:<d>`     lattice Z^d, generators +-e_i, word length = l1 norm
//! - `free:<k>`   free group F_k, 2k letter generators, reduced word length
//! - `heis`       discrete Heisenberg group, generators x^(+-1), y^(+-1)
//! - `lamp`       lamplighter Z/2 wr Z, generators {toggle, shift, shift^-1}
//! - `canopy:<D>` truncated canopy tree: spine x_0..x_D with a depth-i binary
//!                tree hanging at x_i; vertices are addressed lazily so deep
//!                truncations never materialize. Graph mode (no group law).
//! - `graph:<p>`  explicit undirected edge list (`u v` per line), root 0.
//!                Graph mode (no group law).
//!
//! Word lengths for the lattice, free and canopy kinds are closed-form; the
//! Heisenberg and lamplighter metrics come from a cached breadth-first table
//! that grows on demand and is shared across clones of the context.

mod element;

pub use element::{Coords, GroupElement, Lamps, Word};

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Default cap on enumerated elements (balls, metric tables).
pub const DEFAULT_ELEMENT_CAP: usize = 50_000_000;

#[derive(Debug)]
enum Kind {
    Lattice {
        d: usize,
    },
    Free {
        k: usize,
    },
    Heisenberg,
    Lamplighter,
    Canopy {
        depth: u16,
    },
    EdgeList {
        adjacency: Vec<Vec<u32>>,
        dist: Arc<Vec<Option<u32>>>,
    },
}

struct MetricCache {
    dist: HashMap<GroupElement, u32>,
    radius: u32,
    frontier: Vec<GroupElement>,
    sphere_sizes: Vec<u64>,
    snapshot: Option<(u32, Arc<HashMap<GroupElement, u32>>)>,
}

struct Inner {
    kind: Kind,
    spec: String,
    element_cap: usize,
    gens: Vec<GroupElement>,
    metric: Mutex<MetricCache>,
}

/// Cheap to clone; clones share caches.
#[derive(Clone)]
pub struct GroupContext {
    inner: Arc<Inner>,
}

impl fmt::Display for GroupContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.inner.spec)
    }
}

impl fmt::Debug for GroupContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupContext({})", self.inner.spec)
    }
}

impl PartialEq for GroupContext {
    fn eq(&self, other: &Self) -> bool {
        self.inner.spec == other.inner.spec
    }
}
impl Eq for GroupContext {}

/// A ball of a given radius: elements paired with their word lengths, sorted
/// by (length, canonical order), plus per-radius sphere sizes (index = radius,
/// padded with zeros if the graph is exhausted early).
#[derive(Clone, Debug)]
pub struct Ball {
    pub radius: u32,
    pub elements: Vec<(GroupElement, u32)>,
    pub sphere_sizes: Vec<u64>,
}

impl Ball {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter_elements(&self) -> impl Iterator<Item = &GroupElement> {
        self.elements.iter().map(|(g, _)| g)
    }
}

/// Lock-free word-length queries bounded by a radius, for hot loops.
#[derive(Clone)]
pub enum MetricView {
    ClosedForm,
    Table {
        dist: Arc<HashMap<GroupElement, u32>>,
        radius: u32,
    },
    EdgeDist(Arc<Vec<Option<u32>>>),
}

impl MetricView {
    /// `Some(len)` when the word length is `<= limit`, else `None`.
    pub fn length_at_most(&self, g: &GroupElement, limit: u32) -> Option<u32> {
        match self {
            MetricView::ClosedForm => {
                let l = closed_word_length(g);
                (l <= limit).then_some(l)
            }
            MetricView::Table { dist, radius } => {
                debug_assert!(*radius >= limit);
                match dist.get(g) {
                    Some(&d) if d <= limit => Some(d),
                    _ => None,
                }
            }
            MetricView::EdgeDist(dist) => match g {
                GroupElement::Vertex(v) => match dist.get(*v as usize).copied().flatten() {
                    Some(d) if d <= limit => Some(d),
                    _ => None,
                },
                _ => panic!("edge-list metric queried with a non-vertex element"),
            },
        }
    }
}

fn closed_word_length(g: &GroupElement) -> u32 {
    match g {
        GroupElement::Lattice(c) => {
            let s: u64 = c.iter().map(|x| x.unsigned_abs()).sum();
            u32::try_from(s).expect("word length overflow")
        }
        GroupElement::Free(w) => w.len() as u32,
        GroupElement::Canopy { spine, node } => *spine as u32 + node.ilog2(),
        _ => panic!("no closed-form word length for this kind"),
    }
}

fn parse_int<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(format!("bad {what}: {s:?}")))
}

impl GroupContext {
    fn build(kind: Kind, spec: String) -> Self {
        let gens = generators_of(&kind);
        let identity = identity_of(&kind);
        let mut dist = HashMap::new();
        dist.insert(identity.clone(), 0);
        GroupContext {
            inner: Arc::new(Inner {
                kind,
                spec,
                element_cap: DEFAULT_ELEMENT_CAP,
                gens,
                metric: Mutex::new(MetricCache {
                    dist,
                    radius: 0,
                    frontier: vec![identity],
                    sphere_sizes: vec![1],
                    snapshot: None,
                }),
            }),
        }
    }

    /// Parse a context spec: `zd:<d>`, `free:<k>`, `heis`, `lamp`,
    /// `canopy:<D>`, `graph:<edge list path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(d) = spec.strip_prefix("zd:") {
            let d: usize = parse_int(d, "lattice dimension")?;
            if d == 0 || d > 16 {
                return Err(Error::usage("lattice dimension must be in 1..=16"));
            }
            Ok(Self::build(Kind::Lattice { d }, format!("zd:{d}")))
        } else if let Some(k) = spec.strip_prefix("free:") {
            let k: usize = parse_int(k, "free rank")?;
            if k == 0 || k > 26 {
                return Err(Error::usage("free rank must be in 1..=26"));
            }
            Ok(Self::build(Kind::Free { k }, format!("free:{k}")))
        } else if spec == "heis" {
            Ok(Self::build(Kind::Heisenberg, "heis".into()))
        } else if spec == "lamp" {
            Ok(Self::build(Kind::Lamplighter, "lamp".into()))
        } else if let Some(d) = spec.strip_prefix("canopy:") {
            let depth: u16 = parse_int(d, "canopy depth")?;
            if depth > 62 {
                return Err(Error::usage("canopy depth must be <= 62"));
            }
            Ok(Self::build(
                Kind::Canopy { depth },
                format!("canopy:{depth}"),
            ))
        } else if let Some(path) = spec.strip_prefix("graph:") {
            let text = std::fs::read_to_string(path)?;
            Self::from_edge_list_text(spec, &text)
        } else {
            Err(Error::usage(format!(
                "unknown group spec {spec:?} (expected zd:<d>, free:<k>, heis, lamp, canopy:<D>, graph:<path>)"
            )))
        }
    }

    /// Build an explicit-graph context from `u v` edge lines. Vertex ids are
    /// dense from 0; the root (identity, percolation origin) is vertex 0.
    pub fn from_edge_list_text(spec: &str, text: &str) -> Result<Self> {
        let mut edges: Vec<(u32, u32)> = Vec::new();
        let mut max_id = 0u32;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let u: u32 = parse_int(it.next().unwrap_or(""), "vertex id")
                .map_err(|_| Error::parse(format!("edge list line {}: {line:?}", lineno + 1)))?;
            let v: u32 = parse_int(it.next().unwrap_or(""), "vertex id")
                .map_err(|_| Error::parse(format!("edge list line {}: {line:?}", lineno + 1)))?;
            if it.next().is_some() {
                return Err(Error::parse(format!(
                    "edge list line {}: expected `u v`",
                    lineno + 1
                )));
            }
            if u == v {
                return Err(Error::parse(format!(
                    "edge list line {}: self-loop",
                    lineno + 1
                )));
            }
            max_id = max_id.max(u).max(v);
            edges.push((u, v));
        }
        if edges.is_empty() {
            return Err(Error::parse("edge list has no edges"));
        }
        let n = max_id as usize + 1;
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        // BFS distances from the root.
        let mut dist = vec![None; n];
        dist[0] = Some(0);
        let mut queue = std::collections::VecDeque::from([0u32]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v as usize].unwrap();
            for &w in &adjacency[v as usize] {
                if dist[w as usize].is_none() {
                    dist[w as usize] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(Self::build(
            Kind::EdgeList {
                adjacency,
                dist: Arc::new(dist),
            },
            spec.to_string(),
        ))
    }

    pub fn spec(&self) -> &str {
        &self.inner.spec
    }

    pub fn element_cap(&self) -> usize {
        self.inner.element_cap
    }

    /// Same context with a different element cap (fresh caches).
    pub fn with_element_cap(&self, cap: usize) -> Self {
        let mut ctx = match &self.inner.kind {
            Kind::Lattice { d } => Self::build(Kind::Lattice { d: *d }, self.inner.spec.clone()),
            Kind::Free { k } => Self::build(Kind::Free { k: *k }, self.inner.spec.clone()),
            Kind::Heisenberg => Self::build(Kind::Heisenberg, self.inner.spec.clone()),
            Kind::Lamplighter => Self::build(Kind::Lamplighter, self.inner.spec.clone()),
            Kind::Canopy { depth } => {
                Self::build(Kind::Canopy { depth: *depth }, self.inner.spec.clone())
            }
            Kind::EdgeList { adjacency, dist } => Self::build(
                Kind::EdgeList {
                    adjacency: adjacency.clone(),
                    dist: dist.clone(),
                },
                self.inner.spec.clone(),
            ),
        };
        Arc::get_mut(&mut ctx.inner).unwrap().element_cap = cap;
        ctx
    }

    /// Graph-mode contexts (canopy, edge lists) have no group law.
    pub fn is_graph(&self) -> bool {
        matches!(self.inner.kind, Kind::Canopy { .. } | Kind::EdgeList { .. })
    }

    /// Rank-one lattice? (Relevant to the cut certificate.)
    pub fn is_line(&self) -> bool {
        matches!(self.inner.kind, Kind::Lattice { d: 1 })
    }

    pub fn is_canopy(&self) -> bool {
        matches!(self.inner.kind, Kind::Canopy { .. })
    }

    /// The rank when this is a free group, else None.
    pub fn free_rank(&self) -> Option<usize> {
        match self.inner.kind {
            Kind::Free { k } => Some(k),
            _ => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        identity_of(&self.inner.kind)
    }

    /// The fixed symmetric generating set, in canonical order. Usage error on
    /// graph-mode contexts.
    pub fn generators(&self) -> Result<Vec<GroupElement>> {
        if self.is_graph() {
            return Err(Error::usage(format!(
                "{} is a graph-mode context with no generating set",
                self.inner.spec
            )));
        }
        Ok(self.inner.gens.clone())
    }

    /// Vertex degree of the Cayley graph, or the maximum degree for explicit
    /// graphs.
    pub fn max_degree(&self) -> usize {
        match &self.inner.kind {
            Kind::EdgeList { adjacency, .. } => {
                adjacency.iter().map(|a| a.len()).max().unwrap_or(0)
            }
            Kind::Canopy { depth } => match depth {
                0 => 0,
                1 => 3,
                _ => 4,
            },
            _ => self.inner.gens.len(),
        }
    }

    pub fn mul(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        match (&self.inner.kind, g, h) {
            (Kind::Lattice { d }, GroupElement::Lattice(a), GroupElement::Lattice(b)) => {
                assert!(
                    a.len() == *d && b.len() == *d,
                    "element from a different lattice context"
                );
                GroupElement::Lattice(a.iter().zip(b.iter()).map(|(x, y)| x + y).collect())
            }
            (Kind::Free { .. }, GroupElement::Free(a), GroupElement::Free(b)) => {
                let mut w = a.clone();
                for &l in b {
                    if w.last() == Some(&-l) {
                        w.pop();
                    } else {
                        w.push(l);
                    }
                }
                GroupElement::Free(w)
            }
            (
                Kind::Heisenberg,
                GroupElement::Heisenberg {
                    a: a1,
                    b: b1,
                    c: c1,
                },
                GroupElement::Heisenberg {
                    a: a2,
                    b: b2,
                    c: c2,
                },
            ) => GroupElement::Heisenberg {
                a: a1 + a2,
                b: b1 + b2,
                c: c1 + c2 + a1 * b2,
            },
            (
                Kind::Lamplighter,
                GroupElement::Lamplighter {
                    head: h1,
                    lamps: l1,
                },
                GroupElement::Lamplighter {
                    head: h2,
                    lamps: l2,
                },
            ) => {
                // (f, m)(g, n) = (f xor shift_m(g), m + n), lamps as sorted positions.
                let mut lamps = Lamps::new();
                let mut i = 0;
                let mut j = 0;
                while i < l1.len() || j < l2.len() {
                    let x = l1.get(i).copied();
                    let y = l2.get(j).map(|p| p + h1);
                    match (x, y) {
                        (Some(a), Some(b)) if a == b => {
                            i += 1;
                            j += 1;
                        }
                        (Some(a), Some(b)) if a < b => {
                            lamps.push(a);
                            i += 1;
                        }
                        (Some(_), Some(b)) => {
                            lamps.push(b);
                            j += 1;
                        }
                        (Some(a), None) => {
                            lamps.push(a);
                            i += 1;
                        }
                        (None, Some(b)) => {
                            lamps.push(b);
                            j += 1;
                        }
                        (None, None) => unreachable!(),
                    }
                }
                GroupElement::Lamplighter {
                    head: h1 + h2,
                    lamps,
                }
            }
            _ => panic!(
                "mul is a group-law operation; context {} / elements {g}, {h} do not match",
                self.inner.spec
            ),
        }
    }

    pub fn inv(&self, g: &GroupElement) -> GroupElement {
        match (&self.inner.kind, g) {
            (Kind::Lattice { .. }, GroupElement::Lattice(a)) => {
                GroupElement::Lattice(a.iter().map(|x| -x).collect())
            }
            (Kind::Free { .. }, GroupElement::Free(w)) => {
                GroupElement::Free(w.iter().rev().map(|l| -l).collect())
            }
            (Kind::Heisenberg, GroupElement::Heisenberg { a, b, c }) => GroupElement::Heisenberg {
                a: -a,
                b: -b,
                c: a * b - c,
            },
            (Kind::Lamplighter, GroupElement::Lamplighter { head, lamps }) => {
                let mut shifted: Lamps = lamps.iter().map(|p| p - head).collect();
                shifted.sort_unstable();
                GroupElement::Lamplighter {
                    head: -head,
                    lamps: shifted,
                }
            }
            _ => panic!(
                "inv is a group-law operation; context {} / element {g} do not match",
                self.inner.spec
            ),
        }
    }

    /// g^-1 h: the increment whose measure weight drives the pair {g, h}.
    pub fn difference(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        self.mul(&self.inv(g), h)
    }

    /// Neighbors on the Cayley graph (right multiplication by generators, in
    /// generator order) or the explicit graph.
    pub fn neighbors(&self, g: &GroupElement) -> Vec<GroupElement> {
        match (&self.inner.kind, g) {
            (Kind::Canopy { depth }, GroupElement::Canopy { spine, node }) => {
                let mut out = Vec::with_capacity(4);
                if *node == 1 {
                    if *spine > 0 {
                        out.push(GroupElement::Canopy {
                            spine: spine - 1,
                            node: 1,
                        });
                    }
                    if spine < depth {
                        out.push(GroupElement::Canopy {
                            spine: spine + 1,
                            node: 1,
                        });
                    }
                    if *spine >= 1 {
                        out.push(GroupElement::Canopy {
                            spine: *spine,
                            node: 2,
                        });
                        out.push(GroupElement::Canopy {
                            spine: *spine,
                            node: 3,
                        });
                    }
                } else {
                    out.push(GroupElement::Canopy {
                        spine: *spine,
                        node: node >> 1,
                    });
                    if node.ilog2() + 1 <= *spine as u32 {
                        out.push(GroupElement::Canopy {
                            spine: *spine,
                            node: node << 1,
                        });
                        out.push(GroupElement::Canopy {
                            spine: *spine,
                            node: (node << 1) | 1,
                        });
                    }
                }
                out
            }
            (Kind::EdgeList { adjacency, .. }, GroupElement::Vertex(v)) => adjacency[*v as usize]
                .iter()
                .map(|&w| GroupElement::Vertex(w as u64))
                .collect(),
            _ => self.inner.gens.iter().map(|s| self.mul(g, s)).collect(),
        }
    }

    /// Exact word length. Grows the metric cache as needed for the Heisenberg
    /// and lamplighter kinds; panics if that would exceed the element cap
    /// (use `metric_view` + `length_at_most` for bounded queries).
    pub fn word_length(&self, g: &GroupElement) -> u32 {
        match &self.inner.kind {
            Kind::Lattice { .. } | Kind::Free { .. } | Kind::Canopy { .. } => closed_word_length(g),
            Kind::EdgeList { dist, .. } => match g {
                GroupElement::Vertex(v) => dist[*v as usize]
                    .unwrap_or_else(|| panic!("vertex {v} is not reachable from the root")),
                _ => panic!("edge-list context got a non-vertex element"),
            },
            Kind::Heisenberg | Kind::Lamplighter => {
                let mut cache = self.inner.metric.lock().unwrap();
                while !cache.dist.contains_key(g) {
                    self.grow_metric(&mut cache)
                        .expect("metric table hit the element cap");
                }
                cache.dist[g]
            }
        }
    }

    /// `Some(len)` if `|g| <= limit`, else `None`. Convenience wrapper; hot
    /// loops should hold a `MetricView` instead.
    pub fn word_length_at_most(&self, g: &GroupElement, limit: u32) -> Option<u32> {
        self.metric_view(limit)
            .expect("metric table hit the element cap")
            .length_at_most(g, limit)
    }

    /// A lock-free snapshot answering `length_at_most(_, limit)` queries.
    pub fn metric_view(&self, limit: u32) -> Result<MetricView> {
        match &self.inner.kind {
            Kind::Lattice { .. } | Kind::Free { .. } | Kind::Canopy { .. } => {
                Ok(MetricView::ClosedForm)
            }
            Kind::EdgeList { dist, .. } => Ok(MetricView::EdgeDist(dist.clone())),
            Kind::Heisenberg | Kind::Lamplighter => {
                let mut cache = self.inner.metric.lock().unwrap();
                while cache.radius < limit {
                    self.grow_metric(&mut cache)?;
                }
                if cache.snapshot.as_ref().map(|(r, _)| *r) != Some(cache.radius) {
                    cache.snapshot = Some((cache.radius, Arc::new(cache.dist.clone())));
                }
                Ok(MetricView::Table {
                    dist: cache.snapshot.as_ref().unwrap().1.clone(),
                    radius: cache.radius,
                })
            }
        }
    }

    fn grow_metric(&self, cache: &mut MetricCache) -> Result<()> {
        let mut next = Vec::new();
        let r = cache.radius + 1;
        for v in std::mem::take(&mut cache.frontier) {
            for w in self.neighbors(&v) {
                if !cache.dist.contains_key(&w) {
                    if cache.dist.len() >= self.inner.element_cap {
                        return Err(Error::CapExceeded {
                            cap: self.inner.element_cap,
                            partial_spheres: cache.sphere_sizes.clone(),
                        });
                    }
                    cache.dist.insert(w.clone(), r);
                    next.push(w);
                }
            }
        }
        cache.sphere_sizes.push(next.len() as u64);
        cache.frontier = next;
        cache.radius = r;
        Ok(())
    }

    /// The ball of radius n around the identity/root, enumerated exactly.
    pub fn ball(&self, n: u32) -> Result<Ball> {
        let cap = self.inner.element_cap;
        let mut dist: HashMap<GroupElement, u32> = HashMap::new();
        let root = self.identity();
        dist.insert(root.clone(), 0);
        let mut sphere_sizes: Vec<u64> = vec![1];
        let mut frontier = vec![root];
        for r in 1..=n {
            let mut next = Vec::new();
            for v in &frontier {
                for w in self.neighbors(v) {
                    if !dist.contains_key(&w) {
                        if dist.len() >= cap {
                            return Err(Error::CapExceeded {
                                cap,
                                partial_spheres: sphere_sizes,
                            });
                        }
                        dist.insert(w.clone(), r);
                        next.push(w);
                    }
                }
            }
            sphere_sizes.push(next.len() as u64);
            frontier = next;
            if frontier.is_empty() {
                // Graph exhausted; pad remaining spheres with zeros.
                sphere_sizes.resize(n as usize + 1, 0);
                break;
            }
        }
        let mut elements: Vec<(GroupElement, u32)> = dist.into_iter().collect();
        elements.sort_unstable_by(|(g1, l1), (g2, l2)| l1.cmp(l2).then_with(|| g1.cmp(g2)));
        Ok(Ball {
            radius: n,
            elements,
            sphere_sizes,
        })
    }

    /// Doubling annuli: A_0 = B(M), A_i = B(M 2^i) \ B(M 2^(i-1)).
    pub fn annuli(&self, m: u32, i_max: u32) -> Result<Vec<Vec<GroupElement>>> {
        if m == 0 {
            return Err(Error::usage("annulus base radius must be >= 1"));
        }
        if i_max > 24 {
            return Err(Error::usage("annulus count too large"));
        }
        let outer = m
            .checked_shl(i_max)
            .ok_or_else(|| Error::usage("annulus radius overflow"))?;
        let ball = self.ball(outer)?;
        let mut out: Vec<Vec<GroupElement>> = vec![Vec::new(); i_max as usize + 1];
        for (g, len) in ball.elements {
            let idx = if len <= m {
                0
            } else {
                // Smallest i with len <= M 2^i.
                let mut i = 0u32;
                let mut bound = m;
                while bound < len {
                    bound *= 2;
                    i += 1;
                }
                i as usize
            };
            out[idx].push(g);
        }
        Ok(out)
    }

    /// Parse an element literal in this context's format:
    /// lattice/Heisenberg `1,-2[,3]`, free word `abA` (capitals are inverses,
    /// `e` is the identity), lamplighter `head|l1,l2`, vertex id, canopy
    /// `spine.node`.
    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let s = s.trim();
        let g = match &self.inner.kind {
            Kind::Lattice { d } => {
                let coords: Result<Coords> = s
                    .split(',')
                    .map(|p| parse_int::<i64>(p, "coordinate"))
                    .collect();
                let coords = coords?;
                if coords.len() != *d {
                    return Err(Error::parse(format!("expected {d} coordinates in {s:?}")));
                }
                GroupElement::Lattice(coords)
            }
            Kind::Free { k } => {
                if s == "e" {
                    GroupElement::Free(Word::new())
                } else {
                    let mut w = Word::new();
                    for ch in s.chars() {
                        let l = if ch.is_ascii_lowercase() {
                            (ch as u8 - b'a' + 1) as i8
                        } else if ch.is_ascii_uppercase() {
                            -(((ch as u8 - b'A') + 1) as i8)
                        } else {
                            return Err(Error::parse(format!("bad letter {ch:?} in word {s:?}")));
                        };
                        if l.unsigned_abs() as usize > *k {
                            return Err(Error::parse(format!(
                                "letter {ch:?} outside rank-{k} alphabet"
                            )));
                        }
                        if w.last() == Some(&-l) {
                            w.pop();
                        } else {
                            w.push(l);
                        }
                    }
                    GroupElement::Free(w)
                }
            }
            Kind::Heisenberg => {
                let parts: Vec<&str> = s.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::parse(format!("expected a,b,c triple in {s:?}")));
                }
                GroupElement::Heisenberg {
                    a: parse_int(parts[0], "coordinate")?,
                    b: parse_int(parts[1], "coordinate")?,
                    c: parse_int(parts[2], "coordinate")?,
                }
            }
            Kind::Lamplighter => {
                let (head, lamps) = s
                    .split_once('|')
                    .ok_or_else(|| Error::parse(format!("expected head|lamps in {s:?}")))?;
                let head: i64 = parse_int(head, "head position")?;
                let mut ls = Lamps::new();
                if !lamps.trim().is_empty() {
                    for p in lamps.split(',') {
                        ls.push(parse_int(p, "lamp position")?);
                    }
                }
                ls.sort_unstable();
                ls.dedup();
                GroupElement::Lamplighter { head, lamps: ls }
            }
            Kind::Canopy { .. } => {
                let (spine, node) = match s.split_once('.') {
                    Some((a, b)) => (parse_int(a, "spine index")?, parse_int(b, "node index")?),
                    None => (parse_int(s, "spine index")?, 1u64),
                };
                GroupElement::Canopy { spine, node }
            }
            Kind::EdgeList { .. } => GroupElement::Vertex(parse_int(s, "vertex id")?),
        };
        self.validate_element(&g)?;
        Ok(g)
    }

    pub fn validate_element(&self, g: &GroupElement) -> Result<()> {
        let ok = match (&self.inner.kind, g) {
            (Kind::Lattice { d }, GroupElement::Lattice(c)) => c.len() == *d,
            (Kind::Free { k }, GroupElement::Free(w)) => {
                w.iter()
                    .all(|l| *l != 0 && (l.unsigned_abs() as usize) <= *k)
                    && w.windows(2).all(|p| p[0] != -p[1])
            }
            (Kind::Heisenberg, GroupElement::Heisenberg { .. }) => true,
            (Kind::Lamplighter, GroupElement::Lamplighter { lamps, .. }) => {
                lamps.windows(2).all(|p| p[0] < p[1])
            }
            (Kind::Canopy { depth }, GroupElement::Canopy { spine, node }) => {
                *spine <= *depth && *node >= 1 && node.ilog2() <= *spine as u32
            }
            (Kind::EdgeList { adjacency, .. }, GroupElement::Vertex(v)) => {
                (*v as usize) < adjacency.len()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "element {g} does not belong to context {}",
                self.inner.spec
            )))
        }
    }
}

fn identity_of(kind: &Kind) -> GroupElement {
    match kind {
        Kind::Lattice { d } => GroupElement::Lattice(Coords::from_elem(0, *d)),
        Kind::Free { .. } => GroupElement::Free(Word::new()),
        Kind::Heisenberg => GroupElement::Heisenberg { a: 0, b: 0, c: 0 },
        Kind::Lamplighter => GroupElement::Lamplighter {
            head: 0,
            lamps: Lamps::new(),
        },
        Kind::Canopy { .. } => GroupElement::Canopy { spine: 0, node: 1 },
        Kind::EdgeList { .. } => GroupElement::Vertex(0),
    }
}

fn generators_of(kind: &Kind) -> Vec<GroupElement> {
    match kind {
        Kind::Lattice { d } => {
            let mut gens = Vec::with_capacity(2 * d);
            for i in 0..*d {
                for sign in [1i64, -1] {
                    let mut c = Coords::from_elem(0, *d);
                    c[i] = sign;
                    gens.push(GroupElement::Lattice(c));
                }
            }
            gens
        }
        Kind::Free { k } => {
            let mut gens = Vec::with_capacity(2 * k);
            for i in 1..=*k {
                gens.push(GroupElement::Free(SmallVec::from_slice(&[i as i8])));
                gens.push(GroupElement::Free(SmallVec::from_slice(&[-(i as i8)])));
            }
            gens
        }
        Kind::Heisenberg => vec![
            GroupElement::Heisenberg { a: 1, b: 0, c: 0 },
            GroupElement::Heisenberg { a: -1, b: 0, c: 0 },
            GroupElement::Heisenberg { a: 0, b: 1, c: 0 },
            GroupElement::Heisenberg { a: 0, b: -1, c: 0 },
        ],
        Kind::Lamplighter => vec![
            GroupElement::Lamplighter {
                head: 0,
                lamps: Lamps::from_slice(&[0]),
            },
            GroupElement::Lamplighter {
                head: 1,
                lamps: Lamps::new(),
            },
            GroupElement::Lamplighter {
                head: -1,
                lamps: Lamps::new(),
            },
        ],
        Kind::Canopy { .. } | Kind::EdgeList { .. } => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn ctx(spec: &str) -> GroupContext {
        GroupContext::parse(spec).unwrap()
    }

    #[test]
    fn lattice_ball_sizes_match_closed_forms() {
        let z1 = ctx("zd:1");
        let z2 = ctx("zd:2");
        for n in 0..=20u32 {
            let b1 = z1.ball(n).unwrap();
            assert_eq!(b1.len() as u64, 2 * n as u64 + 1, "Z^1 ball {n}");
            let b2 = z2.ball(n).unwrap();
            assert_eq!(
                b2.len() as u64,
                2 * (n as u64) * (n as u64) + 2 * n as u64 + 1,
                "Z^2 ball {n}"
            );
        }
    }

    #[test]
    fn free_sphere_sizes_match_closed_forms() {
        // Full range at k=2; the k=3 ball of radius 12 has ~3.7e8 elements,
        // so cross-check that rank at a radius that fits in memory.
        for (k, n) in [(2usize, 12u32), (3, 8)] {
            let f = ctx(&format!("free:{k}"));
            let b = f.ball(n).unwrap();
            assert_eq!(b.sphere_sizes[0], 1);
            for m in 1..=n as usize {
                let expect = 2 * k as u64 * (2 * k as u64 - 1).pow(m as u32 - 1);
                assert_eq!(b.sphere_sizes[m], expect, "F_{k} sphere {m}");
            }
        }
    }

    #[test]
    fn ball_elements_sorted_and_inverse_closed() {
        for spec in ["zd:2", "free:2", "heis", "lamp"] {
            let c = ctx(spec);
            let b = c.ball(4).unwrap();
            for w in b.elements.windows(2) {
                assert!(
                    (w[0].1, &w[0].0) < (w[1].1, &w[1].0),
                    "{spec}: ball not strictly sorted"
                );
            }
            let set: std::collections::HashSet<_> = b.iter_elements().cloned().collect();
            for (g, len) in &b.elements {
                let inv = c.inv(g);
                assert!(
                    set.contains(&inv),
                    "{spec}: inverse of {g} missing from ball"
                );
                assert_eq!(c.word_length(&inv), *len, "{spec}: |g| != |g^-1| for {g}");
            }
        }
    }

    #[test]
    fn heisenberg_commutator_is_central_generator() {
        let h = ctx("heis");
        let x = GroupElement::Heisenberg { a: 1, b: 0, c: 0 };
        let y = GroupElement::Heisenberg { a: 0, b: 1, c: 0 };
        let comm = h.mul(&h.mul(&h.mul(&x, &y), &h.inv(&x)), &h.inv(&y));
        assert_eq!(comm, GroupElement::Heisenberg { a: 0, b: 0, c: 1 });
        // Central: commutes with both generators.
        assert_eq!(h.mul(&comm, &x), h.mul(&x, &comm));
        assert_eq!(h.mul(&comm, &y), h.mul(&y, &comm));
        // Its word length agrees with an independent breadth-first search.
        let mut dist = HashMap::new();
        dist.insert(h.identity(), 0u32);
        let mut frontier = vec![h.identity()];
        let mut found = None;
        'outer: for r in 1..=8u32 {
            let mut next = Vec::new();
            for v in &frontier {
                for s in h.generators().unwrap() {
                    let w = h.mul(v, &s);
                    if !dist.contains_key(&w) {
                        dist.insert(w.clone(), r);
                        if w == comm {
                            found = Some(r);
                            break 'outer;
                        }
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        assert_eq!(h.word_length(&comm), found.unwrap());
    }

    #[test]
    fn lamplighter_group_law() {
        let l = ctx("lamp");
        let t = GroupElement::Lamplighter {
            head: 0,
            lamps: Lamps::from_slice(&[0]),
        };
        let s = GroupElement::Lamplighter {
            head: 1,
            lamps: Lamps::new(),
        };
        // t is an involution.
        assert_eq!(l.mul(&t, &t), l.identity());
        // s t: move right, then toggle under the head.
        assert_eq!(
            l.mul(&s, &t),
            GroupElement::Lamplighter {
                head: 1,
                lamps: Lamps::from_slice(&[1])
            }
        );
        // Inverses compose to the identity.
        let g = l.mul(&l.mul(&s, &t), &s);
        assert_eq!(l.mul(&g, &l.inv(&g)), l.identity());
        assert_eq!(l.mul(&l.inv(&g), &g), l.identity());
        // Early sphere sizes from an independent hand count.
        let b = l.ball(2).unwrap();
        assert_eq!(b.sphere_sizes, vec![1, 3, 6]);
    }

    #[test]
    fn triangle_inequality_on_random_pairs() {
        for spec in ["zd:2", "free:2", "heis", "lamp"] {
            let c = ctx(spec);
            let ball = c.ball(4).unwrap();
            let stream = Stream::new(7, 11, 13);
            for i in 0..10_000u64 {
                let g = &ball.elements[(stream.u64_at(2 * i) % ball.len() as u64) as usize];
                let h = &ball.elements[(stream.u64_at(2 * i + 1) % ball.len() as u64) as usize];
                let gh = c.mul(&g.0, &h.0);
                assert!(
                    c.word_length(&gh) <= g.1 + h.1,
                    "{spec}: |gh| > |g|+|h| for {} * {}",
                    g.0,
                    h.0
                );
            }
        }
    }

    #[test]
    fn annuli_partition_the_ball() {
        let z1 = ctx("zd:1");
        let ann = z1.annuli(1, 2).unwrap();
        let fmt = |v: &Vec<GroupElement>| {
            let mut s: Vec<String> = v.iter().map(|g| g.to_string()).collect();
            s.sort();
            s
        };
        assert_eq!(fmt(&ann[0]), vec!["-1", "0", "1"]);
        assert_eq!(fmt(&ann[1]), vec!["-2", "2"]);
        assert_eq!(fmt(&ann[2]), vec!["-3", "-4", "3", "4"]);
        let total: usize = ann.iter().map(|a| a.len()).sum();
        assert_eq!(total as u64, 9);
    }

    #[test]
    fn canopy_metric_and_balls() {
        let c = ctx("canopy:60");
        assert_eq!(c.identity(), GroupElement::Canopy { spine: 0, node: 1 });
        // B(2): x0, x1, x2 and the two depth-1 children at x1.
        let b = c.ball(2).unwrap();
        assert_eq!(b.sphere_sizes, vec![1, 1, 3]);
        // Distance is spine + in-tree depth.
        let v = GroupElement::Canopy { spine: 5, node: 9 };
        assert_eq!(c.word_length(&v), 5 + 3);
        // Neighbor relation is symmetric.
        for (g, _) in &c.ball(5).unwrap().elements {
            for w in c.neighbors(g) {
                assert!(
                    c.neighbors(&w).contains(g),
                    "asymmetric adjacency at {g} -> {w}"
                );
            }
        }
    }

    #[test]
    fn canopy_deep_truncation_is_addressable_without_materializing() {
        let c = ctx("canopy:60");
        let x60 = GroupElement::Canopy { spine: 60, node: 1 };
        assert_eq!(c.word_length(&x60), 60);
        let deep = GroupElement::Canopy {
            spine: 60,
            node: 1u64 << 60,
        };
        c.validate_element(&deep).unwrap();
        assert_eq!(c.word_length(&deep), 120);
        assert_eq!(c.neighbors(&deep).len(), 1); // leaf: parent only
    }

    #[test]
    fn edge_list_context() {
        let g = GroupContext::from_edge_list_text("graph:test", "0 1\n1 2\n2 0\n2 3\n").unwrap();
        let b = g.ball(2).unwrap();
        assert_eq!(b.sphere_sizes, vec![1, 2, 1]);
        assert_eq!(g.word_length(&GroupElement::Vertex(3)), 2);
        assert_eq!(g.max_degree(), 3);
        assert!(g.generators().is_err());
    }

    #[test]
    fn element_cap_reports_partial_spheres() {
        let f = ctx("free:2").with_element_cap(100);
        match f.ball(10) {
            Err(Error::CapExceeded {
                cap,
                partial_spheres,
            }) => {
                assert_eq!(cap, 100);
                assert_eq!(partial_spheres[0..3], [1, 4, 12]);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn element_literals_round_trip() {
        let cases = [
            ("zd:2", vec!["0,0", "1,-2"]),
            ("free:2", vec!["e", "abA", "B"]),
            ("heis", vec!["0,0,1", "-1,2,3"]),
            ("lamp", vec!["2|-1,3", "0|"]),
            ("canopy:12", vec!["0.1", "12.5"]),
        ];
        for (spec, literals) in cases {
            let c = ctx(spec);
            for lit in literals {
                let g = c.parse_element(lit).unwrap();
                let back = c.parse_element(&g.to_string()).unwrap();
                assert_eq!(g, back, "{spec} {lit}");
            }
        }
        // Unreduced words canonicalize.
        let f = ctx("free:2");
        assert_eq!(f.parse_element("abBA").unwrap(), f.identity());
        // Wrong arity is rejected.
        assert!(ctx("zd:2").parse_element("1,2,3").is_err());
        assert!(ctx("canopy:3").parse_element("2.9").is_err()); // depth 3 tree at x2 has nodes < 8
    }

    #[test]
    fn word_length_at_most_respects_limit() {
        let h = ctx("heis");
        let far = GroupElement::Heisenberg { a: 5, b: 5, c: 0 };
        assert_eq!(h.word_length_at_most(&far, 4), None);
        assert_eq!(h.word_length_at_most(&far, 10), Some(10));
        let near = GroupElement::Heisenberg { a: 1, b: 1, c: 0 };
        assert_eq!(h.word_length_at_most(&near, 4), Some(2));
    }
}
