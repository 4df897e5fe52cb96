//! Embedding-based retrieval over component descriptions and the balanced
//! routing tree used for logarithmic-depth selection.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{read, write};
use crate::types::{ComponentKind, ComponentName};

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub const DEFAULT_DIM: usize = 64;
const DEFAULT_BUCKETS: usize = 1024;
const DEFAULT_SEED: u64 = 0x7ea_5eed;

/// Hashed bag-of-tokens projected through a fixed seeded random matrix.
/// Tokens are lowercase alphanumeric runs.
#[derive(Clone)]
pub struct HashedEmbedder {
    dim: usize,
    projection: Arc<Vec<Vec<f64>>>,
}

impl HashedEmbedder {
    pub fn new(dim: usize, buckets: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..buckets)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        HashedEmbedder { dim, projection: Arc::new(projection) }
    }

    fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.projection.len() as u64) as usize
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        static SHARED: OnceLock<HashedEmbedder> = OnceLock::new();
        SHARED.get_or_init(|| HashedEmbedder::new(DEFAULT_DIM, DEFAULT_BUCKETS, DEFAULT_SEED)).clone()
    }
}

impl fmt::Debug for HashedEmbedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HashedEmbedder").field("dim", &self.dim).field("buckets", &self.projection.len()).finish()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

impl Embedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for t in tokens(text) {
            for (acc, w) in v.iter_mut().zip(&self.projection[self.bucket(&t)]) {
                *acc += w;
            }
        }
        Ok(v)
    }
}

/// Cosine similarity clamped to [-1, 1]; zero vectors score 0 against
/// anything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub text: String,
    pub category: String,
    pub vector: Vec<f64>,
}

/// Category of a component: explicit `category` metadata, else the first
/// `.`-separated name segment.
pub fn category_of(name: &ComponentName, metadata: &BTreeMap<String, String>) -> String {
    metadata
        .get("category")
        .cloned()
        .unwrap_or_else(|| name.as_str().split('.').next().unwrap_or_default().to_owned())
}

pub struct VectorIndex {
    embedder: Arc<dyn Embedder>,
    entries: RwLock<BTreeMap<(ComponentKind, ComponentName), IndexEntry>>,
}

impl fmt::Debug for VectorIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorIndex").field("entries", &read(&self.entries).len()).finish()
    }
}

impl VectorIndex {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        VectorIndex { embedder, entries: RwLock::new(BTreeMap::new()) }
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Ok(vec![0.0; self.embedder.dim()]);
        }
        self.embedder.embed(text)
    }

    /// Inserts or replaces an entry. An embedding backend failure stores a
    /// zero vector, which scores 0 against every query.
    pub fn upsert(&self, kind: ComponentKind, name: &ComponentName, text: &str, category: &str) {
        let vector = self.embed(text).unwrap_or_else(|_| vec![0.0; self.embedder.dim()]);
        let entry = IndexEntry { text: text.to_owned(), category: category.to_owned(), vector };
        write(&self.entries).insert((kind, name.clone()), entry);
    }

    pub fn remove(&self, kind: ComponentKind, name: &ComponentName) {
        write(&self.entries).remove(&(kind, name.clone()));
    }

    pub fn clear(&self) {
        write(&self.entries).clear();
    }

    pub fn len(&self, kind: ComponentKind) -> usize {
        read(&self.entries).keys().filter(|(k, _)| *k == kind).count()
    }

    pub fn get(&self, kind: ComponentKind, name: &ComponentName) -> Option<IndexEntry> {
        read(&self.entries).get(&(kind, name.clone())).cloned()
    }

    /// Entries of one kind in name order.
    pub fn entries(&self, kind: ComponentKind) -> Vec<(ComponentName, IndexEntry)> {
        read(&self.entries)
            .iter()
            .filter(|((k, _), _)| *k == kind)
            .map(|((_, n), e)| (n.clone(), e.clone()))
            .collect()
    }

    /// Exact top-k by cosine, descending, ties by ascending name.
    pub fn retrieve(&self, kind: ComponentKind, query: &str, k: usize) -> Result<Vec<(ComponentName, f64)>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let q = self.embed(query)?;
        let mut scored: Vec<(ComponentName, f64)> = read(&self.entries)
            .iter()
            .filter(|((kk, _), _)| *kk == kind)
            .map(|((_, n), e)| (n.clone(), cosine(&q, &e.vector)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }

    pub fn build_routing_tree(&self, kind: ComponentKind, branching: usize) -> Result<RoutingTree> {
        RoutingTree::build(self.entries(kind), branching)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteNode {
    pub label: String,
    /// Mean of the vectors of every leaf below (or the leaf's own vector).
    pub centroid: Vec<f64>,
    pub children: Vec<usize>,
    pub leaf: Option<ComponentName>,
}

/// Balanced b-ary tree over component keys. Leaves are ordered by
/// (category, name) so same-category components share subtrees.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTree {
    nodes: Vec<RouteNode>,
    root: Option<usize>,
    branching: usize,
}

impl RoutingTree {
    pub fn build(mut leaves: Vec<(ComponentName, IndexEntry)>, branching: usize) -> Result<RoutingTree> {
        if branching < 2 {
            return Err(Error::invalid("branching factor must be at least 2"));
        }
        leaves.sort_by(|a, b| (&a.1.category, &a.0).cmp(&(&b.1.category, &b.0)));
        let mut nodes = Vec::with_capacity(leaves.len() * 2);
        // (node index, category span, vector sum, leaf count)
        let mut level: Vec<(usize, (String, String), Vec<f64>, usize)> = Vec::with_capacity(leaves.len());
        for (name, entry) in leaves {
            nodes.push(RouteNode {
                label: name.to_string(),
                centroid: entry.vector.clone(),
                children: Vec::new(),
                leaf: Some(name),
            });
            level.push((nodes.len() - 1, (entry.category.clone(), entry.category), entry.vector, 1));
        }
        if level.is_empty() {
            return Ok(RoutingTree { nodes, root: None, branching });
        }
        loop {
            let mut next = Vec::with_capacity(level.len().div_ceil(branching));
            for group in level.chunks(branching) {
                let dim = group[0].2.len();
                let mut sum = vec![0.0; dim];
                let mut count = 0;
                for (_, _, s, c) in group {
                    for (acc, x) in sum.iter_mut().zip(s) {
                        *acc += x;
                    }
                    count += c;
                }
                let lo = group[0].1 .0.clone();
                let hi = group[group.len() - 1].1 .1.clone();
                let label = if lo == hi { lo.clone() } else { format!("{lo}..{hi}") };
                nodes.push(RouteNode {
                    label,
                    centroid: sum.iter().map(|x| x / count as f64).collect(),
                    children: group.iter().map(|g| g.0).collect(),
                    leaf: None,
                });
                next.push((nodes.len() - 1, (lo, hi), sum, count));
            }
            level = next;
            if level.len() == 1 {
                break;
            }
        }
        Ok(RoutingTree { root: Some(level[0].0), nodes, branching })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn nodes(&self) -> &[RouteNode] {
        &self.nodes
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.leaf.is_some()).count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn go(t: &RoutingTree, i: usize) -> usize {
            t.nodes[i].children.iter().map(|&c| 1 + go(t, c)).max().unwrap_or(0)
        }
        self.root.map_or(0, |r| go(self, r))
    }

    /// Greedy descent: at each internal node pick the child whose centroid
    /// is most similar to the query (first child on ties). Returns the leaf
    /// and the number of similarity evaluations.
    pub fn route_vector(&self, query: &[f64]) -> Result<(ComponentName, usize)> {
        let mut node = self.root.ok_or_else(|| Error::invalid("routing tree is empty"))?;
        let mut examined = 0;
        while self.nodes[node].leaf.is_none() {
            let mut best: Option<(usize, f64)> = None;
            for &c in &self.nodes[node].children {
                let s = cosine(query, &self.nodes[c].centroid);
                examined += 1;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
            }
            node = best.expect("internal nodes have children").0;
        }
        Ok((self.nodes[node].leaf.clone().expect("leaf"), examined))
    }

    pub fn route(&self, embedder: &VectorIndex, query: &str) -> Result<(ComponentName, usize)> {
        self.route_vector(&embedder.embed(query)?)
    }
}

impl crate::kernel::Tea {
    pub fn retrieve(&self, kind: ComponentKind, query: &str, k: usize) -> Result<Vec<(ComponentName, f64)>> {
        self.index().retrieve(kind, query, k)
    }

    pub fn build_routing_tree(&self, kind: ComponentKind, branching: usize) -> Result<RoutingTree> {
        self.index().build_routing_tree(kind, branching)
    }

    /// Builds a tree over the current index and routes one query through it.
    pub fn route(&self, kind: ComponentKind, query: &str, branching: usize) -> Result<(ComponentName, usize)> {
        self.build_routing_tree(kind, branching)?.route(self.index(), query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn n(s: &str) -> ComponentName {
        ComponentName::new(s).unwrap()
    }

    fn index() -> VectorIndex {
        VectorIndex::new(Arc::new(HashedEmbedder::default()))
    }

    #[test]
    fn embed_conventions() {
        let idx = index();
        assert!(idx.embed("").unwrap().iter().all(|x| *x == 0.0));
        let a = idx.embed("adds two integers").unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, idx.embed("adds two integers").unwrap());
        assert_eq!(cosine(&a, &a), 1.0);
        assert_eq!(cosine(&a, &vec![0.0; 64]), 0.0);
        // case and punctuation do not matter
        assert_eq!(a, idx.embed("Adds, TWO integers!").unwrap());
    }

    fn brute(idx: &VectorIndex, kind: ComponentKind, query: &str) -> Vec<(ComponentName, f64)> {
        let q = idx.embed(query).unwrap();
        let mut all: Vec<_> = idx.entries(kind).into_iter().map(|(n, e)| (n, cosine(&q, &e.vector))).collect();
        // insertion sort as an independent ordering routine
        for i in 1..all.len() {
            let mut j = i;
            while j > 0 && (all[j].1 > all[j - 1].1 || (all[j].1 == all[j - 1].1 && all[j].0 < all[j - 1].0)) {
                all.swap(j, j - 1);
                j -= 1;
            }
        }
        all
    }

    #[test]
    fn retrieve_self_match_and_empty() {
        let idx = index();
        assert!(idx.retrieve(ComponentKind::Tool, "anything", 3).unwrap().is_empty());
        let descs = ["adds numbers", "reads web pages", "stores keys and values", "echoes text", "counts clicks"];
        for (i, d) in descs.iter().enumerate() {
            idx.upsert(ComponentKind::Tool, &n(&format!("t{i}")), d, "t");
        }
        let top = idx.retrieve(ComponentKind::Tool, "reads web pages", 1).unwrap();
        assert_eq!(top[0].0, n("t1"));
        assert_eq!(top[0].1, 1.0);
        let k2 = idx.retrieve(ComponentKind::Tool, "web keys", 2).unwrap();
        assert_eq!(k2, brute(&idx, ComponentKind::Tool, "web keys")[..2].to_vec());
        assert!(idx.retrieve(ComponentKind::Tool, "x", 0).is_err());
    }

    #[test]
    fn routing_shapes() {
        let idx = index();
        idx.upsert(ComponentKind::Tool, &n("solo"), "only one", "solo");
        let t = idx.build_routing_tree(ComponentKind::Tool, 2).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.route(&idx, "anything").unwrap(), (n("solo"), 1));

        let idx = index();
        for i in 0..4 {
            idx.upsert(ComponentKind::Tool, &n(&format!("t{i}")), &format!("tool number {i}"), "t");
        }
        let t = idx.build_routing_tree(ComponentKind::Tool, 2).unwrap();
        assert!(t.depth() <= 3);
        assert_eq!(t.leaf_count(), 4);
    }

    #[test]
    fn routing_256_depth_and_cost() {
        let idx = index();
        let words = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "tau", "rho"];
        for i in 0..256 {
            let d = format!("{} {} {}", words[i % 8], words[(i / 8) % 8], i);
            idx.upsert(ComponentKind::Tool, &n(&format!("t{i:03}")), &d, &format!("c{}", i % 16));
        }
        let t = idx.build_routing_tree(ComponentKind::Tool, 4).unwrap();
        // ceil(log4 256) + 1 = 5
        assert!(t.depth() <= 5);
        assert_eq!(t.leaf_count(), 256);
        for q in 0..100 {
            let (_, examined) = t.route(&idx, &format!("{} query {q}", words[q % 8])).unwrap();
            assert!(examined <= 16, "{examined}");
        }
    }

    #[test]
    fn greedy_walk_matches_exhaustive_table() {
        let idx = index();
        let descs = ["parse json documents", "render html pages", "compress files", "send email messages"];
        for (i, d) in descs.iter().enumerate() {
            idx.upsert(ComponentKind::Tool, &n(&format!("t{i}")), d, if i < 2 { "text" } else { "io" });
        }
        let t = idx.build_routing_tree(ComponentKind::Tool, 2).unwrap();
        assert_eq!(t.depth(), 2);
        let q = idx.embed("compress files").unwrap();
        // full table of similarities per node, then replay the greedy choice by hand
        let sims: Vec<f64> = t.nodes().iter().map(|nd| cosine(&q, &nd.centroid)).collect();
        let mut node = t.root().unwrap();
        let mut examined = 0;
        while t.nodes()[node].leaf.is_none() {
            let kids = &t.nodes()[node].children;
            examined += kids.len();
            node = *kids.iter().max_by(|a, b| sims[**a].total_cmp(&sims[**b]).then(b.cmp(a))).unwrap();
        }
        let got = t.route(&idx, "compress files").unwrap();
        assert_eq!(got, (t.nodes()[node].leaf.clone().unwrap(), examined));
        assert_eq!(got.0, n("t2"));
    }

    proptest! {
        #[test]
        fn retrieve_full_equals_brute_force(seed in any::<u64>(), count in 0usize..40) {
            let idx = index();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vocab = ["web", "page", "file", "add", "sum", "text", "key", "value", "agent", "plan"];
            for i in 0..count {
                let words: Vec<&str> = (0..3).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
                idx.upsert(ComponentKind::Tool, &n(&format!("c{i}")), &words.join(" "), "x");
            }
            let q = vocab.choose(&mut rng).unwrap().to_string();
            let got = idx.retrieve(ComponentKind::Tool, &q, count.max(1)).unwrap();
            prop_assert_eq!(got, brute(&idx, ComponentKind::Tool, &q));
        }

        #[test]
        fn routing_cost_bound(count in 1usize..300, b in 2usize..6, seed in any::<u64>()) {
            let idx = index();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..count {
                let d = format!("w{} w{}", rng.gen_range(0..50), rng.gen_range(0..50));
                idx.upsert(ComponentKind::Tool, &n(&format!("c{i}")), &d, &format!("g{}", i % 7));
            }
            let t = idx.build_routing_tree(ComponentKind::Tool, b).unwrap();
            prop_assert_eq!(t.leaf_count(), count);
            let (_, examined) = t.route(&idx, &format!("w{}", rng.gen_range(0..50))).unwrap();
            prop_assert!(examined <= b * t.depth());
        }
    }
}
