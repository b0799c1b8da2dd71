//! Cross-domain interaction data model: ingestion with iterative degree
//! filtering, the seen/unseen inductive split, overlap maps and template
//! selection.

mod ingest;
mod manifest;
mod split;

use std::fmt;
use std::str::FromStr;

pub use ingest::{ingest, parse_records, IdMap, Ingested, Interaction, RawRecord};
pub use manifest::{read_split_manifest, write_split_manifest, SplitHeader};
pub use split::{make_inductive_split, InductiveSplit, SplitBundle, SplitConfig, SplitTag};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainTag {
    A,
    B,
}

impl DomainTag {
    pub const BOTH: [DomainTag; 2] = [DomainTag::A, DomainTag::B];

    pub fn index(self) -> usize {
        match self {
            DomainTag::A => 0,
            DomainTag::B => 1,
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainTag::A => "A",
            DomainTag::B => "B",
        })
    }
}

impl FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(DomainTag::A),
            "B" | "b" => Ok(DomainTag::B),
            other => Err(Error::Config(format!("unknown domain {other:?} (expected A or B)"))),
        }
    }
}

/// Entity counts of one domain. Seen entities occupy ids `0..seen_*`, unseen
/// entities the remaining suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Population {
    pub users: usize,
    pub seen_users: usize,
    pub items: usize,
    pub seen_items: usize,
}

impl Population {
    pub fn all_seen(users: usize, items: usize) -> Self {
        Self {
            users,
            seen_users: users,
            items,
            seen_items: items,
        }
    }

    #[inline]
    pub fn is_seen_user(&self, u: usize) -> bool {
        u < self.seen_users
    }

    #[inline]
    pub fn is_seen_item(&self, i: usize) -> bool {
        i < self.seen_items
    }

    pub fn nodes(&self) -> usize {
        self.users + self.items
    }
}

/// One domain's bipartite interaction graph with template designations.
#[derive(Debug, Clone)]
pub struct DomainGraph {
    tag: DomainTag,
    population: Population,
    user_adj: Vec<Vec<usize>>,
    item_adj: Vec<Vec<usize>>,
    template_users: Vec<usize>,
    template_items: Vec<usize>,
    user_template_row: Vec<Option<usize>>,
    item_template_row: Vec<Option<usize>>,
}

impl DomainGraph {
    /// Builds the graph from an edge list; duplicate edges collapse.
    pub fn new(tag: DomainTag, population: Population, edges: &[(usize, usize)]) -> Result<Self> {
        if population.seen_users > population.users || population.seen_items > population.items {
            return Err(Error::Population(format!("seen counts exceed totals: {population:?}")));
        }
        let mut user_adj = vec![Vec::new(); population.users];
        let mut item_adj = vec![Vec::new(); population.items];
        for &(u, i) in edges {
            if u >= population.users || i >= population.items {
                return Err(Error::Population(format!(
                    "edge ({u}, {i}) outside {} users x {} items",
                    population.users, population.items
                )));
            }
            user_adj[u].push(i);
            item_adj[i].push(u);
        }
        for list in user_adj.iter_mut().chain(item_adj.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            tag,
            population,
            user_template_row: vec![None; population.users],
            item_template_row: vec![None; population.items],
            user_adj,
            item_adj,
            template_users: Vec::new(),
            template_items: Vec::new(),
        })
    }

    /// Installs template sets; both must be subsets of the seen entities.
    pub fn with_templates(mut self, users: Vec<usize>, items: Vec<usize>) -> Result<Self> {
        let mut users = users;
        let mut items = items;
        users.sort_unstable();
        users.dedup();
        items.sort_unstable();
        items.dedup();
        if let Some(&u) = users.iter().find(|&&u| !self.population.is_seen_user(u)) {
            return Err(Error::Population(format!("template user {u} is not a seen user")));
        }
        if let Some(&i) = items.iter().find(|&&i| !self.population.is_seen_item(i)) {
            return Err(Error::Population(format!("template item {i} is not a seen item")));
        }
        self.user_template_row = vec![None; self.population.users];
        self.item_template_row = vec![None; self.population.items];
        for (row, &u) in users.iter().enumerate() {
            self.user_template_row[u] = Some(row);
        }
        for (row, &i) in items.iter().enumerate() {
            self.item_template_row[i] = Some(row);
        }
        self.template_users = users;
        self.template_items = items;
        Ok(self)
    }

    /// Same population and templates, with `extra` edges added (inference
    /// graph including revealed interactions).
    pub fn with_extra_edges(&self, extra: &[(usize, usize)]) -> Result<Self> {
        let edges: Vec<(usize, usize)> = self.edges().chain(extra.iter().copied()).collect();
        DomainGraph::new(self.tag, self.population, &edges)?
            .with_templates(self.template_users.clone(), self.template_items.clone())
    }

    pub fn tag(&self) -> DomainTag {
        self.tag
    }

    pub fn population(&self) -> Population {
        self.population
    }

    pub fn n_users(&self) -> usize {
        self.population.users
    }

    pub fn n_items(&self) -> usize {
        self.population.items
    }

    pub fn user_items(&self, u: usize) -> &[usize] {
        &self.user_adj[u]
    }

    pub fn item_users(&self, i: usize) -> &[usize] {
        &self.item_adj[i]
    }

    pub fn user_adjacency(&self) -> &[Vec<usize>] {
        &self.user_adj
    }

    pub fn has_edge(&self, u: usize, i: usize) -> bool {
        self.user_adj[u].binary_search(&i).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.user_adj.iter().map(Vec::len).sum()
    }

    /// Edges in ascending `(user, item)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.user_adj
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    pub fn template_users(&self) -> &[usize] {
        &self.template_users
    }

    pub fn template_items(&self) -> &[usize] {
        &self.template_items
    }

    /// Row of `u` in the template-user embedding table.
    pub fn user_template_row(&self, u: usize) -> Option<usize> {
        self.user_template_row[u]
    }

    pub fn item_template_row(&self, i: usize) -> Option<usize> {
        self.item_template_row[i]
    }
}

/// Users shared by both domains, as `(id in A, id in B)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlapMap {
    pairs: Vec<(usize, usize)>,
}

impl OverlapMap {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen_a = std::collections::HashSet::new();
        let mut seen_b = std::collections::HashSet::new();
        for &(a, b) in &pairs {
            if !seen_a.insert(a) || !seen_b.insert(b) {
                return Err(Error::Config(format!(
                    "overlap map is not bijective at pair ({a}, {b})"
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs whose members are seen in both domains.
    pub fn seen_pairs(&self, a: Population, b: Population) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .copied()
            .filter(|&(ua, ub)| a.is_seen_user(ua) && b.is_seen_user(ub))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplatePolicy {
    AllSeen,
    /// The `users` / `items` highest-degree seen entities.
    TopDegree { users: usize, items: usize },
}

impl fmt::Display for TemplatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplatePolicy::AllSeen => f.write_str("all"),
            TemplatePolicy::TopDegree { users, items } => write!(f, "top:{users}:{items}"),
        }
    }
}

impl FromStr for TemplatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(TemplatePolicy::AllSeen);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["top", u, i] => {
                let users = u.parse().map_err(|_| Error::Config(format!("bad template policy {s:?}")))?;
                let items = i.parse().map_err(|_| Error::Config(format!("bad template policy {s:?}")))?;
                Ok(TemplatePolicy::TopDegree { users, items })
            }
            _ => Err(Error::Config(format!("bad template policy {s:?} (all | top:<users>:<items>)"))),
        }
    }
}

fn top_degree(degrees: impl Iterator<Item = usize>, m: usize) -> Vec<usize> {
    let mut order: Vec<(usize, usize)> = degrees.enumerate().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = order.into_iter().take(m).map(|(id, _)| id).collect();
    chosen.sort_unstable();
    chosen
}

/// Template user and item ids for `policy`, degrees taken from `graph`.
pub fn select_templates(graph: &DomainGraph, policy: TemplatePolicy) -> Result<(Vec<usize>, Vec<usize>)> {
    let pop = graph.population();
    match policy {
        TemplatePolicy::AllSeen => Ok(((0..pop.seen_users).collect(), (0..pop.seen_items).collect())),
        TemplatePolicy::TopDegree { users, items } => {
            if users > pop.seen_users || items > pop.seen_items {
                return Err(Error::Config(format!(
                    "top-degree templates ({users}, {items}) exceed seen counts ({}, {})",
                    pop.seen_users, pop.seen_items
                )));
            }
            let u = top_degree((0..pop.seen_users).map(|u| graph.user_items(u).len()), users);
            let i = top_degree((0..pop.seen_items).map(|i| graph.item_users(i).len()), items);
            Ok((u, i))
        }
    }
}
