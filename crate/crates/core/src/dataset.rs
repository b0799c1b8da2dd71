//! Raw records to split domains: filtering, inductive split, id relabeling
//! and overlap resolution.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::graph::{ingest, make_inductive_split, DomainGraph, DomainTag, IdMap, OverlapMap, Population, RawRecord, SplitBundle, SplitConfig, SplitTag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub min_rating: f64,
    /// Entities need strictly more interactions than this to be kept.
    pub min_degree: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_rating: 4.0,
            min_degree: 10,
        }
    }
}

/// One filtered and split domain with final (relabeled) id maps.
#[derive(Debug, Clone)]
pub struct PreparedDomain {
    pub tag: DomainTag,
    pub users: IdMap,
    pub items: IdMap,
    pub population: Population,
    pub bundle: SplitBundle,
}

/// Split seed of a domain, so the two domains draw independent unseen sets.
pub fn domain_seed(seed: u64, tag: DomainTag) -> u64 {
    seed.wrapping_add(tag.index() as u64)
}

pub fn prepare_domain(tag: DomainTag, records: &[RawRecord], filter: FilterConfig, split: &SplitConfig) -> Result<PreparedDomain> {
    let ing = ingest(records, filter.min_rating, filter.min_degree).map_err(|e| match e {
        Error::EmptyDomain { context } => Error::EmptyDomain {
            context: format!("domain {tag}: {context}"),
        },
        other => other,
    })?;
    let graph = DomainGraph::new(tag, Population::all_seen(ing.users.len(), ing.items.len()), &ing.edges())?;
    let cfg = SplitConfig {
        seed: domain_seed(split.seed, tag),
        ..*split
    };
    let s = make_inductive_split(&graph, &cfg)?;
    Ok(PreparedDomain {
        tag,
        users: ing.users.permuted(&s.user_perm),
        items: ing.items.permuted(&s.item_perm),
        population: s.graph.population(),
        bundle: s.bundle,
    })
}

impl PreparedDomain {
    /// One row of the dataset statistics table.
    pub fn stats(&self) -> DomainStats {
        DomainStats {
            domain: self.tag,
            users: self.population.users,
            items: self.population.items,
            seen_users: self.population.seen_users,
            seen_items: self.population.seen_items,
            train: self.bundle.get(SplitTag::Train).len(),
            new: self.bundle.get(SplitTag::New).len(),
            val: self.bundle.get(SplitTag::Val).len(),
            test: self.bundle.get(SplitTag::Test).len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainStats {
    pub domain: DomainTag,
    pub users: usize,
    pub items: usize,
    pub seen_users: usize,
    pub seen_items: usize,
    pub train: usize,
    pub new: usize,
    pub val: usize,
    pub test: usize,
}

impl DomainStats {
    pub const HEADER: &'static str = "domain\tusers\titems\tseen_users\tseen_items\ttrain\tnew\tval\ttest";

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.domain, self.users, self.items, self.seen_users, self.seen_items, self.train, self.new, self.val, self.test
        )
    }
}

/// Overlap keys: `key` (same key in both domains) or `keyA<TAB>keyB` per
/// line; blank lines and `#` comments are skipped.
pub fn parse_overlap_keys<R: BufRead>(reader: R, source: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [k] => out.push((k.to_string(), k.to_string())),
            [a, b] => out.push((a.to_string(), b.to_string())),
            _ => {
                return Err(Error::Parse {
                    path: source.into(),
                    line: n + 1,
                    msg: format!("expected 1 or 2 tab-separated keys, got {}", fields.len()),
                })
            }
        }
    }
    Ok(out)
}

/// Resolves overlap keys to `(user in A, user in B)` ids, dropping keys that
/// did not survive filtering in either domain. Sorted by A id.
pub fn resolve_overlap(keys: &[(String, String)], a: &PreparedDomain, b: &PreparedDomain) -> Result<OverlapMap> {
    let mut pairs: Vec<(usize, usize)> = keys
        .iter()
        .filter_map(|(ka, kb)| Some((a.users.get(ka)?, b.users.get(kb)?)))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    OverlapMap::new(pairs)
}
