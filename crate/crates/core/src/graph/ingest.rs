use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// One raw review record: `user_key<TAB>item_key<TAB>rating[<TAB>timestamp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user_key: String,
    pub item_key: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Interaction between dense ids after filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

pub fn parse_records<R: BufRead>(reader: R, source: &str) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            path: source.to_string(),
            line: line_no,
            msg: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: source.to_string(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(bad(format!("expected 3 or 4 tab-separated fields, got {}", fields.len())));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("bad rating {:?}", fields[2])))?;
        if !rating.is_finite() {
            return Err(bad(format!("non-finite rating {:?}", fields[2])));
        }
        let timestamp = match fields.get(3) {
            Some(t) if !t.is_empty() => {
                Some(t.parse().map_err(|_| bad(format!("bad timestamp {t:?}")))?)
            }
            _ => None,
        };
        out.push(RawRecord {
            user_key: fields[0].to_string(),
            item_key: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// Key to dense id map, ids in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    keys: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_keys(keys: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(keys.len());
        for (id, k) in keys.iter().enumerate() {
            if lookup.insert(k.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate key {k:?} in id map")));
            }
        }
        Ok(Self { keys, lookup })
    }

    fn intern(&mut self, key: &str) -> usize {
        if let Some(&id) = self.lookup.get(key) {
            return id;
        }
        let id = self.keys.len();
        self.keys.push(key.to_string());
        self.lookup.insert(key.to_string(), id);
        id
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn key(&self, id: usize) -> &str {
        &self.keys[id]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Reorders ids: new id `perm[old]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut keys = vec![String::new(); self.keys.len()];
        for (old, k) in self.keys.iter().enumerate() {
            keys[perm[old]] = k.clone();
        }
        let lookup = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Self { keys, lookup }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub users: IdMap,
    pub items: IdMap,
    pub interactions: Vec<Interaction>,
}

impl Ingested {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.interactions.iter().map(|x| (x.user, x.item)).collect()
    }
}

/// Keeps records with `rating >= min_rating`, drops repeated `(user, item)`
/// pairs, then removes users and items with at most `min_degree`
/// interactions until no entity falls below the threshold.
pub fn ingest(records: &[RawRecord], min_rating: f64, min_degree: usize) -> Result<Ingested> {
    let mut seen_pairs = std::collections::HashSet::new();
    let mut alive: Vec<&RawRecord> = records
        .iter()
        .filter(|r| r.rating >= min_rating)
        .filter(|r| seen_pairs.insert((r.user_key.as_str(), r.item_key.as_str())))
        .collect();

    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for r in &alive {
            *user_deg.entry(&r.user_key).or_default() += 1;
            *item_deg.entry(&r.item_key).or_default() += 1;
        }
        let before = alive.len();
        alive.retain(|r| user_deg[r.user_key.as_str()] > min_degree && item_deg[r.item_key.as_str()] > min_degree);
        if alive.len() == before {
            break;
        }
    }

    if alive.is_empty() {
        return Err(Error::EmptyDomain {
            context: format!(
                "{} records, min_rating {min_rating}, min_degree {min_degree}",
                records.len()
            ),
        });
    }

    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let interactions = alive
        .iter()
        .map(|r| Interaction {
            user: users.intern(&r.user_key),
            item: items.intern(&r.item_key),
            rating: r.rating,
            timestamp: r.timestamp,
        })
        .collect();
    Ok(Ingested {
        users,
        items,
        interactions,
    })
}
