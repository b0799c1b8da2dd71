use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Population, SplitBundle, SplitTag};
use crate::error::{Error, Result};

/// First line of a split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitHeader {
    pub format: String,
    pub domain: String,
    pub seed: u64,
    pub users: usize,
    pub seen_users: usize,
    pub items: usize,
    pub seen_items: usize,
    pub train: usize,
    pub val: usize,
    pub new: usize,
    pub test: usize,
}

impl SplitHeader {
    pub const FORMAT: &'static str = "MICREC-SPLIT v1";

    pub fn new(domain: &str, seed: u64, pop: Population, bundle: &SplitBundle) -> Self {
        Self {
            format: Self::FORMAT.to_string(),
            domain: domain.to_string(),
            seed,
            users: pop.users,
            seen_users: pop.seen_users,
            items: pop.items,
            seen_items: pop.seen_items,
            train: bundle.train.len(),
            val: bundle.val.len(),
            new: bundle.new.len(),
            test: bundle.test.len(),
        }
    }

    pub fn population(&self) -> Population {
        Population {
            users: self.users,
            seen_users: self.seen_users,
            items: self.items,
            seen_items: self.seen_items,
        }
    }
}

/// JSON header line, then `u<TAB>i<TAB>tag` per interaction in split order.
pub fn write_split_manifest<W: Write>(mut w: W, header: &SplitHeader, bundle: &SplitBundle) -> Result<()> {
    let io = |e| Error::io("<split manifest>", e);
    let json = serde_json::to_string(header).expect("header serializes");
    writeln!(w, "{json}").map_err(io)?;
    for tag in SplitTag::ALL {
        for &(u, i) in bundle.get(tag) {
            writeln!(w, "{u}\t{i}\t{tag}").map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_split_manifest<R: BufRead>(r: R, source: &str) -> Result<(SplitHeader, SplitBundle)> {
    let mut lines = r.lines();
    let bad = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let first = lines
        .next()
        .ok_or_else(|| bad(1, "empty manifest".into()))?
        .map_err(|e| bad(1, e.to_string()))?;
    let header: SplitHeader = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    if header.format != SplitHeader::FORMAT {
        return Err(Error::Version(format!("{source}: unsupported split format {:?}", header.format)));
    }
    let mut bundle = SplitBundle::default();
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(|e| bad(line_no, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(line_no, format!("expected 3 fields, got {}", f.len())));
        }
        let u = f[0].parse().map_err(|_| bad(line_no, format!("bad user id {:?}", f[0])))?;
        let i = f[1].parse().map_err(|_| bad(line_no, format!("bad item id {:?}", f[1])))?;
        let tag: SplitTag = f[2].parse().map_err(|_| bad(line_no, format!("bad tag {:?}", f[2])))?;
        bundle.get_mut(tag).push((u, i));
    }
    let counts = [bundle.train.len(), bundle.val.len(), bundle.new.len(), bundle.test.len()];
    if counts != [header.train, header.val, header.new, header.test] {
        return Err(bad(1, format!("header counts disagree with body {counts:?}")));
    }
    bundle.validate(header.population())?;
    Ok((header, bundle))
}
