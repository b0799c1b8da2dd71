use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DomainGraph, Population};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub unseen_frac: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Share of each user's unseen-touching edges revealed as `new`.
    pub new_frac: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            unseen_frac: 0.2,
            train_frac: 0.7,
            val_frac: 0.15,
            test_frac: 0.15,
            new_frac: 0.5,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.unseen_frac) {
            return Err(Error::Config(format!("unseen_frac {} not in [0, 1)", self.unseen_frac)));
        }
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("train/val/test fractions {fr:?} must sum to 1")));
        }
        if !(0.0..=1.0).contains(&self.new_frac) {
            return Err(Error::Config(format!("new_frac {} not in [0, 1]", self.new_frac)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Val,
    New,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 4] = [SplitTag::Train, SplitTag::Val, SplitTag::New, SplitTag::Test];
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::New => "new",
            SplitTag::Test => "test",
        })
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "new" => Ok(SplitTag::New),
            "test" => Ok(SplitTag::Test),
            _ => Err(Error::Config(format!("unknown split tag {s:?}"))),
        }
    }
}

/// Interaction sets of one domain, ids already relabeled so seen entities
/// form the prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitBundle {
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub new: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

impl SplitBundle {
    pub fn get(&self, tag: SplitTag) -> &[(usize, usize)] {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::New => &self.new,
            SplitTag::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, tag: SplitTag) -> &mut Vec<(usize, usize)> {
        match tag {
            SplitTag::Train => &mut self.train,
            SplitTag::Val => &mut self.val,
            SplitTag::New => &mut self.new,
            SplitTag::Test => &mut self.test,
        }
    }

    /// Checks the bundle invariants against `pop`.
    pub fn validate(&self, pop: Population) -> Result<()> {
        let seen = |&(u, i): &(usize, usize)| pop.is_seen_user(u) && pop.is_seen_item(i);
        if let Some(e) = self.train.iter().chain(&self.val).find(|e| !seen(e)) {
            return Err(Error::Population(format!("train/val edge {e:?} touches an unseen entity")));
        }
        if let Some(e) = self.new.iter().find(|e| seen(e)) {
            return Err(Error::Population(format!("new edge {e:?} touches no unseen entity")));
        }
        let mut all = std::collections::HashSet::new();
        for tag in SplitTag::ALL {
            for &e in self.get(tag) {
                if e.0 >= pop.users || e.1 >= pop.items {
                    return Err(Error::Population(format!("edge {e:?} out of range")));
                }
                if !all.insert(e) {
                    return Err(Error::Population(format!("edge {e:?} appears in two splits")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.new.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct InductiveSplit {
    pub bundle: SplitBundle,
    /// Full relabeled graph (all edges) with its seen/unseen population.
    pub graph: DomainGraph,
    /// `user_perm[old] = new`
    pub user_perm: Vec<usize>,
    pub item_perm: Vec<usize>,
}

fn relabel(n: usize, unseen: &[bool]) -> Vec<usize> {
    let mut perm = vec![0; n];
    let mut next = 0;
    for pass_unseen in [false, true] {
        for old in 0..n {
            if unseen[old] == pass_unseen {
                perm[old] = next;
                next += 1;
            }
        }
    }
    perm
}

fn count_for(frac: f64, n: usize) -> usize {
    if frac <= 0.0 {
        0
    } else {
        ((frac * n as f64).floor() as usize).max(1)
    }
}

/// Samples unseen users and items, relabels ids and partitions every edge of
/// `graph` into train/val/new/test.
pub fn make_inductive_split(graph: &DomainGraph, cfg: &SplitConfig) -> Result<InductiveSplit> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n_users, n_items) = (graph.n_users(), graph.n_items());
    let k_users = (cfg.unseen_frac * n_users as f64).floor() as usize;
    let k_items = (cfg.unseen_frac * n_items as f64).floor() as usize;
    let mut unseen_users = vec![false; n_users];
    let mut unseen_items = vec![false; n_items];
    for u in sample(&mut rng, n_users, k_users) {
        unseen_users[u] = true;
    }
    for i in sample(&mut rng, n_items, k_items) {
        unseen_items[i] = true;
    }
    let user_perm = relabel(n_users, &unseen_users);
    let item_perm = relabel(n_items, &unseen_items);
    let population = Population {
        users: n_users,
        seen_users: n_users - k_users,
        items: n_items,
        seen_items: n_items - k_items,
    };

    let edges: Vec<(usize, usize)> = graph.edges().map(|(u, i)| (user_perm[u], item_perm[i])).collect();
    let relabeled = DomainGraph::new(graph.tag(), population, &edges)?;

    let mut bundle = SplitBundle::default();
    for u in 0..n_users {
        let (mut seen_items, mut unseen_touching): (Vec<usize>, Vec<usize>) = relabeled
            .user_items(u)
            .iter()
            .partition(|&&i| population.is_seen_user(u) && population.is_seen_item(i));

        if !seen_items.is_empty() {
            seen_items.shuffle(&mut rng);
            let n = seen_items.len();
            if n < 3 {
                bundle.train.extend(seen_items.iter().map(|&i| (u, i)));
            } else {
                let n_val = count_for(cfg.val_frac, n);
                let n_test = count_for(cfg.test_frac, n).min(n - n_val - 1);
                let n_val = n_val.min(n - n_test - 1);
                let (val, rest) = seen_items.split_at(n_val);
                let (test, train) = rest.split_at(n_test);
                bundle.val.extend(val.iter().map(|&i| (u, i)));
                bundle.test.extend(test.iter().map(|&i| (u, i)));
                bundle.train.extend(train.iter().map(|&i| (u, i)));
            }
        }

        if !unseen_touching.is_empty() {
            unseen_touching.shuffle(&mut rng);
            let n = unseen_touching.len();
            let n_new = ((cfg.new_frac * n as f64).ceil() as usize).min(n);
            let (new, test) = unseen_touching.split_at(n_new);
            bundle.new.extend(new.iter().map(|&i| (u, i)));
            bundle.test.extend(test.iter().map(|&i| (u, i)));
        }
    }
    for tag in SplitTag::ALL {
        bundle.get_mut(tag).sort_unstable();
    }
    bundle.validate(population)?;
    Ok(InductiveSplit {
        bundle,
        graph: relabeled,
        user_perm,
        item_perm,
    })
}
