//! Planted two-domain generator: users and items belong to preference
//! blocks shared across domains, interactions follow a latent-factor model
//! with item popularity, and item features are noisy projections of the
//! item latents.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index::sample_weighted;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::graph::{DomainTag, IdMap, RawRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Users per domain.
    pub users: usize,
    /// Share of each domain's users present in both domains.
    pub overlap_frac: f64,
    pub items: [usize; 2],
    /// Mean interactions per user in each domain.
    pub degree: [usize; 2],
    pub blocks: usize,
    pub latent_dim: usize,
    /// Distance of block centers from the origin.
    pub separation: f64,
    pub user_noise: f64,
    pub item_noise: f64,
    /// Spread of log item popularity.
    pub popularity: f64,
    pub text_dim: usize,
    pub visual_dim: usize,
    pub feature_noise: f64,
    /// Extra records with ratings below 4, removed by the rating filter.
    pub low_rating_frac: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 200,
            overlap_frac: 0.3,
            items: [120, 120],
            degree: [20, 4],
            blocks: 2,
            latent_dim: 4,
            separation: 1.5,
            user_noise: 0.6,
            item_noise: 0.6,
            popularity: 0.8,
            text_dim: 16,
            visual_dim: 24,
            feature_noise: 0.3,
            low_rating_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthItem {
    pub key: String,
    pub block: usize,
    pub text: Vec<f64>,
    pub visual: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub records: [Vec<RawRecord>; 2],
    pub items: [Vec<SynthItem>; 2],
    /// Keys of users present in both domains.
    pub overlap: Vec<String>,
    /// Preference block of each user key.
    pub user_block: HashMap<String, usize>,
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std.max(0.0)).expect("finite std");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn project<R: Rng>(rng: &mut R, m: &[Vec<f64>], y: &[f64], noise: f64) -> Vec<f64> {
    let eps = gaussian_vec(rng, m.len(), noise);
    m.iter()
        .zip(eps)
        .map(|(row, e)| row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + e)
        .collect()
}

pub fn user_key(person: usize) -> String {
    format!("u{person:05}")
}

pub fn item_key(tag: DomainTag, i: usize) -> String {
    format!("{tag}-i{i:05}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.blocks == 0 || cfg.latent_dim == 0 || cfg.users == 0 {
        return Err(Error::Config("synthetic generator needs blocks, latent_dim and users >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.overlap_frac) {
        return Err(Error::Config(format!("overlap_frac {} not in [0, 1]", cfg.overlap_frac)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: Vec<Vec<f64>> = (0..cfg.blocks)
        .map(|_| {
            let v = gaussian_vec(&mut rng, cfg.latent_dim, 1.0);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter().map(|x| cfg.separation * x / n).collect()
        })
        .collect();
    let text_proj: Vec<Vec<f64>> = (0..cfg.text_dim).map(|_| gaussian_vec(&mut rng, cfg.latent_dim, 1.0)).collect();
    let visual_proj: Vec<Vec<f64>> = (0..cfg.visual_dim).map(|_| gaussian_vec(&mut rng, cfg.latent_dim, 1.0)).collect();

    let n_overlap = (cfg.overlap_frac * cfg.users as f64).round() as usize;
    let n_persons = 2 * cfg.users - n_overlap;
    let persons: Vec<(usize, Vec<f64>)> = (0..n_persons)
        .map(|_| {
            let b = rng.gen_range(0..cfg.blocks);
            (b, add(&centers[b], &gaussian_vec(&mut rng, cfg.latent_dim, cfg.user_noise)))
        })
        .collect();
    let members = [0..cfg.users, (cfg.users - n_overlap)..n_persons];

    let mut records: [Vec<RawRecord>; 2] = Default::default();
    let mut items: [Vec<SynthItem>; 2] = Default::default();
    for tag in DomainTag::BOTH {
        let d = tag.index();
        let n_items = cfg.items[d];
        let mut latents = Vec::with_capacity(n_items);
        let mut log_pop = Vec::with_capacity(n_items);
        for i in 0..n_items {
            let b = i % cfg.blocks;
            let y = add(&centers[b], &gaussian_vec(&mut rng, cfg.latent_dim, cfg.item_noise));
            items[d].push(SynthItem {
                key: item_key(tag, i),
                block: b,
                text: project(&mut rng, &text_proj, &y, cfg.feature_noise),
                visual: project(&mut rng, &visual_proj, &y, cfg.feature_noise),
            });
            latents.push(y);
            log_pop.push(gaussian_vec(&mut rng, 1, cfg.popularity)[0]);
        }
        let mut ts = 0i64;
        for p in members[d].clone() {
            let z = &persons[p].1;
            let deg = cfg.degree[d];
            let lo = (deg / 2).max(1);
            let n = rng.gen_range(lo..=deg + deg / 2).min(n_items);
            let weights: Vec<f64> = latents
                .iter()
                .zip(&log_pop)
                .map(|(y, lp)| (z.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + lp).exp())
                .collect();
            let chosen = sample_weighted(&mut rng, n_items, |i| weights[i], n)
                .map_err(|e| Error::Config(format!("synthetic sampling failed: {e}")))?;
            for i in chosen.iter() {
                ts += 1;
                records[d].push(RawRecord {
                    user_key: user_key(p),
                    item_key: item_key(tag, i),
                    rating: 5.0,
                    timestamp: Some(ts),
                });
                if rng.gen::<f64>() < cfg.low_rating_frac {
                    ts += 1;
                    records[d].push(RawRecord {
                        user_key: user_key(p),
                        item_key: item_key(tag, rng.gen_range(0..n_items)),
                        rating: rng.gen_range(1..=3) as f64,
                        timestamp: Some(ts),
                    });
                }
            }
        }
    }
    let overlap = members[1].clone().take(n_overlap).map(user_key).collect();
    let user_block = persons.iter().enumerate().map(|(p, (b, _))| (user_key(p), *b)).collect();
    Ok(SynthDataset {
        records,
        items,
        overlap,
        user_block,
    })
}

impl SynthDataset {
    /// Text and visual feature matrices ordered by `ids`.
    pub fn features(&self, tag: DomainTag, ids: &IdMap) -> Result<(FeatureMatrix, FeatureMatrix)> {
        let by_key: HashMap<&str, &SynthItem> = self.items[tag.index()].iter().map(|it| (it.key.as_str(), it)).collect();
        let mut text = Vec::with_capacity(ids.len());
        let mut visual = Vec::with_capacity(ids.len());
        for k in ids.keys() {
            let it = by_key
                .get(k.as_str())
                .ok_or_else(|| Error::Population(format!("unknown synthetic item {k:?}")))?;
            text.push(it.text.clone());
            visual.push(it.visual.clone());
        }
        Ok((
            FeatureMatrix::from_rows(Modality::Text, &text)?,
            FeatureMatrix::from_rows(Modality::Visual, &visual)?,
        ))
    }
}

/// Raw records as `user<TAB>item<TAB>rating<TAB>timestamp` lines.
pub fn write_records<W: Write>(mut w: W, records: &[RawRecord]) -> std::io::Result<()> {
    for r in records {
        match r.timestamp {
            Some(t) => writeln!(w, "{}\t{}\t{}\t{}", r.user_key, r.item_key, r.rating, t)?,
            None => writeln!(w, "{}\t{}\t{}", r.user_key, r.item_key, r.rating)?,
        }
    }
    Ok(())
}
