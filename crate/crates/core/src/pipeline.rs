//! End-to-end wiring of one two-domain experiment: split data and features
//! in, trained parameters, reports and recommendations out.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{DomainEncoder, EncoderConfig, ModelParams, Representations};
use crate::error::{Error, Result};
use crate::eval::{evaluate, rank_items, EvalReport, RankingContext, Scorer, Slice};
use crate::features::{build_domain_index, FeatureMatrix, FusionWeight, IndexScope, SimilarityMode};
use crate::graph::{select_templates, DomainGraph, DomainTag, Population, SplitBundle, SplitTag, TemplatePolicy};
use crate::objective::LossWeights;
use crate::scalar::Scalar;
use crate::trainer::{alpha_at, TrainConfig, TrainData, TrainOutcome, TrainState, Trainer};

/// Ablation switches. `mm = false, cd = false` is the INMO-equivalent model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    /// Modality-based neighbor aggregation.
    pub mm: bool,
    /// Cross-domain contrastive loss.
    pub cd: bool,
    pub text: bool,
    pub visual: bool,
}

impl Variant {
    pub const FULL: Variant = Variant {
        mm: true,
        cd: true,
        text: true,
        visual: true,
    };
    pub const NO_MM: Variant = Variant { mm: false, ..Variant::FULL };
    pub const NO_CD: Variant = Variant { cd: false, ..Variant::FULL };
    pub const INMO: Variant = Variant {
        mm: false,
        cd: false,
        ..Variant::FULL
    };

    pub fn name(&self) -> &'static str {
        match (self.mm, self.cd, self.text, self.visual) {
            (false, false, _, _) => "inmo",
            (false, true, _, _) => "no-mm",
            (true, false, true, true) => "no-cd",
            (true, true, true, true) => "full",
            (true, true, false, true) => "no-txt",
            (true, true, true, false) => "no-vis",
            _ => "custom",
        }
    }

    /// Similarity used for aggregation, `None` when aggregation is off.
    pub fn similarity(&self, w: f64) -> Result<Option<SimilarityMode>> {
        if !self.mm {
            return Ok(None);
        }
        match (self.text, self.visual) {
            (true, true) => Ok(Some(SimilarityMode::Fused(FusionWeight::new(w)?))),
            (true, false) => Ok(Some(SimilarityMode::TextOnly)),
            (false, true) => Ok(Some(SimilarityMode::VisualOnly)),
            (false, false) => Err(Error::Config(
                "disabling both modalities leaves nothing to aggregate; use --no-mm instead".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Text weight `w` of the fused similarity.
    pub fusion: f64,
    pub templates: TemplatePolicy,
    pub weights: LossWeights,
    pub train: TrainConfig,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            fusion: 0.9,
            templates: TemplatePolicy::AllSeen,
            weights: LossWeights::default(),
            train: TrainConfig::default(),
            variant: Variant::FULL,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.weights.validate()?;
        self.train.validate()?;
        FusionWeight::new(self.fusion)?;
        self.variant.similarity(self.fusion)?;
        Ok(())
    }

    /// Loss weights with the contrastive term removed for `cd = false`.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if !self.variant.cd {
            w.gamma = 0.0;
        }
        w
    }
}

/// One domain's split interactions and item features.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub tag: DomainTag,
    pub population: Population,
    pub bundle: SplitBundle,
    pub text: FeatureMatrix,
    pub visual: FeatureMatrix,
}

impl DomainData {
    pub fn new(tag: DomainTag, population: Population, bundle: SplitBundle, text: FeatureMatrix, visual: FeatureMatrix) -> Result<Self> {
        bundle.validate(population)?;
        for m in [&text, &visual] {
            if m.n_rows() != population.items {
                return Err(Error::Population(format!(
                    "domain {tag}: {} feature rows for {} items",
                    m.n_rows(),
                    population.items
                )));
            }
        }
        Ok(Self {
            tag,
            population,
            bundle,
            text,
            visual,
        })
    }

    /// Train-edge count of every item.
    pub fn item_train_freq(&self) -> Vec<usize> {
        let mut f = vec![0; self.population.items];
        for &(_, i) in self.bundle.get(SplitTag::Train) {
            f[i] += 1;
        }
        f
    }

    /// Train graph with templates chosen by `policy`.
    pub fn train_graph(&self, policy: TemplatePolicy) -> Result<DomainGraph> {
        let g = DomainGraph::new(self.tag, self.population, self.bundle.get(SplitTag::Train))?;
        let (tu, ti) = select_templates(&g, policy)?;
        g.with_templates(tu, ti)
    }

    /// Validation context: train edges excluded, validation edges relevant.
    pub fn validation_context(&self) -> RankingContext {
        RankingContext::new(
            self.population.users,
            self.population.items,
            &[self.bundle.get(SplitTag::Train)],
            self.bundle.get(SplitTag::Val),
        )
    }

    /// Test context: every observed interaction excluded, test edges relevant.
    pub fn test_context(&self) -> RankingContext {
        RankingContext::new(
            self.population.users,
            self.population.items,
            &[
                self.bundle.get(SplitTag::Train),
                self.bundle.get(SplitTag::New),
                self.bundle.get(SplitTag::Val),
            ],
            self.bundle.get(SplitTag::Test),
        )
    }
}

fn build_encoder<T: Scalar>(data: &DomainData, graph: DomainGraph, cfg: &ModelConfig, scope: IndexScope) -> Result<DomainEncoder<T>> {
    let index = match cfg.variant.similarity(cfg.fusion)? {
        Some(mode) => Some(build_domain_index(&graph, &data.text, &data.visual, mode, cfg.encoder.k, scope)?),
        None => None,
    };
    DomainEncoder::new(graph, index, cfg.encoder)
}

/// Training-time encoders, validation contexts and usable overlap pairs.
pub struct TrainingSetup<T> {
    pub encoders: [DomainEncoder<T>; 2],
    pub validation: [RankingContext; 2],
    pub overlap: Vec<(usize, usize)>,
    pub cfg: ModelConfig,
}

impl<T: Scalar> TrainingSetup<T> {
    /// `overlap` pairs `(user in A, user in B)`; only pairs seen in both
    /// domains take part in training.
    pub fn new(domains: [&DomainData; 2], overlap: &[(usize, usize)], cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        if domains[0].tag != DomainTag::A || domains[1].tag != DomainTag::B {
            return Err(Error::Population("domains must be ordered [A, B]".into()));
        }
        let [a, b] = domains;
        let enc_a = build_encoder(a, a.train_graph(cfg.templates)?, cfg, IndexScope::Seen)?;
        let enc_b = build_encoder(b, b.train_graph(cfg.templates)?, cfg, IndexScope::Seen)?;
        let overlap = overlap
            .iter()
            .copied()
            .filter(|&(ua, ub)| a.population.is_seen_user(ua) && b.population.is_seen_user(ub))
            .collect();
        Ok(Self {
            encoders: [enc_a, enc_b],
            validation: [a.validation_context(), b.validation_context()],
            overlap,
            cfg: *cfg,
        })
    }

    pub fn data(&self) -> TrainData<'_, T> {
        TrainData {
            encoders: [&self.encoders[0], &self.encoders[1]],
            validation: [&self.validation[0], &self.validation[1]],
            overlap: &self.overlap,
        }
    }

    /// Fresh parameters drawn from stream 0 of the run seed.
    pub fn init_params(&self) -> ModelParams<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.train.seed);
        let t = |e: &DomainEncoder<T>| (e.graph().template_users().len(), e.graph().template_items().len());
        ModelParams::init(self.cfg.encoder.dim, [t(&self.encoders[0]), t(&self.encoders[1])], &mut rng)
    }

    pub fn trainer(&self, state: Option<TrainState<T>>) -> Result<Trainer<'_, T>> {
        let w = self.cfg.effective_weights();
        match state {
            Some(s) => Trainer::resume(self.data(), self.cfg.train, w, s),
            None => Trainer::new(self.data(), self.cfg.train, w, self.init_params()),
        }
    }

    pub fn train(&self) -> Result<TrainOutcome<T>> {
        self.trainer(None)?.run()
    }
}

/// α that belongs to the parameters of `best_epoch`.
pub fn inference_alpha(cfg: &TrainConfig, best_epoch: Option<usize>) -> f64 {
    alpha_at(best_epoch.unwrap_or(0), cfg)
}

/// Trained model applied to the full inference graph (`E_tr ∪ E_new`).
pub struct InferenceModel<T> {
    pub encoders: [DomainEncoder<T>; 2],
    pub reps: [Representations<T>; 2],
    pub alpha: f64,
}

impl<T: Scalar> InferenceModel<T> {
    pub fn new(domains: [&DomainData; 2], params: &ModelParams<T>, alpha: f64, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut encoders = Vec::with_capacity(2);
        let mut reps = Vec::with_capacity(2);
        for d in domains {
            let graph = d.train_graph(cfg.templates)?.with_extra_edges(d.bundle.get(SplitTag::New))?;
            let enc = build_encoder::<T>(d, graph, cfg, IndexScope::All)?;
            reps.push(enc.encode_infer(params.domain(d.tag), alpha)?);
            encoders.push(enc);
        }
        let [ea, eb]: [DomainEncoder<T>; 2] = encoders.try_into().map_err(|_| Error::EmptyBatch)?;
        let [ra, rb]: [Representations<T>; 2] = reps.try_into().map_err(|_| Error::EmptyBatch)?;
        Ok(Self {
            encoders: [ea, eb],
            reps: [ra, rb],
            alpha,
        })
    }

    /// Test-set report rows for every `N` and slice of one domain.
    pub fn evaluate(&self, data: &DomainData, ns: &[usize], slices: &[Slice]) -> Result<EvalReport> {
        let ctx = data.test_context();
        let freq = data.item_train_freq();
        let mut report = EvalReport::default();
        for &slice in slices {
            report
                .rows
                .extend(evaluate(data.tag, &self.reps[data.tag.index()], &ctx, ns, slice, &freq)?);
        }
        Ok(report)
    }

    /// Top `n` items for `user` as `(item, score)`, skipping every item the
    /// user is known to have interacted with.
    pub fn recommend(&self, data: &DomainData, user: usize, n: usize) -> Result<Vec<(usize, f64)>> {
        let reps = &self.reps[data.tag.index()];
        if user >= data.population.users {
            return Err(Error::Population(format!("user {user} outside domain {}", data.tag)));
        }
        let mut known: Vec<usize> = [SplitTag::Train, SplitTag::New, SplitTag::Val]
            .iter()
            .flat_map(|&t| data.bundle.get(t).iter().filter(|e| e.0 == user).map(|e| e.1))
            .collect();
        if known.is_empty() {
            return Err(Error::ColdUser(format!("user {user} of domain {} has no observed interactions", data.tag)));
        }
        known.sort_unstable();
        known.dedup();
        let mut scores = vec![0.0; reps.n_items()];
        reps.score_items(user, &mut scores);
        Ok(rank_items(&scores, &known, n).into_iter().map(|i| (i, scores[i])).collect())
    }
}
