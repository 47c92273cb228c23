//! The full pipeline for one document: encode the present modalities,
//! substitute (or blank-fill) the missing one, fuse both directions, then
//! run the task heads for losses and/or predictions.

use mmie_core::nn::Initializer;
use mmie_core::{DenseArray, Graph, NumericError, ParamTree, Var};
use mmie_data::prediction::decode_chains;
use mmie_data::{tags, BBox, Document, GroundingType, Prediction, Region, RelationTriple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::dffm::{self, LatentCtx};
use crate::encoders::{self, Levels};
use crate::error::{ModelError, Result};
use crate::heads::{self, CrfVars, Losses};
use crate::mmcm;

/// Smallest side kept when clipping predicted boxes to the unit square.
pub const MIN_BOX_SIDE: f64 = 1e-3;

/// Fresh parameters for `cfg`, drawn from one seeded stream.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamTree> {
    cfg.validate()?;
    let mut tree = ParamTree::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = Initializer::new(&mut tree, &mut rng);
    encoders::init(&mut init, &cfg.dims)?;
    dffm::init(&mut init, &cfg.dims, &cfg.dffm)?;
    mmcm::init(&mut init, &cfg.dims, cfg.mmcm.prompt_len)?;
    heads::init(&mut init, &cfg.dims, cfg.num_relation_classes())?;
    Ok(tree)
}

/// Which entity set coreference and relation decisions are made over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Gold entities and gold chains.
    #[default]
    GoldPairs,
    /// The model's own predicted entities and chains.
    PredictedPairs,
}

/// Fused representations consumed by the heads.
struct Features {
    /// `[n_x, d_h]`
    text: Var,
    /// `[n_g, d_h]`; absent when the document has no frames.
    frames: Option<Var>,
}

fn features(g: &mut Graph, cfg: &ModelConfig, doc: &Document, ctx: &mut LatentCtx) -> Result<Features> {
    let d = &cfg.dims;
    let (n_x, n_g) = (doc.tokens.len(), doc.frames.len());
    if n_x == 0 {
        return Err(ModelError::input(&doc.id, "document has no tokens"));
    }
    let mask = doc.modality_mask;
    let text_real = if mask.has_text() {
        let layers = encoders::text_layers(g, d, &doc.tokens)?;
        Some(encoders::bucket(g, &layers)?)
    } else {
        None
    };
    let image_real = if mask.has_video() && n_g > 0 {
        let layers = encoders::frame_layers(g, d, &doc.frames)?;
        Some(encoders::bucket(g, &layers)?)
    } else {
        None
    };

    let text: Levels<Var> = match (&text_real, &image_real) {
        (Some(t), _) => t.clone(),
        (None, Some(img)) if cfg.mmcm.enabled => mmcm::construct(g, mmcm::G2T, img.base, n_x, d.conv_width)?,
        (None, _) => mmcm::blank(g, n_x, d.d_h),
    };
    let image: Option<Levels<Var>> = match (&image_real, &text_real) {
        _ if n_g == 0 => None,
        (Some(i), _) => Some(i.clone()),
        (None, Some(t)) if cfg.mmcm.enabled => {
            Some(mmcm::construct(g, mmcm::T2G, t.base, n_g * d.n_p, d.conv_width)?)
        }
        (None, _) => Some(mmcm::blank(g, n_g * d.n_p, d.d_h)),
    };

    let hx = dffm::fuse_g_to_x(g, &cfg.dffm, d.heads, &text, image.as_ref(), ctx)?;
    let hg = match &image {
        Some(i) => Some(dffm::fuse_x_to_g(g, &cfg.dffm, d, n_g, i, &text, ctx)?),
        None => None,
    };
    Ok(Features { text: hx, frames: hg })
}

fn spans(entities: &[mmie_data::Entity]) -> Vec<(usize, usize)> {
    entities.iter().map(|e| e.span()).collect()
}

/// Loss nodes for every component plus their weighted total.
fn loss_graph(
    g: &mut Graph,
    cfg: &ModelConfig,
    doc: &Document,
    f: &Features,
    crf: &CrfVars,
    ctx: &LatentCtx,
) -> Result<(Losses, Var)> {
    let n_x = doc.tokens.len();
    let alpha = &cfg.loss.alpha;
    let mut terms: Vec<Var> = Vec::new();
    let mut out = Losses::default();
    let mut add = |g: &mut Graph, v: Var, weight: f64, slot: &mut f64| {
        *slot = g.value(v).item();
        terms.push(g.scale(v, weight));
    };

    let gold_tags = tags::encode(&doc.entities, n_x);
    let ent = heads::crf_loss(g, crf, &gold_tags)?;
    add(g, ent, alpha.ent, &mut out.ent);

    let n_e = doc.entities.len();
    if n_e >= 2 {
        let reps = heads::pool(g, heads::span_matrix(&spans(&doc.entities), n_x)?, f.text)?;
        let owner = doc.chain_of_entity();
        let pairs = heads::unordered_pairs(n_e);
        let targets: Vec<usize> = pairs.iter().map(|&(a, b)| usize::from(owner[a] == owner[b])).collect();
        let logits = heads::pair_logits(g, heads::COREF, reps, &pairs)?;
        let cha = g.cross_entropy(logits, &targets)?;
        add(g, cha, alpha.cha, &mut out.cha);

        let n_c = doc.chains.len();
        if n_c >= 2 {
            let creps = heads::pool(g, heads::chain_matrix(&doc.chains, n_e)?, reps)?;
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for (a, b) in heads::ordered_pairs(n_c) {
                let mut labelled = false;
                for r in doc.relations.iter().filter(|r| r.sub == a && r.obj == b) {
                    let k = cfg.relations.iter().position(|l| *l == r.rtype).ok_or_else(|| {
                        ModelError::input(&doc.id, format!("relation label `{}` unknown to the model", r.rtype))
                    })?;
                    rows.push((a, b));
                    targets.push(k + 1);
                    labelled = true;
                }
                if !labelled {
                    rows.push((a, b));
                    targets.push(0);
                }
            }
            let logits = heads::pair_logits(g, heads::REL, creps, &rows)?;
            let rel = g.cross_entropy(logits, &targets)?;
            add(g, rel, alpha.rel, &mut out.rel);
        }
    }

    if let Some(frames) = f.frames {
        let (types, boxes) = heads::grounding_vars(g, frames)?;
        let n_g = doc.frames.len();
        let regions: Vec<Option<&Region>> = (0..n_g).map(|k| doc.region_on(k)).collect();
        let targets: Vec<usize> = regions.iter().map(|r| r.map_or(0, |r| 1 + r.vtype.index())).collect();
        let gro_t = g.cross_entropy(types, &targets)?;
        add(g, gro_t, alpha.gro_t, &mut out.gro_t);
        let rows: Vec<usize> = (0..n_g).filter(|&k| regions[k].is_some()).collect();
        let coords: Vec<[f64; 4]> = rows
            .iter()
            .map(|&k| {
                let r = regions[k].expect("filtered");
                [r.cx, r.cy, r.w, r.h]
            })
            .collect();
        if let Some(gro_b) = heads::box_loss(g, boxes, &rows, &coords)? {
            add(g, gro_b, alpha.gro_b, &mut out.gro_b);
        }
    }

    if let Some(kl) = ctx.kl(g)? {
        add(g, kl, cfg.dffm.kl_weight, &mut out.kl);
    }
    let total = g.add_all(&terms)?;
    out.total = g.value(total).item();
    if !out.total.is_finite() {
        return Err(NumericError::NonFinite {
            context: format!("loss of document `{}`", doc.id),
        }
        .into());
    }
    Ok((out, total))
}

fn decode(g: &mut Graph, cfg: &ModelConfig, doc: &Document, f: &Features, crf: &CrfVars, mode: PairMode) -> Result<Prediction> {
    let n_x = doc.tokens.len();
    let tag_ids = heads::crf_decode(g, crf)?;
    let entities = tags::decode(&tag_ids);
    let mentions = match mode {
        PairMode::GoldPairs => doc.entities.clone(),
        PairMode::PredictedPairs => entities.clone(),
    };

    let reps = if mentions.is_empty() {
        None
    } else {
        Some(heads::pool(g, heads::span_matrix(&spans(&mentions), n_x)?, f.text)?)
    };
    let mut coref_pairs = Vec::new();
    if let (Some(reps), true) = (reps, mentions.len() >= 2) {
        let pairs = heads::unordered_pairs(mentions.len());
        let logits = heads::pair_logits(g, heads::COREF, reps, &pairs)?;
        let logits = g.value(logits);
        coref_pairs = pairs
            .into_iter()
            .enumerate()
            .filter(|(r, _)| heads::argmax(logits.row(*r)) == 1)
            .map(|(_, p)| p)
            .collect();
    }
    let chains = decode_chains(&coref_pairs, mentions.len());
    let relation_chains = match mode {
        PairMode::GoldPairs => doc.chains.clone(),
        PairMode::PredictedPairs => chains.clone(),
    };

    let mut relations = Vec::new();
    if let (Some(reps), true) = (reps, relation_chains.len() >= 2) {
        let creps = heads::pool(g, heads::chain_matrix(&relation_chains, mentions.len())?, reps)?;
        let pairs = heads::ordered_pairs(relation_chains.len());
        let logits = heads::pair_logits(g, heads::REL, creps, &pairs)?;
        let logits = g.value(logits);
        for (r, (sub, obj)) in pairs.into_iter().enumerate() {
            let k = heads::argmax(logits.row(r));
            if k > 0 {
                relations.push(RelationTriple { sub, obj, rtype: cfg.relations[k - 1].clone() });
            }
        }
    }

    let mut regions = Vec::new();
    if let Some(frames) = f.frames {
        let (types, boxes) = heads::grounding_vars(g, frames)?;
        let (types, boxes) = (g.value(types), g.value(boxes));
        for frame in 0..types.rows() {
            let k = heads::argmax(types.row(frame));
            let Some(vtype) = k.checked_sub(1).and_then(GroundingType::from_index) else { continue };
            let b = boxes.row(frame);
            let b = BBox { cx: b[0], cy: b[1], w: b[2], h: b[3] }.clipped(MIN_BOX_SIDE);
            regions.push(Region { frame, vtype, cx: b.cx, cy: b.cy, w: b.w, h: b.h });
        }
    }

    Ok(Prediction {
        tags: tag_ids.into_iter().map(tags::tag_name).collect(),
        entities,
        mentions,
        coref_pairs,
        chains,
        relations,
        relation_chains: (mode == PairMode::GoldPairs).then_some(relation_chains),
        regions,
    })
}

/// Training step quantities: component losses and the gradient of the
/// weighted total. `noise_seed` drives latent sampling in sample mode.
pub fn loss_and_grads(params: &ParamTree, cfg: &ModelConfig, doc: &Document, noise_seed: u64) -> Result<(Losses, ParamTree)> {
    loss_and_grads_traced(params, cfg, doc, noise_seed).map(|(l, g, _)| (l, g))
}

/// [`loss_and_grads`] plus the graph's branch signature, for gradient
/// checks that must avoid ReLU kinks.
pub fn loss_and_grads_traced(
    params: &ParamTree,
    cfg: &ModelConfig,
    doc: &Document,
    noise_seed: u64,
) -> Result<(Losses, ParamTree, u64)> {
    let mut g = Graph::with_params(params);
    let mut ctx = LatentCtx::new(&cfg.dffm, ChaCha8Rng::seed_from_u64(noise_seed));
    let f = features(&mut g, cfg, doc, &mut ctx)?;
    let crf = heads::crf_vars(&mut g, f.text)?;
    let (losses, total) = loss_graph(&mut g, cfg, doc, &f, &crf, &ctx)?;
    let grads = g.backward(total);
    Ok((losses, g.param_grads(&grads), g.branch_signature()))
}

/// Inference-mode (mean latent) losses and predictions.
pub fn forward(params: &ParamTree, cfg: &ModelConfig, doc: &Document, mode: PairMode) -> Result<(Losses, Prediction)> {
    let mut g = Graph::with_params(params);
    let mut ctx = LatentCtx::inference(&cfg.dffm);
    let f = features(&mut g, cfg, doc, &mut ctx)?;
    let crf = heads::crf_vars(&mut g, f.text)?;
    let (losses, _) = loss_graph(&mut g, cfg, doc, &f, &crf, &ctx)?;
    let pred = decode(&mut g, cfg, doc, &f, &crf, mode)?;
    Ok((losses, pred))
}

/// Inference-mode predictions. Gold annotations are read only in
/// gold-pairs mode, for the entity and chain sets.
pub fn predict(params: &ParamTree, cfg: &ModelConfig, doc: &Document, mode: PairMode) -> Result<Prediction> {
    let mut g = Graph::with_params(params);
    let mut ctx = LatentCtx::inference(&cfg.dffm);
    let f = features(&mut g, cfg, doc, &mut ctx)?;
    let crf = heads::crf_vars(&mut g, f.text)?;
    decode(&mut g, cfg, doc, &f, &crf, mode)
}

/// Fused text `[n_x, d_h]` and frame `[n_g, d_h]` representations.
pub fn fused_features(params: &ParamTree, cfg: &ModelConfig, doc: &Document) -> Result<(DenseArray, Option<DenseArray>)> {
    let mut g = Graph::with_params(params);
    let f = features(&mut g, cfg, doc, &mut LatentCtx::mean())?;
    Ok((g.value(f.text).clone(), f.frames.map(|v| g.value(v).clone())))
}
