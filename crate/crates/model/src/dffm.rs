//! Latent cross-modal fusion. For each direction and level, queries from
//! one modality's base features and projected keys/values from the other
//! modality's level features pass through a shared VAE encoder; attention
//! and a feed-forward step with residuals run in latent space, and the
//! decoder maps back to `d_h`. Levels are recombined with learned mixing
//! weights. The image direction then pools patches per frame and adds frame
//! position embeddings.

use mmie_core::array::pool_matrix;
use mmie_core::nn::{self, Initializer};
use mmie_core::{DenseArray, Graph, ParamTree, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{DffmConfig, Dims, FramePositions, VaeMode};
use crate::encoders::Levels;
use crate::error::{ModelError, Result};

pub const G2X: &str = "dffm.g2x";
pub const X2G: &str = "dffm.x2g";
pub const POS: &str = "dffm.pos";
const LEVELS: [&str; 3] = ["low", "mid", "high"];

pub(crate) fn init<R: Rng>(init: &mut Initializer<'_, R>, d: &Dims, cfg: &DffmConfig) -> Result<()> {
    let std_h = 1.0 / (d.d_h as f64).sqrt();
    for dir in [G2X, X2G] {
        for level in LEVELS {
            let p = format!("{dir}.{level}");
            init.normal(&format!("{p}.wk"), &[d.d_h, d.d_h], std_h)?;
            init.normal(&format!("{p}.wv"), &[d.d_h, d.d_h], std_h)?;
            init.linear(&format!("{p}.vae.mean"), d.d_h, d.d_vae)?;
            init.linear(&format!("{p}.vae.log_var"), d.d_h, d.d_vae)?;
            init.linear(&format!("{p}.vae.dec"), d.d_vae, d.d_h)?;
            init.attention(&format!("{p}.attn"), d.d_vae)?;
            init.ffn(&format!("{p}.ffn"), d.d_vae, 4 * d.d_vae)?;
            if !cfg.uses_log_var() {
                init.tree.set_trainable(&format!("{p}.vae.log_var"), false);
            }
        }
    }
    // fusion starts as a small perturbation of the base features
    let std_mix = 0.1 * std_h;
    for side in ["x", "g"] {
        for term in LEVELS {
            init.normal(&format!("dffm.mix.{side}.{term}"), &[d.d_h, d.d_h], std_mix)?;
        }
        init.tree.insert(format!("dffm.mix.{side}.base"), DenseArray::eye(d.d_h), true)?;
    }
    match cfg.positions {
        FramePositions::Learned => init.normal(POS, &[d.max_frames, d.d_h], 0.1)?,
        FramePositions::Sinusoidal => init.tree.insert(POS, sinusoid(d.max_frames, d.d_h), false)?,
    }
    Ok(())
}

/// Fixed `sin`/`cos` position table `[n, d]`.
pub fn sinusoid(n: usize, d: usize) -> DenseArray {
    let mut out = DenseArray::zeros(&[n, d]);
    for pos in 0..n {
        for i in 0..d {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 * freq;
            out.row_mut(pos)[i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    out
}

/// Latent sampling state for one forward pass.
pub struct LatentCtx {
    pub mode: VaeMode,
    rng: Option<ChaCha8Rng>,
    collect_kl: bool,
    kl_terms: Vec<Var>,
}

impl LatentCtx {
    /// Deterministic mean latents.
    pub fn mean() -> Self {
        Self {
            mode: VaeMode::Mean,
            rng: None,
            collect_kl: false,
            kl_terms: Vec::new(),
        }
    }

    /// Mean latents, still collecting KL terms when `cfg` weights them.
    pub fn inference(cfg: &DffmConfig) -> Self {
        Self {
            collect_kl: cfg.kl_weight > 0.0,
            ..Self::mean()
        }
    }

    /// Latents per `cfg`, with noise from `rng` in sample mode.
    pub fn new(cfg: &DffmConfig, rng: ChaCha8Rng) -> Self {
        Self {
            mode: cfg.vae_mode,
            rng: Some(rng),
            collect_kl: cfg.kl_weight > 0.0,
            kl_terms: Vec::new(),
        }
    }

    /// Mean over latent matrices of their per-row KL to a unit Gaussian.
    pub fn kl(&self, g: &mut Graph) -> Result<Option<Var>> {
        if self.kl_terms.is_empty() {
            return Ok(None);
        }
        let s = g.add_all(&self.kl_terms)?;
        Ok(Some(g.scale(s, 1.0 / self.kl_terms.len() as f64)))
    }
}

/// Graph-side latent of a `[n, d_h]` input.
#[derive(Debug, Clone, Copy)]
pub struct LatentVars {
    pub mean: Var,
    pub log_var: Option<Var>,
    pub sample: Var,
}

pub fn vae_encode_graph(g: &mut Graph, prefix: &str, x: Var, ctx: &mut LatentCtx) -> Result<LatentVars> {
    let mean = nn::linear(g, &format!("{prefix}.vae.mean"), x)?;
    let sampling = ctx.mode == VaeMode::Sample;
    if !sampling && !ctx.collect_kl {
        return Ok(LatentVars { mean, log_var: None, sample: mean });
    }
    let log_var = nn::linear(g, &format!("{prefix}.vae.log_var"), x)?;
    if ctx.collect_kl {
        // 0.5 * Σ (μ² + e^lv − 1 − lv), averaged over rows
        let rows = g.value(mean).rows().max(1) as f64;
        let mu2 = g.mul(mean, mean)?;
        let e = g.exp(log_var);
        let t = g.add(mu2, e)?;
        let t = g.sub(t, log_var)?;
        let t = g.add_scalar(t, -1.0);
        let t = g.sum(t);
        let t = g.scale(t, 0.5 / rows);
        ctx.kl_terms.push(t);
    }
    let sample = if sampling {
        let shape = g.value(mean).shape().to_vec();
        let n: usize = shape.iter().product();
        let rng = ctx
            .rng
            .as_mut()
            .ok_or_else(|| ModelError::Config("sample mode needs a noise stream".into()))?;
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let eps = g.constant(DenseArray::new(shape, eps)?);
        let half = g.scale(log_var, 0.5);
        let std = g.exp(half);
        let noise = g.mul(std, eps)?;
        g.add(mean, noise)?
    } else {
        mean
    };
    Ok(LatentVars { mean, log_var: Some(log_var), sample })
}

pub fn vae_decode_graph(g: &mut Graph, prefix: &str, z: Var) -> Result<Var> {
    Ok(nn::linear(g, &format!("{prefix}.vae.dec"), z)?)
}

/// One (direction, level) fusion: `Decoder(Ĥ + FFN(Ĥ))` with
/// `Ĥ = Z_q + MHA(Z_q, Z_k, Z_v)`, where `Z_q = Enc(q)`,
/// `Z_k = Enc(kv · W^K)`, `Z_v = Enc(kv · W^V)`.
pub fn fuse_level(g: &mut Graph, prefix: &str, q: Var, kv: Var, heads: usize, ctx: &mut LatentCtx) -> Result<Var> {
    let k = nn::project(g, &format!("{prefix}.wk"), kv)?;
    let v = nn::project(g, &format!("{prefix}.wv"), kv)?;
    let zq = vae_encode_graph(g, prefix, q, ctx)?.sample;
    let zk = vae_encode_graph(g, prefix, k, ctx)?.sample;
    let zv = vae_encode_graph(g, prefix, v, ctx)?.sample;
    let a = nn::multi_head_attention(g, &format!("{prefix}.attn"), zq, zk, zv, heads)?;
    let h = g.add(zq, a)?;
    let f = nn::ffn(g, &format!("{prefix}.ffn"), h)?;
    let h = g.add(h, f)?;
    vae_decode_graph(g, prefix, h)
}

fn mix(g: &mut Graph, side: &str, fused: Option<[Var; 3]>, base: Var) -> Result<Var> {
    let mut terms = vec![nn::project(g, &format!("dffm.mix.{side}.base"), base)?];
    if let Some(fused) = fused {
        for (level, h) in LEVELS.iter().zip(fused) {
            terms.push(nn::project(g, &format!("dffm.mix.{side}.{level}"), h)?);
        }
    }
    Ok(g.add_all(&terms)?)
}

/// Hierarchical text features `[n_x, d_h]`:
/// `Σ_λ H^{g→x}_λ W^x_λ + H^x W^x`. Without image features (no frames) or
/// with fusion disabled only the base term remains.
pub fn fuse_g_to_x(
    g: &mut Graph,
    cfg: &DffmConfig,
    heads: usize,
    text: &Levels<Var>,
    image: Option<&Levels<Var>>,
    ctx: &mut LatentCtx,
) -> Result<Var> {
    let fused = match image {
        Some(image) if cfg.enabled => {
            let mut out = [text.base; 3];
            for (slot, (level, kv)) in out.iter_mut().zip(image.levels()) {
                *slot = fuse_level(g, &format!("{G2X}.{level}"), text.base, *kv, heads, ctx)?;
            }
            Some(out)
        }
        _ => None,
    };
    mix(g, "x", fused, text.base)
}

/// Per-frame features `[n_g, d_h]`: patch-level fusion with image base
/// queries and text level keys/values, level mixing, mean pooling over each
/// frame's patches, plus the frame position embedding.
pub fn fuse_x_to_g(
    g: &mut Graph,
    cfg: &DffmConfig,
    d: &Dims,
    n_g: usize,
    image: &Levels<Var>,
    text: &Levels<Var>,
    ctx: &mut LatentCtx,
) -> Result<Var> {
    if n_g > d.max_frames {
        return Err(ModelError::Config(format!("{n_g} frames exceed max_frames = {}", d.max_frames)));
    }
    let fused = if cfg.enabled {
        let mut out = [image.base; 3];
        for (slot, (level, kv)) in out.iter_mut().zip(text.levels()) {
            *slot = fuse_level(g, &format!("{X2G}.{level}"), image.base, *kv, d.heads, ctx)?;
        }
        Some(out)
    } else {
        None
    };
    let patches = mix(g, "g", fused, image.base)?;
    let pooled = pool_frames(g, patches, n_g, d.n_p)?;
    let pos = g.param(POS)?;
    let pos = g.slice_rows(pos, 0, n_g)?;
    Ok(g.add(pooled, pos)?)
}

/// Mean over each frame's `n_p` consecutive patch rows.
pub fn pool_frames(g: &mut Graph, patches: Var, n_g: usize, n_p: usize) -> Result<Var> {
    let m = g.constant(pool_matrix(n_g * n_p, n_g));
    Ok(g.matmul(m, patches)?)
}

/// Value-level latent.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeLatent {
    pub mean: DenseArray,
    pub log_var: DenseArray,
    pub sample: DenseArray,
}

/// Encodes `[n, d_h]` rows with the VAE at `prefix` (e.g. `dffm.g2x.low`).
pub fn vae_encode(x: &DenseArray, params: &ParamTree, prefix: &str, mode: VaeMode, seed: u64) -> Result<VaeLatent> {
    let mut g = Graph::with_params(params);
    let xv = g.constant(x.as_matrix());
    let mut ctx = LatentCtx {
        mode,
        rng: Some(rand::SeedableRng::seed_from_u64(seed)),
        collect_kl: true,
        kl_terms: Vec::new(),
    };
    let lat = vae_encode_graph(&mut g, prefix, xv, &mut ctx)?;
    Ok(VaeLatent {
        mean: g.value(lat.mean).clone(),
        log_var: g.value(lat.log_var.expect("computed")).clone(),
        sample: g.value(lat.sample).clone(),
    })
}

pub fn vae_decode(z: &DenseArray, params: &ParamTree, prefix: &str) -> Result<DenseArray> {
    let mut g = Graph::with_params(params);
    let zv = g.constant(z.as_matrix());
    let out = vae_decode_graph(&mut g, prefix, zv)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::init_params;
    use mmie_core::gradcheck;

    fn setup() -> (ParamTree, ModelConfig) {
        let cfg = ModelConfig::default();
        (init_params(&cfg, 11).unwrap(), cfg)
    }

    fn wave(rows: usize, cols: usize, f: f64) -> DenseArray {
        DenseArray::new(vec![rows, cols], (0..rows * cols).map(|i| (i as f64 * f).sin()).collect()).unwrap()
    }

    fn zero(p: &mut ParamTree, prefix: &str) {
        let names: Vec<String> = p.names().filter(|n| n.starts_with(prefix)).map(String::from).collect();
        for n in names {
            let z = p.get(&n).unwrap().map(|_| 0.0);
            p.set(&n, z).unwrap();
        }
    }

    fn levels(g: &mut Graph, x: &DenseArray) -> Levels<Var> {
        let v = g.constant(x.clone());
        Levels { low: v, mid: v, high: v, base: v }
    }

    #[test]
    fn vae_shapes_and_modes() {
        let (p, _) = setup();
        let x = wave(10, 32, 0.37);
        let l = vae_encode(&x, &p, "dffm.g2x.low", VaeMode::Mean, 0).unwrap();
        assert_eq!(l.mean.shape(), [10, 16]);
        assert_eq!(l.sample, l.mean);
        let s = vae_encode(&x, &p, "dffm.g2x.low", VaeMode::Sample, 5).unwrap();
        assert_ne!(s.sample, s.mean);
        assert_eq!(s, vae_encode(&x, &p, "dffm.g2x.low", VaeMode::Sample, 5).unwrap());
        let out = vae_decode(&wave(5, 16, 0.2), &p, "dffm.g2x.low").unwrap();
        assert_eq!(out.shape(), [5, 32]);
    }

    #[test]
    fn zero_params_and_zero_latent() {
        let (mut p, _) = setup();
        zero(&mut p, "dffm.x2g.mid.vae.mean");
        let l = vae_encode(&wave(4, 32, 1.1), &p, "dffm.x2g.mid", VaeMode::Mean, 0).unwrap();
        assert!(l.mean.data().iter().all(|&v| v == 0.0));
        let bias = p.get("dffm.x2g.mid.vae.dec.b").unwrap().clone();
        let out = vae_decode(&DenseArray::zeros(&[3, 16]), &p, "dffm.x2g.mid").unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), bias.data());
        }
    }

    #[test]
    fn zero_image_features_leave_the_query_path() {
        let (mut p, cfg) = setup();
        for dir in ["dffm.g2x.low"] {
            zero(&mut p, &format!("{dir}.vae.mean.b"));
            zero(&mut p, &format!("{dir}.attn.v.b"));
            zero(&mut p, &format!("{dir}.attn.o.b"));
        }
        let q = wave(5, 32, 0.3);
        let mut g = Graph::with_params(&p);
        let qv = g.constant(q.clone());
        let kv = g.constant(DenseArray::zeros(&[32, 32]));
        let mut ctx = LatentCtx::mean();
        let out = fuse_level(&mut g, "dffm.g2x.low", qv, kv, cfg.dims.heads, &mut ctx).unwrap();
        // with V = 0 the attention contributes nothing
        let zq = vae_encode_graph(&mut g, "dffm.g2x.low", qv, &mut ctx).unwrap().sample;
        let f = nn::ffn(&mut g, "dffm.g2x.low.ffn", zq).unwrap();
        let h = g.add(zq, f).unwrap();
        let expect = vae_decode_graph(&mut g, "dffm.g2x.low", h).unwrap();
        assert!(g.value(out).max_abs_diff(g.value(expect)) < 1e-12);
    }

    #[test]
    fn text_direction_shape_and_passthrough() {
        let (mut p, cfg) = setup();
        let x = wave(7, 32, 0.5);
        let img = wave(3 * 16, 32, 0.9);
        let mut g = Graph::with_params(&p);
        let (t, i) = (levels(&mut g, &x), levels(&mut g, &img));
        let out = fuse_g_to_x(&mut g, &cfg.dffm, 4, &t, Some(&i), &mut LatentCtx::mean()).unwrap();
        assert_eq!(g.shape(out), [7, 32]);
        let doubled = {
            let mut p2 = p.clone();
            for n in ["low", "mid", "high", "base"] {
                let name = format!("dffm.mix.x.{n}");
                let w = p2.get(&name).unwrap().scale(2.0);
                p2.set(&name, w).unwrap();
            }
            let mut g2 = Graph::with_params(&p2);
            let (t, i) = (levels(&mut g2, &x), levels(&mut g2, &img));
            let o = fuse_g_to_x(&mut g2, &cfg.dffm, 4, &t, Some(&i), &mut LatentCtx::mean()).unwrap();
            g2.value(o).clone()
        };
        assert!(doubled.max_abs_diff(&g.value(out).scale(2.0)) < 1e-12);

        p.set("dffm.mix.x.base", DenseArray::eye(32)).unwrap();
        for n in ["low", "mid", "high"] {
            zero(&mut p, &format!("dffm.mix.x.{n}"));
        }
        let mut g = Graph::with_params(&p);
        let (t, i) = (levels(&mut g, &x), levels(&mut g, &img));
        let out = fuse_g_to_x(&mut g, &cfg.dffm, 4, &t, Some(&i), &mut LatentCtx::mean()).unwrap();
        assert!(g.value(out).max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn image_direction_positions_and_pooling() {
        let (p, cfg) = setup();
        let frame = wave(16, 32, 0.8);
        let img = DenseArray::new(vec![48, 32], [frame.data(), frame.data(), wave(16, 32, 0.1).data()].concat()).unwrap();
        let x = wave(6, 32, 0.4);
        let mut g = Graph::with_params(&p);
        let (t, i) = (levels(&mut g, &x), levels(&mut g, &img));
        let out = fuse_x_to_g(&mut g, &cfg.dffm, &cfg.dims, 3, &i, &t, &mut LatentCtx::mean()).unwrap();
        let out = g.value(out);
        assert_eq!(out.shape(), [3, 32]);
        let pos = p.get(POS).unwrap();
        for c in 0..32 {
            let diff = out.at(0, c) - out.at(1, c);
            assert!((diff - (pos.at(0, c) - pos.at(1, c))).abs() < 1e-12);
        }
        let mut g = Graph::with_params(&p);
        let (t, i) = (levels(&mut g, &x), levels(&mut g, &img));
        let too_many = Dims { max_frames: 2, ..cfg.dims.clone() };
        assert!(fuse_x_to_g(&mut g, &cfg.dffm, &too_many, 3, &i, &t, &mut LatentCtx::mean()).is_err());
    }

    #[test]
    fn mixing_is_independent_of_the_other_modality_size() {
        let (p, cfg) = setup();
        for (n_x, n_g) in [(1, 1), (9, 2), (4, 5)] {
            let mut g = Graph::with_params(&p);
            let t = levels(&mut g, &wave(n_x, 32, 0.3));
            let i = levels(&mut g, &wave(n_g * 16, 32, 0.6));
            let tx = fuse_g_to_x(&mut g, &cfg.dffm, 4, &t, Some(&i), &mut LatentCtx::mean()).unwrap();
            let ig = fuse_x_to_g(&mut g, &cfg.dffm, &cfg.dims, n_g, &i, &t, &mut LatentCtx::mean()).unwrap();
            assert_eq!(g.shape(tx), [n_x, 32]);
            assert_eq!(g.shape(ig), [n_g, 32]);
        }
    }

    #[test]
    fn level_fusion_gradcheck() {
        let (p, cfg) = setup();
        let q = wave(4, 32, 0.45);
        let kv = wave(32, 32, 0.15);
        let loss = |t: &ParamTree| {
            let mut g = Graph::with_params(t);
            let (qv, kvv) = (g.constant(q.clone()), g.constant(kv.clone()));
            let out = fuse_level(&mut g, "dffm.g2x.high", qv, kvv, cfg.dims.heads, &mut LatentCtx::mean())?;
            let sq = g.mul(out, out)?;
            let l = g.mean(sq);
            let grads = g.backward(l);
            Ok((g.value(l).item(), g.param_grads(&grads)))
        };
        let r = gradcheck::gradcheck_stratified(
            loss,
            &p,
            1e-4,
            60,
            1,
            &["dffm.g2x.high.wk", "dffm.g2x.high.wv", "dffm.g2x.high.vae.mean", "dffm.g2x.high.vae.dec", "dffm.g2x.high.attn", "dffm.g2x.high.ffn"],
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{:?}", r.worst());
    }

    #[test]
    fn sinusoid_table() {
        let s = sinusoid(4, 6);
        assert_eq!(s.row(0), [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((s.at(1, 0) - 1f64.sin()).abs() < 1e-15);
    }
}
