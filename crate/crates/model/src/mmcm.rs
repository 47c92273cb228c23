//! Substitute level features for a missing modality. The present modality's
//! base features go through a shared convolution + ReLU; per level a learned
//! prompt is prepended, a level convolution + ReLU is applied, and the
//! sequence is mean-pooled to the missing modality's length. The substitute
//! base is the mean of the three levels.

use mmie_core::array::pool_matrix;
use mmie_core::nn::{self, Initializer};
use mmie_core::{DenseArray, Graph, ParamTree, Var};
use rand::Rng;

use crate::config::Dims;
use crate::encoders::{LevelFeatures, Levels};
use crate::error::{ModelError, Result};

/// Text → image direction.
pub const T2G: &str = "mmcm.t2g";
/// Image → text direction.
pub const G2T: &str = "mmcm.g2t";

pub(crate) fn init<R: Rng>(init: &mut Initializer<'_, R>, d: &Dims, prompt_len: usize) -> Result<()> {
    for dir in [T2G, G2T] {
        init.conv1d(&format!("{dir}.conv"), d.conv_width, d.d_h, d.d_h)?;
        for level in ["low", "mid", "high"] {
            init.normal(&format!("{dir}.{level}.prompt"), &[prompt_len, d.d_h], 1.0)?;
            init.conv1d(&format!("{dir}.{level}.conv"), d.conv_width, d.d_h, d.d_h)?;
        }
    }
    Ok(())
}

/// Generates `[target_len, d_h]` level features from a `[L, d_h]` source.
pub fn construct(g: &mut Graph, prefix: &str, source: Var, target_len: usize, width: usize) -> Result<Levels<Var>> {
    if g.value(source).rows() == 0 || target_len == 0 {
        return Err(ModelError::Config("missing-modality construction needs non-empty lengths".into()));
    }
    let c = nn::conv1d(g, &format!("{prefix}.conv"), source, width)?;
    let c = g.relu(c);
    let mut out = Vec::with_capacity(3);
    for level in ["low", "mid", "high"] {
        let prompt = g.param(&format!("{prefix}.{level}.prompt"))?;
        let h = g.concat_rows(&[prompt, c])?;
        let h = nn::conv1d(g, &format!("{prefix}.{level}.conv"), h, width)?;
        let h = g.relu(h);
        let pool = g.constant(pool_matrix(g.value(h).rows(), target_len));
        out.push(g.matmul(pool, h)?);
    }
    let sum = g.add_all(&out)?;
    let base = g.scale(sum, 1.0 / 3.0);
    Ok(Levels {
        low: out[0],
        mid: out[1],
        high: out[2],
        base,
    })
}

/// Zero features of shape `[rows, d_h]` for every level and the base.
pub fn blank(g: &mut Graph, rows: usize, d_h: usize) -> Levels<Var> {
    let z = g.constant(DenseArray::zeros(&[rows, d_h]));
    Levels { low: z, mid: z, high: z, base: z }
}

fn values(g: &Graph, l: &Levels<Var>) -> LevelFeatures {
    l.map(|v| g.value(*v).clone())
}

/// Image level features `[n_g, n_p, d_h]` from text features `[n_x, d_h]`.
pub fn construct_image_from_text(hx: &DenseArray, params: &ParamTree, d: &Dims, n_g: usize) -> Result<LevelFeatures> {
    let mut g = Graph::with_params(params);
    let x = g.constant(hx.as_matrix());
    let l = construct(&mut g, T2G, x, n_g * d.n_p, d.conv_width)?;
    let shape = [n_g, d.n_p, d.d_h];
    let v = values(&g, &l);
    Ok(Levels {
        low: v.low.reshape(&shape)?,
        mid: v.mid.reshape(&shape)?,
        high: v.high.reshape(&shape)?,
        base: v.base.reshape(&shape)?,
    })
}

/// Text level features `[n_x, d_h]` from image features `[n_g, n_p, d_h]`.
pub fn construct_text_from_image(hg: &DenseArray, params: &ParamTree, d: &Dims, n_x: usize) -> Result<LevelFeatures> {
    let mut g = Graph::with_params(params);
    let x = g.constant(hg.clone().reshape(&[hg.len() / d.d_h.max(1), d.d_h])?);
    let l = construct(&mut g, G2T, x, n_x, d.conv_width)?;
    Ok(values(&g, &l))
}

pub fn blank_fill(shape: &[usize]) -> LevelFeatures {
    let z = DenseArray::zeros(shape);
    Levels {
        low: z.clone(),
        mid: z.clone(),
        high: z.clone(),
        base: z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::init_params;

    fn setup() -> (ParamTree, Dims) {
        let cfg = ModelConfig::default();
        (init_params(&cfg, 2).unwrap(), cfg.dims)
    }

    fn wave(shape: &[usize], f: f64) -> DenseArray {
        let n = shape.iter().product::<usize>();
        DenseArray::new(shape.to_vec(), (0..n).map(|i| (i as f64 * f).sin()).collect()).unwrap()
    }

    #[test]
    fn text_to_image_shapes_and_range() {
        let (p, d) = setup();
        let mut g = Graph::with_params(&p);
        let x = g.constant(wave(&[10, 32], 0.3));
        let c = nn::conv1d(&mut g, "mmcm.t2g.conv", x, 3).unwrap();
        let c = g.relu(c);
        let prompt = g.param("mmcm.t2g.low.prompt").unwrap();
        let cat = g.concat_rows(&[prompt, c]).unwrap();
        assert_eq!(g.shape(cat), [18, 32]);

        let out = construct_image_from_text(&wave(&[10, 32], 0.3), &p, &d, 3).unwrap();
        for (_, v) in out.levels() {
            assert_eq!(v.shape(), [3, 16, 32]);
            assert!(v.data().iter().all(|&x| x >= 0.0));
        }
        assert_eq!(out.base.shape(), [3, 16, 32]);
        assert_eq!(out, construct_image_from_text(&wave(&[10, 32], 0.3), &p, &d, 3).unwrap());
    }

    #[test]
    fn image_to_text_shapes() {
        let (p, d) = setup();
        let out = construct_text_from_image(&wave(&[2, 16, 32], 0.2), &p, &d, 13).unwrap();
        for (_, v) in out.levels() {
            assert_eq!(v.shape(), [13, 32]);
        }
    }

    #[test]
    fn zero_image_depends_only_on_prompts_and_biases() {
        let (p, d) = setup();
        let a = construct_text_from_image(&DenseArray::zeros(&[2, 16, 32]), &p, &d, 5).unwrap();
        let mut p2 = p.clone();
        let w = p2.get("mmcm.g2t.conv.w").unwrap().map(|v| v * 3.0 + 1.0);
        p2.set("mmcm.g2t.conv.w", w).unwrap();
        let b = construct_text_from_image(&DenseArray::zeros(&[2, 16, 32]), &p2, &d, 5).unwrap();
        assert_eq!(a, b);
        let mut p3 = p.clone();
        let pr = p3.get("mmcm.g2t.mid.prompt").unwrap().map(|v| v + 0.5);
        p3.set("mmcm.g2t.mid.prompt", pr).unwrap();
        let c = construct_text_from_image(&DenseArray::zeros(&[2, 16, 32]), &p3, &d, 5).unwrap();
        assert_ne!(a.mid, c.mid);
    }

    #[test]
    fn any_prompt_length_gives_valid_shapes() {
        for l_p in [1, 2, 8, 32] {
            let mut cfg = ModelConfig::default();
            cfg.mmcm.prompt_len = l_p;
            let p = init_params(&cfg, 0).unwrap();
            for (n_x, n_g) in [(1, 1), (3, 4), (40, 2)] {
                let img = construct_image_from_text(&wave(&[n_x, 32], 0.1), &p, &cfg.dims, n_g).unwrap();
                assert_eq!(img.low.shape(), [n_g, 16, 32]);
                let txt = construct_text_from_image(&wave(&[n_g, 16, 32], 0.1), &p, &cfg.dims, n_x).unwrap();
                assert_eq!(txt.high.shape(), [n_x, 32]);
            }
        }
    }

    #[test]
    fn blank_fill_is_zero() {
        let b = blank_fill(&[2, 16, 32]);
        for v in [&b.low, &b.mid, &b.high, &b.base] {
            assert_eq!(v.shape(), [2, 16, 32]);
            assert!(v.data().iter().all(|&x| x == 0.0));
        }
    }
}
