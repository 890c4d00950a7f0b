//! Post-norm transformer block: multi-head self-attention, residual,
//! layer norm, GELU feed-forward, residual, layer norm.

use super::params::BlockParams;
use super::tensor::{add_at_b, add_col_sums, affine, dot, matmul_bt, softmax_in_place, Mat};

pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Mat,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Mat, gain: &Mat, bias: &Mat) -> (Mat, LayerNormCache) {
    let n = x.cols as f64;
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut out = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xh = xhat.row_mut(r);
        for (h, v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * inv;
        }
        let xh = xhat.row(r).to_vec();
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = xh[c] * gain.data[c] + bias.data[c];
        }
    }
    (out, LayerNormCache { xhat, inv_std })
}

/// Returns the input gradient and accumulates gain/bias gradients.
pub fn layer_norm_backward(cache: &LayerNormCache, gain: &Mat, dout: &Mat, dgain: &mut Mat, dbias: &mut Mat) -> Mat {
    let cols = dout.cols;
    let n = cols as f64;
    let mut dx = Mat::zeros(dout.rows, cols);
    let mut dxhat = vec![0.0; cols];
    for r in 0..dout.rows {
        let xh = cache.xhat.row(r);
        let dy = dout.row(r);
        for c in 0..cols {
            dgain.data[c] += dy[c] * xh[c];
            dbias.data[c] += dy[c];
            dxhat[c] = dy[c] * gain.data[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dot(&dxhat, xh) / n;
        let inv = cache.inv_std[r];
        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = inv * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

/// Intermediate values of one block application, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub x: Mat,
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Attention probabilities per head (rows x rows).
    pub attn: Vec<Mat>,
    pub context: Mat,
    pub ln1: LayerNormCache,
    pub h1: Mat,
    pub f1: Mat,
    pub g: Mat,
    pub ln2: LayerNormCache,
}

/// Applies one block to the rows of `x`. Every row is a real position;
/// callers mask padding by passing only the valid prefix.
pub fn block_forward(p: &BlockParams, x: &Mat, num_heads: usize) -> (Mat, BlockCache) {
    let n = x.rows;
    let d = x.cols;
    let dh = d / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = affine(x, &p.wq, Some(&p.bq));
    let k = affine(x, &p.wk, Some(&p.bk));
    let v = affine(x, &p.wv, Some(&p.bv));
    let mut context = Mat::zeros(n, d);
    let mut attn = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let off = h * dh;
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[off..off + dh];
            let row = a.row_mut(i);
            for (j, s) in row.iter_mut().enumerate() {
                *s = dot(qi, &k.row(j)[off..off + dh]) * scale;
            }
            softmax_in_place(row);
        }
        for i in 0..n {
            for j in 0..n {
                let w = a.at(i, j);
                let vj = &v.row(j)[off..off + dh];
                let ci = &mut context.row_mut(i)[off..off + dh];
                for (c, vv) in ci.iter_mut().zip(vj) {
                    *c += w * vv;
                }
            }
        }
        attn.push(a);
    }
    let mut r1 = affine(&context, &p.wo, Some(&p.bo));
    r1.add_assign(x);
    let (h1, ln1) = layer_norm(&r1, &p.ln1_gain, &p.ln1_bias);
    let f1 = affine(&h1, &p.ffn_w1, Some(&p.ffn_b1));
    let g = Mat::from_vec(f1.rows, f1.cols, f1.data.iter().map(|&v| gelu(v)).collect());
    let mut r2 = affine(&g, &p.ffn_w2, Some(&p.ffn_b2));
    r2.add_assign(&h1);
    let (out, ln2) = layer_norm(&r2, &p.ln2_gain, &p.ln2_bias);
    let cache = BlockCache { x: x.clone(), q, k, v, attn, context, ln1, h1, f1, g, ln2 };
    (out, cache)
}

/// Accumulates parameter gradients into `grad` and returns the input gradient.
pub fn block_backward(p: &BlockParams, cache: &BlockCache, dout: &Mat, grad: &mut BlockParams) -> Mat {
    let n = dout.rows;
    let d = dout.cols;
    let num_heads = cache.attn.len();
    let dh = d / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(&cache.ln2, &p.ln2_gain, dout, &mut grad.ln2_gain, &mut grad.ln2_bias);
    add_at_b(&mut grad.ffn_w2, &cache.g, &dr2);
    add_col_sums(&mut grad.ffn_b2, &dr2);
    let mut df1 = matmul_bt(&dr2, &p.ffn_w2);
    for (g, &f) in df1.data.iter_mut().zip(&cache.f1.data) {
        *g *= gelu_grad(f);
    }
    add_at_b(&mut grad.ffn_w1, &cache.h1, &df1);
    add_col_sums(&mut grad.ffn_b1, &df1);
    let mut dh1 = matmul_bt(&df1, &p.ffn_w1);
    dh1.add_assign(&dr2);

    let dr1 = layer_norm_backward(&cache.ln1, &p.ln1_gain, &dh1, &mut grad.ln1_gain, &mut grad.ln1_bias);
    add_at_b(&mut grad.wo, &cache.context, &dr1);
    add_col_sums(&mut grad.bo, &dr1);
    let dcontext = matmul_bt(&dr1, &p.wo);

    let mut dq = Mat::zeros(n, d);
    let mut dk = Mat::zeros(n, d);
    let mut dv = Mat::zeros(n, d);
    let mut da = vec![0.0; n];
    for (h, a) in cache.attn.iter().enumerate() {
        let off = h * dh;
        for i in 0..n {
            let dci = &dcontext.row(i)[off..off + dh];
            let ai = a.row(i);
            for (j, slot) in da.iter_mut().enumerate() {
                *slot = dot(dci, &cache.v.row(j)[off..off + dh]);
                let dvj = &mut dv.row_mut(j)[off..off + dh];
                for (o, &c) in dvj.iter_mut().zip(dci) {
                    *o += ai[j] * c;
                }
            }
            let inner = dot(&da, ai);
            for j in 0..n {
                let ds = ai[j] * (da[j] - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = &cache.k.row(j)[off..off + dh];
                let dqi = &mut dq.row_mut(i)[off..off + dh];
                for (o, &kv) in dqi.iter_mut().zip(kj) {
                    *o += ds * kv;
                }
                let qi = &cache.q.row(i)[off..off + dh];
                let dkj = &mut dk.row_mut(j)[off..off + dh];
                for (o, &qv) in dkj.iter_mut().zip(qi) {
                    *o += ds * qv;
                }
            }
        }
    }
    add_at_b(&mut grad.wq, &cache.x, &dq);
    add_col_sums(&mut grad.bq, &dq);
    add_at_b(&mut grad.wk, &cache.x, &dk);
    add_col_sums(&mut grad.bk, &dk);
    add_at_b(&mut grad.wv, &cache.x, &dv);
    add_col_sums(&mut grad.bv, &dv);
    let mut dx = dr1;
    dx.add_assign(&matmul_bt(&dq, &p.wq));
    dx.add_assign(&matmul_bt(&dk, &p.wk));
    dx.add_assign(&matmul_bt(&dv, &p.wv));
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::satformer::config::PredictorConfig;
    use crate::satformer::params::{PredictorParams, TableSizes};

    fn block(d: usize, f: usize, seed: u64) -> BlockParams {
        let cfg = PredictorConfig { embed_dim: d, ffn_dim: f, num_heads: 1, ..PredictorConfig::tiny() };
        let sizes = TableSizes { tokens: 8, intents: 2, slot_keys: 2, items: 2 };
        let mut p = PredictorParams::init(&cfg, sizes, seed).text_blocks.remove(0);
        // non-trivial layer-norm parameters
        for (i, v) in p.ln1_gain.data.iter_mut().enumerate() {
            *v = 1.0 + 0.1 * i as f64;
        }
        p.ln2_bias.data.iter_mut().enumerate().for_each(|(i, v)| *v = 0.05 * i as f64);
        p.bq.fill(0.01);
        p
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    /// One block, one head, embed_dim 4, two positions (aggregate + token),
    /// recomputed with plain scalar loops.
    #[test]
    fn matches_straight_line_recomputation() {
        let d = 4;
        let f = 6;
        let p = block(d, f, 11);
        let x = Mat::from_rows(&[&[0.3, -0.2, 0.5, 0.1], &[-0.4, 0.9, 0.0, 0.2]]);
        let (out, cache) = block_forward(&p, &x, 1);

        let proj = |w: &Mat, b: &Mat, r: usize| -> Vec<f64> {
            (0..d).map(|c| b.data[c] + (0..d).map(|i| x.at(r, i) * w.at(i, c)).sum::<f64>()).collect()
        };
        let q: Vec<Vec<f64>> = (0..2).map(|r| proj(&p.wq, &p.bq, r)).collect();
        let k: Vec<Vec<f64>> = (0..2).map(|r| proj(&p.wk, &p.bk, r)).collect();
        let v: Vec<Vec<f64>> = (0..2).map(|r| proj(&p.wv, &p.bv, r)).collect();
        let ln = |z: &[f64], g: &Mat, b: &Mat| -> Vec<f64> {
            let m = z.iter().sum::<f64>() / d as f64;
            let var = z.iter().map(|a| (a - m).powi(2)).sum::<f64>() / d as f64;
            (0..d).map(|c| (z[c] - m) / (var + LN_EPS).sqrt() * g.data[c] + b.data[c]).collect()
        };
        for r in 0..2 {
            let s: Vec<f64> = (0..2).map(|j| (0..d).map(|c| q[r][c] * k[j][c]).sum::<f64>() / 2.0).collect();
            let e0 = s[0].exp();
            let e1 = s[1].exp();
            let a = [e0 / (e0 + e1), e1 / (e0 + e1)];
            let ctx: Vec<f64> = (0..d).map(|c| a[0] * v[0][c] + a[1] * v[1][c]).collect();
            let r1: Vec<f64> =
                (0..d).map(|c| x.at(r, c) + p.bo.data[c] + (0..d).map(|i| ctx[i] * p.wo.at(i, c)).sum::<f64>()).collect();
            let h1 = ln(&r1, &p.ln1_gain, &p.ln1_bias);
            let g: Vec<f64> =
                (0..f).map(|c| gelu(p.ffn_b1.data[c] + (0..d).map(|i| h1[i] * p.ffn_w1.at(i, c)).sum::<f64>())).collect();
            let r2: Vec<f64> =
                (0..d).map(|c| h1[c] + p.ffn_b2.data[c] + (0..f).map(|i| g[i] * p.ffn_w2.at(i, c)).sum::<f64>()).collect();
            let expect = ln(&r2, &p.ln2_gain, &p.ln2_bias);
            for c in 0..d {
                assert!((out.at(r, c) - expect[c]).abs() < 1e-12, "row {r} col {c}");
            }
        }
        for a in &cache.attn {
            for i in 0..a.rows {
                assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = 4;
        let p = block(d, 6, 5);
        let x = Mat::from_rows(&[&[0.3, -0.2, 0.5, 0.1], &[-0.4, 0.9, 0.0, 0.2], &[0.1, 0.1, -0.6, 0.7]]);
        let w = Mat::from_vec(3, d, (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect());
        let objective = |p: &BlockParams, x: &Mat| {
            let (out, _) = block_forward(p, x, 2);
            dot(&out.data, &w.data)
        };
        let (_, cache) = block_forward(&p, &x, 2);
        let mut grad = p.clone();
        for m in grad_fields(&mut grad) {
            m.fill(0.0);
        }
        let dx = block_backward(&p, &cache, &w, &mut grad);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let fd = (objective(&p, &xp) - objective(&p, &xm)) / (2.0 * h);
            assert!((fd - dx.data[i]).abs() < 1e-7, "dx[{i}] {fd} vs {}", dx.data[i]);
        }
        let mut pp = p.clone();
        let analytic: Vec<Vec<f64>> = grad_fields(&mut grad).iter().map(|m| m.data.clone()).collect();
        for (fi, an) in analytic.iter().enumerate() {
            for i in 0..an.len() {
                let orig = grad_fields(&mut pp)[fi].data[i];
                grad_fields(&mut pp)[fi].data[i] = orig + h;
                let up = objective(&pp, &x);
                grad_fields(&mut pp)[fi].data[i] = orig - h;
                let down = objective(&pp, &x);
                grad_fields(&mut pp)[fi].data[i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - an[i]).abs() < 1e-7, "field {fi} [{i}] {fd} vs {}", an[i]);
            }
        }
    }

    fn grad_fields(b: &mut BlockParams) -> Vec<&mut Mat> {
        vec![
            &mut b.wq,
            &mut b.bq,
            &mut b.wk,
            &mut b.bk,
            &mut b.wv,
            &mut b.bv,
            &mut b.wo,
            &mut b.bo,
            &mut b.ln1_gain,
            &mut b.ln1_bias,
            &mut b.ffn_w1,
            &mut b.ffn_b1,
            &mut b.ffn_w2,
            &mut b.ffn_b2,
            &mut b.ln2_gain,
            &mut b.ln2_bias,
        ]
    }
}
