use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::{Dense, EncoderError, EncoderParams, Head, LayerNorm, LAYER_NORM_EPS};
use crate::textpipe::TokenSeq;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

struct NormTrace {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, NormTrace) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row *= *inv;
    }
    let y = &xhat * &ln.gain + &ln.bias;
    (y, NormTrace { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    ln: &LayerNorm,
    t: &NormTrace,
    g: &mut LayerNorm,
) -> Array2<f64> {
    g.gain += &(dy * &t.xhat).sum_axis(Axis(0));
    g.bias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let dxhat = dy * &ln.gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let gr = dxhat.row(i);
        let xr = t.xhat.row(i);
        let mean_g = gr.sum() / d;
        let mean_gx = gr.dot(&xr) / d;
        let inv = t.inv_std[i];
        dx.row_mut(i)
            .iter_mut()
            .zip(gr.iter().zip(xr.iter()))
            .for_each(|(o, (&gv, &xv))| *o = inv * (gv - mean_g - xv * mean_gx));
    }
    dx
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

struct LayerTrace {
    norm_attn: NormTrace,
    h_attn: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    norm_ff: NormTrace,
    h_ff: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
}

/// Activations of one forward pass, retained for [`backward`].
pub struct EncodeTrace {
    head: Head,
    ids: Vec<usize>,
    layers: Vec<LayerTrace>,
    /// Masked mean of the final trunk states.
    pub pooled: Array1<f64>,
    /// Output of the selected head.
    pub embedding: Array1<f64>,
}

impl EncodeTrace {
    pub fn head(&self) -> Head {
        self.head
    }
}

/// Runs the encoder on the non-PAD prefix of `seq` and keeps every
/// intermediate needed for the backward pass.
pub fn forward(
    params: &EncoderParams,
    seq: &TokenSeq,
    head: Head,
) -> Result<EncodeTrace, EncoderError> {
    params.check_seq(seq)?;
    let cfg = &params.config;
    let len = seq.true_len;
    let ids: Vec<usize> = seq.content().iter().map(|&i| i as usize).collect();
    let trunk = &params.trunk;

    let mut x = Array2::<f64>::zeros((len, cfg.d_model));
    for (pos, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(pos);
        row += &trunk.token_embeddings.row(id);
        row += &trunk.positional_embeddings.row(pos);
    }

    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut traces = Vec::with_capacity(cfg.n_layers);
    for layer in &trunk.layers {
        let (h_attn, norm_attn) = layer_norm(&x, &layer.ln_attn);
        let q = h_attn.dot(&layer.wq);
        let k = h_attn.dot(&layer.wk);
        let v = h_attn.dot(&layer.wv);
        let mut context = Array2::<f64>::zeros((len, cfg.d_model));
        let mut probs = Vec::with_capacity(cfg.n_heads);
        for hd in 0..cfg.n_heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut p);
            context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        x = x + context.dot(&layer.wo);

        let (h_ff, norm_ff) = layer_norm(&x, &layer.ln_ff);
        let ff_pre = h_ff.dot(&layer.ff_in.weight) + &layer.ff_in.bias;
        let ff_act = ff_pre.mapv(gelu);
        x = x + ff_act.dot(&layer.ff_out.weight) + &layer.ff_out.bias;

        traces.push(LayerTrace {
            norm_attn,
            h_attn,
            q,
            k,
            v,
            probs,
            context,
            norm_ff,
            h_ff,
            ff_pre,
            ff_act,
        });
    }

    let pooled = x.sum_axis(Axis(0)) / len as f64;
    let proj = params.head(head);
    let embedding = pooled.dot(&proj.weight) + &proj.bias;
    Ok(EncodeTrace {
        head,
        ids,
        layers: traces,
        pooled,
        embedding,
    })
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

fn head_mut(g: &mut EncoderParams, head: Head) -> &mut Dense {
    match head {
        Head::Question => &mut g.q_head,
        Head::Answer => &mut g.a_head,
    }
}

/// Accumulates into `grads` the gradient of a scalar objective given its
/// gradient `d_embedding` with respect to the traced embedding.
pub fn backward(
    params: &EncoderParams,
    trace: &EncodeTrace,
    d_embedding: ArrayView1<f64>,
    grads: &mut EncoderParams,
) {
    let cfg = &params.config;
    let len = trace.ids.len();
    let proj = params.head(trace.head);
    {
        let g = head_mut(grads, trace.head);
        g.weight += &outer(trace.pooled.view(), d_embedding);
        g.bias += &d_embedding;
    }
    let d_pooled = proj.weight.dot(&d_embedding) / len as f64;
    let mut dx = Array2::<f64>::zeros((len, cfg.d_model));
    dx += &d_pooled;

    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    for (layer, (t, g)) in params
        .trunk
        .layers
        .iter()
        .zip(trace.layers.iter().zip(grads.trunk.layers.iter_mut()))
        .rev()
    {
        // feed-forward sublayer
        g.ff_out.weight += &t.ff_act.t().dot(&dx);
        g.ff_out.bias += &dx.sum_axis(Axis(0));
        let mut d_pre = dx.dot(&layer.ff_out.weight.t());
        d_pre.zip_mut_with(&t.ff_pre, |d, &x| *d *= gelu_grad(x));
        g.ff_in.weight += &t.h_ff.t().dot(&d_pre);
        g.ff_in.bias += &d_pre.sum_axis(Axis(0));
        let d_hff = d_pre.dot(&layer.ff_in.weight.t());
        dx += &layer_norm_backward(&d_hff, &layer.ln_ff, &t.norm_ff, &mut g.ln_ff);

        // attention sublayer
        g.wo += &t.context.t().dot(&dx);
        let d_context = dx.dot(&layer.wo.t());
        let mut dq = Array2::<f64>::zeros((len, cfg.d_model));
        let mut dk = Array2::<f64>::zeros((len, cfg.d_model));
        let mut dv = Array2::<f64>::zeros((len, cfg.d_model));
        for (hd, p) in t.probs.iter().enumerate() {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let d_out = d_context.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&d_out));
            let dp = d_out.dot(&t.v.slice(cols).t());
            let mut ds = p * &dp;
            let row_dot = ds.sum_axis(Axis(1));
            ds -= &(p * &row_dot.insert_axis(Axis(1)));
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&t.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&t.q.slice(cols)));
        }
        g.wq += &t.h_attn.t().dot(&dq);
        g.wk += &t.h_attn.t().dot(&dk);
        g.wv += &t.h_attn.t().dot(&dv);
        let d_hattn = dq.dot(&layer.wq.t()) + dk.dot(&layer.wk.t()) + dv.dot(&layer.wv.t());
        dx += &layer_norm_backward(&d_hattn, &layer.ln_attn, &t.norm_attn, &mut g.ln_attn);
    }

    for (pos, &id) in trace.ids.iter().enumerate() {
        let row = dx.row(pos);
        let mut tok = grads.trunk.token_embeddings.row_mut(id);
        tok += &row;
        let mut p = grads.trunk.positional_embeddings.row_mut(pos);
        p += &row;
    }
}
