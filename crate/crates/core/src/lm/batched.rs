//! Batched forward pass with the activations needed for exact
//! backpropagation through time.
//!
//! Positions are laid out step-major: all active rows of step 0, then of
//! step 1, and so on. Because batch rows are sorted longest-first, row `r` of
//! step `s` follows row `r` of step `s - 1`, which holds its previous state.

use super::{LmParams, WordLayers};
use crate::corpus::{make_batches, Batch, EncodedCorpus};
use crate::linalg::{axpy, sum_f64, gemm_acc, gemm_nt_acc, gemm_tn_acc, Matrix, Real};

pub(crate) enum EmbedCache<T> {
    Dense,
    /// Gathered `W_shared` columns, N×k.
    Shared { e: Matrix<T> },
    /// Gathered `Wᴮ` columns (N×r′) and their images `Wᴬ·col` (N×k).
    LowRank { bc: Matrix<T>, e: Matrix<T> },
}

pub(crate) struct Forward<T> {
    /// Start of each step's rows; one extra entry at the end.
    pub offsets: Vec<usize>,
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub x: Matrix<T>,
    pub emb: EmbedCache<T>,
    /// Activated gates, N×4d in the order i, f, o, g.
    pub gates: Matrix<T>,
    pub c: Matrix<T>,
    pub tanh_c: Matrix<T>,
    pub h: Matrix<T>,
}

impl<T> Forward<T> {
    pub fn positions(&self) -> usize {
        self.inputs.len()
    }

    pub fn steps(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Intermediate products of the output layer.
pub(crate) struct OutputCache<T> {
    /// `H · P_softmax`, N×k.
    q: Option<Matrix<T>>,
    /// `Q · Wᴬ`, N×r′.
    s: Option<Matrix<T>>,
}

fn embed_rows<T: Real>(p: &LmParams<T>, ids: &[u32]) -> (Matrix<T>, EmbedCache<T>) {
    let (d, v) = (p.d(), p.vocab_size());
    let n = ids.len();
    let mut x = Matrix::zeros(n, d);
    let gather = |m: &Matrix<T>| {
        let rows = m.rows();
        let mut out = Matrix::zeros(n, rows);
        for (r, &id) in ids.iter().enumerate() {
            let dst = out.row_mut(r);
            for (l, slot) in dst.iter_mut().enumerate() {
                *slot = m.data()[l * v + id as usize];
            }
        }
        out
    };
    let cache = match &p.words {
        WordLayers::Dense { w_embed, .. } => {
            let g = gather(w_embed);
            x = g;
            EmbedCache::Dense
        }
        WordLayers::Shared { w_shared, p_embed, .. } => {
            let e = gather(w_shared);
            gemm_nt_acc(n, p.hyper.k, d, e.data(), p_embed.data(), x.data_mut());
            EmbedCache::Shared { e }
        }
        WordLayers::SharedLowRank { pair, p_embed, .. } => {
            let bc = gather(&pair.b);
            let k = p.hyper.k;
            let mut e = Matrix::zeros(n, k);
            gemm_nt_acc(n, pair.rank(), k, bc.data(), pair.a.data(), e.data_mut());
            gemm_nt_acc(n, k, d, e.data(), p_embed.data(), x.data_mut());
            EmbedCache::LowRank { bc, e }
        }
    };
    (x, cache)
}

pub(crate) fn forward<T: Real>(p: &LmParams<T>, batch: &Batch) -> Forward<T> {
    let d = p.d();
    let g4 = 4 * d;
    let mut offsets = vec![0];
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for t in 0.. {
        let rows = batch.active_rows(t);
        if rows == 0 {
            break;
        }
        for b in 0..rows {
            inputs.push(batch.id(b, t));
            targets.push(batch.id(b, t + 1));
        }
        offsets.push(inputs.len());
    }
    let n = inputs.len();
    let (x, emb) = embed_rows(p, &inputs);

    let mut gates = Matrix::zeros(n, g4);
    for r in 0..n {
        gates.row_mut(r).copy_from_slice(p.lstm.b.data());
    }
    gemm_nt_acc(n, d, g4, x.data(), p.lstm.w.data(), gates.data_mut());

    let mut c = Matrix::zeros(n, d);
    let mut tanh_c = Matrix::zeros(n, d);
    let mut h = Matrix::zeros(n, d);
    for s in 0..offsets.len() - 1 {
        let (lo, hi) = (offsets[s], offsets[s + 1]);
        let nt = hi - lo;
        let prev = if s > 0 { Some(offsets[s - 1]) } else { None };
        if let Some(plo) = prev {
            let (h_done, _) = h.data().split_at(lo * d);
            gemm_nt_acc(nt, d, g4, &h_done[plo * d..(plo + nt) * d], p.lstm.u.data(), &mut gates.data_mut()[lo * g4..hi * g4]);
        }
        for gr in gates.data_mut()[lo * g4..hi * g4].chunks_exact_mut(g4) {
            let (sig, cand) = gr.split_at_mut(3 * d);
            sigmoid_in_place(sig);
            tanh_in_place(cand);
        }
        let (c_done, c_now) = c.data_mut().split_at_mut(lo * d);
        for r in 0..nt {
            let gr = &gates.data()[(lo + r) * g4..(lo + r + 1) * g4];
            let c_row = &mut c_now[r * d..(r + 1) * d];
            for j in 0..d {
                let c_prev = prev.map_or(T::zero(), |plo| c_done[(plo + r) * d + j]);
                c_row[j] = gr[d + j] * c_prev + gr[j] * gr[3 * d + j];
            }
        }
        let tc = &mut tanh_c.data_mut()[lo * d..hi * d];
        tc.copy_from_slice(&c.data()[lo * d..hi * d]);
        tanh_in_place(tc);
        for r in 0..nt {
            let row = lo + r;
            let o = &gates.data()[row * g4 + 2 * d..row * g4 + 3 * d];
            let tc = &tanh_c.data()[row * d..(row + 1) * d];
            for ((hj, &oj), &tj) in h.data_mut()[row * d..(row + 1) * d].iter_mut().zip(o).zip(tc) {
                *hj = oj * tj;
            }
        }
    }
    Forward { offsets, inputs, targets, x, emb, gates, c, tanh_c, h }
}

fn sigmoid_in_place<T: Real>(xs: &mut [T]) {
    xs.iter_mut().for_each(|x| *x = -*x);
    T::exp_in_place(xs);
    xs.iter_mut().for_each(|x| *x = T::one() / (T::one() + *x));
}

/// `tanh x = 2σ(2x) − 1`.
fn tanh_in_place<T: Real>(xs: &mut [T]) {
    let two = T::of(2.0);
    xs.iter_mut().for_each(|x| *x = -two * *x);
    T::exp_in_place(xs);
    xs.iter_mut().for_each(|x| *x = two / (T::one() + *x) - T::one());
}

/// Logits for every hidden row, N×|V|.
pub(crate) fn logits<T: Real>(p: &LmParams<T>, h: &Matrix<T>) -> (Matrix<T>, OutputCache<T>) {
    let (n, d, v, k) = (h.rows(), p.d(), p.vocab_size(), p.hyper.k);
    let mut out = Matrix::zeros(n, v);
    for r in 0..n {
        out.row_mut(r).copy_from_slice(p.bias.data());
    }
    let cache = match &p.words {
        WordLayers::Dense { w_softmax, .. } => {
            gemm_nt_acc(n, d, v, h.data(), w_softmax.data(), out.data_mut());
            OutputCache { q: None, s: None }
        }
        WordLayers::Shared { w_shared, p_softmax, .. } => {
            let mut q = Matrix::zeros(n, k);
            gemm_acc(n, d, k, h.data(), p_softmax.data(), q.data_mut());
            gemm_acc(n, k, v, q.data(), w_shared.data(), out.data_mut());
            OutputCache { q: Some(q), s: None }
        }
        WordLayers::SharedLowRank { pair, p_softmax, .. } => {
            let r = pair.rank();
            let mut q = Matrix::zeros(n, k);
            gemm_acc(n, d, k, h.data(), p_softmax.data(), q.data_mut());
            let mut s = Matrix::zeros(n, r);
            gemm_acc(n, k, r, q.data(), pair.a.data(), s.data_mut());
            gemm_acc(n, r, v, s.data(), pair.b.data(), out.data_mut());
            OutputCache { q: Some(q), s: Some(s) }
        }
    };
    (out, cache)
}

fn add_column_sums<T: Real>(m: &Matrix<T>, into: &mut Matrix<T>) {
    let acc = into.data_mut();
    for r in 0..m.rows() {
        axpy(T::one(), m.row(r), acc);
    }
}

/// `grad[:, id] += rows[r]` for each position's input id.
fn scatter_columns<T: Real>(rows: &Matrix<T>, ids: &[u32], grad: &mut Matrix<T>) {
    let v = grad.cols();
    let g = grad.data_mut();
    for (r, &id) in ids.iter().enumerate() {
        for (l, &val) in rows.row(r).iter().enumerate() {
            g[l * v + id as usize] += val;
        }
    }
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to the logits is `dlogits`.
pub(crate) fn backward<T: Real>(
    p: &LmParams<T>,
    fwd: &Forward<T>,
    out: &OutputCache<T>,
    dlogits: &Matrix<T>,
    grads: &mut LmParams<T>,
) {
    let n = fwd.positions();
    if n == 0 {
        return;
    }
    let (d, v, k) = (p.d(), p.vocab_size(), p.hyper.k);
    let g4 = 4 * d;
    add_column_sums(dlogits, &mut grads.bias);

    let mut dh = Matrix::zeros(n, d);
    match (&p.words, &mut grads.words) {
        (WordLayers::Dense { w_softmax, .. }, WordLayers::Dense { w_softmax: gw, .. }) => {
            gemm_tn_acc(v, n, d, dlogits.data(), fwd.h.data(), gw.data_mut());
            gemm_acc(n, v, d, dlogits.data(), w_softmax.data(), dh.data_mut());
        }
        (
            WordLayers::Shared { w_shared, p_softmax, .. },
            WordLayers::Shared { w_shared: gws, p_softmax: gps, .. },
        ) => {
            let q = out.q.as_ref().expect("shared output cache");
            gemm_tn_acc(k, n, v, q.data(), dlogits.data(), gws.data_mut());
            let mut dq = Matrix::zeros(n, k);
            gemm_nt_acc(n, v, k, dlogits.data(), w_shared.data(), dq.data_mut());
            gemm_tn_acc(d, n, k, fwd.h.data(), dq.data(), gps.data_mut());
            gemm_nt_acc(n, k, d, dq.data(), p_softmax.data(), dh.data_mut());
        }
        (
            WordLayers::SharedLowRank { pair, p_softmax, .. },
            WordLayers::SharedLowRank { pair: gpair, p_softmax: gps, .. },
        ) => {
            let q = out.q.as_ref().expect("low-rank output cache");
            let s = out.s.as_ref().expect("low-rank output cache");
            let r = pair.rank();
            gemm_tn_acc(r, n, v, s.data(), dlogits.data(), gpair.b.data_mut());
            let mut ds = Matrix::zeros(n, r);
            gemm_nt_acc(n, v, r, dlogits.data(), pair.b.data(), ds.data_mut());
            gemm_tn_acc(k, n, r, q.data(), ds.data(), gpair.a.data_mut());
            let mut dq = Matrix::zeros(n, k);
            gemm_nt_acc(n, r, k, ds.data(), pair.a.data(), dq.data_mut());
            gemm_tn_acc(d, n, k, fwd.h.data(), dq.data(), gps.data_mut());
            gemm_nt_acc(n, k, d, dq.data(), p_softmax.data(), dh.data_mut());
        }
        _ => panic!("gradient structure does not match parameters"),
    }

    // Backpropagation through time.
    let mut dc = Matrix::zeros(n, d);
    let mut dgates = Matrix::zeros(n, g4);
    let mut h_prev = Matrix::zeros(n, d);
    for s in (0..fwd.steps()).rev() {
        let (lo, hi) = (fwd.offsets[s], fwd.offsets[s + 1]);
        let nt = hi - lo;
        let plo = if s > 0 { Some(fwd.offsets[s - 1]) } else { None };
        for r in 0..nt {
            let row = lo + r;
            let gr = fwd.gates.row(row);
            let tc = fwd.tanh_c.row(row);
            let prev_row = plo.map(|p0| p0 + r);
            let mut dc_prev = vec![T::zero(); d];
            {
                let dg = dgates.row_mut(row);
                let dhr = dh.row(row);
                let dcr = dc.row(row);
                for j in 0..d {
                    let (i, f, o, g) = (gr[j], gr[d + j], gr[2 * d + j], gr[3 * d + j]);
                    let c_prev = prev_row.map_or(T::zero(), |pr| fwd.c.get(pr, j));
                    let dct = dcr[j] + dhr[j] * o * (T::one() - tc[j] * tc[j]);
                    dg[j] = dct * g * i * (T::one() - i);
                    dg[d + j] = dct * c_prev * f * (T::one() - f);
                    dg[2 * d + j] = dhr[j] * tc[j] * o * (T::one() - o);
                    dg[3 * d + j] = dct * i * (T::one() - g * g);
                    dc_prev[j] = dct * f;
                }
            }
            if let Some(pr) = prev_row {
                axpy(T::one(), &dc_prev, dc.row_mut(pr));
                h_prev.row_mut(row).copy_from_slice(fwd.h.row(pr));
            }
        }
        if let Some(p0) = plo {
            let (dh_prev, _) = dh.data_mut().split_at_mut(lo * d);
            gemm_acc(
                nt,
                g4,
                d,
                &dgates.data()[lo * g4..hi * g4],
                p.lstm.u.data(),
                &mut dh_prev[p0 * d..(p0 + nt) * d],
            );
        }
    }
    gemm_tn_acc(g4, n, d, dgates.data(), h_prev.data(), grads.lstm.u.data_mut());
    gemm_tn_acc(g4, n, d, dgates.data(), fwd.x.data(), grads.lstm.w.data_mut());
    add_column_sums(&dgates, &mut grads.lstm.b);
    let mut dx = Matrix::zeros(n, d);
    gemm_acc(n, g4, d, dgates.data(), p.lstm.w.data(), dx.data_mut());

    match (&p.words, &mut grads.words, &fwd.emb) {
        (WordLayers::Dense { .. }, WordLayers::Dense { w_embed: gw, .. }, EmbedCache::Dense) => {
            scatter_columns(&dx, &fwd.inputs, gw);
        }
        (
            WordLayers::Shared { p_embed, .. },
            WordLayers::Shared { w_shared: gws, p_embed: gpe, .. },
            EmbedCache::Shared { e },
        ) => {
            gemm_tn_acc(d, n, k, dx.data(), e.data(), gpe.data_mut());
            let mut de = Matrix::zeros(n, k);
            gemm_acc(n, d, k, dx.data(), p_embed.data(), de.data_mut());
            scatter_columns(&de, &fwd.inputs, gws);
        }
        (
            WordLayers::SharedLowRank { pair, p_embed, .. },
            WordLayers::SharedLowRank { pair: gpair, p_embed: gpe, .. },
            EmbedCache::LowRank { bc, e },
        ) => {
            let r = pair.rank();
            gemm_tn_acc(d, n, k, dx.data(), e.data(), gpe.data_mut());
            let mut de = Matrix::zeros(n, k);
            gemm_acc(n, d, k, dx.data(), p_embed.data(), de.data_mut());
            gemm_tn_acc(k, n, r, de.data(), bc.data(), gpair.a.data_mut());
            let mut dbc = Matrix::zeros(n, r);
            gemm_acc(n, k, r, de.data(), pair.a.data(), dbc.data_mut());
            scatter_columns(&dbc, &fwd.inputs, &mut gpair.b);
        }
        _ => panic!("gradient structure does not match parameters"),
    }
}

/// `ln Σ exp(row)` for one logit row, summed in `f64`.
/// Writes `exp(row − max)` into `out` and returns `(max, Σ out)`.
pub(crate) fn shifted_exp<T: Real>(row: &[T], out: &mut [T]) -> (T, f64) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    for (o, &z) in out.iter_mut().zip(row) {
        *o = z - max;
    }
    T::exp_in_place(out);
    (max, sum_f64(out))
}

/// Σ log p(target) over all predicted tokens, evaluated in batches of
/// `batch_size` sentences in corpus order.
pub(crate) fn corpus_log_likelihood<T: Real>(p: &LmParams<T>, sentences: &[Vec<u32>], batch_size: usize) -> (f64, usize) {
    let corpus = EncodedCorpus { sentences: sentences.to_vec() };
    let max_len = sentences.iter().map(Vec::len).max().unwrap_or(2).max(2);
    let batches = make_batches(&corpus, batch_size, max_len, None).expect("valid batch arguments");
    let mut total = 0.0;
    let mut count = 0;
    for b in &batches {
        let fwd = forward(p, b);
        let (lg, _) = logits(p, &fwd.h);
        let mut scratch = vec![T::zero(); lg.cols()];
        for (r, &t) in fwd.targets.iter().enumerate() {
            let row = lg.row(r);
            let (max, sum) = shifted_exp(row, &mut scratch);
            total += (row[t as usize] - max).f64() - sum.ln();
        }
        count += fwd.positions();
    }
    (total, count)
}
