//! Text side of the classifier: tokenization, vocabulary, word embeddings
//! (randomly initialized or loaded from a GloVe-style text file), and a
//! two-layer GRU sentence encoder.
//!
//! The GRU uses the canonical update/reset-gate equations with sigmoid gates
//! and a tanh candidate, biases included, initial hidden state zero:
//!
//! ```text
//! z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz)
//! r_t = sigmoid(x_t Wr + h_{t-1} Ur + br)
//! n_t = tanh(x_t Wn + (r_t * h_{t-1}) Un + bn)
//! h_t = (1 - z_t) * n_t + z_t * h_{t-1}
//! ```
//!
//! The sentence encoding is the arithmetic mean of the top layer's outputs
//! over the (unpadded) timesteps.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Axis;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mat, Vector};

pub const UNK_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";

/// A natural-language command, kept verbatim plus its token ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub raw: String,
    pub tokens: Vec<u32>,
}

/// Lowercases and splits on any non-alphanumeric character. Spelling is
/// never corrected; noisy tokens pass through verbatim. Input with no
/// alphanumeric content yields a single `<unk>` token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if out.is_empty() {
        out.push(UNK_TOKEN.to_string());
    }
    out
}

/// Token-to-id map with reserved `<unk>` (0) and `<pad>` (1) entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from a corpus of raw texts. Tokens are sorted
    /// lexicographically so the id assignment is reproducible.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = texts
            .into_iter()
            .flat_map(|t| tokenize(t))
            .filter(|t| t != UNK_TOKEN)
            .collect();
        tokens.sort();
        tokens.dedup();
        let mut id_to_token = vec![UNK_TOKEN.to_string(), PAD_TOKEN.to_string()];
        id_to_token.extend(tokens);
        let mut v = Vocabulary {
            id_to_token,
            token_to_id: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    fn rebuild_index(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Tokenizes `raw` into an [`Instruction`] against this vocabulary.
    pub fn instruction(&self, raw: &str) -> Instruction {
        let tokens = tokenize(raw).iter().map(|t| self.id(t)).collect();
        Instruction {
            raw: raw.to_string(),
            tokens,
        }
    }

    /// Persists as token-per-line text, reserved entries first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for t in &self.id_to_token {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let id_to_token: Vec<String> = BufReader::new(f)
            .lines()
            .collect::<std::io::Result<_>>()?;
        if id_to_token.len() < 2 || id_to_token[0] != UNK_TOKEN || id_to_token[1] != PAD_TOKEN {
            return Err(Error::Config(format!(
                "vocabulary file {} must start with the reserved {UNK_TOKEN} and {PAD_TOKEN} lines",
                path.display()
            )));
        }
        let mut v = Vocabulary {
            id_to_token,
            token_to_id: HashMap::new(),
        };
        v.rebuild_index();
        Ok(v)
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.rebuild_index();
    }
}

/// Word-embedding matrix, one row per vocabulary entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub table: Mat,
    /// False when rows come from a pretrained file and stay fixed.
    pub trainable: bool,
    /// Rows that were absent from the pretrained file and got sampled.
    pub oov_initialized: Vec<bool>,
}

impl EmbeddingTable {
    pub fn random(vocab_size: usize, d_word: usize, rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, 0.1).unwrap();
        EmbeddingTable {
            table: Mat::from_shape_fn((vocab_size, d_word), |_| dist.sample(rng)),
            trainable: true,
            oov_initialized: vec![false; vocab_size],
        }
    }

    pub fn d_word(&self) -> usize {
        self.table.ncols()
    }
}

/// Loads a word-per-line embedding file (`token v1 .. vd`), copying rows for
/// in-vocabulary tokens and sampling `N(0, 0.1)` rows for the rest. The
/// resulting table is frozen; the caller may flip `trainable` if desired.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, rng: &mut impl Rng) -> Result<EmbeddingTable> {
    let f = std::fs::File::open(path)?;
    let mut dim: Option<usize> = None;
    let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "empty embedding line".into(),
            })?
            .to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad float {p:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("token {token:?} has no embedding values"),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("dimension mismatch: expected {d} values, found {}", values.len()),
                })
            }
            _ => {}
        }
        rows.insert(token, values);
    }
    let d = dim.ok_or_else(|| Error::Config(format!("embedding file {} is empty", path.display())))?;

    let dist = Normal::new(0.0, 0.1).unwrap();
    let mut table = Mat::zeros((vocab.len(), d));
    let mut oov = vec![false; vocab.len()];
    for (i, token) in vocab.tokens().iter().enumerate() {
        match rows.get(token) {
            Some(vals) => {
                for (j, &v) in vals.iter().enumerate() {
                    table[(i, j)] = v;
                }
            }
            None => {
                for j in 0..d {
                    table[(i, j)] = dist.sample(rng);
                }
                oov[i] = true;
            }
        }
    }
    Ok(EmbeddingTable {
        table,
        trainable: false,
        oov_initialized: oov,
    })
}

/// One GRU layer's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruLayer {
    pub wz: Mat,
    pub uz: Mat,
    pub bz: Vector,
    pub wr: Mat,
    pub ur: Mat,
    pub br: Vector,
    pub wn: Mat,
    pub un: Mat,
    pub bn: Vector,
}

fn scaled_uniform(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Mat {
    let limit = (1.0 / d_in as f64).sqrt();
    Mat::from_shape_fn((d_in, d_out), |_| rng.gen_range(-limit..limit))
}

impl GruLayer {
    pub fn init(d_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruLayer {
            wz: scaled_uniform(d_in, hidden, rng),
            uz: scaled_uniform(hidden, hidden, rng),
            bz: Vector::zeros(hidden),
            wr: scaled_uniform(d_in, hidden, rng),
            ur: scaled_uniform(hidden, hidden, rng),
            br: Vector::zeros(hidden),
            wn: scaled_uniform(d_in, hidden, rng),
            un: scaled_uniform(hidden, hidden, rng),
            bn: Vector::zeros(hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GruLayer {
            wz: Mat::zeros(self.wz.raw_dim()),
            uz: Mat::zeros(self.uz.raw_dim()),
            bz: Vector::zeros(self.bz.raw_dim()),
            wr: Mat::zeros(self.wr.raw_dim()),
            ur: Mat::zeros(self.ur.raw_dim()),
            br: Vector::zeros(self.br.raw_dim()),
            wn: Mat::zeros(self.wn.raw_dim()),
            un: Mat::zeros(self.un.raw_dim()),
            bn: Vector::zeros(self.bn.raw_dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.uz.nrows()
    }

    /// Runs the layer over a padded batch. `xs[t]` is the `B x d_in` input at
    /// step `t`; `mask[t]` has 1.0 rows for live timesteps. Hidden state
    /// carries unchanged through masked steps.
    pub fn forward(&self, xs: &[Mat], mask: &[Vector]) -> GruTrace {
        let steps = xs.len();
        let batch = if steps > 0 { xs[0].nrows() } else { 0 };
        let h_dim = self.hidden();
        let mut hs = Vec::with_capacity(steps);
        let mut zs = Vec::with_capacity(steps);
        let mut rs = Vec::with_capacity(steps);
        let mut ns = Vec::with_capacity(steps);
        let mut h_prev = Mat::zeros((batch, h_dim));
        for t in 0..steps {
            let z = sigmoid(&(xs[t].dot(&self.wz) + h_prev.dot(&self.uz) + &self.bz));
            let r = sigmoid(&(xs[t].dot(&self.wr) + h_prev.dot(&self.ur) + &self.br));
            let rh = &r * &h_prev;
            let n = (xs[t].dot(&self.wn) + rh.dot(&self.un) + &self.bn).mapv(f64::tanh);
            let h_new = (1.0 - &z) * &n + &z * &h_prev;
            let m = mask[t].view().insert_axis(Axis(1));
            let h = &h_new * &m + &h_prev * &(1.0 - &m);
            zs.push(z);
            rs.push(r);
            ns.push(n);
            hs.push(h.clone());
            h_prev = h;
        }
        GruTrace { hs, zs, rs, ns }
    }

    /// Backpropagates through time. `d_hs[t]` is the gradient flowing into
    /// `h_t` from outside the layer (pooling or the layer above). Returns the
    /// gradients w.r.t. the inputs `xs`.
    pub fn backward(
        &self,
        xs: &[Mat],
        mask: &[Vector],
        trace: &GruTrace,
        d_hs: &[Mat],
        grad: &mut GruLayer,
    ) -> Vec<Mat> {
        let steps = xs.len();
        let batch = if steps > 0 { xs[0].nrows() } else { 0 };
        let h_dim = self.hidden();
        let zero_h = Mat::zeros((batch, h_dim));
        let mut dxs = vec![Mat::zeros((batch, xs[0].ncols())); steps];
        let mut carry = Mat::zeros((batch, h_dim));
        for t in (0..steps).rev() {
            let h_prev = if t == 0 { &zero_h } else { &trace.hs[t - 1] };
            let z = &trace.zs[t];
            let r = &trace.rs[t];
            let n = &trace.ns[t];
            let m = mask[t].view().insert_axis(Axis(1));

            let dh_total = &d_hs[t] + &carry;
            let dh_new = &dh_total * &m;
            let mut dh_prev = &dh_total * &(1.0 - &m);

            let da_z = &dh_new * &(h_prev - n) * z * &(1.0 - z);
            let da_n = &dh_new * &(1.0 - z) * &(1.0 - &(n * n));
            dh_prev += &(&dh_new * z);

            // candidate path
            grad.wn += &xs[t].t().dot(&da_n);
            let rh = r * h_prev;
            grad.un += &rh.t().dot(&da_n);
            grad.bn += &da_n.sum_axis(Axis(0));
            let drh = da_n.dot(&self.un.t());
            dh_prev += &(&drh * r);
            let da_r = &drh * h_prev * r * &(1.0 - r);

            // reset gate
            grad.wr += &xs[t].t().dot(&da_r);
            grad.ur += &h_prev.t().dot(&da_r);
            grad.br += &da_r.sum_axis(Axis(0));
            dh_prev += &da_r.dot(&self.ur.t());

            // update gate
            grad.wz += &xs[t].t().dot(&da_z);
            grad.uz += &h_prev.t().dot(&da_z);
            grad.bz += &da_z.sum_axis(Axis(0));
            dh_prev += &da_z.dot(&self.uz.t());

            dxs[t] = da_z.dot(&self.wz.t()) + da_r.dot(&self.wr.t()) + da_n.dot(&self.wn.t());
            carry = dh_prev;
        }
        dxs
    }
}

fn sigmoid(x: &Mat) -> Mat {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Forward activations cached for backprop.
pub struct GruTrace {
    pub hs: Vec<Mat>,
    pub zs: Vec<Mat>,
    pub rs: Vec<Mat>,
    pub ns: Vec<Mat>,
}

/// Two stacked GRU layers with hidden size `D2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruEncoderParams {
    pub layer1: GruLayer,
    pub layer2: GruLayer,
}

impl GruEncoderParams {
    pub fn init(d_word: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruEncoderParams {
            layer1: GruLayer::init(d_word, hidden, rng),
            layer2: GruLayer::init(hidden, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GruEncoderParams {
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.layer2.hidden()
    }
}

/// Pads a batch of token-id sequences and gathers embedding rows.
/// Returns per-step input matrices, per-step masks and sequence lengths.
pub fn embed_batch(
    token_ids: &[&[u32]],
    emb: &EmbeddingTable,
) -> (Vec<Mat>, Vec<Vector>, Vec<usize>) {
    let batch = token_ids.len();
    let max_len = token_ids.iter().map(|s| s.len()).max().unwrap_or(0);
    let d = emb.d_word();
    let mut xs = Vec::with_capacity(max_len);
    let mut mask = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let mut x = Mat::zeros((batch, d));
        let mut m = Vector::zeros(batch);
        for (i, ids) in token_ids.iter().enumerate() {
            let id = if t < ids.len() { ids[t] } else { PAD_ID };
            x.row_mut(i).assign(&emb.table.row(id as usize));
            if t < ids.len() {
                m[i] = 1.0;
            }
        }
        xs.push(x);
        mask.push(m);
    }
    let lens = token_ids.iter().map(|s| s.len()).collect();
    (xs, mask, lens)
}

/// Accumulates per-step input gradients back into embedding rows.
pub fn embed_backward(token_ids: &[&[u32]], dxs: &[Mat], grad_table: &mut Mat) {
    for (t, dx) in dxs.iter().enumerate() {
        for (i, ids) in token_ids.iter().enumerate() {
            if t < ids.len() {
                let id = ids[t] as usize;
                let mut row = grad_table.row_mut(id);
                row += &dx.row(i);
            }
        }
    }
}

/// Mean of the top-layer outputs over live timesteps.
pub fn masked_mean(hs: &[Mat], mask: &[Vector], lens: &[usize]) -> Mat {
    let batch = lens.len();
    let h_dim = hs.first().map_or(0, |h| h.ncols());
    let mut out = Mat::zeros((batch, h_dim));
    for (h, m) in hs.iter().zip(mask) {
        out += &(h * &m.view().insert_axis(Axis(1)));
    }
    for (i, &len) in lens.iter().enumerate() {
        let inv = 1.0 / len.max(1) as f64;
        out.row_mut(i).mapv_inplace(|v| v * inv);
    }
    out
}

/// Distributes the pooled gradient back to each live timestep.
pub fn masked_mean_backward(d_out: &Mat, mask: &[Vector], lens: &[usize]) -> Vec<Mat> {
    let mut scaled = d_out.clone();
    for (i, &len) in lens.iter().enumerate() {
        let inv = 1.0 / len.max(1) as f64;
        scaled.row_mut(i).mapv_inplace(|v| v * inv);
    }
    mask.iter()
        .map(|m| &scaled * &m.view().insert_axis(Axis(1)))
        .collect()
}

/// Batched sentence encoding: embeddings -> 2-layer GRU -> masked mean.
/// Returns the `B x D2` encodings plus all caches needed for backprop.
pub struct EncoderTrace {
    pub xs: Vec<Mat>,
    pub mask: Vec<Vector>,
    pub lens: Vec<usize>,
    pub trace1: GruTrace,
    pub trace2: GruTrace,
}

pub fn encode_batch(
    token_ids: &[&[u32]],
    emb: &EmbeddingTable,
    gru: &GruEncoderParams,
) -> (Mat, EncoderTrace) {
    let (xs, mask, lens) = embed_batch(token_ids, emb);
    let trace1 = gru.layer1.forward(&xs, &mask);
    let trace2 = gru.layer2.forward(&trace1.hs, &mask);
    let pooled = masked_mean(&trace2.hs, &mask, &lens);
    (
        pooled,
        EncoderTrace {
            xs,
            mask,
            lens,
            trace1,
            trace2,
        },
    )
}

/// Backward through the sentence encoder. Returns the gradient w.r.t. the
/// embedding inputs per step (suitable for [`embed_backward`]).
pub fn encode_backward(
    d_pooled: &Mat,
    gru: &GruEncoderParams,
    trace: &EncoderTrace,
    grad: &mut GruEncoderParams,
) -> Vec<Mat> {
    let d_h2 = masked_mean_backward(d_pooled, &trace.mask, &trace.lens);
    let d_h1 = gru
        .layer2
        .backward(&trace.trace1.hs, &trace.mask, &trace.trace2, &d_h2, &mut grad.layer2);
    gru.layer1
        .backward(&trace.xs, &trace.mask, &trace.trace1, &d_h1, &mut grad.layer1)
}

/// Deterministic single-instruction encoding (mean of the top-layer GRU
/// outputs). Convenience wrapper over the batched path.
pub fn encode_instruction(
    instr: &Instruction,
    emb: &EmbeddingTable,
    gru: &GruEncoderParams,
) -> Vector {
    let ids: &[u32] = &instr.tokens;
    let (pooled, _) = encode_batch(&[ids], emb, gru);
    pooled.row(0).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tokenize_strips_punctuation_and_lowercases() {
        assert_eq!(tokenize("Jump over the skull!"), vec!["jump", "over", "the", "skull"]);
    }

    #[test]
    fn tokenize_empty_maps_to_unk() {
        assert_eq!(tokenize(""), vec![UNK_TOKEN]);
        assert_eq!(tokenize("!!! ???"), vec![UNK_TOKEN]);
    }

    #[test]
    fn tokenize_preserves_typos() {
        assert_eq!(tokenize("go dwon"), vec!["go", "dwon"]);
    }

    #[test]
    fn vocabulary_reserved_ids() {
        let v = Vocabulary::build(["go left", "go right"]);
        assert_eq!(v.id(UNK_TOKEN), UNK_ID);
        assert_eq!(v.id(PAD_TOKEN), PAD_ID);
        assert_eq!(v.id("never-seen"), UNK_ID);
        assert!(v.id("go") >= 2 && v.id("left") >= 2);
        // bijective over non-reserved entries
        for id in 2..v.len() as u32 {
            assert_eq!(v.id(v.token(id)), id);
        }
    }

    #[test]
    fn instruction_tokens_never_empty() {
        let v = Vocabulary::build(["go left"]);
        let i = v.instruction("");
        assert_eq!(i.tokens, vec![UNK_ID]);
    }

    #[test]
    fn zero_params_encode_to_zero_vector() {
        // With all-zero weights: z = 0.5, n = tanh(0) = 0, so
        // h' = 0.5 * h and h stays at the zero initial state; the mean of
        // all-zero outputs is the zero vector.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let emb = EmbeddingTable::random(8, 5, &mut rng);
        let mut gru = GruEncoderParams::init(5, 4, &mut rng);
        let zeroed = gru.zeros_like();
        gru = zeroed;
        let v = Vocabulary::build(["a b c d"]);
        let out = encode_instruction(&v.instruction("a b c d"), &emb, &gru);
        assert!(out.iter().all(|&x| x == 0.0), "{out:?}");
    }

    #[test]
    fn single_token_mean_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let emb = EmbeddingTable::random(8, 5, &mut rng);
        let gru = GruEncoderParams::init(5, 4, &mut rng);
        let v = Vocabulary::build(["solo"]);
        let instr = v.instruction("solo");
        let ids: &[u32] = &instr.tokens;
        let (pooled, trace) = encode_batch(&[ids], &emb, &gru);
        // mean over one step equals that step's top-layer output
        let h_last = &trace.trace2.hs[0];
        for j in 0..pooled.ncols() {
            assert!((pooled[(0, j)] - h_last[(0, j)]).abs() < 1e-15);
        }
    }

    #[test]
    fn token_order_changes_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let emb = EmbeddingTable::random(16, 6, &mut rng);
        let gru = GruEncoderParams::init(6, 5, &mut rng);
        let v = Vocabulary::build(["down the ladder"]);
        let a = encode_instruction(&v.instruction("down the ladder"), &emb, &gru);
        let b = encode_instruction(&v.instruction("ladder the down"), &emb, &gru);
        let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-8, "order-insensitive encoding: diff {diff}");
    }

    #[test]
    fn outputs_finite_for_large_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = EmbeddingTable::random(8, 4, &mut rng);
        let mut gru = GruEncoderParams::init(4, 4, &mut rng);
        gru.layer1.wz.mapv_inplace(|v| v * 1e6);
        gru.layer1.un.mapv_inplace(|v| v * 1e6);
        let v = Vocabulary::build(["x y z"]);
        let out = encode_instruction(&v.instruction("x y z"), &emb, &gru);
        assert!(out.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn batched_encoding_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let emb = EmbeddingTable::random(32, 6, &mut rng);
        let gru = GruEncoderParams::init(6, 5, &mut rng);
        let v = Vocabulary::build(["go down the long ladder now"]);
        let i1 = v.instruction("go down");
        let i2 = v.instruction("the long ladder now go");
        let ids: Vec<&[u32]> = vec![&i1.tokens, &i2.tokens];
        let (pooled, _) = encode_batch(&ids, &emb, &gru);
        let s1 = encode_instruction(&i1, &emb, &gru);
        let s2 = encode_instruction(&i2, &emb, &gru);
        for j in 0..pooled.ncols() {
            assert!((pooled[(0, j)] - s1[j]).abs() < 1e-12);
            assert!((pooled[(1, j)] - s2[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_forward_matches_scalar_reference() {
        // Independent scalar-loop reimplementation of the gate equations.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d_in = 3;
        let h_dim = 2;
        let layer = GruLayer::init(d_in, h_dim, &mut rng);
        let steps = 4;
        let xs: Vec<Mat> =
            (0..steps).map(|_| Mat::from_shape_fn((1, d_in), |_| rng.gen_range(-1.0..1.0))).collect();
        let mask: Vec<Vector> = (0..steps).map(|_| Vector::ones(1)).collect();
        let trace = layer.forward(&xs, &mask);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0; h_dim];
        for t in 0..steps {
            let mut hn = vec![0.0; h_dim];
            for k in 0..h_dim {
                let mut az = layer.bz[k];
                let mut ar = layer.br[k];
                for i in 0..d_in {
                    az += xs[t][(0, i)] * layer.wz[(i, k)];
                    ar += xs[t][(0, i)] * layer.wr[(i, k)];
                }
                for j in 0..h_dim {
                    az += h[j] * layer.uz[(j, k)];
                    ar += h[j] * layer.ur[(j, k)];
                }
                let z = sig(az);
                let r_local = sig(ar);
                // candidate needs the full r vector; compute it first
                let _ = r_local;
                let mut an = layer.bn[k];
                for i in 0..d_in {
                    an += xs[t][(0, i)] * layer.wn[(i, k)];
                }
                for j in 0..h_dim {
                    let mut arj = layer.br[j];
                    for i in 0..d_in {
                        arj += xs[t][(0, i)] * layer.wr[(i, j)];
                    }
                    for jj in 0..h_dim {
                        arj += h[jj] * layer.ur[(jj, j)];
                    }
                    an += sig(arj) * h[j] * layer.un[(j, k)];
                }
                let n = an.tanh();
                hn[k] = (1.0 - z) * n + z * h[k];
            }
            h = hn;
            for k in 0..h_dim {
                assert!(
                    (trace.hs[t][(0, k)] - h[k]).abs() < 1e-12,
                    "step {t} unit {k}: {} vs {}",
                    trace.hs[t][(0, k)],
                    h[k]
                );
            }
        }
    }
}
