//! Small trainable text encoders.
//!
//! A sentence embedding is an affine projection of the mean of its token
//! embeddings: `h = W · mean(E[t]) + b`. The cross-encoder runs the same path
//! over `tokens(a) ++ [SEP] ++ tokens(b)` and reads a scalar logit
//! `ŷ = w · h + c`. Backward passes are written out by hand and checked
//! against finite differences in [`crate::trainer::grad_check`].

mod checkpoint;
mod vocab;

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::par::Exec;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use vocab::{build_vocab, build_vocab_from_texts, Vocab, PAD, SEP, SPECIAL_TOKENS, UNK};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("text {0:?} has no tokens")]
    EmptyInput(String),
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("embedding dimension {0} is below 2")]
    Dimension(usize),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Array1<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.dot(&self.0).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding(&self.0 * factor)
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(v: Vec<f64>) -> Self {
        Embedding(Array1::from(v))
    }
}

/// Every trainable array of the bi-/cross-encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `vocab_size × dim` token embedding table.
    pub embeddings: Array2<f64>,
    /// `dim × dim` projection applied after pooling.
    pub projection: Array2<f64>,
    pub bias: Array1<f64>,
    /// Cross-encoder head weights.
    pub head: Array1<f64>,
    pub head_bias: f64,
}

/// Gradients laid out exactly like [`EncoderParams`].
pub type GradientBundle = EncoderParams;

impl EncoderParams {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            embeddings: Array2::zeros((vocab_size, dim)),
            projection: Array2::zeros((dim, dim)),
            bias: Array1::zeros(dim),
            head: Array1::zeros(dim),
            head_bias: 0.0,
        }
    }

    /// Embeddings ~ U(-0.1, 0.1), identity projection; biases and head start at zero.
    pub fn init<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if dim < 2 {
            return Err(EncoderError::Dimension(dim));
        }
        let mut p = Self::zeros(vocab_size, dim);
        p.embeddings.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        p.projection = Array2::eye(dim);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size(), self.dim())
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn num_values(&self) -> usize {
        self.embeddings.len() + self.projection.len() + self.bias.len() + self.head.len() + 1
    }

    pub fn same_shape(&self, other: &EncoderParams) -> bool {
        self.embeddings.dim() == other.embeddings.dim()
            && self.projection.dim() == other.projection.dim()
            && self.bias.len() == other.bias.len()
            && self.head.len() == other.head.len()
    }

    pub fn check_shape(&self) -> Result<()> {
        let d = self.dim();
        if d < 2 {
            return Err(EncoderError::Dimension(d));
        }
        if self.embeddings.ncols() != d || self.projection.dim() != (d, d) || self.head.len() != d {
            return Err(EncoderError::Shape(format!(
                "embeddings {:?}, projection {:?}, bias {}, head {}",
                self.embeddings.dim(),
                self.projection.dim(),
                d,
                self.head.len()
            )));
        }
        Ok(())
    }

    /// All values as mutable slices, in a fixed order.
    pub fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embeddings.as_slice_mut().expect("standard layout"),
            self.projection.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
            self.head.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.head_bias),
        ]
    }

    pub fn slices(&self) -> [&[f64]; 5] {
        [
            self.embeddings.as_slice().expect("standard layout"),
            self.projection.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
            self.head.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.head_bias),
        ]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.slices().into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn get_flat(&self, mut i: usize) -> f64 {
        for s in self.slices() {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        for s in self.slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("flat index out of range");
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &EncoderParams) {
        self.embeddings += &other.embeddings;
        self.projection += &other.projection;
        self.bias += &other.bias;
        self.head += &other.head;
        self.head_bias += other.head_bias;
    }
}

/// Forward-pass cache for one token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub pooled: Array1<f64>,
    pub embedding: Embedding,
}

pub fn encode_ids(ids: &[usize], params: &EncoderParams) -> Result<Encoded> {
    if ids.is_empty() {
        return Err(EncoderError::EmptyInput(String::new()));
    }
    let mut pooled = Array1::<f64>::zeros(params.dim());
    for &id in ids {
        if id >= params.vocab_size() {
            return Err(EncoderError::Shape(format!(
                "token id {id} outside vocabulary of {}",
                params.vocab_size()
            )));
        }
        pooled += &params.embeddings.row(id);
    }
    pooled /= ids.len() as f64;
    let h = params.projection.dot(&pooled) + &params.bias;
    Ok(Encoded {
        ids: ids.to_vec(),
        pooled,
        embedding: Embedding(h),
    })
}

pub fn encode_cached(text: &str, params: &EncoderParams, vocab: &Vocab) -> Result<Encoded> {
    let ids = vocab.tokenize(text);
    if ids.is_empty() {
        return Err(EncoderError::EmptyInput(text.to_string()));
    }
    encode_ids(&ids, params)
}

/// Mean-pooled, projected sentence embedding.
pub fn encode(text: &str, params: &EncoderParams, vocab: &Vocab) -> Result<Embedding> {
    encode_cached(text, params, vocab).map(|e| e.embedding)
}

pub fn encode_batch(
    texts: &[&str],
    params: &EncoderParams,
    vocab: &Vocab,
    exec: Exec,
) -> Result<Vec<Encoded>> {
    exec.try_map(texts, |t| encode_cached(t, params, vocab))
}

pub fn cross_ids(a: &str, b: &str, vocab: &Vocab) -> Result<Vec<usize>> {
    let ta = vocab.tokenize(a);
    let tb = vocab.tokenize(b);
    if ta.is_empty() {
        return Err(EncoderError::EmptyInput(a.to_string()));
    }
    if tb.is_empty() {
        return Err(EncoderError::EmptyInput(b.to_string()));
    }
    let mut ids = ta;
    ids.push(SEP);
    ids.extend(tb);
    Ok(ids)
}

pub fn cross_logit(encoded: &Encoded, params: &EncoderParams) -> f64 {
    params.head.dot(&encoded.embedding.0) + params.head_bias
}

pub fn cross_encode_cached(a: &str, b: &str, params: &EncoderParams, vocab: &Vocab) -> Result<(Encoded, f64)> {
    let enc = encode_ids(&cross_ids(a, b, vocab)?, params)?;
    let logit = cross_logit(&enc, params);
    Ok((enc, logit))
}

/// Cross-encoder logit for the joined pair.
pub fn cross_encode(a: &str, b: &str, params: &EncoderParams, vocab: &Vocab) -> Result<f64> {
    cross_encode_cached(a, b, params, vocab).map(|(_, y)| y)
}

/// `u·v / (‖u‖‖v‖)`, clamped into `[-1, 1]`.
pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64> {
    cosine_parts(&u.0, &v.0).map(|(c, _, _)| c.clamp(-1.0, 1.0))
}

/// Cosine and the pieces its gradient needs: `(cos, ‖u‖, ‖v‖)`. Unclamped.
fn cosine_parts(u: &Array1<f64>, v: &Array1<f64>) -> Result<(f64, f64, f64)> {
    if u.len() != v.len() {
        return Err(EncoderError::Shape(format!("{} vs {}", u.len(), v.len())));
    }
    let nu = u.dot(u).sqrt();
    let nv = v.dot(v).sqrt();
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(EncoderError::ZeroNorm);
    }
    Ok((u.dot(v) / (nu * nv), nu, nv))
}

/// Cosine with its gradients `(cos, ∂cos/∂u, ∂cos/∂v)`. The value is not
/// clamped so that it stays consistent with the gradient.
pub fn cosine_with_grad(u: &Array1<f64>, v: &Array1<f64>) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let (c, nu, nv) = cosine_parts(u, v)?;
    let du = v / (nu * nv) - u * (c / (nu * nu));
    let dv = u / (nu * nv) - v * (c / (nv * nv));
    Ok((c, du, dv))
}

/// Upstream gradient for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Upstream {
    /// ∂L/∂h for a bi-encoder embedding.
    Embedding(Array1<f64>),
    /// ∂L/∂ŷ for a cross-encoder logit.
    Logit(f64),
}

/// Accumulate parameter gradients for a batch of cached forward passes.
pub fn backprop(forward: &[Encoded], upstream: &[Upstream], params: &EncoderParams) -> Result<GradientBundle> {
    if forward.len() != upstream.len() {
        return Err(EncoderError::Shape(format!(
            "{} forward passes but {} upstream gradients",
            forward.len(),
            upstream.len()
        )));
    }
    let mut grads = params.zeros_like();
    for (enc, up) in forward.iter().zip(upstream) {
        accumulate(&mut grads, enc, up, params)?;
    }
    Ok(grads)
}

fn accumulate(grads: &mut GradientBundle, enc: &Encoded, up: &Upstream, params: &EncoderParams) -> Result<()> {
    let d = params.dim();
    let grad_h = match up {
        Upstream::Embedding(g) => {
            if g.len() != d {
                return Err(EncoderError::Shape(format!("upstream gradient of length {} for dim {d}", g.len())));
            }
            g.clone()
        }
        Upstream::Logit(s) => {
            grads.head.scaled_add(*s, &enc.embedding.0);
            grads.head_bias += s;
            &params.head * *s
        }
    };
    // h = W m + b
    for i in 0..d {
        let gi = grad_h[i];
        if gi != 0.0 {
            grads.projection.row_mut(i).scaled_add(gi, &enc.pooled);
        }
    }
    grads.bias += &grad_h;
    let grad_pooled = params.projection.t().dot(&grad_h);
    let share = 1.0 / enc.ids.len() as f64;
    for &id in &enc.ids {
        grads.embeddings.row_mut(id).scaled_add(share, &grad_pooled);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (Vocab, EncoderParams) {
        let vocab = Vocab::from_tokens(["x", "y", "z"]).unwrap();
        let mut p = EncoderParams::zeros(vocab.len(), 2);
        p.embeddings = array![
            [0.0, 0.0],
            [0.5, 0.5],
            [1.0, -1.0],
            [1.0, 0.0],
            [0.0, 2.0],
            [3.0, 1.0]
        ];
        p.projection = Array2::eye(2);
        (vocab, p)
    }

    #[test]
    fn single_token_is_affine_image() {
        let (vocab, mut p) = toy();
        p.projection = array![[2.0, 1.0], [0.0, -1.0]];
        p.bias = array![0.5, 0.25];
        let h = encode("z", &p, &vocab).unwrap();
        // W · (3, 1) + b
        assert_eq!(h.0, array![7.5, -0.75]);
    }

    #[test]
    fn identity_projection_averages() {
        let (vocab, p) = toy();
        let h = encode("x y", &p, &vocab).unwrap();
        assert_eq!(h.0, array![0.5, 1.0]);
    }

    #[test]
    fn token_order_does_not_matter() {
        let (vocab, mut p) = toy();
        p.projection = array![[0.3, -1.2], [2.0, 0.7]];
        let a = encode("x y z z", &p, &vocab).unwrap();
        let b = encode("z x z y", &p, &vocab).unwrap();
        assert_abs_diff_eq!(a.0.as_slice().unwrap(), b.0.as_slice().unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn empty_text_has_no_embedding() {
        let (vocab, p) = toy();
        assert!(matches!(encode("  ", &p, &vocab), Err(EncoderError::EmptyInput(_))));
    }

    #[test]
    fn cosine_examples() {
        let u = Embedding::from(vec![1.0, 0.0]);
        let v = Embedding::from(vec![0.0, 1.0]);
        let w = Embedding::from(vec![1.0, 1.0]);
        assert_eq!(cosine_similarity(&u, &u).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&u, &v).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine_similarity(&w, &u).unwrap(), 0.7071067811865475, epsilon = 1e-15);
        let z = Embedding::from(vec![0.0, 0.0]);
        assert!(matches!(cosine_similarity(&u, &z), Err(EncoderError::ZeroNorm)));
    }

    #[test]
    fn cross_head_zero_gives_zero_logit() {
        let (vocab, p) = toy();
        assert_eq!(cross_encode("x", "y z", &p, &vocab).unwrap(), 0.0);
    }

    #[test]
    fn cross_logit_by_hand() {
        let (vocab, mut p) = toy();
        p.head = array![1.0, 2.0];
        p.head_bias = -0.5;
        // ids x=3, SEP=2, y=4: mean of (1,0), (1,-1), (0,2) = (2/3, 1/3)
        let y = cross_encode("x", "y", &p, &vocab).unwrap();
        assert_abs_diff_eq!(y, 2.0 / 3.0 + 2.0 / 3.0 - 0.5, epsilon = 1e-15);
        assert_eq!(y, cross_encode("y", "x", &p, &vocab).unwrap());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let (vocab, p) = toy();
        let enc = vec![encode_cached("x y", &p, &vocab).unwrap(), encode_cached("z", &p, &vocab).unwrap()];
        let up = vec![Upstream::Embedding(Array1::zeros(2)), Upstream::Logit(0.0)];
        assert_eq!(backprop(&enc, &up, &p).unwrap(), p.zeros_like());
    }

    #[test]
    fn rows_of_absent_tokens_stay_zero() {
        let (vocab, mut p) = toy();
        p.projection = array![[0.3, -1.2], [2.0, 0.7]];
        let enc = vec![encode_cached("x", &p, &vocab).unwrap()];
        let g = backprop(&enc, &[Upstream::Embedding(array![1.0, -2.0])], &p).unwrap();
        for id in [PAD, UNK, SEP, vocab.id("y").unwrap(), vocab.id("z").unwrap()] {
            assert!(g.embeddings.row(id).iter().all(|&v| v == 0.0));
        }
        assert!(g.embeddings.row(vocab.id("x").unwrap()).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn backprop_shape_mismatch() {
        let (vocab, p) = toy();
        let enc = vec![encode_cached("x", &p, &vocab).unwrap()];
        assert!(backprop(&enc, &[], &p).is_err());
        assert!(backprop(&enc, &[Upstream::Embedding(array![1.0])], &p).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = EncoderParams::init(10, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = EncoderParams::init(10, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.embeddings.iter().all(|v| v.abs() < 0.1));
        assert_eq!(a.projection, Array2::<f64>::eye(4));
        assert!(a.head.iter().all(|&v| v == 0.0) && a.bias.iter().all(|&v| v == 0.0));
        assert!(EncoderParams::init(10, 1, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn flat_indexing_covers_every_value() {
        let mut p = EncoderParams::zeros(4, 3);
        let n = p.num_values();
        assert_eq!(n, 4 * 3 + 9 + 3 + 3 + 1);
        for i in 0..n {
            p.set_flat(i, i as f64);
        }
        assert_eq!(p.head_bias, (n - 1) as f64);
        assert_eq!(p.values().collect::<Vec<_>>(), (0..n).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(p.get_flat(13), 13.0);
    }

    #[test]
    fn batch_modes_agree() {
        let vocab = Vocab::from_tokens((0..30).map(|i| format!("t{i}"))).unwrap();
        let p = EncoderParams::init(vocab.len(), 8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let texts: Vec<String> = (0..64).map(|i| format!("t{} t{} t{}", i % 30, (i * 7) % 30, (i * 13) % 30)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let a = encode_batch(&refs, &p, &vocab, Exec::Sequential).unwrap();
        let b = encode_batch(&refs, &p, &vocab, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn cosine_scale_invariance(
            u in proptest::collection::vec(-5.0f64..5.0, 4),
            v in proptest::collection::vec(-5.0f64..5.0, 4),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            let u = Embedding::from(u);
            let v = Embedding::from(v);
            prop_assume!(u.norm() > 1e-3 && v.norm() > 1e-3);
            let c = cosine_similarity(&u, &v).unwrap();
            let cs = cosine_similarity(&u.scaled(alpha), &v.scaled(beta)).unwrap();
            prop_assert!((c - cs).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        #[test]
        fn permutation_invariance(seed in 0u64..1000, perm_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let vocab = Vocab::from_tokens((0..12).map(|i| format!("w{i}"))).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = EncoderParams::init(vocab.len(), 6, &mut rng).unwrap();
            let mut toks: Vec<String> = (0..9).map(|_| format!("w{}", rng.random_range(0..12))).collect();
            let a = encode(&toks.join(" "), &p, &vocab).unwrap();
            toks.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let b = encode(&toks.join(" "), &p, &vocab).unwrap();
            for (x, y) in a.0.iter().zip(b.0.iter()) {
                prop_assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
            }
        }
    }
}
