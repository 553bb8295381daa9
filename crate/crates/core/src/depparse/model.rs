use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eisner::{decode_projective, ArcScores};
use super::tree::DependencyTree;
use crate::data::vocab::{Vocabulary, PAD};
use crate::error::{invalid_arg, shape_err, Error, Result};
use crate::nn::checkpoint::{self, Precision};
use crate::nn::{stacked_birnn_encode, Graph, Linear, LstmCell, ParamStore};
use crate::tensor::{Tensor, Var};

/// Parser dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParserConfig {
    pub embed_dim: usize,
    /// Per direction; each output vector has `2 * hidden_dim` entries.
    pub hidden_dim: usize,
    pub layers: usize,
    pub arc_mlp: usize,
    pub label_mlp: usize,
    pub init_range: f64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig { embed_dim: 100, hidden_dim: 200, layers: 3, arc_mlp: 400, label_mlp: 100, init_range: 0.1 }
    }
}

impl ParserConfig {
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
            ("arc_mlp", self.arc_mlp),
            ("label_mlp", self.label_mlp),
        ] {
            if v == 0 {
                return Err(invalid_arg!("parser {name} must be positive"));
            }
        }
        if !(self.init_range > 0.0) {
            return Err(invalid_arg!("parser init_range must be positive"));
        }
        Ok(())
    }
}

/// Which encoder layers represent a word outside the parser.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderLayers {
    /// The last BiLSTM layer.
    #[default]
    Top,
    /// Every layer, concatenated bottom first.
    All,
}

/// The parser's computation graph. Parameters live under `prefix`, so the
/// same network can run inside a translation model's parameter table.
///
/// Parameters:
///
/// ```text
/// embed                 [vocab, embed_dim]
/// lstm{k}.fwd/.bwd      stacked bidirectional LSTM
/// root                  [1, 2h]        stands in for o_0 on the head side
/// arc_head, arc_dep     tanh MLPs 2h -> a
/// arc.U                 [a, a + 1]     last column is the head bias
/// label_head, label_dep tanh MLPs 2h -> l
/// label.U               [l, L * l]     one bilinear block per label
/// label.W, label.b      [2l, L], [1, L]
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ParserNet {
    pub prefix: String,
    pub config: ParserConfig,
    pub vocab_size: usize,
    pub num_labels: usize,
}

impl ParserNet {
    pub fn new(prefix: impl Into<String>, config: ParserConfig, vocab_size: usize, num_labels: usize) -> Self {
        ParserNet { prefix: prefix.into(), config, vocab_size, num_labels }
    }

    fn name(&self, s: &str) -> String {
        format!("{}{s}", self.prefix)
    }

    fn layers(&self) -> Vec<(LstmCell, LstmCell)> {
        let c = &self.config;
        (0..c.layers)
            .map(|k| {
                let input = if k == 0 { c.embed_dim } else { c.output_dim() };
                (
                    LstmCell::new(self.name(&format!("lstm{k}.fwd")), input, c.hidden_dim),
                    LstmCell::new(self.name(&format!("lstm{k}.bwd")), input, c.hidden_dim),
                )
            })
            .collect()
    }

    fn mlp(&self, which: &str) -> Linear {
        let out = if which.starts_with("arc") { self.config.arc_mlp } else { self.config.label_mlp };
        Linear::new(self.name(which), self.config.output_dim(), out)
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        let r = c.init_range;
        store.init_uniform(&self.name("embed"), &[self.vocab_size, c.embed_dim], r, seed)?;
        for (f, b) in self.layers() {
            f.init(store, r, seed)?;
            b.init(store, r, seed)?;
        }
        store.init_uniform(&self.name("root"), &[1, c.output_dim()], r, seed)?;
        for m in ["arc_head", "arc_dep", "label_head", "label_dep"] {
            self.mlp(m).init(store, r, seed)?;
        }
        let (a, l, nl) = (c.arc_mlp, c.label_mlp, self.num_labels.max(1));
        store.init_uniform(&self.name("arc.U"), &[a, a + 1], r, seed)?;
        store.init_uniform(&self.name("label.U"), &[l, nl * l], r, seed)?;
        store.init_uniform(&self.name("label.W"), &[2 * l, nl], r, seed)?;
        store.init_uniform(&self.name("label.b"), &[1, nl], r, seed)
    }

    /// Top-layer encodings `[n_b, 2h]` for each sentence of a batch.
    pub fn encode_batch(&self, g: &mut Graph, sentences: &[Vec<usize>]) -> Result<Vec<Var>> {
        self.encode_layers(g, sentences, EncoderLayers::Top)
    }

    /// Width of the encodings produced by [`Self::encode_layers`].
    pub fn encoding_dim(&self, layers: EncoderLayers) -> usize {
        match layers {
            EncoderLayers::Top => self.config.output_dim(),
            EncoderLayers::All => self.config.layers * self.config.output_dim(),
        }
    }

    /// Per-sentence encodings `[n_b, encoding_dim]` taken from the selected
    /// encoder layers.
    pub fn encode_layers(&self, g: &mut Graph, sentences: &[Vec<usize>], which: EncoderLayers) -> Result<Vec<Var>> {
        if sentences.is_empty() {
            return Err(invalid_arg!("empty batch"));
        }
        if sentences.iter().any(Vec::is_empty) {
            return Err(invalid_arg!("cannot encode an empty sentence"));
        }
        let lengths: Vec<usize> = sentences.iter().map(Vec::len).collect();
        let steps = *lengths.iter().max().expect("non-empty");
        let embed = self.name("embed");
        let inputs = (0..steps)
            .map(|t| {
                let ids: Vec<usize> = sentences.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect();
                if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
                    return Err(invalid_arg!("word id {bad} outside parser vocabulary of {}", self.vocab_size));
                }
                g.embed(&embed, &ids)
            })
            .collect::<Result<Vec<_>>>()?;
        let layers = self.layers();
        let enc = stacked_birnn_encode(g, &inputs, &lengths, &layers)?;
        let per_step: Vec<Var> = match which {
            EncoderLayers::Top => enc.last().expect("at least one layer").outputs.clone(),
            EncoderLayers::All => (0..steps)
                .map(|t| {
                    let parts: Vec<Var> = enc.iter().map(|e| e.outputs[t]).collect();
                    g.concat(&parts, 1)
                })
                .collect::<Result<_>>()?,
        };
        let all = g.concat(&per_step, 0)?;
        let b = sentences.len();
        sentences
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let rows: Vec<usize> = (0..s.len()).map(|t| t * b + k).collect();
                g.gather_rows(all, &rows)
            })
            .collect()
    }

    fn with_root(&self, g: &mut Graph, o: Var) -> Result<Var> {
        let root = g.param(&self.name("root"))?;
        g.concat(&[root, o], 0)
    }

    fn mlp_forward(&self, g: &mut Graph, which: &str, x: Var) -> Result<Var> {
        let y = self.mlp(which).forward(g, x)?;
        Ok(g.tanh(y))
    }

    /// `[(n + 1), n]` arc scores for encoding `o: [n, 2h]`, without the
    /// self-arc mask.
    pub fn arc_scores(&self, g: &mut Graph, o: Var) -> Result<Var> {
        let n = g.shape(o)[0];
        let heads = self.with_root(g, o)?;
        let hd = self.mlp_forward(g, "arc_head", heads)?;
        let dp = self.mlp_forward(g, "arc_dep", o)?;
        let ones = g.constant(Tensor::full(&[n, 1], 1.0));
        let dp1 = g.concat(&[dp, ones], 1)?;
        let u = g.param(&self.name("arc.U"))?;
        let hu = g.matmul(hd, u)?;
        let dt = g.transpose(dp1)?;
        g.matmul(hu, dt)
    }

    /// `[n, L]` label scores of each token under the given heads.
    pub fn label_scores(&self, g: &mut Graph, o: Var, heads: &[usize]) -> Result<Var> {
        let n = g.shape(o)[0];
        if heads.len() != n {
            return Err(shape_err!("{} heads for {n} tokens", heads.len()));
        }
        let l = self.config.label_mlp;
        let nl = self.num_labels.max(1);
        let all_heads = self.with_root(g, o)?;
        let hl_all = self.mlp_forward(g, "label_head", all_heads)?;
        let hl = g.gather_rows(hl_all, heads)?;
        let dl = self.mlp_forward(g, "label_dep", o)?;
        let u = g.param(&self.name("label.U"))?;
        let q = g.matmul(hl, u)?;
        let tiled = g.concat(&vec![dl; nl], 1)?;
        let prod = g.mul(q, tiled)?;
        let blocks = g.constant(block_sum(l, nl));
        let bilinear = g.matmul(prod, blocks)?;
        let both = g.concat(&[hl, dl], 1)?;
        let w = g.param(&self.name("label.W"))?;
        let b = g.param(&self.name("label.b"))?;
        let lin = crate::nn::linear(g, both, w, b)?;
        g.add(bilinear, lin)
    }

    /// Summed head and label cross-entropy of one sentence.
    pub fn loss(&self, g: &mut Graph, o: Var, heads: &[usize], labels: &[usize]) -> Result<Var> {
        let n = g.shape(o)[0];
        let scores = self.arc_scores(g, o)?;
        let per_dep = g.transpose(scores)?;
        let mut mask = Tensor::zeros(&[n, n + 1]);
        for d in 0..n {
            mask.data_mut()[d * (n + 1) + d + 1] = -1e9;
        }
        let mask = g.constant(mask);
        let masked = g.add(per_dep, mask)?;
        let lp = g.log_softmax(masked, 1)?;
        let picked = g.pick(lp, heads)?;
        let arc_ll = g.sum(picked);
        let ls = self.label_scores(g, o, heads)?;
        let llp = g.log_softmax(ls, 1)?;
        let lpicked = g.pick(llp, labels)?;
        let lab_ll = g.sum(lpicked);
        let total = g.add(arc_ll, lab_ll)?;
        Ok(g.scale(total, -1.0))
    }

    /// Decoding scores from a computed encoding, including all per-label
    /// matrices.
    pub fn score(&self, g: &mut Graph, o: Var, label_names: &[String]) -> Result<ArcScores> {
        let arcs = self.arc_scores(g, o)?;
        let mut scores = ArcScores::new(g.value(arcs).clone())?;
        if label_names.is_empty() {
            return Ok(scores);
        }
        let n = g.shape(o)[0];
        let l = self.config.label_mlp;
        let all_heads = self.with_root(g, o)?;
        let hl = self.mlp_forward(g, "label_head", all_heads)?;
        let dl = self.mlp_forward(g, "label_dep", o)?;
        let (hl, dl) = (g.value(hl).clone(), g.value(dl).clone());
        let store = g.store();
        let p = |s: &str| store.get(&self.name(s)).ok_or_else(|| invalid_arg!("missing {s}"));
        let (u, w, b) = (p("label.U")?, p("label.W")?, p("label.b")?);
        let hu = hl.matmul(u)?;
        let dlt = dl.transpose()?;
        let hw = hl.matmul(&w.slice(0, 0, l)?)?;
        let dw = dl.matmul(&w.slice(0, l, l)?)?;
        for k in 0..label_names.len() {
            let mut m = hu.slice(1, k * l, l)?.matmul(&dlt)?;
            for h in 0..=n {
                for d in 0..n {
                    m.data_mut()[h * n + d] += hw.at(h, k) + dw.at(d, k) + b.at(0, k);
                }
            }
            scores.labels.push(m);
        }
        scores.label_names = label_names.to_vec();
        Ok(scores)
    }
}

/// `[L * l, L]` matrix summing each block of `l` columns.
fn block_sum(l: usize, labels: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels * l, labels]);
    for k in 0..labels {
        for j in 0..l {
            t.data_mut()[(k * l + j) * labels + k] = 1.0;
        }
    }
    t
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: ParserConfig,
    words: Vec<String>,
    labels: Vec<String>,
}

/// A trained parser: network, parameters, word vocabulary and label set.
#[derive(Clone, Debug)]
pub struct Parser {
    pub net: ParserNet,
    pub store: ParamStore,
    pub words: Vocabulary,
    pub labels: Vec<String>,
}

impl Parser {
    pub fn new(config: ParserConfig, words: Vocabulary, labels: Vec<String>, seed: u64) -> Result<Self> {
        let net = ParserNet::new("", config, words.len(), labels.len());
        let mut store = ParamStore::new();
        net.init(&mut store, seed)?;
        Ok(Parser { net, store, words, labels })
    }

    pub fn config(&self) -> &ParserConfig {
        &self.net.config
    }

    pub fn output_dim(&self) -> usize {
        self.net.config.output_dim()
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn word_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.words.encode(tokens)
    }

    /// Top-layer encodings `o_1..o_n` as `[n, 2h]` tensors.
    pub fn encode_batch<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<Vec<Tensor>> {
        self.encode_layers_batch(sentences, EncoderLayers::Top)
    }

    pub fn encode_layers_batch<S: AsRef<str>>(&self, sentences: &[Vec<S>], layers: EncoderLayers) -> Result<Vec<Tensor>> {
        let ids: Vec<Vec<usize>> = sentences.iter().map(|s| self.word_ids(s)).collect();
        let mut g = Graph::eval(&self.store);
        let out = self.net.encode_layers(&mut g, &ids, layers)?;
        Ok(out.into_iter().map(|v| g.value(v).clone()).collect())
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Tensor> {
        let ids = vec![self.word_ids(tokens)];
        let mut g = Graph::eval(&self.store);
        let out = self.net.encode_batch(&mut g, &ids)?;
        Ok(g.value(out[0]).clone())
    }

    pub fn scores<S: AsRef<str>>(&self, tokens: &[S]) -> Result<ArcScores> {
        let ids = vec![self.word_ids(tokens)];
        let mut g = Graph::eval(&self.store);
        let o = self.net.encode_batch(&mut g, &ids)?[0];
        self.net.score(&mut g, o, &self.labels)
    }

    pub fn parse<S: AsRef<str>>(&self, tokens: &[S]) -> Result<DependencyTree> {
        decode_projective(&self.scores(tokens)?)
    }

    pub fn parse_batch<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<Vec<DependencyTree>> {
        let ids: Vec<Vec<usize>> = sentences.iter().map(|s| self.word_ids(s)).collect();
        let mut g = Graph::eval(&self.store);
        let encs = self.net.encode_batch(&mut g, &ids)?;
        encs.into_iter()
            .map(|o| decode_projective(&self.net.score(&mut g, o, &self.labels)?))
            .collect()
    }

    fn meta(&self) -> String {
        let meta = Meta {
            kind: "parser".into(),
            config: self.net.config.clone(),
            words: self.words.tokens()[crate::data::vocab::RESERVED.len()..].to_vec(),
            labels: self.labels.clone(),
        };
        serde_json::to_string(&meta).expect("serializable")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(&self.store, &self.meta(), Precision::F64)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (store, meta) = checkpoint::decode(bytes)?;
        let meta: Meta =
            serde_json::from_str(&meta).map_err(|e| Error::Checkpoint(format!("bad parser metadata: {e}")))?;
        if meta.kind != "parser" {
            return Err(Error::Checkpoint(format!("expected a parser checkpoint, found {:?}", meta.kind)));
        }
        let words = Vocabulary::from_tokens(meta.words);
        let net = ParserNet::new("", meta.config, words.len(), meta.labels.len());
        let mut reference = ParamStore::new();
        net.init(&mut reference, 0)?;
        for (name, t) in reference.iter() {
            match store.get(name) {
                Some(v) if v.shape() == t.shape() => {}
                _ => return Err(Error::Checkpoint(format!("parameter {name} missing or misshapen"))),
            }
        }
        Ok(Parser { net, store, words, labels: meta.labels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
