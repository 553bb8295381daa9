use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::bpe::BpeModel;
use crate::data::linearize::linearize;
use crate::data::vocab::{Vocabulary, BOS, EOS, PAD, RESERVED};
use crate::depparse::{DependencyTree, EncoderLayers, Parser, ParserConfig, ParserNet};
use crate::error::{invalid_arg, shape_err, Error, Result};
use crate::nn::checkpoint::{self, Precision};
use crate::nn::{birnn_encode, Cell, Graph, GruCell, Linear, ParamStore, Trainable};
use crate::syntax::{sawr_augment, sawr_project, TreeGru};
use crate::tensor::{Tensor, Var};

/// How source syntax reaches the encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntaxMode {
    /// Word embeddings only.
    #[default]
    None,
    /// Word embedding ⊕ projected parser encoder state.
    Sawr,
    /// Bidirectional Tree-GRU states replace the word embeddings.
    TreeRnn,
    /// The source is the bracketed linearization of its tree.
    TreeLinearized,
}

impl SyntaxMode {
    pub fn needs_tree(self) -> bool {
        matches!(self, SyntaxMode::TreeRnn | SyntaxMode::TreeLinearized)
    }
}

/// Translator dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mode: SyntaxMode,
    pub embed_dim: usize,
    /// Encoder state size; each direction has half.
    pub hidden_dim: usize,
    pub decoder_dim: usize,
    /// Width of the hidden layer of the output network.
    pub output_dim: usize,
    pub sawr_dim: usize,
    /// Parser layers feeding the SAWR projection.
    pub sawr_layers: EncoderLayers,
    /// Per direction.
    pub tree_dim: usize,
    pub dropout: f64,
    pub init_range: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: SyntaxMode::None,
            embed_dim: 512,
            hidden_dim: 1024,
            decoder_dim: 1024,
            output_dim: 1024,
            sawr_dim: 512,
            sawr_layers: EncoderLayers::Top,
            tree_dim: 256,
            dropout: 0.5,
            init_range: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("decoder_dim", self.decoder_dim),
            ("output_dim", self.output_dim),
            ("sawr_dim", self.sawr_dim),
            ("tree_dim", self.tree_dim),
        ] {
            if v == 0 {
                return Err(invalid_arg!("{name} must be positive"));
            }
        }
        if !self.hidden_dim.is_multiple_of(2) {
            return Err(invalid_arg!(
                "hidden_dim {} must be even: the encoder concatenates two equal halves",
                self.hidden_dim
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid_arg!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.init_range > 0.0) {
            return Err(invalid_arg!("init_range must be positive"));
        }
        Ok(())
    }

    /// Width of the vectors the encoder reads.
    pub fn encoder_input_dim(&self) -> usize {
        match self.mode {
            SyntaxMode::None | SyntaxMode::TreeLinearized => self.embed_dim,
            SyntaxMode::Sawr => self.embed_dim + self.sawr_dim,
            SyntaxMode::TreeRnn => 2 * self.tree_dim,
        }
    }
}

/// Parser pieces carried by a SAWR-mode translator. Its parameters live in
/// the translator's table under `parser.`.
#[derive(Clone, Debug)]
pub struct EmbeddedParser {
    pub net: ParserNet,
    pub words: Vocabulary,
    pub labels: Vec<String>,
}

pub const PARSER_PREFIX: &str = "parser.";

/// One source sentence, prepared for a particular translator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceInput {
    /// Source-vocabulary ids (symbols, for linearized input).
    pub ids: Vec<usize>,
    /// Parser-vocabulary ids of the words (SAWR mode).
    pub parser_ids: Vec<usize>,
    /// For each position, the word whose SAWR it receives; `None` for
    /// non-initial subwords, which get a zero vector.
    pub word_of: Vec<Option<usize>>,
    /// Word tree (Tree-GRU mode).
    pub tree: Option<DependencyTree>,
    /// Precomputed parser encoding `[words, parser_dim]` (frozen SAWR mode).
    pub sawr: Option<Arc<Tensor>>,
}

impl SourceInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// The symbols a `mode` encoder reads for a tokenized sentence: BPE units
/// of the words, or of the words inside the bracketed linearization (brackets
/// are never segmented). Tree-GRU input must stay word level.
pub fn source_units<S: AsRef<str>>(
    mode: SyntaxMode,
    tokens: &[S],
    tree: Option<&DependencyTree>,
    bpe: Option<&BpeModel>,
) -> Result<Vec<String>> {
    if tokens.is_empty() {
        return Err(invalid_arg!("empty source sentence"));
    }
    let words: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let need_tree = || -> Result<&DependencyTree> {
        let t = tree.ok_or_else(|| invalid_arg!("{mode:?} mode needs a source tree"))?;
        if t.len() != words.len() {
            return Err(invalid_arg!("tree over {} tokens for a {}-word sentence", t.len(), words.len()));
        }
        Ok(t)
    };
    let segment = |ws: &[String]| match bpe {
        Some(m) => m.apply(ws),
        None => ws.to_vec(),
    };
    Ok(match mode {
        SyntaxMode::None | SyntaxMode::Sawr => segment(&words),
        SyntaxMode::TreeRnn => {
            if bpe.is_some() {
                return Err(invalid_arg!("source BPE cannot be combined with the Tree-GRU encoder"));
            }
            need_tree()?;
            words
        }
        SyntaxMode::TreeLinearized => {
            let mut units = Vec::new();
            for s in linearize(&words, need_tree()?)? {
                if s.starts_with('(') || s == ")" {
                    units.push(s);
                } else {
                    units.extend(segment(&[s]));
                }
            }
            units
        }
    })
}

/// Encoder output for a batch.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// One `[batch, hidden]` matrix per source position.
    pub states: Vec<Var>,
    /// `[batch, steps]`: 0 for real positions, -1e9 for padding.
    pub mask: Tensor,
    pub lengths: Vec<usize>,
    /// Initial decoder state `[batch, decoder_dim]`.
    pub init: Var,
}

impl Encoded {
    /// Batch made of rows `rows` of this one (rows may repeat).
    pub fn select(&self, g: &mut Graph, rows: &[usize]) -> Result<Encoded> {
        let states = self.states.iter().map(|&h| g.gather_rows(h, rows)).collect::<Result<Vec<_>>>()?;
        let steps = self.states.len();
        let mut mask = Tensor::zeros(&[rows.len(), steps]);
        for (k, &r) in rows.iter().enumerate() {
            mask.data_mut()[k * steps..(k + 1) * steps].copy_from_slice(self.mask.row_slice(r));
        }
        let init = g.gather_rows(self.init, rows)?;
        Ok(Encoded { states, mask, lengths: rows.iter().map(|&r| self.lengths[r]).collect(), init })
    }
}

/// Result of one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct DecoderStep {
    /// `[batch, tgt_vocab]` log-probabilities.
    pub log_probs: Var,
    pub state: Var,
    pub context: Var,
    /// `[batch, steps]` attention weights.
    pub alpha: Var,
}

/// Bilinear attention: `β_l = s W h_l`, `α = softmax(β)`, `c = Σ α_l h_l`.
/// `mask` is added to `β` before the softmax.
pub fn attend(g: &mut Graph, s: Var, states: &[Var], mask: &Tensor, w: Var) -> Result<(Var, Var)> {
    if states.is_empty() {
        return Err(invalid_arg!("attention over an empty sequence"));
    }
    let q = g.matmul(s, w)?;
    let mut betas = Vec::with_capacity(states.len());
    for &h in states {
        let prod = g.mul(q, h)?;
        betas.push(g.sum_axis(prod, 1)?);
    }
    let beta = g.concat(&betas, 1)?;
    if mask.shape() != g.shape(beta) {
        return Err(shape_err!("attention mask {:?} for scores {:?}", mask.shape(), g.shape(beta)));
    }
    let m = g.constant(mask.clone());
    let masked = g.add(beta, m)?;
    let alpha = g.softmax(masked, 1)?;
    let mut ctx = None;
    for (l, &h) in states.iter().enumerate() {
        let a = g.slice(alpha, 1, l, 1)?;
        let part = g.mul_col(h, a)?;
        ctx = Some(match ctx {
            None => part,
            Some(acc) => g.add(acc, part)?,
        });
    }
    Ok((ctx.expect("non-empty"), alpha))
}

#[derive(Serialize, Deserialize)]
struct ParserMeta {
    config: ParserConfig,
    words: Vec<String>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: ModelConfig,
    src: Vec<String>,
    tgt: Vec<String>,
    parser: Option<ParserMeta>,
    parser_trainable: bool,
    #[serde(default)]
    annotations: BTreeMap<String, String>,
}

/// Attentional GRU encoder-decoder.
///
/// Parameters:
///
/// ```text
/// src.embed, tgt.embed   [V, embed_dim]
/// enc.fwd, enc.bwd       GRUs, input encoder_input_dim, hidden hidden_dim / 2
/// dec.init               linear hidden_dim / 2 -> decoder_dim (tanh)
/// dec.gru                GRU, input embed_dim + hidden_dim
/// attn.W                 [decoder_dim, hidden_dim]
/// out.l1, out.l2         tanh layer over [s ⊕ c], then linear to the vocabulary
/// sawr.proj              linear parser_dim -> sawr_dim       (SAWR mode)
/// parser.*               parser encoder                      (SAWR mode)
/// tree.*                 Tree-GRU                            (Tree-RNN mode)
/// ```
#[derive(Clone, Debug)]
pub struct Translator {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub parser: Option<EmbeddedParser>,
    parser_trainable: bool,
    /// Free-form strings saved with the checkpoint (e.g. BPE merges).
    pub annotations: BTreeMap<String, String>,
}

impl Translator {
    /// Fresh model. SAWR mode copies `parser`'s parameters in.
    pub fn new(
        config: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        parser: Option<&Parser>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let embedded = match (config.mode, parser) {
            (SyntaxMode::Sawr, Some(p)) => {
                store.merge(PARSER_PREFIX, &p.store);
                Some(EmbeddedParser {
                    net: ParserNet::new(PARSER_PREFIX, p.config().clone(), p.words.len(), p.labels.len()),
                    words: p.words.clone(),
                    labels: p.labels.clone(),
                })
            }
            (SyntaxMode::Sawr, None) => return Err(invalid_arg!("SAWR mode needs a trained parser")),
            _ => None,
        };
        let mut t = Translator {
            config,
            store,
            src_vocab,
            tgt_vocab,
            parser: embedded,
            parser_trainable: false,
            annotations: BTreeMap::new(),
        };
        let mut store = std::mem::take(&mut t.store);
        t.init_params(&mut store, seed)?;
        t.store = store;
        Ok(t)
    }

    fn init_params(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        let c = &self.config;
        let r = c.init_range;
        store.init_uniform("src.embed", &[self.src_vocab.len(), c.embed_dim], r, seed)?;
        store.init_uniform("tgt.embed", &[self.tgt_vocab.len(), c.embed_dim], r, seed)?;
        let (f, b) = self.encoder_cells();
        f.init(store, r, seed)?;
        b.init(store, r, seed)?;
        self.dec_init().init(store, r, seed)?;
        self.decoder_cell().init(store, r, seed)?;
        store.init_uniform("attn.W", &[c.decoder_dim, c.hidden_dim], r, seed)?;
        self.out_l1().init(store, r, seed)?;
        self.out_l2().init(store, r, seed)?;
        match c.mode {
            SyntaxMode::Sawr => self.sawr_proj()?.init(store, r, seed)?,
            SyntaxMode::TreeRnn => self.tree_gru().init(store, r, seed)?,
            _ => {}
        }
        Ok(())
    }

    fn encoder_cells(&self) -> (GruCell, GruCell) {
        let (i, h) = (self.config.encoder_input_dim(), self.config.hidden_dim / 2);
        (GruCell::new("enc.fwd", i, h), GruCell::new("enc.bwd", i, h))
    }

    fn dec_init(&self) -> Linear {
        Linear::new("dec.init", self.config.hidden_dim / 2, self.config.decoder_dim)
    }

    fn decoder_cell(&self) -> GruCell {
        GruCell::new("dec.gru", self.config.embed_dim + self.config.hidden_dim, self.config.decoder_dim)
    }

    fn out_l1(&self) -> Linear {
        Linear::new("out.l1", self.config.decoder_dim + self.config.hidden_dim, self.config.output_dim)
    }

    fn out_l2(&self) -> Linear {
        Linear::new("out.l2", self.config.output_dim, self.tgt_vocab.len())
    }

    fn sawr_proj(&self) -> Result<Linear> {
        let p = self.parser.as_ref().ok_or_else(|| Error::InvalidState("no parser in this model".into()))?;
        Ok(Linear::new("sawr.proj", p.net.encoding_dim(self.config.sawr_layers), self.config.sawr_dim))
    }

    pub fn tree_gru(&self) -> TreeGru {
        TreeGru::new("tree", self.config.embed_dim, self.config.tree_dim)
    }

    pub fn mode(&self) -> SyntaxMode {
        self.config.mode
    }

    pub fn parser_trainable(&self) -> bool {
        self.parser_trainable
    }

    /// Whether NMT updates reach the parser encoder (SAWR mode only).
    pub fn set_parser_trainable(&mut self, flag: bool) -> Result<()> {
        if self.config.mode != SyntaxMode::Sawr {
            return Err(Error::InvalidState(format!(
                "parser fine-tuning applies to SAWR mode, this model is {:?}",
                self.config.mode
            )));
        }
        self.parser_trainable = flag;
        Ok(())
    }

    /// Parameters that receive gradients during training.
    pub fn trainable(&self) -> Trainable {
        if self.config.mode == SyntaxMode::Sawr && !self.parser_trainable {
            Trainable::AllExcept(vec![PARSER_PREFIX.to_string()])
        } else {
            Trainable::All
        }
    }

    /// The embedded parser as a stand-alone parser.
    pub fn extract_parser(&self) -> Option<Parser> {
        let p = self.parser.as_ref()?;
        Some(Parser {
            net: ParserNet::new("", p.net.config.clone(), p.words.len(), p.labels.len()),
            store: self.store.extract(PARSER_PREFIX),
            words: p.words.clone(),
            labels: p.labels.clone(),
        })
    }

    /// Prepares a tokenized sentence. `tree` is required by the tree modes;
    /// `bpe` segments the source side (not allowed with the Tree-GRU, whose
    /// nodes are words).
    pub fn source_input<S: AsRef<str>>(
        &self,
        tokens: &[S],
        tree: Option<&DependencyTree>,
        bpe: Option<&BpeModel>,
    ) -> Result<SourceInput> {
        let units = source_units(self.config.mode, tokens, tree, bpe)?;
        let mut input = SourceInput { ids: self.src_vocab.encode(&units), ..Default::default() };
        match self.config.mode {
            SyntaxMode::TreeRnn => input.tree = tree.cloned(),
            SyntaxMode::Sawr => {
                let p = self.parser.as_ref().ok_or_else(|| Error::InvalidState("SAWR model without parser".into()))?;
                input.parser_ids = p.words.encode(tokens);
                for (w, word) in tokens.iter().enumerate() {
                    let pieces = bpe.map_or(1, |m| m.segment(word.as_ref()).len());
                    input.word_of.extend((0..pieces).map(|k| (k == 0).then_some(w)));
                }
            }
            SyntaxMode::None | SyntaxMode::TreeLinearized => {}
        }
        Ok(input)
    }

    /// Runs the (frozen) parser encoder over a batch of prepared inputs,
    /// for caching.
    pub fn parser_encodings(&self, inputs: &[&SourceInput]) -> Result<Vec<Tensor>> {
        let p = self.parser.as_ref().ok_or_else(|| Error::InvalidState("no parser in this model".into()))?;
        let mut g = Graph::eval(&self.store);
        let ids: Vec<Vec<usize>> = inputs.iter().map(|i| i.parser_ids.clone()).collect();
        let out = p.net.encode_layers(&mut g, &ids, self.config.sawr_layers)?;
        Ok(out.into_iter().map(|v| g.value(v).clone()).collect())
    }

    /// Row vectors fed to the encoder for every position of every sentence,
    /// back to back: `[Σ n_b, encoder_input_dim]`.
    fn token_rows(&self, g: &mut Graph, inputs: &[&SourceInput]) -> Result<Var> {
        let all_ids: Vec<usize> = inputs.iter().flat_map(|i| i.ids.iter().copied()).collect();
        if let Some(&bad) = all_ids.iter().find(|&&i| i >= self.src_vocab.len()) {
            return Err(invalid_arg!("source id {bad} outside vocabulary of {}", self.src_vocab.len()));
        }
        let e = g.embed("src.embed", &all_ids)?;
        match self.config.mode {
            SyntaxMode::None | SyntaxMode::TreeLinearized => Ok(e),
            SyntaxMode::TreeRnn => {
                let trees = inputs
                    .iter()
                    .map(|i| i.tree.clone().ok_or_else(|| invalid_arg!("Tree-RNN input without a tree")))
                    .collect::<Result<Vec<_>>>()?;
                self.tree_gru().encode(g, e, &trees)
            }
            SyntaxMode::Sawr => {
                let s = self.sawr_rows(g, inputs)?;
                sawr_augment(g, e, s)
            }
        }
    }

    fn sawr_rows(&self, g: &mut Graph, inputs: &[&SourceInput]) -> Result<Var> {
        let p = self.parser.as_ref().ok_or_else(|| Error::InvalidState("SAWR model without parser".into()))?;
        let live: Vec<usize> = (0..inputs.len())
            .filter(|&k| self.parser_trainable || inputs[k].sawr.is_none())
            .collect();
        let mut encs: Vec<Option<Var>> = vec![None; inputs.len()];
        if !live.is_empty() {
            let ids: Vec<Vec<usize>> = live.iter().map(|&k| inputs[k].parser_ids.clone()).collect();
            for (k, v) in live.iter().zip(p.net.encode_layers(g, &ids, self.config.sawr_layers)?) {
                encs[*k] = Some(v);
            }
        }
        let mut parts = Vec::with_capacity(inputs.len());
        let mut word_base = Vec::with_capacity(inputs.len());
        let mut total = 0;
        for (k, inp) in inputs.iter().enumerate() {
            let v = match encs[k] {
                Some(v) => v,
                None => g.constant(inp.sawr.as_deref().expect("cached").clone()),
            };
            let words = g.shape(v)[0];
            if words != inp.parser_ids.len() {
                return Err(shape_err!("parser encoding has {words} rows for {} words", inp.parser_ids.len()));
            }
            word_base.push(total);
            total += words;
            parts.push(v);
        }
        let o = g.concat(&parts, 0)?;
        let projected = sawr_project(g, o, &self.sawr_proj()?)?;
        let zero = g.constant(Tensor::zeros(&[1, self.config.sawr_dim]));
        let with_zero = g.concat(&[projected, zero], 0)?;
        let mut rows = Vec::new();
        for (k, inp) in inputs.iter().enumerate() {
            if inp.word_of.len() != inp.ids.len() {
                return Err(shape_err!("{} position links for {} source positions", inp.word_of.len(), inp.ids.len()));
            }
            rows.extend(inp.word_of.iter().map(|w| w.map_or(total, |w| word_base[k] + w)));
        }
        g.gather_rows(with_zero, &rows)
    }

    /// Bidirectional encoding of a batch.
    pub fn encode(&self, g: &mut Graph, inputs: &[&SourceInput]) -> Result<Encoded> {
        if inputs.is_empty() || inputs.iter().any(|i| i.is_empty()) {
            return Err(invalid_arg!("cannot encode an empty source"));
        }
        let rows = self.token_rows(g, inputs)?;
        let total = g.shape(rows)[0];
        let width = g.shape(rows)[1];
        let zero = g.constant(Tensor::zeros(&[1, width]));
        let rows = g.concat(&[rows, zero], 0)?;
        let lengths: Vec<usize> = inputs.iter().map(|i| i.len()).collect();
        let steps = *lengths.iter().max().expect("non-empty");
        let mut offsets = Vec::with_capacity(inputs.len());
        let mut acc = 0;
        for &l in &lengths {
            offsets.push(acc);
            acc += l;
        }
        let xs = (0..steps)
            .map(|t| {
                let idx: Vec<usize> =
                    lengths.iter().zip(&offsets).map(|(&l, &o)| if t < l { o + t } else { total }).collect();
                g.gather_rows(rows, &idx)
            })
            .collect::<Result<Vec<_>>>()?;
        let (f, b) = self.encoder_cells();
        let enc = birnn_encode(g, &xs, &lengths, &f, &b)?;
        let pre = self.dec_init().forward(g, enc.bwd_final)?;
        let init = g.tanh(pre);
        let mut mask = Tensor::zeros(&[inputs.len(), steps]);
        for (k, &l) in lengths.iter().enumerate() {
            mask.data_mut()[k * steps + l..(k + 1) * steps].fill(-1e9);
        }
        Ok(Encoded { states: enc.outputs, mask, lengths, init })
    }

    /// `[batch, hidden_dim]` zero context for the first step.
    pub fn initial_context(&self, g: &mut Graph, batch: usize) -> Var {
        g.constant(Tensor::zeros(&[batch, self.config.hidden_dim]))
    }

    /// One decoder step predicting `y_j`:
    ///
    /// ```text
    /// s_{j-1} = GRU([e(y_{j-1}) ⊕ c_{j-1}], s_{j-2})
    /// c_j, α_j = attend(s_{j-1}, h)
    /// p(y_j) = softmax(W2 · dropout(tanh(W1 [s_{j-1} ⊕ c_j] + b1)) + b2)
    /// ```
    ///
    /// `s_prev` is `s_{j-2}` and `c_prev` is `c_{j-1}`; the returned state and
    /// context feed the next step.
    pub fn decode_step(
        &self,
        g: &mut Graph,
        enc: &Encoded,
        y_prev: &[usize],
        c_prev: Var,
        s_prev: Var,
    ) -> Result<DecoderStep> {
        if let Some(&bad) = y_prev.iter().find(|&&y| y >= self.tgt_vocab.len()) {
            return Err(invalid_arg!("target id {bad} outside vocabulary of {}", self.tgt_vocab.len()));
        }
        let e = g.embed("tgt.embed", y_prev)?;
        let x = g.concat(&[e, c_prev], 1)?;
        let state = self.decoder_cell().step(g, x, &s_prev)?;
        let w = g.param("attn.W")?;
        let (context, alpha) = attend(g, state, &enc.states, &enc.mask, w)?;
        let sc = g.concat(&[state, context], 1)?;
        let pre = self.out_l1().forward(g, sc)?;
        let hidden = g.tanh(pre);
        let hidden = g.dropout(hidden, self.config.dropout)?;
        let logits = self.out_l2().forward(g, hidden)?;
        let log_probs = g.log_softmax(logits, 1)?;
        Ok(DecoderStep { log_probs, state, context, alpha })
    }

    /// Summed teacher-forced negative log-likelihood of `targets` (EOS
    /// appended) and the number of scored tokens.
    pub fn nll<T: AsRef<[usize]>>(
        &self,
        g: &mut Graph,
        inputs: &[&SourceInput],
        targets: &[T],
    ) -> Result<(Var, usize)> {
        if inputs.len() != targets.len() {
            return Err(invalid_arg!("{} sources for {} targets", inputs.len(), targets.len()));
        }
        let enc = self.encode(g, inputs)?;
        let b = inputs.len();
        let lens: Vec<usize> = targets.iter().map(|t| t.as_ref().len()).collect();
        let steps = lens.iter().max().copied().unwrap_or(0) + 1;
        let mut s = enc.init;
        let mut c = self.initial_context(g, b);
        let mut sums = Vec::with_capacity(steps);
        for t in 0..steps {
            let y_prev: Vec<usize> = targets
                .iter()
                .map(|y| if t == 0 { BOS } else { y.as_ref().get(t - 1).copied().unwrap_or(PAD) })
                .collect();
            let gold: Vec<usize> = targets
                .iter()
                .map(|y| {
                    let y = y.as_ref();
                    match t.cmp(&y.len()) {
                        std::cmp::Ordering::Less => y[t],
                        std::cmp::Ordering::Equal => EOS,
                        std::cmp::Ordering::Greater => PAD,
                    }
                })
                .collect();
            let step = self.decode_step(g, &enc, &y_prev, c, s)?;
            let picked = g.pick(step.log_probs, &gold)?;
            let picked = if lens.iter().all(|&l| t <= l) {
                picked
            } else {
                let mask = Tensor::new(vec![b, 1], lens.iter().map(|&l| if t <= l { 1.0 } else { 0.0 }).collect())?;
                g.mul_const(picked, mask)?
            };
            sums.push(g.sum(picked));
            s = step.state;
            c = step.context;
        }
        let all = g.concat(&sums, 0)?;
        let total = g.sum(all);
        let tokens = lens.iter().map(|l| l + 1).sum();
        Ok((g.scale(total, -1.0), tokens))
    }

    fn meta(&self) -> String {
        let meta = Meta {
            kind: "translator".into(),
            config: self.config.clone(),
            src: self.src_vocab.tokens()[RESERVED.len()..].to_vec(),
            tgt: self.tgt_vocab.tokens()[RESERVED.len()..].to_vec(),
            parser: self.parser.as_ref().map(|p| ParserMeta {
                config: p.net.config.clone(),
                words: p.words.tokens()[RESERVED.len()..].to_vec(),
                labels: p.labels.clone(),
            }),
            parser_trainable: self.parser_trainable,
            annotations: self.annotations.clone(),
        };
        serde_json::to_string(&meta).expect("serializable")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::encode(&self.store, &self.meta(), Precision::F64)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (store, meta) = checkpoint::decode(bytes)?;
        let meta: Meta =
            serde_json::from_str(&meta).map_err(|e| Error::Checkpoint(format!("bad translator metadata: {e}")))?;
        if meta.kind != "translator" {
            return Err(Error::Checkpoint(format!("expected a translator checkpoint, found {:?}", meta.kind)));
        }
        let parser = meta.parser.map(|p| {
            let words = Vocabulary::from_tokens(p.words);
            EmbeddedParser {
                net: ParserNet::new(PARSER_PREFIX, p.config, words.len(), p.labels.len()),
                words,
                labels: p.labels,
            }
        });
        let t = Translator {
            config: meta.config,
            store: ParamStore::new(),
            src_vocab: Vocabulary::from_tokens(meta.src),
            tgt_vocab: Vocabulary::from_tokens(meta.tgt),
            parser,
            parser_trainable: meta.parser_trainable,
            annotations: meta.annotations,
        };
        let mut reference = ParamStore::new();
        t.init_params(&mut reference, 0)?;
        if let Some(p) = &t.parser {
            p.net.init(&mut reference, 0)?;
        }
        for (name, v) in reference.iter() {
            match store.get(name) {
                Some(s) if s.shape() == v.shape() => {}
                _ => return Err(Error::Checkpoint(format!("parameter {name} missing or misshapen"))),
            }
        }
        Ok(Translator { store, ..t })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
