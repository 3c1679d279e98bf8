import numpy as np

from .. import autograd as ag
from ..data import PAD
from .base import SequentialRecommender


class _TransformerRecommender(SequentialRecommender):
    """Item + learned positional embeddings, post-LN transformer blocks, tied output layer."""

    init_std = 0.02
    ffn_mult = 4

    def _extra_tokens(self):
        return 0

    def _build(self, rng):
        d, n = self.hidden, self.n_items
        if d % self.n_heads:
            raise ValueError(f"hidden size {d} not divisible by {self.n_heads} heads")
        normal = lambda *shape: rng.normal(0.0, self.init_std, shape)  # noqa: E731
        emb = normal(n + 1 + self._extra_tokens(), d)
        emb[PAD] = 0.0
        self._add("embedding.items", emb)
        self._add("embedding.positions", normal(self.max_len, d))
        for i in range(self.n_layers):
            pre = f"blocks.{i}."
            for w in ("wq", "wk", "wv", "wo"):
                self._add(pre + "attn." + w, normal(d, d))
                self._add(pre + "attn.b" + w[1], np.zeros(d))
            self._add(pre + "ln1.gamma", np.ones(d))
            self._add(pre + "ln1.beta", np.zeros(d))
            self._add(pre + "ffn.w1", normal(d, self.ffn_mult * d))
            self._add(pre + "ffn.b1", np.zeros(self.ffn_mult * d))
            self._add(pre + "ffn.w2", normal(self.ffn_mult * d, d))
            self._add(pre + "ffn.b2", np.zeros(d))
            self._add(pre + "ln2.gamma", np.ones(d))
            self._add(pre + "ln2.beta", np.zeros(d))
        self._add("out.bias", np.zeros(n + 1))

    def embed(self, batch):
        x = ag.add(ag.embedding(self.p("embedding.items"), batch.ids),
                   ag.embedding(self.p("embedding.positions"), batch.pos))
        return x

    def _mask(self, valid):
        t = valid.shape[1]
        keys = valid[:, None, None, :]
        if self.causal:
            return keys & ag.causal_mask(t)[None, None]
        return keys

    def _linear(self, x, w, b):
        return ag.add(ag.matmul(x, self.p(w)), self.p(b))

    def _block(self, x, i, mask):
        b, t, d = x.shape
        h, dh = self.n_heads, d // self.n_heads
        pre = f"blocks.{i}."

        def heads(name):
            y = self._linear(x, pre + "attn.w" + name, pre + "attn.b" + name)
            return ag.transpose(ag.reshape(y, (b, t, h, dh)), (0, 2, 1, 3))

        att = ag.attention(heads("q"), heads("k"), heads("v"), mask)
        att = ag.reshape(ag.transpose(att, (0, 2, 1, 3)), (b, t, d))
        att = self._linear(att, pre + "attn.wo", pre + "attn.bo")
        x = ag.layer_norm(ag.add(x, self._drop(att)), self.p(pre + "ln1.gamma"), self.p(pre + "ln1.beta"))
        f = ag.gelu(self._linear(x, pre + "ffn.w1", pre + "ffn.b1"))
        f = self._linear(f, pre + "ffn.w2", pre + "ffn.b2")
        return ag.layer_norm(ag.add(x, self._drop(f)), self.p(pre + "ln2.gamma"), self.p(pre + "ln2.beta"))

    def encode(self, embedded, batch, last_only=False):
        x = self._drop(embedded)
        mask = self._mask(batch.valid)
        for i in range(self.n_layers):
            x = self._block(x, i, mask)
        return x[:, -1:] if last_only else x

    def output(self, hidden):
        table = self.p("embedding.items")
        if self._extra_tokens():
            table = table[: self.n_items + 1]
        return ag.add(ag.matmul(hidden, ag.transpose(table)), self.p("out.bias"))


class SASRec(_TransformerRecommender):
    """Unidirectional (causally masked) transformer trained on next-item prediction."""

    arch = "sasrec"
    causal = True


class BERT4Rec(_TransformerRecommender):
    """Bidirectional transformer trained with masked-item prediction.

    Inference appends one mask token and reads the scores at its position.
    """

    arch = "bert4rec"
    causal = False
    suffix_tokens = 1

    def _extra_tokens(self):
        return 1

    @property
    def mask_token(self):
        return self.n_items + 1

    def inference_inputs(self, seqs):
        return self.inputs(seqs, suffix=[self.mask_token])

    def training_loss(self, seqs, rng):
        rows = [list(s)[-self.max_len:] for s in seqs if len(s) >= 1]
        if not rows:
            return None
        batch = self.inputs(rows)
        labels = np.zeros_like(batch.ids)
        for b in range(batch.size):
            real = np.flatnonzero(batch.valid[b])
            masked = real[rng.random(len(real)) < self.mask_prob]
            if masked.size == 0:
                masked = real[-1:]
            labels[b, masked] = batch.ids[b, masked]
            batch.ids[b, masked] = self.mask_token
        logits = self.forward_all(batch)
        return ag.cross_entropy(logits, labels, ignore_index=PAD)
