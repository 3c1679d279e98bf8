from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autograd as ag
from ..data import PAD


@dataclass
class Batch:
    """Left-padded model input.

    ``ids``/``pos``/``valid`` are (B, T). ``truncated`` flags rows whose
    history was cut to the most recent items that fit the model.
    """
    ids: np.ndarray
    pos: np.ndarray
    valid: np.ndarray
    truncated: np.ndarray

    @property
    def size(self):
        return self.ids.shape[0]


class SequentialRecommender:
    """Embedding layer plus sequence body; scores every item for the next step.

    Subclasses implement ``_build``, ``encode`` and ``output``. Scores cover
    ids 0..n_items; column 0 is padding and is never recommended.
    """

    arch = ""
    causal = True
    suffix_tokens = 0  # extra tokens appended after the real items at inference

    def __init__(self, n_items, hidden=64, n_layers=2, n_heads=2, dropout=0.1, max_len=50,
                 mask_prob=0.2, seed=0):
        self.n_items = int(n_items)
        self.hidden = int(hidden)
        self.n_layers = int(n_layers)
        self.n_heads = int(n_heads)
        self.dropout = float(dropout)
        self.max_len = int(max_len)
        self.mask_prob = float(mask_prob)
        self.seed = int(seed)
        self.training = False
        init_ss, drop_ss = np.random.SeedSequence(self.seed).spawn(2)
        self.dropout_rng = np.random.default_rng(drop_ss)
        self.params = {}
        self._build(np.random.default_rng(init_ss))

    # ------------------------------------------------------------ plumbing

    def hparams(self):
        return {"n_items": self.n_items, "hidden": self.hidden, "n_layers": self.n_layers,
                "n_heads": self.n_heads, "dropout": self.dropout, "max_len": self.max_len,
                "mask_prob": self.mask_prob, "seed": self.seed}

    def _add(self, name, array):
        t = ag.Tensor(array, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def p(self, name):
        return self.params[name]

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"state dict mismatch on {sorted(missing)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"{k}: shape {v.shape} != {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=self.params[k].dtype)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def _drop(self, x):
        return ag.dropout(x, self.dropout, self.dropout_rng, self.training)

    @property
    def item_capacity(self):
        """How many real items fit in one input."""
        return self.max_len - self.suffix_tokens

    # ------------------------------------------------------------ inputs

    def inputs(self, seqs, suffix=None) -> Batch:
        """Left-pad ``seqs``; keep only the most recent items that fit."""
        suffix = list(suffix or [])
        cap = self.max_len - len(suffix)
        rows = []
        truncated = np.zeros(len(seqs), dtype=bool)
        for b, s in enumerate(seqs):
            s = list(s)
            if not s:
                raise ValueError("empty sequence")
            if min(s) < 1 or max(s) > self.n_items:
                raise ValueError(f"item id outside 1..{self.n_items}")
            if len(s) > cap:
                s = s[-cap:]
                truncated[b] = True
            rows.append(s + suffix)
        t = max(len(r) for r in rows)
        ids = np.zeros((len(rows), t), dtype=np.int64)
        pos = np.zeros((len(rows), t), dtype=np.int64)
        valid = np.zeros((len(rows), t), dtype=bool)
        for b, r in enumerate(rows):
            ids[b, t - len(r):] = r
            pos[b, t - len(r):] = np.arange(len(r))
            valid[b, t - len(r):] = True
        return Batch(ids, pos, valid, truncated)

    def inference_inputs(self, seqs) -> Batch:
        return self.inputs(seqs)

    # ------------------------------------------------------------ forward

    def embed(self, batch: Batch):
        raise NotImplementedError

    def encode(self, embedded, batch: Batch, last_only=False):
        raise NotImplementedError

    def output(self, hidden):
        raise NotImplementedError

    def score_from_embeddings(self, embedded, batch: Batch):
        """Next-item logits (B, n_items+1) read at the final input position."""
        if embedded.shape[1] == 0:
            raise ValueError("cannot score an empty sequence")
        h = self.encode(embedded, batch, last_only=True)
        return self.output(h)[:, -1]

    def forward_all(self, batch: Batch):
        """Logits at every position (B, T, n_items+1)."""
        return self.output(self.encode(self.embed(batch), batch))

    def scores(self, seqs):
        """Inference scores (B, n_items+1) as a numpy array, padding column set to -inf."""
        was = self.training
        self.eval()
        try:
            with ag.no_grad():
                batch = self.inference_inputs(seqs)
                out = self.score_from_embeddings(self.embed(batch), batch).data.copy()
        finally:
            self.training = was
        out[:, PAD] = -np.inf
        return out

    def prefix_scores(self, seqs):
        """Scores after every prefix ``s[:1], ..., s[:T]`` of each sequence; list of (T_b, n+1) arrays."""
        if not self.causal or any(len(s) > self.item_capacity for s in seqs):
            flat = [s[:t] for s in seqs for t in range(1, len(s) + 1)]
            sc = self.scores(flat)
            out, at = [], 0
            for s in seqs:
                out.append(sc[at:at + len(s)])
                at += len(s)
            return out
        was = self.training
        self.eval()
        try:
            with ag.no_grad():
                batch = self.inputs(seqs)
                logits = self.forward_all(batch).data
        finally:
            self.training = was
        out = []
        for b, s in enumerate(seqs):
            sc = logits[b, logits.shape[1] - len(s):].copy()
            sc[:, PAD] = -np.inf
            out.append(sc)
        return out

    # ------------------------------------------------------------ training

    def training_loss(self, seqs, rng):
        """Next-item cross-entropy at every prefix position."""
        inp, tgt = [], []
        for s in seqs:
            s = list(s)[-(self.max_len + 1):]
            if len(s) < 2:
                continue
            inp.append(s[:-1])
            tgt.append(s[1:])
        if not inp:
            return None
        batch = self.inputs(inp)
        labels = np.zeros_like(batch.ids)
        for b, t in enumerate(tgt):
            labels[b, labels.shape[1] - len(t):] = t
        logits = self.forward_all(batch)
        return ag.cross_entropy(logits, labels, ignore_index=PAD)
