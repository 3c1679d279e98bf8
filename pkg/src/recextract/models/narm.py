import math

import numpy as np

from .. import autograd as ag
from .base import SequentialRecommender


class NARM(SequentialRecommender):
    """GRU encoder with a global (last hidden state) and a local (attention) session summary.

    The local summary at step t attends over hidden states 1..t with
    un-normalised weights ``v^T sigmoid(A1 h_t + A2 h_j)``; items are scored by
    the bilinear form ``e_i^T B [c_global; c_local]``. No positional embedding.
    """

    arch = "narm"
    causal = True

    def _build(self, rng):
        d, n = self.hidden, self.n_items
        bound = 1.0 / math.sqrt(d)
        u = lambda *shape: rng.uniform(-bound, bound, shape)  # noqa: E731
        emb = rng.normal(0.0, 0.1, (n + 1, d))
        emb[0] = 0.0
        self._add("embedding.items", emb)
        self._add("gru.w_ih", u(3 * d, d))
        self._add("gru.w_hh", u(3 * d, d))
        self._add("gru.b_ih", u(3 * d))
        self._add("gru.b_hh", u(3 * d))
        self._add("attn.a1", u(d, d))
        self._add("attn.a2", u(d, d))
        self._add("attn.v", u(d, 1))
        self._add("out.b", u(2 * d, d))

    def embed(self, batch):
        return self._drop(ag.embedding(self.p("embedding.items"), batch.ids))

    def _gru(self, x, valid):
        b, t, d = x.shape
        gx = ag.add(ag.matmul(x, ag.transpose(self.p("gru.w_ih"))), self.p("gru.b_ih"))
        h = ag.Tensor(np.zeros((b, d)), dtype=x.dtype)
        states = []
        first = int(np.argmax(valid.any(axis=0))) if valid.any() else t
        for step in range(t):
            if step < first:
                states.append(h)
                continue
            nxt = ag.gru_cell(gx[:, step], h, self.p("gru.w_hh"), self.p("gru.b_hh"))
            if valid[:, step].all():
                h = nxt
            else:
                m = valid[:, step:step + 1].astype(x.dtype)
                h = ag.add(ag.mul(nxt, m), ag.mul(h, 1.0 - m))
            states.append(h)
        return ag.stack(states, axis=1)

    def encode(self, embedded, batch, last_only=False):
        valid = batch.valid
        hs = self._gru(embedded, valid)
        b, t, d = hs.shape
        query = hs[:, -1:] if last_only else hs
        tq = query.shape[1]
        q1 = ag.reshape(ag.matmul(query, self.p("attn.a1")), (b, tq, 1, d))
        q2 = ag.reshape(ag.matmul(hs, self.p("attn.a2")), (b, 1, t, d))
        alpha = ag.reshape(ag.matmul(ag.sigmoid(ag.add(q1, q2)), self.p("attn.v")), (b, tq, t))
        keep = valid[:, None, :] & ag.causal_mask(t)[t - tq:][None]
        alpha = ag.mul(alpha, keep.astype(embedded.dtype))
        local = ag.matmul(alpha, hs)
        return self._drop(ag.concat([query, local], axis=-1))

    def output(self, hidden):
        proj = ag.matmul(hidden, self.p("out.b"))
        return ag.matmul(proj, ag.transpose(self.p("embedding.items")))
