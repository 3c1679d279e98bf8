"""Rank-only black-box access to a recommender, with a query budget.

Only item ids ever leave this module; scores stay inside the process that
owns the victim model. Budget accounting is per input sequence by default:
a prefix trace costs one unit, and inside a session querying a sequence that
extends the previously queried one by a single item is free (that is how an
autoregressive query sequence is grown step by step for one unit).
"""
from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading

from .metrics import top_k

log = logging.getLogger(__name__)

SEQUENCE = "sequence"
PER_QUERY = "query"


class BudgetExhausted(RuntimeError):
    pass


class QueryBudget:
    """Thread-safe ledger of consumed sequence units against a cap (None = unlimited)."""

    def __init__(self, cap=None):
        if cap is not None and cap < 0:
            raise ValueError("budget cap must be >= 0")
        self.cap = cap
        self._consumed = 0
        self._lock = threading.Lock()

    @property
    def consumed(self):
        return self._consumed

    @property
    def remaining(self):
        return None if self.cap is None else self.cap - self._consumed

    def charge(self, units=1):
        with self._lock:
            if self.cap is not None and self._consumed + units > self.cap:
                raise BudgetExhausted(f"budget of {self.cap} exhausted ({self._consumed} used, {units} requested)")
            self._consumed += units


def ranked_list(scores, k):
    """Top-min(k, |I|) item ids of a score row (descending, ties by ascending id)."""
    return [int(i) for i in top_k(scores, min(k, scores.shape[-1] - 1))[0]]


class Oracle:
    """In-process black box around a model: top-k item ids only."""

    def __init__(self, model, k=100, budget=None, accounting=SEQUENCE, batch_size=256):
        if accounting not in (SEQUENCE, PER_QUERY):
            raise ValueError(f"accounting must be '{SEQUENCE}' or '{PER_QUERY}'")
        model.eval()
        self.model = model
        self.k = min(int(k), model.n_items)
        self.budget = budget if isinstance(budget, QueryBudget) else QueryBudget(budget)
        self.accounting = accounting
        self.batch_size = batch_size
        self._default = Session(self)

    @property
    def n_items(self):
        return self.model.n_items

    def session(self):
        return Session(self)

    def _check(self, seq):
        seq = [int(i) for i in seq]
        if not seq:
            raise ValueError("empty sequence")
        if min(seq) < 1 or max(seq) > self.n_items:
            raise ValueError(f"item id outside 1..{self.n_items}")
        return seq

    def _rank(self, seqs):
        out = []
        for start in range(0, len(seqs), self.batch_size):
            sc = self.model.scores(seqs[start:start + self.batch_size])
            out.extend([int(i) for i in row] for row in top_k(sc, self.k))
        return out

    def _trace(self, seqs):
        out = []
        for start in range(0, len(seqs), self.batch_size):
            for sc in self.model.prefix_scores(seqs[start:start + self.batch_size]):
                out.append([[int(i) for i in row] for row in top_k(sc, self.k)])
        return out

    # the default session makes the oracle usable directly
    def query(self, seq):
        return self._default.query(seq)

    def query_batch(self, seqs):
        return self._default.query_batch(seqs)

    def trace(self, seq):
        return self._default.trace(seq)

    def trace_batch(self, seqs):
        return self._default.trace_batch(seqs)


class Session:
    """One client's view of an oracle; remembers queried sequences for extension accounting."""

    def __init__(self, oracle: Oracle):
        self.oracle = oracle
        self._seen = set()
        self._lock = threading.Lock()

    def _cost(self, seq):
        if self.oracle.accounting == PER_QUERY:
            return 1
        return 0 if tuple(seq[:-1]) in self._seen else 1

    def query_batch(self, seqs):
        seqs = [self.oracle._check(s) for s in seqs]
        with self._lock:
            self.oracle.budget.charge(sum(self._cost(s) for s in seqs))
            for s in seqs:
                self._seen.add(tuple(s))
        return self.oracle._rank(seqs)

    def query(self, seq):
        return self.query_batch([seq])[0]

    def trace_batch(self, seqs):
        seqs = [self.oracle._check(s) for s in seqs]
        units = len(seqs) if self.oracle.accounting == SEQUENCE else sum(len(s) for s in seqs)
        with self._lock:
            self.oracle.budget.charge(units)
            for s in seqs:
                self._seen.add(tuple(s))
        return self.oracle._trace(seqs)

    def trace(self, seq):
        return self.trace_batch([seq])[0]


# ---------------------------------------------------------------- wire protocol


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session = self.server.oracle.session()
        for raw in self.rfile:
            reply = _respond(session, raw)
            self.wfile.write((json.dumps(reply) + "\n").encode("utf-8"))
            self.wfile.flush()


def _respond(session, raw):
    try:
        req = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return {"id": None, "error": "PARSE"}
    if not isinstance(req, dict):
        return {"id": None, "error": "PARSE"}
    rid, op, seq = req.get("id"), req.get("op"), req.get("seq")
    if not isinstance(rid, int) or op not in ("query", "trace") or not isinstance(seq, list):
        return {"id": rid if isinstance(rid, int) else None, "error": "PARSE"}
    if not all(isinstance(i, int) and not isinstance(i, bool) for i in seq):
        return {"id": rid, "error": "BADSEQ"}
    try:
        if op == "query":
            return {"id": rid, "topk": [session.query(seq)]}
        return {"id": rid, "topk": session.trace(seq)}
    except BudgetExhausted:
        return {"id": rid, "error": "BUDGET"}
    except ValueError:
        return {"id": rid, "error": "BADSEQ"}


class OracleServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, oracle, host="127.0.0.1", port=0):
        self.oracle = oracle
        super().__init__((host, port), _Handler)

    @property
    def port(self):
        return self.server_address[1]

    def start(self):
        """Serve from a background thread; returns self."""
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()


class RemoteError(RuntimeError):
    def __init__(self, code):
        super().__init__(code)
        self.code = code


class RemoteOracle:
    """Client with the same query/trace interface as an in-process session.

    Batch calls pipeline their requests over the single connection.
    """

    def __init__(self, host, port, n_items, k, timeout=60.0):
        self.n_items = n_items
        self.k = k
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._r = self._sock.makefile("rb")
        self._next = 0

    def close(self):
        self._r.close()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, op, seqs, chunk=64):
        # bounded pipelining so neither side blocks on a full socket buffer
        out = []
        for start in range(0, len(seqs), chunk):
            out.extend(self._exchange(op, seqs[start:start + chunk]))
        return out

    def _exchange(self, op, seqs):
        ids = list(range(self._next, self._next + len(seqs)))
        self._next += len(seqs)
        payload = "".join(json.dumps({"id": i, "op": op, "seq": [int(x) for x in s]}) + "\n"
                          for i, s in zip(ids, seqs))
        self._sock.sendall(payload.encode("utf-8"))
        replies = [json.loads(self._r.readline()) for _ in ids]
        out = []
        for i, reply in zip(ids, replies):
            if reply.get("id") != i:
                raise RemoteError("PROTOCOL")
            if "error" in reply:
                if reply["error"] == "BUDGET":
                    raise BudgetExhausted("remote budget exhausted")
                if reply["error"] == "BADSEQ":
                    raise ValueError("remote rejected sequence")
                raise RemoteError(reply["error"])
            out.append(reply["topk"])
        return out

    def query_batch(self, seqs):
        return [r[0] for r in self._call("query", seqs)]

    def query(self, seq):
        return self.query_batch([seq])[0]

    def trace_batch(self, seqs):
        return self._call("trace", seqs)

    def trace(self, seq):
        return self.trace_batch([seq])[0]


def send_raw(host, port, lines, timeout=10.0):
    """Send raw request lines (newline included) and return the raw reply lines (protocol testing helper)."""
    with socket.create_connection((host, port), timeout=timeout) as s:
        r = s.makefile("rb")
        out = []
        for line in lines:
            s.sendall(line if isinstance(line, bytes) else line.encode("utf-8"))
            out.append(r.readline().decode("utf-8"))
        return out

