"""Sparse ReLU networks: storage, forward pass, statistics, serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class NetworkStats:
    L: int
    W: int
    S: int
    B: float

    def to_json(self) -> dict:
        return {"L": self.L, "W": self.W, "S": self.S, "B": self.B}


class ReluNetwork:
    """Affine layers with ReLU between consecutive layers, none after the last.

    ``layers`` is a list of ``(A, b)`` with ``A`` a sparse (out, in) matrix.
    """

    def __init__(self, d: int, layers):
        self.d = int(d)
        self.layers = []
        prev = self.d
        for A, b in layers:
            A = sp.csr_matrix(A, dtype=float)
            A.sort_indices()
            b = np.asarray(b, dtype=float).ravel()
            if A.shape[1] != prev:
                raise ValueError(f"layer expects {A.shape[1]} inputs, previous gives {prev}")
            if b.shape[0] != A.shape[0]:
                raise ValueError("bias length mismatch")
            self.layers.append((A, b))
            prev = A.shape[0]
        if self.layers and prev != 1:
            raise ValueError("output dimension must be 1")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)

    def eval(self, x) -> np.ndarray:
        """Forward pass at one point (d-vector) or a batch (n x d)."""
        xa = np.asarray(x, dtype=float)
        single = xa.ndim <= 1
        if xa.ndim == 0:
            xa = xa.reshape(1, 1)
        elif xa.ndim == 1:
            xa = xa.reshape(1, -1) if self.d > 1 or xa.size == 1 else xa.reshape(-1, 1)
            single = xa.shape[0] == 1
        if xa.shape[1] != self.d:
            raise ValueError(f"expected {self.d} inputs, got {xa.shape[1]}")
        h = np.ascontiguousarray(xa.T)
        last = len(self.layers) - 1
        for i, (A, b) in enumerate(self.layers):
            h = A @ h + b[:, None]
            if i < last:
                np.maximum(h, 0.0, out=h)
        out = h[0]
        return float(out[0]) if single else out

    def stats(self) -> NetworkStats:
        S = 0
        B = 0.0
        W = 0
        for i, (A, b) in enumerate(self.layers):
            S += int(np.count_nonzero(A.data)) + int(np.count_nonzero(b))
            if A.nnz:
                B = max(B, float(np.abs(A.data).max()))
            if b.size:
                B = max(B, float(np.abs(b).max()))
            if i < len(self.layers) - 1:
                W = max(W, A.shape[0])
        return NetworkStats(L=len(self.layers), W=W, S=S, B=B)

    def hidden_widths(self) -> list:
        return [A.shape[0] for A, _ in self.layers[:-1]]

    def to_json(self) -> dict:
        out = []
        for A, b in self.layers:
            coo = A.tocoo()
            entries = [[int(i), int(j), float(w)] for i, j, w in zip(coo.row, coo.col, coo.data) if w != 0]
            bias = [[int(i), float(v)] for i, v in enumerate(b) if v != 0]
            out.append({"rows": int(A.shape[0]), "cols": int(A.shape[1]), "entries": entries, "bias": bias})
        return {"d": self.d, "layers": out}

    @classmethod
    def from_json(cls, obj) -> "ReluNetwork":
        layers = []
        for lay in obj["layers"]:
            ent = np.asarray(lay["entries"], dtype=float).reshape(-1, 3)
            A = sp.csr_matrix((ent[:, 2], (ent[:, 0].astype(int), ent[:, 1].astype(int))),
                              shape=(lay["rows"], lay["cols"]))
            b = np.zeros(lay["rows"])
            for i, v in lay["bias"]:
                b[int(i)] = v
            layers.append((A, b))
        d = obj.get("d", layers[0][0].shape[1] if layers else 1)
        return cls(d, layers)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def affine(d: int, weights, bias: float = 0.0) -> ReluNetwork:
    """Single affine layer ``w.x + b``."""
    A = sp.csr_matrix(np.asarray(weights, dtype=float).reshape(1, d))
    return ReluNetwork(d, [(A, [bias])])


def _clip_once(net: ReluNetwork, F: float) -> ReluNetwork:
    A, b = net.layers[-1]
    hidden = sp.vstack([A, -A, A, -A]).tocsr()
    hb = np.array([b[0], -b[0], b[0] - F, -b[0] - F])
    out = sp.csr_matrix(np.array([[1.0, -1.0, -1.0, 1.0]]))
    return ReluNetwork(net.d, list(net.layers[:-1]) + [(hidden, hb), (out, [0.0])])


def clip(net: ReluNetwork, F: float) -> ReluNetwork:
    """``max(min(y, F), -F)`` of the network output ``y``.

    One pass is ``eta(y) - eta(-y) - eta(y - F) + eta(-y - F)``, equal to
    ``eta(y + F) - eta(y - F) - F`` in exact arithmetic.  It passes
    ``|y| <= F`` through without rounding, but ``y - (y - F)`` may miss ``F``
    by an ulp when ``|y| > 2F``; a second pass lands on ``F`` exactly, which
    makes clipping bitwise idempotent.
    """
    if F < 1:
        raise ValueError("clip level must be at least 1")
    return _clip_once(_clip_once(net, F), F)
