"""Incremental construction of layered ReLU networks.

A ``Sig`` is an affine form over the neurons of one layer (layer 0 holds the
inputs).  ``relu`` creates a neuron in the following layer; identical
pre-activations are shared, and constant forms are folded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .network import ReluNetwork


@dataclass(frozen=True)
class Sig:
    layer: int | None  # None for constants
    terms: tuple  # sorted ((neuron, weight), ...)
    const: float = 0.0
    nonneg: bool = False

    @property
    def is_const(self) -> bool:
        return self.layer is None

    def __add__(self, other):
        return lin([(1.0, self), (1.0, _as_sig(other))])

    __radd__ = __add__

    def __sub__(self, other):
        return lin([(1.0, self), (-1.0, _as_sig(other))])

    def __rsub__(self, other):
        return lin([(1.0, _as_sig(other)), (-1.0, self)])

    def __neg__(self):
        return lin([(-1.0, self)])

    def __mul__(self, c: float):
        return lin([(float(c), self)])

    __rmul__ = __mul__


def const(c: float) -> Sig:
    return Sig(None, (), float(c), c >= 0)


def _as_sig(v) -> Sig:
    return v if isinstance(v, Sig) else const(float(v))


def lin(pairs, c: float = 0.0, nonneg: bool | None = None) -> Sig:
    """``sum w_i s_i + c`` for signals on a common layer (constants anywhere)."""
    layer = None
    acc: dict = {}
    total = float(c)
    all_nonneg = c >= 0
    for w, s in pairs:
        s = _as_sig(s)
        w = float(w)
        if s.layer is not None:
            if layer is None:
                layer = s.layer
            elif s.layer != layer:
                raise ValueError(f"layer mismatch {layer} vs {s.layer}; align first")
        for i, v in s.terms:
            acc[i] = acc.get(i, 0.0) + w * v
        total += w * s.const
        all_nonneg = all_nonneg and w >= 0 and s.nonneg
    terms = tuple(sorted((i, v) for i, v in acc.items() if v != 0.0))
    if not terms:
        layer = None
    if nonneg is None:
        nonneg = all_nonneg if layer is not None else total >= 0
    return Sig(layer, terms, total, nonneg)


class Builder:
    def __init__(self, d: int):
        self.d = d
        # neurons[l] : list of (terms, bias) pre-activations over layer l-1
        self.neurons: list[list] = [[None] * d]
        self.index: list[dict] = [{}]

    def input(self, i: int, nonneg: bool = False) -> Sig:
        return Sig(0, ((i, 1.0),), 0.0, nonneg)

    def inputs(self, nonneg: bool = False) -> list:
        return [self.input(i, nonneg) for i in range(self.d)]

    def _ensure(self, layer: int) -> None:
        while len(self.neurons) <= layer:
            self.neurons.append([])
            self.index.append({})

    def relu(self, s: Sig) -> Sig:
        s = _as_sig(s)
        if s.is_const:
            return const(max(s.const, 0.0))
        tgt = s.layer + 1
        self._ensure(tgt)
        key = (s.terms, s.const)
        idx = self.index[tgt].get(key)
        if idx is None:
            idx = len(self.neurons[tgt])
            self.neurons[tgt].append(key)
            self.index[tgt][key] = idx
        return Sig(tgt, ((idx, 1.0),), 0.0, True)

    def carry(self, s: Sig, layer: int) -> Sig:
        """Move a signal to a later layer without changing its value."""
        s = _as_sig(s)
        if s.is_const:
            return s
        if s.layer > layer:
            raise ValueError("cannot carry backwards")
        if s.layer == layer:
            return s
        if s.nonneg:
            while s.layer < layer:
                s = self.relu(s)
            return s
        p, n = self.relu(s), self.relu(-s)
        while p.layer < layer:
            p, n = self.relu(p), self.relu(n)
        return lin([(1.0, p), (-1.0, n)], nonneg=False)

    def align(self, sigs, layer: int | None = None) -> list:
        sigs = [_as_sig(s) for s in sigs]
        if layer is None:
            layer = max((s.layer for s in sigs if not s.is_const), default=None)
        if layer is None:
            return sigs
        return [self.carry(s, layer) for s in sigs]

    def build(self, out: Sig) -> ReluNetwork:
        """Finalize with ``out`` as the (affine) output; unused neurons are pruned."""
        out = _as_sig(out)
        H = 0 if out.is_const else out.layer
        # mark used neurons backwards
        used = [set() for _ in range(H + 1)]
        used[H] = {i for i, _ in out.terms}
        for l in range(H, 0, -1):
            for i in used[l]:
                terms, _ = self.neurons[l][i]
                used[l - 1].update(j for j, _ in terms)
        remap = [dict() for _ in range(H + 1)]
        remap[0] = {i: i for i in range(self.d)}
        for l in range(1, H + 1):
            remap[l] = {old: new for new, old in enumerate(sorted(used[l]))}
        layers = []
        for l in range(1, H + 1):
            rows, cols, vals = [], [], []
            order = sorted(used[l])
            bias = np.zeros(len(order))
            for new, old in enumerate(order):
                terms, b = self.neurons[l][old]
                for j, w in terms:
                    rows.append(new)
                    cols.append(remap[l - 1][j])
                    vals.append(w)
                bias[new] = b
            A = sp.csr_matrix((vals, (rows, cols)), shape=(len(order), len(remap[l - 1])))
            layers.append((A, bias))
        n_last = len(remap[H])
        rows = [0] * len(out.terms)
        cols = [remap[H][i] for i, _ in out.terms]
        vals = [w for _, w in out.terms]
        A = sp.csr_matrix((vals, (rows, cols)), shape=(1, n_last))
        layers.append((A, np.array([out.const])))
        return ReluNetwork(self.d, layers)
