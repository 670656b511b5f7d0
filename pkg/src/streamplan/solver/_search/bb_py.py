"""Branch-and-bound assignment search, pure-Python twin of bb_cy.

Searches weight-by-weight (in weight-id order) over preload-or-stream
decisions and chunk placements, scanning layers from just before the first
consumer downward. The incumbent comparator is (objective, lexicographic
key) where the key is (preload index tuple, z tuple, placement tuple), so
equal-objective plans resolve deterministically and independently of
visitation order. Bounds prune only on strict objective excess, which keeps
tie regions fully explored.

The compiled twin must produce bit-identical results; keep every arithmetic
expression in the same shape when touching either file.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

BACKEND = "python"

_TIME_CHECK_MASK = 0x0FFF


@dataclass
class SearchResult:
    found: bool
    exhausted: bool
    objective: float
    preload: list[int]
    z: list[int]
    placements: list[list[tuple[int, int]]]
    nodes: int


class _Search:
    def __init__(self, caps, t, iw, wbytes, allow_preload, lam, total_bytes,
                 n_layers, base_preload_bytes, node_budget, deadline):
        self.res = list(caps)
        self.t = t
        self.iw = iw
        self.wbytes = wbytes
        self.allow_preload = allow_preload
        self.lam = lam
        self.total_bytes = total_bytes
        self.n_layers = n_layers
        self.node_budget = node_budget
        self.deadline = deadline
        self.m = len(t)

        self.flags = [0] * self.m
        self.z = [0] * self.m
        self.trail: list[list[tuple[int, int]]] = [[] for _ in range(self.m)]
        self.pb = base_preload_bytes
        self.ds = 0
        self.ns = 0

        self.nodes = 0
        self.aborted = False
        self.best_obj = float("inf")
        self.best_key = None
        self.best = None

    def _tick(self) -> bool:
        self.nodes += 1
        if self.node_budget and self.nodes > self.node_budget:
            self.aborted = True
            return False
        if (self.deadline is not None and not self.nodes & _TIME_CHECK_MASK
                and time.monotonic() > self.deadline):
            self.aborted = True
            return False
        return True

    def _objective(self) -> float:
        obj = self.lam * (self.pb / self.total_bytes)
        if self.ns:
            obj += (1.0 - self.lam) * (self.ds / (self.n_layers * self.ns))
        return obj

    def _bound(self, undecided: int) -> float:
        # Remaining weights contribute no preload bytes at best; each one
        # that streams adds distance >= 1, and since mean distance >= 1 the
        # distance term is minimized when all of them stream.
        lb = self.lam * (self.pb / self.total_bytes)
        if self.ns + undecided:
            lb += (1.0 - self.lam) * (
                (self.ds + undecided) / (self.n_layers * (self.ns + undecided)))
        return lb

    def _leaf(self):
        obj = self._objective()
        if obj > self.best_obj:
            return
        key = (
            tuple(i for i in range(self.m) if self.flags[i]),
            tuple(self.z[i] for i in range(self.m) if not self.flags[i]),
            tuple(tuple(sorted(self.trail[i]))
                  for i in range(self.m) if not self.flags[i]),
        )
        if obj == self.best_obj and self.best_key is not None \
                and key >= self.best_key:
            return
        self.best_obj = obj
        self.best_key = key
        self.best = (
            list(self.flags),
            list(self.z),
            [sorted(self.trail[i]) for i in range(self.m)],
        )

    def _weight(self, k: int):
        if self.aborted:
            return
        if k == self.m:
            self._leaf()
            return
        if self._bound(self.m - k) > self.best_obj:
            return
        hi = self.iw[k] - 1
        if hi >= 1:
            avail = sum(self.res[0:hi])
            if avail >= self.t[k]:
                self._place(k, hi, self.t[k], avail)
        if self.allow_preload:
            if not self._tick():
                return
            self.flags[k] = 1
            self.pb += self.wbytes[k]
            self._weight(k + 1)
            self.pb -= self.wbytes[k]
            self.flags[k] = 0

    def _place(self, k: int, layer: int, rem: int, avail: int):
        """Place rem chunks of weight k into layers 1..layer (1-based).

        avail is the residual capacity summed over those layers; placement
        completes exactly when a layer absorbs the final chunk, fixing z.
        """
        if self.aborted or layer < 1 or avail < rem:
            return
        here = self.res[layer - 1]
        below = avail - here
        c_lo = max(0, rem - below)
        for c in range(min(rem, here), c_lo - 1, -1):
            if not self._tick():
                return
            if c:
                self.res[layer - 1] = here - c
                self.trail[k].append((layer, c))
            if c == rem:
                self.z[k] = layer
                self.ds += self.iw[k] - layer
                self.ns += 1
                self._weight(k + 1)
                self.ns -= 1
                self.ds -= self.iw[k] - layer
            else:
                self._place(k, layer - 1, rem - c, below)
            if c:
                self.res[layer - 1] = here
                self.trail[k].pop()


def search(caps, t, iw, wbytes, allow_preload, lam, total_bytes, n_layers,
           base_preload_bytes, node_budget=0, deadline=None) -> SearchResult:
    """Find the minimum-objective assignment for the given weights.

    caps: residual chunk capacity per layer (index 0 is layer 1); t/iw/wbytes
    describe the searched weights in weight-id order. With allow_preload
    false every weight must stream (found=False when impossible). node_budget
    of 0 means unlimited; deadline is an absolute time.monotonic() value.
    """
    state = _Search(caps, t, iw, wbytes, allow_preload, lam, total_bytes,
                    n_layers, base_preload_bytes, node_budget, deadline)
    state._weight(0)
    if state.best is None:
        return SearchResult(
            found=False, exhausted=not state.aborted, objective=float("inf"),
            preload=[], z=[], placements=[], nodes=state.nodes)
    flags, z, placements = state.best
    return SearchResult(
        found=True,
        exhausted=not state.aborted,
        objective=state.best_obj,
        preload=flags,
        z=z,
        placements=placements,
        nodes=state.nodes,
    )
