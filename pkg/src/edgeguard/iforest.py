"""Isolation forest over latent codes.

Trees are stored as flat pre-order node arrays so that a whole batch can be
routed through every tree with vectorised indexing. Two scores are offered:

* ``score_classic``: ``2 ** (-E[h(x)] / c(n))``
* ``score_leafmass``:  ``exp(-(1/c(n)) * mean_t sum_l log(1 + 1/n_l))`` where
  ``n_l`` is the population of the l-th node entered below the root on x's
  path through tree t.

Both are oriented so that higher means more anomalous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, ModelFormatError, ParameterError

FOREST_FORMAT = "edgeguard-forest"
FOREST_VERSION = 1


EULER_GAMMA = 0.5772156649015329


def c_of_n(n: int) -> float:
    """Average unsuccessful-search path length in a BST of ``n`` points.

    Uses the customary ``H(i) ~ ln(i) + Euler gamma`` for ``n > 2`` with
    ``c(1) = 0`` and ``c(2) = 1``; see :func:`c_of_n_exact` for the summed form.
    """
    n = _check_n(n)
    if n <= 2:
        return float(n - 1)
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


def c_of_n_exact(n: int) -> float:
    """``2 H(n-1) - 2(n-1)/n`` with the harmonic number summed term by term."""
    n = _check_n(n)
    if n == 1:
        return 0.0
    harmonic = math.fsum(1.0 / i for i in range(1, n))
    return 2.0 * harmonic - 2.0 * (n - 1) / n


def _check_n(n) -> int:
    if n < 1 or int(n) != n:
        raise DomainError(f"c(n) is defined for integers n >= 1, got {n!r}")
    return int(n)


@dataclass
class ITree:
    """Pre-order node arrays; ``left``/``right`` are -1 at leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    node_path: np.ndarray = field(init=False, repr=False)
    node_logsum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # path length credited to a row that stops at each node
        self.node_path = self.depth + np.array([c_of_n(int(s)) if s >= 1 else 0.0 for s in self.size])
        # sum of log(1 + 1/n_l) over the nodes entered below the root
        acc = np.zeros(self.feature.shape[0])
        for node in range(acc.shape[0]):  # pre-order: parents precede children
            for child in (self.left[node], self.right[node]):
                if child >= 0:
                    acc[child] = acc[node] + math.log1p(1.0 / self.size[child])
        self.node_logsum = acc

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0


@dataclass
class IsolationForestModel:
    trees: list
    subsample_size: int
    max_depth: int
    c_n: float
    n_features: int


def _build_tree(Z: np.ndarray, max_depth: int, rng: np.random.Generator) -> ITree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def grow(rows: np.ndarray, level: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(rows.shape[0])
        depth.append(level)
        if level >= max_depth or rows.shape[0] <= 1:
            return node
        lo = rows.min(axis=0)
        hi = rows.max(axis=0)
        usable = np.flatnonzero(hi > lo)
        if usable.size == 0:
            return node
        q = int(usable[rng.integers(usable.size)])
        split = rng.uniform(lo[q], hi[q])
        while not lo[q] < split < hi[q]:
            split = rng.uniform(lo[q], hi[q])
        mask = rows[:, q] < split
        feature[node] = q
        threshold[node] = split
        left[node] = grow(rows[mask], level + 1)
        right[node] = grow(rows[~mask], level + 1)
        return node

    grow(Z, 0)
    return ITree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                 np.array(size), np.array(depth))


def fit_forest(Z, m: int = 100, n: int = 256, seed: int = 0, max_depth: int | None = None) -> IsolationForestModel:
    """Build ``m`` iTrees, each on an independent subsample of ``n`` rows."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise DimensionError("latent matrix must be 2-D")
    if m < 1:
        raise ParameterError("m must be >= 1")
    if n < 2 or n > Z.shape[0]:
        raise ParameterError(f"subsample size must satisfy 2 <= n <= {Z.shape[0]}, got {n}")
    if not np.all(np.isfinite(Z)):
        raise DomainError("latent codes must be finite")
    cap = math.ceil(math.log2(n)) if max_depth is None else max_depth
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(m):
        rows = rng.choice(Z.shape[0], size=n, replace=False)
        trees.append(_build_tree(Z[rows], cap, rng))
    return IsolationForestModel(trees, n, cap, c_of_n(n), Z.shape[1])


def _route(Z: np.ndarray, tree: ITree) -> np.ndarray:
    """Leaf index reached by every row of ``Z``."""
    node = np.zeros(Z.shape[0], dtype=int)
    rows = np.arange(Z.shape[0])
    for _ in range(int(tree.depth.max()) + 1):
        internal = tree.left[node] >= 0
        if not internal.any():
            break
        f = tree.feature[node[internal]]
        go_left = Z[rows[internal], f] < tree.threshold[node[internal]]
        node[internal] = np.where(go_left, tree.left[node[internal]], tree.right[node[internal]])
    return node


def _check(Z, model):
    Z = np.asarray(Z, dtype=float)
    squeeze = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.shape[1] != model.n_features:
        raise DimensionError(f"expected {model.n_features} latent features, got {Z.shape[1]}")
    return Z, squeeze


def path_lengths(Z, model: IsolationForestModel) -> np.ndarray:
    """Per-tree path lengths, shape (n_rows, m); leaves add c(size)."""
    Z, _ = _check(Z, model)
    out = np.empty((Z.shape[0], len(model.trees)))
    for t, tree in enumerate(model.trees):
        out[:, t] = tree.node_path[_route(Z, tree)]
    return out


def avg_path_length(Z, model: IsolationForestModel):
    Z, squeeze = _check(Z, model)
    h = path_lengths(Z, model).mean(axis=1)
    return float(h[0]) if squeeze else h


def classic_from_path(h, c_n: float):
    return np.power(2.0, -np.asarray(h, dtype=float) / c_n)


def score_classic(Z, model: IsolationForestModel):
    Z, squeeze = _check(Z, model)
    s = classic_from_path(path_lengths(Z, model).mean(axis=1), model.c_n)
    return float(s[0]) if squeeze else s


def score_leafmass(Z, model: IsolationForestModel):
    Z, squeeze = _check(Z, model)
    total = np.zeros(Z.shape[0])
    for tree in model.trees:
        total += tree.node_logsum[_route(Z, tree)]
    s = np.exp(-(total / len(model.trees)) / model.c_n)
    return float(s[0]) if squeeze else s


def audit_sizes(tree: ITree) -> bool:
    """True when every internal node's size equals the sum of its children."""
    for node in range(tree.n_nodes):
        if tree.left[node] >= 0:
            if tree.size[node] != tree.size[tree.left[node]] + tree.size[tree.right[node]]:
                return False
    return True


# -- serialisation -----------------------------------------------------------
#
#   # edgeguard-forest v1
#   subsample_size <n>
#   max_depth <cap>
#   n_features <k>
#   trees <m>
#   tree <node count>
#   I <feature> <split value> <size>      internal node, pre-order
#   L <size>                              leaf


def format_forest(model: IsolationForestModel) -> str:
    lines = [f"# {FOREST_FORMAT} v{FOREST_VERSION}", f"subsample_size {model.subsample_size}",
             f"max_depth {model.max_depth}", f"n_features {model.n_features}", f"trees {len(model.trees)}"]
    for tree in model.trees:
        lines.append(f"tree {tree.n_nodes}")
        for node in range(tree.n_nodes):
            if tree.left[node] >= 0:
                lines.append(f"I {tree.feature[node]} {float(tree.threshold[node])!r} {tree.size[node]}")
            else:
                lines.append(f"L {tree.size[node]}")
    return "\n".join(lines) + "\n"


def parse_forest(text: str) -> IsolationForestModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {FOREST_FORMAT} v{FOREST_VERSION}":
        raise ModelFormatError("not a forest file or unsupported version")
    header = dict(ln.split() for ln in lines[1:5])
    pos = 5
    trees = []
    try:
        for _ in range(int(header["trees"])):
            tag, count = lines[pos].split()
            if tag != "tree":
                raise ModelFormatError(f"expected 'tree', got {lines[pos]!r}")
            body = [ln.split() for ln in lines[pos + 1:pos + 1 + int(count)]]
            pos += 1 + int(count)
            trees.append(_tree_from_preorder(body))
    except (KeyError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"malformed forest file: {exc}") from None
    n = int(header["subsample_size"])
    return IsolationForestModel(trees, n, int(header["max_depth"]), c_of_n(n), int(header["n_features"]))


def _tree_from_preorder(body) -> ITree:
    count = len(body)
    feature = np.full(count, -1)
    threshold = np.zeros(count)
    left = np.full(count, -1)
    right = np.full(count, -1)
    size = np.zeros(count, dtype=int)
    depth = np.zeros(count, dtype=int)
    cursor = 0

    def read(level):
        nonlocal cursor
        node = cursor
        cursor += 1
        entry = body[node]
        depth[node] = level
        if entry[0] == "I":
            feature[node] = int(entry[1])
            threshold[node] = float(entry[2])
            size[node] = int(entry[3])
            left[node] = read(level + 1)
            right[node] = read(level + 1)
        else:
            size[node] = int(entry[1])
        return node

    read(0)
    return ITree(feature, threshold, left, right, size, depth)
