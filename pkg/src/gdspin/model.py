"""Spin-Hamiltonian instances and energies.

Energies follow the ordered-pair convention: every unordered pair ``(i, j)``
contributes twice to the coupling sum, i.e.

    H = -sum_{i != j} J_ij cos(theta_i - theta_j) + field terms.

Public energies accumulate the ``i < j`` pair terms with ``math.fsum`` so the
result is correctly rounded and independent of whether the couplings are
stored densely or as a triplet list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * math.pi


class DimensionError(ValueError):
    """Vector or matrix sizes do not agree."""


# ---------------------------------------------------------------------------
# Couplings
# ---------------------------------------------------------------------------


class CouplingMatrix:
    """Symmetric, zero-diagonal coupling matrix in dense or sparse storage.

    Sparse storage keeps the upper-triangle triplets ``(i, j, J_ij)`` with
    ``i < j`` plus a CSR copy of the full symmetric matrix for products.
    Instances are read-only after construction.
    """

    __slots__ = ("n", "storage", "_dense", "_rows", "_cols", "_vals", "_csr")

    def __init__(self, n, storage, dense=None, rows=None, cols=None, vals=None):
        self.n = int(n)
        self.storage = storage
        self._dense = dense
        self._rows = rows
        self._cols = cols
        self._vals = vals
        self._csr = None
        if storage == "sparse":
            full_r = np.concatenate([rows, cols])
            full_c = np.concatenate([cols, rows])
            full_v = np.concatenate([vals, vals])
            csr = sp.csr_matrix((full_v, (full_r, full_c)), shape=(self.n, self.n))
            csr.sort_indices()
            self._csr = csr

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dense(cls, matrix, *, atol: float = 0.0) -> "CouplingMatrix":
        a = np.array(matrix, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionError(f"coupling matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("coupling matrix has non-finite entries")
        if np.any(np.abs(a - a.T) > atol):
            raise ValueError("coupling matrix is not symmetric")
        if np.any(np.diag(a) != 0.0):
            raise ValueError("coupling matrix must have a zero diagonal")
        # exact symmetry even when atol > 0
        a = np.triu(a, 1)
        a = a + a.T
        a.setflags(write=False)
        return cls(a.shape[0], "dense", dense=a)

    @classmethod
    def from_triplets(cls, n: int, triplets: Iterable[tuple[int, int, float]]) -> "CouplingMatrix":
        """Sparse matrix from ``(i, j, value)`` entries; each pair may appear once."""
        n = int(n)
        if n < 1:
            raise DimensionError("n must be positive")
        seen: dict[tuple[int, int], float] = {}
        for i, j, v in triplets:
            i, j, v = int(i), int(j), float(v)
            if i == j:
                raise ValueError(f"diagonal entry ({i}, {j}) not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise DimensionError(f"index ({i}, {j}) out of range for n={n}")
            if not math.isfinite(v):
                raise ValueError("non-finite coupling value")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate entry for pair {key}")
            seen[key] = v
        keys = sorted(k for k, v in seen.items() if v != 0.0)
        rows = np.array([k[0] for k in keys], dtype=np.int64)
        cols = np.array([k[1] for k in keys], dtype=np.int64)
        vals = np.array([seen[k] for k in keys], dtype=float)
        for arr in (rows, cols, vals):
            arr.setflags(write=False)
        return cls(n, "sparse", rows=rows, cols=cols, vals=vals)

    # -- views -------------------------------------------------------------

    def pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nonzero upper-triangle entries in ascending (row, column) order."""
        if self.storage == "sparse":
            return self._rows, self._cols, self._vals
        r, c = np.triu_indices(self.n, 1)
        v = self._dense[r, c]
        keep = v != 0.0
        return r[keep], c[keep], v[keep]

    def to_dense(self) -> np.ndarray:
        if self.storage == "dense":
            return self._dense
        return self._csr.toarray()

    @property
    def operator(self):
        """Object supporting ``@`` with the full symmetric matrix."""
        return self._dense if self.storage == "dense" else self._csr

    def to_sparse(self) -> "CouplingMatrix":
        if self.storage == "sparse":
            return self
        r, c, v = self.pairs()
        return CouplingMatrix.from_triplets(self.n, zip(r.tolist(), c.tolist(), v.tolist()))

    def to_dense_storage(self) -> "CouplingMatrix":
        if self.storage == "dense":
            return self
        return CouplingMatrix.from_dense(self.to_dense())

    def abs_row_sums(self) -> np.ndarray:
        if self.storage == "dense":
            return np.abs(self._dense).sum(axis=1)
        return np.asarray(abs(self._csr).sum(axis=1)).ravel()

    @property
    def max_abs(self) -> float:
        v = self.pairs()[2]
        return float(np.max(np.abs(v))) if v.size else 0.0

    @property
    def nnz_pairs(self) -> int:
        return int(self.pairs()[0].size)

    def scaled(self, factor: float) -> "CouplingMatrix":
        factor = float(factor)
        if self.storage == "dense":
            return CouplingMatrix.from_dense(self._dense * factor)
        return CouplingMatrix(self.n, "sparse", rows=self._rows, cols=self._cols,
                              vals=self._vals * factor)

    def __eq__(self, other):
        if not isinstance(other, CouplingMatrix) or other.n != self.n:
            return NotImplemented
        a, b = self.pairs(), other.pairs()
        return all(np.array_equal(x, y) for x, y in zip(a, b))

    def __repr__(self):
        return f"CouplingMatrix(n={self.n}, storage={self.storage!r}, pairs={self.nnz_pairs})"


def as_coupling(J) -> CouplingMatrix:
    if isinstance(J, CouplingMatrix):
        return J
    if sp.issparse(J):
        coo = sp.triu(J, 1).tocoo()
        return CouplingMatrix.from_triplets(J.shape[0], zip(coo.row, coo.col, coo.data))
    return CouplingMatrix.from_dense(J)


# ---------------------------------------------------------------------------
# Fields and configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldSpec:
    """Resonant-field coefficients ``h_{q,i}`` keyed by resonance order ``q``.

    ``q = 1`` acts as an external field, ``q = 2`` with a large constant
    amplitude pins phases to {0, pi} (Ising), ``q > 2`` to the q Potts angles.
    """

    terms: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for q, h in dict(self.terms).items():
            if int(q) != q or q < 1:
                raise ValueError(f"resonance order must be a positive integer, got {q!r}")
            arr = np.array(h, dtype=float).ravel()
            arr.setflags(write=False)
            clean[int(q)] = arr
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @classmethod
    def ising(cls, n: int, h2: float) -> "FieldSpec":
        return cls({2: np.full(n, float(h2))})

    @classmethod
    def potts(cls, n: int, q: int, hq: float) -> "FieldSpec":
        return cls({int(q): np.full(n, float(hq))})

    @property
    def empty(self) -> bool:
        return not self.terms

    def check_size(self, n: int) -> None:
        for q, h in self.terms.items():
            if h.size != n:
                raise DimensionError(f"field term q={q} has length {h.size}, expected {n}")

    def scaled(self, factor: float) -> "FieldSpec":
        return FieldSpec({q: h * factor for q, h in self.terms.items()})

    def external_field(self, rho_th: float) -> np.ndarray | None:
        """``g_i = h_{1,i} / sqrt(rho_th)`` when a q=1 term is present."""
        h1 = self.terms.get(1)
        return None if h1 is None else h1 / math.sqrt(rho_th)

    @property
    def model_tag(self) -> str:
        """Readout model implied by the highest resonance order present."""
        qs = [q for q in self.terms if q >= 2]
        if not qs:
            return "xy"
        q = max(qs)
        return "ising" if q == 2 else f"potts:{q}"


def ising_penalty_ok(J: CouplingMatrix, fields: FieldSpec) -> bool:
    """True if a constant ``h2 > max_i sum_j |J_ij|`` (the Ising pinning condition)."""
    h2 = fields.terms.get(2)
    if h2 is None or h2.size == 0 or np.ptp(h2) != 0.0:
        return False
    return bool(h2[0] > J.abs_row_sums().max())


def parse_model_tag(tag: str) -> int | None:
    """Number of discrete states for ``tag`` (None for the continuous XY model)."""
    if tag == "xy":
        return None
    if tag == "ising":
        return 2
    if tag.startswith("potts:"):
        q = int(tag.split(":", 1)[1])
        if q < 2:
            raise ValueError(f"invalid Potts order in {tag!r}")
        return q
    raise ValueError(f"unknown model tag {tag!r}")


@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    """Phases reduced to [0, 2pi) plus the model they belong to."""

    theta: np.ndarray
    model_tag: str = "xy"

    def __post_init__(self):
        th = np.mod(np.array(self.theta, dtype=float).ravel(), TWO_PI)
        # mod can round up to exactly 2pi for tiny negative inputs
        th[th >= TWO_PI] = 0.0
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        parse_model_tag(self.model_tag)

    @property
    def n(self) -> int:
        return self.theta.size

    def spins(self) -> np.ndarray:
        """Ising spins ``cos(theta)`` as +-1 integers."""
        if self.model_tag != "ising":
            raise ValueError("spins() requires an Ising configuration")
        return np.where(self.theta == 0.0, 1, -1)

    def __eq__(self, other):
        if not isinstance(other, SpinConfiguration):
            return NotImplemented
        return self.model_tag == other.model_tag and np.array_equal(self.theta, other.theta)

    def __repr__(self):
        return f"SpinConfiguration(n={self.n}, model_tag={self.model_tag!r})"


def _theta(conf, n: int) -> np.ndarray:
    th = conf.theta if isinstance(conf, SpinConfiguration) else np.asarray(conf, dtype=float).ravel()
    if th.size != n:
        raise DimensionError(f"configuration has {th.size} phases, couplings have n={n}")
    return th


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------


def _pair_sum(J: CouplingMatrix, theta: np.ndarray) -> float:
    r, c, v = J.pairs()
    if v.size == 0:
        return 0.0
    return 2.0 * math.fsum((v * np.cos(theta[r] - theta[c])).tolist())


def xy_energy(J, g=None, conf=None, *, field_sign: float = 1.0) -> float:
    """``-sum_{i!=j} J_ij cos(theta_i - theta_j) + field_sign * sum_i g_i cos(theta_i)``.

    ``field_sign=+1`` is the usual Hamiltonian convention; ``-1`` matches the
    sign used by the gain-dissipative functional (see ``generalized_energy``).
    """
    J = as_coupling(J)
    th = _theta(conf, J.n)
    e = -_pair_sum(J, th)
    if g is not None:
        g = np.asarray(g, dtype=float).ravel()
        if g.size != J.n:
            raise DimensionError(f"field has length {g.size}, expected {J.n}")
        e += field_sign * math.fsum((g * np.cos(th)).tolist())
    return e


def xy_gradient(J, g=None, conf=None, *, field_sign: float = 1.0) -> np.ndarray:
    """Analytic derivative of :func:`xy_energy` with respect to each phase."""
    J = as_coupling(J)
    th = _theta(conf, J.n)
    c, s = np.cos(th), np.sin(th)
    op = J.operator
    grad = 2.0 * (s * (op @ c) - c * (op @ s))
    if g is not None:
        g = np.asarray(g, dtype=float).ravel()
        if g.size != J.n:
            raise DimensionError(f"field has length {g.size}, expected {J.n}")
        grad -= field_sign * g * s
    return grad


def generalized_energy(J, fields: FieldSpec | None, rho_th: float, conf) -> float:
    """Functional minimised by the gain-dissipative dynamics.

    ``H_s = -sum_{i!=j} J_ij cos(theta_ij) - sum_q rho_th**(q/2-1) sum_i h_qi cos(q theta_i)``
    """
    if not rho_th > 0:
        raise ValueError("rho_th must be positive")
    J = as_coupling(J)
    th = _theta(conf, J.n)
    e = -_pair_sum(J, th)
    if fields is not None and not fields.empty:
        fields.check_size(J.n)
        for q, h in fields.terms.items():
            w = rho_th ** (q / 2.0 - 1.0)
            e -= w * math.fsum((h * np.cos(q * th)).tolist())
    return e


def energy_and_gradient(J: CouplingMatrix, theta: np.ndarray, *, g=None, field_sign: float = 1.0,
                        fields: FieldSpec | None = None, rho_th: float = 1.0):
    """Fast value and gradient for local optimisers (BLAS summation order).

    Covers both the XY energy with external field ``g`` and the generalized
    functional with resonant ``fields``.
    """
    c, s = np.cos(theta), np.sin(theta)
    op = J.operator
    jc, js = op @ c, op @ s
    e = -(c @ jc + s @ js)
    grad = 2.0 * (s * jc - c * js)
    if g is not None:
        e += field_sign * (g @ c)
        grad -= field_sign * g * s
    if fields is not None:
        for q, h in fields.terms.items():
            w = rho_th ** (q / 2.0 - 1.0)
            e -= w * (h @ np.cos(q * theta))
            grad += w * q * h * np.sin(q * theta)
    return float(e), grad


# ---------------------------------------------------------------------------
# Discrete readout
# ---------------------------------------------------------------------------


def discretize(conf: SpinConfiguration | Sequence[float], model_tag: str) -> SpinConfiguration:
    """Snap each phase to the nearest of the ``q`` allowed angles ``2 pi k / q``.

    Exact ties go to the smaller angle (e.g. pi/2 -> 0 for Ising).
    """
    q = parse_model_tag(model_tag)
    if q is None:
        raise ValueError("discretize needs an 'ising' or 'potts:q' tag")
    th = conf.theta if isinstance(conf, SpinConfiguration) else np.mod(np.asarray(conf, float), TWO_PI)
    x = th * q / TWO_PI
    lo = np.floor(x)
    frac = x - lo
    k = np.where(frac > 0.5, lo + 1.0, lo)
    k = np.mod(k, q)
    return SpinConfiguration(TWO_PI * k / q, model_tag)


# ---------------------------------------------------------------------------
# Max-Cut
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected weighted graph on nodes ``0..n-1`` (edges stored with i < j)."""

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        seen = set()
        norm = []
        for i, j, w in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append((key[0], key[1], float(w)))
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def total_weight(self) -> float:
        return math.fsum(w for _, _, w in self.edges)


def ising_from_maxcut(graph: WeightedGraph) -> tuple[CouplingMatrix, float]:
    """Couplings ``J_ij = -w_ij`` and offset ``W/2`` with ``cut = offset - H/4``."""
    J = CouplingMatrix.from_triplets(graph.n, ((i, j, -w) for i, j, w in graph.edges))
    return J, graph.total_weight / 2.0


def maxcut_value(graph: WeightedGraph, spins: SpinConfiguration | np.ndarray) -> float:
    """Total weight of edges whose endpoints carry different Ising spins."""
    if isinstance(spins, SpinConfiguration):
        s = spins.spins()
    else:
        s = np.asarray(spins)
        if not np.all(np.isin(s, (-1, 1))):
            raise ValueError("maxcut_value needs +-1 spins")
    if s.size != graph.n:
        raise DimensionError("spin vector length does not match graph")
    return math.fsum(w for i, j, w in graph.edges if s[i] != s[j])
