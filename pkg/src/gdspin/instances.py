"""Random coupling ensembles, G-Set files and best-known-value metadata."""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import TextIO

import numpy as np

from .model import CouplingMatrix, FieldSpec, WeightedGraph

SPARSE_BOUNDS = (-10.0, -3.0, 3.0, 10.0)
_PAIRING_RETRIES = 1000


@dataclass(frozen=True)
class EnsembleSpec:
    """Random instance recipe.

    ``weight_rule`` applies to ``sparse3`` only: ``"endpoints"`` draws each
    weight uniformly between two distinct values of {-b, -0.3b, 0.3b, b};
    ``"band"`` draws uniformly from [-b, b] with (-0.3b, 0.3b) removed.
    """

    kind: str = "dense"
    n: int = 20
    bound: float = 10.0
    seed: int = 0
    weight_rule: str = "endpoints"

    def __post_init__(self):
        if self.kind not in ("dense", "sparse3"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not self.bound > 0:
            raise ValueError("bound must be positive")
        if self.kind == "sparse3":
            if self.n < 4 or self.n % 2:
                raise ValueError("sparse3 needs an even n >= 4")
            if self.weight_rule not in ("endpoints", "band"):
                raise ValueError(f"unknown weight rule {self.weight_rule!r}")


def generate(spec: EnsembleSpec) -> CouplingMatrix:
    return gen_dense(spec) if spec.kind == "dense" else gen_sparse3(spec)


def gen_dense(spec: EnsembleSpec) -> CouplingMatrix:
    """Dense symmetric matrix with i.i.d. uniform(-bound, bound) couplings."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    r, c = np.triu_indices(n, 1)
    a = np.zeros((n, n))
    a[r, c] = rng.uniform(-spec.bound, spec.bound, r.size)
    return CouplingMatrix.from_dense(a + a.T)


def _pairing(n: int, rng: np.random.Generator) -> list[tuple[int, int]] | None:
    stubs = np.repeat(np.arange(n), 3)
    for _ in range(_PAIRING_RETRIES):
        perm = rng.permutation(stubs).reshape(-1, 2)
        perm.sort(axis=1)
        if np.any(perm[:, 0] == perm[:, 1]):
            continue
        edges = {tuple(e) for e in perm.tolist()}
        if len(edges) == len(perm):
            return sorted(edges)
    return None


def random_3_regular(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform random simple 3-regular graph via the pairing model with rejection."""
    edges = _pairing(n, rng)
    while edges is None:
        rng = np.random.default_rng(rng.integers(2 ** 63))
        edges = _pairing(n, rng)
    return edges


def gen_sparse3(spec: EnsembleSpec) -> CouplingMatrix:
    """Random 3-regular coupling graph with the sparse-ensemble weight rule."""
    if spec.kind != "sparse3":
        raise ValueError("gen_sparse3 needs kind='sparse3'")
    rng = np.random.default_rng(spec.seed)
    edges = random_3_regular(spec.n, rng)
    bounds = np.array(SPARSE_BOUNDS) * (spec.bound / 10.0)
    cut = 0.3 * spec.bound
    triplets = []
    for i, j in edges:
        if spec.weight_rule == "endpoints":
            a, b = np.sort(rng.choice(bounds, 2, replace=False))
            w = rng.uniform(a, b)
        else:
            w = rng.uniform(cut, spec.bound) * (1.0 if rng.uniform() < 0.5 else -1.0)
        triplets.append((i, j, w))
    return CouplingMatrix.from_triplets(spec.n, triplets)


# ---------------------------------------------------------------------------
# G-Set format
# ---------------------------------------------------------------------------


class GsetParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _num(tok: str, lineno: int):
    try:
        v = float(tok)
    except ValueError:
        raise GsetParseError(lineno, f"not a number: {tok!r}") from None
    return int(v) if v.is_integer() else v


def parse_gset(stream: TextIO | str) -> WeightedGraph:
    """Read ``n m`` followed by ``m`` lines ``i j w`` (1-based node indices)."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = [(k, ln.split()) for k, ln in enumerate(stream, start=1)]
    lines = [(k, toks) for k, toks in lines if toks]
    if not lines:
        raise GsetParseError(1, "empty input")
    k0, head = lines[0]
    if len(head) != 2:
        raise GsetParseError(k0, "header must be 'n m'")
    n, m = (_num(t, k0) for t in head)
    if not (isinstance(n, int) and isinstance(m, int)) or n < 1 or m < 0:
        raise GsetParseError(k0, "invalid header counts")
    body = lines[1:]
    if len(body) != m:
        where = body[m][0] if len(body) > m else (body[-1][0] + 1 if body else k0 + 1)
        raise GsetParseError(where, f"expected {m} edge lines, found {len(body)}")
    edges = []
    seen = set()
    for k, toks in body:
        if len(toks) != 3:
            raise GsetParseError(k, "edge line must be 'i j w'")
        i, j, w = (_num(t, k) for t in toks)
        if not (isinstance(i, int) and isinstance(j, int)):
            raise GsetParseError(k, "node indices must be integers")
        if not (1 <= i <= n and 1 <= j <= n):
            raise GsetParseError(k, f"node index out of range 1..{n}")
        if i == j:
            raise GsetParseError(k, f"self-loop on node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GsetParseError(k, f"duplicate edge {i} {j}")
        seen.add(key)
        edges.append((i - 1, j - 1, w))
    g = WeightedGraph(n, tuple(edges))
    return g


def _fmt(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def write_gset(graph: WeightedGraph, stream: TextIO | None = None) -> str:
    lines = [f"{graph.n} {len(graph.edges)}"]
    lines += [f"{i + 1} {j + 1} {_fmt(w)}" for i, j, w in graph.edges]
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def graph_from_couplings(J: CouplingMatrix) -> WeightedGraph:
    """Graph with ``w_ij = -J_ij`` (inverse of :func:`ising_from_maxcut`)."""
    r, c, v = J.pairs()
    return WeightedGraph(J.n, tuple(zip(r.tolist(), c.tolist(), (-v).tolist())))


# ---------------------------------------------------------------------------
# Matrix JSON format
# ---------------------------------------------------------------------------

MATRIX_FORMAT = "gdspin-matrix"


def matrix_to_json(J: CouplingMatrix, fields: FieldSpec | None = None) -> str:
    r, c, v = J.pairs()
    doc = {
        "format": MATRIX_FORMAT,
        "version": 1,
        "n": J.n,
        "storage": J.storage,
        "entries": [[int(i), int(j), float(x)] for i, j, x in zip(r, c, v)],
    }
    if fields is not None and not fields.empty:
        doc["fields"] = {str(q): h.tolist() for q, h in fields.terms.items()}
    return json.dumps(doc)


def matrix_from_json(text: str) -> tuple[CouplingMatrix, FieldSpec]:
    doc = json.loads(text)
    if doc.get("format") != MATRIX_FORMAT:
        raise ValueError("not a gdspin matrix document")
    n = int(doc["n"])
    J = CouplingMatrix.from_triplets(n, doc["entries"])
    if doc.get("storage", "sparse") == "dense":
        J = J.to_dense_storage()
    fields = FieldSpec({int(q): h for q, h in doc.get("fields", {}).items()})
    fields.check_size(n)
    return J, fields


def load_instance(path) -> tuple[CouplingMatrix, FieldSpec, WeightedGraph | None]:
    """Load a JSON matrix or a G-Set file; the graph is returned for the latter."""
    text = Path(path).read_text(encoding="ascii")
    if text.lstrip().startswith("{"):
        J, fields = matrix_from_json(text)
        return J, fields, None
    from .model import ising_from_maxcut

    graph = parse_gset(text)
    J, _ = ising_from_maxcut(graph)
    return J, FieldSpec(), graph


# ---------------------------------------------------------------------------
# Metadata and bundled data
# ---------------------------------------------------------------------------


def parse_metadata(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for k, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) != 2:
            raise ValueError(f"metadata line {k}: expected 'name value'")
        try:
            out[toks[0]] = float(toks[1])
        except ValueError:
            raise ValueError(f"metadata line {k}: bad value {toks[1]!r}") from None
    return out


def load_metadata(path=None) -> dict[str, float]:
    """Best-known cut values by instance name (bundled table when ``path`` is None)."""
    if path is None:
        return parse_metadata(bundled_text("bestknown.txt"))
    return parse_metadata(Path(path).read_text(encoding="ascii"))


def bundled_text(name: str) -> str:
    return resources.files("gdspin.data").joinpath(name).read_text(encoding="ascii")


def bundled_path(name: str):
    return resources.files("gdspin.data").joinpath(name)


def data_dir(explicit=None) -> Path | None:
    d = explicit or os.environ.get("GDSPIN_DATA")
    return Path(d) if d else None


def find_gset(name: str, directory) -> Path | None:
    """Locate ``name`` (e.g. ``G1``) in ``directory`` trying common file suffixes."""
    if directory is None:
        return None
    directory = Path(directory)
    for cand in (name, name.lower(), name.upper()):
        for suffix in ("", ".txt", ".gset", ".rud"):
            p = directory / f"{cand}{suffix}"
            if p.is_file():
                return p
    return None
