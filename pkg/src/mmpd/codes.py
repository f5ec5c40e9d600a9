"""Binary linear code tooling: alist IO, GF(2) linear algebra, Tanner adjacency.

A code is described by its parity-check matrix H of shape (n-k) x n over
GF(2).  Variable node i (a codeword bit) is connected to check node j (a
parity constraint) whenever H[j, i] = 1.  Edges are enumerated in row-major
order of H so that edge indexing is identical across runs and machines.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class AlistError(ValueError):
    """Malformed alist input; message carries the 1-based line number."""


class RankDeficientError(ValueError):
    """H has linearly dependent rows over GF(2)."""


@dataclass(frozen=True, eq=False)
class CodeSpec:
    """Immutable code description shared read-only by all decoders.

    ``edges`` lists (check j, variable i) pairs in row-major order of ``h``.
    ``vn_neighbors[i]`` / ``cn_neighbors[j]`` hold *edge positions* (indices
    into ``edges``) incident to variable i / check j, in ascending order.
    """

    name: str
    n: int
    k: int
    h: np.ndarray
    edges: tuple
    vn_neighbors: tuple
    cn_neighbors: tuple
    g: np.ndarray | None = None
    column_perm: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.n - self.k

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_check(self) -> np.ndarray:
        """Check index of every edge, shape (E,)."""
        return np.array([j for j, _ in self.edges], dtype=np.int64)

    @cached_property
    def edge_var(self) -> np.ndarray:
        """Variable index of every edge, shape (E,)."""
        return np.array([i for _, i in self.edges], dtype=np.int64)

    @cached_property
    def h_sha256(self) -> str:
        """Digest of the canonical alist serialization of H."""
        return hashlib.sha256(serialize_alist(self).encode("ascii")).hexdigest()

    def with_generator(self) -> "CodeSpec":
        """Return a copy carrying a systematic generator for encoding."""
        g, perm = systematize(self.h)
        return CodeSpec(self.name, self.n, self.k, self.h, self.edges,
                        self.vn_neighbors, self.cn_neighbors, g, perm)


def _adjacency(h: np.ndarray):
    rows, cols = np.nonzero(h)
    edges = tuple((int(j), int(i)) for j, i in zip(rows, cols))
    vn = [[] for _ in range(h.shape[1])]
    cn = [[] for _ in range(h.shape[0])]
    for e, (j, i) in enumerate(edges):
        vn[i].append(e)
        cn[j].append(e)
    return edges, tuple(tuple(v) for v in vn), tuple(tuple(c) for c in cn)


def from_matrix(h, name: str = "code", generator: bool = True) -> CodeSpec:
    """Build a CodeSpec from a dense 0/1 matrix (rows must be independent)."""
    h = np.asarray(h, dtype=np.uint8) % 2
    if h.ndim != 2 or h.shape[0] == 0 or h.shape[1] == 0:
        raise ValueError(f"H must be a non-empty 2-D bit matrix, got shape {h.shape}")
    if (h.sum(axis=1) == 0).any():
        raise ValueError("H has an all-zero row")
    m, n = h.shape
    edges, vn, cn = _adjacency(h)
    spec = CodeSpec(name, n, n - m, h, edges, vn, cn)
    return spec.with_generator() if generator else spec


# ---------------------------------------------------------------------------
# alist parsing (MacKay interchange format)
# ---------------------------------------------------------------------------

def _ints(line: str, lineno: int):
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise AlistError(f"line {lineno}: expected whitespace-separated integers") from None


def parse_alist(text: str, name: str = "code") -> CodeSpec:
    """Parse alist text into a CodeSpec (no generator attached).

    Layout: line 1 "n m"; line 2 max column/row degree; line 3 the n column
    degrees; line 4 the m row degrees; then n lines of 1-based row indices
    per column and m lines of column indices per row.  Zero entries in the
    index lists are padding and are ignored.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) < 4:
        raise AlistError(f"line {len(lines) + 1}: truncated header")

    head = _ints(lines[0], 1)
    if len(head) != 2:
        raise AlistError("line 1: expected 'n m'")
    n, m = head
    if n < 1 or m < 1:
        raise AlistError("line 1: n and m must be positive")
    maxdeg = _ints(lines[1], 2)
    if len(maxdeg) != 2:
        raise AlistError("line 2: expected max column and row degree")
    vdeg = _ints(lines[2], 3)
    if len(vdeg) != n:
        raise AlistError(f"line 3: expected {n} column degrees, got {len(vdeg)}")
    cdeg = _ints(lines[3], 4)
    if len(cdeg) != m:
        raise AlistError(f"line 4: expected {m} row degrees, got {len(cdeg)}")
    if len(lines) < 4 + n + m:
        raise AlistError(f"line {len(lines) + 1}: truncated index lists")

    h = np.zeros((m, n), dtype=np.uint8)
    for i in range(n):
        lineno = 5 + i
        entries = [e for e in _ints(lines[4 + i], lineno) if e != 0]
        if len(entries) != vdeg[i]:
            raise AlistError(
                f"line {lineno}: column {i} lists {len(entries)} entries, degree says {vdeg[i]}")
        for e in entries:
            if not 1 <= e <= m:
                raise AlistError(f"line {lineno}: row index {e} out of range 1..{m}")
            if h[e - 1, i]:
                raise AlistError(f"line {lineno}: duplicate edge ({e - 1},{i})")
            h[e - 1, i] = 1

    for j in range(m):
        lineno = 5 + n + j
        entries = sorted(e for e in _ints(lines[4 + n + j], lineno) if e != 0)
        if len(entries) != cdeg[j]:
            raise AlistError(
                f"line {lineno}: row {j} lists {len(entries)} entries, degree says {cdeg[j]}")
        expect = sorted(int(i) + 1 for i in np.nonzero(h[j])[0])
        if entries != expect:
            raise AlistError(f"line {lineno}: row {j} disagrees with the column lists")

    if (h.sum(axis=1) == 0).any():
        j = int(np.argmax(h.sum(axis=1) == 0))
        raise AlistError(f"line {4 + n + j + 1}: row {j} has no entries")

    edges, vn, cn = _adjacency(h)
    return CodeSpec(name, n, n - m, h, edges, vn, cn)


def serialize_alist(spec_or_h) -> str:
    """Canonical alist form: ascending indices, single spaces, no padding."""
    h = spec_or_h.h if isinstance(spec_or_h, CodeSpec) else np.asarray(spec_or_h, dtype=np.uint8)
    m, n = h.shape
    vdeg = h.sum(axis=0, dtype=int)
    cdeg = h.sum(axis=1, dtype=int)
    out = [f"{n} {m}", f"{int(vdeg.max())} {int(cdeg.max())}",
           " ".join(str(int(d)) for d in vdeg),
           " ".join(str(int(d)) for d in cdeg)]
    for i in range(n):
        out.append(" ".join(str(int(j) + 1) for j in np.nonzero(h[:, i])[0]))
    for j in range(m):
        out.append(" ".join(str(int(i) + 1) for i in np.nonzero(h[j])[0]))
    return "\n".join(out) + "\n"


def load_alist(path, name: str | None = None) -> CodeSpec:
    """Load an alist file and attach a systematic generator."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    if name is None:
        import os
        name = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_alist(text, name=name).with_generator()


# ---------------------------------------------------------------------------
# GF(2) linear algebra
# ---------------------------------------------------------------------------

def systematize(h: np.ndarray):
    """Gauss-Jordan over GF(2) with column pivoting.

    Returns (g, column_perm) where g is the k x n generator in *original*
    column order and column_perm is the permutation p with h[:, p] in the
    systematic arrangement [A | I_m]; g[:, p] = [I_k | A^T].  Raises
    RankDeficientError instead of silently dropping redundancy.
    """
    h = np.asarray(h, dtype=np.uint8) % 2
    m, n = h.shape
    work = h.copy()
    pivot_cols = []
    r = 0
    for c in range(n):
        if r == m:
            break
        hits = np.nonzero(work[r:, c])[0]
        if hits.size == 0:
            continue
        p = r + int(hits[0])
        if p != r:
            work[[r, p]] = work[[p, r]]
        elim = np.nonzero(work[:, c])[0]
        for row in elim:
            if row != r:
                work[row] ^= work[r]
        pivot_cols.append(c)
        r += 1
    if r < m:
        raise RankDeficientError(f"H has rank {r} < {m} rows over GF(2)")

    pivot_cols = np.array(pivot_cols, dtype=np.int64)
    nonpivot = np.array([c for c in range(n) if c not in set(pivot_cols.tolist())],
                        dtype=np.int64)
    perm = np.concatenate([nonpivot, pivot_cols])
    k = n - m
    a = work[:, nonpivot]                     # m x k; h[:, perm] = [A | I_m]
    g_perm = np.concatenate([np.eye(k, dtype=np.uint8), a.T], axis=1)
    g = np.zeros((k, n), dtype=np.uint8)
    g[:, perm] = g_perm
    if k and ((g @ h.T) % 2).any():
        raise AssertionError("generator does not annihilate H")
    return g, perm


def encode(spec: CodeSpec, u) -> np.ndarray:
    """Encode an information word: c = u G over GF(2)."""
    if spec.g is None:
        raise ValueError("CodeSpec carries no generator; call with_generator() first")
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] != spec.k:
        raise ValueError(f"information word length {u.shape[-1]} != k={spec.k}")
    return (u @ spec.g) % 2 if spec.k else np.zeros(u.shape[:-1] + (spec.n,), dtype=np.uint8)


def syndrome(spec: CodeSpec, bits) -> np.ndarray:
    """H @ bits over GF(2); all-zero exactly for codewords."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != spec.n:
        raise ValueError(f"bit vector length {bits.shape[-1]} != n={spec.n}")
    return (bits @ spec.h.T) % 2
