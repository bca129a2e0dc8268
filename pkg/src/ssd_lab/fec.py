"""
LDPC codes: alist I/O, staircase encoding and plain min-sum decoding.

LLR convention matches the demappers: ``llr > 0`` means bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit


class AlistError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedMatrixError(ValueError):
    """The matrix has no staircase parity part, so it cannot be encoded directly."""


@dataclass(frozen=True)
class ParityCheckMatrix:
    """Sparse parity-check matrix stored as per-check variable lists (0-indexed)."""

    n: int
    m: int
    checks: tuple[tuple[int, ...], ...] = field(repr=False)

    def __post_init__(self):
        if len(self.checks) != self.m:
            raise ValueError("number of check rows does not match m")
        seen_vars = np.zeros(self.n, dtype=bool)
        for row in self.checks:
            if len(set(row)) != len(row):
                raise ValueError("duplicate edge in check row")
            if any(v < 0 or v >= self.n for v in row):
                raise ValueError("variable index out of range")
            seen_vars[list(row)] = True
        if not seen_vars.all():
            raise ValueError("every variable must appear in at least one check")

    @property
    def k(self) -> int:
        return self.n - self.m

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def variables(self) -> tuple[tuple[int, ...], ...]:
        cols: list[list[int]] = [[] for _ in range(self.n)]
        for c, row in enumerate(self.checks):
            for v in row:
                cols[v].append(c)
        return tuple(tuple(col) for col in cols)

    @cached_property
    def dense(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        for c, row in enumerate(self.checks):
            H[c, list(row)] = 1
        return H

    @property
    def var_degrees(self) -> np.ndarray:
        return np.array([len(col) for col in self.variables])

    @property
    def check_degrees(self) -> np.ndarray:
        return np.array([len(row) for row in self.checks])

    @cached_property
    def is_staircase(self) -> bool:
        """True if the last m columns form a dual-diagonal (accumulator) block."""
        k = self.k
        for c, row in enumerate(self.checks):
            parity = sorted(v - k for v in row if v >= k)
            expected = [c] if c == 0 else [c - 1, c]
            if parity != expected:
                return False
        return True

    @cached_property
    def graph(self) -> "_Graph":
        return _Graph(self)

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        return (bits @ self.dense.T.astype(np.int64)) % 2


def parse_alist(text: str) -> ParityCheckMatrix:
    """Parse alist text (1-indexed; zero padding entries are tolerated only in
    rows shorter than the maximum degree)."""
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(no, toks) for no, toks in lines if toks]
    pos = 0

    def ints(expected: int | None = None) -> tuple[int, list[int]]:
        nonlocal pos
        if pos >= len(lines):
            raise AlistError("unexpected end of file", lines[-1][0] + 1 if lines else 1)
        no, toks = lines[pos]
        pos += 1
        try:
            values = [int(t) for t in toks]
        except ValueError:
            raise AlistError(f"non-integer token in {' '.join(toks)!r}", no) from None
        if expected is not None and len(values) != expected:
            raise AlistError(f"expected {expected} values, got {len(values)}", no)
        return no, values

    no, (n, m) = ints(2)
    if n < 1 or m < 1:
        raise AlistError("n and m must be positive", no)
    no, (dv_max, dc_max) = ints(2)
    no, dv = ints(n)
    no, dc = ints(m)
    if max(dv) > dv_max or max(dc) > dc_max or min(dv) < 1 or min(dc) < 1:
        raise AlistError("degree list inconsistent with the maximum degrees", no)

    cols = []
    for j in range(n):
        no, entries = ints()
        entries = [e for e in entries if e != 0] if len(entries) > dv[j] else entries
        if len(entries) != dv[j]:
            raise AlistError(f"variable {j + 1} lists {len(entries)} checks, degree is {dv[j]}", no)
        if any(e < 1 or e > m for e in entries):
            raise AlistError(f"check index out of range 1..{m}", no)
        cols.append([e - 1 for e in entries])
    rows = []
    for i in range(m):
        no, entries = ints()
        entries = [e for e in entries if e != 0] if len(entries) > dc[i] else entries
        if len(entries) != dc[i]:
            raise AlistError(f"check {i + 1} lists {len(entries)} variables, degree is {dc[i]}", no)
        if any(e < 1 or e > n for e in entries):
            raise AlistError(f"variable index out of range 1..{n}", no)
        rows.append(tuple(e - 1 for e in entries))

    from_rows = sorted((c, v) for c, row in enumerate(rows) for v in row)
    from_cols = sorted((c, v) for v, col in enumerate(cols) for c in col)
    if from_rows != from_cols:
        raise AlistError("variable and check adjacency lists disagree")
    try:
        return ParityCheckMatrix(n, m, tuple(rows))
    except ValueError as exc:
        raise AlistError(str(exc)) from None


def to_alist(H: ParityCheckMatrix) -> str:
    dv, dc = H.var_degrees, H.check_degrees
    out = [
        f"{H.n} {H.m}",
        f"{dv.max()} {dc.max()}",
        " ".join(map(str, dv)),
        " ".join(map(str, dc)),
    ]
    out += [" ".join(str(c + 1) for c in col) for col in H.variables]
    out += [" ".join(str(v + 1) for v in row) for row in H.checks]
    return "\n".join(out) + "\n"


def load_alist(path: str | Path) -> ParityCheckMatrix:
    return parse_alist(Path(path).read_text())


def default_code() -> ParityCheckMatrix:
    """The bundled (1008, 504) staircase LDPC code."""
    text = resources.files("ssd_lab").joinpath("data/staircase_1008_504.alist").read_text()
    return parse_alist(text)


def make_staircase_code(n: int, m: int, info_degree: int = 3, seed: int = 0) -> ParityCheckMatrix:
    """Random staircase (IRA-style) LDPC code.

    Information columns get ``info_degree`` checks chosen greedily among the
    least loaded rows, avoiding length-4 cycles when possible; the parity part
    is the dual-diagonal accumulator.
    """
    k = n - m
    if k < 1 or info_degree > m:
        raise ValueError("need n > m and info_degree <= m")
    rng = np.random.default_rng(seed)
    rows: list[set[int]] = [set() for _ in range(m)]
    load = np.zeros(m, dtype=int)
    for v in rng.permutation(k):
        chosen: list[int] = []
        neighbours: set[int] = set()
        for _ in range(info_degree):
            order = np.lexsort((rng.random(m), load))
            pick = None
            for c in order:
                if c in chosen:
                    continue
                if rows[c] & neighbours:
                    continue
                pick = int(c)
                break
            if pick is None:
                pick = int(next(c for c in order if c not in chosen))
            chosen.append(pick)
            neighbours |= rows[pick]
        for c in chosen:
            rows[c].add(int(v))
            load[c] += 1
    checks = []
    for c in range(m):
        parity = [k + c] if c == 0 else [k + c - 1, k + c]
        checks.append(tuple(sorted(rows[c])) + tuple(parity))
    return ParityCheckMatrix(n, m, tuple(checks))


def encode(H: ParityCheckMatrix, info: np.ndarray) -> np.ndarray:
    """Systematic encoding ``[info | parity]`` by accumulating the info syndromes.

    ``info`` may be batched with shape ``(..., k)``.
    """
    if not H.is_staircase:
        raise UnsupportedMatrixError("matrix has no staircase parity part")
    info = np.asarray(info, dtype=np.uint8)
    if info.shape[-1] != H.k:
        raise ValueError(f"expected {H.k} information bits, got {info.shape[-1]}")
    A = H.dense[:, : H.k].astype(np.int64)
    partial = (info.astype(np.int64) @ A.T) % 2
    parity = np.bitwise_xor.accumulate(partial.astype(np.uint8), axis=-1)
    return np.concatenate([info, parity], axis=-1)


@dataclass(frozen=True)
class DecoderConfig:
    max_iters: int = 25
    early_stop: bool = True
    normalization: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class DecodeResult:
    bits: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    llr: np.ndarray


class _Graph:
    """CSR views of the Tanner graph; edges are numbered check-major."""

    def __init__(self, H: ParityCheckMatrix):
        self.check_ptr = np.zeros(H.m + 1, dtype=np.int64)
        self.check_ptr[1:] = np.cumsum(H.check_degrees)
        self.edge_var = np.array([v for row in H.checks for v in row], dtype=np.int64)
        order = np.argsort(self.edge_var, kind="stable")
        self.var_ptr = np.zeros(H.n + 1, dtype=np.int64)
        self.var_ptr[1:] = np.cumsum(np.bincount(self.edge_var, minlength=H.n))
        self.var_edge = order.astype(np.int64)


@njit(cache=True)
def _satisfied(post, check_ptr, edge_var):
    for v in range(post.size):
        if post[v] == 0.0:
            return False
    for c in range(check_ptr.size - 1):
        parity = False
        for e in range(check_ptr[c], check_ptr[c + 1]):
            if post[edge_var[e]] < 0.0:
                parity = not parity
        if parity:
            return False
    return True


@njit(cache=True)
def _minsum(llr, check_ptr, edge_var, var_ptr, var_edge, max_iters, early_stop, scale, post_out, iters_out, conv_out):
    n_frames, n = llr.shape
    n_edges = edge_var.size
    c2v = np.empty(n_edges)
    v2c = np.empty(n_edges)
    for b in range(n_frames):
        post = post_out[b]
        post[:] = llr[b]
        c2v[:] = 0.0
        iters_out[b] = max_iters
        if early_stop and _satisfied(post, check_ptr, edge_var):
            iters_out[b] = 0
            conv_out[b] = True
            continue
        for it in range(1, max_iters + 1):
            for c in range(check_ptr.size - 1):
                min1 = np.inf
                min2 = np.inf
                arg = -1
                negative = False
                for e in range(check_ptr[c], check_ptr[c + 1]):
                    q = post[edge_var[e]] - c2v[e]
                    v2c[e] = q
                    a = abs(q)
                    if q < 0.0:
                        negative = not negative
                    if a < min1:
                        min2 = min1
                        min1 = a
                        arg = e
                    elif a < min2:
                        min2 = a
                for e in range(check_ptr[c], check_ptr[c + 1]):
                    mag = (min2 if e == arg else min1) * scale
                    flip = negative != (v2c[e] < 0.0)
                    c2v[e] = -mag if flip else mag
            for v in range(n):
                total = llr[b, v]
                for j in range(var_ptr[v], var_ptr[v + 1]):
                    total += c2v[var_edge[j]]
                post[v] = total
            if early_stop and _satisfied(post, check_ptr, edge_var):
                iters_out[b] = it
                conv_out[b] = True
                break
        if not early_stop:
            conv_out[b] = _satisfied(post, check_ptr, edge_var)


def minsum_decode(H: ParityCheckMatrix, llr_in: np.ndarray, config: DecoderConfig = DecoderConfig()) -> DecodeResult:
    """Flooding min-sum decoder; ``llr_in`` has shape ``(n,)`` or ``(B, n)``.

    Check messages are sign product times the smallest other magnitude (times
    ``config.normalization``, 1 by default). A frame converges when its hard
    decisions satisfy every check and no posterior LLR is exactly zero.
    Frames are decoded independently.
    """
    llr_in = np.asarray(llr_in, dtype=float)
    single = llr_in.ndim == 1
    llr = np.ascontiguousarray(np.atleast_2d(llr_in))
    if llr.shape[-1] != H.n:
        raise ValueError(f"expected {H.n} LLRs per frame, got {llr.shape[-1]}")
    g = H.graph
    B = llr.shape[0]
    posterior = np.empty_like(llr)
    iterations = np.zeros(B, dtype=np.int64)
    converged = np.zeros(B, dtype=np.bool_)
    _minsum(
        llr, g.check_ptr, g.edge_var, g.var_ptr, g.var_edge,
        config.max_iters, config.early_stop, float(config.normalization),
        posterior, iterations, converged,
    )
    bits = (posterior < 0).astype(np.uint8)
    if single:
        return DecodeResult(bits[0], bool(converged[0]), int(iterations[0]), posterior[0])
    return DecodeResult(bits, converged, iterations, posterior)
