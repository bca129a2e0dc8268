"""
Soft demappers for rotated QAM with independently faded I/Q components.

All demappers return LLRs of shape ``(N, log2 M)`` with the convention
``llr > 0`` meaning bit 0 is more likely. Negate before feeding a decoder that
expects the opposite orientation.

* :func:`llr_exact` - log-sum-exp over all M points.
* :func:`llr_maxlog_full` - exhaustive max-log.
* :func:`sphere_demap` - windowed max-log on the integer projection grid; only
  valid for the lattice angle ``arctan(1/sqrt(M))``.
* :func:`mmse_demap` - linear MMSE equalization then per-axis 1D max-log.

``sphere_demap_counted`` and ``maxlog_full_counted`` are scalar versions
written against :class:`ssd_lab.complexity.Ops`; they exist to measure
operation counts and to cross-check the vectorized paths.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .channel import Observation
from .complexity import OpCounters, Ops, erasure_fallback_cost, sphere_cost
from .constellation import ConstellationSpec, RotatedPoint, UnsupportedAngleError

DEFAULT_CAP = 50.0
ERASURE_THRESHOLD = 1e-6
_CHUNK = 8192


class DegenerateChannelError(ValueError):
    """Both fading gains are (numerically) zero."""


class EqualizedObservation(NamedTuple):
    Y_i: np.ndarray
    Y_q: np.ndarray
    valid_i: np.ndarray
    valid_q: np.ndarray


class CandidateSet(NamedTuple):
    """Sphere candidates: I-window entries first, then Q-window entries.

    ``points`` holds point indices (``p_i * U + p_q``); ``t`` the grid value of
    each entry on its own axis; ``on_q`` is False for I-window entries.
    """

    points: np.ndarray
    t: np.ndarray
    on_q: np.ndarray
    lo_i: np.ndarray
    lo_q: np.ndarray


def _clamp(llr: np.ndarray, cap: float | None) -> np.ndarray:
    if cap is None:
        return llr
    return np.clip(llr, -cap, cap)


def _coset_index(spec: ConstellationSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    bits = spec.bit_table
    return [(np.flatnonzero(bits[:, i] == 0), np.flatnonzero(bits[:, i] == 1)) for i in range(bits.shape[1])]


def _chunks(n: int):
    for start in range(0, n, _CHUNK):
        yield slice(start, min(n, start + _CHUNK))


def distance(obs: Observation, z: RotatedPoint) -> np.ndarray:
    """Squared 2D distance between observations and faded points (broadcasts)."""
    return (obs.y_i - obs.h_i * z.z_i) ** 2 + (obs.y_q - obs.h_q * z.z_q) ** 2


def expanded_distance(obs: Observation, s_i, s_q, theta: float) -> np.ndarray:
    """The same metric written as per-axis terms plus the I/Q cross term.

    Evaluated on the unrotated levels ``(s_i, s_q)``. The cross term
    ``2 (h11 h12 + h21 h22) s_i s_q`` vanishes when ``h_i == h_q``.
    """
    y_i, y_q, h_i, h_q = obs.y_i, obs.y_q, obs.h_i, obs.h_q
    c, s = math.cos(theta), math.sin(theta)
    h11, h12 = h_i * c, -h_i * s
    h21, h22 = h_q * s, h_q * c
    e_i = h11**2 + h21**2
    e_q = h12**2 + h22**2
    if np.any(e_i == 0) or np.any(e_q == 0):
        raise DegenerateChannelError("both fading gains are zero")
    a_i = y_i * h11 + y_q * h21
    a_q = y_i * h12 + y_q * h22
    return (
        y_i**2
        + y_q**2
        - a_i**2 / e_i
        - a_q**2 / e_q
        + e_i * (s_i - a_i / e_i) ** 2
        + e_q * (s_q - a_q / e_q) ** 2
        + 2.0 * (h11 * h12 + h21 * h22) * s_i * s_q
    )


def all_distances(obs: Observation, spec: ConstellationSpec) -> np.ndarray:
    """Distances to every point, shape ``(N, M)``."""
    z = spec.z
    y_i = obs.y_i.reshape(-1, 1)
    y_q = obs.y_q.reshape(-1, 1)
    h_i = obs.h_i.reshape(-1, 1)
    h_q = obs.h_q.reshape(-1, 1)
    return (y_i - h_i * z.real) ** 2 + (y_q - h_q * z.imag) ** 2


def llr_exact(obs: Observation, spec: ConstellationSpec, cap: float | None = DEFAULT_CAP) -> np.ndarray:
    if obs.sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    n = len(obs)
    out = np.empty((n, spec.bits_per_symbol))
    cosets = _coset_index(spec)
    for sl in _chunks(n):
        metric = -all_distances(obs[sl], spec) / obs.sigma2
        for i, (zero, one) in enumerate(cosets):
            out[sl, i] = logsumexp(metric[:, zero], axis=1) - logsumexp(metric[:, one], axis=1)
    return _clamp(out, cap)


def llr_maxlog_full(obs: Observation, spec: ConstellationSpec, cap: float | None = DEFAULT_CAP) -> np.ndarray:
    if obs.sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    n = len(obs)
    inv_s2 = 1.0 / obs.sigma2
    out = np.empty((n, spec.bits_per_symbol))
    cosets = _coset_index(spec)
    for sl in _chunks(n):
        dist = all_distances(obs[sl], spec)
        for i, (zero, one) in enumerate(cosets):
            out[sl, i] = (dist[:, one].min(axis=1) - dist[:, zero].min(axis=1)) * inv_s2
    return _clamp(out, cap)


def coset_minima_full(obs: Observation, spec: ConstellationSpec) -> np.ndarray:
    """Per-bit minimum distance over each coset, shape ``(N, log2 M, 2)``."""
    dist = all_distances(obs, spec)
    return np.stack(
        [np.stack([dist[:, zero].min(axis=1), dist[:, one].min(axis=1)], axis=-1) for zero, one in _coset_index(spec)],
        axis=1,
    )


def equalize(obs: Observation, spec: ConstellationSpec, eps_h: float = ERASURE_THRESHOLD) -> EqualizedObservation:
    """Map observations onto the integer grid: ``Y = y / (d_1d h) + (M-1)/2``.

    An axis with gain below ``eps_h`` is flagged invalid and its ``Y`` is NaN.
    """
    if not spec.is_lattice:
        raise UnsupportedAngleError("equalization onto the grid needs theta = arctan(1/sqrt(M))")
    offset = (spec.M - 1) / 2.0
    valid_i = obs.h_i >= eps_h
    valid_q = obs.h_q >= eps_h
    with np.errstate(divide="ignore", invalid="ignore"):
        Y_i = np.where(valid_i, obs.y_i * (1.0 / (spec.d_1d_min * obs.h_i)) + offset, np.nan)
        Y_q = np.where(valid_q, obs.y_q * (1.0 / (spec.d_1d_min * obs.h_q)) + offset, np.nan)
    return EqualizedObservation(Y_i, Y_q, valid_i, valid_q)


def window(Y, M: int, d: int) -> np.ndarray:
    """First grid value of the 2d-wide search window around ``Y``.

    The window is ``[lo, lo + 2d - 1]``, clamped to ``[0, M-1]``.
    """
    if d < 1 or 2 * d > M:
        raise ValueError(f"radius must satisfy 1 <= d <= M/2, got {d}")
    Y = np.asarray(Y, dtype=float)
    middle = np.floor(np.nan_to_num(Y)).astype(np.int64) - d + 1
    return np.where(Y < d, 0, np.where(Y >= M - d, M - 2 * d, middle))


def window_range(Y: float, M: int, d: int) -> range:
    lo = int(window(Y, M, d))
    return range(lo, lo + 2 * d)


def _radius(spec: ConstellationSpec, radius: int | None) -> int:
    return spec.U // 2 if radius is None else int(radius)


def candidates(eq: EqualizedObservation, spec: ConstellationSpec, radius: int | None = None) -> CandidateSet:
    """Candidate points for equalized observations with both axes valid."""
    d = _radius(spec, radius)
    offsets = np.arange(2 * d)
    lo_i = window(eq.Y_i, spec.M, d)
    lo_q = window(eq.Y_q, spec.M, d)
    t_i = lo_i.reshape(-1, 1) + offsets
    t_q = lo_q.reshape(-1, 1) + offsets
    points = np.concatenate([spec.point_from_t_i[t_i], spec.point_from_t_q[t_q]], axis=1)
    on_q = np.zeros(4 * d, dtype=bool)
    on_q[2 * d :] = True
    return CandidateSet(points, np.concatenate([t_i, t_q], axis=1), on_q, lo_i, lo_q)


def _grid_distance(g_i, Y_i, t_i, g_q, Y_q, t_q) -> np.ndarray:
    e_i = g_i * (Y_i - t_i)
    e_q = g_q * (Y_q - t_q)
    return e_i * e_i + e_q * e_q


def _coset_minima(dist: np.ndarray, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum of ``dist`` (N, C) over entries whose bit (N, C, k) is 0 / 1."""
    d = dist[:, :, None]
    min0 = np.where(bits == 0, d, np.inf).min(axis=1)
    min1 = np.where(bits == 1, d, np.inf).min(axis=1)
    return min0, min1


def sphere_coset_minima(
    obs: Observation, spec: ConstellationSpec, radius: int | None = None, eps_h: float = ERASURE_THRESHOLD
) -> tuple[np.ndarray, np.ndarray]:
    """Per-bit coset minima found by the sphere search, each of shape ``(N, log2 M)``.

    Rows with an erased axis use the 1D fallback over the whole grid; rows
    with both axes erased get zero for both minima.
    """
    n = len(obs)
    k = spec.bits_per_symbol
    min0 = np.zeros((n, k))
    min1 = np.zeros((n, k))
    eq = equalize(obs, spec, eps_h)
    g_i = spec.d_1d_min * obs.h_i
    g_q = spec.d_1d_min * obs.h_q

    both = np.flatnonzero(eq.valid_i & eq.valid_q)
    for start in range(0, both.size, _CHUNK):
        rows = both[start : start + _CHUNK]
        sub = EqualizedObservation(eq.Y_i[rows], eq.Y_q[rows], eq.valid_i[rows], eq.valid_q[rows])
        cand = candidates(sub, spec, radius)
        dist = _grid_distance(
            g_i[rows, None], sub.Y_i[:, None], spec.t_i[cand.points],
            g_q[rows, None], sub.Y_q[:, None], spec.t_q[cand.points],
        )
        min0[rows], min1[rows] = _coset_minima(dist, spec.bit_table[cand.points])

    grid = np.arange(spec.M)
    for valid, other, Y, g, point_of in (
        (eq.valid_i, eq.valid_q, eq.Y_i, g_i, spec.point_from_t_i),
        (eq.valid_q, eq.valid_i, eq.Y_q, g_q, spec.point_from_t_q),
    ):
        rows = np.flatnonzero(valid & ~other)
        if rows.size == 0:
            continue
        e = g[rows, None] * (Y[rows, None] - grid)
        dist = e * e
        bits = np.broadcast_to(spec.bit_table[point_of], (rows.size, spec.M, k))
        min0[rows], min1[rows] = _coset_minima(dist, bits)
    return min0, min1


def sphere_demap(
    obs: Observation,
    spec: ConstellationSpec,
    radius: int | None = None,
    cap: float | None = DEFAULT_CAP,
    eps_h: float = ERASURE_THRESHOLD,
) -> tuple[np.ndarray, OpCounters]:
    """Low-complexity max-log demapper on the projection grid.

    Equalize both axes, take the 2d grid values nearest each equalized
    observation (d = sqrt(M)/2 by default), score the 4d candidate points and
    apply max-log per bit. Every window of sqrt(M) consecutive grid values
    contains each level of the other axis once, so both values of every bit are
    always present among the candidates.

    If one axis is erased, a 1D max-log over the surviving axis is used. If
    both are erased the LLRs are zero.

    Returns the LLRs and the operation counts incurred.
    """
    if obs.sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    min0, min1 = sphere_coset_minima(obs, spec, radius, eps_h)
    with np.errstate(invalid="ignore"):
        llr = (min1 - min0) * (1.0 / obs.sigma2)
    llr = np.nan_to_num(llr, nan=0.0)

    valid_i = obs.h_i >= eps_h
    valid_q = obs.h_q >= eps_h
    n_both = int(np.count_nonzero(valid_i & valid_q))
    n_single = int(np.count_nonzero(valid_i ^ valid_q))
    counters = sphere_cost(spec.M, radius) * n_both + erasure_fallback_cost(spec.M) * n_single
    return _clamp(llr, cap), counters


def hard_decision(llr: np.ndarray) -> np.ndarray:
    return (np.asarray(llr) < 0).astype(np.int8)


def mmse_demap(obs: Observation, spec: ConstellationSpec, cap: float | None = DEFAULT_CAP) -> np.ndarray:
    """Linear MMSE equalization of ``diag(h_i, h_q) R(theta)`` then 1D max-log per axis.

    Each unrotated component has variance 1/2 and each noise component
    ``sigma2/2``; post-equalization interference is treated as Gaussian.
    """
    if obs.sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    h_i, h_q = obs.h_i.ravel(), obs.h_q.ravel()
    y = np.stack([obs.y_i.ravel(), obs.y_q.ravel()], axis=-1)
    H = np.empty((h_i.size, 2, 2))
    H[:, 0, 0], H[:, 0, 1] = h_i * c, -h_i * s
    H[:, 1, 0], H[:, 1, 1] = h_q * s, h_q * c
    Ht = H.transpose(0, 2, 1)
    A = Ht @ H + obs.sigma2 * np.eye(2)
    W = np.linalg.solve(A, Ht)
    s_hat = np.einsum("nij,nj->ni", W, y)
    G = W @ H
    mu = np.stack([G[:, 0, 0], G[:, 1, 1]], axis=-1)
    interference = 0.5 * np.stack([G[:, 0, 1] ** 2, G[:, 1, 0] ** 2], axis=-1)
    nu = interference + 0.5 * obs.sigma2 * (W**2).sum(axis=-1)

    levels = spec.beta_s * (-spec.U + 1 + 2 * np.arange(spec.U))
    word_bits = spec.labeling._unpack(spec.labeling.level_to_word)
    llr = np.zeros((h_i.size, spec.bits_per_symbol))
    usable = (mu > 1e-12) & (nu > 0)
    for axis, positions in enumerate((spec.labeling.i_positions, spec.labeling.q_positions)):
        dist = (s_hat[:, axis, None] - mu[:, axis, None] * levels) ** 2
        for j, pos in enumerate(positions):
            zero = word_bits[:, j] == 0
            d0 = dist[:, zero].min(axis=1)
            d1 = dist[:, ~zero].min(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                llr[:, pos] = np.where(usable[:, axis], (d1 - d0) / (2.0 * nu[:, axis]), 0.0)
    return _clamp(llr, cap)


# --- scalar, operation-counted reference implementations -------------------


def _check_scalar(obs: Observation) -> tuple[float, float, float, float]:
    if obs.y_i.size != 1:
        raise ValueError("counted demappers take a single observation")
    return obs.y_i.item(), obs.y_q.item(), obs.h_i.item(), obs.h_q.item()


def maxlog_full_counted(
    obs: Observation, spec: ConstellationSpec, cap: float | None = DEFAULT_CAP
) -> tuple[np.ndarray, OpCounters]:
    y_i, y_q, h_i, h_q = _check_scalar(obs)
    ops = Ops()
    inv_s2 = 1.0 / obs.sigma2
    z_i = spec.z.real.tolist()
    z_q = spec.z.imag.tolist()
    dist = []
    for k in range(spec.M):
        ops.candidate()
        e_i = ops.sub(y_i, ops.mul(h_i, z_i[k]))
        e_q = ops.sub(y_q, ops.mul(h_q, z_q[k]))
        dist.append(ops.add(ops.mul(e_i, e_i), ops.mul(e_q, e_q)))
    llr = np.empty(spec.bits_per_symbol)
    for i, (zero, one) in enumerate(_coset_index(spec)):
        best = []
        for coset in (zero, one):
            m = math.inf
            for k in coset.tolist():
                if ops.lt(dist[k], m):
                    m = dist[k]
            best.append(m)
        llr[i] = ops.mul(ops.sub(best[1], best[0]), inv_s2)
    return _clamp(llr, cap), ops.counters()


def sphere_demap_counted(
    obs: Observation,
    spec: ConstellationSpec,
    radius: int | None = None,
    cap: float | None = DEFAULT_CAP,
    eps_h: float = ERASURE_THRESHOLD,
) -> tuple[np.ndarray, OpCounters]:
    """Scalar sphere demapper that counts every real operation it executes.

    Gains are scaled by ``d_1d`` up front (a per-frame CSI constant), which
    makes the grid metric ``(g_i (Y_i - T_i))^2 + (g_q (Y_q - T_q))^2`` equal the
    plain 2D distance.
    """
    if not spec.is_lattice:
        raise UnsupportedAngleError("sphere demapping needs theta = arctan(1/sqrt(M))")
    y_i, y_q, h_i, h_q = _check_scalar(obs)
    M, k = spec.M, spec.bits_per_symbol
    d = _radius(spec, radius)
    ops = Ops()
    inv_s2 = 1.0 / obs.sigma2
    offset = (M - 1) / 2.0
    g_i = spec.d_1d_min * h_i
    g_q = spec.d_1d_min * h_q
    bits = spec.bit_table.tolist()
    valid_i, valid_q = h_i >= eps_h, h_q >= eps_h

    if not (valid_i or valid_q):
        return np.zeros(k), ops.counters()

    if valid_i and valid_q:
        # step 1: equalize
        Y_i = ops.add(ops.mul(y_i, ops.inv(g_i)), offset)
        Y_q = ops.add(ops.mul(y_q, ops.inv(g_q)), offset)
        # step 2: windows, both branch tests evaluated per axis
        entries = []
        for Y, point_of in ((Y_i, spec.point_from_t_i), (Y_q, spec.point_from_t_q)):
            below = ops.lt(Y, d)
            above = ops.ge(Y, M - d)
            lo = 0 if below else (M - 2 * d if above else math.floor(Y) - d + 1)
            for j in range(2 * d):
                entries.append(int(point_of[int(ops.add(lo, j))]))
        # step 3: grid distances
        t_i, t_q = spec.t_i, spec.t_q
        dist = []
        for p in entries:
            ops.candidate()
            e_i = ops.mul(g_i, ops.sub(Y_i, int(t_i[p])))
            e_q = ops.mul(g_q, ops.sub(Y_q, int(t_q[p])))
            dist.append(ops.add(ops.mul(e_i, e_i), ops.mul(e_q, e_q)))
    else:
        # one axis erased: 1D search over the whole surviving grid
        if valid_i:
            y, g, point_of = y_i, g_i, spec.point_from_t_i
        else:
            y, g, point_of = y_q, g_q, spec.point_from_t_q
        Y = ops.add(ops.mul(y, ops.inv(g)), offset)
        entries, dist = [], []
        for t in range(M):
            ops.candidate()
            e = ops.mul(g, ops.sub(Y, t))
            dist.append(ops.mul(e, e))
            entries.append(int(point_of[t]))
        llr = np.empty(k)
        for i in range(k):
            best = [math.inf, math.inf]
            for pos in range(M):
                b = bits[entries[pos]][i]
                if ops.lt(dist[pos], best[b]):
                    best[b] = dist[pos]
            llr[i] = ops.mul(ops.sub(best[1], best[0]), inv_s2)
        return _clamp(llr, cap), ops.counters()

    # step 4: global minimum, then the best complementary entry per bit
    best_pos = 0
    for pos in range(1, len(dist)):
        if ops.lt(dist[pos], dist[best_pos]):
            best_pos = pos
    d_best = dist[best_pos]
    best_bits = bits[entries[best_pos]]
    rest = [pos for pos in range(len(dist)) if pos != best_pos]
    llr = np.empty(k)
    for i in range(k):
        masked = [dist[pos] if bits[entries[pos]][i] != best_bits[i] else math.inf for pos in rest]
        comp = masked[0]
        for value in masked[1:]:
            if ops.lt(value, comp):
                comp = value
        if best_bits[i] == 0:
            llr[i] = ops.mul(ops.sub(comp, d_best), inv_s2)
        else:
            llr[i] = ops.mul(ops.sub(d_best, comp), inv_s2)
    return _clamp(llr, cap), ops.counters()
