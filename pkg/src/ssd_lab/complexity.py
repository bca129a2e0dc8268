"""
Operation counts for the demappers.

Units: candidate points (cp), real multiplications (rm), real sums (rs,
additions or subtractions), real comparisons (rc) and real inversions (ri).
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

FIELDS = ("cp", "rm", "rs", "rc", "ri")


@dataclass(frozen=True)
class OpCounters:
    cp: int = 0
    rm: int = 0
    rs: int = 0
    rc: int = 0
    ri: int = 0

    def __post_init__(self):
        if any(v < 0 for v in astuple(self)):
            raise ValueError("operation counts are non-negative")

    def __add__(self, other: "OpCounters") -> "OpCounters":
        if not isinstance(other, OpCounters):
            return NotImplemented
        return OpCounters(*(a + b for a, b in zip(astuple(self), astuple(other))))

    def __mul__(self, k: int) -> "OpCounters":
        return OpCounters(*(int(k) * a for a in astuple(self)))

    __rmul__ = __mul__

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return astuple(self)

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Published complexity for DVB-T2 RCQD 256-QAM demapping.
TABLE_I = {
    "maxlog_full": OpCounters(256, 1032, 776, 2048, 0),
    "subregion": OpCounters(81, 332, 251, 648, 0),
    "mmse": OpCounters(16, 64, 48, 128, 6),
    "pd_dem": OpCounters(80, 390, 279, 231, 0),
    "sphere": OpCounters(32, 138, 138, 275, 2),
}

REFERENCE_ONLY = ("subregion", "mmse", "pd_dem")


class Ops:
    """Counted scalar arithmetic.

    Each method performs the operation and bumps the matching counter, so a
    demapper written against it reports what it actually executed.
    """

    def __init__(self):
        self.cp = self.rm = self.rs = self.rc = self.ri = 0

    def mul(self, a: float, b: float) -> float:
        self.rm += 1
        return a * b

    def add(self, a: float, b: float) -> float:
        self.rs += 1
        return a + b

    def sub(self, a: float, b: float) -> float:
        self.rs += 1
        return a - b

    def lt(self, a: float, b: float) -> bool:
        self.rc += 1
        return a < b

    def ge(self, a: float, b: float) -> bool:
        self.rc += 1
        return a >= b

    def inv(self, a: float) -> float:
        self.ri += 1
        return 1.0 / a

    def candidate(self, n: int = 1) -> None:
        self.cp += n

    def counters(self) -> OpCounters:
        return OpCounters(self.cp, self.rm, self.rs, self.rc, self.ri)


def _root(M: int) -> int:
    U = math.isqrt(M)
    if U < 2 or U * U != M or U & (U - 1):
        raise ValueError(f"M={M} is not a square power of two")
    return U


def sphere_cost(M: int, radius: int | None = None) -> OpCounters:
    """Per-symbol cost of the sphere demapper with window radius ``radius``.

    The default radius ``sqrt(M)/2`` gives 2*sqrt(M) candidates.
    """
    U = _root(M)
    d = U // 2 if radius is None else int(radius)
    n_cand = 4 * d
    k = int(math.log2(M))
    step1 = OpCounters(rm=2, rs=2, ri=2)
    step2 = OpCounters(rc=4, rs=n_cand)
    step3 = OpCounters(cp=n_cand, rm=4 * n_cand, rs=3 * n_cand)
    step4 = OpCounters(rc=(n_cand - 1) + (n_cand - 2) * k, rm=k, rs=k)
    return step1 + step2 + step3 + step4


def maxlog_cost(M: int) -> OpCounters:
    """Per-symbol cost of the exhaustive max-log demapper.

    Every bit scans both cosets from an open minimum, M comparisons per bit.
    """
    _root(M)
    k = int(math.log2(M))
    return OpCounters(cp=M, rm=4 * M + k, rs=3 * M + k, rc=M * k, ri=0)


def erasure_fallback_cost(M: int) -> OpCounters:
    """Per-symbol cost when one axis is erased: 1D max-log over all M grid points."""
    _root(M)
    k = int(math.log2(M))
    return OpCounters(cp=M, rm=1 + 2 * M + k, rs=1 + M + k, rc=M * k, ri=1)


def analytic_cost(M: int, algorithm: str, radius: int | None = None) -> OpCounters:
    """Closed-form cost of ``algorithm`` for one symbol.

    ``sphere`` and ``maxlog_full`` are defined for every supported M; the
    reference rows (``subregion``, ``mmse``, ``pd_dem``) only exist for M=256.
    """
    if algorithm == "sphere":
        return sphere_cost(M, radius)
    if algorithm == "maxlog_full":
        return maxlog_cost(M)
    if algorithm in REFERENCE_ONLY:
        if M != 256:
            raise ValueError(f"no published cost for {algorithm} at M={M}")
        return TABLE_I[algorithm]
    raise ValueError(f"unknown algorithm {algorithm!r}")


def sphere_closed_form(M: int) -> OpCounters:
    """The sphere cost written as the five published closed-form expressions."""
    U = _root(M)
    k = int(math.log2(M))
    return OpCounters(
        cp=2 * U,
        rm=8 * U + 2 + k,
        rs=8 * U + 2 + k,
        rc=5 + (2 * U - 2) * (1 + k),
        ri=2,
    )


@dataclass(frozen=True)
class Reduction:
    percent: float

    @property
    def nearest(self) -> int:
        return int(math.floor(self.percent + 0.5))

    @property
    def truncated(self) -> int:
        return int(math.floor(self.percent))


def reduction_report(a: OpCounters, b: OpCounters) -> dict[str, Reduction]:
    """Relative saving of ``a`` over ``b``, ``100 (1 - a/b)``, per field.

    Fields where ``b`` is zero are omitted.
    """
    out = {}
    for name in FIELDS:
        ref = getattr(b, name)
        if ref == 0:
            continue
        out[name] = Reduction(100.0 * (1.0 - getattr(a, name) / ref))
    return out
