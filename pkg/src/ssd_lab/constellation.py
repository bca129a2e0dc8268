"""
Rotated square QAM alphabets and the integer lattice behind them.

A square M-QAM point is indexed by its per-axis levels ``(p_i, p_q)``, each in
``0..U-1`` with ``U = sqrt(M)``. Rotating by ``theta = arctan(1/U)`` makes the
I and Q projections of the M points land on a uniform grid of M values, so a
point can be recovered from either projection alone. ``t_i``/``t_q`` are the
integer positions on that grid.

Bit labeling: each axis carries ``log2(U)`` bits with a binary-reflected Gray
code; even bit indices (0, 2, ...) drive the I axis and odd indices the Q axis,
both MSB first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64, 256)

# DVB-T2 rotation angles (degrees). 256-QAM uses exactly arctan(1/16).
_DVBT2_ANGLES_DEG = {4: 29.0, 16: 16.8, 64: 8.6}

# Tolerance used to decide whether an angle is the lattice angle arctan(1/U).
_ANGLE_TOL = 1e-12


class UnsupportedAngleError(ValueError):
    """Raised when a lattice operation is used with a non-lattice rotation."""


class SymbolIndex(NamedTuple):
    p_i: np.ndarray | int
    p_q: np.ndarray | int


class RotatedPoint(NamedTuple):
    z_i: np.ndarray | float
    z_q: np.ndarray | float

    @property
    def complex(self):
        return np.asarray(self.z_i) + 1j * np.asarray(self.z_q)


class LatticeCoord(NamedTuple):
    t_i: np.ndarray | int
    t_q: np.ndarray | int
    d_1d_min: float


def _check_order(M: int) -> int:
    if M not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported modulation order M={M}; expected one of {SUPPORTED_ORDERS}")
    return math.isqrt(M)


def angle_for(M: int) -> float:
    """Lattice rotation angle ``arctan(1/sqrt(M))`` in radians."""
    U = _check_order(M)
    return math.atan(1.0 / U)


def dvbt2_angle(M: int) -> float:
    """DVB-T2 rotation angle in radians (the comparison baseline)."""
    _check_order(M)
    if M == 256:
        return math.atan(1.0 / 16.0)
    return math.radians(_DVBT2_ANGLES_DEG[M])


def gray_code(nbits: int) -> np.ndarray:
    """Gray codeword of every level, ``level ^ (level >> 1)``."""
    levels = np.arange(1 << nbits)
    return levels ^ (levels >> 1)


@dataclass(frozen=True)
class BitLabeling:
    """Per-axis Gray labeling and the I/Q split of the bit positions."""

    bits_per_axis: int

    @property
    def bits_per_symbol(self) -> int:
        return 2 * self.bits_per_axis

    @property
    def i_positions(self) -> np.ndarray:
        return np.arange(0, self.bits_per_symbol, 2)

    @property
    def q_positions(self) -> np.ndarray:
        return np.arange(1, self.bits_per_symbol, 2)

    @cached_property
    def level_to_word(self) -> np.ndarray:
        return gray_code(self.bits_per_axis)

    @cached_property
    def word_to_level(self) -> np.ndarray:
        inverse = np.empty_like(self.level_to_word)
        inverse[self.level_to_word] = np.arange(self.level_to_word.size)
        return inverse

    def _word(self, bits: np.ndarray) -> np.ndarray:
        weights = 1 << np.arange(self.bits_per_axis - 1, -1, -1)
        return bits.astype(np.int64) @ weights

    def _unpack(self, word: np.ndarray) -> np.ndarray:
        shifts = np.arange(self.bits_per_axis - 1, -1, -1)
        return (np.asarray(word)[..., None] >> shifts) & 1

    def levels(self, bits: np.ndarray) -> SymbolIndex:
        """Bit array of shape ``(..., log2 M)`` to per-axis levels."""
        bits = np.asarray(bits)
        if bits.shape[-1] != self.bits_per_symbol:
            raise ValueError(
                f"expected {self.bits_per_symbol} bits per symbol, got {bits.shape[-1]}"
            )
        p_i = self.word_to_level[self._word(bits[..., self.i_positions])]
        p_q = self.word_to_level[self._word(bits[..., self.q_positions])]
        return SymbolIndex(p_i, p_q)

    def bits(self, p_i, p_q) -> np.ndarray:
        """Per-axis levels to a bit array of shape ``(..., log2 M)``."""
        p_i = np.asarray(p_i)
        p_q = np.asarray(p_q)
        out = np.empty(np.broadcast(p_i, p_q).shape + (self.bits_per_symbol,), dtype=np.int8)
        out[..., self.i_positions] = self._unpack(self.level_to_word[p_i])
        out[..., self.q_positions] = self._unpack(self.level_to_word[p_q])
        return out


@dataclass(frozen=True)
class ConstellationSpec:
    """Static geometry of a rotated square QAM alphabet.

    Point tables are indexed by ``k = p_i * U + p_q``.
    """

    M: int
    beta_s: float
    theta: float
    labeling: BitLabeling = field(repr=False)

    @property
    def U(self) -> int:
        return math.isqrt(self.M)

    @property
    def bits_per_symbol(self) -> int:
        return self.labeling.bits_per_symbol

    @property
    def is_lattice(self) -> bool:
        """True when ``theta`` is the lattice angle ``arctan(1/U)``."""
        return abs(self.theta - math.atan(1.0 / self.U)) <= _ANGLE_TOL

    @property
    def d_1d_min(self) -> float:
        """Spacing of the projected points for the lattice angle, ``2 beta_s sin(theta)``."""
        return 2.0 * self.beta_s * math.sin(self.theta)

    @cached_property
    def p_i(self) -> np.ndarray:
        return np.repeat(np.arange(self.U), self.U)

    @cached_property
    def p_q(self) -> np.ndarray:
        return np.tile(np.arange(self.U), self.U)

    @cached_property
    def s(self) -> np.ndarray:
        """Unrotated points, complex, shape ``(M,)``."""
        return level_amplitude(self, self.p_i) + 1j * level_amplitude(self, self.p_q)

    @cached_property
    def z(self) -> np.ndarray:
        """Rotated points, complex, shape ``(M,)``."""
        return self.s * np.exp(1j * self.theta)

    @cached_property
    def bit_table(self) -> np.ndarray:
        """``bit_table[k, i]`` is bit ``b_i`` of point ``k``."""
        return self.labeling.bits(self.p_i, self.p_q)

    @cached_property
    def t_i(self) -> np.ndarray:
        self._require_lattice()
        return self.U * self.p_i + (self.U - 1 - self.p_q)

    @cached_property
    def t_q(self) -> np.ndarray:
        self._require_lattice()
        return self.U * self.p_q + self.p_i

    @cached_property
    def point_from_t_i(self) -> np.ndarray:
        inverse = np.empty(self.M, dtype=np.int64)
        inverse[self.t_i] = np.arange(self.M)
        return inverse

    @cached_property
    def point_from_t_q(self) -> np.ndarray:
        inverse = np.empty(self.M, dtype=np.int64)
        inverse[self.t_q] = np.arange(self.M)
        return inverse

    def _require_lattice(self) -> None:
        if not self.is_lattice:
            raise UnsupportedAngleError(
                f"lattice coordinates need theta = arctan(1/{self.U}), got {self.theta!r}"
            )


def normalization(M: int) -> float:
    """Scale giving the unrotated square alphabet unit average energy."""
    U = math.isqrt(M)
    if U * U != M:
        raise ValueError(f"M={M} is not a square")
    # mean of (2p - U + 1)^2 over p is (M - 1)/3 per axis
    return 1.0 / math.sqrt(2.0 * (M - 1) / 3.0)


def build_spec(M: int, theta: float) -> ConstellationSpec:
    """Build a rotated alphabet with unit average energy and default Gray labeling.

    ``theta = 0`` is accepted for the unrotated reference alphabet.
    """
    U = _check_order(M)
    if not (0.0 <= theta <= math.pi / 4 + 1e-15):
        raise ValueError(f"theta must lie in [0, pi/4], got {theta!r}")
    labeling = BitLabeling(bits_per_axis=int(math.log2(U)))
    return ConstellationSpec(M=M, beta_s=normalization(M), theta=float(theta), labeling=labeling)


def level_amplitude(spec: ConstellationSpec, p) -> np.ndarray:
    return spec.beta_s * (-spec.U + 1 + 2 * np.asarray(p))


def rotate(spec: ConstellationSpec, s_i, s_q) -> RotatedPoint:
    c, sn = math.cos(spec.theta), math.sin(spec.theta)
    s_i = np.asarray(s_i)
    s_q = np.asarray(s_q)
    return RotatedPoint(s_i * c - s_q * sn, s_i * sn + s_q * c)


def map_bits(spec: ConstellationSpec, bits) -> RotatedPoint:
    """Bits of shape ``(..., log2 M)`` to rotated points."""
    p_i, p_q = spec.labeling.levels(bits)
    return rotate(spec, level_amplitude(spec, p_i), level_amplitude(spec, p_q))


def map_levels(spec: ConstellationSpec, p_i, p_q) -> RotatedPoint:
    return rotate(spec, level_amplitude(spec, p_i), level_amplitude(spec, p_q))


def lattice_amplitudes(spec: ConstellationSpec, p_i, p_q) -> RotatedPoint:
    """Rotated amplitudes written as digits on the projection grid.

    Agrees with :func:`rotate` only for the lattice angle.
    """
    spec._require_lattice()
    U, M = spec.U, spec.M
    p_i = np.asarray(p_i)
    p_q = np.asarray(p_q)
    offset = -(M - 1) / 2.0
    z_i = (offset + (U * p_i + (U - 1 - p_q))) * spec.d_1d_min
    z_q = (offset + (U * p_q + p_i)) * spec.d_1d_min
    return RotatedPoint(z_i, z_q)


def lattice_coords(spec: ConstellationSpec, p_i, p_q) -> LatticeCoord:
    spec._require_lattice()
    U = spec.U
    p_i = np.asarray(p_i)
    p_q = np.asarray(p_q)
    if np.any((p_i < 0) | (p_i >= U) | (p_q < 0) | (p_q >= U)):
        raise ValueError(f"levels must lie in [0, {U - 1}]")
    return LatticeCoord(U * p_i + (U - 1 - p_q), U * p_q + p_i, spec.d_1d_min)


def t_from_amplitude(spec: ConstellationSpec, z) -> np.ndarray:
    """Projection amplitude to its (real-valued) grid position."""
    spec._require_lattice()
    return np.asarray(z) / spec.d_1d_min + (spec.M - 1) / 2.0


def _check_t(spec: ConstellationSpec, t) -> np.ndarray:
    spec._require_lattice()
    t = np.asarray(t)
    if not np.issubdtype(t.dtype, np.integer):
        if np.any(t != np.round(t)):
            raise ValueError("grid positions must be integers")
        t = t.astype(np.int64)
    if np.any((t < 0) | (t >= spec.M)):
        raise ValueError(f"grid position out of range [0, {spec.M - 1}]")
    return t


def coords_from_t_i(spec: ConstellationSpec, t_i) -> SymbolIndex:
    """Recover ``(p_i, p_q)`` from the I-axis grid position.

    The most significant base-U digit is ``p_i``, the least ``U-1-p_q``.
    """
    t_i = _check_t(spec, t_i)
    shift = spec.U.bit_length() - 1
    mask = spec.U - 1
    return SymbolIndex(t_i >> shift, mask - (t_i & mask))


def coords_from_t_q(spec: ConstellationSpec, t_q) -> SymbolIndex:
    """Recover ``(p_i, p_q)`` from the Q-axis grid position."""
    t_q = _check_t(spec, t_q)
    shift = spec.U.bit_length() - 1
    mask = spec.U - 1
    return SymbolIndex(t_q & mask, t_q >> shift)


def q_delay(z) -> np.ndarray:
    """Cyclic Q delay over one block: cell k carries Re z[k] and Im z[k-1]."""
    z = np.asarray(z)
    if z.size == 0:
        raise ValueError("q_delay needs a non-empty block")
    return z.real + 1j * np.roll(z.imag, 1, axis=-1)


def q_undelay(x) -> np.ndarray:
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("q_undelay needs a non-empty block")
    return x.real + 1j * np.roll(x.imag, -1, axis=-1)
