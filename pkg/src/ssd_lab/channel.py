"""
Per-cell Rayleigh fading channel with erasures and complex AWGN.

Cells fade independently (ideal interleaving). An erased cell has gain exactly
zero. The receiver is given perfect CSI. Because of the Q delay, the I and Q
components of one rotated symbol ride neighbouring cells; :func:`transmit`
undoes that association so the demappers see one observation per symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class ChannelConfig:
    esn0_db: float
    erasure_prob: float = 0.0
    seed: int = 0
    fading: bool = True

    def __post_init__(self):
        if not math.isfinite(self.esn0_db):
            raise ValueError("esn0_db must be finite")
        if not (0.0 <= self.erasure_prob < 1.0):
            raise ValueError("erasure_prob must lie in [0, 1)")

    @property
    def sigma2(self) -> float:
        return sigma_from_esn0(self.esn0_db)


class ChannelRealization(NamedTuple):
    h: np.ndarray
    erased: np.ndarray


@dataclass
class Observation:
    """Received components of rotated symbols with their gains.

    All array fields share one shape; ``sigma2`` is the total complex noise
    variance (each component carries half of it).
    """

    y_i: np.ndarray
    y_q: np.ndarray
    h_i: np.ndarray
    h_q: np.ndarray
    sigma2: float

    def __post_init__(self):
        self.y_i = np.atleast_1d(np.asarray(self.y_i, dtype=float))
        self.y_q = np.atleast_1d(np.asarray(self.y_q, dtype=float))
        self.h_i = np.atleast_1d(np.asarray(self.h_i, dtype=float))
        self.h_q = np.atleast_1d(np.asarray(self.h_q, dtype=float))
        if np.any(self.h_i < 0) or np.any(self.h_q < 0):
            raise ValueError("fading gains must be non-negative")

    def __len__(self):
        return self.y_i.size

    def __getitem__(self, key) -> "Observation":
        return Observation(self.y_i[key], self.y_q[key], self.h_i[key], self.h_q[key], self.sigma2)

    @classmethod
    def concatenate(cls, observations) -> "Observation":
        observations = list(observations)
        sigma2 = observations[0].sigma2
        if any(o.sigma2 != sigma2 for o in observations):
            raise ValueError("observations must share the noise variance")
        return cls(
            np.concatenate([o.y_i for o in observations]),
            np.concatenate([o.y_q for o in observations]),
            np.concatenate([o.h_i for o in observations]),
            np.concatenate([o.h_q for o in observations]),
            sigma2,
        )


def sigma_from_esn0(esn0_db: float) -> float:
    """Complex noise variance for unit symbol energy."""
    return 10.0 ** (-esn0_db / 10.0)


def frame_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one work item, keyed by e.g. (point, frame).

    Depends only on ``seed`` and ``key``, so results do not depend on how
    frames are split among workers.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def sample_channel(config: ChannelConfig, n_cells: int, rng: np.random.Generator) -> ChannelRealization:
    """Draw i.i.d. Rayleigh gains (E[h^2] = 1) and per-cell erasures."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    if config.fading:
        h = np.sqrt(rng.exponential(1.0, n_cells))
    else:
        h = np.ones(n_cells)
    erased = rng.random(n_cells) < config.erasure_prob
    h[erased] = 0.0
    return ChannelRealization(h, erased)


def transmit(cells, realization: ChannelRealization, sigma2: float, rng: np.random.Generator) -> Observation:
    """Pass Q-delayed cells through the channel and re-associate components.

    ``cells[k]`` carries ``Re z[k] + j Im z[k-1]`` (cyclic). The returned
    observation ``k`` holds ``y_i`` from cell ``k`` and ``y_q`` from cell
    ``k+1`` together with the gains of those two cells.
    """
    cells = np.asarray(cells)
    h = np.asarray(realization.h)
    if cells.shape != h.shape:
        raise ValueError(f"cells {cells.shape} and channel {h.shape} lengths differ")
    std = math.sqrt(sigma2 / 2.0)
    noise = rng.standard_normal((2,) + cells.shape) * std
    r_i = h * cells.real + noise[0]
    r_q = h * cells.imag + noise[1]
    return Observation(
        y_i=r_i,
        y_q=np.roll(r_q, -1, axis=-1),
        h_i=h,
        h_q=np.roll(h, -1, axis=-1),
        sigma2=sigma2,
    )
