"""
Monte-Carlo harness: bits -> (LDPC) -> rotated QAM -> Q delay -> fading/erasure
channel -> demapper -> (min-sum) -> error counting.

Every frame draws from its own generator keyed by ``(seed, point, frame)``, and
the stop rule is evaluated only between fixed-size batches, so reports do not
depend on the number of workers.
"""

from __future__ import annotations

import hashlib
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from multiprocessing import get_context

import numpy as np
from scipy.stats import binomtest

from . import complexity
from .channel import ChannelConfig, Observation, frame_rng, sample_channel, transmit
from .constellation import (
    ConstellationSpec,
    angle_for,
    build_spec,
    dvbt2_angle,
    map_bits,
    q_delay,
)
from .demap import (
    DEFAULT_CAP,
    hard_decision,
    llr_exact,
    llr_maxlog_full,
    maxlog_full_counted,
    mmse_demap,
    sphere_demap,
    sphere_demap_counted,
)
from .fec import DecoderConfig, ParityCheckMatrix, default_code, encode, load_alist, minsum_decode

DEMAPPERS = ("exact", "maxlog", "sphere", "mmse")


class ConfigError(ValueError):
    pass


def parse_grid(text: str) -> tuple[float, ...]:
    """``"a:b:step"`` (inclusive) or a comma separated list of dB values."""
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, step = (float(t) for t in text.split(":"))
            if step <= 0 or b < a:
                raise ConfigError(f"bad grid {text!r}")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            return tuple(round(a + i * step, 10) for i in range(count))
        values = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad Es/N0 grid {text!r}") from exc
    if not values:
        raise ConfigError("empty Es/N0 grid")
    return values


@dataclass(frozen=True)
class SimConfig:
    M: int = 16
    angle: str = "proposed"
    demapper: str = "sphere"
    reference: str = "maxlog"
    esn0: tuple[float, ...] = (10.0,)
    erasure: float = 0.0
    fading: bool = True
    ldpc: str | None = None
    frames: int = 1000
    stop_at_errors: int = 200
    frame_symbols: int = 1000
    batch_frames: int = 100
    max_iters: int = 25
    llr_cap: float | None = DEFAULT_CAP
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.M not in (4, 16, 64, 256):
            raise ConfigError(f"unsupported M={self.M}")
        if self.demapper not in DEMAPPERS or self.reference not in DEMAPPERS:
            raise ConfigError(f"demapper must be one of {DEMAPPERS}")
        if not self.esn0:
            raise ConfigError("Es/N0 grid must be non-empty")
        if self.frames < 1 or self.batch_frames < 1 or self.frame_symbols < 1:
            raise ConfigError("frames, batch_frames and frame_symbols must be >= 1")
        if not (0.0 <= self.erasure < 1.0):
            raise ConfigError("erasure must lie in [0, 1)")
        if self.workers < 1 or self.max_iters < 1 or self.stop_at_errors < 1:
            raise ConfigError("workers, max_iters and stop_at_errors must be >= 1")
        if "sphere" in (self.demapper, self.reference) and not self.spec().is_lattice:
            raise ConfigError("the sphere demapper needs the proposed rotation angle")

    @property
    def theta(self) -> float:
        if self.angle == "proposed":
            return angle_for(self.M)
        if self.angle == "dvbt2":
            return dvbt2_angle(self.M)
        if self.angle == "none":
            return 0.0
        try:
            return float(self.angle)
        except ValueError:
            raise ConfigError(f"angle must be proposed, dvbt2, none or radians, got {self.angle!r}") from None

    @property
    def coded(self) -> bool:
        return self.ldpc is not None

    def spec(self) -> ConstellationSpec:
        try:
            return build_spec(self.M, self.theta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def digest(self) -> str:
        canonical = ";".join(f"{k}={v!r}" for k, v in sorted(self.echo().items()) if k != "workers")
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def echo(self) -> dict:
        return asdict(self)


_CONFIG_TYPES = {f.name: f.type for f in fields(SimConfig)}
_KEY_ALIASES = {"m": "M", "esn0_db": "esn0", "erasure_prob": "erasure"}


def _coerce(key: str, value):
    if key == "esn0":
        return parse_grid(value) if isinstance(value, str) else tuple(float(v) for v in value)
    if not isinstance(value, str):
        return value
    raw = value.strip()
    try:
        if key in ("M", "frames", "stop_at_errors", "frame_symbols", "batch_frames", "max_iters", "seed", "workers"):
            return int(raw)
        if key == "erasure":
            return float(raw)
        if key == "fading":
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if key == "llr_cap":
            return None if raw.lower() == "none" else float(raw)
        if key == "ldpc":
            return None if raw.lower() in ("", "none") else raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return raw


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` text with ``#`` comments."""
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def make_config(values: dict | None = None, **overrides) -> SimConfig:
    merged = {}
    for source in (values or {}, overrides):
        for key, value in source.items():
            if value is None and key != "ldpc":
                continue
            key = _KEY_ALIASES.get(key, key).replace("-", "_")
            if key not in _CONFIG_TYPES:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = _coerce(key, value)
    try:
        return SimConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# --- statistics --------------------------------------------------------------


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(int(errors), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class PointResult:
    esn0_db: float
    bit_errors: int
    bits: int
    frames: int
    frame_errors: int
    elapsed: float = field(default=0.0, compare=False)
    per_frame: tuple[int, ...] = field(default=(), repr=False, compare=False)  # bit errors by frame index

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.bit_errors, self.bits)


@dataclass
class SimReport:
    config: SimConfig
    points: list[PointResult]

    @property
    def esn0(self) -> np.ndarray:
        return np.array([p.esn0_db for p in self.points])

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        _provenance(buf, "ber", self.config)
        buf.write("esn0_db,bit_errors,bits,ber,ci_low,ci_high,frames,frame_errors\n")
        for p in self.points:
            lo, hi = p.ci
            buf.write(
                f"{fmt(p.esn0_db)},{p.bit_errors},{p.bits},{fmt(p.ber)},{fmt(lo)},{fmt(hi)},{p.frames},{p.frame_errors}\n"
            )
        return buf.getvalue()


def fmt(x: float) -> str:
    return format(float(x), ".6g")


def _provenance(buf, command: str, config: SimConfig) -> None:
    buf.write(f"# ssd-lab {command} seed={config.seed} config={config.digest()}\n")


def snr_at_ber(esn0: np.ndarray, ber: np.ndarray, target: float) -> float:
    """Es/N0 where the curve first crosses ``target`` (log-BER linear interpolation).

    Returns NaN if the curve never crosses.
    """
    esn0 = np.asarray(esn0, dtype=float)
    ber = np.asarray(ber, dtype=float)
    for j in range(len(ber) - 1):
        a, b = ber[j], ber[j + 1]
        if a >= target > b or (a > target >= b):
            if b <= 0:
                return float(esn0[j + 1])
            la, lb, lt = math.log10(a), math.log10(b), math.log10(target)
            return float(esn0[j] + (la - lt) / (la - lb) * (esn0[j + 1] - esn0[j]))
    return math.nan


def paired_crossing_bootstrap(
    a: SimReport, b: SimReport, target: float, n_boot: int = 1000, seed: int = 0
) -> tuple[float, np.ndarray]:
    """Difference of the ``target`` crossings, ``a - b``, and its bootstrap replicates.

    Both reports must share the grid, the frame counts and the seed, so frame
    ``f`` of a grid point saw the same channel in both runs. Frames are
    resampled jointly (Poisson weights), which keeps that pairing.
    """
    if len(a.points) != len(b.points):
        raise ValueError("reports cover different grids")
    rng = np.random.default_rng(seed)
    esn0 = a.esn0
    ber_a = np.empty((n_boot, len(esn0)))
    ber_b = np.empty_like(ber_a)
    for j, (pa, pb) in enumerate(zip(a.points, b.points)):
        if pa.esn0_db != pb.esn0_db or pa.frames != pb.frames or len(pa.per_frame) != pa.frames:
            raise ValueError("reports are not paired frame by frame")
        w = rng.poisson(1.0, (n_boot, pa.frames)).astype(float)
        bits_per_frame = pa.bits / pa.frames
        total = w.sum(axis=1) * bits_per_frame
        ber_a[:, j] = w @ np.asarray(pa.per_frame, dtype=float) / total
        ber_b[:, j] = w @ np.asarray(pb.per_frame, dtype=float) / total
    point = snr_at_ber(esn0, a.ber, target) - snr_at_ber(esn0, b.ber, target)
    reps = np.array([snr_at_ber(esn0, x, target) - snr_at_ber(esn0, y, target) for x, y in zip(ber_a, ber_b)])
    return point, reps


# --- the chain ----------------------------------------------------------------


def demap(name: str, obs: Observation, spec: ConstellationSpec, cap: float | None) -> np.ndarray:
    if name == "sphere":
        return sphere_demap(obs, spec, cap=cap)[0]
    if name == "maxlog":
        return llr_maxlog_full(obs, spec, cap=cap)
    if name == "exact":
        return llr_exact(obs, spec, cap=cap)
    if name == "mmse":
        return mmse_demap(obs, spec, cap=cap)
    raise ConfigError(f"unknown demapper {name!r}")


def _code(config: SimConfig) -> ParityCheckMatrix | None:
    if config.ldpc is None:
        return None
    if config.ldpc == "default":
        return default_code()
    return load_alist(config.ldpc)


_CODE_CACHE: dict[str, ParityCheckMatrix | None] = {}


def _cached_code(config: SimConfig) -> ParityCheckMatrix | None:
    key = str(config.ldpc)
    if key not in _CODE_CACHE:
        _CODE_CACHE[key] = _code(config)
    return _CODE_CACHE[key]


@dataclass
class _FrameData:
    payload: np.ndarray  # bits whose errors are counted
    tx_bits: np.ndarray  # bits on the channel
    obs: Observation


def _make_frame(config: SimConfig, spec: ConstellationSpec, code, esn0: float, point: int, frame: int) -> _FrameData:
    rng = frame_rng(config.seed, point, frame)
    kb = spec.bits_per_symbol
    if code is None:
        tx = rng.integers(0, 2, (config.frame_symbols, kb), dtype=np.int8)
        payload = tx.reshape(-1)
    else:
        payload = rng.integers(0, 2, code.k, dtype=np.uint8)
        tx = encode(code, payload).reshape(-1, kb)
    z = map_bits(spec, tx).complex
    channel = ChannelConfig(esn0_db=esn0, erasure_prob=config.erasure, seed=config.seed, fading=config.fading)
    realization = sample_channel(channel, z.size, rng)
    obs = transmit(q_delay(z), realization, channel.sigma2, rng)
    return _FrameData(payload, tx, obs)


def _run_frames(config: SimConfig, esn0: float, point: int, frames: list[int]) -> list[int]:
    """Bit errors per frame for the given frame indices."""
    spec = config.spec()
    code = _cached_code(config)
    if code is not None and code.n % spec.bits_per_symbol:
        raise ConfigError(f"code length {code.n} is not a multiple of {spec.bits_per_symbol}")
    data = [_make_frame(config, spec, code, esn0, point, f) for f in frames]
    llr = demap(config.demapper, Observation.concatenate(d.obs for d in data), spec, config.llr_cap)
    if code is None:
        decided = hard_decision(llr).reshape(len(frames), -1)
        payload = np.stack([d.payload for d in data])
        return (decided != payload).sum(axis=1).tolist()
    result = minsum_decode(code, llr.reshape(len(frames), code.n), DecoderConfig(max_iters=config.max_iters))
    payload = np.stack([d.payload for d in data])
    return (result.bits[:, : code.k] != payload).sum(axis=1).tolist()


def _split(items: list[int], parts: int) -> list[list[int]]:
    size = math.ceil(len(items) / parts)
    return [items[i : i + size] for i in range(0, len(items), size)]


def run_ber(config: SimConfig) -> SimReport:
    """Simulate every grid point until ``frames`` frames or ``stop_at_errors`` frame errors."""
    code = _cached_code(config)
    bits_per_frame = code.k if code is not None else config.frame_symbols * config.spec().bits_per_symbol
    pool = None
    if config.workers > 1:
        pool = ProcessPoolExecutor(max_workers=config.workers, mp_context=get_context("fork"))
    points = []
    try:
        for point, esn0 in enumerate(config.esn0):
            start = time.perf_counter()
            done = bit_errors = frame_errors = 0
            per_frame_all: list[int] = []
            while done < config.frames and frame_errors < config.stop_at_errors:
                batch = list(range(done, min(config.frames, done + config.batch_frames)))
                if pool is None:
                    per_frame = _run_frames(config, esn0, point, batch)
                else:
                    chunks = _split(batch, config.workers)
                    futures = [pool.submit(_run_frames, config, esn0, point, chunk) for chunk in chunks]
                    per_frame = [e for fut in futures for e in fut.result()]
                per_frame_all += per_frame
                bit_errors += sum(per_frame)
                frame_errors += sum(1 for e in per_frame if e)
                done += len(batch)
            points.append(
                PointResult(
                    esn0, bit_errors, done * bits_per_frame, done, frame_errors,
                    time.perf_counter() - start, tuple(per_frame_all),
                )
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return SimReport(config, points)


# --- LLR comparison -----------------------------------------------------------


@dataclass
class LlrComparison:
    esn0_db: float
    llr: np.ndarray
    ref_llr: np.ndarray

    @property
    def agree(self) -> np.ndarray:
        return np.sign(self.llr) == np.sign(self.ref_llr)

    @property
    def agreement_rate(self) -> float:
        return float(self.agree.mean())

    @property
    def delta(self) -> np.ndarray:
        return self.llr - self.ref_llr

    def quantiles(self, qs=(0.5, 0.9, 0.99, 1.0)) -> dict[float, float]:
        return {q: float(np.quantile(np.abs(self.delta), q)) for q in qs}


@dataclass
class LlrCompareReport:
    config: SimConfig
    points: list[LlrComparison]

    def to_csv(self) -> str:
        buf = io.StringIO()
        _provenance(buf, "llr-compare", self.config)
        buf.write("demapper,bit,llr,ref_llr,agree\n")
        name = self.config.demapper
        for p in self.points:
            kb = p.llr.shape[1]
            agree = p.agree
            for row in range(p.llr.shape[0]):
                for bit in range(kb):
                    buf.write(f"{name},{bit},{fmt(p.llr[row, bit])},{fmt(p.ref_llr[row, bit])},{int(agree[row, bit])}\n")
        return buf.getvalue()


def _compare_frames(config: SimConfig, esn0: float, point: int, frames: list[int]) -> tuple[np.ndarray, np.ndarray]:
    spec = config.spec()
    uncoded = replace(config, ldpc=None)
    data = [_make_frame(uncoded, spec, None, esn0, point, f) for f in frames]
    obs = Observation.concatenate(d.obs for d in data)
    return demap(config.demapper, obs, spec, config.llr_cap), demap(config.reference, obs, spec, config.llr_cap)


def run_llr_compare(config: SimConfig) -> LlrCompareReport:
    """Demap the same uncoded observations with ``demapper`` and ``reference``.

    ``frames * frame_symbols`` symbols are drawn per grid point.
    """
    points = []
    for point, esn0 in enumerate(config.esn0):
        llr, ref = [], []
        for start in range(0, config.frames, config.batch_frames):
            batch = list(range(start, min(config.frames, start + config.batch_frames)))
            a, b = _compare_frames(config, esn0, point, batch)
            llr.append(a)
            ref.append(b)
        points.append(LlrComparison(esn0, np.concatenate(llr), np.concatenate(ref)))
    return LlrCompareReport(config, points)


# --- operation counts and constellation dump ----------------------------------


@dataclass
class CountRow:
    algorithm: str
    counters: complexity.OpCounters
    source: str


def measured_cost(M: int, algorithm: str, n_symbols: int = 64, seed: int = 0) -> complexity.OpCounters:
    """Per-call counters of the scalar counted demapper, checked to be input independent.

    Inputs span clamped and interior windows (Es/N0 from 0 to 40 dB, no erasures).
    """
    spec = build_spec(M, angle_for(M))
    counted = sphere_demap_counted if algorithm == "sphere" else maxlog_full_counted
    rng = np.random.default_rng(seed)
    per_call = set()
    for j in range(n_symbols):
        esn0 = 40.0 * j / max(1, n_symbols - 1)
        bits = rng.integers(0, 2, (1, spec.bits_per_symbol))
        z = map_bits(spec, bits).complex
        channel = ChannelConfig(esn0)
        realization = sample_channel(channel, 1, rng)
        obs = transmit(z, realization, channel.sigma2, rng)
        per_call.add(counted(obs, spec)[1])
    if len(per_call) != 1:
        raise RuntimeError(f"{algorithm} counters vary with the input: {per_call}")
    return per_call.pop()


def run_count_ops(config: SimConfig, n_symbols: int = 64) -> list[CountRow]:
    M = config.M
    rows = []
    for algorithm in ("sphere", "maxlog_full"):
        rows.append(CountRow(algorithm, complexity.analytic_cost(M, algorithm), "analytic"))
        rows.append(CountRow(algorithm, measured_cost(M, algorithm, n_symbols, config.seed), "measured"))
        if M == 256:
            rows.append(CountRow(algorithm, complexity.TABLE_I[algorithm], "published"))
    if M == 256:
        for algorithm in complexity.REFERENCE_ONLY:
            rows.append(CountRow(algorithm, complexity.TABLE_I[algorithm], "published"))
    return rows


def count_ops_csv(config: SimConfig, rows: list[CountRow]) -> str:
    buf = io.StringIO()
    _provenance(buf, "count-ops", config)
    buf.write("algorithm,cp,rm,rs,rc,ri,source\n")
    for row in rows:
        c = row.counters
        buf.write(f"{row.algorithm},{c.cp},{c.rm},{c.rs},{c.rc},{c.ri},{row.source}\n")
    return buf.getvalue()


def dump_constellation(config: SimConfig) -> str:
    """One row per point, ordered by ``(p_i, p_q)``; grid columns are empty off the lattice angle."""
    spec = config.spec()
    buf = io.StringIO()
    _provenance(buf, "dump-constellation", config)
    buf.write("p_i,p_q,bits,s_i,s_q,z_i,z_q,t_i,t_q\n")
    lattice = spec.is_lattice
    for k in range(spec.M):
        bits = "".join(str(b) for b in spec.bit_table[k])
        t = f"{spec.t_i[k]},{spec.t_q[k]}" if lattice else ","
        buf.write(
            f"{spec.p_i[k]},{spec.p_q[k]},{bits},{fmt(spec.s[k].real)},{fmt(spec.s[k].imag)},"
            f"{fmt(spec.z[k].real)},{fmt(spec.z[k].imag)},{t}\n"
        )
    return buf.getvalue()
