"""Piecewise evolution: free segments interleaved with instantaneous rotations of S."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Union

import numpy as np
import scipy.linalg

from .exceptions import InvalidArgumentError, TruncationError
from .model import CouplingParams
from .observables import SqueezingTrace, collective_moments
from .propagate import DEFAULT_CONFIG, Evolver, PropagatorConfig
from .spin_ops import SparseHermitianOperator, SpinSystem, apply_on_s, spin_matrix

WINDOW_TAIL_TOL = 1e-8


@dataclass(frozen=True)
class Free:
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise InvalidArgumentError(f"free duration must be >= 0, got {self.duration}")


@dataclass(frozen=True)
class Rotate:
    axis: str
    angle: float

    def __post_init__(self):
        if self.axis not in ("x", "y", "z"):
            raise InvalidArgumentError(f"rotation axis must be x, y or z; got {self.axis!r}")


Segment = Union[Free, Rotate]


@dataclass(frozen=True)
class PulseSequence:
    """Segments in execution order; ``period_segments`` marks stroboscopic boundaries."""

    segments: tuple[Segment, ...]
    scheme: str = "custom"
    period: float = 0.0
    period_segments: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments if isinstance(s, Free)))

    @property
    def n_periods(self) -> int:
        return len(self.segments) // self.period_segments if self.period_segments else 0

    def census(self) -> dict[tuple[str, float], int]:
        counts: dict[tuple[str, float], int] = {}
        for s in self.segments:
            if isinstance(s, Rotate):
                counts[(s.axis, s.angle)] = counts.get((s.axis, s.angle), 0) + 1
        return counts

    def repeat(self, n: int) -> "PulseSequence":
        return replace(self, segments=self.segments * n)

    def to_dict(self) -> dict:
        segs = [{"type": "free", "duration": s.duration} if isinstance(s, Free)
                else {"type": "rotate", "axis": s.axis, "angle": s.angle} for s in self.segments]
        return {"scheme": self.scheme, "period": self.period, "period_segments": self.period_segments,
                "meta": self.meta, "segments": segs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSequence":
        segs = []
        for s in d["segments"]:
            if s["type"] == "free":
                segs.append(Free(float(s["duration"])))
            elif s["type"] == "rotate":
                segs.append(Rotate(s["axis"], float(s["angle"])))
            else:
                raise InvalidArgumentError(f"unknown segment type {s['type']!r}")
        return cls(tuple(segs), d.get("scheme", "custom"), float(d.get("period", 0.0)),
                   int(d.get("period_segments", 0)), dict(d.get("meta", {})))

    @classmethod
    def from_json(cls, text: str) -> "PulseSequence":
        return cls.from_dict(json.loads(text))


def default_dt(params: CouplingParams, n_j: int) -> float:
    """4 pi / (n_j |g_z|): the large precession g_z J S_z then completes 2 pi per segment."""
    return 4 * np.pi / (n_j * abs(params.g_z))


def echo_sequence(n_pulses: int, dt: float, allow_odd: bool = False) -> PulseSequence:
    """``n_pulses`` blocks of [Free(dt), Rotate(y, pi)]; a period is two blocks."""
    if n_pulses < 0 or (n_pulses % 2 and not allow_odd):
        raise InvalidArgumentError("echo needs an even number of pulses (pairs restore the orientation)")
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    block = (Free(dt), Rotate("y", np.pi))
    return PulseSequence(block * n_pulses, "echo", 2 * dt, 4, {"dt": dt})


def tat_period(dt: float) -> tuple[Segment, ...]:
    """One period [U R_pi]^2 R_{-pi/2} [U R_pi]^4 R_{pi/2}, listed in execution order."""
    echo = (Rotate("y", np.pi), Free(dt))
    return (Rotate("y", np.pi / 2),) + echo * 4 + (Rotate("y", -np.pi / 2),) + echo * 2


def tat_sequence(n_periods: int, dt: float) -> PulseSequence:
    if n_periods < 0:
        raise InvalidArgumentError("n_periods must be >= 0")
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    period = tat_period(dt)
    return PulseSequence(period * n_periods, "tat", 6 * dt, len(period), {"dt": dt})


@dataclass(frozen=True)
class NoiseSpec:
    """Relative Gaussian jitter of pulse angles and free-segment durations."""

    sigma_area: float = 0.0
    sigma_sep: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_area < 0 or self.sigma_sep < 0:
            raise InvalidArgumentError("noise sigmas must be >= 0")

    def rng(self, trajectory: int = 0) -> np.random.Generator:
        """Counter-based stream keyed on (seed, trajectory), independent of scheduling."""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(trajectory,))))


def perturb_sequence(seq: PulseSequence, noise: NoiseSpec, trajectory: int = 0) -> PulseSequence:
    """Multiply every angle by (1 + eps) and every duration by (1 + eps'), eps ~ N(0, sigma^2)."""
    rng = noise.rng(trajectory)
    eps = rng.standard_normal(len(seq.segments))
    out = []
    clamped = 0
    for s, e in zip(seq.segments, eps):
        if isinstance(s, Rotate):
            out.append(Rotate(s.axis, s.angle * (1.0 + noise.sigma_area * e)))
        else:
            d = s.duration * (1.0 + noise.sigma_sep * e)
            if d < 0:
                d, clamped = 0.0, clamped + 1
            out.append(Free(d))
    meta = dict(seq.meta, noise={"sigma_area": noise.sigma_area, "sigma_sep": noise.sigma_sep,
                                 "seed": noise.seed, "trajectory": trajectory}, clamped=clamped)
    return replace(seq, segments=tuple(out), meta=meta)


@lru_cache(maxsize=16)
def _axis_eig(n_s: int, axis: str):
    return scipy.linalg.eigh(spin_matrix(n_s, axis).toarray())


def rotation_unitary(n_s: int, axis: str, angle: float) -> np.ndarray:
    if axis == "z":
        return np.diag(np.exp(-1j * angle * (n_s / 2 - np.arange(n_s + 1))))
    w, v = _axis_eig(n_s, axis)
    return (v * np.exp(-1j * angle * w)) @ v.conj().T


def sequence_unitary(h_s: SparseHermitianOperator, seq: PulseSequence) -> np.ndarray:
    """Dense unitary of a sequence acting on the S ensemble alone (small n_s)."""
    n_s = h_s.dim - 1
    w, v = scipy.linalg.eigh(h_s.toarray())
    u = np.eye(h_s.dim, dtype=np.complex128)
    for s in seq.segments:
        if isinstance(s, Free):
            u = ((v * np.exp(-1j * s.duration * w)) @ v.conj().T) @ u
        else:
            u = rotation_unitary(n_s, s.axis, s.angle) @ u
    return u


def apply_sequence(
    H: SparseHermitianOperator,
    psi0: np.ndarray,
    seq: PulseSequence,
    sys: SpinSystem | int,
    sample: str | int = "period",
    cfg: PropagatorConfig = DEFAULT_CONFIG,
    evolver: Evolver | None = None,
    return_state: bool = False,
):
    """Run a pulse sequence and record the squeezing trace.

    ``H`` acts on the S-only space or on the full product space of ``sys``;
    rotations act on the S factor.  ``sample`` is ``"period"`` (stroboscopic,
    the default), ``"segment"`` or an integer k meaning every k periods.
    Windowed systems are monitored for population leaking to the window edge.
    """
    n_s = sys.n_s if isinstance(sys, SpinSystem) else int(sys)
    dim_s = n_s + 1
    windowed = isinstance(sys, SpinSystem) and H.dim == sys.total_dim and sys.windowed
    evolver = evolver or Evolver(H, cfg)
    steps = {s.duration for s in seq.segments if isinstance(s, Free)}
    if len(steps) <= 4 and hasattr(evolver, "prepare"):
        evolver.prepare(steps)
    per = seq.period_segments or 1
    if sample == "period":
        every = per
    elif sample == "segment":
        every = 1
    elif isinstance(sample, (int, np.integer)) and sample >= 1:
        every = per * int(sample)
    else:
        raise InvalidArgumentError(f"unknown sample policy {sample!r}")

    psi = np.asarray(psi0, dtype=np.complex128)
    if psi.shape != (H.dim,):
        raise InvalidArgumentError(f"state has shape {psi.shape}, operator dim is {H.dim}")
    moments_sys = sys if isinstance(sys, SpinSystem) and H.dim == sys.total_dim else n_s
    t = 0.0
    times, moments, tails = [0.0], [collective_moments(psi, moments_sys)], []
    for k, s in enumerate(seq.segments, start=1):
        if isinstance(s, Free):
            if s.duration > 0:
                psi = evolver(psi, s.duration)
            t += s.duration
        else:
            psi = apply_on_s(rotation_unitary(n_s, s.axis, s.angle), psi, dim_s)
        if k % every == 0:
            times.append(t)
            moments.append(collective_moments(psi, moments_sys))
            if windowed:
                tail = sys.window_tail(psi)
                tails.append(tail)
                if tail > WINDOW_TAIL_TOL:
                    raise TruncationError(f"J-window edge population {tail:.3e} exceeds {WINDOW_TAIL_TOL:.0e}; "
                                          f"enlarge j_window (currently {sys.dim_j})")
    trace = SqueezingTrace.from_moments(n_s, times, moments, stroboscopic=True,
                                        meta={"scheme": seq.scheme, "segments": len(seq.segments),
                                              "max_window_tail": max(tails, default=0.0)})
    return (trace, psi) if return_state else trace
