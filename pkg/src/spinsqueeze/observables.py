"""Collective moments, the squeezing parameter, reduced states and Husimi Q."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .exceptions import DegenerateDirectionError, InvalidArgumentError, NotBracketedError
from .spin_ops import SpinSystem, _check_count, css_amplitudes, spin_matrices

DEGENERATE_MEAN_TOL = 1e-9
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@lru_cache(maxsize=32)
def _dense_spin(n_s: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(op.toarray() for op in spin_matrices(n_s))


@dataclass(frozen=True)
class CollectiveMoments:
    """First and symmetrized second moments of (Sx, Sy, Sz)."""

    mean: np.ndarray
    second: np.ndarray

    @property
    def covariance(self) -> np.ndarray:
        return self.second - np.outer(self.mean, self.mean)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.mean))


def _dim_s(sys_or_n: SpinSystem | int) -> int:
    if isinstance(sys_or_n, SpinSystem):
        return sys_or_n.dim_s
    return _check_count(sys_or_n, "n_s") + 1


def reduced_density_s(psi: np.ndarray, sys: SpinSystem | int) -> np.ndarray:
    """Partial trace over everything but the S ensemble.

    ``psi`` may live on the S ensemble alone or on any S-major product space
    (S (x) J or S (x) boson); the trailing factor is traced out.
    """
    psi = np.asarray(psi)
    dim_s = _dim_s(sys)
    if isinstance(sys, SpinSystem) and psi.size not in (sys.dim_s, sys.total_dim):
        raise InvalidArgumentError(f"state of size {psi.size} does not match {sys}")
    if psi.ndim != 1 or psi.size % dim_s:
        raise InvalidArgumentError(f"state of size {psi.size} is not a multiple of dim_s={dim_s}")
    amps = psi.reshape(dim_s, -1)
    return amps @ amps.conj().T


def moments_from_density(rho: np.ndarray) -> CollectiveMoments:
    n_s = rho.shape[0] - 1
    ops = _dense_spin(n_s)
    rt = rho.T
    mean = np.array([np.sum(rt * op).real for op in ops])
    second = np.empty((3, 3))
    for a in range(3):
        for b in range(a, 3):
            val = np.sum(rt * (ops[a] @ ops[b])).real if a == b else \
                0.5 * np.sum(rt * (ops[a] @ ops[b] + ops[b] @ ops[a])).real
            second[a, b] = second[b, a] = val
    return CollectiveMoments(mean, second)


def collective_moments(psi: np.ndarray, sys: SpinSystem | int) -> CollectiveMoments:
    """Moments of the S-ensemble collective spin for a pure state."""
    return moments_from_density(reduced_density_s(psi, sys))


def perpendicular_variances(m: CollectiveMoments, n_s: int | None = None) -> tuple[float, float]:
    """(min, max) variance of spin components orthogonal to the mean spin."""
    length = m.length
    scale = 1.0 if n_s is None else n_s
    if length < DEGENERATE_MEAN_TOL * scale:
        raise DegenerateDirectionError(f"mean spin length {length:.3e} too small to define a direction")
    n = m.mean / length
    helper = np.eye(3)[np.argmin(np.abs(n))]
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    cov = m.covariance
    a = e1 @ cov @ e1
    c = e2 @ cov @ e2
    b = e1 @ cov @ e2
    half_sum, half_diff = 0.5 * (a + c), 0.5 * (a - c)
    r = np.hypot(half_diff, b)
    return float(half_sum - r), float(half_sum + r)


def squeezing_parameter(m: CollectiveMoments, n_s: int) -> float:
    """xi^2 = 4 * (minimal perpendicular variance) / n_s."""
    lam_min, _ = perpendicular_variances(m, n_s)
    return 4.0 * lam_min / n_s


def width_ratio(m: CollectiveMoments, n_s: int) -> float:
    """Aspect ratio sqrt(var_max / var_min) of the perpendicular uncertainty ellipse."""
    lam_min, lam_max = perpendicular_variances(m, n_s)
    return float(np.sqrt(lam_max / lam_min))


@dataclass
class SqueezingTrace:
    """Sampled squeezing dynamics.

    Only moments are stored per sample.  ``checkpoints`` maps sample index to
    the state at that time so ``find_optimal_squeezing`` can re-simulate
    between samples through ``resimulate(psi, dt)``.  Stroboscopic traces
    (pulse sequences) are not refined between samples.
    """

    n_s: int
    times: np.ndarray
    xi2: np.ndarray
    mean: np.ndarray
    var_min: np.ndarray
    var_max: np.ndarray
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    resimulate: Callable[[np.ndarray, float], np.ndarray] | None = field(default=None, repr=False)
    state_moments: Callable[[np.ndarray], CollectiveMoments] | None = field(default=None, repr=False)
    stroboscopic: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def from_moments(cls, n_s: int, times, moments: list[CollectiveMoments], **kw) -> "SqueezingTrace":
        xi2, vmin, vmax = [], [], []
        for m in moments:
            try:
                lo, hi = perpendicular_variances(m, n_s)
            except DegenerateDirectionError:
                lo = hi = np.nan
            vmin.append(lo)
            vmax.append(hi)
            xi2.append(4.0 * lo / n_s)
        return cls(
            n_s=n_s,
            times=np.asarray(times, dtype=float),
            xi2=np.asarray(xi2),
            mean=np.array([m.mean for m in moments]).reshape(-1, 3),
            var_min=np.asarray(vmin),
            var_max=np.asarray(vmax),
            **kw,
        )

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t": self.times, "xi2": self.xi2,
            "Sx": self.mean[:, 0], "Sy": self.mean[:, 1], "Sz": self.mean[:, 2],
            "VarMin": self.var_min, "VarMax": self.var_max,
        }


def _parabola_vertex(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    (t0, t1, t2), (y0, y1, y2) = t, y
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
    b = (t2**2 * (y0 - y1) + t1**2 * (y2 - y0) + t0**2 * (y1 - y2)) / denom
    c = y1 - a * t1**2 - b * t1
    if a <= 0:
        return float(t1), float(y1)
    tv = -b / (2 * a)
    return float(tv), float(c - b * b / (4 * a))


def find_optimal_squeezing(trace: SqueezingTrace, rel_tol: float = 1e-3, refine: bool = True) -> tuple[float, float]:
    """(t_min, xi2_min) of a trace.

    The coarse minimum is refined by golden-section search over the two
    neighbouring sample intervals, re-simulating from the nearest checkpoint,
    until the bracket is narrower than ``rel_tol * t_min``.  Without a
    re-simulation hook the vertex of the parabola through the three
    bracketing samples is returned; stroboscopic traces return the sample.
    """
    xi2 = np.asarray(trace.xi2)
    if len(xi2) < 3:
        raise InvalidArgumentError("need at least 3 samples to locate a minimum")
    finite = np.where(np.isfinite(xi2), xi2, np.inf)
    i = int(np.argmin(finite))
    if i == 0 or i == len(xi2) - 1:
        raise NotBracketedError(f"minimum at trace boundary (sample {i} of {len(xi2)})", i)
    t = np.asarray(trace.times)
    if trace.stroboscopic or not refine:
        return float(t[i]), float(xi2[i])
    if trace.resimulate is None or trace.state_moments is None:
        return _parabola_vertex(t[i - 1:i + 2], xi2[i - 1:i + 2])

    starts = [k for k in trace.checkpoints if k <= i - 1]
    if not starts:
        return _parabola_vertex(t[i - 1:i + 2], xi2[i - 1:i + 2])
    k = max(starts)
    base = trace.checkpoints[k]
    if t[i - 1] > t[k]:
        base = trace.resimulate(base, t[i - 1] - t[k])
    t_base = t[i - 1]

    def f(tt: float) -> float:
        psi = trace.resimulate(base, tt - t_base) if tt > t_base else base
        return squeezing_parameter(trace.state_moments(psi), trace.n_s)

    lo, hi = float(t[i - 1]), float(t[i + 1])
    best_t, best = float(t[i]), float(xi2[i])
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > rel_tol * max(best_t, 1e-300):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
        for x, fx in ((x1, f1), (x2, f2)):
            if fx < best:
                best_t, best = x, fx
    return best_t, best


@dataclass
class HusimiGrid:
    """Husimi Q on a (theta, phi) grid, normalized so its sphere integral is 1."""

    n_s: int
    theta: np.ndarray
    phi: np.ndarray
    q: np.ndarray
    theta_weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def integral(self) -> float:
        dphi = 2 * np.pi / len(self.phi)
        return float(self.theta_weights @ self.q.sum(axis=1) * dphi)

    def mean_direction(self) -> np.ndarray:
        v = self._weighted(self._unit_vectors())
        return v / np.linalg.norm(v)

    def _unit_vectors(self) -> np.ndarray:
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    def _weighted(self, values: np.ndarray) -> np.ndarray:
        w = self.theta_weights[:, None] * self.q * (2 * np.pi / len(self.phi))
        return np.tensordot(w, values, axes=([0, 1], [0, 1]))

    def width_ratio(self) -> float:
        """Principal-width aspect ratio of Q projected on the tangent plane of its mean direction."""
        n = self.mean_direction()
        helper = np.eye(3)[np.argmin(np.abs(n))]
        e1 = np.cross(n, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        u = self._unit_vectors()
        x, y = u @ e1, u @ e2
        cov = self._weighted(np.stack([x * x, x * y, y * y], axis=-1))
        ex, ey = self._weighted(x), self._weighted(y)
        c = np.array([[cov[0] - ex * ex, cov[1] - ex * ey], [cov[1] - ex * ey, cov[2] - ey * ey]])
        w = np.linalg.eigvalsh(c)
        return float(np.sqrt(w[1] / w[0]))


def husimi_q(rho: np.ndarray, n_theta: int = 64, n_phi: int = 128) -> HusimiGrid:
    """Q(theta, phi) = (2S+1)/(4 pi) <theta,phi|rho|theta,phi> on a quadrature grid.

    theta nodes are Gauss-Legendre in cos(theta) and phi is uniform, which
    integrates the band-limited Q exactly for n_s < min(2 n_theta, n_phi).
    """
    rho = np.asarray(rho, dtype=np.complex128)
    n_s = rho.shape[0] - 1
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x[::-1])
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    amps = css_amplitudes(n_s, theta[:, None], phi[None, :])
    q = np.einsum("abi,abi->ab", amps.conj(), amps @ rho.T).real
    q *= (n_s + 1) / (4 * np.pi)
    return HusimiGrid(n_s=n_s, theta=theta, phi=phi, q=q, theta_weights=w[::-1])
