"""Experiment drivers: squeezing traces, scaling sweeps, pulse-noise Monte Carlo, Husimi snapshots.

Every driver takes an ``ExperimentConfig`` and, when ``out_dir`` is set, writes
plot-ready files: one CSV per time series (t, xi2, Sx, Sy, Sz, VarMin, VarMax),
one JSON summary per run (including a manifest that pins the resolved config),
and Husimi grids as CSV matrices with a JSON sidecar.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import BudgetExceededError, InvalidArgumentError, NotBracketedError, SpinSqueezeError
from .model import (
    DEFAULT_MEMORY_BUDGET,
    BosonSpace,
    CouplingParams,
    boson_vacuum,
    build_h_eff,
    build_h_fn_hp,
    build_h_int,
    build_h_oat,
    build_h_tat,
    build_s_fn,
    check_boson_tail,
    conjugate_columns,
)
from .observables import (
    SqueezingTrace,
    collective_moments,
    find_optimal_squeezing,
    husimi_q,
    moments_from_density,
    reduced_density_s,
    width_ratio,
)
from .propagate import Evolver, PropagatorConfig
from .pulses import NoiseSpec, PulseSequence, apply_sequence, default_dt, echo_sequence, perturb_sequence, tat_sequence
from .spin_ops import SparseHermitianOperator, SpinSystem, css, embed

log = logging.getLogger(__name__)

SCHEMES = ("free-int", "free-oat", "free-eff", "free-fn-hp", "free-tat", "free-conj", "echo", "tat-pulse")
TAT_CLASS = ("free-tat", "tat-pulse")
PULSED = ("echo", "tat-pulse")
FULL_MODEL = ("free-int", "free-conj", "echo", "tat-pulse")
MAX_EXTENSIONS = 3
WINDOW_MARGIN = 40

# Figure-scale parameter sets; long-running, meant for offline reproduction.
FULL_SCALE_PROFILES = {
    "fig1": dict(scheme="free-int", n_s=50, n_j=20000, g_x=1.0, g_y=1.0, g_z=-2.0),
    "fig3": dict(scheme="echo", n_s=50, n_j=10000, anisotropy=0.6, g_z=-2.0),
    "fig4": dict(scheme="tat-pulse", n_s=50, n_j=10000, g_x=1.0, g_y=1.0, g_z=-2.0),
    "fig5": dict(scheme="tat-pulse", n_s=50, n_j=10000, g_x=1.0, g_y=1.0, g_z=-2.0),
}


@dataclass
class ExperimentConfig:
    scheme: str = "free-oat"
    n_s: int = 20
    n_j: int = 2000
    g_x: float = 1.0
    g_y: float = 1.0
    g_z: float = -2.0
    anisotropy: float | None = None  # if set: g_y/g_x with g_x^2 + g_y^2 = 2
    horizon: float | None = None
    horizon_factor: float = 1.5
    samples: int = 200
    dt: float | None = None
    theta: float | None = None  # initial S direction; None picks +x (OAT) or +z (TAT)
    phi: float = 0.0
    j_window: int | str | None = "auto"
    boson_cutoff: int = 60
    sigma_area: float = 0.0
    sigma_sep: float = 0.0
    seed: int = 0
    krylov_dim: int = 30
    step_tol: float = 1e-10
    eig_threshold: int = 4096
    checkpoint_every: int = 32
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    refine_rel_tol: float = 1e-3
    out_dir: str | None = None
    tag: str | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        for name in ("n_s", "n_j", "samples", "boson_cutoff", "checkpoint_every"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {v!r}")
        if self.horizon is not None and self.horizon < 0:
            raise InvalidArgumentError("horizon must be >= 0")
        if self.dt is not None and not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        if not isinstance(self.j_window, (int, type(None))) and self.j_window not in ("auto", "full"):
            raise InvalidArgumentError(f"j_window must be 'auto', 'full' or an integer; got {self.j_window!r}")
        if self.sigma_area < 0 or self.sigma_sep < 0:
            raise InvalidArgumentError("noise sigmas must be >= 0")
        self.params  # validates couplings

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidArgumentError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def profile(cls, name: str, **overrides) -> "ExperimentConfig":
        if name not in FULL_SCALE_PROFILES:
            raise InvalidArgumentError(f"unknown profile {name!r}")
        return cls(**{**FULL_SCALE_PROFILES[name], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def params(self) -> CouplingParams:
        if self.anisotropy is not None:
            return CouplingParams.anisotropic(self.anisotropy, g_z=self.g_z)
        return CouplingParams(self.g_x, self.g_y, self.g_z)

    @property
    def propagator(self) -> PropagatorConfig:
        return PropagatorConfig(krylov_dim=self.krylov_dim, step_tol=self.step_tol, eig_threshold=self.eig_threshold)

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.sigma_area, self.sigma_sep, self.seed)

    @property
    def window(self) -> int | None:
        if self.j_window in (None, "full"):
            return None
        if self.j_window == "auto":
            return self.n_s + 1 + WINDOW_MARGIN
        return int(self.j_window)

    @property
    def system(self) -> SpinSystem:
        return SpinSystem(self.n_s, self.n_j, self.window)

    @property
    def initial_theta(self) -> float:
        if self.theta is not None:
            return self.theta
        return 0.0 if self.scheme in TAT_CLASS else np.pi / 2

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else default_dt(self.params, self.n_j)

    def predicted_optimum(self) -> tuple[float, float]:
        """Asymptotic (t_min, xi2_min) for ideal twisting at these couplings."""
        p = self.params
        gg = abs(p.g_x * p.g_y)
        if gg == 0:
            return math.inf, 1.0
        n = self.n_s
        if self.scheme in TAT_CLASS:
            return 3 * abs(p.g_z) * math.log(4 * n) / (gg * n), 1.8 / n
        return 2 * 3 ** (1 / 6) * abs(p.g_z) / (gg * n ** (2 / 3)), 0.5 * (n / 3) ** (-2 / 3)

    def resolved_horizon(self) -> float:
        if self.horizon is not None:
            return self.horizon
        return self.horizon_factor * self.predicted_optimum()[0]


@dataclass
class FitResult:
    exponent: float
    prefactor: float
    r2: float
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(x, y) -> FitResult:
    """Least-squares fit of log y = log c + a log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgumentError("power-law fit needs >= 2 strictly positive points")
    lx, ly = np.log(x), np.log(y)
    a, b = np.polyfit(lx, ly, 1)
    resid = ly - (a * lx + b)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(a), float(np.exp(b)), float(min(max(r2, 0.0), 1.0)),
                     (float(x.min()), float(x.max())), (float(y.min()), float(y.max())), int(x.size))


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class Problem:
    """Hamiltonian, initial state and observable hooks for one scheme."""

    H: SparseHermitianOperator
    psi0: np.ndarray
    moments_of: object
    evolve: object
    description: dict = field(default_factory=dict)
    monitor: object = None


def estimate_bytes(cfg: ExperimentConfig) -> int:
    """Rough peak memory: Hamiltonian plus Krylov workspace (or dense eigenbasis)."""
    if cfg.scheme in FULL_MODEL:
        dim = (cfg.n_s + 1) * (cfg.window and min(cfg.window, cfg.n_j + 1) or cfg.n_j + 1)
        nnz = 5 * dim
    elif cfg.scheme == "free-fn-hp":
        dim = (cfg.n_s + 1) * (cfg.boson_cutoff + 1)
        nnz = 6 * dim
    else:
        dim = cfg.n_s + 1
        nnz = 3 * dim
    vectors = (cfg.krylov_dim + 2 + max(2, cfg.samples // cfg.checkpoint_every + 1)) * dim * 16
    dense = 4 * dim * dim * 16 if dim <= cfg.eig_threshold else 0
    return int(vectors + nnz * 20 + dense)


def check_budget(cfg: ExperimentConfig) -> int:
    need = estimate_bytes(cfg)
    if need > cfg.memory_budget:
        raise BudgetExceededError(need, cfg.memory_budget, f"scheme {cfg.scheme} (n_s={cfg.n_s}, n_j={cfg.n_j})")
    return need


def build_problem(cfg: ExperimentConfig) -> Problem:
    p, n_s = cfg.params, cfg.n_s
    pcfg = cfg.propagator
    psi_s = css(n_s, cfg.initial_theta, cfg.phi)
    desc = {"initial_direction": [cfg.initial_theta, cfg.phi]}
    if cfg.scheme in FULL_MODEL:
        sys = cfg.system
        H = build_h_int(p, sys, cfg.memory_budget)
        psi0 = sys.product(psi_s, css(cfg.n_j, 0.0, 0.0))
        desc.update(hamiltonian="H_int", total_dim=sys.total_dim, j_levels=sys.dim_j)
        monitor = (lambda psi: _check_window(sys, psi)) if sys.windowed else None
        if cfg.scheme == "free-conj":
            conj = conjugate_columns(embed(build_h_oat(p, n_s), sys, "S"), build_s_fn(p, sys), +1, pcfg)
            desc.update(hamiltonian="exp(S_FN) H_OAT exp(-S_FN)")
            return Problem(conj.op, psi0, lambda psi: collective_moments(psi, sys),
                           lambda psi, t: conj.evolve(psi, t), desc, monitor)
        ev = Evolver(H, pcfg)
        desc["method"] = ev.method
        return Problem(H, psi0, lambda psi: collective_moments(psi, sys), ev, desc, monitor)
    if cfg.scheme == "free-fn-hp":
        bs = BosonSpace(cfg.boson_cutoff)
        H = build_h_fn_hp(p, n_s, cfg.n_j, bs)
        psi0 = np.kron(psi_s, boson_vacuum(bs))
        ev = Evolver(H, pcfg)
        desc.update(hamiltonian="H_FN", fn_variant="holstein-primakoff truncated", boson_cutoff=bs.n_max,
                    method=ev.method)
        return Problem(H, psi0, lambda psi: collective_moments(psi, n_s), ev, desc,
                       lambda psi: check_boson_tail(psi, n_s, bs))
    builders = {
        "free-oat": lambda: build_h_oat(p, n_s),
        "free-eff": lambda: build_h_eff(p, n_s=n_s, n_j=cfg.n_j),
        "free-tat": lambda: build_h_tat(p, n_s),
    }
    H = builders[cfg.scheme]()
    ev = Evolver(H, pcfg)
    desc.update(hamiltonian=cfg.scheme[5:].upper(), method=ev.method)
    return Problem(H, psi_s, lambda psi: collective_moments(psi, n_s), ev, desc)


def _check_window(sys: SpinSystem, psi: np.ndarray) -> float:
    from .pulses import WINDOW_TAIL_TOL
    from .exceptions import TruncationError

    tail = sys.window_tail(psi)
    if tail > WINDOW_TAIL_TOL:
        raise TruncationError(f"J-window edge population {tail:.3e} exceeds {WINDOW_TAIL_TOL:.0e}")
    return tail


def nominal_sequence(cfg: ExperimentConfig, horizon: float) -> PulseSequence:
    dt = cfg.step
    if cfg.scheme == "echo":
        pairs = max(0, math.ceil(horizon / (2 * dt)))
        return echo_sequence(2 * pairs, dt)
    periods = max(0, math.ceil(horizon / (6 * dt)))
    return tat_sequence(periods, dt)


# ---------------------------------------------------------------------------
# traces


def _free_trace(cfg: ExperimentConfig, prob: Problem, horizon: float) -> SqueezingTrace:
    times = np.linspace(0.0, horizon, cfg.samples + 1) if horizon > 0 else np.zeros(1)
    moments, checkpoints, tails = [], {}, []
    psi, t_prev = prob.psi0, 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            psi = prob.evolve(psi, t - t_prev)
        t_prev = t
        if prob.monitor is not None:
            tails.append(prob.monitor(psi))
        moments.append(prob.moments_of(psi))
        if k % cfg.checkpoint_every == 0:
            checkpoints[k] = psi
    checkpoints[len(times) - 1] = psi
    return SqueezingTrace.from_moments(
        cfg.n_s, times, moments, checkpoints=checkpoints, resimulate=prob.evolve,
        state_moments=prob.moments_of, meta={"max_tail": max(tails, default=0.0)},
    )


def _extend_free(cfg: ExperimentConfig, prob: Problem, trace: SqueezingTrace, new_horizon: float) -> SqueezingTrace:
    last = len(trace) - 1
    start = trace.checkpoints[last]
    t0 = trace.times[-1]
    ext = _free_trace(replace(cfg, samples=max(3, int(cfg.samples * (new_horizon - t0) / max(t0, 1e-300)))),
                      replace(prob, psi0=start), new_horizon - t0)
    shift = len(trace) - 1
    return SqueezingTrace(
        n_s=trace.n_s,
        times=np.concatenate([trace.times, ext.times[1:] + t0]),
        xi2=np.concatenate([trace.xi2, ext.xi2[1:]]),
        mean=np.concatenate([trace.mean, ext.mean[1:]]),
        var_min=np.concatenate([trace.var_min, ext.var_min[1:]]),
        var_max=np.concatenate([trace.var_max, ext.var_max[1:]]),
        checkpoints={**trace.checkpoints, **{k + shift: v for k, v in ext.checkpoints.items()}},
        resimulate=trace.resimulate, state_moments=trace.state_moments,
        meta={"max_tail": max(trace.meta.get("max_tail", 0.0), ext.meta.get("max_tail", 0.0))},
    )


def _pulsed_trace(cfg: ExperimentConfig, prob: Problem, seq: PulseSequence, psi0=None):
    return apply_sequence(prob.H, prob.psi0 if psi0 is None else psi0, seq, cfg.system,
                          cfg=cfg.propagator, evolver=prob.evolve, return_state=True)


def _concat_pulsed(a: SqueezingTrace, b: SqueezingTrace) -> SqueezingTrace:
    t0 = a.times[-1]
    return SqueezingTrace(
        n_s=a.n_s, times=np.concatenate([a.times, b.times[1:] + t0]), xi2=np.concatenate([a.xi2, b.xi2[1:]]),
        mean=np.concatenate([a.mean, b.mean[1:]]), var_min=np.concatenate([a.var_min, b.var_min[1:]]),
        var_max=np.concatenate([a.var_max, b.var_max[1:]]), stroboscopic=True,
        meta={**a.meta, "segments": a.meta.get("segments", 0) + b.meta.get("segments", 0),
              "max_window_tail": max(a.meta.get("max_window_tail", 0.0), b.meta.get("max_window_tail", 0.0))},
    )


def _pulsed_with_extension(cfg: ExperimentConfig, prob: Problem, horizon: float,
                           noise: NoiseSpec | None = None, trajectory: int = 0):
    seq = nominal_sequence(cfg, horizon)
    if noise is not None:
        seq = perturb_sequence(seq, noise, trajectory)
    trace, psi = _pulsed_trace(cfg, prob, seq)
    extensions = 0
    while extensions < MAX_EXTENSIONS and len(trace) >= 3 and int(np.nanargmin(trace.xi2)) == len(trace) - 1:
        extensions += 1
        more = nominal_sequence(cfg, 0.5 * horizon * (1.5 ** (extensions - 1)))
        if noise is not None:
            more = perturb_sequence(more, noise, trajectory + 1_000_003 * extensions)
        ext, psi = _pulsed_trace(cfg, prob, more, psi)
        trace = _concat_pulsed(trace, ext)
    return trace, seq, extensions


def summarize(trace: SqueezingTrace, rel_tol: float = 1e-3) -> dict:
    """Optimal squeezing with a boundary fallback instead of an exception."""
    try:
        t_min, xi2_min = find_optimal_squeezing(trace, rel_tol)
        return {"t_min": t_min, "xi2_min": xi2_min, "bracketed": True}
    except NotBracketedError as e:
        return {"t_min": float(trace.times[e.index]), "xi2_min": float(trace.xi2[e.index]), "bracketed": False}
    except InvalidArgumentError:
        i = int(np.nanargmin(trace.xi2)) if len(trace) else 0
        return {"t_min": float(trace.times[i]), "xi2_min": float(trace.xi2[i]), "bracketed": False}


def manifest(cfg: ExperimentConfig, wall: float, **extra) -> dict:
    return {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": wall,
        **extra,
    }


def run_trace(cfg: ExperimentConfig, write: bool = True) -> tuple[SqueezingTrace, dict]:
    """Simulate one scheme and report (t_min, xi2_min).

    The horizon defaults to ``horizon_factor`` times the asymptotic optimal
    time; an unbracketed minimum extends it by 50% up to three times, after
    which the boundary value is reported with a warning.
    """
    t_start = time.perf_counter()
    check_budget(cfg)
    prob = build_problem(cfg)
    horizon = cfg.resolved_horizon()
    extensions = 0
    seq = None
    if cfg.scheme in PULSED:
        noise = cfg.noise if (cfg.sigma_area or cfg.sigma_sep) else None
        trace, seq, extensions = _pulsed_with_extension(cfg, prob, horizon, noise)
    else:
        trace = _free_trace(cfg, prob, horizon)
        while (extensions < MAX_EXTENSIONS and horizon > 0 and len(trace) >= 3
               and int(np.nanargmin(trace.xi2)) == len(trace) - 1):
            extensions += 1
            horizon *= 1.5
            trace = _extend_free(cfg, prob, trace, horizon)
    best = summarize(trace, cfg.refine_rel_tol) if len(trace) >= 3 else \
        {"t_min": 0.0, "xi2_min": float(trace.xi2[0]), "bracketed": False}
    if not best["bracketed"] and len(trace) >= 3:
        log.warning("minimum not bracketed for %s after %d extensions; reporting boundary value",
                    cfg.scheme, extensions)
    t_pred, xi_pred = cfg.predicted_optimum()
    summary = {
        "scheme": cfg.scheme,
        **best,
        "predicted_t_min": t_pred,
        "predicted_xi2_min": xi_pred,
        "horizon": float(trace.times[-1]),
        "extensions": extensions,
        "samples": len(trace),
        "model": prob.description,
        "trace_meta": {k: v for k, v in trace.meta.items() if k != "noise"},
    }
    if seq is not None:
        summary["sequence"] = {"scheme": seq.scheme, "period": seq.period, "dt": seq.meta.get("dt"),
                               "pulses": sum(seq.census().values())}
    summary["manifest"] = manifest(cfg, time.perf_counter() - t_start)
    if write and cfg.out_dir:
        stem = cfg.tag or f"{cfg.scheme}_ns{cfg.n_s}_nj{cfg.n_j}"
        write_trace_csv(Path(cfg.out_dir) / f"{stem}.csv", trace)
        write_json(Path(cfg.out_dir) / f"{stem}.json", summary)
    return trace, summary


# ---------------------------------------------------------------------------
# sweeps


def _scaling_point(args):
    cfg, value = args
    try:
        _, summary = run_trace(cfg, write=False)
        return {"value": value, "n_s": cfg.n_s, "n_j": cfg.n_j, "t_min": summary["t_min"],
                "xi2_min": summary["xi2_min"], "bracketed": summary["bracketed"]}
    except SpinSqueezeError as e:
        return {"value": value, "n_s": cfg.n_s, "n_j": cfg.n_j, "error": f"{type(e).__name__}: {e}"}


def _pool_map(fn, jobs: list, workers: int | None):
    workers = workers or int(os.environ.get("SPINSQUEEZE_THREADS", "1"))
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_scaling(template: ExperimentConfig, sweep: str, values, min_points: int = 4,
                workers: int | None = None) -> dict:
    """Optimal squeezing across system sizes.

    ``sweep="n_s"`` varies n_s at the template's n_j/n_s ratio and fits
    xi2_min ~ n_s^a and t_min ~ n_s^b; ``sweep="ratio"`` varies n_j/n_s at the
    template's n_s (no fit).
    """
    t_start = time.perf_counter()
    if sweep not in ("n_s", "ratio"):
        raise InvalidArgumentError("sweep must be 'n_s' or 'ratio'")
    ratio = template.n_j / template.n_s
    jobs = []
    for v in values:
        if sweep == "n_s":
            jobs.append((replace(template, n_s=int(v), n_j=int(round(ratio * v)), out_dir=None), v))
        else:
            jobs.append((replace(template, n_j=int(round(v * template.n_s)), out_dir=None), v))
    points = _pool_map(_scaling_point, jobs, workers)
    ok = [p for p in points if "error" not in p]
    result = {"sweep": sweep, "scheme": template.scheme, "points": points}
    if sweep == "n_s":
        if len(ok) < min_points:
            result["fit_error"] = f"only {len(ok)} successful points, need {min_points}"
        else:
            x = [p["n_s"] for p in ok]
            result["fit_xi2"] = fit_power_law(x, [p["xi2_min"] for p in ok]).to_dict()
            result["fit_t"] = fit_power_law(x, [p["t_min"] for p in ok]).to_dict()
    result["manifest"] = manifest(template, time.perf_counter() - t_start, sweep_values=list(values))
    if template.out_dir:
        stem = template.tag or f"scaling_{template.scheme}_{sweep}"
        write_table_csv(Path(template.out_dir) / f"{stem}.csv", points,
                        ["value", "n_s", "n_j", "t_min", "xi2_min", "bracketed", "error"])
        write_json(Path(template.out_dir) / f"{stem}.json", result)
    return result


def _noise_job(args):
    cfg, noise, traj = args
    prob = build_problem(cfg)
    trace, seq, _ = _pulsed_with_extension(cfg, prob, cfg.resolved_horizon(), noise, traj)
    return trace


def run_noise_mc(cfg: ExperimentConfig, grid, trajectories: int = 20, workers: int | None = None) -> dict:
    """Pulse-noise Monte Carlo over a grid of (sigma_area, sigma_sep) cells.

    Trajectory ``k`` of every cell uses the RNG stream keyed on (seed, k).
    Per cell: mean/std/min/max of xi2(t) over trajectories (aligned on period
    boundaries), per-trajectory optima, and the first trajectory as a single
    seeded realization.
    """
    t_start = time.perf_counter()
    if cfg.scheme not in PULSED:
        raise InvalidArgumentError("noise Monte Carlo needs a pulsed scheme (echo or tat-pulse)")
    if trajectories < 1:
        raise InvalidArgumentError("trajectories must be >= 1")
    check_budget(cfg)
    base = replace(cfg, sigma_area=0.0, sigma_sep=0.0, out_dir=None)
    prob = build_problem(base)
    nominal, _, _ = _pulsed_with_extension(base, prob, base.resolved_horizon())
    nominal_best = summarize(nominal)
    cells = []
    for sigma_area, sigma_sep in grid:
        noise = NoiseSpec(float(sigma_area), float(sigma_sep), cfg.seed)
        if workers and workers > 1:
            traces = _pool_map(_noise_job, [(base, noise, k) for k in range(trajectories)], workers)
        else:
            traces = [_pulsed_with_extension(base, prob, base.resolved_horizon(), noise, k)[0]
                      for k in range(trajectories)]
        n = min(len(tr) for tr in traces)
        stack = np.array([tr.xi2[:n] for tr in traces])
        bests = [summarize(tr) for tr in traces]
        xi_mins = np.array([b["xi2_min"] for b in bests])
        cells.append({
            "sigma_area": float(sigma_area),
            "sigma_sep": float(sigma_sep),
            "trajectories": trajectories,
            "seeds": [{"seed": cfg.seed, "trajectory": k} for k in range(trajectories)],
            "times": nominal.times[:n].tolist(),
            "xi2_mean": stack.mean(axis=0).tolist(),
            "xi2_std": stack.std(axis=0).tolist(),
            "xi2_lo": stack.min(axis=0).tolist(),
            "xi2_hi": stack.max(axis=0).tolist(),
            "xi2_min_each": xi_mins.tolist(),
            "t_min_each": [b["t_min"] for b in bests],
            "xi2_min_mean": float(xi_mins.mean()),
            "xi2_min_std": float(xi_mins.std()),
            "single_realization": traces[0].xi2[:n].tolist(),
            "identical_to_nominal": bool(all(np.array_equal(tr.xi2, nominal.xi2) for tr in traces)),
        })
    result = {"scheme": cfg.scheme, "nominal": {**nominal_best, "xi2": nominal.xi2.tolist(),
                                                 "times": nominal.times.tolist()},
              "cells": cells, "manifest": manifest(cfg, time.perf_counter() - t_start,
                                                   grid=[list(map(float, g)) for g in grid])}
    if cfg.out_dir:
        stem = cfg.tag or f"noise_{cfg.scheme}_ns{cfg.n_s}_nj{cfg.n_j}"
        out = Path(cfg.out_dir)
        for c in cells:
            cell_stem = f"{stem}_area{c['sigma_area']:g}_sep{c['sigma_sep']:g}"
            write_table_csv(out / f"{cell_stem}.csv",
                            [dict(t=t, mean=m, std=s, lo=lo, hi=hi, single=x) for t, m, s, lo, hi, x in
                             zip(c["times"], c["xi2_mean"], c["xi2_std"], c["xi2_lo"], c["xi2_hi"],
                                 c["single_realization"])],
                            ["t", "mean", "std", "lo", "hi", "single"])
        write_json(out / f"{stem}.json", result)
    return result


# ---------------------------------------------------------------------------
# Husimi snapshots


def _states_at(cfg: ExperimentConfig, prob: Problem, times) -> list[tuple[float, np.ndarray]]:
    times = sorted(float(t) for t in times)
    out = []
    if cfg.scheme in PULSED:
        # snapshot at the nearest period boundary at or before each time
        seq = nominal_sequence(cfg, times[-1] if times else 0.0)
        per = seq.period_segments
        psi, k, t = prob.psi0, 0, 0.0
        for target in times:
            while k + per <= len(seq.segments) and t + seq.period <= target + 1e-12:
                _, psi = apply_sequence(prob.H, psi, PulseSequence(seq.segments[k:k + per], seq.scheme,
                                                                   seq.period, per),
                                        cfg.system, evolver=prob.evolve, return_state=True)
                k += per
                t += seq.period
            out.append((t, psi))
        return out
    psi, t_prev = prob.psi0, 0.0
    for t in times:
        if t > t_prev:
            psi = prob.evolve(psi, t - t_prev)
            t_prev = t
        out.append((t, psi))
    return out


def run_husimi(cfg: ExperimentConfig, snapshot_times=None, n_theta: int = 64, n_phi: int = 128,
               t_min: float | None = None) -> list[dict]:
    """Husimi Q grids of the S ensemble at the given times.

    Without explicit times the snapshots are t_min * (0, 1/4, 1/2, 3/4, 1),
    with t_min taken from a ``run_trace`` of the same config.
    """
    t_start = time.perf_counter()
    check_budget(cfg)
    if snapshot_times is None:
        if t_min is None:
            _, summary = run_trace(replace(cfg, out_dir=None), write=False)
            t_min = summary["t_min"]
        snapshot_times = [f * t_min for f in (0.0, 0.25, 0.5, 0.75, 1.0)]
    prob = build_problem(cfg)
    records = []
    for t, psi in _states_at(cfg, prob, snapshot_times):
        rho = reduced_density_s(psi, cfg.n_s)
        grid = husimi_q(rho, n_theta, n_phi)
        m = moments_from_density(rho)
        direction = (m.mean / m.length).tolist()
        grid.meta = {"t": t, "mean_direction": direction, "integral": grid.integral(),
                     "width_ratio_q": grid.width_ratio(), "width_ratio_state": width_ratio(m, cfg.n_s),
                     "purity": float(np.real(np.trace(rho @ rho)))}
        records.append({"t": t, "grid": grid, **grid.meta})
    if cfg.out_dir:
        stem = cfg.tag or f"husimi_{cfg.scheme}_ns{cfg.n_s}"
        out = Path(cfg.out_dir)
        for k, rec in enumerate(records):
            g = rec["grid"]
            write_matrix_csv(out / f"{stem}_{k}.csv", g.q)
            write_json(out / f"{stem}_{k}.json", {
                **g.meta, "n_s": g.n_s, "theta": g.theta.tolist(), "phi": g.phi.tolist(),
                "theta_weights": g.theta_weights.tolist(),
                "normalization": "Q = (2S+1)/(4 pi) <theta,phi|rho_S|theta,phi>",
                "manifest": manifest(cfg, time.perf_counter() - t_start),
            })
    return records


# ---------------------------------------------------------------------------
# output


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    _atomic_write(path, json.dumps(_jsonable(data), indent=2) + "\n")


def write_trace_csv(path: Path, trace: SqueezingTrace) -> None:
    cols = trace.columns()
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(list(cols))
    for row in zip(*cols.values()):
        w.writerow([repr(float(v)) for v in row])
    _atomic_write(path, buf.getvalue())


def read_trace_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {h: body[:, i] for i, h in enumerate(header)}


def write_table_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in columns})
    _atomic_write(path, buf.getvalue())


def write_matrix_csv(path: Path, m: np.ndarray) -> None:
    buf = io.StringIO()
    np.savetxt(buf, m, delimiter=",", fmt="%.17g")
    _atomic_write(path, buf.getvalue())
