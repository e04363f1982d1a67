"""Quick invariant suite behind ``spinsqueeze verify``."""

from __future__ import annotations

import numpy as np

from .model import CouplingParams, build_h_eff, build_h_fn_hp, build_h_int, build_h_oat, build_h_tat, build_s_fn
from .observables import collective_moments, squeezing_parameter
from .propagate import evolve, evolve_dense
from .pulses import Free, PulseSequence, Rotate, rotation_unitary, sequence_unitary
from .spin_ops import SparseHermitianOperator, SpinSystem, css, rotation, spin_matrices


def _commutators(nmax: int) -> float:
    worst = 0.0
    for n in range(1, nmax + 1):
        x, y, z = (op.toarray() for op in spin_matrices(n))
        for a, b, c in ((x, y, z), (y, z, x), (z, x, y)):
            worst = max(worst, np.abs(a @ b - b @ a - 1j * c).max())
    return worst


def _casimir(nmax: int) -> float:
    worst = 0.0
    for n in range(1, nmax + 1):
        x, y, z = (op.toarray() for op in spin_matrices(n))
        j = n / 2
        worst = max(worst, np.abs(x @ x + y @ y + z @ z - j * (j + 1) * np.eye(n + 1)).max())
    return worst


def _css(nmax: int) -> tuple[float, float]:
    norm_err = xi_err = 0.0
    rng = np.random.default_rng(1)
    for n in range(1, nmax + 1, 7):
        th, ph = rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
        psi = css(n, th, ph)
        norm_err = max(norm_err, abs(np.linalg.norm(psi) - 1))
        xi_err = max(xi_err, abs(squeezing_parameter(collective_moments(psi, n), n) - 1))
    return norm_err, xi_err


def _rotations() -> float:
    worst = 0.0
    for n in (1, 5, 20, 60):
        r = rotation(n, "y", 0.7).toarray()
        worst = max(worst, np.abs(r.conj().T @ r - np.eye(n + 1)).max())
        r2 = rotation(n, "x", 0.3).toarray() @ rotation(n, "x", 1.1).toarray()
        worst = max(worst, np.abs(r2 - rotation(n, "x", 1.4).toarray()).max())
    return worst


def _builders() -> float:
    p = CouplingParams(1.0, 0.6, -2.0)
    sys = SpinSystem(3, 8)
    ops = [build_h_int(p, sys), build_h_oat(p, 5), build_h_tat(p, 5), build_h_eff(p, sys),
           build_s_fn(p, sys), build_h_fn_hp(p, 3, 8)]
    return max(op.hermiticity_error() for op in ops)


def _krylov(cases: int) -> float:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(cases):
        d = int(rng.integers(20, 200))
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        H = SparseHermitianOperator.from_dense((a + a.conj().T) / 2)
        psi = rng.normal(size=d) + 1j * rng.normal(size=d)
        psi /= np.linalg.norm(psi)
        t = rng.uniform(-1, 1)
        worst = max(worst, np.abs(evolve(H, psi, t) - evolve_dense(H, psi, t)).max())
    return worst


def _echo_identity(cases: int) -> float:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 21))
        a, b = rng.normal(size=2)
        sz = n / 2 - np.arange(n + 1)
        h = SparseHermitianOperator.from_dense(np.diag(a * sz + b * sz**2))
        seq = PulseSequence((Free(1.0), Rotate("y", np.pi)) * 2)
        u = sequence_unitary(h, seq)
        ref = np.diag(np.exp(-2j * b * sz**2))
        phase = np.vdot(ref.ravel(), u.ravel())
        worst = max(worst, np.abs(u - phase / abs(phase) * ref).max())
    return worst


def _tat_order() -> float:
    n = 10
    sx, _, sz = (op.toarray() for op in spin_matrices(n))
    taus = np.geomspace(1e-4, 1e-2, 7) / n
    res = []
    for tau in taus:
        z2 = np.diag(np.diag(sz) ** 2)
        lhs = (np.diag(np.exp(-1j * tau * np.diag(z2))) @ rotation_unitary(n, "y", -np.pi / 2)
               @ np.diag(np.exp(-2j * tau * np.diag(z2))) @ rotation_unitary(n, "y", np.pi / 2))
        w, v = np.linalg.eigh(2 * sx @ sx + sz @ sz)
        rhs = (v * np.exp(-1j * tau * w)) @ v.conj().T
        res.append(np.abs(lhs - rhs).max())
    return float(np.polyfit(np.log(taus), np.log(res), 1)[0])


def run_checks(quick: bool = False) -> list[tuple[str, bool, str]]:
    out = []
    c = _commutators(20 if quick else 40)
    out.append(("commutators", c <= 1e-12, f"max {c:.2e}"))
    c = _casimir(20 if quick else 40)
    out.append(("casimir", c <= 1e-10, f"max {c:.2e}"))
    ne, xe = _css(200)
    out.append(("css norm", ne <= 1e-12, f"max {ne:.2e}"))
    out.append(("css xi2 = 1", xe <= 1e-10, f"max {xe:.2e}"))
    r = _rotations()
    out.append(("rotation unitarity/group law", r <= 1e-12, f"max {r:.2e}"))
    h = _builders()
    out.append(("builder hermiticity", h <= 1e-12, f"max {h:.2e}"))
    k = _krylov(10 if quick else 50)
    out.append(("krylov vs dense", k <= 1e-8, f"max {k:.2e}"))
    e = _echo_identity(10 if quick else 50)
    out.append(("echo identity", e <= 1e-10, f"max {e:.2e}"))
    s = _tat_order()
    out.append(("OAT->TAT residual order", abs(s - 2) <= 0.2, f"slope {s:.3f}"))
    return out
