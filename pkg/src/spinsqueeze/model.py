"""Hamiltonians for two collectively coupled spin ensembles.

Units: hbar = 1; couplings are rates.  Everything is expressed in the
descending-m Dicke basis of ``spin_ops``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import BudgetExceededError, InvalidArgumentError, TruncationError
from .propagate import DEFAULT_CONFIG, PropagatorConfig, evolve
from .spin_ops import (
    SparseHermitianOperator,
    SpinSystem,
    _check_count,
    ladder_matrices,
    magnetic_numbers,
    spin_matrices,
)

DEFAULT_MEMORY_BUDGET = 4 * 2**30
DEFAULT_BOSON_CUTOFF = 60
BOSON_TAIL_TOL = 1e-8
BOSON_TAIL_WIDTH = 10


@dataclass(frozen=True)
class CouplingParams:
    """Coupling strengths of H = g_x SxJx + g_y SyJy + g_z SzJz."""

    g_x: float = 1.0
    g_y: float = 1.0
    g_z: float = -2.0
    chi: float = field(init=False)

    def __post_init__(self):
        for name in ("g_x", "g_y", "g_z"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        if self.g_z == 0:
            raise InvalidArgumentError("g_z must be nonzero")
        object.__setattr__(self, "chi", self.g_x * self.g_y / (2 * self.g_z))

    @property
    def tat_rate(self) -> float:
        """Prefactor of (2Sx^2 + Sz^2) in the synthesized two-axis twisting Hamiltonian."""
        return self.chi / 3

    @classmethod
    def anisotropic(cls, ratio: float, g: float = 1.0, g_z: float | None = None) -> "CouplingParams":
        """g_y/g_x = ratio at fixed g_x^2 + g_y^2 = 2 g^2 (g_z defaults to -2g)."""
        g_x = g * np.sqrt(2.0 / (1.0 + ratio**2))
        return cls(g_x, ratio * g_x, -2.0 * g if g_z is None else g_z)


@dataclass(frozen=True)
class BosonSpace:
    n_max: int = DEFAULT_BOSON_CUTOFF

    def __post_init__(self):
        _check_count(self.n_max, "n_max")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    def annihilation(self) -> sp.csr_matrix:
        return sp.diags(np.sqrt(np.arange(1, self.dim)), 1, format="csr", dtype=np.complex128)


def estimate_h_int_bytes(sys: SpinSystem) -> int:
    # up to 5 nonzeros per row; sparse sums keep ~3 copies alive while building
    nnz = 5 * sys.total_dim
    return 3 * (nnz * (16 + 4) + 4 * (sys.total_dim + 1))


def build_h_int(
    params: CouplingParams, sys: SpinSystem, memory_budget: int = DEFAULT_MEMORY_BUDGET
) -> SparseHermitianOperator:
    """Exact coupling Hamiltonian on the full product space."""
    need = estimate_h_int_bytes(sys)
    if need > memory_budget:
        raise BudgetExceededError(need, memory_budget, "building H_int")
    sx, sy, sz = spin_matrices(sys.n_s)
    jx, jy, jz = sys.j_matrices()
    mat = (
        params.g_x * sp.kron(sx.matrix, jx.matrix)
        + params.g_y * sp.kron(sy.matrix, jy.matrix)
        + params.g_z * sp.kron(sz.matrix, jz.matrix)
    ).tocsr()
    return SparseHermitianOperator(mat, "hermitian")


def build_h_oat(params: CouplingParams, n_s: int) -> SparseHermitianOperator:
    """chi * Sz^2 on the S ensemble alone."""
    m = magnetic_numbers(n_s)
    return SparseHermitianOperator(sp.diags(params.chi * m**2, 0, format="csr"), "hermitian")


def build_h_tat(params: CouplingParams, n_s: int) -> SparseHermitianOperator:
    """(g_x g_y / 6 g_z) (2 Sx^2 + Sz^2), equal to rate*(Sx^2 - Sy^2) + rate*S(S+1)."""
    sx, _, sz = spin_matrices(n_s)
    mat = params.tat_rate * (2 * (sx.matrix @ sx.matrix) + sz.matrix @ sz.matrix)
    return SparseHermitianOperator(mat, "hermitian")


def build_h_eff(params: CouplingParams, sys: SpinSystem | None = None, *, n_s: int | None = None,
                n_j: int | None = None) -> SparseHermitianOperator:
    """Linear-plus-twisting Hamiltonian g_z (n_j/2) Sz + chi Sz^2 on the S ensemble.

    Either pass a ``SpinSystem`` or explicit ``n_s``/``n_j`` (``n_j = 0`` allowed).
    """
    if sys is not None:
        n_s, n_j = sys.n_s, sys.n_j
    if n_s is None or n_j is None or n_j < 0:
        raise InvalidArgumentError("build_h_eff needs a SpinSystem or n_s and n_j >= 0")
    m = magnetic_numbers(n_s)
    diag = params.g_z * (n_j / 2) * m + params.chi * m**2
    return SparseHermitianOperator(sp.diags(diag, 0, format="csr"), "hermitian")


def build_s_fn(params: CouplingParams, sys: SpinSystem) -> SparseHermitianOperator:
    """Anti-Hermitian generator of the Frohlich-Nakajima transformation."""
    s_up, s_dn = ladder_matrices(sys.n_s)
    j_up, j_dn = sys.j_ladder()
    pref = 1.0 / (4 * params.g_z * sys.spin_j)
    mat = pref * (
        (params.g_x - params.g_y) * (sp.kron(s_dn, j_dn) - sp.kron(s_up, j_up))
        + (params.g_x + params.g_y) * (sp.kron(s_dn, j_up) - sp.kron(s_up, j_dn))
    )
    return SparseHermitianOperator(mat.tocsr(), "anti-hermitian")


def build_h_fn_hp(params: CouplingParams, n_s: int, n_j: int,
                  bspace: BosonSpace = BosonSpace()) -> SparseHermitianOperator:
    """Transformed Hamiltonian with J mapped to a truncated boson (spin (x) boson space).

    Contains the S_z-bracket (constant, pair-creation and number terms), the
    1/sqrt(2J) linear spin-boson couplings and the chi Sz^2 term; the
    higher-order remainder is not included.  Ordering is S-major.
    """
    n_s, n_j = _check_count(n_s, "n_s"), _check_count(n_j, "n_j")
    gx, gy, gz = params.g_x, params.g_y, params.g_z
    big_j = n_j / 2
    sx, sy, sz = spin_matrices(n_s)
    a = bspace.annihilation()
    ad = a.conj().T.tocsr()
    eye_b = sp.identity(bspace.dim, format="csr", dtype=np.complex128)

    bracket = (
        (gz * big_j + (gx**2 + gy**2) / (4 * gz)) * eye_b
        + (gx**2 - gy**2) / (4 * gz) * (a @ a + ad @ ad)
        + (gx**2 + gy**2 - 2 * gz**2) / (2 * gz) * (ad @ a)
    )
    linear = (gx * sp.kron(sx.matrix, a + ad) + 1j * gy * sp.kron(sy.matrix, ad - a)) / np.sqrt(2 * big_j)
    twist = params.chi * sp.kron(sz.matrix @ sz.matrix, eye_b)
    mat = sp.kron(sz.matrix, bracket) + linear + twist
    return SparseHermitianOperator(mat.tocsr(), "hermitian")


def boson_vacuum(bspace: BosonSpace) -> np.ndarray:
    vac = np.zeros(bspace.dim, dtype=np.complex128)
    vac[0] = 1.0
    return vac


def boson_populations(psi: np.ndarray, n_s: int, bspace: BosonSpace) -> np.ndarray:
    amps = psi.reshape(n_s + 1, bspace.dim)
    return np.sum(np.abs(amps) ** 2, axis=0)


def check_boson_tail(psi: np.ndarray, n_s: int, bspace: BosonSpace, tol: float = BOSON_TAIL_TOL) -> float:
    """Population above n_max - 10; raises ``TruncationError`` if it exceeds ``tol``."""
    pops = boson_populations(psi, n_s, bspace)
    tail = float(pops[max(bspace.n_max - BOSON_TAIL_WIDTH, 0) + 1:].sum())
    if tail > tol:
        raise TruncationError(
            f"boson population {tail:.3e} above level {bspace.n_max - BOSON_TAIL_WIDTH} "
            f"exceeds {tol:.1e}; raise n_max (currently {bspace.n_max})"
        )
    return tail


class ConjugatedOperator:
    """Action of exp(sign*G) @ op @ exp(-sign*G) for anti-Hermitian ``G``.

    The conjugated matrix is never formed: each application costs two
    exponential-times-vector products, done by Lanczos on the Hermitian
    operator iG.
    """

    def __init__(self, op: SparseHermitianOperator, generator: SparseHermitianOperator,
                 sign: int = 1, cfg: PropagatorConfig = DEFAULT_CONFIG):
        if generator.kind != "anti-hermitian" or generator.hermiticity_error() > 1e-12:
            raise InvalidArgumentError("generator must be anti-Hermitian")
        if op.dim != generator.dim:
            raise InvalidArgumentError(f"dimension mismatch: op {op.dim}, generator {generator.dim}")
        if sign not in (1, -1):
            raise InvalidArgumentError("sign must be +1 or -1")
        self.op = op
        self.sign = sign
        self.cfg = cfg
        # exp(s G) v = exp(-i (iG) s) v
        self._herm = SparseHermitianOperator(1j * generator.matrix, "hermitian")
        self._zero = generator.nnz == 0

    @property
    def dim(self) -> int:
        return self.op.dim

    def transform(self, v: np.ndarray, s: float) -> np.ndarray:
        """exp(s * G) v."""
        if self._zero or s == 0:
            return np.array(v, dtype=np.complex128)
        return evolve(self._herm, v, s, self.cfg)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        w = self.transform(v, -self.sign)
        w = self.op.matvec(w)
        return self.transform(w, self.sign)

    __matmul__ = matvec

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        """exp(-i H' t) psi via the similarity exp(sG) exp(-i op t) exp(-sG)."""
        w = self.transform(psi, -self.sign)
        w = evolve(self.op, w, t, self.cfg)
        return self.transform(w, self.sign)


def conjugate_columns(op: SparseHermitianOperator, generator: SparseHermitianOperator, sign: int = 1,
                      cfg: PropagatorConfig = DEFAULT_CONFIG) -> ConjugatedOperator:
    return ConjugatedOperator(op, generator, sign, cfg)
