"""Collective spin operators, coherent states and rotations in the Dicke basis.

Basis convention (used everywhere in the package): each ensemble is stored in
its maximal symmetric (Dicke) manifold with states ordered by *descending*
magnetic quantum number, ``m = j, j-1, ..., -j``.  The product space of the
two ensembles is S-major::

    index = i_s * dim_j + i_j

so a product-space vector reshaped to ``(dim_s, dim_j)`` has the S ensemble
along rows.  The partial trace over J is then ``psi @ psi.conj().T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import gammaln, xlogy

from .exceptions import InvalidArgumentError

Kind = Literal["hermitian", "anti-hermitian", "general"]
Axis = Literal["x", "y", "z"]
Side = Literal["S", "J"]

_KINDS = ("hermitian", "anti-hermitian", "general")


@dataclass(frozen=True)
class SpinSystem:
    """Two collective spins of ``n_s`` and ``n_j`` spin-1/2 particles.

    ``j_window`` optionally keeps only the top ``j_window`` Dicke levels of J
    (m_j = J, J-1, ...).  Starting from J polarized along +z, the dynamics only
    populates a few excitations below the top state, so the window reproduces the
    full product space while shrinking it by ~n_j / j_window.  ``None`` keeps the
    full (n_j + 1)-dim factor.
    """

    n_s: int
    n_j: int
    j_window: int | None = None

    def __post_init__(self):
        for name in ("n_s", "n_j"):
            value = getattr(self, name)
            if not _is_count(value) or value < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
        if self.j_window is not None and (not _is_count(self.j_window) or self.j_window < 2):
            raise InvalidArgumentError(f"j_window must be an integer >= 2, got {self.j_window!r}")

    @property
    def dim_s(self) -> int:
        return self.n_s + 1

    @property
    def dim_j(self) -> int:
        if self.j_window is None:
            return self.n_j + 1
        return min(self.n_j + 1, self.j_window)

    @property
    def windowed(self) -> bool:
        return self.dim_j < self.n_j + 1

    @property
    def total_dim(self) -> int:
        return self.dim_s * self.dim_j

    @property
    def spin_s(self) -> float:
        return self.n_s / 2

    @property
    def spin_j(self) -> float:
        return self.n_j / 2

    def index(self, i_s: int, i_j: int) -> int:
        return i_s * self.dim_j + i_j

    def j_ladder(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """(J_+, J_-) restricted to the retained J levels."""
        k = self.dim_j
        j = self.n_j / 2
        m = (j - np.arange(k))[1:]
        up = sp.diags(np.sqrt(j * (j + 1) - m * (m + 1)), 1, shape=(k, k), format="csr", dtype=np.complex128)
        return up, up.T.tocsr()

    def j_matrices(self):
        """(J_x, J_y, J_z) restricted to the retained J levels."""
        up, down = self.j_ladder()
        jz = sp.diags(self.n_j / 2 - np.arange(self.dim_j), 0, format="csr", dtype=np.complex128)
        return (SparseHermitianOperator((up + down) / 2), SparseHermitianOperator((up - down) / 2j),
                SparseHermitianOperator(jz))

    def j_state(self, psi_j: np.ndarray) -> np.ndarray:
        """Restrict a full (n_j + 1)-dim J state to the window (no renormalization)."""
        psi_j = np.asarray(psi_j)
        if psi_j.shape != (self.n_j + 1,):
            raise InvalidArgumentError(f"J state must have {self.n_j + 1} amplitudes")
        return psi_j[: self.dim_j]

    def product(self, psi_s: np.ndarray, psi_j: np.ndarray) -> np.ndarray:
        """|psi_s> (x) |psi_j> with psi_j given on the full J space."""
        return np.kron(np.asarray(psi_s), self.j_state(psi_j))

    def window_tail(self, psi: np.ndarray, width: int = 10) -> float:
        """Population in the lowest ``width`` retained J levels (0 when not windowed)."""
        if not self.windowed:
            return 0.0
        pops = np.sum(np.abs(np.asarray(psi).reshape(self.dim_s, self.dim_j)) ** 2, axis=0)
        return float(pops[max(self.dim_j - width, 1):].sum())


@dataclass(frozen=True, eq=False)
class SparseHermitianOperator:
    """Row-compressed complex matrix tagged with its (anti-)hermiticity.

    Explicit zeros are dropped and column indices are sorted on construction.
    """

    matrix: sp.csr_matrix
    kind: Kind = "hermitian"
    _dense: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgumentError(f"unknown operator kind {self.kind!r}")
        m = sp.csr_matrix(self.matrix, dtype=np.complex128)
        if m.shape[0] != m.shape[1]:
            raise InvalidArgumentError(f"operator must be square, got shape {m.shape}")
        m.eliminate_zeros()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_dense(cls, a, kind: Kind = "hermitian") -> "SparseHermitianOperator":
        return cls(sp.csr_matrix(np.asarray(a, dtype=np.complex128)), kind)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def __matmul__(self, other):
        if isinstance(other, SparseHermitianOperator):
            return SparseHermitianOperator(self.matrix @ other.matrix, "general")
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        if "a" not in self._dense:
            self._dense["a"] = self.matrix.toarray()
        return self._dense["a"]

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def is_diagonal(self) -> bool:
        coo = self.matrix.tocoo()
        return bool(np.all(coo.row == coo.col))

    def adjoint(self) -> "SparseHermitianOperator":
        return SparseHermitianOperator(self.matrix.conj().T.tocsr(), self.kind)

    def hermiticity_error(self) -> float:
        """Largest elementwise violation of the tagged symmetry, relative to max |A_ij|."""
        if self.kind == "general":
            return 0.0
        sign = 1.0 if self.kind == "hermitian" else -1.0
        diff = self.matrix - sign * self.matrix.conj().T
        scale = max(abs(self.matrix).max() if self.nnz else 0.0, 1e-300)
        return float(abs(diff).max() / scale) if diff.nnz else 0.0

    def check(self, tol: float = 1e-12) -> None:
        err = self.hermiticity_error()
        if err > tol:
            raise InvalidArgumentError(f"operator flagged {self.kind} violates symmetry by {err:.3e}")

    def scaled(self, factor: complex, kind: Kind | None = None) -> "SparseHermitianOperator":
        return SparseHermitianOperator(self.matrix * factor, kind or self.kind)

    def __add__(self, other: "SparseHermitianOperator") -> "SparseHermitianOperator":
        kind = self.kind if self.kind == other.kind else "general"
        return SparseHermitianOperator(self.matrix + other.matrix, kind)


def _is_count(n) -> bool:
    return isinstance(n, (int, np.integer)) and not isinstance(n, bool)


def _check_count(n, name: str = "n") -> int:
    if not _is_count(n) or n < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


def magnetic_numbers(n: int) -> np.ndarray:
    """m = j, j-1, ..., -j for j = n/2."""
    n = _check_count(n)
    return n / 2 - np.arange(n + 1)


def raising(n: int) -> sp.csr_matrix:
    """S_+ in the descending-m basis (superdiagonal)."""
    j = n / 2
    m = magnetic_numbers(n)[1:]
    return sp.diags(np.sqrt(j * (j + 1) - m * (m + 1)), 1, format="csr", dtype=np.complex128)


def ladder_matrices(n: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(S_+, S_-) as plain sparse matrices."""
    up = raising(_check_count(n))
    return up, up.T.tocsr()


def spin_matrices(n: int) -> tuple[SparseHermitianOperator, SparseHermitianOperator, SparseHermitianOperator]:
    """Collective (S_x, S_y, S_z) for ``n`` spin-1/2 particles (spin n/2)."""
    n = _check_count(n)
    up, down = ladder_matrices(n)
    sx = SparseHermitianOperator((up + down) / 2)
    sy = SparseHermitianOperator((up - down) / 2j)
    sz = SparseHermitianOperator(sp.diags(magnetic_numbers(n), 0, format="csr", dtype=np.complex128))
    return sx, sy, sz


def spin_matrix(n: int, axis: Axis) -> SparseHermitianOperator:
    return spin_matrices(n)["xyz".index(_check_axis(axis))]


def _check_axis(axis: str) -> str:
    if axis not in ("x", "y", "z"):
        raise InvalidArgumentError(f"axis must be one of x, y, z; got {axis!r}")
    return axis


def embed(op: SparseHermitianOperator, sys: SpinSystem, side: Side) -> SparseHermitianOperator:
    """Kronecker-embed a single-ensemble operator into the product space."""
    if side == "S":
        if op.dim != sys.dim_s:
            raise InvalidArgumentError(f"S-side operator has dim {op.dim}, expected {sys.dim_s}")
        mat = sp.kron(op.matrix, sp.identity(sys.dim_j, format="csr"), format="csr")
    elif side == "J":
        if op.dim != sys.dim_j:
            raise InvalidArgumentError(f"J-side operator has dim {op.dim}, expected {sys.dim_j}")
        mat = sp.kron(sp.identity(sys.dim_s, format="csr"), op.matrix, format="csr")
    else:
        raise InvalidArgumentError(f"side must be 'S' or 'J', got {side!r}")
    return SparseHermitianOperator(mat, op.kind)


def css_amplitudes(n: int, theta, phi=0.0) -> np.ndarray:
    """Coherent-state amplitudes, vectorised over ``theta``/``phi``.

    Returns an array of shape ``broadcast(theta, phi).shape + (n + 1,)``.
    Binomial weights are combined in log space so large ``n`` does not overflow.
    """
    n = _check_count(n)
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    k = np.arange(n + 1)  # k = j - m
    log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    log_mag = 0.5 * log_binom + xlogy(n - k, np.abs(np.cos(theta / 2))) + xlogy(k, np.abs(np.sin(theta / 2)))
    # 0.0 ** 0 == 1, so poles (theta = 0, pi) need no special casing
    sign = np.sign(np.cos(theta / 2)) ** (n - k) * np.sign(np.sin(theta / 2)) ** k
    return sign * np.exp(log_mag) * np.exp(1j * k * phi)


def css(n: int, theta: float, phi: float = 0.0) -> np.ndarray:
    """Spin coherent state of ``n`` particles with mean spin along (theta, phi)."""
    psi = css_amplitudes(n, theta, phi)
    return psi / np.linalg.norm(psi)


def product_state(psi_s: np.ndarray, psi_j: np.ndarray) -> np.ndarray:
    """|psi_s> (x) |psi_j> in the S-major product ordering."""
    return np.kron(psi_s, psi_j)


def rotation_matrix(n: int, axis: Axis, angle: float) -> np.ndarray:
    """Dense exp(-i * angle * S_axis) on the (n+1)-dim space."""
    n = _check_count(n)
    _check_axis(axis)
    if axis == "z":
        return np.diag(np.exp(-1j * angle * magnetic_numbers(n)))
    gen = spin_matrix(n, axis).toarray()
    # Hermitian generator: exponentiate through its eigenbasis, which keeps R unitary to rounding.
    w, v = scipy.linalg.eigh(gen)
    return (v * np.exp(-1j * angle * w)) @ v.conj().T


def rotation(n: int, axis: Axis, angle: float) -> SparseHermitianOperator:
    """exp(-i * angle * S_axis) as a general (unitary) operator."""
    return SparseHermitianOperator.from_dense(rotation_matrix(n, axis, angle), "general")


def apply_on_s(u: np.ndarray, psi: np.ndarray, dim_s: int) -> np.ndarray:
    """Apply a dense S-factor matrix to a product-space (or bare S) vector."""
    if psi.shape[0] == dim_s:
        return u @ psi
    return (u @ psi.reshape(dim_s, -1)).reshape(-1)
