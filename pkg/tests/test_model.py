import numpy as np
import pytest
import scipy.linalg

from spinsqueeze import (
    BosonSpace,
    BudgetExceededError,
    CouplingParams,
    InvalidArgumentError,
    SpinSystem,
    TruncationError,
    build_h_eff,
    build_h_fn_hp,
    build_h_int,
    build_h_oat,
    build_h_tat,
    build_s_fn,
    conjugate_columns,
    css,
    embed,
)
from spinsqueeze.experiments import ExperimentConfig, run_trace
from spinsqueeze.model import boson_vacuum, check_boson_tail
from spinsqueeze.propagate import evolve
from spinsqueeze.spin_ops import SparseHermitianOperator, spin_matrices, spin_matrix

G0 = CouplingParams(1.0, 1.0, -2.0)
PAULI = [np.array([[0, 1], [1, 0]]) / 2, np.array([[0, -1j], [1j, 0]]) / 2, np.diag([0.5, -0.5])]


def on_qubit(op, k, n):
    mats = [np.eye(2)] * n
    mats[k] = op
    out = np.array([[1.0]])
    for m in mats:
        out = np.kron(out, m)
    return out


def triplet_isometry():
    """Columns |uu>, (|ud> + |du>)/sqrt2, |dd> of two qubits: the Dicke basis of spin 1."""
    v = np.zeros((4, 3))
    v[0, 0] = 1
    v[1, 1] = v[2, 1] = 1 / np.sqrt(2)
    v[3, 2] = 1
    return v


def test_coupling_params():
    assert G0.chi == -0.25
    assert G0.tat_rate == pytest.approx(-1 / 12)
    with pytest.raises(InvalidArgumentError):
        CouplingParams(1, 1, 0)
    with pytest.raises(InvalidArgumentError):
        CouplingParams(np.nan, 1, -2)
    p = CouplingParams.anisotropic(0.6)
    assert p.g_y / p.g_x == pytest.approx(0.6)
    assert p.g_x**2 + p.g_y**2 == pytest.approx(2.0)


# -- H_int ---------------------------------------------------------------------

def test_two_qubit_heisenberg():
    h = build_h_int(CouplingParams(1, 1, 1), SpinSystem(1, 1)).toarray()
    assert np.allclose(np.linalg.eigvalsh(h), [-0.75, 0.25, 0.25, 0.25])


def test_ising_limit_diagonal():
    sys = SpinSystem(3, 4)
    h = build_h_int(CouplingParams(0, 0, 1.7), sys)
    assert h.is_diagonal()
    ms = np.repeat(1.5 - np.arange(4), 5)
    mj = np.tile(2.0 - np.arange(5), 4)
    assert np.allclose(h.diagonal(), 1.7 * ms * mj)


def test_h_int_against_qubit_sum():
    # four qubits, S = qubits 0,1 and J = qubits 2,3; project onto the two triplets
    g = (1.0, 1.0, -2.0)
    h16 = sum(gi * on_qubit(PAULI[a], s, 4) @ on_qubit(PAULI[a], j, 4)
              for a, gi in enumerate(g) for s in (0, 1) for j in (2, 3))
    # reorder qubits (s0, s1, j0, j1) -> product of pair isometries
    iso = np.kron(triplet_isometry(), triplet_isometry())
    h9 = iso.T @ h16 @ iso
    got = build_h_int(CouplingParams(*g), SpinSystem(2, 2)).toarray()
    assert np.abs(got - h9).max() < 1e-12
    assert np.allclose(np.linalg.eigvalsh(got), np.linalg.eigvalsh(h9), atol=1e-12)


def test_h_int_conserves_total_z_when_isotropic():
    sys = SpinSystem(4, 30)
    h = build_h_int(CouplingParams(0.8, 0.8, -2.0), sys)
    q = embed(spin_matrix(4, "z"), sys, "S") + embed(spin_matrix(30, "z"), sys, "J")
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.normal(size=sys.total_dim) + 1j * rng.normal(size=sys.total_dim)
        comm = h @ (q @ v) - q @ (h @ v)
        assert np.linalg.norm(comm) <= 1e-10 * np.linalg.norm(v)


def test_h_int_exchange_symmetry():
    sys = SpinSystem(3, 4)
    a = np.linalg.eigvalsh(build_h_int(CouplingParams(1.3, 0.4, -2.0), sys).toarray())
    b = np.linalg.eigvalsh(build_h_int(CouplingParams(0.4, 1.3, -2.0), sys).toarray())
    assert np.allclose(a, b, atol=1e-12)


def test_h_int_budget_refusal():
    with pytest.raises(BudgetExceededError) as e:
        build_h_int(G0, SpinSystem(50, 20000), memory_budget=1000)
    assert e.value.required_bytes > 1000


def test_window_exact_for_free_evolution():
    full = SpinSystem(6, 200)
    win = SpinSystem(6, 200, j_window=20)
    psi_s = css(6, np.pi / 2, 0)
    t = 0.8
    a = evolve(build_h_int(G0, full), full.product(psi_s, css(200, 0, 0)), t)
    b = evolve(build_h_int(G0, win), win.product(psi_s, css(200, 0, 0)), t)
    a = a.reshape(7, 201)
    assert np.abs(a[:, :20].ravel() - b).max() < 1e-10
    assert np.abs(a[:, 20:]).max() < 1e-10
    assert win.window_tail(b) < 1e-12


# -- effective models ---------------------------------------------------------------

def test_h_oat_entries():
    h = build_h_oat(G0, 6)
    assert h.diagonal()[0] == pytest.approx(-(3**2) / 4)
    assert build_h_oat(CouplingParams(0, 1, -2), 6).nnz == 0


def test_h_tat_casimir_offset():
    n = 8
    sx, sy, _ = (op.toarray() for op in spin_matrices(n))
    rate = G0.tat_rate
    s = n / 2
    diff = build_h_tat(G0, n).toarray() - rate * (sx @ sx - sy @ sy)
    assert np.abs(diff - rate * s * (s + 1) * np.eye(n + 1)).max() < 1e-12


@pytest.mark.parametrize("n", [3, 6, 10])
def test_h_tat_spectrum_symmetric(n):
    # S_y -> -S_y (with S_x -> S_y) maps Sx^2 - Sy^2 to its negative
    s = n / 2
    w = np.linalg.eigvalsh(build_h_tat(G0, n).toarray()) - G0.tat_rate * s * (s + 1)
    assert np.allclose(np.sort(w), -np.sort(w)[::-1], atol=1e-12)


def test_h_tat_optimum_paper_scale():
    _, s = run_trace(ExperimentConfig(scheme="free-tat", n_s=50), write=False)
    assert s["xi2_min"] == pytest.approx(1.8 / 50, rel=0.1)


def test_h_eff_limits():
    assert np.allclose(build_h_eff(G0, n_s=5, n_j=0).toarray(), build_h_oat(G0, 5).toarray())
    h = build_h_eff(G0, n_s=1, n_j=10_000)
    # entries g_z (n_j/2) m + chi m^2 at m = +-1/2
    assert h.diagonal()[0] - h.diagonal()[1] == pytest.approx(-10_000)
    with pytest.raises(InvalidArgumentError):
        build_h_eff(G0)


def test_h_eff_matches_system_overload():
    sys = SpinSystem(4, 100)
    assert np.allclose(build_h_eff(G0, sys).toarray(), build_h_eff(G0, n_s=4, n_j=100).toarray())


# -- S_FN ----------------------------------------------------------------------

def ladder_element(j, m, up):
    return np.sqrt(j * (j + 1) - m * (m + 1)) if up else np.sqrt(j * (j + 1) - m * (m - 1))


def hand_s_fn(p, n_s, n_j):
    js, jj = n_s / 2, n_j / 2
    d = (n_s + 1) * (n_j + 1)
    out = np.zeros((d, d))
    pref = 1 / (4 * p.g_z * jj)
    for a in range(n_s + 1):
        ms = js - a
        for b in range(n_j + 1):
            mj = jj - b
            col = a * (n_j + 1) + b
            # (s_dir, j_dir, coefficient) for S_- J_- , S_+ J_+, S_- J_+, S_+ J_-
            terms = [(-1, -1, p.g_x - p.g_y), (1, 1, -(p.g_x - p.g_y)),
                     (-1, 1, p.g_x + p.g_y), (1, -1, -(p.g_x + p.g_y))]
            for ds, dj, c in terms:
                ms2, mj2 = ms + ds, mj + dj
                if abs(ms2) > js or abs(mj2) > jj:
                    continue
                amp = ladder_element(js, ms, ds > 0) * ladder_element(jj, mj, dj > 0)
                row = int(round(js - ms2)) * (n_j + 1) + int(round(jj - mj2))
                out[row, col] += pref * c * amp
    return out


@pytest.mark.parametrize("p", [CouplingParams(1, 1, -2), CouplingParams(1.2, 0.5, -2)])
def test_s_fn_hand_assembly(p):
    got = build_s_fn(p, SpinSystem(2, 4))
    assert got.kind == "anti-hermitian"
    assert np.abs(got.toarray() - hand_s_fn(p, 2, 4)).max() < 1e-14
    assert np.abs(got.toarray() + got.toarray().conj().T).max() < 1e-12


def test_s_fn_isotropic_has_no_pair_terms():
    a = build_s_fn(G0, SpinSystem(2, 4)).toarray()
    # S_+J_+ would connect the lowest state to the highest; it must vanish
    assert a[0, -1] == 0 and a[-1, 0] == 0


# -- HP-transformed Hamiltonian -----------------------------------------------------------

def test_hp_isotropic_no_pair_creation():
    bs = BosonSpace(5)
    h = build_h_fn_hp(G0, 2, 100, bs).toarray().reshape(3, 6, 3, 6)
    # a a and a^dag a^dag change the boson number by 2 within a fixed S block
    for i in range(3):
        for n in range(4):
            assert h[i, n + 2, i, n] == 0


def test_hp_vacuum_offset():
    n_s, n_j, p = 4, 500, CouplingParams(1.1, 0.7, -2)
    bs = BosonSpace(8)
    h = build_h_fn_hp(p, n_s, n_j, bs).toarray()
    m = n_s / 2 - np.arange(n_s + 1)
    want = (p.g_z * n_j / 2 + (p.g_x**2 + p.g_y**2) / (4 * p.g_z)) * m + p.chi * m**2
    diag_vac = np.diag(h).reshape(n_s + 1, bs.dim)[:, 0]
    assert np.allclose(diag_vac, want)


def test_boson_tail_monitor():
    bs = BosonSpace(20)
    psi = np.kron(css(2, 0.3), boson_vacuum(bs))
    assert check_boson_tail(psi, 2, bs) == 0
    bad = np.zeros_like(psi)
    bad[15] = 1
    with pytest.raises(TruncationError):
        check_boson_tail(bad, 2, bs)


# -- conjugation ------------------------------------------------------------------

def test_conjugation_zero_generator_is_identity():
    sys = SpinSystem(2, 3)
    h = build_h_int(G0, sys)
    zero = SparseHermitianOperator.from_dense(np.zeros((sys.total_dim,) * 2), "anti-hermitian")
    v = np.random.default_rng(1).normal(size=sys.total_dim) + 0j
    assert np.allclose(conjugate_columns(h, zero).matvec(v), h @ v)


def test_conjugation_dense_oracle():
    sys = SpinSystem(2, 8)
    p = CouplingParams(1.0, 0.6, -2.0)
    h = build_h_int(p, sys)
    g = build_s_fn(p, sys)
    ref = scipy.linalg.expm(g.toarray()) @ h.toarray() @ scipy.linalg.expm(-g.toarray())
    conj = conjugate_columns(h, g)
    cols = np.column_stack([conj.matvec(e) for e in np.eye(sys.total_dim, dtype=complex)])
    assert np.abs(cols - ref).max() < 1e-10
    # spectrum preserved
    assert np.allclose(np.linalg.eigvalsh((cols + cols.conj().T) / 2), np.linalg.eigvalsh(h.toarray()), atol=1e-10)
    # evolution through the similarity equals exp(-i H' t)
    psi = sys.product(css(2, 1.0), css(8, 0.0))
    w, v = np.linalg.eigh((ref + ref.conj().T) / 2)
    assert np.abs(conj.evolve(psi, 0.9) - (v * np.exp(-0.9j * w)) @ v.conj().T @ psi).max() < 1e-9


def test_conjugation_rejects_hermitian_generator():
    sys = SpinSystem(1, 2)
    h = build_h_int(G0, sys)
    with pytest.raises(InvalidArgumentError):
        conjugate_columns(h, h)


def test_all_builders_hermitian():
    p = CouplingParams(1.0, 0.6, -2.0)
    sys = SpinSystem(3, 8)
    for op in (build_h_int(p, sys), build_h_oat(p, 5), build_h_tat(p, 5), build_h_eff(p, sys),
               build_s_fn(p, sys), build_h_fn_hp(p, 3, 8, BosonSpace(6))):
        assert op.hermiticity_error() <= 1e-12


# -- cross-model agreement (desk scale) -----------------------------------------------------

T_OAT_10 = 2 * 3 ** (1 / 6) * 2 / 10 ** (2 / 3)


def trace(scheme, n_j=1000, **kw):
    cfg = ExperimentConfig(scheme=scheme, n_s=10, n_j=n_j, horizon=T_OAT_10, samples=60, **kw)
    tr, _ = run_trace(cfg, write=False)
    return tr.xi2[: cfg.samples + 1]  # drop any auto-extension past the horizon


def rel_dev(a, b):
    return float(np.max(np.abs(a - b) / b))


def test_int_converges_to_eff_with_n_j():
    devs = [rel_dev(trace("free-int", nj), trace("free-eff", nj)) for nj in (300, 1000, 3000)]
    assert devs[0] > devs[1] > devs[2]
    # corrections shrink like 1/n_j
    assert devs[1] / devs[2] == pytest.approx(3.0, rel=0.25)


@pytest.mark.xfail(strict=True, reason="exact model deviates ~12% from the effective OAT at n_j/n_s = 100; "
                                      "the gap closes as 1/n_j (see test_int_converges_to_eff_with_n_j)")
def test_int_matches_eff_within_5pct():
    assert rel_dev(trace("free-int"), trace("free-eff")) <= 0.05


def test_hp_tracks_effective_model():
    assert rel_dev(trace("free-fn-hp", boson_cutoff=30), trace("free-eff")) < 1e-3


@pytest.mark.xfail(strict=True, reason="HP-truncated H_FN follows the effective OAT, and so inherits "
                                      "the same ~1/n_j gap to the exact model")
def test_hp_matches_int_within_2pct():
    assert rel_dev(trace("free-fn-hp", boson_cutoff=30), trace("free-int")) <= 0.02


def test_oat_scaling_exponent():
    from spinsqueeze.experiments import run_scaling

    r = run_scaling(ExperimentConfig(scheme="free-oat", n_s=10, n_j=1000), "n_s", [10, 20, 40, 60, 80, 100])
    assert r["fit_xi2"]["exponent"] == pytest.approx(-2 / 3, abs=0.1)
