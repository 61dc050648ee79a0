import numpy as np
import pytest

import oracles
from isingspec import edsolver
from isingspec.model import ModelParams


def test_zero_momentum_dimension_is_the_necklace_count():
    # (1/L) sum_{d|L} phi(d) 2^(L/d)
    for L, dim in ((2, 3), (3, 4), (4, 6), (12, 352)):
        basis = edsolver.build_zero_momentum_basis(L)
        assert basis.dim == dim


def test_basis_representatives_are_orbit_minima():
    basis = edsolver.build_zero_momentum_basis(6)
    mask = (1 << 6) - 1
    for rep in basis.reps:
        orbit = {int(((rep << s) | (rep >> (6 - s))) & mask) for s in range(6)}
        assert rep == min(orbit)


def test_sector_levels_live_inside_the_full_spectrum():
    p = ModelParams(8, 0.45, 0.25)
    full = np.linalg.eigvalsh(oracles.hamiltonian(p.L, p.g, p.h))
    lv = edsolver.solve_sector(p, n_low=None)
    assert edsolver.spectrum_contains(full, lv.eigenvalues, tol=1e-8)
    # the translation-invariant ground state sits in this sector
    assert lv.levels[0] == pytest.approx(full[0], abs=1e-8)


def test_pure_bond_ring_ground_energy():
    lv = edsolver.solve_sector(ModelParams(3, 0.0, 0.0), n_low=None)
    assert lv.levels[0] == pytest.approx(-3.0, abs=1e-12)


def test_gap_accessors():
    lv = edsolver.solve_sector(ModelParams(8, 0.5, 0.3), n_low=6)
    assert lv.gaps.shape == (len(lv.levels) - 1,)
    assert lv.gap(1) == pytest.approx(lv.levels[1] - lv.levels[0])
    assert lv.diff(3, 1) == pytest.approx(lv.gap(3) - lv.gap(1))
    with pytest.raises(IndexError):
        lv.gap(0)
    with pytest.raises(IndexError):
        lv.gap(len(lv.levels))


def test_levels_sorted_with_positive_multiplicities():
    lv = edsolver.solve_sector(ModelParams(10, 0.7, 0.1), n_low=8)
    assert np.all(np.diff(lv.levels) > 0)
    assert int(lv.multiplicities.sum()) == lv.eigenvalues.size
    assert lv.meta["dim"] == edsolver.build_zero_momentum_basis(10).dim


def test_iterative_method_agrees_with_dense():
    p = ModelParams(10, 0.5, 0.3)
    dense = edsolver.solve_sector(p, n_low=5, method="dense")
    iterative = edsolver.solve_sector(p, n_low=5, method="iterative")
    assert iterative.method == "iterative"
    assert iterative.residual < 1e-8
    assert np.abs(dense.eigenvalues - iterative.eigenvalues).max() < 1e-8


def test_iterative_full_spectrum_is_rejected():
    with pytest.raises(ValueError):
        edsolver.solve_sector(ModelParams(8, 0.5, 0.3), n_low=None, method="iterative")


def test_unconverged_eigenpairs_are_reported(monkeypatch):
    import scipy.sparse.linalg

    def bad_eigsh(matrix, k, which):
        vals = np.zeros(k)
        vecs = np.eye(matrix.shape[0], k)
        return vals, vecs

    monkeypatch.setattr(scipy.sparse.linalg, "eigsh", bad_eigsh)
    with pytest.raises(edsolver.ConvergenceError) as exc:
        edsolver.solve_sector(ModelParams(8, 0.5, 0.3), n_low=3, method="iterative")
    assert exc.value.residual > 1e-8


def test_free_fermion_oracle_equals_the_dense_spectrum():
    # the whole point of the oracle: exact match at h = 0, all parity sectors
    for L in (4, 6):
        for g in (0.3, 1.0):
            dense = np.linalg.eigvalsh(oracles.hamiltonian(L, g, 0.0))
            oracle = edsolver.free_fermion_oracle(L, g)
            assert oracle.shape == (2**L,)
            assert np.abs(np.sort(dense) - oracle).max() < 1e-8


def test_free_fermion_oracle_domain():
    with pytest.raises(ValueError):
        edsolver.free_fermion_oracle(5, 0.5)
    with pytest.raises(ValueError):
        edsolver.free_fermion_oracle(2, 0.5)
    with pytest.raises(ValueError):
        edsolver.free_fermion_oracle(edsolver.ORACLE_L_MAX + 2, 0.5)


def test_spectrum_contains_is_a_multiset_check():
    spectrum = np.array([0.0, 0.0, 1.0, 2.0])
    assert edsolver.spectrum_contains(spectrum, [0.0, 0.0, 2.0])
    assert not edsolver.spectrum_contains(spectrum, [0.0, 0.0, 0.0])
    assert not edsolver.spectrum_contains(spectrum, [1.5])
    assert edsolver.spectrum_contains(spectrum, [1.0 + 5e-9])


def test_sector_matrix_is_symmetric():
    p = ModelParams(7, 0.5, 0.3)
    basis = edsolver.build_zero_momentum_basis(p.L)
    mat = edsolver.assemble_sector_hamiltonian(p, basis)
    arr = mat.toarray() if hasattr(mat, "toarray") else np.asarray(mat)
    assert np.abs(arr - arr.T).max() < 1e-12
