import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from impurity_billiard import (
    RectangleBilliard,
    RectImpurity,
    eigendecompose,
    eigenfunction_value,
    lowest_modes,
    mode_energy,
    mode_overlaps,
    sliced_eigenvalues,
    solve_oracle,
)
from impurity_billiard.oracle import (
    EigenSolverError,
    assemble_hamiltonian,
    oracle_basis,
    overlap_matrix_1d,
    potential_element,
    wavefunction_grid,
)


def test_full_interval_overlap_is_identity():
    q = np.arange(1, 30)
    assert np.allclose(overlap_matrix_1d(q, q, 2.0, 0.0, 2.0), np.eye(len(q)), atol=1e-13)


@pytest.mark.parametrize("a,b", [(1, 1), (1, 2), (3, 7), (5, 5), (12, 13)])
def test_overlap_closed_form_vs_quad(a, b):
    length, lo, hi = 1.3, 0.41, 0.57
    ref, _ = integrate.quad(lambda x: (2 / length) * math.sin(a * math.pi * x / length)
                            * math.sin(b * math.pi * x / length), lo, hi, epsabs=1e-14, epsrel=1e-13)
    assert overlap_matrix_1d([a], [b], length, lo, hi)[0, 0] == pytest.approx(ref, abs=1e-13)


def test_full_rectangle_impurity_shifts_every_level(billiard):
    imp = RectImpurity((billiard.lx / 2, billiard.ly / 2), billiard.lx, billiard.ly, 3.5)
    with pytest.warns(UserWarning):
        h = assemble_hamiltonian(billiard, imp, 40)
    assert np.allclose(h, np.diag(lowest_modes(billiard, 40).energy + 3.5), atol=1e-12)


def test_potential_element_symmetric_and_matches_matrix(billiard):
    imp = RectImpurity.reference(-0.25)
    basis = lowest_modes(billiard, 30)
    h = assemble_hamiltonian(billiard, imp, basis)
    assert np.array_equal(h, h.T)
    a, b = basis[3], basis[11]
    assert potential_element(billiard, imp, a, b) == pytest.approx(h[3, 11], rel=1e-12)
    assert potential_element(billiard, imp, a, b) == pytest.approx(potential_element(billiard, imp, b, a))


def test_trace(billiard):
    imp = RectImpurity.reference(2.0)
    basis = lowest_modes(billiard, 60)
    result = eigendecompose(assemble_hamiltonian(billiard, imp, basis), basis)
    diag = [mode_energy(billiard, m.m, m.n) + potential_element(billiard, imp, m, m) for m in basis]
    assert result.eigenvalues.sum() == pytest.approx(sum(diag), rel=1e-12)


def test_two_by_two(billiard):
    imp = RectImpurity.reference(1.5)
    h = assemble_hamiltonian(billiard, imp, 2)
    a, b, c = h[0, 0], h[1, 1], h[0, 1]
    mean, half = 0.5 * (a + b), math.hypot(0.5 * (a - b), c)
    assert np.allclose(eigendecompose(h).eigenvalues, [mean - half, mean + half], rtol=1e-13)


def test_weak_pointlike_first_order(billiard):
    v1 = 0.005
    imp = RectImpurity.reference(v1)
    result = solve_oracle(billiard, imp, basis_factor=2.0, n_lowest=3)
    phi2 = eigenfunction_value(billiard, (1, 1), *imp.center) ** 2
    shift = result.eigenvalues[0] - mode_energy(billiard, 1, 1)
    assert shift == pytest.approx(v1 * phi2, rel=0.05)


def test_monotone_in_potential(billiard):
    values = [solve_oracle(billiard, RectImpurity.reference(v), basis_factor=2.0, n_lowest=8).eigenvalues
              for v in (-2.0, -0.5, 0.0, 0.5, 2.0)]
    for lo, hi in zip(values, values[1:]):
        assert np.all(hi >= lo - 1e-12)


def test_variational_bound(billiard):
    # a leading principal submatrix has every eigenvalue above its counterpart
    imp = RectImpurity.reference(-0.25)
    small = eigendecompose(assemble_hamiltonian(billiard, imp, 200), n_lowest=10).eigenvalues
    large = eigendecompose(assemble_hamiltonian(billiard, imp, 800), n_lowest=10).eigenvalues
    assert np.all(small >= large - 1e-12)


def test_basis_convergence(billiard):
    imp = RectImpurity.reference(-0.25)
    window = (1.6, 6.0)
    runs = [sliced_eigenvalues(billiard, imp, window, basis_factor=f) for f in (2.5, 10, 40)]
    assert all(len(r) == 3 for r in runs)
    assert np.all(np.abs(runs[2] - runs[1]) < np.abs(runs[1] - runs[0]))


@pytest.mark.parametrize("v1", [10.0, -3.33, -0.25])
def test_slicing_matches_dense(billiard, v1):
    imp = RectImpurity.reference(v1)
    dense = solve_oracle(billiard, imp, n_lowest=40).eigenvalues
    window = (-100.0, 20.0)
    sliced = sliced_eigenvalues(billiard, imp, window)
    assert np.allclose(sliced, dense[(dense > window[0]) & (dense < window[1])], atol=1e-8)


def test_eigendecompose_checks():
    with pytest.raises(ValueError):
        eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        eigendecompose(np.ones((2, 3)))
    with pytest.raises(EigenSolverError):
        eigendecompose(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_memory_budget(billiard):
    with pytest.raises(MemoryError):
        assemble_hamiltonian(billiard, RectImpurity.reference(1.0), 5000, memory_budget=10_000)


def test_overlaps_sum_to_one(billiard):
    result = solve_oracle(billiard, RectImpurity.reference(-0.25), n_lowest=6)
    weights = mode_overlaps(result, 3)
    assert sum(weights.values()) == pytest.approx(1.0, abs=1e-12)
    assert set(list(weights)[:2]) <= set(result.basis.labels())
    with pytest.raises(IndexError):
        mode_overlaps(result, 6)


def test_oracle_basis_size(billiard):
    imp = RectImpurity.reference(1.0)
    basis = oracle_basis(billiard, imp, 10.0)
    assert basis.energy[-1] <= 10.0 / (billiard.mass * imp.area)
    assert len(basis) == pytest.approx(10.0 / (billiard.mass * imp.area), rel=0.05)


def test_pure_mode_raster(billiard):
    basis = lowest_modes(billiard, 10)
    coeffs = np.zeros(10)
    coeffs[basis.position(2, 3)] = 1.0
    amp, dens = wavefunction_grid(billiard, coeffs, 17, 13, modes=basis)
    xs = (np.arange(17) + 0.5) * billiard.lx / 17
    ys = (np.arange(13) + 0.5) * billiard.ly / 13
    ref = np.array([[eigenfunction_value(billiard, (2, 3), x, y) for x in xs] for y in ys])
    assert amp.shape == (13, 17)
    assert np.allclose(amp, ref, atol=1e-10)
    assert np.allclose(dens, ref**2, atol=1e-10)


def test_raster_nodes_vanish_on_boundary(billiard):
    result = solve_oracle(billiard, RectImpurity.reference(-0.25), n_lowest=4)
    amp, _ = wavefunction_grid(billiard, result, 21, 19, state_index=2, sampling="nodes")
    edges = np.concatenate([amp[0], amp[-1], amp[:, 0], amp[:, -1]])
    assert np.max(np.abs(edges)) < 1e-10


def test_raster_normalization(billiard):
    result = solve_oracle(billiard, RectImpurity.reference(-0.25), n_lowest=4)
    nx, ny = 200, 200
    _, dens = wavefunction_grid(billiard, result, nx, ny, state_index=1)
    assert dens.sum() * billiard.area / (nx * ny) == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        wavefunction_grid(billiard, result, 1, 5, state_index=0)


@settings(max_examples=15, deadline=None)
@given(u=st.floats(-500, 500), fx=st.floats(0.1, 0.9), fy=st.floats(0.1, 0.9))
def test_dense_eigenpairs_are_sorted_and_orthonormal(u, fx, fy):
    b = RectangleBilliard(1.0, 0.8, 1.0)
    imp = RectImpurity((fx, fy * 0.8), 0.05, 0.04, u)
    result = eigendecompose(assemble_hamiltonian(b, imp, 120), lowest_modes(b, 120))
    assert np.all(np.diff(result.eigenvalues) >= 0)
    v = result.eigenvectors
    assert np.allclose(v.T @ v, np.eye(120), atol=1e-10)


@pytest.mark.parametrize("v1", [-3.33, 10.0])
def test_window_eigenpairs_sliced_matches_dense(billiard, v1):
    from impurity_billiard.oracle import window_eigenpairs

    imp = RectImpurity.reference(v1)
    dense = window_eigenpairs(billiard, imp, (1.0, 8.0))
    sliced = window_eigenpairs(billiard, imp, (1.0, 8.0), dense_limit=10)
    assert np.allclose(dense.eigenvalues, sliced.eigenvalues, atol=1e-8)
    assert np.allclose(dense.eigenvectors, sliced.eigenvectors, atol=1e-6)


def test_slicing_window_edge_on_a_level(billiard):
    imp = RectImpurity.reference(-0.25).scaled(0.25)
    e11, e22 = mode_energy(billiard, 1, 1), mode_energy(billiard, 2, 2)
    on_pole = sliced_eigenvalues(billiard, imp, (e11, e22))
    inside = sliced_eigenvalues(billiard, imp, (1.6, 6.0))
    assert len(on_pole) == 3
    assert np.allclose(on_pole, inside, atol=1e-9)


def test_slicing_near_decoupled_level(billiard):
    # a patch centred on the nodal line of even-m modes barely shifts E21
    imp = RectImpurity((billiard.lx / 2, 0.3), 0.005, 0.005, -2000.0)
    basis = oracle_basis(billiard, imp, 0.05)
    dense = eigendecompose(assemble_hamiltonian(billiard, imp, basis), basis).eigenvalues
    window = (0.0, 12.0)
    sliced = sliced_eigenvalues(billiard, imp, window, basis=basis, tol=1e-12)
    ref = dense[(dense >= window[0]) & (dense < window[1])]
    assert abs(ref[np.argmin(np.abs(ref - mode_energy(billiard, 2, 1)))] - mode_energy(billiard, 2, 1)) < 1e-4 * 0.2
    assert np.allclose(sliced, ref, atol=1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("v1,level", [(10.0, 4.93), (-3.33, 4.43)])
def test_converged_oracle_reaches_reference_levels(billiard, v1, level):
    # the strongly attractive case converges slowly with basis size and ends
    # well below the delta-model root
    imp = RectImpurity.reference(v1)
    e12, e22 = mode_energy(billiard, 1, 2), mode_energy(billiard, 2, 2)
    coarse = sliced_eigenvalues(billiard, imp, (e12, e22), basis_factor=10)
    fine = sliced_eigenvalues(billiard, imp, (e12, e22), basis_factor=160)
    assert len(fine) == 1
    assert abs(fine[0] - level) <= 0.2
    assert fine[0] <= coarse[0] + 1e-9
