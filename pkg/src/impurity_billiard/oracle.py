"""Reference spectra of the finite rectangular impurity by direct diagonalization.

The Hamiltonian ``diag(E_n) + V`` is built in the energy-sorted sine basis.
Matrix elements of the constant patch factor into two 1D overlap integrals,
each evaluated in closed form, so ``V = U1 * Ix[m_a, m_b] * Iy[n_a, n_b]``.

Two solvers share that matrix:

* :func:`eigendecompose` - dense symmetric eigensolver (LAPACK via scipy),
  eigenvectors included.
* :func:`sliced_eigenvalues` - eigenvalues only, for bases too large to hold
  densely.  ``Ix`` and ``Iy`` are positive semidefinite with rapidly decaying
  spectra, so ``V = U1 W W^T`` with a thin ``W``; the number of eigenvalues
  below ``w`` then follows from the inertia of ``D - w`` and of a small
  ``r x r`` matrix, and bisection on that count isolates each level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import ModeTable, RectangleBilliard, mean_level_density, mode_table
from .finite_impurity import RectImpurity

__all__ = [
    "EigenSolverError",
    "OracleResult",
    "overlap_matrix_1d",
    "potential_element",
    "potential_matrix",
    "oracle_basis",
    "assemble_hamiltonian",
    "eigendecompose",
    "solve_oracle",
    "mode_overlaps",
    "wavefunction_grid",
    "sliced_eigenvalues",
    "window_eigenpairs",
    "DEFAULT_BASIS_FACTOR",
    "DEFAULT_MEMORY_BUDGET",
]

DEFAULT_BASIS_FACTOR = 10.0
DEFAULT_MEMORY_BUDGET = 1_500_000_000  # bytes for the dense matrix and its workspace
DENSE_LIMIT = 2500  # window_eigenpairs switches to slicing above this basis size


class EigenSolverError(RuntimeError):
    """The dense eigensolver failed or its output violates the residual bound."""


@dataclass
class OracleResult:
    """Sorted eigenpairs of the truncated Hamiltonian.

    Column ``k`` of ``eigenvectors`` holds the components of state ``k`` on
    ``basis`` (when known).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    basis: ModeTable | None = field(default=None, repr=False)

    @property
    def basis_size(self) -> int:
        return self.eigenvectors.shape[0]

    def overlaps(self, state_index: int) -> dict:
        return mode_overlaps(self, state_index)

    def states_between(self, low: float, high: float) -> list[int]:
        return np.flatnonzero((self.eigenvalues > low) & (self.eigenvalues < high)).tolist()


def overlap_matrix_1d(q1, q2, length: float, lo: float, hi: float) -> np.ndarray:
    """``(2 / l) int_lo^hi sin(a pi x / l) sin(b pi x / l) dx`` for all pairs ``a`` in ``q1``, ``b`` in ``q2``."""
    a = np.asarray(q1, dtype=float)[:, None]
    b = np.asarray(q2, dtype=float)[None, :]
    ka = a * math.pi / length
    kb = b * math.pi / length
    diff = ka - kb
    total = ka + kb
    same = diff == 0
    safe = np.where(same, 1.0, diff)

    def antiderivative(x):
        cross = np.where(same, x, np.sin(diff * x) / safe)
        return 0.5 * (cross - np.sin(total * x) / total)

    return (2.0 / length) * (antiderivative(hi) - antiderivative(lo))


def _axis_overlaps(billiard: RectangleBilliard, impurity: RectImpurity, mmax: int, nmax: int):
    ms = np.arange(1, mmax + 1)
    ns = np.arange(1, nmax + 1)
    ix = overlap_matrix_1d(ms, ms, billiard.lx, *impurity.x_extent)
    iy = overlap_matrix_1d(ns, ns, billiard.ly, *impurity.y_extent)
    return ix, iy


def potential_element(billiard: RectangleBilliard, impurity: RectImpurity, a, b) -> float:
    """``U1 * int_patch phi_a phi_b`` for two modes (``Mode`` or ``(m, n)``)."""
    am, an = (a.m, a.n) if hasattr(a, "m") else a
    bm, bn = (b.m, b.n) if hasattr(b, "m") else b
    ix = overlap_matrix_1d([am], [bm], billiard.lx, *impurity.x_extent)[0, 0]
    iy = overlap_matrix_1d([an], [bn], billiard.ly, *impurity.y_extent)[0, 0]
    return float(impurity.u1 * ix * iy)


def potential_matrix(billiard: RectangleBilliard, impurity: RectImpurity, basis: ModeTable) -> np.ndarray:
    ix, iy = _axis_overlaps(billiard, impurity, int(basis.m.max()), int(basis.n.max()))
    v = ix[np.ix_(basis.m - 1, basis.m - 1)]
    v *= iy[np.ix_(basis.n - 1, basis.n - 1)]
    v *= impurity.u1
    return v


def oracle_basis(billiard: RectangleBilliard, impurity: RectImpurity,
                 basis_factor: float = DEFAULT_BASIS_FACTOR) -> ModeTable:
    """Every mode with ``E_n <= basis_factor / (M W)``."""
    return mode_table(billiard, basis_factor / (billiard.mass * impurity.area))


def _check_budget(size, memory_budget):
    needed = 3 * 8 * size * size
    if needed > memory_budget:
        raise MemoryError(f"a dense {size} x {size} problem needs ~{needed / 1e9:.2f} GB, "
                          f"over the {memory_budget / 1e9:.2f} GB budget; use sliced_eigenvalues")


def assemble_hamiltonian(billiard: RectangleBilliard, impurity: RectImpurity, basis, *,
                         memory_budget: int = DEFAULT_MEMORY_BUDGET) -> np.ndarray:
    """Dense ``diag(E_n) + V`` over ``basis`` (a :class:`ModeTable` or a size).

    An integer ``basis`` takes the lowest modes of the billiard.  The matrix is
    symmetric bit-for-bit because both overlap factors are.
    """
    impurity.validate(billiard, allow_full=True)
    if not isinstance(basis, ModeTable):
        from .basis import lowest_modes

        size = int(basis)
        if size < 2:
            raise ValueError("basis_size must be at least 2")
        _check_budget(size, memory_budget)
        basis = lowest_modes(billiard, size)
    if len(basis) < 2:
        raise ValueError("basis_size must be at least 2")
    _check_budget(len(basis), memory_budget)
    h = potential_matrix(billiard, impurity, basis)
    h[np.diag_indices_from(h)] += basis.energy
    return h


def eigendecompose(matrix, basis: ModeTable | None = None, *, n_lowest: int | None = None,
                   residual_tol: float = 1e-8) -> OracleResult:
    """Ascending eigenpairs of a dense symmetric matrix.

    Raises :class:`EigenSolverError` if LAPACK fails or any pair misses
    ``||H v - l v|| <= residual_tol * ||H||``.
    """
    h = np.asarray(matrix, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("matrix must be square")
    if not np.array_equal(h, h.T):
        scale = np.max(np.abs(h)) or 1.0
        if np.max(np.abs(h - h.T)) > 1e-12 * scale:
            raise ValueError("matrix is not symmetric")
    subset = None if n_lowest is None else (0, min(int(n_lowest), h.shape[0]) - 1)
    try:
        values, vectors = scipy.linalg.eigh(h, subset_by_index=subset, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"dense eigensolver failed: {exc}") from exc
    norm = max(np.max(np.abs(values)), np.max(np.abs(np.diag(h)))) if values.size else 1.0
    residual = np.linalg.norm(h @ vectors - vectors * values, axis=0)
    if residual.size and np.max(residual) > residual_tol * norm:
        raise EigenSolverError(f"eigenpair residual {np.max(residual):.3e} exceeds "
                               f"{residual_tol:g} x ||H|| = {residual_tol * norm:.3e}")
    return OracleResult(values, vectors, basis)


def solve_oracle(billiard: RectangleBilliard, impurity: RectImpurity, *,
                 basis_factor: float = DEFAULT_BASIS_FACTOR, n_lowest: int | None = None,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET) -> OracleResult:
    """Assemble and diagonalize in the default oracle basis."""
    basis = oracle_basis(billiard, impurity, basis_factor)
    h = assemble_hamiltonian(billiard, impurity, basis, memory_budget=memory_budget)
    return eigendecompose(h, basis, n_lowest=n_lowest)


def mode_overlaps(result: OracleResult, state_index: int) -> dict:
    """Squared components of one eigenvector keyed by ``(m, n)`` (or basis position)."""
    n_states = result.eigenvectors.shape[1]
    if not -n_states <= state_index < n_states:
        raise IndexError(f"state index {state_index} out of range for {n_states} states")
    weights = result.eigenvectors[:, state_index] ** 2
    if result.basis is None:
        return {i: float(w) for i, w in enumerate(weights)}
    return {label: float(w) for label, w in zip(result.basis.labels(), weights)}


def _grid_axis(length, count, sampling):
    if sampling == "centers":
        return (np.arange(count) + 0.5) * (length / count)
    if sampling == "nodes":
        return np.linspace(0.0, length, count)
    raise ValueError(f"unknown sampling {sampling!r}")


def wavefunction_grid(billiard: RectangleBilliard, source, nx: int, ny: int, *,
                      state_index: int | None = None, modes: ModeTable | None = None,
                      sampling: str = "centers"):
    """Sample a state on a uniform ``ny x nx`` grid (row ``j`` is ``y_j``).

    ``source`` is an :class:`OracleResult` (with ``state_index``), a
    ``SpectralLine``, or a coefficient vector with ``modes``.  ``sampling`` is
    ``"centers"`` (cell centres, default) or ``"nodes"`` (grid includes the
    boundary).  Returns ``(amplitude, density)``.
    """
    if nx < 2 or ny < 2:
        raise ValueError("grid needs nx, ny >= 2")
    if isinstance(source, OracleResult):
        if state_index is None:
            raise ValueError("state_index is required for an OracleResult")
        coeffs, table = source.eigenvectors[:, state_index], source.basis
    elif hasattr(source, "coefficients"):
        coeffs, table = source.coefficients, source.modes
    else:
        coeffs, table = np.asarray(source, dtype=float), modes
    if table is None:
        raise ValueError("the mode table of the expansion is unknown")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(table),):
        raise ValueError("coefficient vector does not match the mode table")
    xs = _grid_axis(billiard.lx, nx, sampling)
    ys = _grid_axis(billiard.ly, ny, sampling)
    mmax, nmax = int(table.m.max()), int(table.n.max())
    # separable: psi(x, y) = N sum_{m,n} C[n, m] sin(m pi x / lx) sin(n pi y / ly)
    c = np.zeros((nmax, mmax))
    np.add.at(c, (table.n - 1, table.m - 1), coeffs)
    sx = np.sin(np.outer(np.arange(1, mmax + 1), xs) * (math.pi / billiard.lx))
    sy = np.sin(np.outer(np.arange(1, nmax + 1), ys) * (math.pi / billiard.ly))
    amplitude = math.sqrt(4.0 / billiard.area) * (sy.T @ c @ sx)
    return amplitude, amplitude * amplitude


def _thin_factor(gram, rtol):
    values, vectors = np.linalg.eigh(gram)
    keep = values > rtol * values.max()
    return vectors[:, keep] * np.sqrt(values[keep])


def _low_rank_factor(billiard, impurity, basis, rank_rtol):
    """Thin ``W`` with ``Ix[m, m'] Iy[n, n'] ~ (W W^T)[a, b]`` over ``basis``."""
    ix, iy = _axis_overlaps(billiard, impurity, int(basis.m.max()), int(basis.n.max()))
    ax = _thin_factor(ix, rank_rtol)
    ay = _thin_factor(iy, rank_rtol)
    return (ax[basis.m - 1][:, :, None] * ay[basis.n - 1][:, None, :]).reshape(len(basis), -1)


_NEAR_FRACTION = 1e-3  # modes closer than this many mean spacings stay in the bordered block


def _bordered(energy, w, u1, omega, near):
    """Bordered matrix with every mode farther than ``near`` from ``omega`` eliminated.

    Returns ``(B, far, gap)`` where ``B = [[D_near - w, W_near], [W_near^T, S]]``
    and ``S = -1/U1 - W_far^T (D_far - w)^{-1} W_far``.  Keeping the close modes
    explicit avoids the huge ``1 / gap`` terms that would swamp ``S``.
    """
    gap = energy - omega
    far = np.abs(gap) >= near
    s = (w[far].T * (1.0 / gap[far])) @ w[far]
    s *= -1.0
    s[np.diag_indices_from(s)] -= 1.0 / u1
    idx = np.flatnonzero(~far)
    if idx.size == 0:
        return s, far, gap
    k = idx.size
    b = np.zeros((k + s.shape[0], k + s.shape[0]))
    b[np.arange(k), np.arange(k)] = gap[idx]
    b[:k, k:] = w[idx]
    b[k:, :k] = w[idx].T
    b[k:, k:] = s
    return b, far, gap


def sliced_eigenvalues(billiard: RectangleBilliard, impurity: RectImpurity, window, *,
                       basis: ModeTable | None = None, basis_factor: float = DEFAULT_BASIS_FACTOR,
                       tol: float = 1e-10, rank_rtol: float = 1e-14) -> np.ndarray:
    """All eigenvalues of ``diag(E_n) + V`` inside ``window``, without eigenvectors.

    ``rank_rtol`` truncates the 1D overlap spectra; the discarded part of ``V``
    has norm below ``|U1| * rank_rtol``.
    """
    impurity.validate(billiard, allow_full=True)
    if basis is None:
        basis = oracle_basis(billiard, impurity, basis_factor)
    e_lo, e_hi = float(window[0]), float(window[1])
    if not e_lo < e_hi:
        raise ValueError(f"empty energy window {window!r}")
    energy = basis.energy
    u1 = impurity.u1
    if u1 == 0:
        return energy[(energy >= e_lo) & (energy < e_hi)].copy()
    w = _low_rank_factor(billiard, impurity, basis, rank_rtol)
    negative_shift = w.shape[1] if u1 > 0 else 0
    near = _NEAR_FRACTION / mean_level_density(billiard)

    def count_below(omega):
        # Sylvester inertia of [[D - w, W], [W^T, -1/U1]]; its Schur complement onto
        # the first block is H - w, so #neg(H - w) = #neg(bordered) - #neg(-1/U1)
        b, far, gap = _bordered(energy, w, u1, omega, near)
        return int(np.sum(gap[far] < 0)) + int(np.sum(np.linalg.eigvalsh(b) < 0)) - negative_shift

    found = []

    def isolate(lo, hi, c_lo, c_hi):
        if c_hi == c_lo:
            return
        if c_hi - c_lo == 1 or hi - lo <= tol:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if count_below(mid) > c_lo:
                    hi = mid
                else:
                    lo = mid
            found.extend([0.5 * (lo + hi)] * (c_hi - c_lo))
            return
        mid = 0.5 * (lo + hi)
        c_mid = count_below(mid)
        isolate(lo, mid, c_lo, c_mid)
        isolate(mid, hi, c_mid, c_hi)

    isolate(e_lo, e_hi, count_below(e_lo), count_below(e_hi))
    return np.array(found)


def window_eigenpairs(billiard: RectangleBilliard, impurity: RectImpurity, window, *,
                      basis_factor: float = DEFAULT_BASIS_FACTOR, dense_limit: int = DENSE_LIMIT,
                      tol: float = 1e-10, rank_rtol: float = 1e-14) -> OracleResult:
    """Eigenpairs with eigenvalues inside ``window``.

    Small bases are diagonalized densely.  Larger ones take the eigenvalues
    from :func:`sliced_eigenvalues` and each eigenvector from the null vector
    ``z`` of ``-1/U1 - W^T (D - w)^{-1} W`` as ``c ~ (w - D)^{-1} W z``.
    """
    basis = oracle_basis(billiard, impurity, basis_factor)
    e_lo, e_hi = float(window[0]), float(window[1])
    if len(basis) <= dense_limit:
        result = solve_oracle(billiard, impurity, basis_factor=basis_factor)
        keep = result.states_between(e_lo, e_hi)
        return OracleResult(result.eigenvalues[keep], _fix_signs(result.eigenvectors[:, keep]), basis)
    values = sliced_eigenvalues(billiard, impurity, window, basis=basis, tol=tol, rank_rtol=rank_rtol)
    values = values[(values > e_lo) & (values < e_hi)]
    energy = basis.energy
    if impurity.u1 == 0:
        vectors = np.zeros((len(basis), len(values)))
        for j, v in enumerate(values):
            vectors[int(np.argmin(np.abs(energy - v))), j] = 1.0
        return OracleResult(values, vectors, basis)
    w = _low_rank_factor(billiard, impurity, basis, rank_rtol)
    near = _NEAR_FRACTION / mean_level_density(billiard)
    vectors = np.empty((len(basis), len(values)))
    for j, omega in enumerate(values):
        # null vector (c_near, y) of the bordered matrix, y = U1 W^T c
        b, far, gap = _bordered(energy, w, impurity.u1, omega, near)
        evals, evecs = np.linalg.eigh(b)
        null = evecs[:, int(np.argmin(np.abs(evals)))]
        k = int(np.sum(~far))
        y = null[k:]
        c = np.empty(len(basis))
        c[~far] = null[:k]
        c[far] = -(w[far] @ y) / gap[far]
        vectors[:, j] = c / np.linalg.norm(c)
    return OracleResult(values, _fix_signs(vectors), basis)


def _fix_signs(vectors):
    """Flip columns so that each largest-magnitude component is positive."""
    vectors = np.array(vectors, dtype=float)
    if vectors.size:
        lead = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
        vectors[:, lead < 0] *= -1
    return vectors
