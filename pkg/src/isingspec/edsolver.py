"""Exact diagonalization in the zero-momentum sector of the periodic chain.

The quench starts from the translation-invariant polarized state, so all the
dynamics (and the meson levels it resolves) live in the k = 0 momentum sector.
Basis states are translation orbits, labelled by their lexicographically
smallest bit pattern; an orbit of period R enters with weight sqrt(R)/L so the
sector Hamiltonian stays real symmetric at k = 0. The machinery carries a
general momentum index internally, but only k = 0 is exposed and tested.

At h = 0 the chain maps to free fermions; free_fermion_oracle reproduces the
full many-body spectrum from the single-particle dispersion

    eps(k) = 2 sqrt(1 + g^2 - 2 g cos k)

on the two parity grids (antiperiodic k = 2 pi (m + 1/2) / L with an even
number of quasiparticles, periodic k = 2 pi m / L with an odd number, where
the unpaired k = 0 mode carries signed energy 2 (g - 1)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .model import ModelParams

BASIS_L_MAX = 20
DENSE_EIG_MAX = 4096
DEGENERACY_TOL = 1e-9
RESIDUAL_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """Raised when the iterative eigensolver misses the residual tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class SectorBasis:
    """Translation-orbit basis of one momentum sector (k in units of 2 pi / L)."""

    L: int
    momentum: int
    reps: np.ndarray      # orbit representatives, ascending
    periods: np.ndarray   # orbit period R per representative
    rep_of: np.ndarray    # any state -> its representative (size 2**L)
    index_of: np.ndarray  # representative -> basis index, -1 elsewhere
    shift_of: np.ndarray  # any state -> translations to reach its representative

    @property
    def dim(self) -> int:
        return int(self.reps.size)


def _translate(states: np.ndarray, L: int, mask: int) -> np.ndarray:
    """Cyclic shift: site j -> j+1, i.e. bit b -> b+1 mod L."""
    return ((states << 1) & mask) | (states >> (L - 1))


def _build_basis(L: int, momentum: int) -> SectorBasis:
    if not 2 <= L <= BASIS_L_MAX:
        raise ValueError(f"L={L} outside supported range [2, {BASIS_L_MAX}]")
    dim_full = 1 << L
    mask = dim_full - 1
    states = np.arange(dim_full, dtype=np.int64)
    rep = states.copy()
    shift = np.zeros(dim_full, dtype=np.int64)
    period = np.zeros(dim_full, dtype=np.int64)
    rot = states
    for l in range(1, L + 1):
        rot = _translate(rot, L, mask)
        smaller = rot < rep
        rep[smaller] = rot[smaller]
        shift[smaller] = l
        fresh = (period == 0) & (rot == states)
        period[fresh] = l
    reps = states[rep == states]
    periods = period[reps]
    if momentum % L != 0:
        keep = (momentum * periods) % L == 0
        reps, periods = reps[keep], periods[keep]
    index_of = np.full(dim_full, -1, dtype=np.int64)
    index_of[reps] = np.arange(reps.size)
    return SectorBasis(L, momentum % L, reps, periods, rep, index_of, shift)


def build_zero_momentum_basis(L: int) -> SectorBasis:
    """All translation-orbit representatives; dimension = binary necklace count."""
    return _build_basis(L, 0)


def assemble_sector_hamiltonian(
    params: ModelParams, basis: SectorBasis
) -> scipy.sparse.csr_matrix:
    """Real symmetric sector matrix; entry (b, a) = c * sqrt(R_a / R_b)."""
    if params.L != basis.L:
        raise ValueError(f"params.L={params.L} does not match basis.L={basis.L}")
    if basis.momentum != 0:
        raise NotImplementedError("only the k = 0 sector is assembled")
    L, g, h = params.L, params.g, params.h
    reps = basis.reps
    dim = basis.dim
    periods = basis.periods.astype(np.float64)
    rows = [np.arange(dim)]
    cols = [np.arange(dim)]
    vals = [-g * (L - 2.0 * np.bitwise_count(reps).astype(np.float64))]

    flip_terms: list[tuple[int, float]] = [
        ((1 << (a - 1)) | (1 << (b - 1)), -1.0) for a, b in params.bonds()
    ]
    if h != 0.0:
        flip_terms.extend((1 << (j - 1), -h) for j in range(1, L + 1))

    src = np.arange(dim)
    for mask, coeff in flip_terms:
        flipped = reps ^ mask
        target = basis.index_of[basis.rep_of[flipped]]
        rows.append(target)
        cols.append(src)
        vals.append(coeff * np.sqrt(periods / periods[target]))

    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    ).tocsr()
    asym = abs(mat - mat.T).max() if dim > 1 else 0.0
    if asym > 1e-12:
        raise AssertionError(f"sector matrix asymmetry {asym:.2e} exceeds 1e-12")
    return mat


@dataclass
class EnergyLevels:
    """Sorted eigenvalues with degenerate values merged into labelled levels.

    levels[n] is the n-th distinct energy (ties within 1e-9 merged, with
    multiplicities); gaps holds e_n = levels[n] - levels[0] for n >= 1.
    """

    eigenvalues: np.ndarray
    levels: np.ndarray
    multiplicities: np.ndarray
    method: str
    residual: float
    meta: dict = field(default_factory=dict)

    @property
    def gaps(self) -> np.ndarray:
        return self.levels[1:] - self.levels[0]

    def gap(self, n: int) -> float:
        """e_n = E_n - E_0 over distinct levels, n >= 1."""
        if not 1 <= n < self.levels.size:
            raise IndexError(f"level index {n} outside [1, {self.levels.size - 1}]")
        return float(self.levels[n] - self.levels[0])

    def diff(self, m: int, n: int) -> float:
        """e_mn = e_m - e_n = E_m - E_n."""
        return self.gap(m) - self.gap(n)


def _merge_levels(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    levels = [raw[0]]
    mult = [1]
    for val in raw[1:]:
        if val - levels[-1] < DEGENERACY_TOL:
            mult[-1] += 1
        else:
            levels.append(val)
            mult.append(1)
    return np.array(levels), np.array(mult)


def eigensolve(
    matrix, n_low: int | None = 6, method: str = "auto", meta: dict | None = None
) -> EnergyLevels:
    """Lowest part of the spectrum, dense below 4096 dims, Lanczos above.

    n_low counts raw eigenvalues (n_low=None keeps every one, dense path
    only). The iterative path verifies ||A v - lambda v|| < 1e-8 per pair and
    raises ConvergenceError with the achieved residual otherwise.
    """
    dim = matrix.shape[0]
    if method == "auto":
        method = "dense" if dim <= DENSE_EIG_MAX else "iterative"
    if method == "dense":
        dense = matrix.toarray() if scipy.sparse.issparse(matrix) else np.asarray(matrix)
        raw = np.linalg.eigvalsh(dense)
        if n_low is not None:
            raw = raw[:n_low]
        residual = 0.0
    elif method == "iterative":
        if n_low is None:
            raise ValueError("n_low=None (full spectrum) requires the dense path")
        k = min(n_low, dim - 1)
        vals, vecs = scipy.sparse.linalg.eigsh(matrix, k=k, which="SA")
        order = np.argsort(vals)
        raw, vecs = vals[order], vecs[:, order]
        resids = np.linalg.norm(matrix @ vecs - vecs * raw[None, :], axis=0)
        residual = float(resids.max())
        if residual > RESIDUAL_TOL:
            raise ConvergenceError(
                f"eigensolver residual {residual:.2e} exceeds {RESIDUAL_TOL}", residual
            )
    else:
        raise ValueError(f"method must be auto|dense|iterative, got {method!r}")
    levels, mult = _merge_levels(raw)
    return EnergyLevels(raw, levels, mult, method, residual, meta or {})


def solve_sector(params: ModelParams, n_low: int | None = 6, method: str = "auto") -> EnergyLevels:
    """Convenience: build the k = 0 basis, assemble, and eigensolve."""
    basis = build_zero_momentum_basis(params.L)
    mat = assemble_sector_hamiltonian(params, basis)
    meta = {"L": params.L, "g": params.g, "h": params.h, "sector": "k=0", "dim": basis.dim}
    return eigensolve(mat, n_low=n_low, method=method, meta=meta)


ORACLE_L_MAX = 16  # full 2**L enumeration below


def free_fermion_oracle(L: int, g: float) -> np.ndarray:
    """All 2**L many-body energies of the h = 0 chain, sorted ascending.

    Even L only (odd rings put the unpaired modes in the wrong sectors), and
    L >= 4: at L = 2 the periodic sum doubles the single bond, which the
    generic dispersion does not describe.
    """
    if L % 2 or L < 4:
        raise ValueError(f"free-fermion oracle needs even L >= 4, got {L}")
    if L > ORACLE_L_MAX:
        raise ValueError(f"oracle enumerates 2**L states; L={L} exceeds {ORACLE_L_MAX}")
    m = np.arange(L)

    def dispersion(k: np.ndarray) -> np.ndarray:
        return 2.0 * np.sqrt(1.0 + g * g - 2.0 * g * np.cos(k))

    eps_even = dispersion(2.0 * np.pi * (m + 0.5) / L)  # antiperiodic grid
    eps_odd = dispersion(2.0 * np.pi * m / L)           # periodic grid
    eps_odd[0] = 2.0 * (g - 1.0)                        # unpaired k = 0 mode, signed

    occ = ((np.arange(1 << L)[:, None] >> m) & 1).astype(np.float64)
    n_quasi = occ.sum(axis=1).astype(np.int64)
    e_even = -0.5 * eps_even.sum() + occ @ eps_even
    e_odd = -0.5 * eps_odd.sum() + occ @ eps_odd
    return np.sort(np.concatenate([e_even[n_quasi % 2 == 0], e_odd[n_quasi % 2 == 1]]))


def spectrum_contains(
    spectrum: np.ndarray, values: np.ndarray, tol: float = RESIDUAL_TOL
) -> bool:
    """True when `values` is a sub-multiset of `spectrum` within tol.

    Both inputs are treated as multisets; matching is greedy over the sorted
    arrays, consuming at most one spectrum entry per value.
    """
    spectrum = np.sort(np.asarray(spectrum))
    values = np.sort(np.asarray(values))
    i = 0
    for v in values:
        while i < spectrum.size and spectrum[i] < v - tol:
            i += 1
        if i == spectrum.size or spectrum[i] > v + tol:
            return False
        i += 1
    return True
