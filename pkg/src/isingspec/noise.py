"""Stochastic Pauli gate noise, asymmetric readout errors, and twirled mitigation.

Gate noise is trajectory-based: after each gate, every touched site suffers a
uniformly random non-identity Pauli with probability p1 (one-site gates) or p2
(two-site gates); observables are averaged over independent trajectories.

Readout is an asymmetric per-site bit flip (0->1 with p01, 1->0 with p10).
Sampling twirls it: a random X per site per shot, undone classically, which
symmetrizes the channel to an effective flip probability p_eff = (p01+p10)/2.
Expectation values then shrink by (1 - 2*p_eff) and divide out exactly.

Default rates below are placeholders for exercising the machinery; calibrate
against the device at hand before reading anything physical into noisy runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import statevec
from .statevec import StateVector

DEFAULT_P1 = 0.001
DEFAULT_P2 = 0.01
DEFAULT_P01 = 0.02
DEFAULT_P10 = 0.02

_PAULI_CYCLE = ("x", "y", "z")


@dataclass(frozen=True)
class NoiseParams:
    """Noise model knobs. All-zero probabilities mean an exactly noiseless run."""

    p1: float = DEFAULT_P1
    p2: float = DEFAULT_P2
    p01: float = DEFAULT_P01
    p10: float = DEFAULT_P10
    trajectories: int = 100
    mitigate: bool = True  # divide sampled expectations by (1 - 2 p_eff)

    def __post_init__(self):
        for name in ("p1", "p2", "p01", "p10"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name}={p} must lie in [0, 1)")
        if self.trajectories < 1:
            raise ValueError(f"trajectories must be >= 1, got {self.trajectories}")
        if self.p2 < self.p1:
            warnings.warn(
                f"p2={self.p2} < p1={self.p1}: two-site gates are usually the noisier kind",
                stacklevel=2,
            )

    @property
    def p_eff(self) -> float:
        return 0.5 * (self.p01 + self.p10)

    @property
    def has_gate_noise(self) -> bool:
        return self.p1 > 0 or self.p2 > 0

    @property
    def has_readout_error(self) -> bool:
        return self.p01 > 0 or self.p10 > 0

    @property
    def is_null(self) -> bool:
        return not (self.has_gate_noise or self.has_readout_error)


def apply_gate_noise(
    state: StateVector,
    gate_kind: str,
    sites: tuple[int, ...],
    params: NoiseParams,
    rng: np.random.Generator,
) -> StateVector:
    """Insert stochastic Paulis on the touched sites, in place."""
    if gate_kind == "1q":
        p = params.p1
    elif gate_kind == "2q":
        p = params.p2
    else:
        raise ValueError(f"gate_kind must be '1q' or '2q', got {gate_kind!r}")
    if p <= 0.0:
        return state
    for site in sites:
        if rng.random() < p:
            axis = _PAULI_CYCLE[rng.integers(3)]
            statevec.apply_matrix1(state, statevec.PAULI[axis], site)
    return state


def apply_readout_error(
    bits: np.ndarray, params: NoiseParams, rng: np.random.Generator
) -> np.ndarray:
    """Flip sampled bits (shape (shots, L)): 0->1 w.p. p01, 1->0 w.p. p10."""
    bits = np.asarray(bits)
    u = rng.random(bits.shape)
    flip = np.where(bits == 0, u < params.p01, u < params.p10)
    return np.where(flip, bits ^ 1, bits).astype(bits.dtype)


def twirled_readout(
    bits: np.ndarray, params: NoiseParams, rng: np.random.Generator
) -> np.ndarray:
    """Readout with a pre-measurement X twirl, undone classically.

    The twirl mask flips each bit before the asymmetric channel and again
    after it, so the surviving error is a symmetric flip with p_eff.
    """
    bits = np.asarray(bits)
    mask = rng.integers(0, 2, size=bits.shape, dtype=bits.dtype)
    return apply_readout_error(bits ^ mask, params, rng) ^ mask


_ArrayLike = Union[float, np.ndarray]


def trex_mitigate(raw: _ArrayLike, p_eff: _ArrayLike) -> _ArrayLike:
    """Invert the symmetrized readout channel: raw / (1 - 2 p_eff).

    Valid only for p_eff < 0.5 (beyond that the channel is not invertible).
    """
    p = np.asarray(p_eff, dtype=float)
    if np.any(p < 0.0) or np.any(p >= 0.5):
        raise ValueError(f"p_eff must lie in [0, 0.5), got {p_eff}")
    out = np.asarray(raw, dtype=float) / (1.0 - 2.0 * p)
    if np.isscalar(raw) or np.ndim(raw) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ReadoutCalibration:
    """Per-site readout rate estimates from all-zeros / all-ones preparations."""

    p01: np.ndarray
    p10: np.ndarray
    p_eff: np.ndarray
    stderr: np.ndarray  # standard error on p_eff, per site
    shots: int


def calibrate_readout(
    L: int, params: NoiseParams, shots: int, rng: np.random.Generator
) -> ReadoutCalibration:
    """Estimate per-site (p01, p10) by measuring |0...0> and |1...1>."""
    if shots < 1000:
        raise ValueError(f"calibration needs >= 1000 shots, got {shots}")
    rng = np.random.default_rng(rng)
    zeros = np.zeros((shots, L), dtype=np.uint8)
    ones = np.ones((shots, L), dtype=np.uint8)
    p01_hat = apply_readout_error(zeros, params, rng).mean(axis=0)
    p10_hat = 1.0 - apply_readout_error(ones, params, rng).mean(axis=0)
    se01 = np.sqrt(p01_hat * (1.0 - p01_hat) / shots)
    se10 = np.sqrt(p10_hat * (1.0 - p10_hat) / shots)
    return ReadoutCalibration(
        p01=p01_hat,
        p10=p10_hat,
        p_eff=0.5 * (p01_hat + p10_hat),
        stderr=0.5 * np.sqrt(se01**2 + se10**2),
        shots=shots,
    )
