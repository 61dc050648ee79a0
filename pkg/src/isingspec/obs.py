"""Connected sx-sx correlators and light-cone front diagnostics.

G(r, t) = (1/L) sum_i [ <sx_i sx_{i+r}> - <sx_i><sx_{i+r}> ]

is translation-averaged over the ring, for separations r = 1 .. L//2 (beyond
L//2 the periodic distance wraps back: G(r) = G(L-r)). After rotating every
site with H, sx becomes diagonal, so both exact and sampled estimates reduce
to weighted bit statistics of the rotated distribution; one x-basis rotation
(or one shared sample block) serves all pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import statevec
from .statevec import StateVector


def _xbasis_probs(state: StateVector) -> np.ndarray:
    return statevec.measurement_probabilities(state, "x")


def _pair_stats_from_probs(probs: np.ndarray, L: int):
    """Single-site means m_i and a pair-correlation callable c(i, j), 0-indexed."""
    idx = np.arange(probs.size)
    bits = [((idx >> b) & 1).astype(np.uint8) for b in range(L)]
    m = np.array([1.0 - 2.0 * float(probs @ b) for b in bits])

    def corr(i: int, j: int) -> float:
        # z_i z_j = 1 - 2 (bit_i XOR bit_j)
        return 1.0 - 2.0 * float(probs @ (bits[i] ^ bits[j]))

    return m, corr


def _pair_stats_from_bits(bits: np.ndarray):
    """Same interface as above, from a sampled (shots, L) bit matrix."""
    m = 1.0 - 2.0 * bits.mean(axis=0)

    def corr(i: int, j: int) -> float:
        return 1.0 - 2.0 * float((bits[:, i] ^ bits[:, j]).mean())

    return m, corr


def _profile(m: np.ndarray, corr, L: int, factors: np.ndarray | None) -> np.ndarray:
    """Translation-averaged connected correlator for r = 1 .. L//2.

    factors, when given, are per-site readout attenuations (1 - 2 p_eff);
    dividing them out of m_i and c_ij is the (approximate) correlator analog
    of expectation-value readout mitigation.
    """
    if factors is not None:
        m = m / factors
    out = np.empty(L // 2)
    for r in range(1, L // 2 + 1):
        acc = 0.0
        for i in range(L):
            j = (i + r) % L
            c = corr(i, j)
            if factors is not None:
                c = c / (factors[i] * factors[j])
            acc += c - m[i] * m[j]
        out[r - 1] = acc / L
    return out


def connected_xx(state: StateVector, r: int) -> float:
    """Exact G(r) for one separation, 1 <= r <= L//2."""
    L = state.L
    if not 1 <= r <= L // 2:
        raise ValueError(f"separation r={r} outside [1, {L // 2}] for L={L}")
    return float(correlator_profile(state)[r - 1])


def correlator_profile(state: StateVector) -> np.ndarray:
    """Exact G(r) for all r = 1 .. L//2, shape (L//2,)."""
    probs = _xbasis_probs(state)
    m, corr = _pair_stats_from_probs(probs, state.L)
    return _profile(m, corr, state.L, None)


def correlator_profile_from_bits(
    bits: np.ndarray, mitigation_factors: np.ndarray | None = None
) -> np.ndarray:
    """Sampled G(r) from a shared x-basis bit matrix of shape (shots, L)."""
    L = bits.shape[1]
    m, corr = _pair_stats_from_bits(bits)
    return _profile(m, corr, L, mitigation_factors)


@dataclass
class CorrelatorField:
    """G(r, t) on the recorded time grid; values has shape (n_times, L//2)."""

    times: np.ndarray
    values: np.ndarray
    L: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size, self.L // 2):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"({self.times.size}, {self.L // 2})"
            )

    @property
    def rs(self) -> np.ndarray:
        return np.arange(1, self.L // 2 + 1)


def field_from_record(record) -> CorrelatorField:
    """Build a CorrelatorField from a QuenchRecord that recorded the correlator."""
    if record.correlator is None:
        raise ValueError("record holds no correlator; rerun with record_correlator=True")
    L = int(record.provenance["model.L"])
    return CorrelatorField(record.times, record.correlator, L, dict(record.provenance))


@dataclass
class FrontFit:
    """Threshold-crossing front radii r*(t) and a linear velocity fit.

    radius 0 means no separation exceeded the threshold at that time. The
    velocity is fit on the growth window, from the first detection up to the
    first time the running maximum radius is reached. stalled is True when
    the front never reaches the maximum separation L//2.
    """

    times: np.ndarray
    radii: np.ndarray
    threshold: float
    velocity: float
    window: tuple[float, float] | None
    stalled: bool

    @property
    def has_front(self) -> bool:
        return bool(np.any(self.radii > 0))


def lightcone_front(fld: CorrelatorField, threshold: float = 0.02) -> FrontFit:
    """Extract r*(t) = max{r : |G(r,t)| > threshold} and fit its early growth."""
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    above = np.abs(fld.values) > threshold
    radii = np.where(above.any(axis=1), above.shape[1] - above[:, ::-1].argmax(axis=1), 0)
    if not radii.any():
        return FrontFit(fld.times, radii, threshold, float("nan"), None, True)
    start = int(np.argmax(radii > 0))
    peak = int(np.argmax(radii == radii.max()))
    window = None
    velocity = float("nan")
    if peak > start:
        sl = slice(start, peak + 1)
        velocity = float(np.polyfit(fld.times[sl], radii[sl], 1)[0])
        window = (float(fld.times[start]), float(fld.times[peak]))
    stalled = bool(radii.max() < fld.L // 2)
    return FrontFit(fld.times, radii, threshold, velocity, window, stalled)


def oscillation_count(fld: CorrelatorField, r: int, min_step: float = 1e-6) -> int:
    """Sign changes of dG/dt at fixed separation, ignoring sub-min_step wiggles."""
    if not 1 <= r <= fld.L // 2:
        raise ValueError(f"separation r={r} outside [1, {fld.L // 2}]")
    diffs = np.diff(fld.values[:, r - 1])
    signs = np.sign(diffs[np.abs(diffs) > min_step])
    if signs.size < 2:
        return 0
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def max_group_velocity(g: float) -> float:
    """Largest quasiparticle group velocity of the h = 0 chain: 2*min(g, 1)."""
    return 2.0 * min(g, 1.0)
