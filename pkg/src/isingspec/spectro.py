"""Fourier spectroscopy of quench traces and matching to meson levels.

The magnetization trace sigma_y(t) on a uniform grid is mean-subtracted,
windowed, zero-padded and Fourier transformed; |sigma_y(omega)|^2 then shows
peaks at the k = 0 meson energies e_n = E_n - E_0 and, when the initial state
weights allow, at differences e_mn = e_m - e_n. Peaks are refined by 3-point
parabolic interpolation and matched greedily (closest first) against the
candidate set {e_n} union {e_m - e_n}.

The dimensionless scaling parameter eta = 2 pi (1 - g) / h^(8/15) indexes the
sweep points: small eta means strong confinement relative to the kink scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from multiprocessing import get_context

import numpy as np
import scipy.signal

from . import edsolver, trotter
from .edsolver import EnergyLevels
from .model import ModelParams, QuenchPlan


@dataclass
class TimeSeries:
    """Samples on a uniform time grid."""

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.size != self.values.size:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if self.times.size < 2:
            raise ValueError("a time series needs at least two samples")
        steps = np.diff(self.times)
        dt = steps[0]
        if dt <= 0 or np.abs(steps - dt).max() > 1e-9 * max(dt, 1.0):
            raise ValueError("time grid must be uniform and increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def series_from_record(record: trotter.QuenchRecord, axis: str = "y") -> TimeSeries:
    return TimeSeries(record.times, record.aggregate(axis), dict(record.provenance))


@dataclass
class Spectrum:
    """One-sided power spectrum on the angular frequency grid."""

    omega: np.ndarray
    power: np.ndarray
    window: str
    pad_factor: int
    dt: float
    n_samples: int

    @property
    def d_omega(self) -> float:
        return 2.0 * math.pi / (self.pad_factor * self.n_samples * self.dt)


_WINDOWS = {
    "hann": np.hanning,
    "rectangular": np.ones,
}


def power_spectrum(series: TimeSeries, window: str = "hann", pad_factor: int = 8) -> Spectrum:
    """Mean-subtract, window, zero-pad, and return |FFT|^2 on omega >= 0."""
    if window not in _WINDOWS:
        raise ValueError(f"window must be one of {sorted(_WINDOWS)}, got {window!r}")
    if pad_factor < 1 or int(pad_factor) != pad_factor:
        raise ValueError(f"pad_factor must be an integer >= 1, got {pad_factor}")
    n = series.values.size
    if n < 8:
        raise ValueError(f"need at least 8 samples for a spectrum, got {n}")
    x = (series.values - series.values.mean()) * _WINDOWS[window](n)
    n_pad = int(pad_factor) * n
    coeffs = np.fft.rfft(x, n=n_pad)
    omega = 2.0 * math.pi * np.fft.rfftfreq(n_pad, d=series.dt)
    return Spectrum(omega, np.abs(coeffs) ** 2, window, int(pad_factor), series.dt, n)


@dataclass(frozen=True)
class Peak:
    """A refined spectral peak, possibly labelled against an energy-level set."""

    omega: float
    height: float
    width: float
    label: str = "unassigned"
    matched_value: float | None = None
    candidates: tuple[tuple[str, float], ...] = ()


@dataclass
class PeakSet:
    peaks: list[Peak]
    d_omega: float

    def __iter__(self):
        return iter(self.peaks)

    def __len__(self):
        return len(self.peaks)

    def get(self, label: str) -> Peak | None:
        for p in self.peaks:
            if p.label == label:
                return p
        return None

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.peaks]


def _parabolic_refine(power: np.ndarray, i: int, d_omega: float) -> tuple[float, float, float]:
    """Vertex of the parabola through bins (i-1, i, i+1): omega, height, width."""
    a, b, c = power[i - 1], power[i], power[i + 1]
    denom = a - 2.0 * b + c
    delta = 0.0 if denom == 0 else 0.5 * (a - c) / denom
    delta = min(0.5, max(-0.5, delta))
    height = b - 0.25 * (a - c) * delta
    curv = 0.5 * denom  # per bin^2, negative at a maximum
    width = d_omega if curv >= 0 else 2.0 * d_omega * math.sqrt(-height / (2.0 * curv))
    return (i + delta) * d_omega, float(height), float(width)


def find_peaks(
    spectrum: Spectrum,
    min_height_frac: float = 0.05,
    min_separation: float | None = None,
) -> PeakSet:
    """Local maxima above min_height_frac of the strongest non-DC bin.

    Peaks closer than min_separation (default 2 * d_omega) merge into the
    higher one; omega = 0 is never reported. Positions are refined by 3-point
    parabolic interpolation, with uncertainty half a resolution bin.
    """
    if spectrum.power.size == 0:
        raise ValueError("empty spectrum")
    if not 0.0 < min_height_frac < 1.0:
        raise ValueError(f"min_height_frac must be in (0, 1), got {min_height_frac}")
    d_omega = spectrum.d_omega
    if min_separation is None:
        min_separation = 2.0 * d_omega
    body = spectrum.power[1:]  # the omega = 0 bin is excluded from the search
    if body.size == 0 or body.max() <= 0.0:
        return PeakSet([], d_omega)
    distance = max(1, int(round(min_separation / d_omega)))
    idx, _ = scipy.signal.find_peaks(
        body, height=min_height_frac * body.max(), distance=distance
    )
    peaks = []
    for i in idx + 1:  # back to full-array indexing
        if i + 1 >= spectrum.power.size:
            continue
        omega, height, width = _parabolic_refine(spectrum.power, i, d_omega)
        peaks.append(Peak(omega, height, width))
    peaks.sort(key=lambda p: p.omega)
    return PeakSet(peaks, d_omega)


def level_candidates(levels: EnergyLevels) -> list[tuple[str, float]]:
    """Labelled candidate frequencies {e_n} plus differences {e_m - e_n}."""
    gaps = levels.gaps
    cands = [(f"e{n}", float(gaps[n - 1])) for n in range(1, gaps.size + 1)]
    for m in range(2, gaps.size + 1):
        for n in range(1, m):
            cands.append((f"e{m}{n}", float(gaps[m - 1] - gaps[n - 1])))
    return cands


_AMBIGUITY_EPS = 1e-9


def match_peaks(peaks: PeakSet, levels: EnergyLevels, tol: float | None = None) -> PeakSet:
    """Greedy closest-first assignment of peaks to labelled candidates.

    Each candidate matches at most one peak. A peak equidistant (within
    1e-9) from two candidates stays unassigned with both recorded. Default
    tolerance is max(d_omega, 0.05).
    """
    if tol is None:
        tol = max(peaks.d_omega, 0.05)
    cands = level_candidates(levels)
    ambiguous: dict[int, tuple[tuple[str, float], ...]] = {}
    pairs = []
    for pi, peak in enumerate(peaks.peaks):
        dists = sorted(
            (abs(peak.omega - val), ci) for ci, (_, val) in enumerate(cands)
        )
        within = [(d, ci) for d, ci in dists if d <= tol]
        if len(within) >= 2 and within[1][0] - within[0][0] < _AMBIGUITY_EPS:
            ambiguous[pi] = tuple(cands[ci] for _, ci in within[:2])
            continue
        pairs.extend((d, pi, ci) for d, ci in within)
    pairs.sort()
    labelled: dict[int, tuple[str, float]] = {}
    used_cands: set[int] = set()
    for d, pi, ci in pairs:
        if pi in labelled or ci in used_cands:
            continue
        labelled[pi] = cands[ci]
        used_cands.add(ci)
    out = []
    for pi, peak in enumerate(peaks.peaks):
        if pi in labelled:
            label, value = labelled[pi]
            out.append(replace(peak, label=label, matched_value=value))
        elif pi in ambiguous:
            out.append(replace(peak, candidates=ambiguous[pi]))
        else:
            out.append(peak)
    return PeakSet(out, peaks.d_omega)


def eta(g: float, h: float) -> float:
    """Confinement scaling parameter 2 pi (1 - g) / h^(8/15)."""
    if h <= 0:
        raise ValueError(f"eta needs h > 0, got h={h}")
    return 2.0 * math.pi * (1.0 - g) / h ** (8.0 / 15.0)


@dataclass
class EtaPoint:
    """One sweep point: labelled peaks plus the ED reference levels."""

    g: float
    h: float
    eta: float
    peaks: PeakSet
    extracted: dict[str, tuple[float, float]]  # label -> (omega, uncertainty)
    ed_gaps: np.ndarray
    d_omega: float


@dataclass(frozen=True)
class _SweepTask:
    g: float
    h: float
    template: ModelParams
    plan: QuenchPlan
    seed: int | None
    window: str
    pad_factor: int
    min_height_frac: float
    n_low: int
    tol: float | None


def _sweep_point(task: _SweepTask) -> EtaPoint:
    params = replace(task.template, g=task.g, h=task.h)
    plan = replace(task.plan, seed=task.seed)
    record = trotter.run_quench(params, plan)
    spectrum = power_spectrum(
        series_from_record(record, "y"), window=task.window, pad_factor=task.pad_factor
    )
    found = find_peaks(spectrum, min_height_frac=task.min_height_frac)
    levels = edsolver.solve_sector(params, n_low=task.n_low)
    labelled = match_peaks(found, levels, tol=task.tol)
    extracted = {
        p.label: (p.omega, spectrum.d_omega / 2.0)
        for p in labelled
        if p.label != "unassigned"
    }
    return EtaPoint(
        task.g, task.h, eta(task.g, task.h), labelled, extracted, levels.gaps, spectrum.d_omega
    )


def eta_sweep(
    g_list,
    h: float,
    template: ModelParams,
    plan: QuenchPlan,
    *,
    window: str = "hann",
    pad_factor: int = 8,
    min_height_frac: float = 0.05,
    n_low: int = 6,
    tol: float | None = None,
    processes: int = 1,
) -> list[EtaPoint]:
    """Quench + spectroscopy + ED at each g; deterministic for fixed seed.

    Point i runs with seed plan.seed + i (left None when plan.seed is None),
    so serial and parallel execution produce identical results and a
    single-point sweep reproduces a plain quench with the same seed exactly.
    """
    g_list = list(g_list)
    tasks = [
        _SweepTask(
            float(g),
            float(h),
            template,
            plan,
            None if plan.seed is None else plan.seed + i,
            window,
            int(pad_factor),
            float(min_height_frac),
            int(n_low),
            tol,
        )
        for i, g in enumerate(g_list)
    ]
    if processes <= 1 or len(tasks) <= 1:
        return [_sweep_point(t) for t in tasks]
    with get_context("fork").Pool(min(processes, len(tasks))) as pool:
        return pool.map(_sweep_point, tasks)
