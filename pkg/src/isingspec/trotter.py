"""First-order Trotter steps for the chain and the quench measurement loop.

One step of exp(-i H dt) factorizes as

    U_step = U_1q * U_odd * U_even      (applied in that order)

where U_1q = prod_j exp(i dt (g sz_j + h sx_j)) collects the on-site fields,
U_odd the bond rotations exp(i dt sx sx) on bonds (1,2), (3,4), ... and
U_even those on (2,3), (4,5), ..., (L,1). For odd L the wrap bond (L,1)
joins the even layer so the two layers still cover all L bonds.

run_quench starts from |->,...,->, applies U_step n_steps times and records
observables after every step (and at t = 0), exactly for shots = 0 or through
sampled per-axis measurement blocks otherwise. Gate and readout noise, when
configured, are interleaved per gate / per shot and averaged over trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model, noise as noise_mod, obs, statevec
from .model import ModelParams, QuenchPlan
from .noise import NoiseParams
from .statevec import Gate, StateVector


@dataclass
class TrotterStep:
    """An ordered gate sequence realizing one time step."""

    gates: list[Gate]
    dt: float
    L: int
    native: bool = False

    @property
    def gate_counts(self) -> dict[str, int]:
        counts = {"1q": 0, "2q": 0, "cnot": 0}
        for g in self.gates:
            counts["1q" if len(g.sites) == 1 else "2q"] += 1
            if g.name == "cnot":
                counts["cnot"] += 1
        return counts


def _bond_layers(L: int) -> tuple[list[int], list[int]]:
    odds = [j for j in range(1, L + 1) if j % 2 == 1]
    evens = [j for j in range(1, L + 1) if j % 2 == 0]
    if L % 2 == 1:
        # the wrap bond (L, 1) cannot share the odd layer with bond (1, 2)
        odds.remove(L)
        evens.append(L)
    return odds, evens


def single_site_step_matrix(g: float, h: float, dt: float) -> np.ndarray:
    """Closed form of exp(i dt (g sz + h sx))."""
    r = dt * math.hypot(g, h)
    if r == 0.0:
        return np.eye(2, dtype=complex)
    scale = 1j * math.sin(r) / math.hypot(g, h)
    return math.cos(r) * np.eye(2, dtype=complex) + scale * (
        h * statevec.PAULI_X + g * statevec.PAULI_Z
    )


def build_step(params: ModelParams, dt: float) -> TrotterStep:
    """Gate list [U_1q; U_odd; U_even] for one first-order step."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    L = params.L
    gates: list[Gate] = []
    if params.g != 0.0 or params.h != 0.0:
        m1 = single_site_step_matrix(params.g, params.h, dt)
        gates.extend(Gate(m1, (j,), "u1") for j in range(1, L + 1))
    odds, evens = _bond_layers(L)
    for j in odds + evens:
        gates.append(statevec.xx_rotation_gate(dt, j, j % L + 1))
    return TrotterStep(gates, dt, L)


def _xx_angle(gate: Gate) -> float:
    # exp(i theta sx sx) has [0,0] = cos(theta), [0,3] = i sin(theta)
    return math.atan2(gate.matrix[0, 3].imag, gate.matrix[0, 0].real)


def decompose_to_native(step: TrotterStep) -> TrotterStep:
    """Rewrite each bond rotation as (H x H) CNOT RZ(-2 theta) CNOT (H x H).

    The identity is exact (including phase); single-site gates pass through.
    """
    out: list[Gate] = []
    for gate in step.gates:
        if gate.name != "xx":
            out.append(gate)
            continue
        a, b = gate.sites
        theta = _xx_angle(gate)
        out.extend(
            [
                statevec.h_gate(a),
                statevec.h_gate(b),
                statevec.cnot_gate(a, b),
                statevec.rz_gate(-2.0 * theta, b),
                statevec.cnot_gate(a, b),
                statevec.h_gate(a),
                statevec.h_gate(b),
            ]
        )
    return TrotterStep(out, step.dt, step.L, native=True)


@dataclass
class QuenchRecord:
    """Per-axis, per-site traces on the recorded time grid (t = 0 included).

    per_site maps axis -> array of shape (n_steps + 1, L). The aggregate
    traces are the site means. correlator, when recorded, holds G(r, t) with
    r = 1 .. L//2 along the second axis.
    """

    times: np.ndarray
    per_site: dict[str, np.ndarray]
    correlator: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def aggregate(self, axis: str) -> np.ndarray:
        if axis not in self.per_site:
            raise KeyError(f"axis {axis!r} was not measured (have {sorted(self.per_site)})")
        return self.per_site[axis].mean(axis=1)

    @property
    def sigma_y(self) -> np.ndarray:
        return self.aggregate("y")

    @property
    def sigma_x(self) -> np.ndarray:
        return self.aggregate("x")


def _provenance(params: ModelParams, plan: QuenchPlan, record_correlator: bool) -> dict:
    prov = {
        "model.L": params.L,
        "model.g": params.g,
        "model.h": params.h,
        "plan.dt": plan.dt,
        "plan.n_steps": plan.n_steps,
        "plan.shots": plan.shots,
        "plan.seed": plan.seed,
        "plan.measured_axes": "".join(plan.measured_axes),
        "correlator": record_correlator,
    }
    nz = plan.noise
    if nz is not None and not nz.is_null:
        prov.update(
            {
                "noise.p1": nz.p1,
                "noise.p2": nz.p2,
                "noise.p01": nz.p01,
                "noise.p10": nz.p10,
                "noise.trajectories": nz.trajectories,
                "noise.mitigate": nz.mitigate,
            }
        )
    return prov


class _Recorder:
    """Accumulates per-site traces for one trajectory at a time."""

    def __init__(self, params, plan, record_correlator, shots, mitigation):
        self.params = params
        self.plan = plan
        self.L = params.L
        self.shots = shots
        self.record_correlator = record_correlator
        self.mitigation = mitigation  # per-site (1 - 2 p_eff) factors or None
        n_rec = plan.n_steps + 1
        self.per_site = {ax: np.zeros((n_rec, self.L)) for ax in plan.measured_axes}
        self.correlator = np.zeros((n_rec, self.L // 2)) if record_correlator else None

    def record(self, state: StateVector, k: int, meas_ss, nz: NoiseParams | None):
        if self.shots == 0:
            for ax in self.plan.measured_axes:
                self.per_site[ax][k] = statevec.site_expectations(state, ax)
            if self.correlator is not None:
                self.correlator[k] = obs.correlator_profile(state)
            return
        axis_seeds = meas_ss.spawn(len(self.plan.measured_axes))
        for ax, ss in zip(self.plan.measured_axes, axis_seeds):
            rng = np.random.default_rng(ss)
            idx, counts = statevec.sample_index_counts(state, ax, self.shots, rng)
            if nz is not None and nz.has_readout_error:
                bits = statevec.bits_from_indices(idx, counts, self.L)
                bits = noise_mod.twirled_readout(bits, nz, rng)
                est = statevec.estimates_from_bits(bits)
                if self.mitigation is not None:
                    est = est / self.mitigation
                self.per_site[ax][k] = est
                if ax == "x" and self.correlator is not None:
                    self.correlator[k] = obs.correlator_profile_from_bits(
                        bits, self.mitigation
                    )
            else:
                self.per_site[ax][k] = statevec.estimates_from_indices(
                    idx, counts, self.L, self.shots
                )
                if ax == "x" and self.correlator is not None:
                    bits = statevec.bits_from_indices(idx, counts, self.L)
                    self.correlator[k] = obs.correlator_profile_from_bits(bits)


def run_quench(
    params: ModelParams, plan: QuenchPlan, record_correlator: bool = False
) -> QuenchRecord:
    """Trotter-evolve the polarized state and record observables per step.

    shots = 0 records exact expectations; otherwise each recorded time point
    spends `shots` samples per measured axis (split across noise trajectories
    when gate noise is active). The RNG substream layout is fixed per
    (trajectory, time point, axis), so any single stream's draws do not
    depend on how many other blocks ran before it.
    """
    if record_correlator and "x" not in plan.measured_axes:
        raise ValueError("the correlator needs x-basis data; add 'x' to measured_axes")
    nz = plan.noise
    if nz is not None and nz.is_null:
        nz = None  # all-zero noise must follow the noiseless path bit for bit
    L = params.L
    step = build_step(params, plan.dt)
    gate_kinds = [("1q" if len(g.sites) == 1 else "2q", g.sites) for g in step.gates]

    n_traj = nz.trajectories if (nz is not None and nz.has_gate_noise) else 1
    mitigation = None
    if nz is not None and nz.has_readout_error and nz.mitigate and plan.shots > 0:
        mitigation = np.full(L, 1.0 - 2.0 * nz.p_eff)

    # shot split across trajectories; the first (shots % n_traj) get one extra
    shot_share = [
        plan.shots // n_traj + (1 if t < plan.shots % n_traj else 0)
        for t in range(n_traj)
    ]

    root = np.random.SeedSequence(plan.seed)
    traj_seeds = root.spawn(n_traj)
    n_rec = plan.n_steps + 1
    sums = {ax: np.zeros((n_rec, L)) for ax in plan.measured_axes}
    corr_sum = np.zeros((n_rec, L // 2)) if record_correlator else None
    weight_total = 0.0

    for t in range(n_traj):
        shots_t = shot_share[t] if plan.shots > 0 else 0
        if plan.shots > 0 and shots_t == 0:
            continue  # more trajectories than shots; nothing to average in
        gate_ss, meas_root = traj_seeds[t].spawn(2)
        gate_rng = np.random.default_rng(gate_ss)
        meas_seeds = meas_root.spawn(n_rec)
        rec = _Recorder(params, plan, record_correlator, shots_t, mitigation)
        state = statevec.init_all_plus(L)
        rec.record(state, 0, meas_seeds[0], nz)
        for k in range(1, plan.n_steps + 1):
            for gate, (kind, sites) in zip(step.gates, gate_kinds):
                statevec.apply_gate(state, gate)
                if nz is not None and nz.has_gate_noise:
                    noise_mod.apply_gate_noise(state, kind, sites, nz, gate_rng)
            rec.record(state, k, meas_seeds[k], nz)
        w = shots_t if plan.shots > 0 else 1.0
        weight_total += w
        for ax in plan.measured_axes:
            sums[ax] += w * rec.per_site[ax]
        if corr_sum is not None:
            corr_sum += w * rec.correlator

    per_site = {ax: sums[ax] / weight_total for ax in plan.measured_axes}
    correlator = corr_sum / weight_total if corr_sum is not None else None
    times = np.arange(n_rec) * plan.dt
    return QuenchRecord(times, per_site, correlator, _provenance(params, plan, record_correlator))
