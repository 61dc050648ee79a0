"""Mixed-field Ising chain on a periodic ring.

The Hamiltonian is

    H = -sum_{j=1..L} (sx_j sx_{j+1} + g sz_j + h sx_j),    site L+1 == site 1,

with transverse field g >= 0 and longitudinal field h >= 0, both dimensionless
(hbar = 1, bond coupling normalized to 1). Quenches start from the g = h = 0
ground state |->,...,->  (all spins polarized along +x).

Sites are 1-indexed throughout the public API. Internally site j lives on bit
j-1 of the basis index (little-endian).
"""

from __future__ import annotations

from dataclasses import dataclass, field

AXES = ("x", "y", "z")

L_MIN = 2
L_MAX = 24  # dense statevector bound: 2**L amplitudes


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a parameter check: severity plus human-readable messages."""

    severity: str  # "ok" | "warn" | "error"
    messages: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.severity != "error"


def validate(L: int, g: float, h: float) -> ValidationReport:
    """Classify raw chain parameters as ok / warn / error.

    Errors are reserved for parameters the engine cannot represent (L out of
    range). Couplings outside the confining-quench regime g <= 1, h < 1 are
    permitted but flagged, since the physics targeted here (two-kink bound
    states after a quench from the polarized state) lives in that regime.
    """
    if int(L) != L:
        return ValidationReport("error", (f"L={L!r} is not an integer",))
    if not L_MIN <= L <= L_MAX:
        return ValidationReport(
            "error", (f"L={L} outside supported range [{L_MIN}, {L_MAX}]",)
        )
    msgs = []
    if g < 0 or h < 0:
        msgs.append(
            f"negative coupling (g={g}, h={h}); the sign conventions here assume g, h >= 0"
        )
    if g > 1 or h >= 1:
        msgs.append(
            f"(g={g}, h={h}) is outside the confining-quench regime g <= 1, h < 1; "
            "results are untested there"
        )
    return ValidationReport("warn" if msgs else "ok", tuple(msgs))


@dataclass(frozen=True)
class ModelParams:
    """Chain parameters. Construction rejects sizes the engine cannot hold."""

    L: int
    g: float
    h: float
    periodic: bool = True

    def __post_init__(self):
        if not self.periodic:
            raise ValueError("only periodic chains (site L+1 == site 1) are supported")
        report = validate(self.L, self.g, self.h)
        if not report.ok:
            raise ValueError("; ".join(report.messages))

    def validation(self) -> ValidationReport:
        return validate(self.L, self.g, self.h)

    def bonds(self) -> list[tuple[int, int]]:
        """The L nearest-neighbour bonds (j, j+1) with the periodic wrap (L, 1)."""
        return [(j, j % self.L + 1) for j in range(1, self.L + 1)]


@dataclass(frozen=True)
class PauliTerm:
    """One product term c * P_{s1} * P_{s2} ... acting on named sites/axes."""

    coefficient: float
    factors: tuple[tuple[int, str], ...]  # ((site, axis), ...), sites 1-indexed

    def __post_init__(self):
        if not self.factors:
            raise ValueError("a Pauli term needs at least one factor")
        if len(self.factors) > 2:
            raise ValueError("chain Hamiltonian terms act on at most two sites")
        sites = [s for s, _ in self.factors]
        if len(set(sites)) != len(sites):
            raise ValueError(f"duplicate site in factors {self.factors}")
        for site, axis in self.factors:
            if site < 1:
                raise ValueError(f"sites are 1-indexed, got {site}")
            if axis not in AXES:
                raise ValueError(f"axis must be one of {AXES}, got {axis!r}")


def hamiltonian_terms(params: ModelParams) -> list[PauliTerm]:
    """Expand H into Pauli product terms.

    Order is fixed (bonds, transverse fields, longitudinal fields) so that
    consumers iterate deterministically. Terms with zero coefficient are
    omitted: at g = h = 0 only the L bond terms remain.
    """
    terms = [PauliTerm(-1.0, ((a, "x"), (b, "x"))) for a, b in params.bonds()]
    if params.g != 0.0:
        terms.extend(PauliTerm(-params.g, ((j, "z"),)) for j in range(1, params.L + 1))
    if params.h != 0.0:
        terms.extend(PauliTerm(-params.h, ((j, "x"),)) for j in range(1, params.L + 1))
    return terms


@dataclass(frozen=True)
class QuenchPlan:
    """Time grid and measurement budget for one quench run.

    shots = 0 means exact expectation values; shots > 0 draws that many
    bitstring samples per measured axis at every recorded time. The seed
    controls every stochastic element (sampling, gate noise, readout noise)
    through per-(trajectory, time point, axis) substreams.
    """

    dt: float
    n_steps: int
    shots: int = 0
    measured_axes: tuple[str, ...] = ("x", "y")
    seed: int = 0
    noise: "object | None" = None  # NoiseParams; kept loose to avoid import cycle

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.shots < 0:
            raise ValueError(f"shots must be >= 0, got {self.shots}")
        axes = tuple(self.measured_axes)
        if not axes or any(a not in AXES for a in axes) or len(set(axes)) != len(axes):
            raise ValueError(f"measured_axes must be a nonempty subset of {AXES}")
        object.__setattr__(self, "measured_axes", axes)

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt
