"""Command line front end: config-driven, seeded, deterministic runs.

Configs are flat ``section.key = value`` text files (dotted keys, ``#``
comments). Every command reads one config, runs the corresponding pipeline
and writes data files into the configured output directory, never anywhere
else. Data files carry a provenance comment so they are self-describing, and
all floating point output uses repr() so re-runs are byte-identical and
values round-trip exactly.

Exit codes: 0 success, 1 usage or config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import io
import json
import resource
import sys
import time
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__, edsolver, obs, spectro, trotter
from .model import ModelParams, QuenchPlan
from .noise import NoiseParams


class ConfigError(ValueError):
    """Malformed config text, unknown key, or a value of the wrong type."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _emit_float(v: float) -> str:
    return repr(float(v))


def _emit_list(v) -> str:
    return ",".join(_emit(x) for x in v)


def _emit(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _emit_float(v)
    if isinstance(v, (tuple, list)):
        return _emit_list(v)
    return str(v)


_DEFAULT_SWEEP = tuple(round(0.25 + 0.05 * k, 2) for k in range(11))

# key -> (parser, default); emit side is derived from the value type
_SCHEMA = {
    "model.L": (int, 12),
    "model.g": (float, 0.5),
    "model.h": (float, 0.3),
    "plan.dt": (float, 0.4),
    "plan.n_steps": (int, 100),
    "plan.shots": (int, 0),
    "plan.seed": (int, 0),
    "plan.axes": (_parse_str_list, ("x", "y")),
    "noise.enabled": (_parse_bool, False),
    "noise.p1": (float, 0.001),
    "noise.p2": (float, 0.01),
    "noise.p01": (float, 0.02),
    "noise.p10": (float, 0.02),
    "noise.trajectories": (int, 100),
    "noise.mitigate": (_parse_bool, True),
    "spectro.window": (str, "hann"),
    "spectro.pad_factor": (int, 8),
    "spectro.min_height_frac": (float, 0.05),
    "spectro.n_low": (int, 6),
    "spectro.trace": (str, ""),
    "spectro.join_ed": (_parse_bool, True),
    "sweep.g_list": (_parse_float_list, _DEFAULT_SWEEP),
    "correlate.threshold": (float, 0.02),
    "ed.n_low": (int, 6),
    "output.dir": (str, "out"),
    "output.format": (str, "csv"),
    "output.per_site": (_parse_bool, False),
}


@dataclass
class RunConfig:
    """A fully populated, normalized configuration."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **dotted) -> "RunConfig":
        out = dict(self.values)
        for k, v in dotted.items():
            out[k.replace("__", ".")] = v
        return RunConfig(out)

    def model_params(self, g: float | None = None) -> ModelParams:
        return ModelParams(
            self["model.L"], self["model.g"] if g is None else g, self["model.h"]
        )

    def quench_plan(self, seed: int | None = None) -> QuenchPlan:
        noise = None
        if self["noise.enabled"]:
            noise = NoiseParams(
                p1=self["noise.p1"],
                p2=self["noise.p2"],
                p01=self["noise.p01"],
                p10=self["noise.p10"],
                trajectories=self["noise.trajectories"],
                mitigate=self["noise.mitigate"],
            )
        return QuenchPlan(
            dt=self["plan.dt"],
            n_steps=self["plan.n_steps"],
            shots=self["plan.shots"],
            measured_axes=self["plan.axes"],
            seed=self["plan.seed"] if seed is None else seed,
            noise=noise,
        )


def parse_config(text: str) -> RunConfig:
    """Flat dotted-key parser; unknown keys and bad values are config errors."""
    values = {k: d for k, (_, d) in _SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (p.strip() for p in line.partition("="))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    if values["output.format"] not in ("csv", "json", "both"):
        raise ConfigError(f"output.format must be csv|json|both, got {values['output.format']!r}")
    return RunConfig(values)


def emit_config(cfg: RunConfig) -> str:
    """Canonical text form; parse(emit(parse(x))) is a fixed point."""
    lines = [f"{k} = {_emit(cfg.values[k])}" for k in sorted(_SCHEMA)]
    return "\n".join(lines) + "\n"


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig({k: d for k, (_, d) in _SCHEMA.items()})
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(p.read_text())


# ---------------------------------------------------------------- renderers

def _provenance_line(pairs: dict) -> str:
    return "# " + " ".join(f"{k}={_emit(v)}" for k, v in sorted(pairs.items()))


def _run_provenance(cfg: RunConfig, command: str, g: float | None = None, seed=None) -> dict:
    prov = {
        "isingspec": __version__,
        "command": command,
        "model.L": cfg["model.L"],
        "model.g": cfg["model.g"] if g is None else g,
        "model.h": cfg["model.h"],
        "plan.dt": cfg["plan.dt"],
        "plan.n_steps": cfg["plan.n_steps"],
        "plan.shots": cfg["plan.shots"],
        "plan.seed": cfg["plan.seed"] if seed is None else seed,
        "plan.axes": cfg["plan.axes"],
        "noise.enabled": cfg["noise.enabled"],
    }
    if cfg["noise.enabled"]:
        for k in ("p1", "p2", "p01", "p10", "trajectories", "mitigate"):
            prov[f"noise.{k}"] = cfg[f"noise.{k}"]
    return prov


def render_trace_csv(record, prov: dict, per_site: bool) -> str:
    axes = [a for a in ("y", "x") if a in record.per_site]
    cols = ["t"] + [f"sigma_{a}" for a in axes]
    if per_site:
        L = record.per_site[axes[0]].shape[1]
        cols += [f"s{a}_{j}" for a in axes for j in range(1, L + 1)]
    rows = [_provenance_line(prov), ",".join(cols)]
    aggs = {a: record.aggregate(a) for a in axes}
    for k, t in enumerate(record.times):
        cells = [repr(float(t))] + [repr(float(aggs[a][k])) for a in axes]
        if per_site:
            cells += [
                repr(float(v)) for a in axes for v in record.per_site[a][k]
            ]
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def render_trace_json(record, prov: dict) -> str:
    doc = {
        "provenance": {k: _emit(v) for k, v in sorted(prov.items())},
        "times": [float(t) for t in record.times],
        "aggregate": {
            a: [float(v) for v in record.aggregate(a)] for a in sorted(record.per_site)
        },
        "per_site": {
            a: [[float(v) for v in row] for row in record.per_site[a]]
            for a in sorted(record.per_site)
        },
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parse_trace_csv(text: str) -> tuple[dict, np.ndarray, dict[str, np.ndarray]]:
    """Read back a trace file: provenance dict, times, named value columns."""
    prov: dict = {}
    header = None
    data: list[list[float]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for part in line[1:].split():
                if "=" in part:
                    k, _, v = part.partition("=")
                    prov[k] = v
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            continue
        data.append([float(c) for c in line.split(",")])
    if header is None or not data:
        raise ValueError("trace file holds no data rows")
    arr = np.asarray(data)
    cols = {name: arr[:, i] for i, name in enumerate(header)}
    if "t" not in cols:
        raise ValueError("trace file has no 't' column")
    return prov, cols.pop("t"), cols


def render_spectrum_csv(spectrum, prov: dict) -> str:
    rows = [_provenance_line(prov), "omega,power"]
    rows += [
        f"{repr(float(w))},{repr(float(p))}"
        for w, p in zip(spectrum.omega, spectrum.power)
    ]
    return "\n".join(rows) + "\n"


def render_spectrum_json(spectrum, prov: dict) -> str:
    doc = {
        "provenance": {k: _emit(v) for k, v in sorted(prov.items())},
        "window": spectrum.window,
        "pad_factor": spectrum.pad_factor,
        "d_omega": float(spectrum.d_omega),
        "omega": [float(w) for w in spectrum.omega],
        "power": [float(p) for p in spectrum.power],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def render_peaks_json(peaks, levels, prov: dict) -> str:
    doc = {
        "provenance": {k: _emit(v) for k, v in sorted(prov.items())},
        "d_omega": float(peaks.d_omega),
        "peaks": [
            {
                "omega": float(p.omega),
                "height": float(p.height),
                "width": float(p.width),
                "label": p.label,
                "matched_value": None if p.matched_value is None else float(p.matched_value),
                "candidates": [[name, float(v)] for name, v in p.candidates],
            }
            for p in peaks.peaks
        ],
    }
    if levels is not None:
        doc["ed_gaps"] = [float(x) for x in levels.gaps]
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ----------------------------------------------------------------- commands

def _spectrum_from_trace(cfg: RunConfig, trace_text: str):
    """Shared quench-trace -> (spectrum, labelled peaks, levels, prov) path."""
    prov, times, cols = parse_trace_csv(trace_text)
    if "sigma_y" not in cols:
        raise ValueError("trace has no sigma_y column; spectroscopy needs it")
    series = spectro.TimeSeries(times, cols["sigma_y"], meta=dict(prov))
    spectrum = spectro.power_spectrum(
        series, window=cfg["spectro.window"], pad_factor=cfg["spectro.pad_factor"]
    )
    peaks = spectro.find_peaks(spectrum, min_height_frac=cfg["spectro.min_height_frac"])
    levels = None
    if cfg["spectro.join_ed"] and all(f"model.{k}" in prov for k in ("L", "g", "h")):
        params = ModelParams(
            int(prov["model.L"]), float(prov["model.g"]), float(prov["model.h"])
        )
        levels = edsolver.solve_sector(params, n_low=cfg["spectro.n_low"])
        peaks = spectro.match_peaks(peaks, levels)
    sprov = dict(prov)
    sprov.update(
        {
            "spectro.window": cfg["spectro.window"],
            "spectro.pad_factor": cfg["spectro.pad_factor"],
            "d_omega": float(spectrum.d_omega),
        }
    )
    return spectrum, peaks, levels, sprov


def _quench_payload(cfg: RunConfig, *, g=None, seed=None, correlator=False) -> dict:
    params = cfg.model_params(g=g)
    plan = cfg.quench_plan(seed=seed)
    record = trotter.run_quench(params, plan, record_correlator=correlator)
    prov = _run_provenance(cfg, "quench", g=g, seed=seed)
    out = {
        "record": record,
        "prov": prov,
        "trace.csv": render_trace_csv(record, prov, cfg["output.per_site"]),
    }
    if cfg["output.format"] in ("json", "both"):
        out["trace.json"] = render_trace_json(record, prov)
    return out


def _sweep_point_payload(cfg: RunConfig, index: int, g: float) -> dict:
    """One sweep point run through the exact quench + spectrum file path."""
    seed = cfg["plan.seed"] + index
    q = _quench_payload(cfg, g=g, seed=seed)
    spectrum, peaks, levels, sprov = _spectrum_from_trace(cfg, q["trace.csv"])
    point = {
        "g": g,
        "eta": spectro.eta(g, cfg["model.h"]),
        "extracted": {
            p.label: (float(p.omega), float(spectrum.d_omega) / 2.0)
            for p in peaks
            if p.label != "unassigned"
        },
    }
    files = {"trace.csv": q["trace.csv"], "peaks.json": render_peaks_json(peaks, levels, sprov)}
    if "trace.json" in q:
        files["trace.json"] = q["trace.json"]
    if cfg["output.format"] in ("csv", "both"):
        files["spectrum.csv"] = render_spectrum_csv(spectrum, sprov)
    if cfg["output.format"] in ("json", "both"):
        files["spectrum.json"] = render_spectrum_json(spectrum, sprov)
    return {"point": point, "files": files}


def cmd_quench(cfg: RunConfig) -> dict[str, str]:
    q = _quench_payload(cfg)
    files = {"trace.csv": q["trace.csv"]}
    if "trace.json" in q:
        files["trace.json"] = q["trace.json"]
    return files


def cmd_ed(cfg: RunConfig) -> dict[str, str]:
    params = cfg.model_params()
    # ed.n_low counts excitation gaps, so fetch the ground level plus n_low
    levels = edsolver.solve_sector(params, n_low=cfg["ed.n_low"] + 1)
    oracle_check = None
    if params.h == 0 and params.L % 2 == 0 and 4 <= params.L <= edsolver.ORACLE_L_MAX:
        oracle = edsolver.free_fermion_oracle(params.L, params.g)
        oracle_check = bool(edsolver.spectrum_contains(oracle, levels.eigenvalues))
    doc = {
        "model": {"L": params.L, "g": params.g, "h": params.h},
        "sector": "k=0",
        "dim": levels.meta.get("dim"),
        "method": levels.method,
        "residual": float(levels.residual),
        "eigenvalues": [float(x) for x in levels.eigenvalues],
        "levels": [float(x) for x in levels.levels],
        "multiplicities": [int(x) for x in levels.multiplicities],
        "gaps": [float(x) for x in levels.gaps],
        "oracle_check": oracle_check,
    }
    return {"levels.json": json.dumps(doc, sort_keys=True, indent=2) + "\n"}


def cmd_spectrum(cfg: RunConfig, out_dir: Path) -> dict[str, str]:
    trace_path = Path(cfg["spectro.trace"]) if cfg["spectro.trace"] else out_dir / "trace.csv"
    if not trace_path.is_file():
        raise FileNotFoundError(f"trace file not found: {trace_path}")
    spectrum, peaks, levels, sprov = _spectrum_from_trace(cfg, trace_path.read_text())
    files = {"peaks.json": render_peaks_json(peaks, levels, sprov)}
    if cfg["output.format"] in ("csv", "both"):
        files["spectrum.csv"] = render_spectrum_csv(spectrum, sprov)
    if cfg["output.format"] in ("json", "both"):
        files["spectrum.json"] = render_spectrum_json(spectrum, sprov)
    return files


def cmd_sweep(cfg: RunConfig, processes: int) -> dict[str, str]:
    gs = list(cfg["sweep.g_list"])
    if not gs:
        raise ConfigError("sweep.g_list is empty")
    args = [(cfg, i, float(g)) for i, g in enumerate(gs)]
    if processes > 1 and len(gs) > 1:
        with get_context("fork").Pool(min(processes, len(gs))) as pool:
            payloads = pool.starmap(_sweep_point_payload, args)
    else:
        payloads = [_sweep_point_payload(*a) for a in args]

    files: dict[str, str] = {}
    suffix = lambda i: "" if len(gs) == 1 else f"_p{i:02d}"  # noqa: E731
    for i, payload in enumerate(payloads):
        for name, text in payload["files"].items():
            stem, _, ext = name.partition(".")
            files[f"{stem}{suffix(i)}.{ext}"] = text

    prov = {
        "isingspec": __version__,
        "command": "sweep",
        "model.L": cfg["model.L"],
        "model.h": cfg["model.h"],
        "plan.dt": cfg["plan.dt"],
        "plan.n_steps": cfg["plan.n_steps"],
        "plan.shots": cfg["plan.shots"],
        "plan.seed": cfg["plan.seed"],
        "sweep.g_list": cfg["sweep.g_list"],
    }
    rows = [_provenance_line(prov), "g,h,eta,e1,e1_err,e2,e2_err,e3,e3_err"]
    table = []
    for payload in payloads:
        pt = payload["point"]
        cells = [repr(float(pt["g"])), repr(float(cfg["model.h"])), repr(float(pt["eta"]))]
        for label in ("e1", "e2", "e3"):
            if label in pt["extracted"]:
                val, err = pt["extracted"][label]
                cells += [repr(val), repr(err)]
            else:
                cells += ["", ""]
        rows.append(",".join(cells))
        table.append(
            {
                "g": float(pt["g"]),
                "h": float(cfg["model.h"]),
                "eta": float(pt["eta"]),
                "extracted": {k: [float(v[0]), float(v[1])] for k, v in pt["extracted"].items()},
            }
        )
    files["sweep.csv"] = "\n".join(rows) + "\n"
    files["sweep.json"] = json.dumps(
        {"provenance": {k: _emit(v) for k, v in sorted(prov.items())}, "points": table},
        sort_keys=True,
        indent=2,
    ) + "\n"
    return files


def cmd_correlate(cfg: RunConfig) -> dict[str, str]:
    if "x" not in cfg["plan.axes"]:
        raise ConfigError("correlate needs 'x' in plan.axes")
    q = _quench_payload(cfg, correlator=True)
    record, prov = q["record"], dict(q["prov"])
    prov["command"] = "correlate"
    field = obs.field_from_record(record)
    fit = obs.lightcone_front(field, threshold=cfg["correlate.threshold"])
    bound = 2.0 * obs.max_group_velocity(cfg["model.g"])

    rows = [_provenance_line(prov), "t,r,G"]
    for k, t in enumerate(field.times):
        for ri, r in enumerate(field.rs):
            rows.append(f"{repr(float(t))},{int(r)},{repr(float(field.values[k, ri]))}")
    front = {
        "provenance": {k: _emit(v) for k, v in sorted(prov.items())},
        "threshold": float(fit.threshold),
        "velocity": None if np.isnan(fit.velocity) else float(fit.velocity),
        "stalled": bool(fit.stalled),
        "max_radius": int(fit.radii.max()) if fit.radii.size else 0,
        "dispersion_bound": float(bound),
        "fit_window": None if fit.window is None else [float(x) for x in fit.window],
        "times": [float(t) for t in fit.times],
        "radii": [int(r) for r in fit.radii],
        "sign_changes": [int(obs.oscillation_count(field, int(r))) for r in field.rs],
    }
    files = {
        "correlator.csv": "\n".join(rows) + "\n",
        "front.json": json.dumps(front, sort_keys=True, indent=2) + "\n",
    }
    files.update({k: v for k, v in q.items() if k in ("trace.csv", "trace.json")})
    return files


# --------------------------------------------------------------- entrypoint

class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit 1 per the exit-code contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="isingspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("quench", "run one quench, write the observable trace"),
        ("ed", "zero-momentum exact diagonalization levels"),
        ("spectrum", "Fourier spectrum and labelled peaks of a trace"),
        ("sweep", "quench + spectroscopy across a list of g values"),
        ("correlate", "connected x-x correlator and light-cone front fit"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="config file (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="override plan.seed")
        p.add_argument("--parallel", type=int, default=1, metavar="K", help="worker processes")
        p.add_argument("--format", choices=("csv", "json", "both"), help="override output.format")
        if name == "spectrum":
            p.add_argument("--trace", help="input trace CSV (overrides spectro.trace)")
    return parser


def _dispatch(args, cfg: RunConfig, out_dir: Path) -> dict[str, str]:
    if args.command == "quench":
        return cmd_quench(cfg)
    if args.command == "ed":
        return cmd_ed(cfg)
    if args.command == "spectrum":
        return cmd_spectrum(cfg, out_dir)
    if args.command == "sweep":
        return cmd_sweep(cfg, processes=max(1, args.parallel))
    if args.command == "correlate":
        return cmd_correlate(cfg)
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    started = time.monotonic()
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(plan__seed=args.seed)
        if args.out is not None:
            cfg = cfg.replace(output__dir=args.out)
        if args.format is not None:
            cfg = cfg.replace(output__format=args.format)
        if args.command == "spectrum" and getattr(args, "trace", None):
            cfg = cfg.replace(spectro__trace=args.trace)
    except ConfigError as exc:
        print(f"isingspec: config error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(cfg["output.dir"])
    try:
        files = _dispatch(args, cfg, out_dir)
    except ConfigError as exc:
        print(f"isingspec: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  (CLI boundary: report, exit 2)
        print(f"isingspec: error: {exc}", file=sys.stderr)
        return 2

    # all computation succeeded; only now touch the filesystem
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out_dir / name).write_text(files[name])
    stats = {
        "command": args.command,
        "elapsed_s": round(time.monotonic() - started, 3),
        "max_rss_kb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
        "files": sorted(files),
    }
    (out_dir / "run_stats.json").write_text(json.dumps(stats, sort_keys=True, indent=2) + "\n")
    print(f"isingspec {args.command}: wrote {len(files) + 1} files to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
