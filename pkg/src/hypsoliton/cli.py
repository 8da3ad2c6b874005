"""Command-line front end.

Each subcommand reads a JSON run configuration (``--config``) made of named
blocks, applies flag overrides, validates every field, runs, and writes its
artifacts plus a ``manifest.json`` copy of the effective configuration into one
output directory.  The output root defaults to ``./hypsoliton-runs`` and can be
moved with ``HYPSOLITON_OUT``.

Exit codes: 0 success, 1 property violation (``verify``), 2 invalid
configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evolution, heat_kernel, rearrangement, stability, verification
from .geometry import ModelError, ModelParams, RadialField, RadialGrid, Space, default_r_max
from .ground_state import SolverError, decay_diagnostics, gradient_flow_minimize
from .nonlinearity import NonlinearitySpec

SCHEMA_VERSION = 1
ENV_OUT = "HYPSOLITON_OUT"
COMMANDS = ("groundstate", "sweep", "spectrum", "evolve", "orbital", "blowup", "heatkernel", "rearrange", "verify")


def _nonlinearity():
    return {"kind": "power", "q": None, "growth_rate": 0.0, "coupling": 1.0}


def _solver():
    return {"tol": 5e-9, "rtol": 1e-10, "max_iters": 5000}


def _output(fmt="csv"):
    return {"dir": None, "format": fmt}


DEFAULTS = {
    "groundstate": {
        "model": {"d": 3, "p": 2.0, "lambda": 1.0, "mass": None},
        "grid": {"r_max": None, "n": 4000},
        "nonlinearity": _nonlinearity(),
        "solver": _solver(),
        "output": _output(),
    },
    "sweep": {
        "model": {"d": 3, "p": 2.0},
        "sweep": {"lambda": "0.5:2:0.1", "workers": 1},
        "grid": {"r_max": None, "h": 2e-3},
        "nonlinearity": _nonlinearity(),
        "solver": _solver(),
        "output": _output(),
    },
    "spectrum": {
        "model": {"d": 2, "p": 1.0, "lambda": 1.0},
        "grid": {"r_max": None, "n": 1024},
        "nonlinearity": _nonlinearity(),
        "solver": _solver(),
        "spectrum": {"k": 4, "hamiltonian": True, "zero_tol": 1e-3},
        "output": _output("json"),
    },
    "evolve": {
        "model": {"d": 2, "p": 1.0, "lambda": 1.0},
        "grid": {"r_max": None, "h": 5e-3},
        "nonlinearity": _nonlinearity(),
        "solver": _solver(),
        "evolution": {
            "init": "soliton",
            "epsilon": 0.0,
            "amplitude": 1.0,
            "width": 1.0,
            "dt": 0.01,
            "t_end": 1.0,
            "record_every": 10,
            "boundary_tol": 1e-8,
        },
        "output": _output(),
    },
    "orbital": {
        "model": {"d": 2, "p": 1.0, "lambda": 1.0},
        "grid": {"r_max": 100.0, "h": 0.02},
        "nonlinearity": _nonlinearity(),
        "solver": _solver(),
        "evolution": {"epsilon": 1e-2, "dt": 0.002, "t_end": 10.0, "record_every": 50, "boundary_tol": 1e-8},
        "output": _output(),
    },
    "blowup": {
        "model": {"d": 2, "p": 2.0},
        "grid": {"r_max": 10.0, "h": 2e-4},
        "nonlinearity": _nonlinearity(),
        "evolution": {
            "amplitude": 4.0,
            "width": 1.0,
            "t_max": 2.0,
            "dt0": 1e-3,
            "growth_threshold": 1e3,
            "c_d": None,
            "boundary_tol": 1e-6,
            "max_steps": 200_000,
        },
        "output": _output("json"),
    },
    "heatkernel": {
        "kernel": {"d": 3, "t": 1.0, "rho_max": 10.0, "n_rho": 201},
        "output": _output(),
    },
    "rearrange": {
        "rearrange": {"d": 2, "input": None, "seed": 0, "r_max": 10.0, "h": 1e-3},
        "output": _output(),
    },
    "verify": {
        "verify": {"seed": 0, "cases": 100},
        "output": _output("json"),
    },
}

# flag -> key looked up in whichever block of the command owns it
FLAGS = {
    "--d": "d",
    "--p": "p",
    "--lambda": "lambda",
    "--mass": "mass",
    "--r-max": "r_max",
    "--n": "n",
    "--h": "h",
    "--kind": "kind",
    "--q": "q",
    "--growth-rate": "growth_rate",
    "--coupling": "coupling",
    "--tol": "tol",
    "--max-iters": "max_iters",
    "--workers": "workers",
    "--k": "k",
    "--hamiltonian": "hamiltonian",
    "--init": "init",
    "--epsilon": "epsilon",
    "--amplitude": "amplitude",
    "--width": "width",
    "--dt": "dt",
    "--dt0": "dt0",
    "--t-end": "t_end",
    "--t-max": "t_max",
    "--record-every": "record_every",
    "--c-d": "c_d",
    "--growth-threshold": "growth_threshold",
    "--t": "t",
    "--rho-max": "rho_max",
    "--n-rho": "n_rho",
    "--input": "input",
    "--seed": "seed",
    "--cases": "cases",
    "--out": "dir",
    "--format": "format",
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    command: str
    blocks: dict = field(default_factory=dict)

    def get(self, path: str):
        block, key = path.split(".")
        return self.blocks[block][key]

    def set(self, path: str, value) -> None:
        block, key = path.split(".", 1)
        if block not in self.blocks or key not in self.blocks[block]:
            raise ConfigError(path, f"unknown field for command {self.command!r}")
        self.blocks[block][key] = _coerce_like(self.blocks[block][key], value, path)

    def owner(self, key: str) -> str | None:
        for name, block in self.blocks.items():
            if key in block:
                return f"{name}.{key}"
        return None

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "command": self.command, **copy.deepcopy(self.blocks)}

    @classmethod
    def defaults(cls, command: str) -> "RunConfig":
        if command not in DEFAULTS:
            raise ConfigError("command", f"unknown command {command!r}")
        return cls(command, copy.deepcopy(DEFAULTS[command]))

    @classmethod
    def from_dict(cls, data: dict, command: str | None = None) -> "RunConfig":
        data = dict(data)
        data.pop("schema_version", None)
        cmd = data.pop("command", None) or command
        if command is not None and cmd != command:
            raise ConfigError("command", f"config is for {cmd!r}, not {command!r}")
        cfg = cls.defaults(cmd)
        for block, values in data.items():
            if block not in cfg.blocks or not isinstance(values, dict):
                raise ConfigError(block, f"unknown block for command {cmd!r}")
            for key, value in values.items():
                cfg.set(f"{block}.{key}", value)
        return cfg

    @classmethod
    def load(cls, path, command: str | None = None) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        return cls.from_dict(data, command)


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce_like(default, value, path):
    if isinstance(value, str) and not isinstance(default, str):
        value = _parse_scalar(value)
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None and isinstance(value, (int, float)) and not isinstance(value, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    return value


# ---------------------------------------------------------------------------
# validation


def _positive(cfg, path, allow_none=False):
    v = cfg.get(path)
    if v is None and allow_none:
        return
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or not v > 0:
        raise ConfigError(path, f"must be a positive number, got {v!r}")


def parse_range(text: str, path: str = "sweep.lambda") -> np.ndarray:
    """'a:b:step' -> a, a+step, ..., b (inclusive up to round-off)."""
    try:
        a, b, step = (float(x) for x in str(text).split(":"))
    except ValueError as exc:
        raise ConfigError(path, f"expected 'start:stop:step', got {text!r}") from exc
    if not step > 0 or b < a:
        raise ConfigError(path, "need stop >= start and step > 0")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(count), 12)


def _model(cfg, lam=None) -> ModelParams:
    m = cfg.blocks["model"]
    d = m["d"]
    if not isinstance(d, int) or d < 2:
        raise ConfigError("model.d", f"must be an integer >= 2, got {d!r}")
    p = m["p"]
    if not isinstance(p, float) or not p > 0:
        raise ConfigError("model.p", f"must be positive, got {p!r}")
    crit = math.inf if d == 2 else 4.0 / (d - 2)
    if not p < crit:
        raise ConfigError("model.p", f"p={p} is not energy subcritical for d={d} (need p < {crit:g})")
    lam = m.get("lambda", 0.0) if lam is None else lam
    if lam is None:
        lam = 0.0
    if not lam + ((d - 1) / 2.0) ** 2 > 0:
        raise ConfigError("model.lambda", f"lambda={lam} must exceed -((d-1)/2)^2 = {-((d - 1) / 2.0) ** 2}")
    return ModelParams(d, p, lam)


def _spec(cfg, params) -> NonlinearitySpec:
    n = cfg.blocks["nonlinearity"]
    try:
        spec = NonlinearitySpec(n["kind"], params.p, n["q"], n["growth_rate"] or 0.0, n["coupling"])
        spec.validate(params.d)
    except ModelError as exc:
        raise ConfigError("nonlinearity", str(exc)) from exc
    return spec


def _grid(cfg, mu: float) -> RadialGrid:
    g = cfg.blocks["grid"]
    _positive(cfg, "grid.r_max", allow_none=True)
    r_max = default_r_max(mu) if g["r_max"] is None else g["r_max"]
    if "n" in g:
        if not isinstance(g["n"], int) or g["n"] < 16:
            raise ConfigError("grid.n", f"must be an integer >= 16, got {g['n']!r}")
        return RadialGrid(r_max, g["n"])
    _positive(cfg, "grid.h")
    if g["h"] * 16 > r_max:
        raise ConfigError("grid.h", "spacing leaves fewer than 16 cells")
    return RadialGrid.with_spacing(r_max, g["h"])


def _solver_kw(cfg) -> dict:
    for key in ("tol", "rtol"):
        _positive(cfg, f"solver.{key}")
    if not isinstance(cfg.get("solver.max_iters"), int) or cfg.get("solver.max_iters") < 1:
        raise ConfigError("solver.max_iters", "must be a positive integer")
    s = cfg.blocks["solver"]
    return {"tol": s["tol"], "rtol": s["rtol"], "max_iters": s["max_iters"]}


def validate(cfg: RunConfig) -> None:
    """Check every field a command uses; raises ConfigError naming the field."""
    if cfg.get("output.format") not in ("csv", "json"):
        raise ConfigError("output.format", "must be 'csv' or 'json'")
    cmd = cfg.command
    if "model" in cfg.blocks:
        params = _model(cfg)
        _spec(cfg, params)
        if "solver" in cfg.blocks:
            _solver_kw(cfg)
        if cmd == "sweep":
            lams = parse_range(cfg.get("sweep.lambda"))
            for lam in lams:
                _model(cfg, float(lam))
            if not isinstance(cfg.get("sweep.workers"), int) or cfg.get("sweep.workers") < 1:
                raise ConfigError("sweep.workers", "must be a positive integer")
            _grid(cfg, _model(cfg, float(lams[0])).mu)
        else:
            _grid(cfg, params.mu)
    if cmd == "groundstate" and cfg.get("model.mass") is not None:
        _positive(cfg, "model.mass")
        p, d = cfg.get("model.p"), cfg.get("model.d")
        if not p < 4.0 / d:
            raise ConfigError("model.mass", f"fixed-mass mode needs p < 4/d = {4.0 / d:g}")
    if cmd == "spectrum":
        if not isinstance(cfg.get("spectrum.k"), int) or cfg.get("spectrum.k") < 1:
            raise ConfigError("spectrum.k", "must be a positive integer")
        _positive(cfg, "spectrum.zero_tol")
    if cmd in ("evolve", "orbital"):
        for key in ("dt", "t_end"):
            _positive(cfg, f"evolution.{key}")
        _positive(cfg, "evolution.boundary_tol", allow_none=True)
        steps = cfg.get("evolution.t_end") / cfg.get("evolution.dt")
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ConfigError("evolution.t_end", "must be a whole number of steps dt")
        if not isinstance(cfg.get("evolution.record_every"), int) or cfg.get("evolution.record_every") < 1:
            raise ConfigError("evolution.record_every", "must be a positive integer")
    if cmd == "evolve":
        if cfg.get("evolution.init") not in ("soliton", "gaussian"):
            raise ConfigError("evolution.init", "must be 'soliton' or 'gaussian'")
        for key in ("amplitude", "width"):
            _positive(cfg, f"evolution.{key}")
    if cmd == "orbital":
        d, p = cfg.get("model.d"), cfg.get("model.p")
        if not p < 4.0 / d:
            raise ConfigError("model.p", f"orbital experiment needs p < 4/d = {4.0 / d:g}")
        eps = cfg.get("evolution.epsilon")
        if not isinstance(eps, float) or eps < 0:
            raise ConfigError("evolution.epsilon", "must be a nonnegative number")
    if cmd == "blowup":
        for key in ("amplitude", "width", "t_max", "dt0", "growth_threshold"):
            _positive(cfg, f"evolution.{key}")
        _positive(cfg, "evolution.c_d", allow_none=True)
        _positive(cfg, "evolution.boundary_tol", allow_none=True)
        if not isinstance(cfg.get("evolution.max_steps"), int) or cfg.get("evolution.max_steps") < 1:
            raise ConfigError("evolution.max_steps", "must be a positive integer")
    if cmd == "heatkernel":
        d = cfg.get("kernel.d")
        if not isinstance(d, int) or not 1 <= d <= heat_kernel.D_MAX:
            raise ConfigError("kernel.d", f"must be an integer in [1, {heat_kernel.D_MAX}]")
        _positive(cfg, "kernel.t")
        _positive(cfg, "kernel.rho_max")
        if not isinstance(cfg.get("kernel.n_rho"), int) or cfg.get("kernel.n_rho") < 2:
            raise ConfigError("kernel.n_rho", "must be an integer >= 2")
    if cmd == "rearrange":
        d = cfg.get("rearrange.d")
        if not isinstance(d, int) or d < 2:
            raise ConfigError("rearrange.d", "must be an integer >= 2")
        src = cfg.get("rearrange.input")
        if src is not None and not Path(src).is_file():
            raise ConfigError("rearrange.input", f"no such file: {src}")
        _positive(cfg, "rearrange.r_max")
        _positive(cfg, "rearrange.h")
        if not isinstance(cfg.get("rearrange.seed"), int):
            raise ConfigError("rearrange.seed", "must be an integer")
    if cmd == "verify":
        if not isinstance(cfg.get("verify.seed"), int):
            raise ConfigError("verify.seed", "must be an integer")
        if not isinstance(cfg.get("verify.cases"), int) or cfg.get("verify.cases") < 1:
            raise ConfigError("verify.cases", "must be a positive integer")


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


class RunWriter:
    """All files of one run go through here, into one directory."""

    def __init__(self, directory: Path, fmt: str):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fmt = fmt
        self.written = []

    def json(self, name: str, payload: dict) -> Path:
        path = self.dir / name
        path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        self.written.append(path)
        return path

    def table(self, stem: str, columns, rows, metadata: dict | None = None) -> Path:
        meta = {"schema_version": SCHEMA_VERSION, **(metadata or {})}
        if self.fmt == "json":
            return self.json(f"{stem}.json", {"metadata": meta, "columns": list(columns), "rows": [list(r) for r in rows]})
        path = self.dir / f"{stem}.csv"
        with path.open("w", newline="") as fh:
            for k, v in meta.items():
                fh.write(f"# {k}: {json.dumps(_clean(v), sort_keys=True)}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([x if isinstance(x, str) else repr(float(x)) for x in row])
        self.written.append(path)
        return path


def output_dir(cfg: RunConfig) -> Path:
    explicit = cfg.get("output.dir")
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(ENV_OUT, "hypsoliton-runs")) / cfg.command


def read_profile_csv(path) -> tuple:
    """(r, values) from a CSV with a header row; '#' lines are skipped."""
    rows = []
    with Path(path).open() as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise ConfigError("rearrange.input", "empty profile file")
    try:
        float(header[0])
        rows.append(header)
    except ValueError:
        pass
    rows.extend(reader)
    try:
        data = np.array([[float(x) for x in row[:2]] for row in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigError("rearrange.input", f"expected two numeric columns r, value: {exc}") from exc
    if data.shape[0] < 2 or np.any(np.diff(data[:, 0]) <= 0) or data[0, 0] < 0:
        raise ConfigError("rearrange.input", "radii must be nonnegative and strictly increasing")
    return data[:, 0], data[:, 1]


def _profile_on_grid(r, values) -> RadialField:
    """Samples on a cell-centred grid; other abscissae are linearly resampled."""
    h = float(np.min(np.diff(r)))
    r_max = float(r[-1] + 0.5 * h)
    grid = RadialGrid.with_spacing(r_max, h)
    if grid.n == r.size and np.allclose(grid.nodes, r, rtol=0, atol=1e-9 * r_max):
        vals = values
    else:
        vals = np.interp(grid.nodes, r, values)
    return RadialField(grid, np.asarray(vals, dtype=float), Space.HYPERBOLIC)


# ---------------------------------------------------------------------------
# commands


def _groundstate(cfg, out):
    params = _model(cfg)
    spec = _spec(cfg, params)
    grid = _grid(cfg, params.mu)
    sol = gradient_flow_minimize(params, spec, grid, mass_target=cfg.get("model.mass"), **_solver_kw(cfg))
    fit = decay_diagnostics(sol)
    header = sol.summary()
    header["decay_fit"] = {"rate": fit.rate, "window": list(fit.window), "expected": fit.expected}
    header["schema_version"] = SCHEMA_VERSION
    out.json("solution.json", header)
    R = sol.hyperbolic_profile().values
    out.table("solution", ("r", "u", "R"), zip(sol.r, sol.u.values, R), {"d": params.d, "p": params.p, "lambda": params.lam})
    return f"groundstate d={params.d} p={params.p:g} lambda={sol.lam_out:.10g} mass={sol.mass:.10g} residual={sol.residual:.3e} converged={sol.converged}"


def _sweep(cfg, out):
    lams = parse_range(cfg.get("sweep.lambda"))
    template = _model(cfg, float(lams[0]))
    spec = _spec(cfg, template)
    grid = _grid(cfg, template.mu)
    curve = stability.sweep(template, spec, lams, grid=grid, workers=cfg.get("sweep.workers"), **_solver_kw(cfg))
    cols = ["lambda", "Q", "E", "delta", "delta2", "vk_defect", "verdict"]
    rows = [[row[c] for c in cols] for row in curve.rows()]
    out.table("sweep", cols, rows, {"d": template.d, "p": template.p, "r_max": grid.r_max, "n": grid.n})
    interior = curve.interior()
    vk = float(np.nanmax(curve.vk_defect[interior])) if interior.size else math.nan
    failed = sum(not pt.converged for pt in curve.points)
    return f"sweep d={template.d} p={template.p:g} points={len(lams)} failed={failed} max_interior_vk_defect={vk:.3e}"


def _spectrum(cfg, out):
    params = _model(cfg)
    spec = _spec(cfg, params)
    grid = _grid(cfg, params.mu)
    sol = gradient_flow_minimize(params, spec, grid, **_solver_kw(cfg))
    rep = stability.linearize(sol, k=cfg.get("spectrum.k"), hamiltonian=cfg.get("spectrum.hamiltonian"))
    payload = rep.to_dict()
    payload["admissibility"] = stability.admissibility_report(rep, zero_tol=cfg.get("spectrum.zero_tol"))
    out.json("spectrum.json", payload)
    return (
        f"spectrum d={params.d} p={params.p:g} lambda={params.lam:g} n={grid.n} "
        f"lowest_L+={rep.l_plus_eigs[0]:.6g} zero_mode_defect={rep.zero_mode_defect:.3e}"
    )


def _evolve(cfg, out):
    params = _model(cfg)
    spec = _spec(cfg, params)
    grid = _grid(cfg, params.mu)
    ev = cfg.blocks["evolution"]
    if ev["init"] == "soliton":
        sol = gradient_flow_minimize(params, spec, grid, **_solver_kw(cfg))
        params = params.with_lambda(sol.lam_out)
        u0 = sol.u.values * (1.0 + ev["epsilon"])
    else:
        u0 = evolution.gaussian_data(grid, ev["amplitude"], ev["width"]).values
    state = evolution.evolve(u0, grid, params, spec, ev["dt"], ev["t_end"], ev["record_every"], ev["boundary_tol"])
    rows = [(h.t, h.q, h.e, h.grad_norm, h.orbital_distance) for h in state.history]
    out.table("trace", ("t", "Q", "E", "grad_norm", "orbital_distance"), rows, {"d": params.d, "p": params.p, "dt": ev["dt"]})
    q = np.array([h.q for h in state.history])
    e = np.array([h.e for h in state.history])
    return f"evolve t_end={state.t:g} mass_drift={np.max(np.abs(q - q[0])):.3e} energy_drift={np.max(np.abs(e - e[0])):.3e}"


def _orbital(cfg, out):
    params = _model(cfg)
    spec = _spec(cfg, params)
    grid = _grid(cfg, params.mu)
    ev = cfg.blocks["evolution"]
    sol = gradient_flow_minimize(params, spec, grid, **_solver_kw(cfg))
    res = evolution.orbital_experiment(sol, ev["epsilon"], ev["t_end"], ev["dt"], ev["record_every"], boundary_tol=ev["boundary_tol"])
    rows = [(h.t, h.q, h.e, h.grad_norm, h.orbital_distance) for h in res.state.history]
    out.table("trace", ("t", "Q", "E", "grad_norm", "orbital_distance"), rows, {"d": params.d, "p": params.p, "epsilon": ev["epsilon"]})
    out.json("orbital.json", {"schema_version": SCHEMA_VERSION, **res.to_dict()})
    return f"orbital epsilon={ev['epsilon']:g} delta_in={res.delta_in:.3e} sup_distance={res.sup_distance:.3e}"


def _blowup(cfg, out):
    params = _model(cfg, 0.0)
    spec = _spec(cfg, params)
    grid = _grid(cfg, params.mu)
    ev = cfg.blocks["evolution"]
    data = evolution.gaussian_data(grid, ev["amplitude"], ev["width"])
    res = evolution.blowup_probe(
        data, params, spec, ev["t_max"], ev["dt0"], ev["growth_threshold"], ev["c_d"], ev["boundary_tol"], ev["max_steps"]
    )
    out.json("blowup.json", {"schema_version": SCHEMA_VERSION, "r_max": grid.r_max, "n": grid.n, **res.to_dict()})
    return (
        f"blowup energy0={res.energy0:.6g} c_d*mass0={res.c_d * res.mass0:.6g} "
        f"growth={res.observed_growth:.4g} blowup_time={res.blowup_time} halted={res.halted}"
    )


def _heatkernel(cfg, out):
    k = cfg.blocks["kernel"]
    rho = np.linspace(0.0, k["rho_max"], k["n_rho"])
    chk = heat_kernel.monotonicity_check(k["d"], k["t"], rho)
    meta = {"d": k["d"], "t": k["t"], "decreasing": chk["decreasing"], "nonnegative": chk["nonnegative"]}
    out.table("heatkernel", ("rho", "p_d"), zip(rho, chk["values"]), meta)
    return f"heatkernel d={k['d']} t={k['t']:g} decreasing={chk['decreasing']} nonnegative={chk['nonnegative']}"


def _rearrange(cfg, out):
    a = cfg.blocks["rearrange"]
    if a["input"] is not None:
        f = _profile_on_grid(*read_profile_csv(a["input"]))
    else:
        grid = RadialGrid.with_spacing(a["r_max"], a["h"])
        f = rearrangement.random_bump_mixture(grid, np.random.default_rng(a["seed"]))
    d = a["d"]
    res = rearrangement.symmetrize(f, d)
    before, after = rearrangement.kinetic_compare(f, d)
    norms = {str(p): [rearrangement.lp_norm(f, p, d), rearrangement.lp_norm(res.f_star, p, d)] for p in (1, 2, 4)}
    out.table("rearranged", ("r", "f", "f_star"), zip(f.grid.nodes, f.values, res.f_star.values), {"d": d})
    out.json(
        "rearrange.json",
        {"schema_version": SCHEMA_VERSION, "d": d, "kinetic_before": before, "kinetic_after": after, "lp_norms": norms},
    )
    return f"rearrange d={d} kinetic_before={before:.8g} kinetic_after={after:.8g}"


def _verify(cfg, out):
    report = verification.run_suite(cfg.get("verify.seed"), cfg.get("verify.cases"))
    out.json("verify.json", report)
    failed = [c["name"] for c in report["checks"] if not c["passed"]]
    line = f"verify checks={len(report['checks'])} failed={len(failed)}"
    if failed:
        line += " [" + "; ".join(failed) + "]"
    return line, (0 if report["passed"] else 1)


HANDLERS = {
    "groundstate": _groundstate,
    "sweep": _sweep,
    "spectrum": _spectrum,
    "evolve": _evolve,
    "orbital": _orbital,
    "blowup": _blowup,
    "heatkernel": _heatkernel,
    "rearrange": _rearrange,
    "verify": _verify,
}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypsoliton", description="Ground-state solitons of NLS on hyperbolic space.")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="BLOCK.KEY=VALUE", help="override any field")
        probe = RunConfig.defaults(cmd)
        for flag, key in FLAGS.items():
            path = probe.owner(key)
            if path is not None:
                sp.add_argument(flag, dest=f"field:{path}", default=None, metavar=key.upper(), help=f"sets {path}")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config, args.command) if args.config else RunConfig.defaults(args.command)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected BLOCK.KEY=VALUE")
        path, value = item.split("=", 1)
        if "." not in path:
            raise ConfigError(path, "expected BLOCK.KEY")
        cfg.set(path, value)
    for dest, value in vars(args).items():
        if dest.startswith("field:") and value is not None:
            cfg.set(dest[len("field:"):], value)
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = RunWriter(output_dir(cfg), cfg.get("output.format"))
    out.json("manifest.json", cfg.to_dict())
    try:
        result = HANDLERS[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc} (iterations={exc.iterations}, last_residual={exc.last_residual:.3e})", file=sys.stderr)
        return 3
    except (evolution.BoundaryContamination, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    line, status = result if isinstance(result, tuple) else (result, 0)
    print(f"{line} out={out.dir}")
    return status


def main() -> None:
    sys.exit(run())
