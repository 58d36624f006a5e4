"""Scenario configuration, the built-in experiment presets, and the run orchestrator.

Configuration files are flat ``key = value`` text.  Profiles live in
``[alpha]``, ``[rho0]`` and ``[rho_bc]`` sections with ``kind`` and
``params`` keys::

    scenario = ex2-eta
    eta = 0.2
    outdir = runs/eta02

    [alpha]
    kind = sine-power-6
    params = 1, 0.4
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import compare as cmp
from .discrete import LatticeConfig, init_discrete, run_discrete
from .errors import ConfigError, HpcflowError, SimulationError
from .export import export_field, export_lineout, write_json
from .hj import SolverGrid, build_problem, run_hj
from .model import ModelParams
from .profiles import AlphaProfile, FieldSpec

log = logging.getLogger(__name__)

SCENARIOS = ("ex1-agreement", "ex2-eta", "ex3-beta", "ex4-slowdown", "ex5-longtime", "custom")
MODELS = ("discrete", "continuum")
PROFILE_SECTIONS = ("alpha", "rho0", "rho_bc")
SCALAR_KEYS = (
    "scenario", "eta", "beta", "r_star", "i_max", "k_max", "nx", "nz", "t_final",
    "snapshot_times", "models", "flux_order", "lineout_x", "outdir",
)
_TOP = "__top__"
ETA_TOL = 1e-9

PRESET_SUMMARY = {
    "ex1-agreement": "discrete vs continuum agreement; sine-squared speed dip, sin^6 data band; needs eta",
    "ex2-eta": "effect of eta with beta = 1; step initial data, sin^6 speed dip; needs eta",
    "ex3-beta": "effect of beta with eta = 1; same data as ex2-eta; needs beta",
    "ex4-slowdown": "localized slowdown (linear notch around x = 0.5), eta = beta = 1",
    "ex5-longtime": "small cosine speed variation, settles to an x-periodic profile",
}

# stage/processor counts of the agreement study for each eta
EX1_LATTICE = {0.2: (1000, 200), 1.0: (500, 500), 5.0: (200, 1000)}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    alpha: AlphaProfile
    rho0: FieldSpec
    rho_bc: FieldSpec = field(default_factory=FieldSpec.zero)
    eta: float = 1.0
    beta: float = 1.0
    r_star: float = 1.0
    i_max: int = 100
    k_max: int = 100
    nx: int = 100
    nz: int = 100
    t_final: float = 0.5
    snapshot_times: tuple = ()
    models: tuple = ("continuum",)
    flux_order: int = 0
    lineout_x: tuple = (0.3,)
    outdir: str = "out"

    def problems(self) -> list:
        """Every invariant violation, not just the first."""
        out = []
        if self.scenario not in SCENARIOS:
            out.append(f"scenario: unknown value {self.scenario!r} (choose from {', '.join(SCENARIOS)})")
        if not self.eta > 0:
            out.append(f"eta: must be positive, got {self.eta}")
        if not 0 < self.beta <= 1:
            out.append(f"beta: must lie in (0, 1], got {self.beta}")
        if not self.r_star > 0:
            out.append(f"r_star: must be positive, got {self.r_star}")
        if self.i_max < 3:
            out.append(f"i_max: the lattice needs at least 3 processors, got {self.i_max}")
        if self.k_max < 1:
            out.append(f"k_max: must be at least 1, got {self.k_max}")
        for key in ("nx", "nz"):
            if getattr(self, key) < 7:
                out.append(f"{key}: solver grid needs at least 7 nodes, got {getattr(self, key)}")
        if not self.t_final >= 0:
            out.append(f"t_final: must be nonnegative, got {self.t_final}")
        ts = list(self.snapshot_times)
        if ts != sorted(ts):
            out.append(f"snapshot_times: must be sorted, got {ts}")
        if any(t < 0 or t > self.t_final for t in ts):
            out.append(f"snapshot_times: must lie in [0, t_final={self.t_final}], got {ts}")
        if not self.models or any(m not in MODELS for m in self.models):
            out.append(f"models: choose from {', '.join(MODELS)}, got {list(self.models)}")
        if self.flux_order not in (0, 1):
            out.append(f"flux_order: must be 0 or 1, got {self.flux_order}")
        if any(not 0 <= x < 1 for x in self.lineout_x):
            out.append(f"lineout_x: positions must lie in [0, 1), got {list(self.lineout_x)}")
        if set(self.models) == set(MODELS) and abs(self.k_max - self.eta * self.i_max) > ETA_TOL * self.k_max:
            out.append(
                f"eta: k_max/i_max = {self.k_max}/{self.i_max} does not equal eta = {self.eta}"
            )
        return out

    def validated(self) -> "ScenarioConfig":
        probs = self.problems()
        if probs:
            raise ConfigError(probs)
        return self

    def model_params(self) -> ModelParams:
        return ModelParams(r_star=self.r_star, beta=self.beta, eta=self.eta, alpha_max=self.alpha.sup())

    def to_text(self) -> str:
        """Serialize in the same format :func:`load_config` reads."""
        lines = [f"scenario = {self.scenario}"]
        for key in SCALAR_KEYS[1:]:
            val = getattr(self, key)
            if isinstance(val, tuple):
                val = ", ".join(_num(v) for v in val)
            elif isinstance(val, float):
                val = _num(val)
            lines.append(f"{key} = {val}")
        for sec in PROFILE_SECTIONS:
            prof = getattr(self, sec)
            lines += ["", f"[{sec}]", f"kind = {prof.kind}"]
            if prof.params:
                lines.append("params = " + ", ".join(_num(p) for p in prof.params))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for sec in PROFILE_SECTIONS:
            d[sec] = getattr(self, sec).to_dict()
        return d


def _num(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _ex1_lattice(eta: float):
    for key, pair in EX1_LATTICE.items():
        if math.isclose(eta, key, rel_tol=1e-12):
            return pair
    k = eta * 500
    if abs(k - round(k)) < ETA_TOL * max(1.0, k):
        return 500, int(round(k))
    return None


def _default_lattice(eta: float, i_max: int = 100):
    k = eta * i_max
    if abs(k - round(k)) < ETA_TOL * max(1.0, k) and round(k) >= 1:
        return i_max, int(round(k))
    return None


def preset(name: str, **overrides) -> ScenarioConfig:
    """Config for a built-in experiment with ``overrides`` applied.

    ``ex1-agreement`` and ``ex2-eta`` need ``eta``; ``ex3-beta`` needs ``beta``.
    Lattice sizes follow ``eta`` unless ``i_max``/``k_max`` are given.
    """
    problems = []
    unknown = set(overrides) - set(f.name for f in dataclasses.fields(ScenarioConfig))
    if unknown:
        raise ConfigError([f"{k}: unknown setting" for k in sorted(unknown)])
    step_data = FieldSpec("indicator-below", (1.5, 0.2))
    base = dict(scenario=name, rho_bc=FieldSpec.zero(), r_star=1.0, t_final=0.5,
                snapshot_times=(0.1, 0.25, 0.5), nx=100, nz=100, lineout_x=(0.3,))
    if name == "ex1-agreement":
        if "eta" not in overrides:
            problems.append("eta: ex1-agreement needs an explicit eta (the study uses 0.2, 1 or 5)")
        base.update(alpha=AlphaProfile("sine-power", (1.0, 0.4, 2.0)),
                    rho0=FieldSpec("sine-power-band", (1.5, 6.0, 1.0, 0.0, 0.5)),
                    beta=1.0, nx=1000, nz=1000, models=("continuum", "discrete"))
    elif name == "ex2-eta":
        if "eta" not in overrides:
            problems.append("eta: ex2-eta needs an explicit eta (the study sweeps 0.2, 1, 5)")
        base.update(alpha=AlphaProfile("sine-power-6", (1.0, 0.4)), rho0=step_data, beta=1.0)
    elif name == "ex3-beta":
        if "beta" not in overrides:
            problems.append("beta: ex3-beta needs an explicit beta (the study sweeps 0.1, 0.5, 1)")
        base.update(alpha=AlphaProfile("sine-power-6", (1.0, 0.4)), rho0=step_data, eta=1.0)
    elif name == "ex4-slowdown":
        base.update(alpha=AlphaProfile("piecewise-linear-notch", (1.0, 0.4)), rho0=step_data, eta=1.0, beta=1.0)
    elif name == "ex5-longtime":
        base.update(alpha=AlphaProfile("cosine", (1.0, 0.1, 2.0)), rho0=step_data, eta=1.0, beta=1.0)
    else:
        raise ConfigError([f"scenario: {name!r} is not a preset (choose from {', '.join(PRESET_SUMMARY)})"])
    if problems:
        raise ConfigError(problems)
    base.setdefault("models", ("continuum",))
    base.update(overrides)
    if "t_final" in overrides and "snapshot_times" not in overrides:
        base["snapshot_times"] = tuple(t for t in base["snapshot_times"] if t <= base["t_final"])
    if "i_max" not in overrides and "k_max" not in overrides:
        pair = _ex1_lattice(base["eta"]) if name == "ex1-agreement" else _default_lattice(base["eta"])
        if pair is None:
            raise ConfigError([f"eta: no integer lattice for eta = {base['eta']}; give i_max and k_max"])
        base["i_max"], base["k_max"] = pair
    elif "k_max" not in overrides:
        base["k_max"] = int(round(base["eta"] * base["i_max"]))
    elif "i_max" not in overrides:
        base["i_max"] = max(3, int(round(base["k_max"] / base["eta"])))
    return ScenarioConfig(**base).validated()


# --- configuration files -------------------------------------------------

def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


_CONVERTERS = {
    "scenario": str.strip,
    "eta": float,
    "beta": float,
    "r_star": float,
    "i_max": int,
    "k_max": int,
    "nx": int,
    "nz": int,
    "t_final": float,
    "snapshot_times": _floats,
    "models": lambda s: tuple(sorted(v for v in s.replace(",", " ").split())),
    "flux_order": int,
    "lineout_x": _floats,
    "outdir": str.strip,
}


def parse_settings(text: str, source: str = "<text>"):
    """Raw typed settings and profiles from config text. Returns ``(settings, profiles)``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_TOP}]\n" + text, source=source)
    except configparser.Error as exc:
        # line numbers are shifted back past the synthetic header
        if isinstance(exc, configparser.ParsingError):
            raise ConfigError([f"{source}: line {n - 1}: cannot parse {line.strip()!r}" for n, line in exc.errors]) from exc
        line = getattr(exc, "lineno", None)
        msg = str(exc).replace(f"[{_TOP}]", "top level")
        if line is not None:
            msg = f"{source}: line {line - 1}: {exc.__class__.__name__}"
        raise ConfigError([f"parse error: {msg}"]) from exc
    problems, settings, profiles = [], {}, {}
    for section in parser.sections():
        if section == _TOP:
            continue
        if section not in PROFILE_SECTIONS:
            problems.append(f"[{section}]: unknown section (allowed: {', '.join(PROFILE_SECTIONS)})")
            continue
        items = dict(parser.items(section))
        extra = set(items) - {"kind", "params"}
        if extra:
            problems.append(f"[{section}]: unknown keys {sorted(extra)}")
        if "kind" not in items:
            problems.append(f"[{section}]: missing 'kind'")
            continue
        try:
            params = _floats(items.get("params", ""))
        except ValueError:
            problems.append(f"[{section}] params: expected numbers, got {items['params']!r}")
            continue
        try:
            if section == "alpha":
                profiles[section] = AlphaProfile(items["kind"].strip(), params)
            else:
                profiles[section] = FieldSpec(items["kind"].strip(), params)
        except HpcflowError as exc:
            problems.append(f"[{section}]: {exc}")
    for key, raw in parser.items(_TOP):
        if key not in _CONVERTERS:
            problems.append(f"{key}: unknown key")
            continue
        try:
            settings[key] = _CONVERTERS[key](raw)
        except ValueError:
            problems.append(f"{key}: cannot parse {raw!r}")
    if problems:
        raise ConfigError(problems)
    return settings, profiles


def config_from_settings(settings: dict, profiles: Optional[dict] = None) -> ScenarioConfig:
    """Validated config from typed settings; presets supply defaults for anything missing."""
    merged = dict(settings)
    merged.update(profiles or {})
    scenario = merged.pop("scenario", "custom")
    if scenario == "custom":
        missing = [k for k in ("alpha", "rho0") if k not in merged]
        if missing:
            raise ConfigError([f"[{k}]: custom scenarios must define this section" for k in missing])
        try:
            cfg = ScenarioConfig(scenario="custom", **merged)
        except TypeError as exc:
            raise ConfigError([str(exc)]) from exc
        return cfg.validated()
    if scenario not in SCENARIOS:
        raise ConfigError([f"scenario: unknown value {scenario!r} (choose from {', '.join(SCENARIOS)})"])
    return preset(scenario, **merged)


def load_config(source, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Parse a config file path or inline text; ``overrides`` win over file values."""
    if isinstance(source, Path) or ("\n" not in str(source) and "=" not in str(source)):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
        name = str(path)
    else:
        text, name = str(source), "<text>"
    settings, profiles = parse_settings(text, name)
    settings.update(overrides or {})
    return config_from_settings(settings, profiles)


# --- orchestration -------------------------------------------------------

def _tag(t: float) -> str:
    return f"t{t:.6g}"


class RunRecorder:
    """Tracks written files and writes the manifest, complete or not."""

    def __init__(self, config: ScenarioConfig, outdir: Path):
        self.outdir = outdir
        self.files = []
        self.manifest = {
            "config": config.to_dict(),
            "config_text": config.to_text(),
            "complete": False,
            "files": self.files,
        }
        self.t0 = time.perf_counter()

    def add(self, path: Path):
        self.files.append(str(path.relative_to(self.outdir)))

    def finish(self, complete: bool, error: Optional[str] = None):
        self.manifest["complete"] = complete
        self.manifest["wall_clock_seconds"] = time.perf_counter() - self.t0
        if error:
            self.manifest["error"] = error
        return write_json(self.outdir / "manifest.json", self.manifest)


def run_scenario(config: ScenarioConfig, outdir=None) -> dict:
    """Run the configured models, compare them when both ran, and write every output.

    Returns the manifest. A simulation failure still writes a manifest flagged
    incomplete before the error propagates.
    """
    config.validated()
    out = Path(outdir if outdir is not None else config.outdir)
    out.mkdir(parents=True, exist_ok=True)
    rec = RunRecorder(config, out)
    (out / "config.txt").write_text(config.to_text())
    rec.add(out / "config.txt")
    times = sorted(set(config.snapshot_times) | {config.t_final})
    try:
        _run(config, out, times, rec)
    except SimulationError as exc:
        rec.manifest["diagnostics"] = exc.diagnostics
        rec.finish(False, str(exc))
        raise
    rec.finish(True)
    return rec.manifest


def _run(config: ScenarioConfig, out: Path, times, rec: RunRecorder):
    grid = SolverGrid(config.nx, config.nz)
    params = config.model_params()
    rho_snaps, r_snaps = {}, {}
    snap_times = [t for t in times if t > 0 or 0 in config.snapshot_times]

    if "continuum" in config.models:
        problem = build_problem(grid, params, config.alpha, config.rho0, config.rho_bc, flux_order=config.flux_order)
        fields, stats = run_hj(problem, config.t_final, [t for t in snap_times if t < config.t_final])
        rec.manifest["continuum"] = {
            "nx": grid.N, "nz": grid.M, "dt": stats.dt, "steps": stats.steps,
            "lambda_x": problem.params.lambda_x, "lambda_z": problem.params.lambda_z,
            "min_increment": stats.min_increment, "max_increment_excess": stats.max_increment_excess,
            "monotonicity_violations": stats.monotonicity_violations,
            "bound_violations": stats.bound_violations, "min_rho": stats.min_rho,
        }
        for f in fields:
            rho = cmp.continuum_snapshot(f, grid)
            rho_snaps[f.t] = rho
            rec.add(export_field(rho, out / "continuum" / f"rho_{_tag(f.t)}.txt"))
            rec.add(export_field(cmp.potential_snapshot(f, grid), out / "continuum" / f"P_{_tag(f.t)}.txt"))

    if "discrete" in config.models:
        lattice = LatticeConfig.from_rescaled((config.i_max,), config.k_max, config.r_star)
        state, problem_d = init_discrete(lattice, config.rho0, config.rho_bc, config.alpha, params)
        states, dstats = run_discrete(state, problem_d, config.t_final, [t for t in snap_times if t < config.t_final])
        rec.manifest["discrete"] = {
            "i_max": config.i_max, "k_max": config.k_max, "q_star": lattice.q_star,
            "dt": dstats.dt, "steps": dstats.steps, "min_q": dstats.min_q,
            "positivity_violations": dstats.positivity_violations,
            "outflow_decreases": dstats.outflow_decreases,
            "max_unwrap_defect": dstats.max_unwrap_defect,
        }
        for s in states:
            cells = cmp.lattice_snapshot(s, lattice)
            rec.add(export_field(cells, out / "discrete" / f"r_cells_{_tag(s.t)}.txt"))
            if "continuum" in config.models:
                r = cmp.resample_discrete(s, lattice, grid)
                rec.add(export_field(r, out / "discrete" / f"r_{_tag(s.t)}.txt"))
            else:
                r = cells
            r_snaps[s.t] = r

    reports = []
    if rho_snaps and r_snaps:
        for t in sorted(rho_snaps):
            rho, r = rho_snaps[t], r_snaps[t]
            diff, rep = cmp.diff_fields(rho, r, "rho-r")
            ref = float(np.mean(np.abs(r.values)))
            rep.meta["relative_l1"] = rep.l1 / ref if ref > 0 else float("inf")
            reports.append(rep.to_dict())
            rec.add(export_field(diff, out / "compare" / f"diff_{_tag(t)}.txt"))
        rec.add(write_json(out / "compare" / "reports.json", reports))
        rec.manifest["comparison"] = "written"
    else:
        rec.manifest["comparison"] = "skipped: needs both models"

    for x in config.lineout_x:
        for label, snaps in (("rho", rho_snaps), ("r", r_snaps)):
            for t, snap in sorted(snaps.items()):
                xu, z, vals = cmp.lineout(snap, x)
                rec.add(export_lineout(out / "lineouts" / f"{label}_x{x:g}_{_tag(t)}.txt", label, t, xu, z, vals))
    rec.manifest["reports"] = reports
