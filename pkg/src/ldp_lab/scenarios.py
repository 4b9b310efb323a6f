"""Scenario configs: YAML loading with line tracking, name registries and the
simulate -> estimate -> fit -> rate -> compare pipeline."""
from __future__ import annotations

import datetime as _dt
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import mc
from .core import DiscreteMeasureSpace, TimeGrid
from .drivers import validate_kernel
from .errors import ConfigError, InsufficientDataError, LdpLabError, ScenarioError
from .rate import (FixedEndpoint, LevelCrossing, LevyAction, LogMGF, SchilderAction,
                   cramer_log_mgf, legendre, minimize_action, poisson_log_mgf)

CSV_HEADER = "n,hits,samples,p_hat,ci_low,ci_high,neglog_over_n"
TOP_KEYS = {"name", "seed", "driver", "equation", "event", "n_ladder", "samples", "rate",
            "comparison", "output", "batch"}


# ---------------------------------------------------------------- YAML with lines

@dataclass
class Document:
    """Parsed config plus the source line of every key path."""

    data: dict
    lines: dict
    path: str

    def line(self, *keys) -> int | None:
        while keys:
            if keys in self.lines:
                return self.lines[keys]
            keys = keys[:-1]
        return self.lines.get((), None)

    def error(self, msg: str, *keys) -> ConfigError:
        return ConfigError(msg, self.path, self.line(*keys))


def _walk(node, prefix, lines):
    if isinstance(node, yaml.MappingNode):
        for knode, vnode in node.value:
            key = knode.value
            lines[prefix + (key,)] = knode.start_mark.line + 1
            _walk(vnode, prefix + (key,), lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            lines[prefix + (i,)] = item.start_mark.line + 1
            _walk(item, prefix + (i,), lines)


def parse_config(text: str, path: str = "<string>") -> Document:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise ConfigError(f"YAML syntax: {e.problem or e.context}", path,
                          mark.line + 1 if mark else None)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level", path, 1)
    lines = {(): 1}
    _walk(node, (), lines)
    return Document(data, lines, path)


def load_config(path) -> Document:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(p))
    return parse_config(text, str(p))


def shipped_configs() -> dict:
    """Name -> path of the configs bundled with the package."""
    root = resources.files("ldp_lab") / "configs"
    return {Path(str(p)).stem: Path(str(p)) for p in root.iterdir()
            if str(p).endswith((".yaml", ".yml"))}


def resolve_config(arg: str) -> Path:
    """A file path, or the name of a shipped scenario."""
    p = Path(arg)
    if p.exists():
        return p
    shipped = shipped_configs()
    if arg in shipped:
        return shipped[arg]
    raise ConfigError(f"no such file or shipped scenario: {arg!r} "
                      f"(shipped: {', '.join(sorted(shipped))})")


# ---------------------------------------------------------------- registries

@dataclass
class Entry:
    name: str
    summary: str
    params: dict                # name -> description
    required: tuple = ()


DRIVERS = {
    "gaussian_white_noise": Entry(
        "gaussian_white_noise", "space-time white noise scaled by n^{-1/2}",
        {"h": "cell values of the index function (default: all ones)"}),
    "poisson_random_measure": Entry(
        "poisson_random_measure", "Poisson random measure xi_n / n with mean nu x Lebesgue",
        {"h": "cell values of the index function (default: all ones)",
         "centered": "subtract the compensator t * int h dnu (default false)"}),
    "markov_counting": Entry(
        "markov_counting", "Markov chain counting measure read at speed n",
        {"kernel": "row-stochastic transition matrix", "initial": "initial distribution",
         "h": "state function for the projection equation (default: state index)"},
        ("kernel", "initial")),
}

EQUATIONS = {
    "projection": Entry("projection", "the driver itself, Y_n(h, t)", {}),
    "markov_evolution": Entry(
        "markov_evolution", "X_{k+1} = X_k + (b0[s] + b1[s] X_k) / n along the chain",
        {"b0": "per-state drift offset", "b1": "per-state linear coefficient (default 0)",
         "x0": "initial value (default 0)"}, ("b0",)),
}

EVENTS = {
    "sup_abs_at_least": Entry("sup_abs_at_least", "sup_t |X(t)| >= level", {"level": "threshold"},
                              ("level",)),
    "terminal_at_least": Entry("terminal_at_least", "X(T) >= level", {"level": "threshold"},
                               ("level",)),
    "maximum_at_least": Entry("maximum_at_least", "sup_t X(t) >= level", {"level": "threshold"},
                              ("level",)),
}

RATES = {
    "schilder": Entry("schilder", "1/2 int |phi'|^2 / |h|^2 over constrained paths",
                      {"constraint": "{type: level_crossing, level} or {type: endpoint, value}",
                       "steps": "grid for the minimization (default 64)"}, ("constraint",)),
    "levy": Entry("levy", "int lambda(phi') with lambda the Legendre transform of the Poisson log-MGF",
                  {"constraint": "{type: endpoint, value} or {type: level_crossing, level}",
                   "steps": "grid for the minimization (default 8)"}, ("constraint",)),
    "cramer": Entry("cramer", "T * lambda(level / T) for i.i.d. marks (identical kernel rows)",
                    {"level": "terminal level"}, ("level",)),
}

COMPATIBLE = {
    "projection": {"gaussian_white_noise", "poisson_random_measure", "markov_counting"},
    "markov_evolution": {"markov_counting"},
}


def registry_text() -> str:
    out = []
    for title, reg in (("drivers", DRIVERS), ("equations", EQUATIONS), ("events", EVENTS),
                       ("rates", RATES)):
        out.append(f"{title}:")
        for e in reg.values():
            out.append(f"  {e.name}: {e.summary}")
            for k, v in e.params.items():
                req = " (required)" if k in e.required else ""
                out.append(f"      {k}{req}: {v}")
    return "\n".join(out)


# ---------------------------------------------------------------- scenario

@dataclass
class Scenario:
    name: str
    seed: int
    family: str
    space: DiscreteMeasureSpace
    grid: TimeGrid
    driver_params: dict
    equation: str
    equation_params: dict
    event: str
    event_params: dict
    n_ladder: list
    samples: int
    rate: str
    rate_params: dict
    tolerance: float
    output_dir: str | None
    batch: int = mc.DEFAULT_BATCH
    doc: Document | None = field(default=None, repr=False)


def _section(doc, key, required=True) -> dict:
    val = doc.data.get(key)
    if val is None:
        if required:
            raise doc.error(f"missing section '{key}'")
        return {}
    if not isinstance(val, dict):
        raise doc.error(f"'{key}' must be a mapping", key)
    return val


def _number(doc, value, *keys, positive=False, integer=False, minimum=None):
    bad = isinstance(value, bool) or not isinstance(value, (int, float))
    if integer and not bad and float(value) != int(value):
        bad = True
    if bad or not math.isfinite(float(value)):
        raise doc.error(f"'{'.'.join(map(str, keys))}' must be a{'n integer' if integer else ' number'}",
                        *keys)
    if positive and not value > 0:
        raise doc.error(f"'{'.'.join(map(str, keys))}' must be positive", *keys)
    if minimum is not None and value < minimum:
        raise doc.error(f"'{'.'.join(map(str, keys))}' must be at least {minimum}", *keys)
    return int(value) if integer else float(value)


def _vector(doc, value, *keys, length=None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise doc.error(f"'{'.'.join(map(str, keys))}' must be a list of numbers", *keys)
    if arr.ndim != 1 or (length is not None and arr.size != length) or not np.all(np.isfinite(arr)):
        want = f" of length {length}" if length is not None else ""
        raise doc.error(f"'{'.'.join(map(str, keys))}' must be a finite list{want}", *keys)
    return arr


def _params(doc, section: dict, entry: Entry, *keys) -> dict:
    params = section.get("params") or {}
    if not isinstance(params, dict):
        raise doc.error("'params' must be a mapping", *keys, "params")
    for k in params:
        if k not in entry.params:
            raise doc.error(f"unknown parameter '{k}' for {entry.name} "
                            f"(known: {', '.join(entry.params) or 'none'})", *keys, "params", k)
    for k in entry.required:
        if k not in params:
            raise doc.error(f"{entry.name} needs parameter '{k}'", *keys)
    return params


def _registered(doc, section, registry, what, *keys) -> Entry:
    name = section.get("name", section.get("family"))
    if name not in registry:
        raise doc.error(f"unknown {what} {name!r} (registered: {', '.join(registry)})",
                        *keys, "name" if "name" in section else "family")
    return registry[name]


def build_scenario(doc: Document) -> Scenario:
    """Validate a parsed config and resolve every name."""
    d = doc.data
    for k in d:
        if k not in TOP_KEYS:
            raise doc.error(f"unknown top-level key '{k}'", k)
    name = d.get("name")
    if not isinstance(name, str) or not name:
        raise doc.error("'name' must be a nonempty string", "name")
    seed = _number(doc, d.get("seed", 0), "seed", integer=True, minimum=0)

    drv = _section(doc, "driver")
    dentry = _registered(doc, drv, DRIVERS, "driver family", "driver")
    dparams = dict(_params(doc, drv, dentry, "driver"))
    space_s = drv.get("space") or {}
    if dentry.name == "markov_counting":
        if "kernel" not in dparams:
            raise doc.error("markov_counting needs parameter 'kernel'", "driver")
        try:
            kernel = validate_kernel(dparams["kernel"])
        except (LdpLabError, ValueError, TypeError) as e:
            raise doc.error(f"invalid kernel: {e}", "driver", "params", "kernel")
        dparams["kernel"] = kernel
        E = kernel.shape[0]
        init = _vector(doc, dparams["initial"], "driver", "params", "initial", length=E)
        if np.any(init < 0) or abs(init.sum() - 1) > 1e-12:
            raise doc.error("initial distribution must be a probability vector",
                            "driver", "params", "initial")
        dparams["initial"] = init
        space = DiscreteMeasureSpace(np.full(E, 1.0 / E))
        dparams["h"] = _vector(doc, dparams.get("h", np.arange(E)), "driver", "params", "h",
                               length=E)
    else:
        if "masses" not in space_s:
            raise doc.error("driver.space.masses is required", "driver", "space")
        masses = _vector(doc, space_s["masses"], "driver", "space", "masses")
        if masses.size == 0 or np.any(masses < 0):
            raise doc.error("masses must be a nonempty list of nonnegative numbers",
                            "driver", "space", "masses")
        space = DiscreteMeasureSpace(masses)
        dparams["h"] = _vector(doc, dparams.get("h", np.ones(space.size)), "driver", "params",
                               "h", length=space.size)
        dparams["centered"] = bool(dparams.get("centered", False))
    grid_s = drv.get("grid") or {}
    horizon = _number(doc, grid_s.get("horizon", 1.0), "driver", "grid", "horizon", positive=True)
    steps = _number(doc, grid_s.get("steps", 1), "driver", "grid", "steps", integer=True,
                    minimum=1)
    grid = TimeGrid(horizon, steps)

    eq = _section(doc, "equation", required=False) or {"name": "projection"}
    eentry = _registered(doc, eq, EQUATIONS, "equation", "equation")
    if dentry.name not in COMPATIBLE[eentry.name]:
        raise doc.error(f"equation {eentry.name!r} does not apply to driver {dentry.name!r}",
                        "equation", "name")
    eparams = dict(_params(doc, eq, eentry, "equation"))
    if eentry.name == "markov_evolution":
        E = space.size
        eparams["b0"] = _vector(doc, eparams["b0"], "equation", "params", "b0", length=E)
        eparams["b1"] = _vector(doc, eparams.get("b1", np.zeros(E)), "equation", "params", "b1",
                                length=E)
        eparams["x0"] = _number(doc, eparams.get("x0", 0.0), "equation", "params", "x0")

    ev = _section(doc, "event")
    ventry = _registered(doc, ev, EVENTS, "event", "event")
    vparams = dict(_params(doc, ev, ventry, "event"))
    vparams["level"] = _number(doc, vparams["level"], "event", "params", "level")

    ladder = d.get("n_ladder")
    if not isinstance(ladder, list) or len(ladder) < 3:
        raise doc.error("'n_ladder' must list at least 3 scales", "n_ladder")
    ns = [_number(doc, v, "n_ladder", i, integer=True, minimum=1) for i, v in enumerate(ladder)]
    for i in range(1, len(ns)):
        if ns[i] <= ns[i - 1]:
            raise doc.error("'n_ladder' must be strictly increasing", "n_ladder", i)
    samples = _number(doc, d.get("samples"), "samples", integer=True, minimum=1000)
    batch = _number(doc, d.get("batch", mc.DEFAULT_BATCH), "batch", integer=True, minimum=1)

    rt = _section(doc, "rate")
    rentry = _registered(doc, rt, RATES, "rate", "rate")
    rparams = dict(_params(doc, rt, rentry, "rate"))
    _check_rate(doc, rentry.name, rparams, dentry.name, eentry.name, dparams, eparams)

    cmp_s = _section(doc, "comparison", required=False)
    tol = _number(doc, cmp_s.get("tolerance", 0.15), "comparison", "tolerance", minimum=0.0)
    out_s = _section(doc, "output", required=False)
    out_dir = out_s.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise doc.error("'output.dir' must be a string", "output", "dir")

    return Scenario(name, seed, dentry.name, space, grid, dparams, eentry.name, eparams,
                    ventry.name, vparams, ns, samples, rentry.name, rparams, tol, out_dir,
                    batch, doc)


def _check_rate(doc, rate, rparams, family, equation, dparams, eparams):
    if rate in ("schilder", "levy"):
        want = {"schilder": "gaussian_white_noise", "levy": "poisson_random_measure"}[rate]
        if family != want or equation != "projection":
            raise doc.error(f"rate {rate!r} needs driver {want!r} with the projection equation",
                            "rate", "name")
        c = rparams["constraint"]
        if not isinstance(c, dict) or c.get("type") not in ("level_crossing", "endpoint"):
            raise doc.error("constraint must be {type: level_crossing|endpoint, ...}",
                            "rate", "params", "constraint")
        key = "level" if c["type"] == "level_crossing" else "value"
        if key not in c:
            raise doc.error(f"{c['type']} constraint needs '{key}'", "rate", "params", "constraint")
        _number(doc, c[key], "rate", "params", "constraint", key)
        if "steps" in rparams:
            _number(doc, rparams["steps"], "rate", "params", "steps", integer=True, minimum=1)
    elif rate == "cramer":
        if family != "markov_counting":
            raise doc.error("rate 'cramer' needs the markov_counting driver", "rate", "name")
        if not np.allclose(dparams["kernel"], dparams["kernel"][0], atol=1e-14):
            raise doc.error("rate 'cramer' needs i.i.d. marks (identical kernel rows)",
                            "rate", "name")
        if equation == "markov_evolution" and np.any(eparams["b1"] != 0):
            raise doc.error("rate 'cramer' needs b1 = 0", "rate", "name")
        _number(doc, rparams["level"], "rate", "params", "level")


def load_scenario(path) -> Scenario:
    return build_scenario(load_config(path))


# ---------------------------------------------------------------- pipeline

def simulator_for(sc: Scenario, backend=None) -> Callable:
    p = sc.driver_params
    if sc.family == "gaussian_white_noise":
        h_norm = sc.space.norm(p["h"])
        return mc.schilder_simulator(sc.grid.steps, sc.grid.horizon, h_norm, backend=backend)
    if sc.family == "poisson_random_measure":
        return mc.poisson_simulator(sc.space.masses, p["h"], sc.grid.horizon, p["centered"],
                                    backend=backend)
    if sc.equation == "markov_evolution":
        e = sc.equation_params
        b0, b1, x0 = e["b0"], e["b1"], e["x0"]
    else:
        b0, b1, x0 = p["h"], None, 0.0
    return mc.markov_simulator(p["kernel"], p["initial"], b0, b1, x0, sc.grid.horizon,
                               backend=backend)


def event_for(sc: Scenario) -> mc.Event:
    return getattr(mc, sc.event)(sc.event_params["level"])


def _constraint(c: dict):
    if c["type"] == "level_crossing":
        return LevelCrossing(float(c["level"]))
    return FixedEndpoint(float(c["value"]))


def _centered(mu: LogMGF, mean: float) -> LogMGF:
    return LogMGF(lambda x: mu(x) - mean * x[0], 1, lambda x: mu.grad(x) - mean, "centered")


def predicted_rate(sc: Scenario) -> float:
    """Analytic rate of the scenario's event, computed by the rate module."""
    rp = sc.rate_params
    T = sc.grid.horizon
    if sc.rate == "schilder":
        h2 = sc.space.inner(sc.driver_params["h"], sc.driver_params["h"])
        grid = TimeGrid(T, int(rp.get("steps", 64)))
        return minimize_action(SchilderAction([[math.sqrt(h2)]]), _constraint(rp["constraint"]),
                               grid, restarts=1).value
    if sc.rate == "levy":
        h = sc.driver_params["h"]
        mu = poisson_log_mgf([h], sc.space)
        if sc.driver_params["centered"]:
            mu = _centered(mu, float(np.sum(h * sc.space.masses)))
        grid = TimeGrid(T, int(rp.get("steps", 8)))
        return minimize_action(LevyAction(mu), _constraint(rp["constraint"]), grid,
                               restarts=1).value
    # cramer: i.i.d. marks with law equal to any kernel row
    pi = sc.driver_params["kernel"][0]
    marks = sc.equation_params["b0"] if sc.equation == "markov_evolution" else sc.driver_params["h"]
    x0 = sc.equation_params.get("x0", 0.0) if sc.equation == "markov_evolution" else 0.0
    level = float(rp["level"]) - x0
    return T * legendre(cramer_log_mgf(marks, pi), level / T)


def scale_seed(seed: int, n: int) -> int:
    """Independent 64-bit seed for one rung of the n ladder."""
    w = np.random.SeedSequence([int(seed), int(n)]).generate_state(2, np.uint32)
    return int(w[0]) | (int(w[1]) << 32)


@dataclass
class RunResult:
    scenario: str
    estimates: list
    fit: mc.DecayFit | None
    rate_predicted: float
    passed: bool
    message: str
    out_dir: Path


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def run_scenario(sc: Scenario, out_dir=None, seed: int | None = None, samples: int | None = None,
                 timestamp: bool = True, workers: int | None = None, backend=None,
                 log: Callable[[str], None] | None = None) -> RunResult:
    seed = sc.seed if seed is None else int(seed)
    samples = sc.samples if samples is None else int(samples)
    if samples < 1000:
        raise ScenarioError("samples must be at least 1000")
    out = Path(out_dir or sc.output_dir or os.path.join("ldp_out", sc.name))
    sim = simulator_for(sc, backend)
    event = event_for(sc)
    estimates = []
    for n in sc.n_ladder:
        est = mc.estimate_tail(event, sim, n, samples, scale_seed(seed, n), sc.batch, workers)
        estimates.append(est)
        if log:
            log(f"n={n}: {est.hits}/{est.samples} hits")
    rate = predicted_rate(sc)
    try:
        fit = mc.fit_decay(estimates)
        passed = abs(fit.slope - rate) <= sc.tolerance * abs(rate)
        message = (f"slope {fit.slope:.6g} vs predicted {rate:.6g} "
                   f"(tolerance {sc.tolerance:g} relative)")
    except InsufficientDataError as e:
        fit, passed, message = None, False, str(e)

    out.mkdir(parents=True, exist_ok=True)
    lines = []
    if timestamp:
        lines.append(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
    lines.append(CSV_HEADER)
    for e in estimates:
        lines.append(",".join([str(e.n), str(e.hits), str(e.samples), _fmt(e.p_hat),
                               _fmt(e.ci_low), _fmt(e.ci_high), _fmt(e.neglog_over_n)]))
    (out / "estimates.csv").write_text("\n".join(lines) + "\n")
    summary = {
        "scenario": sc.name,
        "slope": None if fit is None else fit.slope,
        "slope_ci": None if fit is None else list(fit.slope_ci),
        "rate_predicted": rate,
        "pass": bool(passed),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    dat = [f"{e.n} {_fmt(e.neglog_over_n)}" for e in estimates if e.hits > 0]
    (out / "decay.dat").write_text("\n".join(dat) + ("\n" if dat else ""))
    return RunResult(sc.name, estimates, fit, rate, passed, message, out)


__all__ = [
    "Document", "parse_config", "load_config", "shipped_configs", "resolve_config", "Scenario",
    "build_scenario", "load_scenario", "run_scenario", "predicted_rate", "simulator_for",
    "event_for", "registry_text", "scale_seed", "RunResult", "DRIVERS", "EQUATIONS", "EVENTS",
    "RATES",
]
