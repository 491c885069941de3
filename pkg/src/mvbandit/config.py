"""TOML configuration files for scenarios, bound checks and minimax runs.

Scenario file (either one scenario at the top level or a list)::

    seed = 7
    [[scenario]]
    name = "fig2"
    rho = 1.0
    a = 0.25                       # optional, default 0.25
    horizons = [100, 1000]
    replications = 1000
    trace = false                  # optional: emit <name>_trace.csv
    arms = [{kind = "gaussian", mean = 0.0, variance = 0.25},
            {kind = "bernoulli", p = 0.5}]
    policy = [{kind = "mv_ucb"},   # b optional
              {kind = "mv_dsee", dsee_mode = "model_independent", w = 1.0},
              {kind = "single_arm", arm = 1},
              {kind = "counterexample", threshold = 0.5},
              {kind = "rn_ucb", c = 1.4}]

Bound-check file::

    [tail]
    replications = 100000
    s = [10, 100, 1000]
    delta = [0.1, 0.3, 1.0]
    [[tail.case]]
    rho = 0.0
    a = 0.25
    arm = {kind = "bernoulli", p = 0.5}

    [stopping]                     # optional
    rho = 1.0
    a = 0.25
    arms = [...]
    policy = {kind = "mv_ucb"}
    T = 10000
    replications = 1000

Minimax file: top-level ``horizons``, ``rho``, ``d6``, ``replications`` and an
optional ``policy`` table.
"""

from __future__ import annotations

from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import Bernoulli, Gaussian, make_instance
from .experiments import Scenario
from .policies import CounterexampleThreshold, MvDsee, MvUcb, RiskNeutralUcb, SingleArm


class ConfigError(ValueError):
    """Malformed or incomplete configuration; the message names the key."""


def load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _get(table: dict, key: str, where: str, kind=None, default=...):
    if key not in table:
        if default is ...:
            raise ConfigError(f"missing key {key!r} in {where}")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind in (int, float):
        raise ConfigError(f"key {key!r} in {where} must be {kind.__name__}, got {value!r}")
    return value


def parse_arm(table: dict, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"arm entry in {where} must be a table")
    kind = _get(table, "kind", where, str)
    if kind == "gaussian":
        return Gaussian(_get(table, "mean", where, float), _get(table, "variance", where, float))
    if kind == "bernoulli":
        return Bernoulli(_get(table, "p", where, float))
    raise ConfigError(f"unknown arm kind {kind!r} in {where} (key 'kind')")


def parse_instance(table: dict, where: str):
    arms = _get(table, "arms", where, list)
    parsed = [parse_arm(a, f"{where}.arms[{i}]") for i, a in enumerate(arms)]
    rho = _get(table, "rho", where, float)
    a = _get(table, "a", where, float, 0.25)
    return make_instance(parsed, rho, a)


def parse_policy(table: dict, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"policy entry in {where} must be a table")
    kind = _get(table, "kind", where, str)
    if kind == "mv_ucb":
        return MvUcb(_get(table, "b", where, float, None))
    if kind == "mv_dsee":
        mode = _get(table, "dsee_mode", where, str, "model_specific")
        if mode not in ("model_specific", "model_independent"):
            raise ConfigError(f"key 'dsee_mode' in {where} must be model_specific or model_independent")
        return MvDsee(mode, _get(table, "w", where, float, 1.0))
    if kind == "single_arm":
        return SingleArm(_get(table, "arm", where, int))
    if kind == "counterexample":
        return CounterexampleThreshold(_get(table, "threshold", where, float, 0.5))
    if kind == "rn_ucb":
        return RiskNeutralUcb(_get(table, "c", where, float, 2.0**0.5))
    raise ConfigError(f"unknown policy kind {kind!r} in {where} (key 'policy.kind')")


def _policies(table: dict, where: str) -> list:
    raw = _get(table, "policy", where)
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"key 'policy' in {where} must be a table or a non-empty list of tables")
    return [parse_policy(p, f"{where}.policy[{i}]") for i, p in enumerate(raw)]


def parse_scenario(table: dict, where: str, seed: int, default_name: str) -> Scenario:
    name = _get(table, "name", where, str, default_name)
    instance = parse_instance(table, where)
    policies = _policies(table, where)
    horizons = _get(table, "horizons", where, list)
    if not horizons or not all(isinstance(T, int) and not isinstance(T, bool) and T >= 1 for T in horizons):
        raise ConfigError(f"key 'horizons' in {where} must be a non-empty list of positive integers")
    reps = _get(table, "replications", where, int)
    trace = _get(table, "trace", where, bool, False)
    try:
        return Scenario(name, instance, policies, list(horizons), reps, seed, trace)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_scenarios(doc: dict, seed: int, default_name: str = "scenario") -> list:
    if "scenario" in doc:
        tables = doc["scenario"]
        if not isinstance(tables, list) or not tables:
            raise ConfigError("key 'scenario' must be a non-empty array of tables")
        out = [parse_scenario(t, f"scenario[{i}]", seed, f"{default_name}{i}")
               for i, t in enumerate(tables)]
    else:
        out = [parse_scenario(doc, "top level", seed, default_name)]
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique (key 'name')")
    return out


def scenario_to_dict(sc: Scenario) -> dict:
    def arm(d):
        if isinstance(d, Gaussian):
            return {"kind": "gaussian", "mean": d.mean, "variance": d.variance}
        return {"kind": "bernoulli", "p": d.p}

    def pol(p):
        if isinstance(p, MvUcb):
            return {"kind": "mv_ucb"} if p.b is None else {"kind": "mv_ucb", "b": p.b}
        if isinstance(p, MvDsee):
            return {"kind": "mv_dsee", "dsee_mode": p.mode, "w": p.w}
        if isinstance(p, SingleArm):
            return {"kind": "single_arm", "arm": p.arm}
        if isinstance(p, CounterexampleThreshold):
            return {"kind": "counterexample", "threshold": p.threshold}
        return {"kind": "rn_ucb", "c": p.c}

    return {"name": sc.name, "rho": sc.instance.rho, "a": sc.instance.a,
            "horizons": list(sc.horizons), "replications": sc.replications, "trace": sc.trace,
            "arms": [arm(d) for d in sc.instance.arms], "policy": [pol(p) for p in sc.policies]}


def parse_tail(doc: dict) -> dict:
    if "tail" not in doc:
        return None
    t = doc["tail"]
    where = "tail"
    s_vals = _get(t, "s", where, list)
    d_vals = _get(t, "delta", where, list)
    grid = [(int(s), float(d)) for s in s_vals for d in d_vals]
    if not grid:
        raise ConfigError("empty grid: keys 'tail.s' and 'tail.delta' must be non-empty")
    cases = _get(t, "case", where, list)
    if not cases:
        raise ConfigError("key 'tail.case' must list at least one case")
    parsed = []
    for i, c in enumerate(cases):
        w = f"tail.case[{i}]"
        parsed.append({"arm": parse_arm(_get(c, "arm", w, dict), w),
                       "rho": _get(c, "rho", w, float), "a": _get(c, "a", w, float, 0.25)})
    return {"grid": grid, "cases": parsed, "replications": _get(t, "replications", where, int)}


def parse_stopping(doc: dict) -> dict:
    if "stopping" not in doc:
        return None
    t = doc["stopping"]
    where = "stopping"
    policy = _get(t, "policy", where, dict)
    return {"instance": parse_instance(t, where), "policy": parse_policy(policy, f"{where}.policy"),
            "T": _get(t, "T", where, int), "replications": _get(t, "replications", where, int)}


def parse_minimax(doc: dict) -> dict:
    where = "top level"
    out = {"horizons": _get(doc, "horizons", where, list, [1000, 3000, 10000, 30000]),
           "rho": _get(doc, "rho", where, float, 0.0),
           "d6": _get(doc, "d6", where, float, 0.3),
           "replications": _get(doc, "replications", where, int, 1000),
           "policy": parse_policy(doc["policy"], "policy") if "policy" in doc else None}
    if not out["horizons"]:
        raise ConfigError("key 'horizons' must be non-empty")
    return out


def default_name(path) -> str:
    return Path(path).stem
