"""Experiment configuration, validation and per-seed execution.

A config has three tables. ``[experiment]`` holds the sweep (``horizons``,
``seeds``, ``output_dir``, ``feedback``, ``benchmark``, ``plot``);
``[algorithm]`` and ``[environment]`` are tagged by ``id`` and carry that
variant's parameters. Unset parameters take the defaults listed in
:data:`ALGORITHMS` and :data:`ENVIRONMENTS`.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import build_report, fog_comparator, slope_estimate
from .core import RngStream
from .environments import (default_fog_network, default_queue_network, fog_arm_grid, fog_arm_instance,
                           make_fog_instance, random_mdp, stationary_arm_instance)
from .environments.arms import DEFAULT_FBAR, DEFAULT_GBAR
from .environments.slots import FeedbackMode
from .exp3sp import Exp3Config, best_fixed_distribution, run_exp3sp
from .rl import ExploreSchedule, greedy_policy, run_q_learning, value_iteration
from .saddle_point import SaddleConfig, run_saddle
from .stochastic_dual import LaSagaConfig, load_samples, run_la_saga, run_queue_price, stationary_optimum
from .trace import RunTrace

ALGORITHMS = {
    "mosp": {"feedback": "full-info", "envs": ("fog",),
             "params": {"c": 1.0, "adaptive": False, "eps0": 1e-8}},
    "bansp-1": {"feedback": "one-point", "envs": ("fog",),
                "params": {"c": 1.0, "c_delta": 1.0}},
    "bansp-M": {"feedback": "multi-point", "envs": ("fog",),
                "params": {"c": 1.0, "c_delta": 1.0, "M": 4}},
    "exp3sp": {"feedback": "arm-value", "envs": ("arms", "fog-arms"),
               "params": {"c": 1.0, "delta_reg": 1.0}},
    "la-saga": {"feedback": "full-info", "envs": ("queue",),
                "params": {"mu": 0.01, "c_b": 1.0, "K": 6, "eps": 1e-2, "n_offline": 300,
                           "offline_file": ""}},
    "queue-price": {"feedback": "full-info", "envs": ("queue",), "params": {"mu": 0.01}},
    "q-learning": {"feedback": "arm-value", "envs": ("mdp",),
                   "params": {"eps0": 1.0, "tau": 1e4, "power": 1.0}},
}

ENVIRONMENTS = {
    "fog": {"feedback": ("full-info", "one-point", "multi-point"),
            "params": {"nodes": 3, "demand": "markov-ar1", "rho": 0.99, "jitter": 0.2,
                       "period": 500, "slope": 1e-3}},
    "arms": {"feedback": ("arm-value",),
             "params": {"fbar": list(DEFAULT_FBAR), "gbar": list(DEFAULT_GBAR), "noise": 0.1,
                        "rate": 0.8, "availability": "iid"}},
    "fog-arms": {"feedback": ("arm-value",),
                 "params": {"nodes": 2, "resolution": 2, "threshold": 3.0, "demand": "iid-uniform",
                            "rho": 0.0, "rate": 1.0, "availability": "iid"}},
    "queue": {"feedback": ("full-info",), "params": {"rate_scale": 1.0}},
    "mdp": {"feedback": ("arm-value",), "params": {"n_states": 5, "n_actions": 3, "discount": 0.9}},
}

EXPERIMENT_DEFAULTS = {"output_dir": "runs", "benchmark": True, "plot": False}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<file>", f"not valid TOML ({exc})") from None


def _check_type(field: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(field, f"expected {type(default).__name__}, got {value!r}")
    return value


def _block(raw: dict, name: str, registry: dict) -> dict:
    blk = raw.get(name)
    if not isinstance(blk, dict):
        raise ConfigError(name, "missing table")
    tag = blk.get("id")
    if tag not in registry:
        raise ConfigError(f"{name}.id", f"unknown id {tag!r}; expected one of {sorted(registry)}")
    params = dict(registry[tag]["params"])
    for key, value in blk.items():
        if key == "id":
            continue
        if key not in params:
            raise ConfigError(f"{name}.{key}", f"unknown parameter for {tag}")
        params[key] = _check_type(f"{name}.{key}", value, registry[tag]["params"][key])
    return {"id": tag, **params}


def normalize_config(raw: dict) -> dict:
    """Validate a parsed config and fill in defaults."""
    raw = copy.deepcopy(raw)
    for key in raw:
        if key not in ("experiment", "algorithm", "environment"):
            raise ConfigError(key, "unknown table")
    exp = raw.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "missing table")
    out = dict(EXPERIMENT_DEFAULTS)
    for key, value in exp.items():
        if key not in ("horizons", "seeds", "output_dir", "feedback", "benchmark", "plot", "name"):
            raise ConfigError(f"experiment.{key}", "unknown field")
        out[key] = value
    hs = out.get("horizons")
    if not isinstance(hs, list) or not hs or not all(isinstance(h, int) and not isinstance(h, bool)
                                                      and h >= 1 for h in hs):
        raise ConfigError("experiment.horizons", "need a nonempty list of positive integers")
    if len(set(hs)) != len(hs):
        raise ConfigError("experiment.horizons", "duplicate horizons")
    seeds = out.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool)
                                                           and s >= 0 for s in seeds):
        raise ConfigError("experiment.seeds", "need a nonempty list of nonnegative integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("experiment.seeds", "duplicate seeds")
    for key in ("benchmark", "plot"):
        if not isinstance(out[key], bool):
            raise ConfigError(f"experiment.{key}", "expected a boolean")
    if not isinstance(out["output_dir"], str) or not out["output_dir"]:
        raise ConfigError("experiment.output_dir", "expected a nonempty path")
    out["horizons"] = sorted(hs)
    out["seeds"] = sorted(seeds)
    algo = _block(raw, "algorithm", ALGORITHMS)
    env = _block(raw, "environment", ENVIRONMENTS)
    need = ALGORITHMS[algo["id"]]["feedback"]
    fb = out.get("feedback", need)
    try:
        fb = FeedbackMode.parse(fb).value
    except ValueError as exc:
        raise ConfigError("experiment.feedback", str(exc)) from None
    out["feedback"] = fb
    if fb != need:
        raise ConfigError("experiment.feedback", f"{algo['id']} requires {need} feedback, config says {fb}")
    if fb not in ENVIRONMENTS[env["id"]]["feedback"]:
        raise ConfigError("experiment.feedback",
                          f"environment {env['id']} provides {list(ENVIRONMENTS[env['id']]['feedback'])}, "
                          f"not {fb}")
    if env["id"] not in ALGORITHMS[algo["id"]]["envs"]:
        raise ConfigError("environment.id", f"{algo['id']} does not run on {env['id']}")
    if algo["id"] == "bansp-M" and (algo["M"] < 2 or algo["M"] % 2):
        raise ConfigError("algorithm.M", "must be an even integer >= 2")
    return {"experiment": out, "algorithm": algo, "environment": env}


def config_hash(cfg: dict) -> str:
    """Stable digest: key order in the source file does not matter.

    The output directory is excluded so relocating a sweep keeps its identity.
    """
    exp = {k: v for k, v in cfg["experiment"].items() if k != "output_dir"}
    blob = json.dumps({**cfg, "experiment": exp}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def run_name(cfg: dict, horizon: int, seed: int) -> str:
    return f"{cfg['algorithm']['id']}_{cfg['environment']['id']}_T{horizon}_s{seed}"


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class RunResult:
    horizon: int
    seed: int
    trace: RunTrace
    metrics: dict


# ---------------------------------------------------------------------------
# per-environment drivers


def _run_fog(cfg, seed):
    algo, env = cfg["algorithm"], cfg["environment"]
    hs = cfg["experiment"]["horizons"]
    net = default_fog_network(env["nodes"], env["jitter"])
    mode = FeedbackMode.parse(cfg["experiment"]["feedback"])
    budget = algo.get("M") if algo["id"] == "bansp-M" else None
    inst = make_fog_instance(net, max(hs), seed, env["demand"], env["rho"], period=env["period"],
                             slope=env["slope"], mode=mode, budget=budget)
    comp = fog_comparator(inst) if cfg["experiment"]["benchmark"] else None
    params = {k: v for k, v in algo.items() if k != "id"}
    for T in hs:
        sc = SaddleConfig.default(algo["id"], T, net.caps, **params)
        tr = run_saddle(inst.prefix(T), algo["id"], sc, T, seed)
        rep = build_report(tr, None if comp is None else comp.prefix(T))
        if comp is not None:
            tr.extras["regret"] = rep.regret_curve
        tr.extras["fit"] = rep.fit_curve
        yield T, tr, rep.as_dict()


def _arm_instance(env, T, seed):
    if env["id"] == "arms":
        return stationary_arm_instance(T, seed, env["fbar"], env["gbar"], env["noise"], env["rate"],
                                       env["availability"])
    net = default_fog_network(env["nodes"])
    fog = make_fog_instance(net, T, seed, env["demand"], env["rho"])
    return fog_arm_instance(fog, fog_arm_grid(net, env["resolution"]), env["threshold"], env["rate"],
                            seed, env["availability"])


def _run_arms(cfg, seed):
    algo, env = cfg["algorithm"], cfg["environment"]
    hs = cfg["experiment"]["horizons"]
    inst = _arm_instance(env, max(hs), seed)
    for T in hs:
        sub = inst.prefix(T)
        tr = run_exp3sp(sub, Exp3Config.default(T, algo["c"], algo["delta_reg"]), T, seed, env["id"])
        fit = np.linalg.norm(np.maximum(np.cumsum(tr.constraint, 0), 0), axis=1)
        m = {"horizon": T, "fit": float(fit[-1]), "violation_rate": float(fit[-1] / T),
             "g_max": sub.g_max}
        if cfg["experiment"]["benchmark"]:
            p, best = best_fixed_distribution(sub.F, sub.G)
            curve = np.cumsum(tr.loss) - np.cumsum(sub.F @ p)
            tr.extras["regret"] = curve
            m.update(regret=float(curve[-1]), comparator=[float(v) for v in p])
        tr.extras["fit"] = fit
        yield T, tr, m


def _run_queue(cfg, seed):
    algo, env = cfg["algorithm"], cfg["environment"]
    hs = cfg["experiment"]["horizons"]
    net = default_queue_network(seed, env["rate_scale"])
    offline = load_samples(algo["offline_file"]) if algo.get("offline_file") else None
    _, _, f_star = stationary_optimum(net)
    for T in hs:
        if algo["id"] == "la-saga":
            lc = LaSagaConfig(mu=algo["mu"], c_b=algo["c_b"], K=algo["K"], eps=algo["eps"],
                              n_offline=algo["n_offline"])
            tr = run_la_saga(net, lc, T, seed, offline)
        else:
            tr = run_queue_price(net, algo["mu"], T, seed)
        tail = tr.queue[3 * T // 4:]
        m = {"horizon": T, "avg_queue": float(np.linalg.norm(tail, axis=1).mean()),
             "avg_objective": float(tr.loss.mean()), "stationary_optimum": f_star,
             "fit": float(np.linalg.norm(np.maximum(tr.constraint.sum(0), 0)))}
        yield T, tr, m


def _run_mdp(cfg, seed):
    algo, env = cfg["algorithm"], cfg["environment"]
    mdp = random_mdp(env["n_states"], env["n_actions"], env["discount"], RngStream(seed, 99))
    sched = ExploreSchedule(algo["eps0"], algo["tau"], algo["power"])
    q_star = value_iteration(mdp, 1e-10).q if cfg["experiment"]["benchmark"] else None
    for T in cfg["experiment"]["horizons"]:
        table, tr = run_q_learning(mdp, T, sched, seed)
        m = {"horizon": T, "avg_cost": float(tr.loss.mean())}
        if q_star is not None:
            m["max_q_error"] = float(np.abs(np.where(mdp.available, table.q - q_star, 0)).max())
            m["policy_match"] = float(np.mean(greedy_policy(table.q, mdp.available)
                                              == greedy_policy(q_star, mdp.available)))
        yield T, tr, m


DRIVERS = {"fog": _run_fog, "arms": _run_arms, "fog-arms": _run_arms, "queue": _run_queue, "mdp": _run_mdp}


def run_seed(cfg: dict, seed: int) -> list[RunResult]:
    """All horizons for one seed; traces carry the config hash and code version."""
    h = config_hash(cfg)
    out = []
    for T, tr, m in DRIVERS[cfg["environment"]["id"]](cfg, seed):
        tr.meta.update({"config_hash": h, "code_version": __version__})
        m = _clean({"seed": seed, **m})
        out.append(RunResult(T, seed, tr, m))
    return out


SLOPE_METRICS = ("fit", "regret")


def summarize(cfg: dict, metrics: list[dict]) -> dict:
    """Sweep summary ordered by (horizon, seed), with log-log slopes of seed means."""
    metrics = sorted(metrics, key=lambda m: (m["horizon"], m["seed"]))
    hs = cfg["experiment"]["horizons"]
    per_h = []
    for T in hs:
        rows = [m for m in metrics if m["horizon"] == T]
        agg = {"horizon": T, "n_seeds": len(rows)}
        for key in sorted(rows[0]) if rows else []:
            vals = [r[key] for r in rows]
            if key not in ("horizon", "seed") and all(isinstance(v, (int, float)) and v is not None
                                                     and not isinstance(v, bool) for v in vals):
                agg[f"mean_{key}"] = float(np.mean(vals))
        per_h.append(agg)
    slopes = {}
    if len(hs) >= 4:
        for key in SLOPE_METRICS:
            if all(f"mean_{key}" in a for a in per_h):
                fit = slope_estimate(hs, [a[f"mean_{key}"] for a in per_h])
                slopes[key] = {**fit.as_dict(), "n_horizons": len(hs)}
    return _clean({
        "config_hash": config_hash(cfg),
        "code_version": __version__,
        "algorithm": cfg["algorithm"]["id"],
        "environment": cfg["environment"]["id"],
        "horizons": per_h,
        "slopes": slopes,
        "runs": metrics,
    })
