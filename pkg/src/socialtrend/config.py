"""Experiment configuration files.

Configs are TOML documents (``.cfg`` by convention)::

    name = "fig3"

    [experiment]
    protocol = "trending"      # "full", "fixed" or "trending"
    truth = 0                  # 0-based hypothesis index
    horizon = 2000
    seed = 2023
    runs = 1
    stride = 10                # optional; default records every step to 100, then every 10th
    trend = [0.0, 0.25, 0.25, 0.25, 0.25]   # trending only
    # tau = 0                  # fixed only
    # initial_beliefs = [...]  # H entries, or K rows of H entries; default uniform

    [network]
    adjacency = [[1, 2], [0, 2], [0, 1]]    # adjacency[k]: agents k listens to

    [hypotheses]
    count = 5

    [[agent]]                  # one table per agent, or per group with `repeat`
    kind = "gaussian"
    means = [0.3, 0.3, 0.9, 1.2, 1.5]
    repeat = 2

    [[agent]]
    kind = "finite"
    rows = [[0.5, 0.5], [0.25, 0.75]]

Unknown keys are errors. Validation collects every problem before raising.
"""

from __future__ import annotations

import copy
import sys
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import FixedPartial, FullSharing, TrendingBootstrap
from .engine import ExperimentConfig
from .models import (PMF_TOL, FiniteLikelihood, GaussianLikelihood, LikelihoodModel,
                     ModelError, TrendDistribution)
from .network import NetworkError, Topology, build_metropolis

TOP_KEYS = {"name", "experiment", "network", "hypotheses", "agent"}
EXPERIMENT_KEYS = {"protocol", "truth", "horizon", "seed", "runs", "stride", "trend", "tau",
                   "initial_beliefs"}
NETWORK_KEYS = {"adjacency"}
HYPOTHESES_KEYS = {"count"}
AGENT_KEYS = {"kind", "means", "rows", "repeat"}
PROTOCOLS = ("full", "fixed", "trending")


class ConfigError(ValueError):
    def __init__(self, errors: list[str], source: str = "config"):
        self.errors = list(errors)
        self.source = source
        super().__init__(f"{source}: " + "; ".join(self.errors))


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``"fig3"``."""
    fname = name if name.endswith(".cfg") else f"{name}.cfg"
    return Path(str(resources.files("socialtrend") / "configs" / fname))


def bundled_configs() -> list[str]:
    return sorted(p.name[:-4] for p in (resources.files("socialtrend") / "configs").iterdir()
                  if p.name.endswith(".cfg"))


def load_raw(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {str(path)!r} does not exist"], str(path))
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"malformed config: {exc}"], str(path)) from None


def parse_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read, apply ``experiment.*`` overrides and validate a config file."""
    raw = load_raw(path)
    if overrides:
        raw = apply_overrides(raw, {f"experiment.{k}": v for k, v in overrides.items()
                                    if v is not None})
    return build_config(raw, source=str(path))


def apply_overrides(raw: dict, dotted: dict) -> dict:
    """Copy of ``raw`` with ``{"section.key": value}`` assignments applied."""
    out = copy.deepcopy(raw)
    for key, value in dotted.items():
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError([f"cannot override {key!r}: {p!r} is not a section"])
        node[parts[-1]] = value
    return out


def _int(value, where, errors, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(f"{where} must be an integer, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        errors.append(f"{where} must be >= {minimum}, got {value}")
        return None
    return value


def _unknown(section: dict, allowed: set, where: str, errors: list) -> None:
    for key in sorted(set(section) - allowed):
        errors.append(f"unknown key {where}{key!r}")


def build_config(raw: dict, source: str = "config") -> ExperimentConfig:
    errors: list[str] = []
    _unknown(raw, TOP_KEYS, "", errors)
    exp = raw.get("experiment")
    net = raw.get("network")
    hyp = raw.get("hypotheses")
    agents_raw = raw.get("agent")
    for name, sec in (("experiment", exp), ("network", net), ("hypotheses", hyp)):
        if not isinstance(sec, dict):
            errors.append(f"missing section [{name}]")
    if not isinstance(agents_raw, list) or not agents_raw:
        errors.append("missing [[agent]] tables")
        agents_raw = []
    exp = exp if isinstance(exp, dict) else {}
    net = net if isinstance(net, dict) else {}
    hyp = hyp if isinstance(hyp, dict) else {}
    _unknown(exp, EXPERIMENT_KEYS, "experiment.", errors)
    _unknown(net, NETWORK_KEYS, "network.", errors)
    _unknown(hyp, HYPOTHESES_KEYS, "hypotheses.", errors)

    H = _int(hyp.get("count"), "hypotheses.count", errors, minimum=2) if "count" in hyp else None
    if H is None and "count" not in hyp:
        errors.append("missing hypotheses.count")

    # likelihoods
    likelihoods = []
    for i, entry in enumerate(agents_raw):
        where = f"agent[{i}]"
        if not isinstance(entry, dict):
            errors.append(f"{where} must be a table")
            continue
        _unknown(entry, AGENT_KEYS, f"{where}.", errors)
        repeat = _int(entry.get("repeat", 1), f"{where}.repeat", errors, minimum=1) or 1
        kind = entry.get("kind")
        try:
            if kind == "gaussian":
                if "means" not in entry:
                    errors.append(f"{where}: gaussian likelihood needs 'means'")
                    continue
                lik = GaussianLikelihood(entry["means"])
            elif kind == "finite":
                if "rows" not in entry:
                    errors.append(f"{where}: finite likelihood needs 'rows'")
                    continue
                lik = FiniteLikelihood(entry["rows"])
            else:
                errors.append(f"{where}.kind must be 'gaussian' or 'finite', got {kind!r}")
                continue
        except (ModelError, ValueError, TypeError) as exc:
            errors.append(f"{where}: {exc}")
            continue
        if H is not None and lik.num_hypotheses != H:
            errors.append(f"{where} has {lik.num_hypotheses} hypotheses, expected {H}")
            continue
        likelihoods.extend([lik] * repeat)
    K = len(likelihoods) if likelihoods else None

    # network
    topology = None
    if "adjacency" not in net:
        errors.append("missing network.adjacency")
    else:
        adj = net["adjacency"]
        if not isinstance(adj, list) or not all(isinstance(r, list) for r in adj):
            errors.append("network.adjacency must be a list of neighbor lists")
        else:
            if K is not None and len(adj) != K:
                errors.append(f"network.adjacency lists {len(adj)} agents, [[agent]] tables give {K}")
            try:
                topology = Topology.from_adjacency(adj)
            except (NetworkError, ValueError, TypeError) as exc:
                errors.append(f"network.adjacency: {exc}")
    matrix = None
    if topology is not None:
        try:
            matrix = build_metropolis(topology)
        except NetworkError as exc:
            errors.append(f"network: {exc}")

    # experiment
    truth = None
    if "truth" not in exp:
        errors.append("missing experiment.truth")
    else:
        truth = _int(exp["truth"], "experiment.truth", errors, minimum=0)
        if truth is not None and H is not None and truth >= H:
            errors.append(f"experiment.truth {truth} out of range 0..{H - 1}")
            truth = None
    horizon = _int(exp.get("horizon", 2000), "experiment.horizon", errors, minimum=0)
    seed = _int(exp.get("seed", 0), "experiment.seed", errors, minimum=0)
    runs = _int(exp.get("runs", 1), "experiment.runs", errors, minimum=1)
    stride = _int(exp["stride"], "experiment.stride", errors, minimum=1) if "stride" in exp else None

    protocol = None
    kind = exp.get("protocol")
    if kind not in PROTOCOLS:
        errors.append(f"experiment.protocol must be one of {PROTOCOLS}, got {kind!r}")
    if kind != "trending" and "trend" in exp:
        errors.append("experiment.trend is only valid for the trending protocol")
    if kind != "fixed" and "tau" in exp:
        errors.append("experiment.tau is only valid for the fixed protocol")
    if kind == "full":
        protocol = FullSharing()
    elif kind == "fixed":
        if "tau" not in exp:
            errors.append("missing experiment.tau for the fixed protocol")
        else:
            tau = _int(exp["tau"], "experiment.tau", errors, minimum=0)
            if tau is not None and H is not None and tau >= H:
                errors.append(f"experiment.tau {tau} out of range 0..{H - 1}")
            elif tau is not None:
                protocol = FixedPartial(tau)
    elif kind == "trending":
        if "trend" not in exp:
            errors.append("missing experiment.trend for the trending protocol")
        else:
            pi = np.asarray(exp["trend"], dtype=float)
            if pi.ndim != 1 or (H is not None and pi.size != H):
                errors.append(f"experiment.trend has {pi.size} entries, expected {H}")
            elif np.any(pi < 0):
                errors.append("experiment.trend has negative entries")
            elif abs(pi.sum() - 1.0) > PMF_TOL:
                errors.append(f"experiment.trend sums to {pi.sum():.12g}, not 1")
            else:
                protocol = TrendingBootstrap(TrendDistribution(pi))

    initial = None
    if "initial_beliefs" in exp:
        init = np.asarray(exp["initial_beliefs"], dtype=float)
        shape_ok = (init.ndim == 1 and (H is None or init.size == H)) or \
                   (init.ndim == 2 and (K is None or init.shape[0] == K) and (H is None or init.shape[1] == H))
        if not shape_ok:
            errors.append(f"experiment.initial_beliefs has shape {init.shape}, expected ({H},) or ({K}, {H})")
        elif np.any(init <= 0):
            errors.append("experiment.initial_beliefs must be strictly positive")
        elif np.any(np.abs(init.sum(axis=-1) - 1.0) > 1e-9):
            errors.append("experiment.initial_beliefs rows must sum to 1")
        else:
            initial = init

    model = None
    if likelihoods and not errors:
        model = LikelihoodModel(likelihoods)
        try:
            model.validate(truth)
        except ModelError as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError(errors, source)
    return ExperimentConfig(topology, matrix, protocol, model, truth, horizon, seed, runs,
                            stride, initial, str(raw.get("name", Path(source).stem)))


def dump_config(config: ExperimentConfig) -> str:
    """TOML text that parses back to an equivalent config."""
    lines = [f'name = "{config.name}"', "", "[experiment]"]
    p = config.protocol
    lines.append(f'protocol = "{p.name}"')
    lines.append(f"truth = {config.truth}")
    lines.append(f"horizon = {config.horizon}")
    lines.append(f"seed = {config.seed}")
    lines.append(f"runs = {config.num_runs}")
    if config.stride is not None:
        lines.append(f"stride = {config.stride}")
    if isinstance(p, TrendingBootstrap):
        lines.append(f"trend = {[float(x) for x in p.pi.probs]}")
    if isinstance(p, FixedPartial):
        lines.append(f"tau = {p.tau}")
    if config.initial_beliefs is not None:
        lines.append(f"initial_beliefs = {np.asarray(config.initial_beliefs).tolist()}")
    lines += ["", "[network]", f"adjacency = {config.topology.adjacency_list()}",
              "", "[hypotheses]", f"count = {config.num_hypotheses}"]
    for agent in config.model.agents:
        lines += ["", "[[agent]]"]
        for key, value in agent.to_config().items():
            lines.append(f'{key} = "{value}"' if isinstance(value, str) else f"{key} = {value}")
    return "\n".join(lines) + "\n"
