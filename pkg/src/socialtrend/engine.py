"""Seeded experiment execution, traces and network-level metrics."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (FixedPartial, FullSharing, NetworkState, Protocol, StepError,
                   TrendingBootstrap, advance)
from .models import LikelihoodModel, check_global_identifiability
from .network import CombinationMatrix, Topology
from .streams import Streams

CHUNK = 512
FLOAT_FMT = "%.17g"
TRACE_HEADER = ("time", "agent", "hypothesis", "log_belief", "tau", "Q")


class EngineError(RuntimeError):
    """A run failed; ``partial`` holds the trace recorded up to the failure."""

    def __init__(self, message: str, partial: "RunTrace | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(eq=False)
class ExperimentConfig:
    topology: Topology
    matrix: CombinationMatrix
    protocol: Protocol
    model: LikelihoodModel
    truth: int
    horizon: int = 2000
    seed: int = 0
    num_runs: int = 1
    stride: int | None = None
    initial_beliefs: np.ndarray | None = None
    name: str = "experiment"

    def __post_init__(self):
        errors = []
        K, H = self.model.num_agents, self.model.num_hypotheses
        if self.topology.num_agents != K:
            errors.append(f"topology has {self.topology.num_agents} agents, likelihoods have {K}")
        if self.matrix.num_agents != self.topology.num_agents:
            errors.append("combination matrix size differs from the topology")
        if not 0 <= self.truth < H:
            errors.append(f"truth {self.truth} out of range 0..{H - 1}")
        if isinstance(self.protocol, TrendingBootstrap) and self.protocol.pi.num_hypotheses != H:
            errors.append(f"trend distribution has {self.protocol.pi.num_hypotheses} entries, expected {H}")
        if isinstance(self.protocol, FixedPartial) and not 0 <= self.protocol.tau < H:
            errors.append(f"shared hypothesis {self.protocol.tau} out of range")
        if self.horizon < 0:
            errors.append("horizon must be nonnegative")
        if self.num_runs < 1:
            errors.append("runs must be positive")
        if self.stride is not None and self.stride < 1:
            errors.append("stride must be positive")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def num_agents(self) -> int:
        return self.model.num_agents

    @property
    def num_hypotheses(self) -> int:
        return self.model.num_hypotheses

    def initial_state(self) -> NetworkState:
        return NetworkState.initial(self.num_agents, self.num_hypotheses, self.initial_beliefs)

    def replace(self, **changes) -> "ExperimentConfig":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ExperimentConfig(**fields)


@dataclass(eq=False)
class RunTrace:
    """Recorded snapshots of one run.

    ``taus`` is ``-1`` where no hypothesis was shared at random (time zero,
    full and fixed-hypothesis protocols). ``min_truth_log`` and
    ``max_wrong_log`` track, per agent, the smallest log-belief on the truth
    and the largest on any wrong hypothesis over *every* step, not only the
    recorded ones.
    """

    truth: int
    protocol: str
    seed: int
    run: int
    perron: np.ndarray
    times: list[int] = field(default_factory=list)
    log_beliefs: list[np.ndarray] = field(default_factory=list)
    taus: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    min_truth_log: np.ndarray | None = None
    min_truth_time: np.ndarray | None = None
    max_wrong_log: np.ndarray | None = None
    tau_history: list[int] = field(default_factory=list)

    def record(self, state: NetworkState) -> None:
        self.times.append(state.time)
        self.log_beliefs.append(np.array(state.beliefs))
        self.taus.append(-1 if state.tau is None else int(state.tau))
        self.loss.append(network_loss(state.beliefs, self.perron, self.truth))

    def observe(self, state: NetworkState) -> None:
        truth_log = state.beliefs[:, self.truth]
        wrong_log = np.delete(state.beliefs, self.truth, axis=1).max(axis=1)
        if self.min_truth_log is None:
            self.min_truth_log = truth_log.copy()
            self.min_truth_time = np.zeros(truth_log.size, dtype=int)
            self.max_wrong_log = wrong_log.copy()
            return
        self.max_wrong_log = np.maximum(self.max_wrong_log, wrong_log)
        lower = truth_log < self.min_truth_log
        self.min_truth_log[lower] = truth_log[lower]
        self.min_truth_time[lower] = state.time

    @property
    def beliefs_array(self) -> np.ndarray:
        return np.array(self.log_beliefs)

    @property
    def final(self) -> np.ndarray:
        return self.log_beliefs[-1]

    @property
    def horizon(self) -> int:
        return self.times[-1]

    def ratios(self) -> np.ndarray:
        """``r[t, k, h] = log mu_k(h) - log mu_k(truth)`` at recorded times."""
        b = self.beliefs_array
        return b - b[..., self.truth:self.truth + 1]

    def empirical_rates(self) -> np.ndarray:
        """Final log-belief ratios divided by the final time, shape ``(K, H)``."""
        t = self.horizon
        if t == 0:
            raise ValueError("no rate at time zero")
        return (self.final - self.final[:, self.truth:self.truth + 1]) / t


def record_times(horizon: int, stride: int | None = None) -> set[int]:
    """Every step up to 100 then every 10th by default; always the horizon."""
    if stride is None:
        times = set(range(min(horizon, 100) + 1)) | set(range(100, horizon + 1, 10))
    else:
        times = set(range(0, horizon + 1, stride))
    times.add(horizon)
    return times


def network_loss(log_beliefs, perron, truth: int) -> float:
    """Perron-weighted sum of ``-log mu_k(truth)``."""
    return float(-np.dot(perron, np.asarray(log_beliefs)[:, truth]))


def log_belief_ratio(log_belief, theta: int, truth: int) -> float:
    return float(log_belief[theta] - log_belief[truth])


def asymptotic_rate(model: LikelihoodModel, perron, theta: int, truth: int) -> float:
    """Perron-weighted negative KL between the truth and ``theta``."""
    return -float(sum(v * agent.kl(truth, theta) for v, agent in zip(perron, model.agents)))


def rate_table(model: LikelihoodModel, perron, truth: int) -> dict[int, float]:
    return {h: asymptotic_rate(model, perron, h, truth) for h in range(model.num_hypotheses)}


@dataclass
class GuardResult:
    min_truth_belief: float
    agent: int
    time: int
    zero_hit: bool


def mislearning_guard(trace: RunTrace) -> GuardResult:
    """Smallest truth-belief seen over all steps and agents of a run."""
    k = int(np.argmin(trace.min_truth_log))
    low = float(trace.min_truth_log[k])
    return GuardResult(math.exp(low), k, int(trace.min_truth_time[k]), low == -math.inf)


def iterate(config: ExperimentConfig, run: int = 0, state: NetworkState | None = None,
            until: int | None = None):
    """Yield ``(previous_state, state, log_likelihoods)`` for each round."""
    rng = Streams(config.seed, run)
    state = config.initial_state() if state is None else state
    until = config.horizon if until is None else until
    K = config.num_agents
    trending = isinstance(config.protocol, TrendingBootstrap)
    t = state.time + 1
    while t <= until:
        n = min(CHUNK, until - t + 1)
        obs = config.model.sample(config.truth, rng.observations(K, t, n))
        log_lik = config.model.log_likelihoods(obs)
        taus = config.protocol.pi.sample(rng.trends(t, n)) if trending else None
        for j in range(n):
            tau = int(taus[j]) if trending else None
            nxt = advance(state, config.protocol, config.matrix, log_lik[j], tau)
            yield state, nxt, log_lik[j]
            state = nxt
        t += n


def run_single(config: ExperimentConfig, run: int = 0,
               on_step: Callable[[NetworkState, NetworkState, np.ndarray], None] | None = None,
               initial: NetworkState | None = None) -> RunTrace:
    """Run one seeded replica; ``initial`` overrides the configured start state."""
    trace = RunTrace(config.truth, config.protocol.name, config.seed, run,
                     np.array(config.matrix.perron))
    wanted = record_times(config.horizon, config.stride)
    state = config.initial_state() if initial is None else initial
    trace.record(state)
    trace.observe(state)
    try:
        for _, state, log_lik in _with_hook(iterate(config, run, state), on_step):
            trace.observe(state)
            if state.tau is not None:
                trace.tau_history.append(int(state.tau))
            if state.time in wanted:
                trace.record(state)
    except StepError as exc:
        raise EngineError(f"run {run} of {config.name!r} failed: {exc}", trace) from exc
    return trace


def _with_hook(steps, hook):
    for prev, nxt, log_lik in steps:
        if hook is not None:
            hook(prev, nxt, log_lik)
        yield prev, nxt, log_lik


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[RunTrace]:
    """All ``config.num_runs`` runs; run ``r`` uses streams ``(seed, r)``."""
    runs = range(config.num_runs)
    if workers > 1 and config.num_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_single, [config] * config.num_runs, runs))
    return [run_single(config, r) for r in runs]


def aggregate(traces: list[RunTrace]) -> dict:
    """Mean log-beliefs and loss across runs at the common recorded times."""
    times = traces[0].times
    if any(t.times != times for t in traces):
        raise ValueError("traces were recorded at different times")
    return {
        "times": list(times),
        "mean_log_beliefs": np.mean([t.beliefs_array for t in traces], axis=0),
        "mean_loss": np.mean([t.loss for t in traces], axis=0),
    }


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def write_trace_csv(trace: RunTrace, path) -> None:
    """Long-format trace: one row per (time, agent, hypothesis)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        if trace.horizon == 0:
            return
        for t, b, tau, q in zip(trace.times, trace.log_beliefs, trace.taus, trace.loss):
            tau_s = "" if tau < 0 else str(tau)
            q_s = _fmt(q)
            for k in range(b.shape[0]):
                for h in range(b.shape[1]):
                    w.writerow((t, k, h, _fmt(b[k, h]), tau_s, q_s))


def summarize(config: ExperimentConfig, traces: list[RunTrace]) -> dict:
    v = config.matrix.perron
    rates = rate_table(config.model, v, config.truth)
    ident = check_global_identifiability(config.model, config.truth)
    runs = []
    for tr in traces:
        guard = mislearning_guard(tr)
        entry = {
            "run": tr.run,
            "horizon": tr.horizon,
            "final_beliefs": np.exp(tr.final).tolist(),
            "final_truth_beliefs": np.exp(tr.final[:, config.truth]).tolist(),
            "final_loss": tr.loss[-1],
            "guard": {"min_truth_belief": guard.min_truth_belief, "agent": guard.agent,
                      "time": guard.time, "zero_hit": guard.zero_hit},
        }
        if tr.horizon > 0:
            entry["empirical_rates"] = tr.empirical_rates().tolist()
        runs.append(entry)
    return {
        "name": config.name,
        "protocol": config.protocol.name,
        "truth": config.truth,
        "seed": config.seed,
        "horizon": config.horizon,
        "perron": np.asarray(v).tolist(),
        "mixing_lambda": config.matrix.mixing_lambda,
        "d_ave": {str(h): r for h, r in rates.items()},
        "identifiability": {str(i.theta): list(i.witnesses) for i in ident},
        "runs": runs,
    }


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_plot_data(config: ExperimentConfig, trace: RunTrace, out_dir, agent: int = 0) -> list[Path]:
    """Tidy series for the network, belief-evolution and rate panels.

    ``plot_network.csv``: ``source,target,weight`` for every nonzero ``A[l, k]``.
    ``plot_beliefs.csv``: ``time,tau,belief_0..belief_{H-1}`` for ``agent``.
    ``plot_rates.csv``: ``time,rate_h,d_ave_h`` columns for every wrong ``h``,
    where ``rate_h = r_agent(h) / time``.
    """
    out = Path(out_dir)
    H, truth = config.num_hypotheses, config.truth
    A = config.matrix.entries
    paths = [out / "plot_network.csv", out / "plot_beliefs.csv", out / "plot_rates.csv"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("source", "target", "weight"))
        for l, k in zip(*np.nonzero(A)):
            w.writerow((int(l), int(k), _fmt(A[l, k])))
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time", "tau") + tuple(f"belief_{h}" for h in range(H)))
        for t, b, tau in zip(trace.times, trace.log_beliefs, trace.taus):
            w.writerow((t, "" if tau < 0 else tau) + tuple(_fmt(x) for x in np.exp(b[agent])))
    wrong = [h for h in range(H) if h != truth]
    rates = rate_table(config.model, config.matrix.perron, truth)
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time",) + tuple(c for h in wrong for c in (f"rate_{h}", f"d_ave_{h}")))
        for t, b in zip(trace.times, trace.log_beliefs):
            if t == 0:
                continue
            row = [t]
            for h in wrong:
                row += [_fmt((b[agent, h] - b[agent, truth]) / t), _fmt(rates[h])]
            w.writerow(row)
    return paths


def protocol_label(protocol: Protocol) -> str:
    if isinstance(protocol, FixedPartial):
        return f"fixed(tau={protocol.tau})"
    if isinstance(protocol, FullSharing):
        return "full"
    return f"trending(pi={protocol.pi.probs.tolist()})"
