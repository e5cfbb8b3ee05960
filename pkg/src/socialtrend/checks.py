"""Executable verification battery for the convergence results.

Each check returns a :class:`CheckReport`. Statistical checks use
3-standard-error bands and ship with a negative control so the harness can
be tested on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import streams
from .config import bundled_config_path, parse_config
from .core import (FixedPartial, FullSharing, NetworkState, TrendingBootstrap, advance, combine,
                   normalize_log)
from .engine import (ExperimentConfig, asymptotic_rate, iterate, mislearning_guard,
                     network_loss, rate_table, run_single)
from .models import LikelihoodModel, TrendDistribution
from .network import CombinationMatrix, Topology, build_metropolis

SE_BAND = 3.0
NUMERIC_SLACK = 1e-12


@dataclass
class CheckReport:
    name: str
    passed: bool
    statistic: float
    tolerance: float
    samples: dict = field(default_factory=dict)
    seed: int | None = None
    details: dict = field(default_factory=dict)
    note: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        text = f"[{flag}] {self.name}: statistic={self.statistic:.6g} tolerance={self.tolerance:.6g}"
        return text + (f" ({self.note})" if self.note else "")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self), default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


# -- rates -------------------------------------------------------------------

def check_rate_convergence(config: ExperimentConfig, theta: int | None = None,
                           tolerance: float = 0.05, trace=None) -> CheckReport:
    """Relative error of ``r_k,T(theta) / T`` against the Perron-weighted KL rate.

    ``theta=None`` checks every wrong hypothesis. Hypotheses never shared
    under a trending protocol are rejected.
    """
    truth = config.truth
    if theta == truth:
        return CheckReport(f"rate_convergence[{theta}]", True, 0.0, tolerance, seed=config.seed,
                           note="skipped: the rate at the truth is zero by definition")
    thetas = [h for h in range(config.num_hypotheses) if h != truth] if theta is None else [theta]
    if isinstance(config.protocol, TrendingBootstrap):
        silent = [h for h in thetas if config.protocol.pi.probs[h] <= 0]
        if silent:
            raise ValueError(f"hypotheses {silent} are never shared; no rate guarantee")
    trace = run_single(config) if trace is None else trace
    emp = trace.empirical_rates()
    rel = {}
    for h in thetas:
        d = asymptotic_rate(config.model, config.matrix.perron, h, truth)
        if d == 0:
            raise ValueError(f"hypothesis {h} is not identifiable; relative error undefined")
        rel[h] = (np.abs(emp[:, h] - d) / abs(d)).tolist()
    worst = max(max(v) for v in rel.values())
    label = "all" if theta is None else str(theta)
    return CheckReport(f"rate_convergence[{label}]", worst < tolerance, worst, tolerance,
                       {"horizon": trace.horizon, "agents": config.num_agents}, config.seed,
                       {"relative_error": rel, "empirical": emp.tolist(),
                        "d_ave": rate_table(config.model, config.matrix.perron, truth)})


def check_protocol_agreement(config: ExperimentConfig, tolerance: float = 0.02) -> CheckReport:
    """Full sharing and trending bootstrap on common observations.

    Relative difference is taken against the full-sharing rate.
    """
    trend = run_single(config)
    full = run_single(config.replace(protocol=FullSharing()))
    wrong = [h for h in range(config.num_hypotheses) if h != config.truth]
    a, b = full.empirical_rates()[:, wrong], trend.empirical_rates()[:, wrong]
    rel = np.abs(a - b) / np.abs(a)
    worst = float(rel.max())
    return CheckReport("protocol_agreement", worst < tolerance, worst, tolerance,
                       {"horizon": config.horizon}, config.seed,
                       {"full": a.tolist(), "trending": b.tolist(), "relative": rel.tolist()})


# -- supermartingale ---------------------------------------------------------

def branch_losses(config: ExperimentConfig, state: NetworkState, num_branches: int,
                  seed: int, index: int) -> np.ndarray:
    """Network loss after one step from ``state`` under fresh branch randomness."""
    K = config.num_agents
    u = streams.uniforms(seed, streams.BRANCH, index, 1, num_branches * (K + 1)).reshape(num_branches, K + 1)
    obs = config.model.sample(config.truth, u[:, :K])
    log_lik = config.model.log_likelihoods(obs)
    log_psi = normalize_log(state.beliefs + log_lik)
    p = config.protocol
    tau = None
    if isinstance(p, TrendingBootstrap):
        tau = p.pi.sample(u[:, K])
    elif isinstance(p, FixedPartial):
        tau = np.full(num_branches, p.tau)
    mu = combine(log_psi, p, config.matrix.entries, tau)
    return -(mu[..., config.truth] @ config.matrix.perron)


def check_supermartingale(config: ExperimentConfig, num_branches: int = 1000,
                          num_states: int = 20, flipped: bool = False) -> CheckReport:
    """Branch one step from frozen states and compare the mean loss with the current loss.

    With ``flipped`` the reverse inequality (loss does not decrease) is
    asserted instead; it must fail whenever the decrease is significant.
    """
    times = sorted({int(t) for t in np.linspace(0, max(config.horizon - 1, 0), num_states)})
    frozen = {}
    state = config.initial_state()
    if 0 in times:
        frozen[0] = state
    for _, state, _ in iterate(config, until=times[-1]):
        if state.time in times:
            frozen[state.time] = state
    margins, rows = [], []
    for idx, t in enumerate(times):
        s = frozen[t]
        q_prev = network_loss(s.beliefs, config.matrix.perron, config.truth)
        q = branch_losses(config, s, num_branches, config.seed, idx)
        mean = float(q.mean())
        se = float(q.std(ddof=1) / math.sqrt(num_branches))
        if flipped:
            margin = mean - (q_prev - SE_BAND * se)
        else:
            margin = (q_prev + SE_BAND * se) - mean
        margins.append(margin)
        rows.append({"time": t, "Q_prev": q_prev, "mean": mean, "se": se, "margin": margin})
    worst = float(min(margins))
    name = "supermartingale_flipped" if flipped else "supermartingale"
    return CheckReport(name, worst >= -NUMERIC_SLACK, worst, 0.0,
                       {"states": len(times), "branches": num_branches}, config.seed,
                       {"states": rows}, note="statistic is the smallest margin; must be >= 0")


def negative_control(report: CheckReport) -> CheckReport:
    """Wrap a check that is expected to fail; the wrapper passes iff it did."""
    return CheckReport(f"control:{report.name}", not report.passed, report.statistic, report.tolerance,
                       report.samples, report.seed, report.details,
                       note="negative control, must be rejected by the harness")


# -- counter-example ---------------------------------------------------------

def counterexample_config(seed: int = 0, pi: TrendDistribution | None = None,
                          horizon: int = 100) -> ExperimentConfig:
    """Three fully connected agents; agent k cannot tell hypothesis k from the truth 3."""
    means = np.array([[0.0, 2.0, 3.0, 0.0],
                      [1.0, 0.0, 3.0, 0.0],
                      [1.0, 2.0, 0.0, 0.0]])
    topo = Topology.complete(3)
    pi = TrendDistribution.delta(4, 3) if pi is None else pi
    return ExperimentConfig(topo, build_metropolis(topo), TrendingBootstrap(pi),
                            LikelihoodModel.gaussian(means), truth=3, horizon=horizon,
                            seed=seed, name="counterexample")


def counterexample_state(alpha: float) -> NetworkState:
    """Belief ``alpha`` on the truth, ``1 - alpha`` on the agent's confusable hypothesis, zero elsewhere."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    b = np.full((3, 4), -np.inf)
    for k in range(3):
        b[k, 3] = math.log(alpha)
        b[k, k] = math.log1p(-alpha)
    return NetworkState(b, 0)


def check_fixed_point(alpha: float, seed: int = 0, steps: int = 100, tol: float = 1e-10,
                      pi: TrendDistribution | None = None) -> CheckReport:
    config = counterexample_config(seed, pi, steps)
    start = counterexample_state(alpha)
    p0 = np.exp(start.beliefs)
    drift = [0.0]
    zeros_kept = [True]

    def watch(_prev, nxt, _lik):
        drift[0] = max(drift[0], float(np.max(np.abs(np.exp(nxt.beliefs) - p0))))
        zeros_kept[0] &= bool(np.all(np.isneginf(nxt.beliefs) == np.isneginf(start.beliefs)))

    trace = run_single(config, on_step=watch, initial=start)
    guard = mislearning_guard(trace)
    return CheckReport(f"fixed_point[alpha={alpha}]", drift[0] <= tol and zeros_kept[0], drift[0], tol,
                       {"steps": steps}, seed,
                       {"final": np.exp(trace.final).tolist(), "min_truth_belief": guard.min_truth_belief,
                        "zeros_kept": zeros_kept[0]})


# -- no mislearning ----------------------------------------------------------

def check_no_mislearning(configs: list[ExperimentConfig], floor: float = 0.0,
                         slope_eps: float = 1e-3, wrong_cap: float | None = None) -> CheckReport:
    """Truth-beliefs stay positive (above ``floor``) with no late downward trend.

    Uniform-fill runs with a wrong fixed hypothesis are outside the scope of
    this guarantee and are rejected.
    """
    per_config, ok = {}, True
    worst_min = math.inf
    for cfg in configs:
        if isinstance(cfg.protocol, FixedPartial) and cfg.protocol.tau != cfg.truth:
            raise ValueError(f"{cfg.name}: uniform fill with a wrong shared hypothesis can mislearn")
        trace = run_single(cfg)
        guard = mislearning_guard(trace)
        times = np.array(trace.times)
        late = times >= 0.75 * trace.horizon
        logs = trace.beliefs_array[late][:, :, cfg.truth]
        slopes = [float(np.polyfit(times[late], logs[:, k], 1)[0]) if late.sum() > 1 else 0.0
                  for k in range(cfg.num_agents)]
        max_wrong = float(np.exp(trace.max_wrong_log.max()))
        good = (guard.min_truth_belief > floor and not guard.zero_hit
                and min(slopes) >= -slope_eps
                and (wrong_cap is None or max_wrong <= wrong_cap))
        ok &= good
        worst_min = min(worst_min, guard.min_truth_belief)
        per_config[cfg.name] = {"passed": good, "min_truth_belief": guard.min_truth_belief,
                                "agent": guard.agent, "time": guard.time, "late_slopes": slopes,
                                "max_wrong_belief": max_wrong}
    return CheckReport("no_mislearning", ok, worst_min, floor,
                       {"configs": len(configs)}, configs[0].seed if configs else None, per_config,
                       note="statistic is the smallest truth-belief seen")


# -- random matrix products --------------------------------------------------

def _product(A: np.ndarray, factors: np.ndarray) -> np.ndarray:
    P = np.eye(A.shape[0])
    for use_a in factors:
        if use_a:
            P = P @ A
    return P


def check_matrix_product_lemmas(A: CombinationMatrix, pi_theta: float, windows=range(1, 31),
                                samples: int = 10_000, seed: int = 0, chi_window: int = 20,
                                long_window: int = 500, long_samples: int = 50,
                                exact_samples: int = 200,
                                reference_pi: float | None = None) -> list[CheckReport]:
    """Binomial factor counts, geometric norm decay and convergence of the product.

    Returns three reports: ``(a)`` counts and product structure, ``(b)``
    decay slope, ``(c)`` long-window convergence to ``v 1^T``. Factors are
    drawn with probability ``pi_theta``; the binomial reference uses
    ``reference_pi`` when given, which serves as a negative control.
    """
    ref = pi_theta if reference_pi is None else reference_pi
    M = A.entries
    K = A.num_agents
    v = np.asarray(A.perron)
    windows = list(windows)
    n_max = max(max(windows), chi_window)
    u = streams.uniforms(seed, streams.MATRIX, 0, 1, samples * n_max).reshape(samples, n_max)
    draws = u < pi_theta
    counts = np.cumsum(draws, axis=1)
    lam = A.mixing_lambda
    lam_tilde = 1.0 - (1.0 - lam) * pi_theta
    I = np.eye(K)

    # (a) factor counts are Binomial(n, pi) and the product equals A^m
    m = counts[:, chi_window - 1]
    pmf = stats.binom.pmf(np.arange(chi_window + 1), chi_window, ref)
    observed = np.bincount(m, minlength=chi_window + 1).astype(float)
    obs_b, exp_b = _pool_bins(observed, pmf * samples)
    if len(obs_b) > 1:
        chi2, p_value = stats.chisquare(obs_b, exp_b)
    else:
        chi2, p_value = 0.0, 1.0
    powers = [I]
    for _ in range(n_max + 1):
        powers.append(powers[-1] @ M)
    struct_err = 0.0
    for s in range(min(exact_samples, samples)):
        P = _product(M, draws[s, :chi_window])
        struct_err = max(struct_err, float(np.max(np.abs(P - powers[m[s]]))))
    gap_norm = np.array([np.linalg.norm((powers[j].T @ (I - M.T)), 2) for j in range(n_max + 1)])
    mc_mean, mc_se, exact_mean = [], [], []
    for n in windows:
        vals = gap_norm[counts[:, n - 1]]
        mc_mean.append(float(vals.mean()))
        mc_se.append(float(vals.std(ddof=1) / math.sqrt(samples)))
        w = stats.binom.pmf(np.arange(n + 1), n, ref)
        exact_mean.append(float(w @ gap_norm[:n + 1]))
    # floor the standard error so degenerate draws (pi = 0 or 1) compare at rounding level
    z = [abs(a - b) / max(s, 1e-12 * max(1.0, abs(b))) for a, b, s in zip(mc_mean, exact_mean, mc_se)]
    passed_a = p_value > 1e-3 and struct_err < 1e-12 and max(z) <= SE_BAND
    rep_a = CheckReport("matrix_products.binomial", passed_a, float(p_value), 1e-3,
                        {"samples": samples, "window": chi_window, "exact_products": exact_samples},
                        seed, {"chi2": float(chi2), "structure_error": struct_err,
                               "mean_vs_exact_z": z},
                        note="statistic is the chi-square p-value")

    # (b) geometric decay of E||(A~)^T (I - A^T)||
    ns = np.array(windows, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(np.array(mc_mean))
    if np.all(np.isfinite(logs)) and len(ns) > 1:
        slope = float(np.polyfit(ns, logs, 1)[0])
    else:
        slope = -math.inf
    bound = math.log(lam_tilde) + 0.05 if lam_tilde > 0 else -math.inf
    rep_b = CheckReport("matrix_products.decay", slope <= bound, slope, bound,
                        {"samples": samples, "windows": len(windows)}, seed,
                        {"lambda": lam, "lambda_tilde": lam_tilde, "log_lambda_tilde": math.log(lam_tilde)
                         if lam_tilde > 0 else -math.inf, "mc_mean": mc_mean, "exact_mean": exact_mean},
                        note="fitted slope of log mean norm vs window; must be <= log(lambda~) + 0.05")

    # (c) product over a long window converges to v 1^T
    ul = streams.uniforms(seed, streams.MATRIX, 1, 1, long_samples * long_window)
    long_draws = (ul < pi_theta).reshape(long_samples, long_window)
    target = np.outer(v, np.ones(K))
    dist = max(float(np.max(np.abs(_product(M, row) - target))) for row in long_draws)
    rep_c = CheckReport("matrix_products.limit", dist < 1e-6, dist, 1e-6,
                        {"samples": long_samples, "window": long_window}, seed,
                        {"min_factor_count": int(long_draws.sum(axis=1).min())})
    return [rep_a, rep_b, rep_c]


def _pool_bins(observed, expected, min_expected: float = 5.0):
    """Merge adjacent bins until every expected count is at least ``min_expected``."""
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if obs_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    obs_out, exp_out = np.array(obs_out), np.array(exp_out)
    return obs_out, exp_out * obs_out.sum() / exp_out.sum()


# -- uniform-fill results ----------------------------------------------------

@dataclass
class MislearningCondition:
    lhs: float
    rhs: float
    holds: bool
    max_abserr: float


def check_mislearning_condition(model: LikelihoodModel, perron, tau: int, truth: int,
                                max_abserr: float = 1e-6) -> MislearningCondition:
    """Perron-weighted KL to the shared hypothesis vs to the average of the others.

    The right side has no closed form for Gaussians and is integrated
    numerically; an integration error above ``max_abserr`` raises.
    """
    if tau == truth:
        raise ValueError("the condition concerns a wrong shared hypothesis")
    lhs = rhs = err = 0.0
    for v, agent in zip(perron, model.agents):
        lhs += v * agent.kl(truth, tau)
        val, e = agent.kl_to_average(truth, tau)
        rhs += v * val
        err = max(err, e)
    if err > max_abserr:
        raise ArithmeticError(f"quadrature error {err:.3g} exceeds {max_abserr:.3g}")
    return MislearningCondition(float(lhs), float(rhs), bool(lhs < rhs), float(err))


def check_uniform_fill_mislearning(config: ExperimentConfig, threshold: float = 0.99) -> CheckReport:
    """Uniform fill with a wrong fixed hypothesis satisfying the condition drives beliefs to it."""
    p = config.protocol
    if not isinstance(p, FixedPartial) or p.tau == config.truth:
        raise ValueError("needs a fixed-hypothesis protocol with a wrong shared hypothesis")
    cond = check_mislearning_condition(config.model, config.matrix.perron, p.tau, config.truth)
    trace = run_single(config)
    on_tau = np.exp(trace.final[:, p.tau])
    passed = cond.holds and bool(np.all(on_tau > threshold))
    return CheckReport("uniform_fill_mislearning", passed, float(on_tau.min()), threshold,
                       {"horizon": config.horizon}, config.seed,
                       {"lhs": cond.lhs, "rhs": cond.rhs, "condition_holds": cond.holds,
                        "quadrature_abserr": cond.max_abserr, "final_on_tau": on_tau.tolist()},
                       note="statistic is the smallest final belief on the shared wrong hypothesis")


def modified_identifiability(model: LikelihoodModel, tau: int) -> list[float]:
    """Per-agent KL from the shared hypothesis to the average of the others."""
    return [agent.kl_to_average(tau, tau)[0] for agent in model.agents]


def check_truth_sharing_sufficiency_uniform_fill(config: ExperimentConfig, threshold: float = 0.99,
                                                 fill: str = "uniform") -> CheckReport:
    """Sharing only the truth: uniform fill learns it, bootstrap fill (the contrast) stalls."""
    truth = config.truth
    if fill == "uniform":
        cfg = config.replace(protocol=FixedPartial(truth))
    elif fill == "bootstrap":
        cfg = config.replace(protocol=TrendingBootstrap(TrendDistribution.delta(config.num_hypotheses, truth)))
    else:
        raise ValueError(f"unknown fill {fill!r}")
    kls = modified_identifiability(cfg.model, truth)
    if max(kls) <= 1e-12:
        raise ValueError("no agent separates the truth from the average of the other hypotheses")
    trace = run_single(cfg)
    on_truth = np.exp(trace.final[:, truth])
    return CheckReport(f"truth_sharing[{fill}]", bool(np.all(on_truth > threshold)),
                       float(on_truth.min()), threshold, {"horizon": cfg.horizon}, cfg.seed,
                       {"final_on_truth": on_truth.tolist(), "modified_kl": kls,
                        "non_convergent": [int(k) for k in np.flatnonzero(on_truth <= threshold)]})


# -- recursion identities ----------------------------------------------------

def full_recursion_residual(config: ExperimentConfig, steps: int = 50) -> float:
    """Max gap between simulated log-ratios and the linear log-ratio recursion."""
    cfg = config.replace(protocol=FullSharing(), horizon=steps)
    A = cfg.matrix.entries
    truth = cfg.truth
    r = None
    worst = 0.0
    for prev, nxt, log_lik in iterate(cfg):
        if r is None:
            r = prev.beliefs - prev.beliefs[:, [truth]]
        llr = log_lik - log_lik[:, [truth]]
        r = A.T @ (llr + r)
        sim = nxt.beliefs - nxt.beliefs[:, [truth]]
        worst = max(worst, float(np.max(np.abs(sim - r))))
    return worst


def effective_recursion_step(log_psi, A, tau: int, theta: int, truth: int) -> np.ndarray:
    """Per-agent ``log mu(theta) - log mu(truth)`` after fusion, via the effective matrix."""
    K = A.shape[0]
    eff = A if tau == theta else np.eye(K)
    Psi = log_psi[:, truth]
    sign = float(tau == truth) - float(tau == theta)
    llr_plus = log_psi[:, theta] - log_psi[:, truth]
    return eff.T @ llr_plus + sign * (Psi - A.T @ Psi)


def trending_recursion_residual(config: ExperimentConfig, steps: int = 50) -> float:
    """Max gap between the bootstrap step and the effective-matrix recursion, all wrong theta."""
    cfg = config.replace(horizon=steps)
    if not isinstance(cfg.protocol, TrendingBootstrap):
        raise ValueError("needs the trending protocol")
    A = cfg.matrix.entries
    worst = 0.0
    for prev, nxt, _ in iterate(cfg):
        for theta in range(cfg.num_hypotheses):
            if theta == cfg.truth:
                continue
            pred = effective_recursion_step(nxt.intermediates, A, nxt.tau, theta, cfg.truth)
            sim = nxt.beliefs[:, theta] - nxt.beliefs[:, cfg.truth]
            worst = max(worst, float(np.max(np.abs(sim - pred))))
    return worst


def check_recursions(config: ExperimentConfig, steps: int = 50, tol: float = 1e-10) -> list[CheckReport]:
    full = full_recursion_residual(config, steps)
    trend = trending_recursion_residual(config, steps)
    return [
        CheckReport("recursion.full", full < tol, full, tol, {"steps": steps}, config.seed),
        CheckReport("recursion.trending", trend < tol, trend, tol, {"steps": steps}, config.seed),
    ]


def check_residual_decomposition(config: ExperimentConfig, theta: int,
                                 fraction: float = 0.1) -> CheckReport:
    """Split log-ratios into data, initial and disagreement-residual parts.

    Verifies the split reproduces the simulated ratios, that the averaged
    residual is below ``fraction`` of the asymptotic rate (a finite-horizon
    surrogate for its almost-sure vanishing), and that the running maximum of
    ``||log psi(truth)||`` has stopped growing over the second half.
    """
    if not isinstance(config.protocol, TrendingBootstrap):
        raise ValueError("needs the trending protocol")
    A = config.matrix.entries
    K, truth = config.num_agents, config.truth
    state = config.initial_state()
    init_part = state.beliefs[:, theta] - state.beliefs[:, truth]
    data_part = np.zeros(K)
    resid = np.zeros(K)
    identity_err = 0.0
    psi_norms = []
    for _, nxt, log_lik in iterate(config):
        eff = A if nxt.tau == theta else np.eye(K)
        llr = log_lik[:, theta] - log_lik[:, truth]
        Psi = nxt.intermediates[:, truth]
        sign = float(nxt.tau == truth) - float(nxt.tau == theta)
        init_part = eff.T @ init_part
        data_part = eff.T @ (data_part + llr)
        resid = eff.T @ resid + sign * (Psi - A.T @ Psi)
        sim = nxt.beliefs[:, theta] - nxt.beliefs[:, truth]
        scale = max(1.0, float(np.max(np.abs(sim))))
        identity_err = max(identity_err, float(np.max(np.abs(init_part + data_part + resid - sim))) / scale)
        psi_norms.append(float(np.linalg.norm(Psi)))
    T = config.horizon
    d = asymptotic_rate(config.model, config.matrix.perron, theta, truth)
    mean_resid = float(np.max(np.abs(resid))) / T
    run_max = np.maximum.accumulate(psi_norms)
    stable = bool(np.isfinite(run_max[-1]) and run_max[-1] == run_max[T // 2 - 1])
    ratio = mean_resid / abs(d)
    passed = identity_err < 1e-10 and ratio < fraction and stable
    return CheckReport(f"residual[{theta}]", passed, ratio, fraction, {"horizon": T}, config.seed,
                       {"identity_error": identity_err, "mean_residual": mean_resid, "d_ave": d,
                        "sup_psi_norm": float(run_max[-1]), "sup_stable_over_second_half": stable},
                       note="finite-horizon surrogate: |mean residual| / |d_ave|")


# -- battery -----------------------------------------------------------------

def _fig3(seed: int, **changes) -> ExperimentConfig:
    cfg = parse_config(bundled_config_path("fig3"))
    return cfg.replace(seed=seed, **changes)


def _battery_rates(seed):
    cfg = _fig3(seed, horizon=3000)
    early = check_rate_convergence(cfg.replace(horizon=30), None, 0.05)
    return [check_rate_convergence(cfg, None, 0.05), negative_control(early)]


def _battery_agreement(seed):
    return [check_protocol_agreement(_fig3(seed, horizon=3000), 0.02)]


def _battery_supermartingale(seed):
    cfg = _fig3(seed)
    flipped = check_supermartingale(cfg, 1000, 20, flipped=True)
    return [check_supermartingale(cfg, 1000, 20), negative_control(flipped)]


def _battery_fixed_point(seed):
    reports = [check_fixed_point(a, seed + s) for a in (0.1, 0.3, 0.5) for s in range(10)]
    wrong_trend = TrendDistribution([1 / 3, 1 / 3, 1 / 3, 0.0])
    return reports + [negative_control(check_fixed_point(0.3, seed, pi=wrong_trend))]


def _battery_no_mislearning(seed):
    base = _fig3(seed, horizon=5000)
    stalled = parse_config(bundled_config_path("fig4")).replace(seed=seed)
    skewed = TrendDistribution([0.6, 0.1, 0.1, 0.1, 0.1])
    configs = [stalled, base.replace(protocol=TrendingBootstrap(skewed), name="skewed"), base]
    return [check_no_mislearning(configs, floor=0.01, wrong_cap=0.99)]


def _battery_matrix(seed):
    A = _fig3(seed).matrix
    reports = check_matrix_product_lemmas(A, 0.25, seed=seed)
    misfit = check_matrix_product_lemmas(A, 0.25, seed=seed, reference_pi=0.3)[0]
    stuck = check_matrix_product_lemmas(A, 0.0, seed=seed, samples=500)[2]
    return reports + [negative_control(misfit), negative_control(stuck)]


def _battery_wrong_fill(seed):
    cfg = parse_config(bundled_config_path("wrong_fill")).replace(seed=seed)
    return [check_uniform_fill_mislearning(cfg)]


def _battery_truth_sharing(seed):
    return [check_truth_sharing_sufficiency_uniform_fill(_fig3(seed))]


def _battery_residual(seed):
    cfg = _fig3(seed, horizon=3000)
    return [check_residual_decomposition(cfg, h) for h in range(1, cfg.num_hypotheses)]


def _battery_recursions(seed):
    return check_recursions(_fig3(seed))


BATTERY: dict[str, Callable[[int], list[CheckReport]]] = {
    "rate_convergence": _battery_rates,
    "protocol_agreement": _battery_agreement,
    "supermartingale": _battery_supermartingale,
    "fixed_point": _battery_fixed_point,
    "no_mislearning": _battery_no_mislearning,
    "matrix_products": _battery_matrix,
    "uniform_fill_mislearning": _battery_wrong_fill,
    "truth_sharing": _battery_truth_sharing,
    "residual": _battery_residual,
    "recursions": _battery_recursions,
}


def run_battery(names: list[str] | None = None, seed: int = 0) -> list[CheckReport]:
    names = list(BATTERY) if not names or names == ["all"] else names
    unknown = [n for n in names if n not in BATTERY]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; available: {', '.join(BATTERY)}")
    reports = []
    for n in names:
        reports.extend(BATTERY[n](seed))
    return reports
