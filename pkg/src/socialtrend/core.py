"""Belief updates and the three fusion protocols, all in the log domain.

A belief is a length-``H`` array of natural-log probabilities. Network-wide
quantities are ``(K, H)`` arrays, row ``k`` belonging to agent ``k``; the
batched internals accept extra leading dimensions so Monte-Carlo branches
can be advanced together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .models import LikelihoodModel, TrendDistribution
from .network import CombinationMatrix
from .streams import Streams

NORM_TOL = 1e-10


class BeliefError(ValueError):
    pass


class StepError(RuntimeError):
    def __init__(self, message: str, agent: int | None = None, time: int | None = None):
        where = ", ".join(p for p in (
            f"agent {agent}" if agent is not None else "",
            f"time {time}" if time is not None else "") if p)
        super().__init__(f"{message} ({where})" if where else message)
        self.agent = agent
        self.time = time


# -- protocols ---------------------------------------------------------------

@dataclass(frozen=True)
class FullSharing:
    name = "full"


@dataclass(frozen=True)
class FixedPartial:
    """Fixed shared hypothesis, missing entries filled uniformly."""

    tau: int
    name = "fixed"


@dataclass(frozen=True)
class TrendingBootstrap:
    """Random shared hypothesis drawn from ``pi``, missing entries bootstrapped."""

    pi: TrendDistribution = field(compare=False)
    name = "trending"


Protocol = FullSharing | FixedPartial | TrendingBootstrap


# -- single-belief operations ------------------------------------------------

def normalize_log(logp, axis: int = -1) -> np.ndarray:
    logp = np.asarray(logp, dtype=float)
    with np.errstate(invalid="ignore"):
        z = logsumexp(logp, axis=axis, keepdims=True)
    if np.any(~np.isfinite(z)):
        raise BeliefError("belief has no finite entry to normalize")
    return logp - z


def uniform_belief(num_hypotheses: int) -> np.ndarray:
    return np.full(num_hypotheses, -math.log(num_hypotheses))


def to_log_belief(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > NORM_TOL:
        raise BeliefError(f"not a pmf: {p.tolist()}")
    with np.errstate(divide="ignore"):
        return np.log(p)


def local_bayes_update(log_prior, log_likelihood) -> np.ndarray:
    """Exact Bayes on the hypothesis simplex."""
    log_prior = np.asarray(log_prior, dtype=float)
    log_likelihood = np.asarray(log_likelihood, dtype=float)
    if np.any(np.isnan(log_likelihood)) or np.any(log_likelihood == np.inf):
        raise BeliefError("likelihood row must be finite or -inf")
    try:
        return normalize_log(log_prior + log_likelihood)
    except BeliefError:
        raise BeliefError("observation is impossible under every hypothesis") from None


def combine_full(log_psis, weights) -> np.ndarray:
    """Normalized weighted geometric mean of the rows of ``log_psis``."""
    log_psis = np.asarray(log_psis, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise BeliefError("combination weights must form a probability vector")
    return normalize_log(_weighted_log_sum(weights, log_psis))


def fill_uniform(received: float, tau: int, num_hypotheses: int) -> np.ndarray:
    """Received value at ``tau``, equal shares of the remainder elsewhere."""
    if not 0.0 < received < 1.0:
        raise BeliefError(f"received belief {received!r} must lie in (0, 1)")
    out = np.full(num_hypotheses, math.log1p(-received) - math.log(num_hypotheses - 1))
    out[tau] = math.log(received)
    return out


def bootstrap_fill(own_log, received: float, tau: int) -> np.ndarray:
    """Neighbor's value at ``tau``, own intermediate belief elsewhere, renormalized."""
    own_log = np.asarray(own_log, dtype=float)
    if not 0.0 < received <= 1.0:
        raise BeliefError(f"received belief {received!r} must lie in (0, 1]")
    rest = _log_rest(own_log, tau)
    log_recv = math.log(received)
    log_z = np.logaddexp(rest, log_recv)
    assert np.isfinite(log_z), "bootstrap normalizer must be positive"
    out = own_log - log_z
    out[tau] = log_recv - log_z
    return out


def _log_rest(logp, tau):
    """``log(1 - p[tau])`` computed as the log-mass of the other entries."""
    logp = np.asarray(logp)
    masked = np.where(np.arange(logp.shape[-1]) == np.asarray(tau)[..., None], -np.inf, logp)
    with np.errstate(divide="ignore"):
        return logsumexp(masked, axis=-1)


def _weighted_log_sum(weights, logs):
    """``sum_l w[l] * logs[l]`` where zero weights skip ``-inf`` rows."""
    w = np.asarray(weights, dtype=float)[:, None]
    with np.errstate(invalid="ignore"):
        return np.where(w > 0, w * logs, 0.0).sum(axis=0)


# -- network-wide fusion -----------------------------------------------------

def fused_inputs(log_psi, protocol: Protocol, tau=None) -> np.ndarray:
    """Per-edge messages ``M[..., k, l, :]``: agent ``k``'s version of ``l``'s belief."""
    log_psi = np.asarray(log_psi, dtype=float)
    K, H = log_psi.shape[-2:]
    if isinstance(protocol, FullSharing):
        return np.broadcast_to(log_psi[..., None, :, :], log_psi.shape[:-2] + (K, K, H))
    tau = np.asarray(tau)
    idx = np.arange(H)
    at_tau = np.take_along_axis(log_psi, tau[..., None, None] * np.ones((K, 1), int), axis=-1)[..., 0]
    rest = _log_rest(log_psi, tau[..., None])
    is_tau = idx == tau[..., None, None]
    if isinstance(protocol, FixedPartial):
        filled = np.where(is_tau, at_tau[..., None], (rest - math.log(H - 1))[..., None])
        return np.broadcast_to(filled[..., None, :, :], log_psi.shape[:-2] + (K, K, H))
    if isinstance(protocol, TrendingBootstrap):
        # receiver k (axis -3), sender l (axis -2)
        own = log_psi[..., :, None, :]
        recv = at_tau[..., None, :]
        log_z = np.logaddexp(rest[..., :, None], recv)
        msg = np.where(is_tau[..., None, :, :], recv[..., None], own) - log_z[..., None]
        diag = np.arange(K)
        msg[..., diag, diag, :] = log_psi
        return msg
    raise TypeError(f"unknown protocol {protocol!r}")


def combine(log_psi, protocol: Protocol, A: np.ndarray, tau=None) -> np.ndarray:
    """Geometric fusion of the per-edge messages with weights ``A[l, k]``."""
    msgs = fused_inputs(log_psi, protocol, tau)
    W = np.asarray(A).T[..., None]
    with np.errstate(invalid="ignore"):
        terms = np.where(W > 0, W * msgs, 0.0)
    return normalize_log(terms.sum(axis=-2))


# -- state machine -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NetworkState:
    beliefs: np.ndarray
    time: int = 0
    intermediates: np.ndarray | None = None
    tau: int | None = None

    def __post_init__(self):
        b = np.array(self.beliefs, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "beliefs", b)
        if self.intermediates is not None:
            p = np.array(self.intermediates, dtype=float)
            p.setflags(write=False)
            object.__setattr__(self, "intermediates", p)

    @classmethod
    def initial(cls, num_agents: int, num_hypotheses: int, beliefs=None) -> "NetworkState":
        """Uniform beliefs unless given; given beliefs must be strictly positive."""
        if beliefs is None:
            b = np.tile(uniform_belief(num_hypotheses), (num_agents, 1))
        else:
            p = np.asarray(beliefs, dtype=float)
            if p.ndim == 1:
                p = np.tile(p, (num_agents, 1))
            if p.shape != (num_agents, num_hypotheses):
                raise BeliefError(f"initial beliefs must have shape {(num_agents, num_hypotheses)}")
            if np.any(p <= 0):
                raise BeliefError("initial beliefs must be strictly positive")
            b = np.log(p / p.sum(axis=1, keepdims=True))
        return cls(b, 0)

    @property
    def num_agents(self) -> int:
        return self.beliefs.shape[0]

    @property
    def num_hypotheses(self) -> int:
        return self.beliefs.shape[1]


def advance(state: NetworkState, protocol: Protocol, A: CombinationMatrix | np.ndarray,
            log_lik: np.ndarray, tau: int | None = None) -> NetworkState:
    """One synchronous round given the likelihood rows and the shared hypothesis."""
    entries = A.entries if isinstance(A, CombinationMatrix) else np.asarray(A)
    time = state.time + 1
    log_psi = state.beliefs + log_lik
    with np.errstate(divide="ignore", invalid="ignore"):
        z = logsumexp(log_psi, axis=1, keepdims=True)
    bad = np.flatnonzero(~np.isfinite(z[:, 0]))
    if bad.size:
        raise StepError("observation is impossible under every hypothesis", int(bad[0]), time)
    log_psi = log_psi - z
    if isinstance(protocol, FixedPartial):
        tau = protocol.tau
    elif isinstance(protocol, FullSharing):
        tau = None
    elif tau is None:
        raise StepError("trending protocol needs a shared hypothesis", time=time)
    try:
        mu = combine(log_psi, protocol, entries, tau)
    except BeliefError as exc:
        raise StepError(str(exc), time=time) from None
    return NetworkState(mu, time, log_psi, tau if isinstance(protocol, TrendingBootstrap) else None)


def step(state: NetworkState, protocol: Protocol, A: CombinationMatrix, model: LikelihoodModel,
         truth: int, rng: Streams) -> NetworkState:
    """Sample this round's observations (and trend) from ``rng`` and advance."""
    time = state.time + 1
    u = rng.observations(state.num_agents, time, 1)[0]
    log_lik = model.log_likelihoods(model.sample(truth, u))
    tau = None
    if isinstance(protocol, TrendingBootstrap):
        tau = int(protocol.pi.sample(rng.trends(time, 1)[0]))
    return advance(state, protocol, A, log_lik, tau)
