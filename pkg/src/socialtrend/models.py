"""Likelihood families, trend distributions and KL divergences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp, ndtri

from . import streams

PMF_TOL = 1e-12
IDENTIFIABLE_TOL = 1e-12
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ModelError(ValueError):
    pass


class InfiniteKLError(ModelError):
    """KL divergence is infinite: the second argument misses support of the first."""


def _check_pmf(p, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ModelError(f"{what} must be a non-empty vector")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ModelError(f"{what} has negative or non-finite entries")
    total = p.sum()
    if abs(total - 1.0) > PMF_TOL:
        raise ModelError(f"{what} sums to {total!r}, not 1")
    return p


@dataclass(frozen=True)
class HypothesisSet:
    count: int
    true_index: int

    def __post_init__(self):
        if self.count < 2:
            raise ModelError("need at least two hypotheses")
        if not 0 <= self.true_index < self.count:
            raise ModelError(f"true hypothesis {self.true_index} out of range 0..{self.count - 1}")

    def wrong(self) -> list[int]:
        return [h for h in range(self.count) if h != self.true_index]


class GaussianLikelihood:
    """Unit-variance Gaussian likelihoods, one mean per hypothesis."""

    kind = "gaussian"

    def __init__(self, means: Sequence[float]):
        m = np.array(means, dtype=float)
        if m.ndim != 1 or m.size < 2 or not np.all(np.isfinite(m)):
            raise ModelError("gaussian likelihood needs a finite mean per hypothesis")
        m.setflags(write=False)
        self.means = m

    @property
    def num_hypotheses(self) -> int:
        return self.means.size

    def log_likelihood(self, x) -> np.ndarray:
        """``log L(x | theta)`` for every hypothesis; broadcasts over ``x``."""
        x = np.asarray(x, dtype=float)[..., None]
        return -0.5 * (x - self.means) ** 2 - _HALF_LOG_2PI

    def sample(self, truth: int, u) -> np.ndarray:
        return self.means[truth] + ndtri(u)

    def kl(self, a: int, b: int) -> float:
        return 0.5 * float(self.means[a] - self.means[b]) ** 2

    def kl_to_average(self, a: int, exclude: int) -> tuple[float, float]:
        """KL from hypothesis ``a`` to the equal mixture of all rows but ``exclude``.

        Adaptive quadrature over a 10-sigma window around the mean of ``a``.
        Returns ``(value, abserr)``.
        """
        others = np.array([m for h, m in enumerate(self.means) if h != exclude])
        mu = self.means[a]
        log_w = -math.log(others.size)

        def integrand(x):
            lp = -0.5 * (x - mu) ** 2 - _HALF_LOG_2PI
            lq = logsumexp(-0.5 * (x - others) ** 2 - _HALF_LOG_2PI) + log_w
            return math.exp(lp) * (lp - lq)

        points = [m for m in others if mu - 10 < m < mu + 10] + [mu]
        value, err = integrate.quad(integrand, mu - 10.0, mu + 10.0, epsabs=1e-10,
                                    epsrel=1e-10, limit=200, points=sorted(set(points)))
        return max(value, 0.0), err

    def to_config(self) -> dict:
        return {"kind": "gaussian", "means": [float(m) for m in self.means]}

    def permuted(self, perm) -> "GaussianLikelihood":
        return GaussianLikelihood(self.means[np.asarray(perm)])

    def __repr__(self):
        return f"GaussianLikelihood(means={self.means.tolist()})"


class FiniteLikelihood:
    """Likelihoods over a finite alphabet, one pmf row per hypothesis."""

    kind = "finite"

    def __init__(self, rows):
        rows = np.array(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 2:
            raise ModelError("finite likelihood needs an (H, S) table with H >= 2")
        for h, row in enumerate(rows):
            _check_pmf(row, f"likelihood row {h}")
        rows.setflags(write=False)
        self.rows = rows
        with np.errstate(divide="ignore"):
            self._log_rows = np.log(rows)

    @property
    def num_hypotheses(self) -> int:
        return self.rows.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.rows.shape[1]

    def log_likelihood(self, x) -> np.ndarray:
        idx = np.asarray(x).astype(np.int64)
        return np.moveaxis(self._log_rows[:, idx], 0, -1)

    def sample(self, truth: int, u) -> np.ndarray:
        cdf = np.cumsum(self.rows[truth])
        idx = np.searchsorted(cdf, u, side="right")
        last = np.flatnonzero(self.rows[truth] > 0)[-1]
        return np.minimum(idx, last).astype(float)

    def kl(self, a: int, b: int) -> float:
        return _kl_pmf(self.rows[a], self.rows[b])

    def kl_to_average(self, a: int, exclude: int) -> tuple[float, float]:
        mix = np.delete(self.rows, exclude, axis=0).mean(axis=0)
        return _kl_pmf(self.rows[a], mix), 0.0

    def to_config(self) -> dict:
        return {"kind": "finite", "rows": self.rows.tolist()}

    def permuted(self, perm) -> "FiniteLikelihood":
        return FiniteLikelihood(self.rows[np.asarray(perm)])

    def __repr__(self):
        return f"FiniteLikelihood(rows={self.rows.tolist()})"


def _kl_pmf(p: np.ndarray, q: np.ndarray) -> float:
    on = p > 0
    if np.any(q[on] == 0):
        raise InfiniteKLError("support of the first pmf is not contained in the second")
    return float(np.sum(p[on] * (np.log(p[on]) - np.log(q[on]))))


class LikelihoodModel:
    """Per-agent likelihood families sharing a hypothesis count."""

    def __init__(self, agents: Sequence[GaussianLikelihood | FiniteLikelihood]):
        agents = tuple(agents)
        if not agents:
            raise ModelError("need at least one agent")
        counts = {a.num_hypotheses for a in agents}
        if len(counts) != 1:
            raise ModelError(f"agents disagree on the number of hypotheses: {sorted(counts)}")
        self.agents = agents

    @classmethod
    def gaussian(cls, means) -> "LikelihoodModel":
        return cls([GaussianLikelihood(row) for row in means])

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def num_hypotheses(self) -> int:
        return self.agents[0].num_hypotheses

    def validate(self, truth: int) -> None:
        """Reject models with infinite KL from the true hypothesis."""
        for k, agent in enumerate(self.agents):
            for h in range(self.num_hypotheses):
                try:
                    agent.kl(truth, h)
                except InfiniteKLError as exc:
                    raise InfiniteKLError(f"agent {k}, hypothesis {h}: {exc}") from None

    def log_likelihoods(self, obs) -> np.ndarray:
        """Rows ``log L_k(obs_k | .)`` stacked to shape ``(..., K, H)``."""
        obs = np.asarray(obs)
        return np.stack([a.log_likelihood(obs[..., k]) for k, a in enumerate(self.agents)], axis=-2)

    def sample(self, truth: int, u) -> np.ndarray:
        """Observations from uniforms of shape ``(..., K)``."""
        u = np.asarray(u)
        return np.stack([a.sample(truth, u[..., k]) for k, a in enumerate(self.agents)], axis=-1)

    def kl_matrix(self, truth: int) -> np.ndarray:
        """``D[k, h] = KL(L_k(.|truth) || L_k(.|h))``."""
        return np.array([[a.kl(truth, h) for h in range(self.num_hypotheses)] for a in self.agents])

    def permuted(self, perm) -> "LikelihoodModel":
        return LikelihoodModel([a.permuted(perm) for a in self.agents])


def kl_divergence(model: LikelihoodModel, agent: int, a: int, b: int) -> float:
    return model.agents[agent].kl(a, b)


def average_likelihood(model: LikelihoodModel, agent: int, tau: int, x) -> float:
    """Mean of ``L_k(x | theta)`` over the hypotheses other than ``tau``."""
    lik = np.exp(model.agents[agent].log_likelihood(x))
    return float((lik.sum(axis=-1) - lik[..., tau]) / (lik.shape[-1] - 1))


@dataclass(frozen=True)
class Identifiability:
    theta: int
    identifiable: bool
    witnesses: tuple[int, ...]


def check_global_identifiability(model: LikelihoodModel, truth: int) -> list[Identifiability]:
    D = model.kl_matrix(truth)
    out = []
    for h in range(model.num_hypotheses):
        if h == truth:
            continue
        wit = tuple(int(k) for k in np.flatnonzero(D[:, h] > IDENTIFIABLE_TOL))
        out.append(Identifiability(h, bool(wit), wit))
    return out


def sample_observation(model: LikelihoodModel, agent: int, truth: int, seed: int,
                       time: int, run: int = 0) -> float:
    u = streams.uniform(seed, streams.OBSERVATION, agent, time, run)
    return float(model.agents[agent].sample(truth, u))


class TrendDistribution:
    """pmf over hypotheses for the shared trending hypothesis."""

    def __init__(self, probs):
        p = _check_pmf(probs, "trend distribution")
        p.setflags(write=False)
        self.probs = p
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        self._cdf = cdf
        self._last = int(np.flatnonzero(p > 0)[-1])

    @classmethod
    def delta(cls, num_hypotheses: int, theta: int) -> "TrendDistribution":
        p = np.zeros(num_hypotheses)
        p[theta] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, num_hypotheses: int, exclude: Sequence[int] = ()) -> "TrendDistribution":
        p = np.ones(num_hypotheses)
        p[list(exclude)] = 0.0
        return cls(p / p.sum())

    @property
    def num_hypotheses(self) -> int:
        return self.probs.size

    def sample(self, u) -> np.ndarray:
        """Inverse-CDF draw in index order; zero-mass hypotheses are never drawn."""
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, self._last)

    def permuted(self, perm) -> "TrendDistribution":
        return TrendDistribution(self.probs[np.asarray(perm)])

    def __repr__(self):
        return f"TrendDistribution({self.probs.tolist()})"


def sample_trend(pi: TrendDistribution, seed: int, time: int, run: int = 0) -> int:
    return int(pi.sample(streams.uniform(seed, streams.TREND, 0, time, run)))
