"""Equivalence maps between adapting BN parameters and adapting BN statistics.

A batch-norm layer computes f(Z) = (Z - mu) / sigma * gamma + beta. Any change
of (gamma, beta) can be absorbed into (mu, sigma) with the source affine
parameters kept, and vice versa.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from ..config.settings import get_settings
from ..nn.layers import nudge_zeros
from ..utils.errors import ContractError
from ..utils.seeding import make_rng

logger = logging.getLogger(__name__)


def _as_vector(values, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1 or array.size == 0:
        raise ContractError(f"{name} must be a nonempty 1-D array, got shape {array.shape}")
    return array


@dataclass
class BNConfig:
    """(mu, sigma, gamma, beta) of one batch-norm layer; gamma zeros are nudged."""
    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        self.mu = _as_vector(self.mu, "mu")
        self.sigma = _as_vector(self.sigma, "sigma")
        self.gamma = nudge_zeros(_as_vector(self.gamma, "gamma"), get_settings().gamma_nudge)
        self.beta = _as_vector(self.beta, "beta")
        if not (self.mu.shape == self.sigma.shape == self.gamma.shape == self.beta.shape):
            raise ContractError("mu, sigma, gamma and beta must have the same length")
        if np.any(self.sigma == 0):
            raise ContractError("sigma entries must be nonzero")

    @property
    def channels(self) -> int:
        return self.mu.shape[0]

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Batch-norm forward on (N, C, ...) input with these fixed statistics."""
        view = (1, -1) + (1,) * (z.ndim - 2)
        return (z - self.mu.reshape(view)) / self.sigma.reshape(view) * self.gamma.reshape(view) + self.beta.reshape(view)


def stats_from_params(target: BNConfig, gamma_s, beta_s) -> Tuple[np.ndarray, np.ndarray]:
    """Statistics that reproduce ``target`` while keeping the source affine (gamma_s, beta_s).

    sigma~ = sigma_t * gamma_s / gamma_t,  mu~ = mu_t - (beta_t - beta_s) * sigma_t / gamma_t
    """
    gamma_s = _as_vector(gamma_s, "gamma_s")
    beta_s = _as_vector(beta_s, "beta_s")
    if gamma_s.shape != target.gamma.shape or beta_s.shape != target.beta.shape:
        raise ContractError("source affine parameters do not match the target channel count")
    if np.any(np.abs(target.gamma) < get_settings().gamma_nudge):
        raise ContractError("target gamma has zero entries")
    sigma_tilde = target.sigma * gamma_s / target.gamma
    mu_tilde = target.mu - (target.beta - beta_s) * target.sigma / target.gamma
    return mu_tilde, sigma_tilde


def params_from_stats(mu, sigma, mu_tilde, sigma_tilde, gamma_tilde, beta_tilde) -> Tuple[np.ndarray, np.ndarray]:
    """Affine parameters that reproduce (mu~, sigma~, gamma~, beta~) under statistics (mu, sigma).

    gamma* = (sigma / sigma~) * gamma~,  beta* = ((mu - mu~) / sigma~) * gamma~ + beta~
    """
    mu, sigma = _as_vector(mu, "mu"), _as_vector(sigma, "sigma")
    mu_tilde, sigma_tilde = _as_vector(mu_tilde, "mu_tilde"), _as_vector(sigma_tilde, "sigma_tilde")
    gamma_tilde, beta_tilde = _as_vector(gamma_tilde, "gamma_tilde"), _as_vector(beta_tilde, "beta_tilde")
    if not (mu.shape == sigma.shape == mu_tilde.shape == sigma_tilde.shape == gamma_tilde.shape == beta_tilde.shape):
        raise ContractError("all arguments must have the same length")
    if np.any(sigma_tilde == 0):
        raise ContractError("sigma_tilde has zero entries")
    gamma_star = sigma / sigma_tilde * gamma_tilde
    beta_star = (mu - mu_tilde) / sigma_tilde * gamma_tilde + beta_tilde
    return gamma_star, beta_star


class EquivalenceReport(NamedTuple):
    passed: bool
    max_deviation: float


def verify_equivalence(cfg_a: BNConfig, cfg_b: BNConfig, trials: int = 1, tol: float = 1e-9,
                       seed: Optional[int] = None) -> EquivalenceReport:
    """Compare both configurations on seeded standard-normal inputs of shape (7, C, 3, 3)."""
    if cfg_a.channels != cfg_b.channels:
        raise ContractError(f"channel counts differ: {cfg_a.channels} vs {cfg_b.channels}")
    rng = make_rng(get_settings().default_seed if seed is None else seed, "equivalence")
    deviation = 0.0
    for _ in range(trials):
        z = rng.standard_normal((7, cfg_a.channels, 3, 3))
        deviation = max(deviation, float(np.max(np.abs(cfg_a.apply(z) - cfg_b.apply(z)))))
    logger.debug(f"Equivalence check over {trials} trials: max deviation {deviation:.3e}")
    return EquivalenceReport(passed=deviation <= tol, max_deviation=deviation)
