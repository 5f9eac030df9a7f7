"""Few-shot adaptation of batch-norm statistics by linear combination coefficients.

Each BN layer's statistics become mu = M @ eta and sigma = max(S @ rho, floor),
where the first column of M (resp. S) is the source statistic and the
remaining columns are spanning vectors derived from the support set.
Adaptation runs in two stages: a tied grid search over the source/support
mixing weight, then gradient descent on the untied coefficients.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..autograd import ops
from ..autograd.linalg import svd_thin
from ..autograd.losses import cross_entropy, log_softmax, per_sample_entropy
from ..autograd.tensor import Parameter, Tensor, backward, no_grad
from ..config.settings import get_settings
from ..data.datasets import SupportSet, epoch_batches
from ..models.checkpoint import LCCSLayerEntry, LCCSRecordEntry
from ..models.experiment import AdaptationConfig
from ..models.optimizer import OptimizerConfig
from ..nn.checkpoint import array_entry
from ..nn.layers import ema_update
from ..nn.network import Network
from ..nn.optim import build_optimizer
from ..nn.training import jitter
from ..utils.errors import ContractError
from ..utils.seeding import make_rng
from .heads import build_ncc_head, finetune_classifier

logger = logging.getLogger(__name__)

# Losses closer than this (relative) count as a tie in the grid search.
GRID_TIE_TOLERANCE = 1e-12
# Residual singular values below this fraction of ||Z||_F are treated as zero.
RANK_TOLERANCE = 1e-10

LayerStats = Tuple[np.ndarray, np.ndarray]


def project_to_simplex(values: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum(w) = 1}."""
    values = np.asarray(values, dtype=np.float64)
    ordered = np.sort(values)[::-1]
    cumulative = np.cumsum(ordered) - 1.0
    ranks = np.arange(1, len(values) + 1)
    active = ordered - cumulative / ranks > 0
    pivot = ranks[active][-1]
    threshold = cumulative[active][-1] / pivot
    return np.maximum(values - threshold, 0.0)


class LCCSLayerState:
    """Spanning matrices and learnable coefficients of one BN layer."""

    def __init__(self, mu_basis: np.ndarray, sigma_basis: np.ndarray, eta, rho,
                 sigma_floor: Optional[float] = None):
        mu_basis = np.asarray(mu_basis, dtype=np.float64)
        sigma_basis = np.asarray(sigma_basis, dtype=np.float64)
        if mu_basis.ndim != 2 or mu_basis.shape != sigma_basis.shape or mu_basis.shape[1] < 2:
            raise ContractError(
                f"spanning matrices must share a (C, n + 1) shape with n >= 1, got {mu_basis.shape} and {sigma_basis.shape}"
            )
        self.mu_basis = mu_basis.copy()
        self.sigma_basis = sigma_basis.copy()
        self.eta = Parameter(np.asarray(eta, dtype=np.float64), grad_enabled=False)
        self.rho = Parameter(np.asarray(rho, dtype=np.float64), grad_enabled=False)
        if self.eta.shape != (self.n + 1,) or self.rho.shape != (self.n + 1,):
            raise ContractError(f"eta and rho need {self.n + 1} entries")
        self.sigma_floor = get_settings().sigma_floor if sigma_floor is None else float(sigma_floor)

    @classmethod
    def from_support(cls, mu_s, sigma_s, mu_spt, sigma_spt, v: float = 0.0,
                     sigma_floor: Optional[float] = None) -> "LCCSLayerState":
        """n = 1 state mixing source and support statistics as (1 - v, v)."""
        return cls(
            np.column_stack([mu_s, mu_spt]), np.column_stack([sigma_s, sigma_spt]),
            eta=[1.0 - v, v], rho=[1.0 - v, v], sigma_floor=sigma_floor,
        )

    @classmethod
    def unconstrained(cls, mu_s, sigma_s, sigma_floor: Optional[float] = None) -> "LCCSLayerState":
        """Standard-basis spanning vectors (n = C): any statistic is reachable."""
        mu_s = np.asarray(mu_s, dtype=np.float64)
        channels = mu_s.shape[0]
        identity = np.eye(channels)
        coefficients = np.concatenate([[1.0], np.zeros(channels)])
        return cls(
            np.column_stack([mu_s, identity]), np.column_stack([sigma_s, identity]),
            eta=coefficients, rho=coefficients.copy(), sigma_floor=sigma_floor,
        )

    @property
    def n(self) -> int:
        return self.mu_basis.shape[1] - 1

    @property
    def channels(self) -> int:
        return self.mu_basis.shape[0]

    @property
    def num_params(self) -> int:
        return 2 * (self.n + 1)

    def parameters(self) -> List[Parameter]:
        return [self.eta, self.rho]

    def with_spanning(self, extra_mu: np.ndarray, extra_sigma: np.ndarray) -> "LCCSLayerState":
        """New state with extra spanning columns whose coefficients start at zero."""
        extra = extra_mu.shape[1]
        return LCCSLayerState(
            np.column_stack([self.mu_basis, extra_mu]), np.column_stack([self.sigma_basis, extra_sigma]),
            eta=np.concatenate([self.eta.data, np.zeros(extra)]),
            rho=np.concatenate([self.rho.data, np.zeros(extra)]),
            sigma_floor=self.sigma_floor,
        )

    def statistics(self) -> Tuple[Tensor, Tensor]:
        """(M @ eta, max(S @ rho, sigma_floor)), differentiable in eta and rho."""
        column = (self.n + 1, 1)
        mu = ops.reshape(ops.matmul(Tensor(self.mu_basis), ops.reshape(self.eta, column)), (self.channels,))
        sigma = ops.reshape(ops.matmul(Tensor(self.sigma_basis), ops.reshape(self.rho, column)), (self.channels,))
        return mu, ops.maximum(sigma, self.sigma_floor)

    def project_to_simplex(self) -> None:
        self.eta.assign(project_to_simplex(self.eta.data))
        self.rho.assign(project_to_simplex(self.rho.data))

    def to_entry(self) -> LCCSLayerEntry:
        return LCCSLayerEntry(
            n=self.n, eta=self.eta.data.tolist(), rho=self.rho.data.tolist(),
            spanning_mu=array_entry("spanning_mu", self.mu_basis),
            spanning_sigma=array_entry("spanning_sigma", self.sigma_basis),
        )


def lccs_stats(state: LCCSLayerState) -> Tuple[np.ndarray, np.ndarray]:
    """Synthesized (mu, sigma) of a layer state as plain arrays."""
    with no_grad():
        mu, sigma = state.statistics()
    return mu.numpy(), sigma.numpy()


def collect_support_stats(
    model: Network,
    x: np.ndarray,
    m_epochs: int = 10,
    ema_momentum: float = 0.1,
    batch_size: int = 32,
    seed: int = 0,
) -> List[LayerStats]:
    """Per-layer support statistics accumulated by EMA over m epochs of batch statistics.

    Batches are normalized by their own statistics; the model passed in is
    not modified. The average starts from the first batch's statistics.
    """
    if len(x) == 0:
        raise ContractError("support set is empty", stage="adapt")
    if not model.bn_layers:
        raise ContractError("model has no batch-norm layers", stage="adapt")
    if m_epochs < 1:
        raise ContractError(f"m_epochs must be >= 1, got {m_epochs}", stage="adapt")

    work = model.copy()
    work.set_bn_mode("testtime_bn")
    stats: List[Optional[LayerStats]] = [None] * len(work.bn_layers)
    with no_grad():
        for epoch in range(m_epochs):
            for positions in epoch_batches(len(x), batch_size, seed, "support-stats", epoch):
                work.forward(x[positions])
                for index, layer in enumerate(work.bn_layers):
                    batch_mu, batch_sigma = layer.last_batch_stats
                    if stats[index] is None:
                        stats[index] = (batch_mu.copy(), batch_sigma.copy())
                    else:
                        old_mu, old_sigma = stats[index]
                        stats[index] = (
                            ema_update(old_mu, batch_mu, ema_momentum),
                            ema_update(old_sigma, batch_sigma, ema_momentum),
                        )
    logger.debug(f"Collected support statistics over {m_epochs} epochs for {len(stats)} layers")
    return stats


def attach_states(model: Network, states: Sequence[LCCSLayerState]) -> None:
    """Install layer states and switch every BN layer to lccs mode."""
    layers = model.bn_layers
    if len(states) != len(layers):
        raise ContractError(f"{len(states)} LCCS states for {len(layers)} BN layers")
    for layer, state in zip(layers, states):
        if state.channels != layer.channels:
            raise ContractError(f"{layer.name}: state has {state.channels} channels, layer has {layer.channels}")
        layer.lccs_state = state
        layer.set_mode("lccs")


def support_objective(model: Network, x: np.ndarray, y: np.ndarray, objective: str = "cross_entropy") -> float:
    """Mean support cross-entropy, or mean prediction entropy, without a tape."""
    logits = model.logits(x)
    if objective == "cross_entropy":
        return float(-log_softmax(logits)[np.arange(len(y)), y].mean())
    if objective == "entropy":
        return float(per_sample_entropy(logits).mean())
    raise ContractError(f"unknown grid objective {objective!r}")


def grid_values(steps: int) -> List[float]:
    """{0, 1/(steps-1), ..., 1}; each value is a single correctly rounded division."""
    if steps < 2:
        raise ContractError(f"grid needs at least 2 points, got {steps}")
    return [i / (steps - 1) for i in range(steps)]


@dataclass
class GridSearchResult:
    grid: List[float]
    layer_v: List[float]
    losses: List[List[float]] = field(default_factory=list)
    tied: bool = True

    @property
    def v_star(self) -> Optional[float]:
        return self.layer_v[0] if self.tied and self.layer_v else None


def _best(grid: Sequence[float], losses: Sequence[float]) -> float:
    best_v, best_loss = grid[0], losses[0]
    for v, loss in zip(grid[1:], losses[1:]):
        if loss < best_loss - GRID_TIE_TOLERANCE * max(1.0, abs(best_loss)):
            best_v, best_loss = v, loss
    return best_v


def grid_init(
    model: Network,
    x: np.ndarray,
    y: np.ndarray,
    support_stats: Sequence[LayerStats],
    grid_steps: int = 11,
    objective: str = "cross_entropy",
    greedy: bool = False,
) -> GridSearchResult:
    """Choose the source/support mixing weight v by one-dimensional grid search.

    Tied: one v for every layer. Greedy: layers are set one after another,
    later layers held at v = 0 while an earlier one is searched. Ties go to
    the smaller v. The chosen states are installed on ``model``.
    """
    grid = grid_values(grid_steps)
    layers = model.bn_layers
    if len(support_stats) != len(layers):
        raise ContractError(f"{len(support_stats)} support statistics for {len(layers)} BN layers")

    def states_for(values: Sequence[float]) -> List[LCCSLayerState]:
        return [
            LCCSLayerState.from_support(layer.mu, layer.sigma, mu_spt, sigma_spt, v)
            for layer, (mu_spt, sigma_spt), v in zip(layers, support_stats, values)
        ]

    def score(values: Sequence[float]) -> float:
        attach_states(model, states_for(values))
        return support_objective(model, x, y, objective)

    if not greedy:
        losses = [score([v] * len(layers)) for v in grid]
        chosen = [_best(grid, losses)] * len(layers)
        all_losses = [losses]
    else:
        chosen = [0.0] * len(layers)
        all_losses = []
        for index in range(len(layers)):
            losses = []
            for v in grid:
                trial = list(chosen)
                trial[index] = v
                losses.append(score(trial))
            chosen[index] = _best(grid, losses)
            all_losses.append(losses)

    attach_states(model, states_for(chosen))
    result = GridSearchResult(grid=grid, layer_v=chosen, losses=all_losses, tied=not greedy)
    logger.info(f"Grid search ({'greedy' if greedy else 'tied'}, {objective}) chose v = {chosen}")
    return result


@dataclass
class SpanningVectors:
    """Support spanning vectors of one layer: column 0 is the support statistic."""
    mu_vectors: np.ndarray
    sigma_vectors: np.ndarray
    singular_values: np.ndarray

    @property
    def n(self) -> int:
        return self.mu_vectors.shape[1]


def _project_out(matrix: np.ndarray, direction: np.ndarray) -> np.ndarray:
    norm_sq = float(direction @ direction)
    if norm_sq == 0.0:
        return matrix.copy()
    return matrix - np.outer(direction, direction @ matrix) / norm_sq


def _residual_directions(matrix: np.ndarray, direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """U diag(S) of the residual after removing ``direction``, restricted to its numerical rank."""
    residual = _project_out(matrix, direction)
    scale = float(np.linalg.norm(matrix))
    if scale == 0.0:
        return np.zeros((matrix.shape[0], 0)), np.zeros(0)
    result = svd_thin(residual)
    rank = int(np.sum(result.s > RANK_TOLERANCE * scale))
    return result.u[:, :rank] * result.s[:rank], result.s[:rank]


def _explained_count(singular_values: np.ndarray, threshold: float) -> int:
    energy = singular_values ** 2
    if energy.sum() == 0.0:
        return 0
    cumulative = np.cumsum(energy) / energy.sum()
    return int(np.searchsorted(cumulative, threshold - 1e-12) + 1)


def per_sample_statistics(z: np.ndarray, epsilon: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample channel means and standard deviations over spatial positions, as (C, N)."""
    means = z.mean(axis=(2, 3))
    stds = np.sqrt(z.var(axis=(2, 3)) + epsilon)
    return means.T, stds.T


def extract_spanning_vectors(
    model: Network,
    x: np.ndarray,
    n: int,
    policy: str = "fixed",
    explained_variance: float = 0.9,
) -> List[SpanningVectors]:
    """Support spanning vectors for every BN layer of a model in lccs mode.

    One pass of the support set under the initialized statistics yields the
    per-sample channel statistics Z at each layer. The support statistic is
    projected out of Z and the top singular directions of the residual,
    scaled by their singular values, follow it as extra spanning vectors.
    Requests beyond the residual's rank are truncated. Rank-2 layers keep
    only the support statistic.
    """
    if n < 1:
        raise ContractError(f"spanning-vector count must be >= 1, got {n}")
    if policy not in ("fixed", "explained_variance"):
        raise ContractError(f"unknown n policy {policy!r}")
    layers = model.bn_layers
    if any(layer.lccs_state is None for layer in layers):
        raise ContractError("every BN layer needs an initialized LCCS state")

    for layer in layers:
        layer.captured = []
        layer.capture = True
    try:
        model.logits(x)
    finally:
        for layer in layers:
            layer.capture = False

    spanning: List[SpanningVectors] = []
    for layer in layers:
        z = np.concatenate(layer.captured, axis=0)
        layer.captured = []
        mu_spt = layer.lccs_state.mu_basis[:, 1]
        sigma_spt = layer.lccs_state.sigma_basis[:, 1]
        if z.ndim == 2 or n == 1:
            spanning.append(SpanningVectors(mu_spt[:, None].copy(), sigma_spt[:, None].copy(), np.zeros(0)))
            continue

        z_mu, z_sigma = per_sample_statistics(z, layer.epsilon)
        mu_dirs, mu_singular = _residual_directions(z_mu, mu_spt)
        sigma_dirs, _ = _residual_directions(z_sigma, sigma_spt)
        wanted = n - 1
        if policy == "explained_variance":
            wanted = min(wanted, _explained_count(mu_singular, explained_variance))
        available = min(wanted, mu_dirs.shape[1], sigma_dirs.shape[1])
        if available < wanted:
            logger.warning(f"{layer.name}: residual rank allows {available + 1} spanning vectors, {wanted + 1} requested")
        spanning.append(SpanningVectors(
            np.column_stack([mu_spt, mu_dirs[:, :available]]),
            np.column_stack([sigma_spt, sigma_dirs[:, :available]]),
            mu_singular,
        ))
    logger.info(f"Spanning vectors per layer: {[vectors.n for vectors in spanning]}")
    return spanning


def install_spanning_vectors(model: Network, spanning: Sequence[SpanningVectors]) -> None:
    """Extend each layer state with the extra spanning columns (coefficients zero)."""
    states = []
    for layer, vectors in zip(model.bn_layers, spanning):
        state = layer.lccs_state
        states.append(state.with_spanning(vectors.mu_vectors[:, 1:], vectors.sigma_vectors[:, 1:]))
    attach_states(model, states)


def lccs_parameters(model: Network) -> List[Parameter]:
    return [param for layer in model.bn_layers for param in layer.lccs_state.parameters()]


def gradient_adapt(
    model: Network,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int,
    optimizer_cfg: OptimizerConfig,
    convex: bool = False,
    batch_size: int = 32,
    augment_noise: float = 0.0,
    seed: int = 0,
) -> List[float]:
    """Minimize support cross-entropy over every layer's (eta, rho); nothing else moves.

    Coefficients are untied across layers. With ``convex`` they are projected
    onto the simplex after each step. Returns the full-support loss before
    training and after each epoch.
    """
    if epochs < 0:
        raise ContractError(f"epochs must be >= 0, got {epochs}", stage="adapt")
    if any(layer.lccs_state is None or layer.mode != "lccs" for layer in model.bn_layers):
        raise ContractError("gradient stage needs every BN layer in lccs mode")

    y = np.asarray(y, dtype=np.int64)
    trace = [support_objective(model, x, y)]
    if epochs == 0:
        return trace

    model.set_trainable([])
    params = lccs_parameters(model)
    for param in params:
        param.grad_enabled = True
    optimizer = build_optimizer(optimizer_cfg, params)
    noise_rng = make_rng(seed, "lccs-augment")
    try:
        for epoch in range(epochs):
            for positions in epoch_batches(len(y), batch_size, seed, "lccs-gradient", epoch):
                loss = cross_entropy(model.forward(jitter(x[positions], augment_noise, noise_rng)), y[positions])
                optimizer.zero_grad()
                backward(loss)
                optimizer.step()
                if convex:
                    for layer in model.bn_layers:
                        layer.lccs_state.project_to_simplex()
            trace.append(support_objective(model, x, y))
            logger.debug(f"LCCS epoch {epoch + 1}/{epochs}: support loss {trace[-1]:.6f}")
    finally:
        for param in params:
            param.grad_enabled = False
            param.zero_grad()
    logger.info(f"Gradient stage: support loss {trace[0]:.4f} -> {trace[-1]:.4f} over {epochs} epochs")
    return trace


def freeze(model: Network) -> Network:
    """Copy of model with each layer's synthesized statistics baked in as eval statistics."""
    frozen = model.copy()
    for layer in frozen.bn_layers:
        if layer.lccs_state is None:
            continue
        mu, sigma = lccs_stats(layer.lccs_state)
        layer.set_statistics(mu, sigma)
        layer.lccs_state = None
        layer.set_mode("eval")
    return frozen


def resolve_n(cfg: AdaptationConfig, k: int, num_classes: int) -> int:
    """Requested spanning-vector count: explicit n, else k*K for k >= 5 and 1 below.

    The explained-variance policy requests k*K, the support size, and lets
    each layer keep fewer.
    """
    if cfg.n is not None:
        return cfg.n
    if cfg.n_policy == "explained_variance":
        return k * num_classes
    return k * num_classes if k >= 5 else 1


def resolve_classifier(cfg: AdaptationConfig, k: int) -> str:
    if cfg.classifier != "auto":
        return cfg.classifier
    return "ncc" if k >= 5 else "source"


@dataclass
class LCCSResult:
    model: Network
    record: LCCSRecordEntry
    grid: Optional[GridSearchResult]
    loss_trace: List[float]
    layer_n: List[int]


def adapt_lccs(source: Network, support: SupportSet, cfg: AdaptationConfig, seed: int = 0) -> LCCSResult:
    """Full LCCS adaptation of a copy of ``source``: stats, grid, spanning vectors, gradient, freeze, head."""
    model = source.copy()
    model.set_bn_mode("eval")
    stats = collect_support_stats(model, support.x, max(cfg.m_epochs, 1), cfg.ema_momentum, cfg.batch_size, seed)

    grid: Optional[GridSearchResult] = None
    if cfg.init_stage:
        grid = grid_init(model, support.x, support.y, stats, cfg.grid_steps, cfg.grid_objective, cfg.greedy_init)
    else:
        attach_states(model, [
            LCCSLayerState.from_support(layer.mu, layer.sigma, mu_spt, sigma_spt, 0.0)
            for layer, (mu_spt, sigma_spt) in zip(model.bn_layers, stats)
        ])

    n_requested = resolve_n(cfg, support.k, support.num_classes)
    policy = "explained_variance" if cfg.n is None and cfg.n_policy == "explained_variance" else "fixed"
    if n_requested > 1:
        spanning = extract_spanning_vectors(model, support.x, n_requested, policy, cfg.explained_variance)
        install_spanning_vectors(model, spanning)

    trace: List[float] = []
    if cfg.gradient_stage:
        trace = gradient_adapt(
            model, support.x, support.y, cfg.m_epochs, cfg.optimizer, cfg.convex,
            cfg.batch_size, cfg.augment_noise, seed,
        )

    layer_n = [layer.lccs_state.n for layer in model.bn_layers]
    record = LCCSRecordEntry(
        n_requested=n_requested,
        v_star=grid.v_star if grid else 0.0,
        layer_v=grid.layer_v if grid else [0.0] * len(layer_n),
        grid_objective=cfg.grid_objective,
        layers=[layer.lccs_state.to_entry() for layer in model.bn_layers],
    )
    adapted = freeze(model)

    classifier = resolve_classifier(cfg, support.k)
    if classifier == "ncc":
        adapted = build_ncc_head(adapted, support.x, support.y)
    elif classifier == "finetuned":
        adapted, _ = finetune_classifier(
            adapted, support.x, support.y, cfg.optimizer, cfg.finetune_epochs, cfg.batch_size, seed
        )
    adapted.lccs_record = record
    logger.info(f"LCCS adaptation done: n per layer {layer_n}, classifier {classifier}")
    return LCCSResult(model=adapted, record=record, grid=grid, loss_trace=trace, layer_n=layer_n)
