"""Wall-clock cost of one adaptation epoch as the spanning-vector count grows."""

import logging
import time
from typing import Callable, List, Optional

from pydantic import Field

from ..adaptation.baselines import finetune_bn_params
from ..adaptation.lccs import (
    collect_support_stats,
    extract_spanning_vectors,
    gradient_adapt,
    grid_init,
    install_spanning_vectors,
)
from ..models.base import BaseLCCSModel
from ..models.experiment import ExperimentConfig
from ..nn.network import Network
from ..utils.errors import ContractError
from .experiment import ExperimentRunner

logger = logging.getLogger(__name__)


class TimingRow(BaseLCCSModel):
    label: str = Field(description="lccs_gradient or finetune_bn")
    n: int = Field(ge=0, description="Requested spanning vectors (0 for BN finetuning)")
    n_effective: int = Field(ge=0, description="Largest per-layer n after rank truncation")
    epochs: int = Field(ge=1)
    repeats: int = Field(default=1, ge=1)
    secs_per_epoch: float = Field(ge=0.0, description="Fastest repeat, divided by epochs")


def _fastest(run: Callable[[], None], repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        run()
        best = min(best, time.perf_counter() - started)
    return best


def bench_time(config: ExperimentConfig, seed: Optional[int] = None, epochs: int = 2,
               repeats: int = 1) -> List[TimingRow]:
    """Time the LCCS gradient stage at n = 1 and n = k*K, plus a BN-parameter finetuning epoch.

    Each measurement starts from the same prepared model and keeps the
    fastest of ``repeats`` runs.
    """
    if epochs < 1:
        raise ContractError(f"timing needs at least one epoch, got {epochs}")
    if repeats < 1:
        raise ContractError(f"timing needs at least one repeat, got {repeats}")
    seed = config.seeds[0] if seed is None else seed
    cfg = config.adaptation
    runner = ExperimentRunner(config)
    data = runner.data(seed)
    source = runner.source_model(seed, data)
    support = runner.support(seed, data)

    rows: List[TimingRow] = []
    for n in sorted({1, cfg.k * support.num_classes}):
        prepared = source.copy()
        stats = collect_support_stats(
            prepared, support.x, max(cfg.m_epochs, 1), cfg.ema_momentum, cfg.batch_size, seed
        )
        grid_init(prepared, support.x, support.y, stats, cfg.grid_steps)
        if n > 1:
            install_spanning_vectors(prepared, extract_spanning_vectors(prepared, support.x, n))

        def run(model: Network = prepared) -> None:
            gradient_adapt(model.copy(), support.x, support.y, epochs, cfg.optimizer,
                           batch_size=cfg.batch_size, seed=seed)

        elapsed = _fastest(run, repeats)
        rows.append(TimingRow(
            label="lccs_gradient", n=n, n_effective=max(layer.lccs_state.n for layer in prepared.bn_layers),
            epochs=epochs, repeats=repeats, secs_per_epoch=elapsed / epochs,
        ))
        logger.info(f"LCCS gradient epoch at n={n}: {elapsed / epochs:.4f}s")

    elapsed = _fastest(
        lambda: finetune_bn_params(source, support.x, support.y, cfg.optimizer, epochs, cfg.batch_size, seed),
        repeats,
    )
    rows.append(TimingRow(
        label="finetune_bn", n=0, n_effective=0, epochs=epochs, repeats=repeats, secs_per_epoch=elapsed / epochs,
    ))
    return rows
