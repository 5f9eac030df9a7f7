"""End-to-end experiment orchestration: data, source model, adaptation, streamed evaluation."""

import contextlib
import logging
import time
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional

import numpy as np

from ..adaptation.baselines import AdaptStrategy
from ..adaptation.lccs import adapt_lccs
from ..config.settings import get_settings
from ..data.datasets import LabeledDataset, SupportSet
from ..data.sampling import StreamBatch, make_stream, policy_subset, sample_support
from ..data.synthetic import domain_pair, gen_dataset
from ..models.domain import StreamPolicy
from ..models.experiment import ExperimentConfig
from ..models.results import ResultRecord
from ..nn.network import Network, build_network
from ..nn.training import train_source
from ..utils.cache import ArtifactCache
from ..utils.errors import ContractError, ExperimentStageError
from ..utils.seeding import derive_seed
from .metrics import compute_metrics
from .report import emit_report

logger = logging.getLogger(__name__)

SUPPORT_STRATEGIES = ("lccs", "finetune_bn", "finetune_classifier", "ncc")


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise any failure inside the block tagged with the pipeline stage."""
    try:
        yield
    except ExperimentStageError:
        raise
    except Exception as e:
        logger.error(f"Stage {name!r} failed: {e}")
        raise ExperimentStageError(name, e) from e


@dataclass
class DomainData:
    source_train: LabeledDataset
    source_test: LabeledDataset
    target_pool: LabeledDataset
    target_test: LabeledDataset


@dataclass
class AdaptedModel:
    """Outcome of the adapt stage; online strategies keep adapting while evaluated."""
    strategy: str
    model: Network
    k: int = 0
    n: int = 0
    secs: float = 0.0
    baseline: Optional[AdaptStrategy] = None

    @property
    def online(self) -> bool:
        return self.baseline is not None and self.baseline.online


@dataclass
class StreamOutcome:
    policy: StreamPolicy
    predictions: np.ndarray
    logits: np.ndarray
    labels: np.ndarray
    indices: np.ndarray
    secs: float


class ExperimentRunner:
    """Runs one ExperimentConfig across its seeds, memoizing data and source models."""

    def __init__(self, config: ExperimentConfig, cache: Optional[ArtifactCache] = None):
        self.config = config
        self.settings = get_settings()
        self.cache = cache or ArtifactCache(max_size=self.settings.cache_max_size)
        if not self.settings.cache_enabled:
            self.cache.disable()
        self.config_digest = config.digest()

    # ------------------------------------------------------------- artifacts

    def data(self, seed: int) -> DomainData:
        cfg = self.config.data
        key = self.cache.create_key("data", cfg.digest(), seed)

        def build() -> DomainData:
            source_spec, target_spec = domain_pair(cfg.preset, cfg.num_classes, cfg.structure_seed)
            return DomainData(
                source_train=gen_dataset(source_spec, cfg.source_train_size, derive_seed(seed, "source-train")),
                source_test=gen_dataset(source_spec, cfg.source_test_size, derive_seed(seed, "source-test")),
                target_pool=gen_dataset(target_spec, cfg.target_pool_size, derive_seed(seed, "target-pool")),
                target_test=gen_dataset(target_spec, cfg.target_test_size, derive_seed(seed, "target-test")),
            )

        with stage("generate"):
            return self.cache.get_or_create(key, build)

    def source_model(self, seed: int, data: DomainData) -> Network:
        """Trained source model; callers receive their own copy."""
        cfg = self.config.training
        key = self.cache.create_key("source", self.config.data.digest(), cfg.digest(), seed)

        def build() -> Network:
            initial = build_network(cfg.architecture, seed=derive_seed(seed, "init"))
            return train_source(
                initial, data.source_train, cfg.epochs, cfg.optimizer, derive_seed(seed, "train"),
                batch_size=cfg.batch_size, augment_noise=cfg.augment_noise,
            )

        with stage("train"):
            return self.cache.get_or_create(key, build, copy_out=True)

    def support(self, seed: int, data: DomainData) -> SupportSet:
        with stage("support"):
            return sample_support(data.target_pool, self.config.adaptation.k, derive_seed(seed, "support"))

    # ------------------------------------------------------------- stages

    def adapt(self, seed: int, source: Network, data: DomainData) -> AdaptedModel:
        cfg = self.config.adaptation
        strategy = cfg.strategy
        adapt_seed = derive_seed(seed, "adapt")
        support = self.support(seed, data) if strategy in SUPPORT_STRATEGIES or (
            strategy == "adabn" and cfg.adabn_data == "support"
        ) else None

        started = time.perf_counter()
        with stage("adapt"):
            if strategy == "none":
                adapted = AdaptedModel(strategy, source)
            elif strategy == "lccs":
                result = adapt_lccs(source, support, cfg, adapt_seed)
                adapted = AdaptedModel(strategy, result.model, k=cfg.k, n=result.record.n_requested)
            else:
                baseline = AdaptStrategy.from_config(cfg)
                if support is not None:
                    model = baseline.adapt(source, support.x, support.y, adapt_seed)
                else:
                    model = baseline.adapt(source, data.target_pool.x, seed=adapt_seed)
                adapted = AdaptedModel(strategy, model, k=cfg.k if support is not None else 0, baseline=baseline)
        adapted.secs = time.perf_counter() - started
        return adapted

    def evaluate(self, adapted: AdaptedModel, target: LabeledDataset, policy: StreamPolicy) -> StreamOutcome:
        started = time.perf_counter()
        with stage("evaluate"):
            batches = make_stream(policy_subset(target, policy), policy)
            if adapted.online:
                logits = adapted.baseline.evaluate(adapted.model, batches).logits
            else:
                logits = self._offline_logits(adapted.model, batches)
        return StreamOutcome(
            policy=policy,
            predictions=np.argmax(logits, axis=1),
            logits=logits,
            labels=np.concatenate([batch.y for batch in batches]),
            indices=np.concatenate([batch.indices for batch in batches]),
            secs=time.perf_counter() - started,
        )

    @staticmethod
    def _offline_logits(model: Network, batches: List[StreamBatch]) -> np.ndarray:
        return np.concatenate([model.logits(batch.x) for batch in batches], axis=0)

    @staticmethod
    def check_stream_invariance(strategy: str, outcomes: List[StreamOutcome]) -> None:
        """Every sample must get bit-identical logits under every stream policy it appears in."""
        reference: Dict[int, np.ndarray] = {}
        for outcome in outcomes:
            for index, row in zip(outcome.indices, outcome.logits):
                seen = reference.setdefault(int(index), row)
                if not np.array_equal(seen, row):
                    raise ContractError(
                        f"{strategy}: logits of sample {int(index)} changed under stream policy "
                        f"batch={outcome.policy.batch_size}, order={outcome.policy.order_label}, "
                        f"alpha={outcome.policy.imbalance_alpha}"
                    )
        logger.debug(f"{strategy}: {len(reference)} samples stream-invariant across {len(outcomes)} policies")

    # ------------------------------------------------------------- driver

    def run_seed(self, seed: int) -> List[ResultRecord]:
        data = self.data(seed)
        source = self.source_model(seed, data)
        adapted = self.adapt(seed, source, data)
        outcomes = [self.evaluate(adapted, data.target_test, policy) for policy in self.config.streams]
        if self.config.checks_invariance:
            with stage("evaluate"):
                self.check_stream_invariance(adapted.strategy, outcomes)

        records = []
        with stage("report"):
            for outcome in outcomes:
                for metric in self.config.metrics:
                    records.append(ResultRecord(
                        strategy=adapted.strategy,
                        k=adapted.k,
                        n=adapted.n,
                        stream_batch=outcome.policy.batch_size,
                        stream_order=outcome.policy.order_label,
                        alpha=outcome.policy.imbalance_alpha,
                        metric=metric,
                        value=compute_metrics(outcome.predictions, outcome.labels, metric),
                        seed=seed,
                        secs=adapted.secs + outcome.secs,
                        config_digest=self.config_digest,
                    ))
        logger.info(
            f"Seed {seed} ({adapted.strategy}): "
            + ", ".join(f"{record.metric}={record.value:.3f}" for record in records[:len(self.config.metrics)])
        )
        return records

    def run(self) -> List[ResultRecord]:
        records: List[ResultRecord] = []
        for seed in self.config.seeds:
            records.extend(self.run_seed(seed))
        if self.config.report_path is not None:
            with stage("report"):
                emit_report(records, self.config.report_path, self.config.report_format)
        logger.info(f"Experiment {self.config.name!r} produced {len(records)} records")
        return records


def run_experiment(config: ExperimentConfig, cache: Optional[ArtifactCache] = None) -> List[ResultRecord]:
    """Run every seed of config and return per-seed, per-policy, per-metric records."""
    return ExperimentRunner(config, cache).run()
