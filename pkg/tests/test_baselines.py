"""Tests for the comparison strategies."""

import numpy as np
import pytest

from src.lccs_adapt.adaptation import baselines
from src.lccs_adapt.adaptation.baselines import AdaptStrategy, adabn_adapt, finetune_bn_params, tent_eval
from src.lccs_adapt.adaptation.heads import build_ncc_head, finetune_classifier, support_features
from src.lccs_adapt.adaptation.lccs import LCCSLayerState, adapt_lccs, attach_states, collect_support_stats
from src.lccs_adapt.data.sampling import make_stream, sample_support
from src.lccs_adapt.data.synthetic import domain_pair, gen_dataset
from src.lccs_adapt.harness.experiment import ExperimentRunner
from src.lccs_adapt.models.architecture import ArchitectureSpec
from src.lccs_adapt.models.domain import StreamPolicy
from src.lccs_adapt.models.experiment import AdaptationConfig, DataConfig, ExperimentConfig
from src.lccs_adapt.models.optimizer import OptimizerConfig
from src.lccs_adapt.nn.network import CentroidHead, build_network, count_bn_affine_params, count_lccs_params
from src.lccs_adapt.utils.errors import ContractError, DegenerateVarianceError


class TestAdaBN:
    """Test statistic replacement from unlabeled target data."""

    def test_matches_lccs_with_support_statistics(self, conv_model, support, target_data):
        """AdaBN is LCCS with eta = rho = [0, 1] and no gradient stage."""
        adapted = adabn_adapt(conv_model, support.x)

        stats = collect_support_stats(conv_model, support.x)
        lccs = conv_model.copy()
        attach_states(lccs, [
            LCCSLayerState.from_support(layer.mu, layer.sigma, mu_spt, sigma_spt, v=1.0)
            for layer, (mu_spt, sigma_spt) in zip(lccs.bn_layers, stats)
        ])
        np.testing.assert_allclose(adapted.logits(target_data.x), lccs.logits(target_data.x), atol=1e-10)

    def test_first_layer_is_centered(self, conv_model, domains):
        data = gen_dataset(domains[1], 256, seed=5)
        adapted = adabn_adapt(conv_model, data.x, m_epochs=10, batch_size=128)
        layer = adapted.bn_layers[0]
        z = adapted.layers[0](adapted.prepare_input(data.x)).data
        normalized = (z - layer.mu.reshape(1, -1, 1, 1)) / layer.sigma.reshape(1, -1, 1, 1)
        assert np.all(np.abs(normalized.mean(axis=(0, 2, 3))) < 0.1)

    def test_source_untouched(self, conv_model, support):
        mu_before = conv_model.bn_layers[1].mu.copy()
        adabn_adapt(conv_model, support.x)
        np.testing.assert_array_equal(conv_model.bn_layers[1].mu, mu_before)


class TestTestTimeBN:
    """Test per-batch normalization on the evaluation stream."""

    def test_stored_statistics_untouched(self, conv_model, target_data):
        batches = make_stream(target_data, StreamPolicy(batch_size=16))
        mu_before = [layer.mu.copy() for layer in conv_model.bn_layers]
        result = baselines.testtime_bn_eval(conv_model, batches)
        for before, layer in zip(mu_before, conv_model.bn_layers):
            np.testing.assert_array_equal(before, layer.mu)
        assert len(result.predictions) == len(target_data)
        assert sorted(result.indices.tolist()) == list(range(len(target_data)))

    def test_predictions_depend_on_batch(self, conv_model, target_data):
        small = baselines.testtime_bn_eval(conv_model, make_stream(target_data, StreamPolicy(batch_size=4)))
        large = baselines.testtime_bn_eval(conv_model, make_stream(target_data, StreamPolicy(batch_size=60)))
        order = np.argsort(small.indices)
        other = np.argsort(large.indices)
        assert not np.array_equal(small.logits[order], large.logits[other])

    def test_single_rank2_sample_batch(self, mlp_model, target_data):
        with pytest.raises(DegenerateVarianceError):
            baselines.testtime_bn_eval(mlp_model, make_stream(target_data, StreamPolicy(batch_size=1)))


class TestTent:
    """Test online entropy minimization."""

    def test_zero_learning_rate_equals_testtime_bn(self, conv_model, target_data):
        batches = make_stream(target_data, StreamPolicy(batch_size=8))
        tent = tent_eval(conv_model, batches, OptimizerConfig(lr=0.0))
        reference = baselines.testtime_bn_eval(conv_model, batches)
        np.testing.assert_array_equal(tent.logits, reference.logits)

    def test_updates_persist_across_batches(self, conv_model, target_data):
        batches = make_stream(target_data, StreamPolicy(batch_size=8))
        tent = tent_eval(conv_model, batches, OptimizerConfig(lr=0.01))
        reference = baselines.testtime_bn_eval(conv_model, batches)
        first = len(batches[0].y)
        np.testing.assert_array_equal(tent.logits[:first], reference.logits[:first])
        assert not np.array_equal(tent.logits[first:], reference.logits[first:])
        assert len(tent.batch_entropy) == len(batches)

    def test_source_untouched(self, conv_model, target_data):
        gamma_before = conv_model.bn_layers[0].gamma.data.copy()
        tent_eval(conv_model, make_stream(target_data, StreamPolicy(batch_size=8)), OptimizerConfig(lr=0.01))
        np.testing.assert_array_equal(conv_model.bn_layers[0].gamma.data, gamma_before)


class TestFinetuneBN:
    """Test supervised BN-affine finetuning."""

    def test_zero_epochs(self, conv_model, support, target_data):
        adapted, trace = finetune_bn_params(conv_model, support.x, support.y, OptimizerConfig(), epochs=0)
        assert len(trace) == 1
        np.testing.assert_array_equal(adapted.logits(target_data.x), conv_model.logits(target_data.x))

    def test_reduces_support_loss_with_fixed_statistics(self, conv_model, support):
        adapted, trace = finetune_bn_params(conv_model, support.x, support.y, OptimizerConfig(lr=0.001), epochs=5)
        assert trace[-1] < trace[0]
        for before, after in zip(conv_model.bn_layers, adapted.bn_layers):
            np.testing.assert_array_equal(before.mu, after.mu)
            np.testing.assert_array_equal(before.sigma, after.sigma)
        np.testing.assert_array_equal(conv_model.layers[0].kernels.data, adapted.layers[0].kernels.data)

    def test_trains_more_parameters_than_lccs(self, conv_model):
        assert count_bn_affine_params(conv_model) > count_lccs_params(conv_model, 1)

    def test_rejects_negative_epochs(self, conv_model, support):
        with pytest.raises(ContractError):
            finetune_bn_params(conv_model, support.x, support.y, OptimizerConfig(), epochs=-1)


class TestClassifierHeads:
    """Test classifier finetuning and the nearest-centroid head."""

    def test_finetune_zero_epochs(self, conv_model, support, target_data):
        adapted, trace = finetune_classifier(conv_model, support.x, support.y, OptimizerConfig(), epochs=0)
        assert len(trace) == 1
        np.testing.assert_array_equal(adapted.logits(target_data.x), conv_model.logits(target_data.x))

    def test_finetune_fits_separable_support(self, randomize, support):
        arch = ArchitectureSpec(kind="convnet", input_shape=[3, 8, 8], widths=[4, 8], num_classes=3)
        model = randomize(build_network(arch, seed=2), seed=2)
        features_before = support_features(model, support.x)
        adapted, trace = finetune_classifier(model, support.x, support.y, OptimizerConfig(lr=0.05), epochs=300)
        assert adapted.head.kind == "finetuned_linear"
        assert float((adapted.predict(support.x) == support.y).mean()) == 1.0
        assert trace[-1] < trace[0]
        np.testing.assert_array_equal(support_features(adapted, support.x), features_before)

    def test_finetune_needs_linear_head(self, conv_model, support):
        conv_model.head = CentroidHead(np.zeros((3, 6)))
        with pytest.raises(ContractError):
            finetune_classifier(conv_model, support.x, support.y, OptimizerConfig(), epochs=1)

    def test_ncc_one_shot_recovers_support_labels(self, conv_model, target_data):
        support = sample_support(target_data, k=1, seed=0)
        adapted = build_ncc_head(conv_model, support.x, support.y)
        assert adapted.head.kind == "nearest_centroid"
        np.testing.assert_array_equal(adapted.predict(support.x), support.y)

    def test_ncc_matches_brute_force(self, conv_model, support, target_data):
        adapted = build_ncc_head(conv_model, support.x, support.y)
        features = support_features(adapted, target_data.x)
        centroids = adapted.head.centroids
        distances = ((features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        np.testing.assert_array_equal(adapted.predict(target_data.x), np.argmin(distances, axis=1))

    def test_ncc_centroids_are_class_means(self, conv_model, support):
        adapted = build_ncc_head(conv_model, support.x, support.y)
        features = support_features(conv_model, support.x)
        for label in range(3):
            np.testing.assert_allclose(adapted.head.centroids[label], features[support.y == label].mean(axis=0))

    def test_ncc_needs_every_class(self, conv_model, support):
        keep = support.y != 2
        with pytest.raises(ContractError):
            build_ncc_head(conv_model, support.x[keep], support.y[keep])


class TestAdaptStrategy:
    """Test the baseline dispatcher shared by the harness and the CLI."""

    def test_online_kinds(self):
        assert AdaptStrategy("tent").online
        assert AdaptStrategy("testtime_bn").online
        assert not AdaptStrategy("adabn").online

    def test_unknown_kind(self):
        with pytest.raises(ContractError):
            AdaptStrategy("mixup")

    def test_kinds_follow_config_names(self):
        for strategy in ("adabn", "testtime_bn", "tent", "finetune_bn", "finetune_classifier", "ncc"):
            assert AdaptStrategy.from_config(AdaptationConfig(strategy=strategy)).kind == strategy
        with pytest.raises(ContractError):
            AdaptStrategy.from_config(AdaptationConfig(strategy="lccs"))

    def test_from_config_picks_tent_optimizer(self):
        cfg = AdaptationConfig(
            strategy="tent", optimizer=OptimizerConfig(lr=0.5), tent_optimizer=OptimizerConfig(lr=0.02)
        )
        assert AdaptStrategy.from_config(cfg).optimizer.lr == 0.02
        cfg.strategy = "finetune_bn"
        assert AdaptStrategy.from_config(cfg).optimizer.lr == 0.5

    def test_zero_statistic_epochs_run_one(self, conv_model, support, target_data):
        strategy = AdaptStrategy.from_config(AdaptationConfig(strategy="adabn", m_epochs=0))
        assert strategy.m_epochs == 1
        adapted = strategy.adapt(conv_model, support.x)
        np.testing.assert_array_equal(
            adapted.logits(target_data.x), adabn_adapt(conv_model, support.x, m_epochs=1).logits(target_data.x)
        )

    def test_labeled_kinds_need_labels(self, conv_model, support):
        assert AdaptStrategy("ncc").needs_labels
        assert not AdaptStrategy("adabn").needs_labels
        with pytest.raises(ContractError):
            AdaptStrategy("ncc").adapt(conv_model, support.x)
        assert AdaptStrategy("ncc").adapt(conv_model, support.x, support.y).head.kind == "nearest_centroid"

    def test_finetune_dispatch(self, conv_model, support, target_data):
        strategy = AdaptStrategy("finetune_bn", optimizer=OptimizerConfig(lr=0.001), epochs=2)
        expected, _ = finetune_bn_params(conv_model, support.x, support.y, OptimizerConfig(lr=0.001), epochs=2)
        np.testing.assert_array_equal(
            strategy.adapt(conv_model, support.x, support.y).logits(target_data.x), expected.logits(target_data.x)
        )

    def test_online_dispatch(self, conv_model, target_data):
        batches = make_stream(target_data, StreamPolicy(batch_size=8))
        tent = AdaptStrategy("tent", optimizer=OptimizerConfig(lr=0.01)).evaluate(conv_model, batches)
        np.testing.assert_array_equal(tent.logits, tent_eval(conv_model, batches, OptimizerConfig(lr=0.01)).logits)
        adapted = AdaptStrategy("tent").adapt(conv_model, target_data.x)
        np.testing.assert_array_equal(adapted.logits(target_data.x), conv_model.logits(target_data.x))

    def test_offline_kind_cannot_stream(self, conv_model, target_data):
        with pytest.raises(ContractError):
            AdaptStrategy("adabn").evaluate(conv_model, make_stream(target_data, StreamPolicy(batch_size=8)))


@pytest.mark.slow
class TestShiftRecovery:
    """Test adapters on a source model trained for the three-class moment shift."""

    def test_adabn_recovers_in_domain_accuracy(self, trained_model):
        source, target = domain_pair("moment_shift", num_classes=3)
        source_test = gen_dataset(source, 150, seed=21)
        target_pool = gen_dataset(target, 150, seed=22)
        target_test = gen_dataset(target, 150, seed=23)

        in_domain = float((trained_model.predict(source_test.x) == source_test.y).mean())
        adapted = adabn_adapt(trained_model, target_pool.x)
        recovered = float((adapted.predict(target_test.x) == target_test.y).mean())
        assert recovered >= in_domain - 0.1

    def test_tent_lowers_entropy_on_shuffled_stream(self, trained_model):
        _, target = domain_pair("moment_shift", num_classes=3)
        stream = make_stream(gen_dataset(target, 600, seed=24), StreamPolicy(batch_size=16, seed=1))
        tent = AdaptStrategy.from_config(AdaptationConfig(strategy="tent"))
        quartiles = np.array_split(np.asarray(tent.evaluate(trained_model, stream).batch_entropy), 4)
        assert quartiles[-1].mean() <= quartiles[0].mean() + 0.02

    def test_adabn_on_more_source_data_stays_closer_to_source(self, trained_model):
        source, _ = domain_pair("moment_shift", num_classes=3)
        held_out = gen_dataset(source, 90, seed=30)
        reference = trained_model.logits(held_out.x)
        deviation = {32: [], 256: []}
        for seed in range(5):
            for size, values in deviation.items():
                adapted = adabn_adapt(trained_model, gen_dataset(source, size, seed=40 + seed).x, seed=seed)
                values.append(float(np.abs(adapted.logits(held_out.x) - reference).max()))
        assert np.mean(deviation[256]) < np.mean(deviation[32])


SEEDS = [0, 1, 2, 3, 4]


def accuracy(model, data) -> float:
    return float((model.predict(data.x) == data.y).mean())


def majority_share(predictions: np.ndarray) -> float:
    """Share of the most frequent predicted class."""
    return float(np.bincount(predictions).max() / len(predictions))


def trained_runs(preset: str):
    """(seed, data, source model) of the default seven-class task for every seed."""
    runner = ExperimentRunner(ExperimentConfig(seeds=SEEDS, data=DataConfig(preset=preset)))
    runs = []
    for seed in SEEDS:
        data = runner.data(seed)
        runs.append((seed, data, runner.source_model(seed, data)))
    return runs


@pytest.fixture(scope="module")
def recovery_scores():
    """Mean target accuracies over seeds on the seven-class moment shift."""
    scores = {name: [] for name in ("in_domain", "shifted", "oracle_adabn", "lccs_k1", "lccs_k10")}
    for seed, data, source in trained_runs("moment_shift"):
        scores["in_domain"].append(accuracy(source, data.source_test))
        scores["shifted"].append(accuracy(source, data.target_test))
        scores["oracle_adabn"].append(accuracy(adabn_adapt(source, data.target_pool.x, seed=seed), data.target_test))
        for k in (1, 10):
            support = sample_support(data.target_pool, k, seed)
            adapted = adapt_lccs(source, support, AdaptationConfig(k=k), seed).model
            scores[f"lccs_k{k}"].append(accuracy(adapted, data.target_test))
    return {name: float(np.mean(values)) for name, values in scores.items()}


@pytest.fixture(scope="module")
def warped_shift_runs():
    return trained_runs("warped_shift")


@pytest.mark.slow
class TestSevenClassRecovery:
    """Test the accuracy a moment shift costs and what each adapter wins back."""

    def test_source_fits_and_shift_hurts(self, recovery_scores):
        assert recovery_scores["in_domain"] >= 0.95
        assert recovery_scores["in_domain"] - recovery_scores["shifted"] >= 0.20

    def test_adabn_on_full_target_recovers_the_drop(self, recovery_scores):
        drop = recovery_scores["in_domain"] - recovery_scores["shifted"]
        assert recovery_scores["oracle_adabn"] - recovery_scores["shifted"] >= 0.95 * drop

    def test_ten_shot_lccs_near_full_target_adabn(self, recovery_scores):
        assert recovery_scores["lccs_k10"] >= recovery_scores["oracle_adabn"] - 0.05

    def test_one_shot_lccs_beats_source(self, recovery_scores):
        assert recovery_scores["lccs_k1"] > recovery_scores["shifted"]


@pytest.mark.slow
class TestClassOrderedStreams:
    """Test online strategies on a warped-shift stream presented one class after another."""

    @staticmethod
    def by_class(data, seed):
        return make_stream(data.target_test, StreamPolicy(batch_size=8, ordering="sequential_by_class", seed=seed))

    def test_testtime_bn_loses_accuracy_on_class_ordered_batches(self, warped_shift_runs):
        for seed, data, source in warped_shift_runs:
            shuffled = make_stream(data.target_test, StreamPolicy(batch_size=128, seed=seed))
            ordered = baselines.testtime_bn_eval(source, self.by_class(data, seed)).accuracy
            assert baselines.testtime_bn_eval(source, shuffled).accuracy - ordered >= 0.10

    def test_tent_predictions_concentrate_over_the_stream(self, warped_shift_runs):
        tent = AdaptStrategy.from_config(AdaptationConfig(strategy="tent"))
        rises = []
        for seed, data, source in warped_shift_runs:
            quartiles = np.array_split(tent.evaluate(source, self.by_class(data, seed)).predictions, 4)
            rises.append(majority_share(quartiles[-1]) - majority_share(quartiles[0]))
        assert np.mean(rises) > 0.0
        assert sum(rise > 0.0 for rise in rises) >= 3
