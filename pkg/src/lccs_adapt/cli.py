"""Command-line interface for data generation, training, adaptation, evaluation and reports."""

import functools
import json
import logging
from pathlib import Path
from typing import Callable, Optional, Tuple

import click
import numpy as np
from pydantic import ValidationError

from .adaptation.baselines import AdaptStrategy
from .adaptation.lccs import adapt_lccs
from .config.settings import get_settings
from .data.sampling import make_stream, policy_subset, sample_support
from .data.storage import load_dataset, save_dataset
from .data.synthetic import PRESETS, domain_pair, gen_dataset
from .harness.experiment import run_experiment
from .harness.metrics import METRICS, compute_metrics
from .harness.report import aggregate_records, load_report, render_aggregate, render_report
from .harness.timing import bench_time
from .models.architecture import ArchitectureSpec
from .models.checkpoint import Provenance
from .models.domain import StreamPolicy
from .models.experiment import TENT_LR, AdaptationConfig, ExperimentConfig
from .models.optimizer import OptimizerConfig
from .nn.checkpoint import load_checkpoint, load_provenance, save_checkpoint
from .nn.network import build_network
from .nn.training import train_source
from .utils.errors import LCCSError

logger = logging.getLogger(__name__)

# CLI strategy names -> AdaptationConfig strategies
STRATEGIES = {
    "lccs": "lccs",
    "adabn": "adabn",
    "tent": "tent",
    "testtime-bn": "testtime_bn",
    "ft-bn": "finetune_bn",
    "ft-classifier": "finetune_classifier",
    "ncc": "ncc",
}
ORDERS = {"shuffled": "shuffled", "by-class": "sequential_by_class"}


def configure_logging(level: Optional[str] = None) -> None:
    settings = get_settings()
    logging.basicConfig(level=(level or settings.log_level).upper(), format=settings.log_format)


def handle_errors(command: Callable) -> Callable:
    """Report toolkit errors as a one-line message with exit code 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (LCCSError, ValidationError) as e:
            raise click.ClickException(str(e)) from e

    return wrapper


def _load_config(path: Path) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise click.ClickException(f"[config] {path}: {e}") from e


@click.group()
@click.option("--log-level", default=None, help="Override LCCS_LOG_LEVEL")
def main(log_level: Optional[str]):
    """Few-shot batch-norm statistic adaptation toolkit."""
    configure_logging(log_level)


@main.command("gen-data")
@click.option("--preset", type=click.Choice(PRESETS), default="moment_shift", show_default=True)
@click.option("--domain", type=click.Choice(["source", "target"]), default="source", show_default=True)
@click.option("--size", type=int, default=1400, show_default=True)
@click.option("--num-classes", type=int, default=7, show_default=True)
@click.option("--structure-seed", type=int, default=0, show_default=True)
@click.option("--seed", type=int, default=None, help="Sampling seed (defaults to LCCS_DEFAULT_SEED)")
@click.option("--out", type=click.Path(path_type=Path), default=None)
@handle_errors
def gen_data(preset, domain, size, num_classes, structure_seed, seed, out):
    """Generate a synthetic source or target dataset."""
    settings = get_settings()
    seed = settings.default_seed if seed is None else seed
    source_spec, target_spec = domain_pair(preset, num_classes, structure_seed)
    dataset = gen_dataset(source_spec if domain == "source" else target_spec, size, seed)
    path = save_dataset(dataset, out or settings.data_dir / f"{preset}-{domain}-{seed}.npz")
    click.echo(f"Wrote {len(dataset)} samples to {path}")


@main.command("train-source")
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--arch", type=click.Choice(["convnet", "mlp"]), default="convnet", show_default=True)
@click.option("--widths", default="8,16", show_default=True, help="Comma-separated block widths")
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default="adam", show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--augment-noise", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=None)
@handle_errors
def train_source_command(data_path, out, arch, widths, epochs, batch_size, optimizer, lr, augment_noise, seed):
    """Train a source model by empirical risk minimization."""
    seed = get_settings().default_seed if seed is None else seed
    dataset = load_dataset(data_path)
    input_shape = list(dataset.x.shape[1:]) if arch == "convnet" else [int(np.prod(dataset.x.shape[1:]))]
    architecture = ArchitectureSpec(
        kind=arch, input_shape=input_shape, widths=[int(width) for width in widths.split(",")],
        num_classes=dataset.num_classes,
    )
    model = train_source(
        build_network(architecture, seed), dataset, epochs, OptimizerConfig(kind=optimizer, lr=lr), seed,
        batch_size=batch_size, augment_noise=augment_noise,
    )
    save_checkpoint(model, out, Provenance(seed=seed, strategy="source"))
    click.echo(f"Source model saved to {out}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="Target pool the support set is drawn from")
@click.option("--strategy", type=click.Choice(list(STRATEGIES)), default="lccs", show_default=True)
@click.option("--k", type=int, default=1, show_default=True, help="Support samples per class")
@click.option("--n", type=int, default=None, help="Spanning vectors (default: k*K for k >= 5, else 1)")
@click.option("--epochs", type=int, default=10, show_default=True, help="EMA / gradient / finetuning epochs")
@click.option("--grid-steps", type=int, default=11, show_default=True)
@click.option("--classifier", type=click.Choice(["auto", "source", "finetuned", "ncc"]), default="auto", show_default=True)
@click.option("--convex", is_flag=True, help="Restrict coefficients to convex combinations")
@click.option("--greedy-init", is_flag=True, help="Layer-wise instead of tied grid search")
@click.option("--lr", type=float, default=0.001, show_default=True)
@click.option("--tent-lr", type=float, default=TENT_LR, show_default=True, help="Step of the online entropy updates")
@click.option("--adabn-data", type=click.Choice(["support", "target"]), default="support", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@handle_errors
def adapt(model_path, data_path, strategy, k, n, epochs, grid_steps, classifier, convex, greedy_init, lr,
          tent_lr, adabn_data, seed, out):
    """Adapt a source model to the target domain."""
    seed = get_settings().default_seed if seed is None else seed
    cfg = AdaptationConfig(
        strategy=STRATEGIES[strategy], k=k, n=n, m_epochs=epochs, finetune_epochs=epochs,
        grid_steps=grid_steps, classifier=classifier, convex=convex, greedy_init=greedy_init,
        optimizer=OptimizerConfig(lr=lr), tent_optimizer=OptimizerConfig(lr=tent_lr), adabn_data=adabn_data,
    )
    source = load_checkpoint(model_path)
    pool = load_dataset(data_path)
    provenance = Provenance(seed=seed, config_digest=cfg.digest(), strategy=cfg.strategy)

    if cfg.strategy == "lccs":
        result = adapt_lccs(source, sample_support(pool, k, seed), cfg, seed)
        adapted = result.model
        click.echo(f"LCCS: n per layer {result.layer_n}, v* = {result.record.v_star}")
    else:
        baseline = AdaptStrategy.from_config(cfg)
        if baseline.online:
            provenance.online_strategy = cfg.strategy
            provenance.extra = {"lr": repr(tent_lr)}
            adapted = source
        elif cfg.strategy == "adabn" and adabn_data == "target":
            adapted = baseline.adapt(source, pool.x, seed=seed)
        else:
            support = sample_support(pool, k, seed)
            adapted = baseline.adapt(source, support.x, support.y, seed)
    save_checkpoint(adapted, out, provenance)
    click.echo(f"Adapted model ({strategy}) saved to {out}")


@main.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--batch", type=int, default=128, show_default=True)
@click.option("--order", type=click.Choice(list(ORDERS)), default="shuffled", show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True, help="Long-tail imbalance ratio")
@click.option("--n-max", type=int, default=None, help="Largest class size of the long-tail subset")
@click.option("--metric", "metrics", type=click.Choice(METRICS), multiple=True, default=("accuracy",), show_default=True)
@click.option("--seed", type=int, default=None)
@handle_errors
def evaluate(model_path, data_path, batch, order, alpha, n_max, metrics, seed):
    """Evaluate a model on a target stream and print metrics as JSON."""
    seed = get_settings().default_seed if seed is None else seed
    model = load_checkpoint(model_path)
    provenance = load_provenance(model_path)
    policy = StreamPolicy(batch_size=batch, ordering=ORDERS[order], imbalance_alpha=alpha, n_max=n_max, seed=seed)
    batches = make_stream(policy_subset(load_dataset(data_path), policy), policy)

    if provenance.online_strategy is not None:
        lr = float(provenance.extra.get("lr", repr(TENT_LR)))
        baseline = AdaptStrategy(provenance.online_strategy, optimizer=OptimizerConfig(lr=lr))
        predictions = baseline.evaluate(model, batches).predictions
    else:
        predictions = np.concatenate([model.predict(batch_.x) for batch_ in batches])
    labels = np.concatenate([batch_.y for batch_ in batches])
    scores = {metric: compute_metrics(predictions, labels, metric) for metric in metrics}
    click.echo(json.dumps({"batch": batch, "order": order, "alpha": alpha, **scores}))


@main.command("bench-time")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--k", type=int, default=None, help="Override adaptation.k")
@click.option("--epochs", type=int, default=2, show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True, help="Keep the fastest of this many runs")
@handle_errors
def bench_time_command(config_path, k, epochs, repeats):
    """Time one LCCS gradient epoch at n = 1 and n = k*K."""
    config = _load_config(config_path) if config_path else ExperimentConfig()
    if k is not None:
        config.adaptation.k = k
    for row in bench_time(config, epochs=epochs, repeats=repeats):
        click.echo(row.model_dump_json())


@main.command()
@click.option("--input", "inputs", type=click.Path(exists=True, path_type=Path), multiple=True, required=True)
@click.option("--aggregate", is_flag=True, help="Mean / std / count over seeds")
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@handle_errors
def report(inputs: Tuple[Path, ...], aggregate, fmt, out):
    """Merge reports, optionally aggregating over seeds."""
    records = [record for path in inputs for record in load_report(path)]
    if aggregate:
        text = render_aggregate(aggregate_records(records))
    else:
        text = render_report(records, fmt)
    if out:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        click.echo(f"Wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None, help="Override report_path")
@handle_errors
def run(config_path, report_path):
    """Run a full experiment from a JSON config."""
    config = _load_config(config_path)
    config.report_path = (
        report_path or config.report_path or get_settings().output_dir / f"{config.name}.{config.report_format}"
    )
    records = run_experiment(config)
    click.echo(f"{len(records)} records written to {config.report_path}")


@main.command("show-config")
def show_config():
    """Print the effective settings."""
    click.echo(get_settings().model_dump_json(indent=2))


if __name__ == "__main__":
    main()
