"""Result records emitted by the experiment harness."""

from pydantic import Field

from .base import BaseLCCSModel
from .experiment import Metric

REPORT_COLUMNS = (
    "strategy", "k", "n", "stream_batch", "stream_order", "alpha",
    "metric", "value", "seed", "secs", "config_digest",
)
SORT_COLUMNS = ("strategy", "k", "n", "stream_batch", "stream_order", "alpha", "metric", "seed")


class ResultRecord(BaseLCCSModel):
    """One metric value for one (strategy, stream policy, seed) cell."""
    strategy: str = Field(description="Adaptation strategy")
    k: int = Field(ge=0, description="Support samples per class (0 when unused)")
    n: int = Field(ge=0, description="Spanning vectors (0 when unused)")
    stream_batch: int = Field(ge=1, description="Evaluation batch size")
    stream_order: str = Field(description="shuffled or by-class")
    alpha: float = Field(ge=1.0, description="Long-tail imbalance ratio")
    metric: Metric = Field(description="Metric name")
    value: float = Field(ge=0.0, le=1.0, description="Metric value")
    seed: int = Field(ge=0, description="Run seed")
    secs: float = Field(ge=0.0, description="Wall-clock seconds of adaptation plus evaluation")
    config_digest: str = Field(description="Digest of the experiment config")

    def sort_key(self) -> tuple:
        return tuple(getattr(self, column) for column in SORT_COLUMNS)
