"""Per-epoch training records and early stopping."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

from crossl.ssl import LossBreakdown

StopReason = Literal["max_epochs", "early_stop"]

TRACE_COLUMNS = ("epoch", "train_loss", "val_metric", "inv", "var1", "var2", "cov1", "cov2", "seconds")

# smallest change that counts as progress
IMPROVEMENT_THRESHOLD = 1e-6


@dataclass(frozen=True)
class EpochRecord:
    """One epoch: mean training loss, validation metric, loss terms, wall time."""

    epoch: int
    train_loss: float
    val_metric: float
    breakdown: Optional[LossBreakdown] = None
    seconds: float = 0.0

    def row(self) -> list[str]:
        terms: list[Optional[float]] = [None] * 5
        if self.breakdown is not None:
            b = self.breakdown
            terms = [b.invariance, b.variance_v1, b.variance_v2, b.covariance_v1, b.covariance_v2]
        values = [self.train_loss, self.val_metric, *terms]
        return [str(self.epoch), *("" if v is None else repr(float(v)) for v in values), f"{self.seconds:.3f}"]


@dataclass
class TrainTrace:
    """
    Trace of one training stage.

    ``val_metric`` is the validation loss for pre-training and the validation
    macro-F1 for classifier training. ``initial_metric`` is measured before
    the first update.
    """

    stage: str
    metric: Literal["val_loss", "val_macro_f1"]
    records: list[EpochRecord] = field(default_factory=list)
    initial_metric: Optional[float] = None
    best_epoch: Optional[int] = None
    stop_reason: StopReason = "max_epochs"

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final_metric(self) -> Optional[float]:
        return self.records[-1].val_metric if self.records else None

    def without_timing(self) -> list[tuple]:
        """Records minus wall time; identical seeds give identical lists."""
        return [(r.epoch, r.train_loss, r.val_metric, r.breakdown) for r in self.records]

    def to_csv(self, path: str | Path) -> None:
        """
        Write the trace with columns epoch, train_loss, val_metric, inv, var1,
        var2, cov1, cov2, seconds. Loss-term columns are empty for classifier
        stages.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for record in self.records:
                writer.writerow(record.row())


class EarlyStopping:
    """
    Patience counter over a validation metric.

    Stops after ``patience`` consecutive epochs without progress.
    """

    def __init__(self, patience: int, direction: Literal["min", "max"]):
        self.patience = patience
        self.direction = direction
        self.best = math.inf if direction == "min" else -math.inf
        self.best_epoch: Optional[int] = None
        self.stale = 0

    def improved(self, value: float) -> bool:
        if self.direction == "min":
            return value < self.best - IMPROVEMENT_THRESHOLD
        return value > self.best + IMPROVEMENT_THRESHOLD

    def update(self, epoch: int, value: float) -> bool:
        """
        Record one epoch's metric.

        Returns:
            True if the metric improved on the best seen so far
        """
        if self.improved(value):
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience
