"""Experiment reports: per-cell rows, seed aggregates, CSV/JSON emission."""

import csv
import io
import os
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from crossl.core.log import logger

BASE_COLUMNS = (
    "experiment",
    "scenario",
    "strategy",
    "grid_value",
    "label_fraction",
    "mode",
    "seed",
    "macro_f1",
)


class ReportRow(BaseModel):
    """Test-split result of one (condition, seed) pair."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: str = Field(..., description="missing, sweep-mask or sweep-labels")
    scenario: str = Field(default="none", description="Missing-modality phase")
    strategy: Optional[str] = Field(default=None, description="Masking strategy; None for the supervised baseline")
    grid_value: Optional[float] = Field(default=None, description="Masking rate or count of a sweep point")
    label_fraction: float = Field(default=1.0, description="Share of training labels kept")
    mode: str = Field(..., description="fixed, finetuned or supervised")
    seed: int
    macro_f1: float = Field(..., ge=0.0, le=1.0)
    per_class_f1: List[float] = Field(default_factory=list)
    support: List[int] = Field(default_factory=list, description="Test windows per class")
    pretrain_id: Optional[str] = Field(default=None, description="sha256 of the pre-trained checkpoint")

    @model_validator(mode="after")
    def _check_scores(self) -> "ReportRow":
        if any(not 0.0 <= value <= 1.0 for value in self.per_class_f1):
            raise ValueError("per-class F1 must lie in [0, 1]")
        return self

    def condition(self) -> tuple:
        return (self.experiment, self.scenario, self.strategy, self.grid_value, self.label_fraction, self.mode)


class AggregateRow(BaseModel):
    """Mean and sample standard deviation of macro-F1 across seeds."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: str
    scenario: str
    strategy: Optional[str]
    grid_value: Optional[float]
    label_fraction: float
    mode: str
    seeds: List[int]
    mean_macro_f1: float
    std_macro_f1: Optional[float] = Field(default=None, description="None with a single seed")


class EvalReport(BaseModel):
    """All rows of one experiment plus their seed aggregates."""

    model_config = ConfigDict(extra="forbid")

    experiment: str
    num_classes: int
    rows: List[ReportRow] = Field(default_factory=list)
    aggregates: List[AggregateRow] = Field(default_factory=list)

    def aggregate(self) -> "EvalReport":
        """Recompute ``aggregates`` from ``rows`` (conditions in first-seen order)."""
        groups: dict[tuple, list[ReportRow]] = {}
        for row in self.rows:
            groups.setdefault(row.condition(), []).append(row)
        aggregates = []
        for (experiment, scenario, strategy, grid_value, fraction, mode), rows in groups.items():
            scores = np.array([row.macro_f1 for row in rows])
            aggregates.append(
                AggregateRow(
                    experiment=experiment,
                    scenario=scenario,
                    strategy=strategy,
                    grid_value=grid_value,
                    label_fraction=fraction,
                    mode=mode,
                    seeds=[row.seed for row in rows],
                    mean_macro_f1=float(scores.mean()),
                    std_macro_f1=float(scores.std(ddof=1)) if len(scores) > 1 else None,
                )
            )
        self.aggregates = aggregates
        return self

    def mean(self, **condition) -> float:
        """Mean macro-F1 of the rows matching every given field."""
        scores = [
            row.macro_f1 for row in self.rows if all(getattr(row, key) == value for key, value in condition.items())
        ]
        if not scores:
            raise KeyError(f"no rows match {condition}")
        return float(np.mean(scores))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(report: EvalReport) -> str:
    """CSV text: one row per (condition, seed), columns in a fixed order."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([*BASE_COLUMNS, *(f"f1_class_{c}" for c in range(report.num_classes))])
    for row in report.rows:
        base = [getattr(row, column) for column in BASE_COLUMNS]
        writer.writerow([_cell(value) for value in [*base, *row.per_class_f1]])
    return buffer.getvalue()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def emit_report(report: EvalReport, directory: str | Path) -> tuple[Path, Path]:
    """
    Write ``report.csv`` and ``report.json``.

    Output depends only on the report, so identical reports give identical
    bytes.

    Args:
        report: Report to write
        directory: Output directory (created if needed)

    Returns:
        (CSV path, JSON path)
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "report.csv"
    json_path = directory / "report.json"
    _write_atomic(csv_path, report_csv(report))
    _write_atomic(json_path, report.model_dump_json(indent=2) + "\n")
    logger.info("Report written", extra={"path": str(directory), "rows": len(report.rows)})
    return csv_path, json_path


def load_report(path: str | Path) -> EvalReport:
    """Parse a ``report.json`` file."""
    return EvalReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
