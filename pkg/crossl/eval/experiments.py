"""Experiment matrix: missing-modality scenarios, masking sweeps, label sweeps.

Every experiment is split into cells, one per (condition, seed). Cells are
independent: they run inline or in a process pool, and with an output
directory each finished cell is recorded under ``cache/cells`` so a rerun
skips it. Pre-trained checkpoints are shared between cells through
``cache/ssl`` and a memo that lives as long as the experiment call.
"""

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ValidationError

from crossl.core.config import AggregatorSpec, EncoderSpec, MaskSpec, TrainConfig
from crossl.core.errors import ConfigError, ScenarioError
from crossl.core.log import logger
from crossl.data import MissingScenario, MultimodalDataset, dataset_fingerprint, simulate_missing, subsample_labels
from crossl.eval.metrics import macro_f1
from crossl.eval.report import EvalReport, ReportRow
from crossl.model import ModelState, checkpoint_id, load_checkpoint, save_checkpoint
from crossl.train import finetune, new_model, predict, pretrain, train_supervised

MISSING_PHASES = ("none", "inference_only", "finetune_and_inference")
STRATEGIES = ("random", "spatial")
PROBE_MODES = ("fixed", "finetuned")

# bump when cell semantics change so stale caches are ignored
CACHE_VERSION = 1


@dataclass(frozen=True)
class ExperimentContext:
    """Everything a cell needs; shipped once to every worker process."""

    dataset: MultimodalDataset
    config: TrainConfig
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    aggregator: AggregatorSpec = field(default_factory=AggregatorSpec)
    cache_dir: Optional[Path] = None
    missing_count: int = 1
    fingerprint: str = ""
    # backbones pre-trained by this experiment, keyed like the ssl cache
    pretrained: dict[str, ModelState] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.fingerprint:
            object.__setattr__(self, "fingerprint", dataset_fingerprint(self.dataset))

    def seeded(self, seed: int, masking: Optional[MaskSpec] = None) -> TrainConfig:
        update: dict = {"seed": seed}
        if masking is not None:
            update["masking"] = masking
        return self.config.model_copy(update=update)

    def identity(self) -> dict:
        return {
            "version": CACHE_VERSION,
            "dataset": self.fingerprint,
            "encoder": self.encoder.model_dump(mode="json"),
            "aggregator": self.aggregator.model_dump(mode="json"),
            "train": self.config.model_dump(mode="json", exclude={"seed"}),
        }


@dataclass(frozen=True)
class Cell:
    """One (condition, seed) unit of an experiment."""

    experiment: str
    seed: int
    scenario: str = "none"
    strategy: Optional[str] = None
    grid_value: Optional[float] = None
    label_fraction: float = 1.0

    def key(self, context: ExperimentContext) -> str:
        document = {"context": context.identity(), "cell": asdict(self), "missing_count": context.missing_count}
        return _digest(document)


class CellRecord(BaseModel):
    """Cached result of a finished cell."""

    key: str
    rows: List[ReportRow]


def _digest(document: dict) -> str:
    return hashlib.sha256(json.dumps(document, sort_keys=True).encode("utf-8")).hexdigest()


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def pretrained_model(context: ExperimentContext, masking: MaskSpec, seed: int) -> tuple[ModelState, str]:
    """
    Pre-trained model for (dataset, architecture, schedule, masking, seed).

    Looks in the memo of ``context``, then the checkpoint cache, and
    pre-trains only on a miss.

    Returns:
        (model, hex sha256 of its checkpoint)
    """
    key = _digest({"context": context.identity(), "masking": masking.model_dump(mode="json"), "seed": seed})
    state = context.pretrained.get(key)
    path = context.cache_dir / "ssl" / f"{key}.crsl" if context.cache_dir else None
    if state is None and path is not None and path.exists():
        logger.debug("Pre-training cache hit", extra={"masking": masking.describe(), "seed": seed})
        state = load_checkpoint(path)
    if state is None:
        initial = new_model(context.dataset, context.encoder, context.aggregator, seed)
        state, _ = pretrain(context.dataset, initial, context.seeded(seed, masking))
    if path is not None and not path.exists():
        save_checkpoint(state, path)
    context.pretrained[key] = state
    return state, checkpoint_id(state)


def _test_row(state: ModelState, dataset: MultimodalDataset, cell: Cell, mode: str, **fields) -> ReportRow:
    predictions, labels = predict(state, dataset, "test")
    assert labels is not None
    macro, per_class = macro_f1(predictions, labels, dataset.num_classes)
    support = np.bincount(labels, minlength=dataset.num_classes)
    values = {
        "experiment": cell.experiment,
        "scenario": cell.scenario,
        "strategy": cell.strategy,
        "grid_value": cell.grid_value,
        "label_fraction": cell.label_fraction,
        "seed": cell.seed,
        **fields,
    }
    return ReportRow(
        **values,
        mode=mode,
        macro_f1=macro,
        per_class_f1=per_class,
        support=[int(count) for count in support],
    )


def _probe_rows(
    context: ExperimentContext,
    dataset: MultimodalDataset,
    cell: Cell,
    masking: MaskSpec,
    strategy: str,
) -> list[ReportRow]:
    pretrained, pretrain_id = pretrained_model(context, masking, cell.seed)
    rows = []
    for mode in PROBE_MODES:
        tuned, _ = finetune(dataset, pretrained, context.seeded(cell.seed), mode)  # type: ignore[arg-type]
        rows.append(_test_row(tuned, dataset, cell, mode, strategy=strategy, pretrain_id=pretrain_id))
    return rows


def _supervised_row(context: ExperimentContext, dataset: MultimodalDataset, cell: Cell) -> ReportRow:
    state, _ = train_supervised(dataset, context.seeded(cell.seed), context.encoder, context.aggregator)
    return _test_row(state, dataset, cell, "supervised", strategy=None, grid_value=None)


def _missing_cell(context: ExperimentContext, cell: Cell) -> list[ReportRow]:
    scenario = MissingScenario(phase=cell.scenario, missing_count=context.missing_count, seed=cell.seed)
    dataset = simulate_missing(context.dataset, scenario)
    rows = [_supervised_row(context, dataset, cell)]
    base = context.config.masking
    for strategy in STRATEGIES:
        masking = MaskSpec(strategy=strategy, rate=base.rate, count=base.count)  # type: ignore[arg-type]
        rows.extend(_probe_rows(context, dataset, cell, masking, strategy))
    return rows


def _mask_cell(context: ExperimentContext, cell: Cell) -> list[ReportRow]:
    assert cell.strategy is not None and cell.grid_value is not None
    if cell.strategy == "random":
        masking = MaskSpec(strategy="random", rate=cell.grid_value)
    else:
        masking = MaskSpec(strategy="spatial", count=int(cell.grid_value))
    return _probe_rows(context, context.dataset, cell, masking, cell.strategy)


def _label_cell(context: ExperimentContext, cell: Cell) -> list[ReportRow]:
    dataset = subsample_labels(context.dataset, cell.label_fraction, cell.seed)
    rows = _probe_rows(context, dataset, cell, context.config.masking, context.config.masking.strategy)
    rows.append(_supervised_row(context, dataset, cell))
    return rows


_RUNNERS: dict[str, Callable[[ExperimentContext, Cell], list[ReportRow]]] = {
    "missing": _missing_cell,
    "sweep-mask": _mask_cell,
    "sweep-labels": _label_cell,
}


def run_cell(context: ExperimentContext, cell: Cell) -> list[ReportRow]:
    """Train and evaluate every method of one cell."""
    return _RUNNERS[cell.experiment](context, cell)


_WORKER_CONTEXT: Optional[ExperimentContext] = None


def _init_worker(context: ExperimentContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = context


def _run_in_worker(cell: Cell) -> list[ReportRow]:
    assert _WORKER_CONTEXT is not None
    return run_cell(_WORKER_CONTEXT, cell)


def _cached(context: ExperimentContext, cell: Cell) -> Optional[list[ReportRow]]:
    if context.cache_dir is None:
        return None
    key = cell.key(context)
    path = context.cache_dir / "cells" / f"{key}.json"
    if not path.exists():
        return None
    try:
        record = CellRecord.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError:
        logger.warning("Ignoring unreadable cell cache", extra={"path": str(path)})
        return None
    if record.key != key:
        return None
    logger.debug("Cell cache hit", extra={"cell": key[:12]})
    return record.rows


def _record(context: ExperimentContext, cell: Cell, rows: list[ReportRow]) -> None:
    if context.cache_dir is None:
        return
    key = cell.key(context)
    record = CellRecord(key=key, rows=rows)
    _write_atomic(context.cache_dir / "cells" / f"{key}.json", record.model_dump_json(indent=2).encode("utf-8"))


def run_cells(context: ExperimentContext, cells: Sequence[Cell], jobs: int = 1) -> list[ReportRow]:
    """
    Run cells, skipping those already recorded in the cache.

    Rows come back in cell order whatever the completion order.

    Args:
        context: Shared inputs
        cells: Cells to run
        jobs: Worker processes; 1 runs inline
    """
    results: dict[int, list[ReportRow]] = {}
    pending: list[int] = []
    for index, cell in enumerate(cells):
        rows = _cached(context, cell)
        if rows is None:
            pending.append(index)
        else:
            results[index] = rows

    def finish(index: int, rows: list[ReportRow]) -> None:
        _record(context, cells[index], rows)
        results[index] = rows
        cell = cells[index]
        logger.info(
            "Cell finished",
            extra={
                "experiment": cell.experiment,
                "scenario": cell.scenario,
                "strategy": cell.strategy,
                "grid_value": cell.grid_value,
                "fraction": cell.label_fraction,
                "seed": cell.seed,
            },
        )

    if jobs <= 1 or len(pending) <= 1:
        for index in pending:
            finish(index, run_cell(context, cells[index]))
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(context,)) as executor:
            futures = {index: executor.submit(_run_in_worker, cells[index]) for index in pending}
            for index in pending:
                finish(index, futures[index].result())

    return [row for index in range(len(cells)) for row in results[index]]


def _require_seeds(seeds: Sequence[int]) -> list[int]:
    if not seeds:
        raise ConfigError("at least one seed is required")
    return list(seeds)


def _report(experiment: str, context: ExperimentContext, rows: list[ReportRow]) -> EvalReport:
    return EvalReport(experiment=experiment, num_classes=context.dataset.num_classes, rows=rows).aggregate()


def _context(
    dataset: MultimodalDataset,
    config: TrainConfig,
    encoder: Optional[EncoderSpec],
    aggregator: Optional[AggregatorSpec],
    out_dir: Optional[str | Path],
    missing_count: int = 1,
) -> ExperimentContext:
    return ExperimentContext(
        dataset=dataset,
        config=config,
        encoder=encoder or EncoderSpec(),
        aggregator=aggregator or AggregatorSpec(),
        cache_dir=Path(out_dir) / "cache" if out_dir is not None else None,
        missing_count=missing_count,
    )


def run_missing_scenarios(
    dataset: MultimodalDataset,
    config: TrainConfig,
    seeds: Sequence[int],
    *,
    missing_count: int = 1,
    encoder: Optional[EncoderSpec] = None,
    aggregator: Optional[AggregatorSpec] = None,
    out_dir: Optional[str | Path] = None,
    jobs: int = 1,
) -> EvalReport:
    """
    Missing-modality matrix: three scenarios times five methods per seed.

    Scenarios: no missing data, missing at inference only, missing at
    fine-tuning and inference. Methods: supervised baseline, then fixed and
    fine-tuned probes on backbones pre-trained on clean data with random and
    with spatial masking.

    Args:
        dataset: Clean labelled dataset
        config: Training schedule; its masking section supplies rate and count
        seeds: Seeds to repeat every condition with
        missing_count: Modalities removed per affected window
        encoder: Encoder architecture
        aggregator: Aggregator architecture
        out_dir: Enables the resumable cache under ``<out_dir>/cache``
        jobs: Worker processes

    Returns:
        Report with 15 rows per seed

    Raises:
        ScenarioError: If missing_count >= M
    """
    seeds = _require_seeds(seeds)
    if missing_count >= dataset.num_modalities:
        raise ScenarioError(f"missing_count={missing_count} must be smaller than M={dataset.num_modalities}")
    context = _context(dataset, config, encoder, aggregator, out_dir, missing_count)
    cells = [Cell("missing", seed, scenario=phase) for phase in MISSING_PHASES for seed in seeds]
    return _report("missing", context, run_cells(context, cells, jobs))


def check_grid(strategy: str, grid: Sequence[float], num_modalities: int) -> list[float]:
    """
    Validate masking sweep points.

    Random rates must lie in [0, 1]; spatial counts must be integers in
    [0, M - 1].

    Raises:
        ConfigError: On an empty grid or an invalid point
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown masking strategy {strategy!r}")
    if not grid:
        raise ConfigError("masking grid must not be empty")
    for value in grid:
        if strategy == "random" and not 0.0 <= value <= 1.0:
            raise ConfigError(f"random masking rate {value} outside [0, 1]")
        if strategy == "spatial" and (value != int(value) or not 0 <= value <= num_modalities - 1):
            raise ConfigError(f"spatial masking count {value} must be an integer in [0, {num_modalities - 1}]")
    return [float(value) for value in grid]


def sweep_mask(
    dataset: MultimodalDataset,
    config: TrainConfig,
    strategy: str,
    grid: Sequence[float],
    seeds: Sequence[int],
    *,
    encoder: Optional[EncoderSpec] = None,
    aggregator: Optional[AggregatorSpec] = None,
    out_dir: Optional[str | Path] = None,
    jobs: int = 1,
) -> EvalReport:
    """
    Masking sweep: pre-train at every grid point, then fixed and fine-tuned
    probes, for every seed.

    Returns:
        Report with ``len(grid) * len(seeds) * 2`` rows
    """
    seeds = _require_seeds(seeds)
    points = check_grid(strategy, grid, dataset.num_modalities)
    context = _context(dataset, config, encoder, aggregator, out_dir)
    cells = [Cell("sweep-mask", seed, strategy=strategy, grid_value=value) for value in points for seed in seeds]
    return _report("sweep-mask", context, run_cells(context, cells, jobs))


def sweep_labels(
    dataset: MultimodalDataset,
    config: TrainConfig,
    fractions: Sequence[float],
    seeds: Sequence[int],
    *,
    encoder: Optional[EncoderSpec] = None,
    aggregator: Optional[AggregatorSpec] = None,
    out_dir: Optional[str | Path] = None,
    jobs: int = 1,
) -> EvalReport:
    """
    Label-efficiency sweep.

    One pre-training per seed on the whole unlabelled train split, shared by
    every fraction; then per fraction the labels are subsampled and fixed,
    fine-tuned and supervised models are trained.

    Returns:
        Report with ``len(fractions) * len(seeds) * 3`` rows

    Raises:
        ConfigError: If a fraction lies outside (0, 1]
    """
    seeds = _require_seeds(seeds)
    if not fractions:
        raise ConfigError("at least one label fraction is required")
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"label fraction {fraction} outside (0, 1]")
    context = _context(dataset, config, encoder, aggregator, out_dir)
    cells = [Cell("sweep-labels", seed, label_fraction=float(f)) for f in fractions for seed in seeds]
    return _report("sweep-labels", context, run_cells(context, cells, jobs))
