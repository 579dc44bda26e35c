"""End-to-end run: simulate, tally, estimate, key rate, reports.

Rounds are processed in chunks of ``CHUNK_ROUNDS``.  With ``partitions > 1``
contiguous ranges of rounds run in worker processes; each worker keeps a
checkpoint of its partial table so an interrupted run resumes where it
stopped.  Because every round draws from its own counter-based stream, the
merged table does not depend on the partitioning.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bsm import simulate_rounds
from .config import ExperimentConfig, config_source_bytes, load_config
from .decoy import DecoyEstimate, estimate
from .keyrate import KeyRateReport, key_rate
from .tally import TallyTable, rates, read_csv, tally_batch, write_csv

log = logging.getLogger(__name__)

CHUNK_ROUNDS = 1_000_000

TALLY_FILE = "tallies.csv"
ESTIMATE_FILE = "estimate.json"
KEYRATE_JSON = "keyrate.json"
KEYRATE_TEXT = "keyrate.txt"
MANIFEST_FILE = "manifest.json"
CHECKPOINT_DIR = "checkpoints"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


@dataclass
class RunManifest:
    config: dict
    config_snapshot: str
    config_sha256: str
    seed: int
    started: str
    finished: str = ""
    versions: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    partitions: int = 1
    elapsed_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2) + "\n"


def _config_digest(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()


def simulate_partition(cfg: ExperimentConfig, start: int, stop: int,
                       checkpoint: Path | None = None, chunk: int = CHUNK_ROUNDS) -> TallyTable:
    """Tally rounds ``start <= i < stop``, resuming from ``checkpoint`` if present."""
    table = TallyTable.empty()
    position = start
    digest = _config_digest(cfg)
    if checkpoint is not None and checkpoint.exists():
        state = json.loads(checkpoint.read_text())
        if (state["config"], state["start"], state["stop"]) == (digest, start, stop):
            table = TallyTable(np.array(state["counts"]), np.array(state["mismatched"]))
            position = state["next"]
            log.info("resuming rounds %d..%d from %d", start, stop, position)
    t0 = time.monotonic()
    while position < stop:
        end = min(position + chunk, stop)
        table = table.merge(tally_batch(simulate_rounds(cfg, position, end)))
        position = end
        if checkpoint is not None:
            tmp = checkpoint.with_suffix(".tmp")
            tmp.write_text(json.dumps({
                "config": digest, "start": start, "stop": stop, "next": position,
                "counts": table.counts.tolist(), "mismatched": table.mismatched.tolist(),
            }))
            tmp.replace(checkpoint)
        done = position - start
        rate = done / max(time.monotonic() - t0, 1e-9)
        log.info("rounds %d..%d: %.1f%% (%.3g rounds/s)", start, stop,
                 100.0 * done / (stop - start), rate)
    return table


def _partition_bounds(n: int, parts: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, n, parts + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def simulate_table(cfg: ExperimentConfig, partitions: int = 1,
                   checkpoint_dir: Path | None = None, chunk: int = CHUNK_ROUNDS) -> TallyTable:
    bounds = _partition_bounds(cfg.pulse_pairs, max(1, partitions))
    paths = [None] * len(bounds)
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        paths = [checkpoint_dir / f"part-{i:04d}.json" for i in range(len(bounds))]
    if len(bounds) == 1:
        (a, b), = bounds
        return simulate_partition(cfg, a, b, paths[0], chunk)
    table = TallyTable.empty()
    with ProcessPoolExecutor(max_workers=len(bounds)) as pool:
        futures = [pool.submit(simulate_partition, cfg, a, b, p, chunk)
                   for (a, b), p in zip(bounds, paths)]
        for future in futures:
            table = table.merge(future.result())
    return table


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # attribute any failure to the stage that raised it
        raise PipelineError(name, exc) from exc


def post_process(table: TallyTable, cfg: ExperimentConfig) -> tuple[DecoyEstimate, KeyRateReport]:
    est = _stage("decoy-lp", estimate, rates(table), cfg)
    report = _stage("keyrate", key_rate, table, est, cfg.intensities_alice, cfg.intensities_bob,
                    cfg.ec_efficiency, cfg.pulse_pairs, cfg.repetition_rate_hz)
    return est, report


def run_pipeline(config_source: str | Path, out_dir: str | Path, partitions: int = 1,
                 chunk: int = CHUNK_ROUNDS) -> RunManifest:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    cfg = _stage("core-model", load_config, config_source)
    raw = config_source_bytes(config_source)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    snapshot_name = "config.snapshot" + (Path(str(config_source)).suffix or ".json")
    (out / snapshot_name).write_bytes(raw)
    checkpoints = out / CHECKPOINT_DIR
    table = _stage("bsm-detector", simulate_table, cfg, partitions, checkpoints, chunk)
    _stage("sift-tally", write_csv, table, out / TALLY_FILE)
    for part in checkpoints.glob("part-*.json"):
        part.unlink()
    checkpoints.rmdir()

    est, report = post_process(table, cfg)
    (out / ESTIMATE_FILE).write_text(json.dumps(est.to_dict(), indent=2) + "\n")
    (out / KEYRATE_JSON).write_text(report.to_json())
    (out / KEYRATE_TEXT).write_text(report.to_text())

    manifest = RunManifest(
        config=cfg.to_dict(),
        config_snapshot=snapshot_name,
        config_sha256=hashlib.sha256(raw).hexdigest(),
        seed=cfg.seed,
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
        versions={"mdiqkd": __version__, "numpy": np.__version__,
                  "python": platform.python_version()},
        outputs=[snapshot_name, TALLY_FILE, ESTIMATE_FILE, KEYRATE_JSON, KEYRATE_TEXT,
                 MANIFEST_FILE],
        partitions=partitions,
        elapsed_s=round(time.monotonic() - t0, 3),
    )
    (out / MANIFEST_FILE).write_text(manifest.to_json())
    return manifest


def estimate_only(tally_csv: str | Path, config_source: str | Path
                  ) -> tuple[DecoyEstimate, KeyRateReport]:
    cfg = _stage("core-model", load_config, config_source)
    table = _stage("sift-tally", read_csv, tally_csv)
    return post_process(table, cfg)
