"""Grid search with seed repetition, an append-only JSONL log, and result aggregation."""
from __future__ import annotations

import copy
import itertools
import json
import logging
import os
import statistics
import threading
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from .config import TrainConfig, canonical_json, config_hash, teacher_to_dict
from .errors import ConfigError, FormatError
from .teachers import build_teacher, teacher_train_config
from .training import TrialRecord, train

log = logging.getLogger(__name__)

# short hyperparameter names -> dotted paths into the TrainConfig dict
PARAM_PATHS = {
    "alpha": "distill.alpha",
    "adaptive": "distill.adaptive",
    "teacher": "distill.teacher",
    "teacher_p": "distill.teacher.dropout_p",
    "teacher_epochs": "distill.teacher.epochs",
    "teacher_seed": "distill.teacher.seed",
    "heuristic_a": "distill.teacher.a",
    "heuristic_T": "distill.teacher.T",
    "lag_epochs": "distill.teacher.lag_epochs",
    "kd_T": "distill.T",
    "kd_lambda": "distill.kd_lambda",
    "l1": "sgd.l1_lambda",
    "l2": "sgd.l2_lambda",
    "lr": "sgd.learning_rate",
    "dropout_p": "network.dropout_p",
    "epsilon": "label_smoothing",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "method": "method",
}

# value lists used when a grid file gives "default" instead of a list
DEFAULT_VALUES = {
    "alpha": [0.005, 0.01, 0.05, 0.1, 0.3],
    "teacher_p": [0.5, 0.9, 0.99, 0.999, 0.9999],
    "epsilon": [0.05, 0.1, 0.2, 0.5],
    "l1": [1e-5, 1e-4, 1e-3],
    "l2": [1e-5, 1e-4, 1e-3],
    "dropout_p": [0.1, 0.3, 0.5],
}


@dataclass
class HyperGrid:
    params: dict[str, list] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])

    @classmethod
    def from_dict(cls, d: dict) -> "HyperGrid":
        params = {}
        for name, values in dict(d.get("params", {})).items():
            if values == "default":
                if name not in DEFAULT_VALUES:
                    raise ConfigError(f"no default value list for {name!r}")
                values = DEFAULT_VALUES[name]
            if not isinstance(values, list):
                raise ConfigError(f"values for {name!r} must be a list")
            params[name] = list(values)
        return cls(params=params, seeds=list(d.get("seeds", [])))


def _set_path(d: dict, path: str, value, name: str) -> None:
    keys = path.split(".")
    node = d
    for k in keys[:-1]:
        if not isinstance(node, dict) or node.get(k) is None:
            raise ConfigError(f"hyperparameter {name!r} needs '{'.'.join(keys[:-1])}' in the base config")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"hyperparameter {name!r}: base config has no field '{path}'")
    node[keys[-1]] = copy.deepcopy(value)


def expand(grid: HyperGrid, base: TrainConfig) -> list[TrainConfig]:
    """Cartesian product of the value lists times the seeds, validated up front."""
    if not grid.seeds:
        raise ConfigError("grid needs at least one seed")
    names = list(grid.params)
    for name in names:
        if not grid.params[name]:
            raise ConfigError(f"empty value list for {name!r}")
        if name not in PARAM_PATHS and "." not in name:
            raise ConfigError(f"unknown hyperparameter {name!r}; known: {sorted(PARAM_PATHS)}")
    base_dict = base.to_dict()
    out = []
    for combo in itertools.product(*(grid.params[n] for n in names)):
        d = copy.deepcopy(base_dict)
        for name, value in zip(names, combo):
            _set_path(d, PARAM_PATHS.get(name, name), value, name)
        for seed in grid.seeds:
            d_seed = copy.deepcopy(d)
            d_seed["seed"] = int(seed)
            d_seed["network"]["init_seed"] = int(seed)
            out.append(TrainConfig.from_dict(d_seed))
    return out


# ---------------------------------------------------------------------------
# JSONL log


def _parse_line(line: str, lineno: int, path) -> TrialRecord:
    try:
        return TrialRecord.from_dict(json.loads(line))
    except (json.JSONDecodeError, TypeError) as exc:
        raise FormatError(f"{path}:{lineno}: corrupt record ({exc})") from exc


def read_log(path, repair: bool = False) -> list[TrialRecord]:
    """Parse a JSONL log. With ``repair``, a torn final line (no newline) is cut off."""
    path = Path(path)
    if not path.exists():
        return []
    data = path.read_bytes()
    if repair and data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n") + 1
        log.warning("dropping torn trailing record in %s", path)
        with open(path, "r+b") as f:
            f.truncate(cut)
        data = data[:cut]
    records = []
    for lineno, line in enumerate(data.decode().splitlines(), start=1):
        if line.strip():
            records.append(_parse_line(line, lineno, path))
    return records


class LogWriter:
    """Single-writer appender; every record is one line, flushed and fsynced."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: TrialRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True) + "\n"
        with self._lock, open(self.path, "a") as f:
            f.write(line)
            f.flush()
            os.fsync(f.fileno())


# ---------------------------------------------------------------------------
# running trials

_DATA = {}
_TEACHER_CACHE: dict[str, object] = {}


def _init_worker(train_ds, test_ds):
    _DATA["train"], _DATA["test"] = train_ds, test_ds
    _TEACHER_CACHE.clear()


def _teacher_key(cfg: TrainConfig) -> str:
    spec = cfg.distill.teacher
    tcfg = teacher_train_config(spec, cfg)
    basis = tcfg.to_dict() if tcfg is not None else {"network": cfg.to_dict()["network"]}
    return canonical_json({"spec": teacher_to_dict(spec), "basis": basis})


def run_trial(cfg: TrainConfig, train_ds=None, test_ds=None) -> TrialRecord:
    """Build the teacher (cached per process) and train one configuration."""
    train_ds = train_ds if train_ds is not None else _DATA["train"]
    test_ds = test_ds if test_ds is not None else _DATA.get("test")
    teacher = None
    if cfg.distill is not None and cfg.distill.teacher.kind != "self_snapshot":
        key = _teacher_key(cfg)
        teacher = _TEACHER_CACHE.get(key)
        if teacher is None:
            teacher = build_teacher(cfg.distill.teacher, train_ds, cfg)
            _TEACHER_CACHE[key] = teacher
    _, record = train(cfg, train_ds, test_ds, teacher=teacher)
    return record


def default_workers() -> int:
    env = os.environ.get("MDTK_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def grid_search(grid: HyperGrid, base: TrainConfig, train_ds, test_ds, log_path,
                workers: int | None = None) -> list[TrialRecord]:
    """Run every (config, seed) trial not already in the log; returns the grid's records.

    Records are appended to ``log_path`` as each trial finishes, so an interrupted
    search resumes where it stopped.
    """
    configs = expand(grid, base)
    done = {r.key(): r for r in read_log(log_path, repair=True)}
    wanted = [(config_hash(c), c.seed) for c in configs]
    todo = [c for c, k in zip(configs, wanted) if k not in done]
    log.info("grid: %d trials, %d already logged", len(configs), len(configs) - len(todo))
    writer = LogWriter(log_path)
    workers = workers or default_workers()
    _init_worker(train_ds, test_ds)
    if workers <= 1 or len(todo) <= 1:
        for cfg in todo:
            rec = run_trial(cfg)
            writer.append(rec)
            done[rec.key()] = rec
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(train_ds, test_ds)) as pool:
            futures = [pool.submit(run_trial, cfg) for cfg in todo]
            for fut in as_completed(futures):
                rec = fut.result()
                writer.append(rec)
                done[rec.key()] = rec
    return [done[k] for k in wanted]


# ---------------------------------------------------------------------------
# reporting


def _metric(rec: TrialRecord, metric: str) -> float:
    v = getattr(rec, metric)
    if v is None:
        raise ConfigError(f"record {rec.config_hash}/{rec.seed} has no {metric}")
    return float(v)


def report(log_path, metric: str = "test_accuracy") -> list[dict]:
    """Best configuration per method, aggregated over seeds, best method first.

    Each row: method, config_hash, mean, std (n-1 denominator), n, and the best
    single record of that configuration.
    """
    records = read_log(log_path)
    groups: dict[tuple[str, str], list[TrialRecord]] = {}
    for rec in records:
        groups.setdefault((rec.method, rec.config_hash), []).append(rec)
    best: dict[str, dict] = {}
    for (method, chash), recs in groups.items():
        vals = [_metric(r, metric) for r in recs]
        row = {
            "method": method,
            "config_hash": chash,
            "mean": statistics.fmean(vals),
            "std": statistics.stdev(vals) if len(vals) > 1 else 0.0,
            "n": len(vals),
            "best": max(recs, key=lambda r: (_metric(r, metric), -r.seed)),
        }
        cur = best.get(method)
        if cur is None or (row["mean"], cur["config_hash"]) > (cur["mean"], chash):
            best[method] = row
    return sorted(best.values(), key=lambda r: (-r["mean"], r["config_hash"]))
