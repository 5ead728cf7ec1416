"""Experiment orchestration: data prep, topology, round loop, metrics CSV.

A run is fully determined by its config and seed: batches come from
counter-based streams, and with ``record_timing`` off (the default) the
CSV is byte-identical across repeats and across serial/parallel engine
modes. Wall-clock timing is therefore opt-in, since a real elapsed_ms
column would break reproducible output.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import optimizer as opt
from . import topology as topo
from .data import Dataset
from .errors import ConfigError, NumericalError
from .model import ModelSpec, save_params
from .rng import RngStreams
from .surrogate import ClampCounter, SurrogateConfig, batch_objective

CSV_HEADER = "round,mean_train_surrogate,test_ap,consensus_error,clamp_events,elapsed_ms"

_ALGORITHMS = ("slate", "slate_m", "dpsgd")
_TOPOLOGIES = ("ring", "complete", "federated", "file")
_PROBE_POS_CAP = 256
_PROBE_INNER_CAP = 2048


@dataclass(frozen=True)
class ExperimentConfig:
    # data block
    data: str = "synthetic"  # "synthetic" or a LIBSVM file path
    synthetic_n: int = 2000
    synthetic_dim: int = 10
    synthetic_pos_frac: float = 0.05
    synthetic_separation: float = 1.0
    drop_frac: float = 0.0
    scale: bool = False
    partition_scheme: str = "iid"
    # test block
    test: str = "holdout"  # "holdout" or a LIBSVM file path
    holdout_fraction: float = 0.2
    # model
    model_kind: str = "linear"
    hidden_dim: int = 28
    # algorithm block
    algorithm: str = "slate"
    eta: float = 0.01
    b: int = 2
    m: int = 20
    margin: float = 0.1
    gradient_tracking: bool = False
    batch_mode: str = "uniform"
    alpha: float = 0.1
    init_batch: int = 2
    sgd_batch: int = 20
    # topology block
    topology: str = "ring"
    period_q: int = 1
    topology_path: str = ""
    # run block
    n_nodes: int = 4
    rounds: int = 100
    eval_every: int = 10
    seed: int = 0
    output: str = "metrics.csv"
    parallel: bool = False
    record_timing: bool = False


@dataclass(frozen=True)
class MetricsRow:
    round: int
    mean_train_surrogate: float
    test_ap: float
    consensus_error: float
    clamp_events: int
    elapsed_ms: int

    def as_csv(self) -> str:
        return (
            f"{self.round},{self.mean_train_surrogate!r},{self.test_ap!r},"
            f"{self.consensus_error!r},{self.clamp_events},{self.elapsed_ms}"
        )


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """All config invariants, checked without side effects on the run."""
    errors = []
    if cfg.rounds < 1:
        errors.append("rounds must be >= 1")
    if cfg.eval_every < 1:
        errors.append("eval_every must be >= 1")
    if cfg.n_nodes < 1:
        errors.append("n_nodes must be >= 1")
    if cfg.algorithm not in _ALGORITHMS:
        errors.append(f"algorithm must be one of {_ALGORITHMS}")
    if cfg.model_kind not in ("linear", "mlp"):
        errors.append("model must be 'linear' or 'mlp'")
    if cfg.model_kind == "mlp" and cfg.hidden_dim < 1:
        errors.append("hidden_dim must be >= 1 for mlp")
    if cfg.partition_scheme not in ("iid", "label_skew"):
        errors.append("partition must be 'iid' or 'label_skew'")
    if cfg.topology not in _TOPOLOGIES:
        errors.append(f"topology must be one of {_TOPOLOGIES}")
    if cfg.topology == "federated" and cfg.period_q < 1:
        errors.append("federated period q must be >= 1")
    if cfg.topology == "file":
        if not cfg.topology_path:
            errors.append("topology 'file' needs a path")
        elif not os.path.exists(cfg.topology_path):
            errors.append(f"topology file not found: {cfg.topology_path}")
        else:
            try:
                mat = topo.from_file(cfg.topology_path)
                if mat.n != cfg.n_nodes:
                    errors.append(f"topology file is {mat.n}x{mat.n} but n_nodes={cfg.n_nodes}")
            except Exception as exc:  # parse/validation detail goes to the message
                errors.append(str(exc))
    if cfg.data == "synthetic":
        if cfg.synthetic_n < 2:
            errors.append("synthetic n must be >= 2")
        if cfg.synthetic_dim < 1:
            errors.append("synthetic dim must be >= 1")
        if not 0.0 < cfg.synthetic_pos_frac < 1.0:
            errors.append("synthetic pos_frac must be in (0, 1)")
        if cfg.synthetic_separation < 0.0:
            errors.append("synthetic separation must be >= 0")
    elif not os.path.exists(cfg.data):
        errors.append(f"data file not found: {cfg.data}")
    if not 0.0 <= cfg.drop_frac < 1.0:
        errors.append("drop_frac must be in [0, 1)")
    if cfg.test == "holdout":
        if not 0.0 < cfg.holdout_fraction < 1.0:
            errors.append("holdout_fraction must be in (0, 1)")
    elif not os.path.exists(cfg.test):
        errors.append(f"test file not found: {cfg.test}")
    if cfg.eta <= 0.0:
        errors.append("eta must be > 0")
    if cfg.b < 1 or cfg.m < 1:
        errors.append("batch sizes b and m must be >= 1")
    if cfg.batch_mode not in ("uniform", "stratified"):
        errors.append("batch_mode must be 'uniform' or 'stratified'")
    elif cfg.batch_mode == "stratified" and cfg.m <= cfg.b and cfg.algorithm != "dpsgd":
        errors.append("stratified batch_mode needs m > b")
    if cfg.margin <= 0.0:
        errors.append("margin must be > 0")
    if cfg.algorithm == "slate_m":
        if not 0.0 < cfg.alpha <= 1.0:
            errors.append("alpha must be in (0, 1]")
        if cfg.init_batch < 1:
            errors.append("init_batch must be >= 1")
    if cfg.algorithm == "dpsgd" and cfg.sgd_batch < 1:
        errors.append("sgd_batch must be >= 1")
    if not cfg.output:
        errors.append("output path must be set")
    return errors


def model_output_path(cfg: ExperimentConfig) -> str:
    stem = cfg.output[:-4] if cfg.output.endswith(".csv") else cfg.output
    return stem + ".model.txt"


def _prepare_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.data == "synthetic":
        train = data_mod.gen_synthetic(
            cfg.synthetic_n,
            cfg.synthetic_dim,
            cfg.synthetic_pos_frac,
            cfg.synthetic_separation,
            cfg.seed,
        )
    else:
        train = data_mod.load_libsvm(cfg.data)
    if cfg.test == "holdout":
        # Seeded shuffle, last fraction becomes the test split; the test
        # split is frozen before imbalancing touches the training side.
        rng = np.random.default_rng([cfg.seed, 101])
        perm = rng.permutation(train.n)
        n_test = int(round(cfg.holdout_fraction * train.n))
        if n_test < 1 or n_test >= train.n:
            raise ConfigError("holdout split leaves an empty train or test set")
        test = train.take(perm[-n_test:])
        train = train.take(perm[:-n_test])
    else:
        test = data_mod.load_libsvm(cfg.test)
    if cfg.drop_frac > 0.0:
        train = data_mod.drop_positives(train, cfg.drop_frac, cfg.seed + 1)
    if cfg.scale:
        lo, span = data_mod.fit_minmax(train)
        train = data_mod.apply_minmax(train, lo, span)
        test = data_mod.apply_minmax(test, lo, span)
    if test.dim != train.dim:
        raise ConfigError(f"train dim {train.dim} != test dim {test.dim}")
    if train.n_pos == 0 or train.n_pos == train.n:
        raise ConfigError("training split needs both classes")
    if test.n_pos == 0:
        raise ConfigError("test split has no positives; adjust seed or fraction")
    return train, test


def _build_schedule(cfg: ExperimentConfig) -> topo.TopologySchedule:
    if cfg.topology == "ring":
        return topo.static_schedule(topo.ring(cfg.n_nodes))
    if cfg.topology == "complete":
        return topo.static_schedule(topo.complete(cfg.n_nodes))
    if cfg.topology == "federated":
        return topo.federated_schedule(cfg.n_nodes, cfg.period_q)
    mat = topo.from_file(cfg.topology_path)
    return topo.static_schedule(mat)


def _probe_batches(cfg: ExperimentConfig, train: Dataset) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng([cfg.seed, 102])
    pos_pool = train.positive_indices
    pos_sel = rng.choice(pos_pool, size=min(_PROBE_POS_CAP, pos_pool.size), replace=False)
    inner_sel = rng.choice(train.n, size=min(_PROBE_INNER_CAP, train.n), replace=False)
    return train.take(pos_sel), train.take(inner_sel)


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRow]:
    """Run one experiment; returns the metric rows and writes them (plus
    the final averaged model) incrementally to cfg.output."""
    errors = validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    train, test = _prepare_data(cfg)
    part = data_mod.partition(train, cfg.n_nodes, cfg.partition_scheme, cfg.seed + 2)
    shards = [train.take(idx) for idx in part.shards]
    schedule = _build_schedule(cfg)
    spec = (
        ModelSpec("linear", train.dim)
        if cfg.model_kind == "linear"
        else ModelSpec("mlp", train.dim, cfg.hidden_dim)
    )
    counter = ClampCounter()
    scfg = SurrogateConfig(margin=cfg.margin, clamp_counter=counter)
    probe_pos, probe_inner = _probe_batches(cfg, train)
    streams = RngStreams(cfg.seed)
    pool = ThreadPoolExecutor(max_workers=min(cfg.n_nodes, os.cpu_count() or 1)) if cfg.parallel else None

    if cfg.algorithm == "slate":
        acfg = opt.SlateConfig(
            eta=cfg.eta,
            b=cfg.b,
            m=cfg.m,
            surrogate=scfg,
            gradient_tracking=cfg.gradient_tracking,
            seed=cfg.seed,
            inner_mode=cfg.batch_mode,
        )
    elif cfg.algorithm == "slate_m":
        acfg = opt.SlateMConfig(
            eta=cfg.eta,
            b=cfg.b,
            m=cfg.m,
            surrogate=scfg,
            gradient_tracking=cfg.gradient_tracking,
            seed=cfg.seed,
            inner_mode=cfg.batch_mode,
            alpha=cfg.alpha,
            init_batch=cfg.init_batch,
        )
    else:
        acfg = opt.SlateConfig(eta=cfg.eta, b=1, m=1, surrogate=scfg, seed=cfg.seed)

    start = time.monotonic()
    rows: list[MetricsRow] = []

    def snapshot(states, round_index: int) -> MetricsRow:
        mean = opt.mean_params(states)
        surr = -batch_objective(mean, probe_pos, probe_inner, scfg)
        ap = metrics_mod.evaluate(mean, test)["ap"]
        cons = metrics_mod.consensus_error(opt.stack_params(states))
        elapsed = int((time.monotonic() - start) * 1000) if cfg.record_timing else 0
        return MetricsRow(round_index, surr, ap, cons, counter.total, elapsed)

    try:
        with open(cfg.output, "w", encoding="utf-8", newline="\n") as out:
            out.write(CSV_HEADER + "\n")

            def emit(row: MetricsRow) -> None:
                rows.append(row)
                out.write(row.as_csv() + "\n")
                out.flush()

            states = opt.slate_init(spec, cfg.n_nodes, acfg)
            emit(snapshot(states, 0))
            for r in range(1, cfg.rounds + 1):
                w_t = topo.schedule_at(schedule, r - 1)
                if cfg.algorithm == "slate":
                    states = opt.slate_round(states, shards, w_t, acfg, streams, r - 1, pool)
                elif cfg.algorithm == "slate_m":
                    if r == 1:
                        states = opt.slatem_init(
                            spec, cfg.n_nodes, shards, w_t, acfg, streams, pool
                        )
                    else:
                        states = opt.slatem_round(states, shards, w_t, acfg, streams, r - 1, pool)
                else:
                    states = opt.dpsgd_round(
                        states, shards, w_t, cfg.eta, cfg.sgd_batch, streams, r - 1, pool
                    )
                if not np.all(np.isfinite(opt.stack_params(states))):
                    raise NumericalError(f"non-finite parameters at round {r}")
                if r % cfg.eval_every == 0 or r == cfg.rounds:
                    emit(snapshot(states, r))
            save_params(opt.mean_params(states), model_output_path(cfg))
    finally:
        if pool is not None:
            pool.shutdown()
    return rows
