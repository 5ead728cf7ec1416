"""Command-line front end.

Subcommands: gen-data, partition, topology, run, eval, plot. Exit codes:
0 success, 2 usage/validation error, 1 runtime error. Diagnostics go to
stderr, data to stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import re
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import plotting
from . import sim
from . import topology as topo
from .errors import ConfigError, ContractError, Error, NumericalError, ParseError, ValidationError

# Config file schema: (file key) -> ExperimentConfig field. Top-level
# keys are flat; the algorithm/topology blocks nest one level.
_TOP_KEYS = {
    "data": "data",
    "synthetic_n": "synthetic_n",
    "synthetic_dim": "synthetic_dim",
    "synthetic_pos_frac": "synthetic_pos_frac",
    "synthetic_separation": "synthetic_separation",
    "drop_frac": "drop_frac",
    "scale": "scale",
    "partition": "partition_scheme",
    "test": "test",
    "holdout_fraction": "holdout_fraction",
    "model": "model_kind",
    "hidden_dim": "hidden_dim",
    "n_nodes": "n_nodes",
    "rounds": "rounds",
    "eval_every": "eval_every",
    "seed": "seed",
    "output": "output",
    "parallel": "parallel",
    "record_timing": "record_timing",
}
_ALGO_KEYS = {
    "name": "algorithm",
    "eta": "eta",
    "b": "b",
    "m": "m",
    "margin": "margin",
    "gradient_tracking": "gradient_tracking",
    "batch_mode": "batch_mode",
    "alpha": "alpha",
    "init_batch": "init_batch",
    "batch": "sgd_batch",
}
_TOPO_KEYS = {"kind": "topology", "q": "period_q", "path": "topology_path"}
_BLOCKS = {"algorithm": _ALGO_KEYS, "topology": _TOPO_KEYS}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(sim.ExperimentConfig)}
_OVERRIDE_RE = re.compile(r"^--([a-z_]+(?:\.[a-z_]+)?)=(.*)$")


def _field_for_key(dotted: str) -> str:
    """Map a config-file key (possibly dotted) onto its config field."""
    if "." in dotted:
        block, key = dotted.split(".", 1)
        table = _BLOCKS.get(block)
        if table is None or key not in table:
            raise ConfigError(f"unknown config key {dotted!r}")
        return table[key]
    if dotted not in _TOP_KEYS:
        raise ConfigError(f"unknown config key {dotted!r}")
    return _TOP_KEYS[dotted]


def _coerce(field: str, raw) -> object:
    kind = _FIELD_TYPES[field]
    if kind == "bool" or isinstance(raw, bool):
        if isinstance(raw, bool):
            return raw
        lowered = str(raw).lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{field}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected {kind}, got {raw!r}") from None
    return str(raw)


def load_config(path: str) -> sim.ExperimentConfig:
    """Parse a run config file (flat keys plus algorithm/topology blocks);
    unknown keys are errors."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values: dict = {}
    for key, value in doc.items():
        if key in _BLOCKS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be a block of keys")
            for sub, subval in value.items():
                field = _field_for_key(f"{key}.{sub}")
                values[field] = _coerce(field, subval)
        else:
            field = _field_for_key(key)
            values[field] = _coerce(field, value)
    return sim.ExperimentConfig(**values)


def apply_overrides(cfg: sim.ExperimentConfig, overrides: list[str]) -> sim.ExperimentConfig:
    """Apply --key=value / --block.key=value strings onto a config."""
    updates = {}
    for text in overrides:
        match = _OVERRIDE_RE.match(text)
        if not match:
            raise ConfigError(f"bad override {text!r}; expected --key=value")
        field = _field_for_key(match.group(1))
        updates[field] = _coerce(field, match.group(2))
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_config(cfg: sim.ExperimentConfig) -> str:
    """Render a config back to its file form (used for the resolved echo)."""
    lines = []
    for key, field in _TOP_KEYS.items():
        lines.append(f"{key} = {_toml_value(getattr(cfg, field))}")
    for block, table in _BLOCKS.items():
        lines.append("")
        lines.append(f"[{block}]")
        for key, field in table.items():
            lines.append(f"{key} = {_toml_value(getattr(cfg, field))}")
    return "\n".join(lines) + "\n"


def _cmd_gen_data(args) -> int:
    ds = data_mod.gen_synthetic(args.n, args.dim, args.pos_frac, args.separation, args.seed)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data_mod.serialize_libsvm(ds))
    stats = data_mod.dataset_stats(ds)
    print(f"wrote {args.out}: n={stats['n']} dim={stats['dim']} positives={stats['positives']}")
    return 0


def _cmd_partition(args) -> int:
    ds = data_mod.load_libsvm(args.data)
    part = data_mod.partition(ds, args.n_nodes, args.scheme, args.seed)
    pos_mask = ds.labels == 1
    for i, shard in enumerate(part.shards):
        path = f"{args.out_prefix}.shard{i:02d}.txt"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(str(int(j)) for j in shard) + "\n")
        print(f"shard {i}: {shard.size} samples, {int(pos_mask[shard].sum())} positives -> {path}")
    return 0


def _topology_matrix(args) -> topo.MixingMatrix:
    if args.kind == "file":
        if not args.file:
            raise ConfigError("--kind file requires --file")
        return topo.from_file(args.file)
    if args.kind == "federated":
        # Report the one-period product: q-1 identity rounds then exact
        # averaging collapse to the complete matrix.
        schedule = topo.federated_schedule(args.n, args.q)
        w = np.eye(args.n)
        for t in range(args.q):
            w = topo.schedule_at(schedule, t).w @ w
        return topo.MixingMatrix(w)
    builder = {"ring": topo.ring, "complete": topo.complete, "identity": topo.identity}[args.kind]
    return builder(args.n)


def _cmd_topology(args) -> int:
    mat = _topology_matrix(args)
    mat.validate(tol=1e-9)
    print(f"n {mat.n}")
    print(f"lambda {topo.spectral_gap(mat):.6f}")
    print("valid yes")
    return 0


def _cmd_run(args, overrides: list[str]) -> int:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, overrides)
    errors = sim.validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    stem = cfg.output[:-4] if cfg.output.endswith(".csv") else cfg.output
    with open(stem + ".resolved.toml", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_config(cfg))
    rows = sim.run_experiment(cfg)
    if not args.no_figure:
        plotting.render_run_figure(rows, stem + ".png", title=os.path.basename(stem))
    last = rows[-1]
    print(f"wrote {cfg.output}: {len(rows)} rows, final test_ap {last.test_ap:.6f}")
    return 0


def _cmd_eval(args) -> int:
    params = model_mod.load_params(args.model)
    ds = data_mod.load_libsvm(args.data)
    result = metrics_mod.evaluate(params, ds)
    print(f"ap {result['ap']:.6f}")
    print(f"n {result['n']}")
    print(f"n_pos {result['n_pos']}")
    return 0


def _read_metrics_csv(path: str) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != sim.CSV_HEADER:
            raise ValidationError(f"{path}: unexpected header {header!r}")
        body = [line.strip() for line in fh if line.strip()]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    columns = sim.CSV_HEADER.split(",")
    table = np.array([[float(v) for v in line.split(",")] for line in body])
    if table.shape[1] != len(columns):
        raise ValidationError(f"{path}: ragged rows")
    return {name: table[:, i] for i, name in enumerate(columns)}


def _cmd_plot(args) -> int:
    columns = sim.CSV_HEADER.split(",")
    if args.column not in columns or args.column == "round":
        raise ConfigError(f"unknown column {args.column!r}; available: {', '.join(columns[1:])}")
    series = []
    for path in args.csv:
        table = _read_metrics_csv(path)
        stem = os.path.splitext(os.path.basename(path))[0]
        series.append((stem, table["round"], table[args.column]))
    plotting.write_series_svg(series, "round", args.column, args.out)
    print(f"wrote {args.out}: {len(series)} series")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apgossip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic LIBSVM dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--pos-frac", dest="pos_frac", type=float, required=True)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("partition", help="write per-node shard index files")
    p.add_argument("--data", required=True)
    p.add_argument("--n-nodes", dest="n_nodes", type=int, required=True)
    p.add_argument("--scheme", choices=("iid", "label_skew"), default="iid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", dest="out_prefix", required=True)

    p = sub.add_parser("topology", help="print size, contraction factor, validity")
    p.add_argument("--kind", choices=("ring", "complete", "identity", "federated", "file"), required=True)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--file", default="")

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--no-figure", action="store_true", help="skip the PNG report")

    p = sub.add_parser("eval", help="score a saved model on a LIBSVM file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("plot", help="render metric CSVs as an SVG line chart")
    p.add_argument("--column", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("csv", nargs="+")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    overrides: list[str] = []
    if argv and argv[0] == "run":
        rest = []
        for token in argv[1:]:
            is_override = _OVERRIDE_RE.match(token) and not token.startswith("--config=")
            (overrides if is_override else rest).append(token)
        argv = ["run"] + rest
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        if args.command == "partition":
            return _cmd_partition(args)
        if args.command == "topology":
            return _cmd_topology(args)
        if args.command == "run":
            return _cmd_run(args, overrides)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_plot(args)
    except (ParseError, ConfigError, ContractError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, Error, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
