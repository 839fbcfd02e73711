"""Command-line runner: ``fedcdl run | compare | cdtheory | inspect-topology | gen-data``.

Experiment spec files are INI-style (see README). Relative output paths are
resolved against ``$FEDCDL_OUTPUT_ROOT`` when it is set, else the working
directory. Exit codes: 0 ok, 1 runtime failure, 2 invalid input.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import cdtheory
from .data import Dataset, SyntheticConfig, generate_synthetic, load_csv, partition_dirichlet, train_test_split, write_csv
from .federation import TrainerConfig, TrainingDivergedError, run_experiment, write_metrics_csv
from .losses import CdlConfig
from .model import NetConfig, init_net, params_to_bytes
from .topology import (
    BUILTIN_FILES,
    BUILTIN_GENERATED,
    TopologyError,
    TopologyGraph,
    build_consensus_matrix,
    builtin_topology,
    cycle_time_estimate,
    load_topology,
    spectral_gap,
)

log = logging.getLogger("fedcdl")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
SPEC_VERSION = 1
OUTPUT_ROOT_ENV = "FEDCDL_OUTPUT_ROOT"


class SpecError(ValueError):
    """Invalid experiment spec; the message names the offending field."""


@dataclass
class ExperimentSpec:
    trainer: TrainerConfig
    seeds: List[int]
    output_dir: Path
    topology: str
    topology_silos: Optional[int] = None
    data_csv: Optional[Path] = None
    synthetic: SyntheticConfig = SyntheticConfig()
    data_seed: Optional[int] = None
    silos: Optional[int] = None
    test_fraction: float = 0.2


def resolve_output(path) -> Path:
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


# -- spec parsing ---------------------------------------------------------------

_SECTIONS = {
    "experiment": {"spec_version", "seeds", "output"},
    "data": {"source", "seed", "silos", "test_fraction"} | {f.name for f in fields(SyntheticConfig)} - {"seed"},
    "topology": {"name", "silos"},
    "trainer": {
        "scheme", "rounds", "local_updates", "learning_rate", "batch_size", "cdl_enabled",
        "update_order", "shared_init", "checkpoint_every",
    },
    "cdl": {f.name for f in fields(CdlConfig)},
    "net": {"hidden_dim", "residual_blocks", "feature_dim"},
}


def _convert(section: str, key: str, raw: str, kind):
    where = f"[{section}] {key}"
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("must be finite")
            return value
        return raw
    except ValueError as exc:
        raise SpecError(f"{where}: {exc}") from None


def _typed(section, cp, key, kind, default=None):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    if raw.strip() == "":
        return default
    return _convert(section, key, raw, kind)


def _kinds(cls) -> Dict[str, type]:
    out = {}
    for f in fields(cls):
        name = str(f.type)
        if name.startswith("Optional["):
            name = name[len("Optional["):-1]
        out[f.name] = {"int": int, "float": float, "bool": bool}.get(name, str)
    return out


def parse_spec(text: str, source: str = "<spec>", base_dir: Optional[Path] = None) -> ExperimentSpec:
    """Parse and validate an experiment spec; raises :class:`SpecError` naming the field."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise SpecError(f"{source}: {exc}") from None
    for section in cp.sections():
        if section not in _SECTIONS:
            raise SpecError(f"[{section}]: unknown section")
        for key in cp.options(section):
            if key not in _SECTIONS[section]:
                raise SpecError(f"[{section}] {key}: unknown field")
    if not cp.has_section("experiment"):
        raise SpecError("[experiment]: section is required")
    version = _typed("experiment", cp, "spec_version", int)
    if version is None:
        raise SpecError("[experiment] spec_version: required")
    if version != SPEC_VERSION:
        raise SpecError(f"[experiment] spec_version: unsupported version {version} (expected {SPEC_VERSION})")
    seeds_raw = cp.get("experiment", "seeds", fallback="0")
    try:
        seeds = [int(s) for s in seeds_raw.replace(",", " ").split()]
    except ValueError:
        raise SpecError(f"[experiment] seeds: expected integers, got {seeds_raw!r}") from None
    if not seeds:
        raise SpecError("[experiment] seeds: seed list must not be empty")
    if len(set(seeds)) != len(seeds):
        raise SpecError("[experiment] seeds: duplicate seeds")
    output = cp.get("experiment", "output", fallback="").strip()
    if not output:
        raise SpecError("[experiment] output: required")

    def section_kwargs(section, cls, allowed=None):
        kinds = _kinds(cls)
        out = {}
        if cp.has_section(section):
            for key in cp.options(section):
                if allowed is not None and key not in allowed:
                    continue
                value = _typed(section, cp, key, kinds[key])
                if value is not None:
                    out[key] = value
        return out

    def build(section, cls, kwargs):
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"[{section}]: {exc}") from None

    cdl = build("cdl", CdlConfig, section_kwargs("cdl", CdlConfig))
    data_kw = section_kwargs("data", SyntheticConfig, _SECTIONS["data"] - {"source", "seed", "silos", "test_fraction"})
    source = cp.get("data", "source", fallback="synthetic").strip() or "synthetic"
    data_csv = None
    if source != "synthetic":
        data_csv = Path(source)
        if not data_csv.is_absolute() and base_dir is not None:
            data_csv = base_dir / data_csv
        if not data_csv.is_file():
            raise SpecError(f"[data] source: no such file {str(data_csv)!r}")
    synthetic = build("data", SyntheticConfig, data_kw)
    test_fraction = _typed("data", cp, "test_fraction", float, 0.2)
    if not 0.0 < test_fraction < 1.0:
        raise SpecError("[data] test_fraction: must lie in (0, 1)")

    topo_name = cp.get("topology", "name", fallback="").strip()
    if not topo_name:
        raise SpecError("[topology] name: required")
    topo_silos = _typed("topology", cp, "silos", int)
    if topo_name not in BUILTIN_FILES and topo_name not in BUILTIN_GENERATED:
        topo_path = Path(topo_name)
        if not topo_path.is_absolute() and base_dir is not None:
            topo_path = base_dir / topo_path
        if not topo_path.is_file():
            known = ", ".join(list(BUILTIN_FILES) + list(BUILTIN_GENERATED))
            raise SpecError(f"[topology] name: unknown topology {topo_name!r} (builtin: {known}; or a file path)")
        topo_name = str(topo_path)
    elif topo_name in BUILTIN_GENERATED and (topo_silos is None or topo_silos < 2):
        raise SpecError(f"[topology] silos: builtin {topo_name!r} needs silos >= 2")

    net_kw = section_kwargs("net", NetConfig)
    trainer_kw = section_kwargs("trainer", TrainerConfig)
    if "scheme" in trainer_kw:
        trainer_kw["scheme"] = trainer_kw["scheme"].upper()
    try:
        net = NetConfig(input_dim=synthetic.input_dim, **net_kw)
        trainer = TrainerConfig(cdl=cdl, net=net, **trainer_kw)
    except (TypeError, ValueError) as exc:
        section = "net" if "net" in str(exc).lower() or "dim" in str(exc) else "trainer"
        raise SpecError(f"[{section}]: {exc}") from None
    return ExperimentSpec(
        trainer=trainer,
        seeds=seeds,
        output_dir=resolve_output(output),
        topology=topo_name,
        topology_silos=topo_silos,
        data_csv=data_csv,
        synthetic=synthetic,
        data_seed=_typed("data", cp, "seed", int),
        silos=_typed("data", cp, "silos", int),
        test_fraction=test_fraction,
    )


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from None
    return parse_spec(text, source=str(path), base_dir=path.parent)


def _load_topology(name: str, n: Optional[int]) -> TopologyGraph:
    if name in BUILTIN_FILES or name in BUILTIN_GENERATED:
        return builtin_topology(name, n)
    return load_topology(name)


# -- experiment assembly ------------------------------------------------------------

def prepare_seed(spec: ExperimentSpec, seed: int):
    """Data, split, partition, topology and trainer config for one seed."""
    data_seed = seed if spec.data_seed is None else spec.data_seed
    if spec.data_csv is not None:
        dataset = load_csv(spec.data_csv)
    else:
        dataset = generate_synthetic(SyntheticConfig(**{**spec.synthetic.__dict__, "seed": data_seed}))
    config = spec.trainer
    if dataset.input_dim != config.net.input_dim:
        config = TrainerConfig(**{**config.__dict__, "net": NetConfig(**{**config.net.__dict__, "input_dim": dataset.input_dim})})
    config = TrainerConfig(**{**config.__dict__, "seed": seed})
    train, test = train_test_split(dataset, spec.test_fraction, data_seed)
    topology = None
    partition = None
    if config.scheme != "CLL":
        topology = _load_topology(spec.topology, spec.topology_silos)
        silos = spec.silos or topology.n
        if config.scheme == "DFL" and silos != topology.n:
            raise SpecError(f"[data] silos: {silos} silos but topology has {topology.n}")
        partition = partition_dirichlet(train, silos, spec.synthetic.dirichlet_alpha, data_seed)
    return config, train, test, partition, topology


def run_spec(spec: ExperimentSpec) -> List[dict]:
    """Run every seed; returns per-seed summaries."""
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for seed in spec.seeds:
        config, train, test, partition, topology = prepare_seed(spec, seed)
        seed_dir = spec.output_dir / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        ckpt = seed_dir / "checkpoints" if config.checkpoint_every else None
        result = run_experiment(config, train, test, partition, topology, checkpoint_dir=ckpt)
        write_metrics_csv(result.history, seed_dir / "metrics.csv")
        final = result.history[-1] if result.history else None
        summary = {
            "seed": seed,
            "scheme": config.scheme,
            "cdl_enabled": config.cdl_enabled,
            "rounds": config.rounds,
            "silos": len(result.state.silos),
            "initial_rmse": result.initial_rmse,
            "initial_mae": result.initial_mae,
            "final_rmse": final.global_rmse if final else result.initial_rmse,
            "final_mae": final.global_mae if final else result.initial_mae,
            "config_hash": config.config_hash(),
        }
        (seed_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        summaries.append(summary)
        log.info("seed %d: final rmse %.5f mae %.5f", seed, summary["final_rmse"], summary["final_mae"])
    lines = ["| seed | initial RMSE | final RMSE | final MAE |", "|---:|---:|---:|---:|"]
    for s in summaries:
        lines.append(f"| {s['seed']} | {s['initial_rmse']:.5f} | {s['final_rmse']:.5f} | {s['final_mae']:.5f} |")
    (spec.output_dir / "summary.md").write_text("\n".join(lines) + "\n")
    return summaries


# -- compare ------------------------------------------------------------------------

def final_metrics(run_dir) -> Dict[int, Tuple[float, float]]:
    """``{seed: (rmse, mae)}`` from the last global row of each seed's metrics CSV."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    seed_dirs = sorted(p for p in run_dir.glob("seed_*") if p.is_dir())
    if not seed_dirs:
        raise FileNotFoundError(f"no seed_* directories in {run_dir}")
    out = {}
    for d in seed_dirs:
        path = d / "metrics.csv"
        if not path.is_file():
            raise FileNotFoundError(f"missing metrics file: {path}")
        last = None
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                if row["silo"] == "global":
                    last = row
        if last is None:
            raise ValueError(f"{path}: no global rows")
        out[int(d.name.split("_", 1)[1])] = (float(last["rmse"]), float(last["mae"]))
    return out


def compare_runs(run_a, run_b) -> str:
    """Markdown table of final RMSE/MAE per seed with deltas (B - A) and a win column."""
    a, b = final_metrics(run_a), final_metrics(run_b)
    if sorted(a) != sorted(b):
        raise ValueError(f"seed lists differ: {sorted(a)} vs {sorted(b)}")
    lines = [
        f"A: {run_a}  ",
        f"B: {run_b}",
        "",
        "| seed | RMSE A | RMSE B | dRMSE (B-A) | MAE A | MAE B | dMAE (B-A) | lower RMSE |",
        "|---:|---:|---:|---:|---:|---:|---:|:---:|",
    ]
    wins = {"A": 0, "B": 0, "tie": 0}
    for seed in sorted(a):
        (ra, ma), (rb, mb) = a[seed], b[seed]
        w = "A" if ra < rb else "B" if rb < ra else "tie"
        wins[w] += 1
        lines.append(f"| {seed} | {ra:.5f} | {rb:.5f} | {rb - ra:+.5f} | {ma:.5f} | {mb:.5f} | {mb - ma:+.5f} | {w} |")
    ra = np.mean([v[0] for v in a.values()])
    rb = np.mean([v[0] for v in b.values()])
    ma = np.mean([v[1] for v in a.values()])
    mb = np.mean([v[1] for v in b.values()])
    lines.append(f"| mean | {ra:.5f} | {rb:.5f} | {rb - ra:+.5f} | {ma:.5f} | {mb:.5f} | {mb - ma:+.5f} | |")
    lines += ["", f"Wins: A {wins['A']}, B {wins['B']}, tie {wins['tie']}"]
    return "\n".join(lines) + "\n"


# -- subcommands ----------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        spec = load_spec(args.spec)
        if args.output:
            spec.output_dir = resolve_output(args.output)
        for seed in spec.seeds:
            prepare_seed(spec, seed)
    except (SpecError, TopologyError, ValueError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        summaries = run_spec(spec)
    except (TrainingDivergedError, OSError, RuntimeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for s in summaries:
        print(f"seed {s['seed']}: rmse {s['final_rmse']:.5f} mae {s['final_mae']:.5f}")
    print(f"results in {spec.output_dir}")
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        report = compare_runs(resolve_output(args.run_a), resolve_output(args.run_b))
    except (FileNotFoundError, ValueError) as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.output:
        out = resolve_output(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_cdtheory(args) -> int:
    try:
        sweeps = [int(s) for s in args.sweeps.replace(",", " ").split()]
    except ValueError:
        print(f"--sweeps: expected integers, got {args.sweeps!r}", file=sys.stderr)
        return EXIT_INVALID
    if not sweeps or min(sweeps) < 0 or args.chains < 2:
        print("--sweeps must be non-negative and --chains >= 2", file=sys.stderr)
        return EXIT_INVALID
    rows = cdtheory.diagnostic_rows(sweeps, n=3, chains=args.chains, seed=args.seed)
    report = resolve_output(args.report)
    cdtheory.write_report(rows, report)
    checks = cdtheory.oracle_checks(rows, seed=args.seed)
    failed = [c for c in checks if not c[1]]
    for name, ok, delta in checks:
        print(f"{'ok  ' if ok else 'FAIL'} {name}: {delta:.3g}")
    print(f"report written to {report}")
    if failed:
        worst = ", ".join(f"{n}={d:.3g}" for n, _, d in failed)
        print(f"oracle mismatch: {worst}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def inspect_report(graph: TopologyGraph, model_bytes: int, compute_ms: float) -> str:
    deg = graph.degrees()
    gap = spectral_gap(build_consensus_matrix(graph))
    lines = [
        f"topology: {graph.name or '<unnamed>'}",
        f"N: {graph.n}",
        f"edges: {len(graph.edges)}",
        f"degree min/mean/max: {deg.min()} / {deg.mean():.3f} / {deg.max()}",
        f"spectral gap: {gap:.6g}",
        f"model size: {model_bytes} bytes",
        f"cycle time DFL: {cycle_time_estimate(graph, model_bytes, compute_ms, 'DFL'):.3f} ms",
        f"cycle time SFL: {cycle_time_estimate(graph, model_bytes, compute_ms, 'SFL'):.3f} ms",
    ]
    return "\n".join(lines) + "\n"


def cmd_inspect_topology(args) -> int:
    try:
        graph = _load_topology(args.topology, args.silos)
    except (TopologyError, OSError) as exc:
        print(f"topology: {exc}", file=sys.stderr)
        return EXIT_INVALID
    model_bytes = args.model_bytes
    if model_bytes is None:
        model_bytes = len(params_to_bytes(init_net(NetConfig(), 0)))
    sys.stdout.write(inspect_report(graph, model_bytes, args.compute_ms))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    try:
        config = SyntheticConfig(
            mode_count=args.modes,
            samples_total=args.samples,
            noise_std=args.noise_std,
            input_dim=args.input_dim,
            seed=args.seed,
        )
    except ValueError as exc:
        print(f"gen-data: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = resolve_output(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(generate_synthetic(config), out)
    print(f"wrote {config.samples_total} rows to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcdl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-seed progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment spec file")
    p.add_argument("spec", help="INI experiment spec")
    p.add_argument("--output", help="override [experiment] output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="markdown comparison of two run directories")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--output", help="also write the report to this file")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cdtheory", help="contrastive divergence estimator diagnostics")
    p.add_argument("--report", default="cdtheory_report.csv")
    p.add_argument("--sweeps", default="0,1,5,50")
    p.add_argument("--chains", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cdtheory)

    p = sub.add_parser("inspect-topology", help="summarize a topology file or builtin graph")
    p.add_argument("topology", help="edge-list path or builtin name")
    p.add_argument("--silos", type=int, help="size for ring/star/complete")
    p.add_argument("--model-bytes", type=int, help="payload size (default: serialized default network)")
    p.add_argument("--compute-ms", type=float, default=50.0, help="local compute time per cycle")
    p.set_defaults(func=cmd_inspect_topology)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    p.add_argument("output")
    p.add_argument("--modes", type=int, default=3)
    p.add_argument("--samples", type=int, default=6000)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--input-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
