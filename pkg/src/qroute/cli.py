"""Command-line interface: generate / train / eval / params / gradcheck.

Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
3 numerical abort. Thread count comes from --threads (default: the
QROUTE_THREADS environment variable, else 1); single-threaded runs are
bit-reproducible.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import baselines, gradcheck, ppo
from .checkpoint import load_checkpoint
from .config import (
    ExperimentConfig,
    config_hash,
    load_config,
    resolve_config,
)
from .core import (
    default_capacity,
    generate_instance,
    optimality_gap,
    read_instances,
    read_references,
    route_length,
    write_instances,
    write_solutions,
)
from .errors import ConfigurationError, NumericalError, ParseError, QrouteError
from .model import build_model, classical_reference, count_parameters, load_state_arrays


def _default_threads():
    raw = os.environ.get("QROUTE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qroute",
        description="Hybrid quantum-classical learned solver for capacitated "
                    "vehicle routing.",
    )
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="internal torch thread count (default: "
                             "QROUTE_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random instance file")
    p.add_argument("--m", type=int, required=True, help="customers per instance")
    p.add_argument("--capacity", type=int, default=None,
                   help="vehicle capacity (default: benchmark value for m)")
    p.add_argument("--count", type=int, required=True, help="number of instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output path (JSONL)")

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", type=Path, required=True, help="JSON config file")
    p.add_argument("--out-dir", type=Path, required=True,
                   help="directory for metrics, checkpoints, resolved config")
    p.add_argument("--resume", type=Path, default=None,
                   help="checkpoint to continue from (same config)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on an instance file")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--instances", type=Path, required=True)
    p.add_argument("--strategy", choices=("greedy", "sampling", "both"),
                   default=None, help="decode strategy (default: from config)")
    p.add_argument("--references", type=Path, default=None,
                   help="CSV of externally produced lengths "
                        "(instance_id, method, length)")
    p.add_argument("--config", type=Path, default=None,
                   help="resolved config (default: next to the checkpoint)")
    p.add_argument("--seed", type=int, default=None,
                   help="sampling seed (default: from config)")
    p.add_argument("--width", type=int, default=None,
                   help="samples per instance (default: from config)")
    p.add_argument("--out", type=Path, default=None,
                   help="results CSV path (default: next to the checkpoint)")
    p.add_argument("--solutions", type=Path, default=None,
                   help="write best decoded solutions here (JSONL)")

    p = sub.add_parser("params", help="report trainable parameter counts")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON config file (default: built-in defaults)")

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--scope", choices=gradcheck.SCOPES + ("all",), required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def cmd_generate(args):
    if args.m < 1:
        raise ConfigurationError(f"--m must be >= 1, got {args.m}")
    if args.count < 0:
        raise ConfigurationError(f"--count must be >= 0, got {args.count}")
    capacity = args.capacity
    if capacity is None:
        capacity = default_capacity(args.m)
    rng = np.random.default_rng(args.seed)
    instances = [generate_instance(args.m, capacity, rng)
                 for _ in range(args.count)]
    write_instances(args.out, instances)
    print(f"wrote {args.count} instances (m={args.m}, capacity={capacity}) "
          f"to {args.out}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    result = ppo.train(cfg, args.out_dir, resume=args.resume, progress=print)
    print(f"done: {result.epochs_run} epochs, "
          f"final val mean length {result.final_val_mean:.4f}, "
          f"metrics in {result.metrics_path}")
    if result.ratio_clamped:
        print(f"note: {result.ratio_clamped} probability ratios hit the "
              f"{ppo.RATIO_CAP:.0e} cap")
    return 0


def _load_eval_model(args):
    arrays, stored_hash, epoch = load_checkpoint(args.checkpoint)
    config_path = args.config
    if config_path is None:
        config_path = args.checkpoint.parent / "resolved_config.json"
    cfg = resolve_config(load_config(config_path))
    if config_hash(cfg) != stored_hash:
        raise ConfigurationError(
            f"checkpoint was written under a different configuration "
            f"than {config_path}"
        )
    model = build_model(cfg)
    load_state_arrays(model, arrays)
    return cfg, model, epoch


def _eval_batch_size(m, d_x):
    nodes = m + 1
    return max(1, min(256, int(2.5e8 / (nodes * nodes * d_x * 8))))


def _decode_lengths(model, instances, strategy, seed, width, temperature):
    """Per-instance decoded lengths and routes for one strategy."""
    groups = {}
    for idx, inst in enumerate(instances):
        groups.setdefault(inst.m, []).append(idx)
    lengths = np.zeros(len(instances))
    routes = [None] * len(instances)
    for m, indices in sorted(groups.items()):
        batch = _eval_batch_size(m, model.encoder.d_x)
        members = [instances[i] for i in indices]
        if strategy == "greedy":
            for start in range(0, len(members), batch):
                chunk = members[start:start + batch]
                emb = model.encoder.encode(chunk)
                for off, res in enumerate(model.decoder.decode_greedy(emb, chunk)):
                    pos = indices[start + off]
                    routes[pos] = res.route
                    lengths[pos] = route_length(instances[pos], res.route)
        else:
            best = np.full(len(members), np.inf)
            passes = np.random.SeedSequence(seed).spawn(width)
            for w in range(width):
                rng = np.random.default_rng(passes[w])
                for start in range(0, len(members), batch):
                    chunk = members[start:start + batch]
                    emb = model.encoder.encode(chunk)
                    results = model.decoder.decode_sample(
                        emb, chunk, rng, temperature=temperature
                    )
                    for off, res in enumerate(results):
                        length = route_length(chunk[off], res.route)
                        if length < best[start + off]:
                            best[start + off] = length
                            routes[indices[start + off]] = res.route
            for off, pos in enumerate(indices):
                lengths[pos] = best[off]
    return lengths, routes


def _reference_lengths(instances, references_path):
    """Per-instance reference lengths: external file, or the exact solver.

    External references take the best (minimum) length across methods per
    instance. Without a file, instances small enough for the exact solver
    get provably optimal lengths; larger ones get no reference.
    """
    if references_path is not None:
        table = read_references(references_path)
        missing = [i for i in range(len(instances)) if i not in table]
        if missing:
            raise ConfigurationError(
                f"references cover {len(table)} instances but the instance "
                f"file has {len(instances)} (first missing id: {missing[0]})"
            )
        return np.array([min(table[i].values()) for i in range(len(instances))])
    if all(inst.m <= baselines.EXACT_MAX_CUSTOMERS for inst in instances):
        return np.array([baselines.exact_small(inst)[1] for inst in instances])
    return None


def cmd_eval(args):
    cfg, model, epoch = _load_eval_model(args)
    instances = read_instances(args.instances)
    if not instances:
        raise ConfigurationError(f"no instances in {args.instances}")
    strategy = args.strategy or cfg.decoder.strategy
    seed = cfg.decoder.seed if args.seed is None else args.seed
    width = cfg.decoder.sample_width if args.width is None else args.width
    if width < 1:
        raise ConfigurationError(f"--width must be >= 1, got {width}")

    refs = _reference_lengths(instances, args.references)
    nn_lengths = np.array([
        route_length(inst, baselines.nearest_neighbor(inst))
        for inst in instances
    ])

    rows = []  # (method, type, lengths, routes)
    if strategy in ("greedy", "both"):
        lengths, routes = _decode_lengths(
            model, instances, "greedy", seed, width, cfg.decoder.temperature
        )
        rows.append(("model", "greedy", lengths, routes))
    if strategy in ("sampling", "both"):
        lengths, routes = _decode_lengths(
            model, instances, "sampling", seed, width, cfg.decoder.temperature
        )
        rows.append((f"model (best of {width})", "sampling", lengths, routes))
    rows.append(("nearest-neighbor", "-", nn_lengths, None))
    if refs is not None:
        source = "file" if args.references is not None else "exact"
        rows.append((f"reference ({source})", "-", refs, None))

    ref_mean = float(refs.mean()) if refs is not None else None
    table = [("Method", "Type", "Length", "Gap")]
    csv_rows = ["method,type,mean_length,gap_percent"]
    for method, kind, lengths, _ in rows:
        mean = float(np.mean(lengths))
        if ref_mean is not None:
            gap = optimality_gap(mean, ref_mean)
            gap_text = f"{gap:.2f}%"
            gap_csv = repr(gap)
        else:
            gap_text, gap_csv = "-", ""
        table.append((method, kind, f"{mean:.4f}", gap_text))
        csv_rows.append(f"{method},{kind},{mean!r},{gap_csv}")

    widths = [max(len(r[c]) for r in table) for c in range(4)]
    print(f"checkpoint epoch {epoch}, {len(instances)} instances")
    for r in table:
        print("  ".join(str(cell).ljust(w) for cell, w in zip(r, widths)).rstrip())

    out = args.out
    if out is None:
        out = args.checkpoint.parent / "eval_results.csv"
    Path(out).write_text("\n".join(csv_rows) + "\n")
    print(f"results written to {out}")

    if args.solutions is not None:
        decoded = [r for r in rows if r[3] is not None]
        if not decoded:
            raise ConfigurationError("--solutions requires a decoded strategy")
        best_routes = list(decoded[0][3])
        best_lengths = decoded[0][2].copy()
        for _, _, lengths, routes in decoded[1:]:
            for i in range(len(instances)):
                if lengths[i] < best_lengths[i]:
                    best_lengths[i] = lengths[i]
                    best_routes[i] = routes[i]
        write_solutions(
            args.solutions,
            [(i, best_routes[i], best_lengths[i]) for i in range(len(instances))],
        )
        print(f"solutions written to {args.solutions}")
    return 0


def cmd_params(args):
    cfg = ExperimentConfig() if args.config is None else load_config(args.config)
    cfg = resolve_config(cfg)
    configured = build_model(cfg)
    reference = build_model(classical_reference(cfg))
    for label, model in (("configured", configured),
                         ("classical reference", reference)):
        classical, quantum, total = count_parameters(model)
        print(f"{label}: classical {classical} quantum {quantum} total {total}")
    ratio = count_parameters(configured)[2] / count_parameters(reference)[2]
    print(f"total ratio (configured / classical reference): {ratio:.4f}")
    return 0


def cmd_gradcheck(args):
    reports = gradcheck.run_scope(args.scope, seed=args.seed)
    for report in reports:
        print(report.line())
    return 0 if all(r.passed for r in reports) else 1


_HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "params": cmd_params,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print(f"error: --threads must be >= 1, got {args.threads}",
              file=sys.stderr)
        return 2
    torch.set_num_threads(args.threads)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigurationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except QrouteError as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 1
