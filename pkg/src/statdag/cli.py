"""Command-line front end: ``statdag simulate | fit | eval | schema``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load, override, schema
from .errors import SchemaError, StatDagError
from .metrics import MetricRow, evaluate, format_metrics_csv, hadamard_invertibility, mean_row
from .pipeline import fit, sim_config
from .projection import has_cycle
from .series import read_csv, write_csv
from .synth import generate, replicate_seeds, write_truth

log = logging.getLogger("statdag")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _manifest(out: Path, command: str, cfg: RunConfig, seed: int, inputs, outputs, **extra) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        **extra,
    }
    _write_json(out / "manifest.json", doc)


def _config(args) -> RunConfig:
    cfg = load(args.config)
    return override(cfg, iterations=getattr(args, "iters", None), burnin=getattr(args, "burnin", None),
                    thin=getattr(args, "thin", None), chains=getattr(args, "chains", None),
                    H=getattr(args, "threshold", None), mode=getattr(args, "mode", None), seed=args.seed)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    n = args.replicates if args.replicates is not None else cfg.data.replicates
    seeds = [cfg.data.seed] if n == 1 else replicate_seeds(cfg.data.seed, n)
    for idx, seed in enumerate(seeds):
        target = out if n == 1 else out / f"rep-{idx:03d}"
        target.mkdir(parents=True, exist_ok=True)
        sim = sim_config(cfg, seed)
        truth, Y = generate(sim)
        write_csv(Y, target / "data.csv")
        write_truth(truth, target / "truth.json", sim)
        _manifest(target, "simulate", cfg, seed, [], [target / "data.csv", target / "truth.json"],
                  master_seed=cfg.data.seed, replicate=idx)
        log.info("simulated replicate %d (seed %d) into %s", idx, seed, target)
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = read_csv(args.data)
    log.info("fitting %s: p=%d S=%d T=%d", cfg.mode, raw.p, raw.S, raw.T)
    res = fit(raw, cfg, seed=cfg.data.seed, jobs=args.jobs)
    outputs = []
    for archive in res.archives:
        path = out / f"chain-{archive.meta['chain']}.jsonl"
        archive.to_jsonl(path)
        outputs.append(path)
    doc = res.graph.to_json()
    doc.update(method=res.method, W=res.W.tolist(), d=res.d.tolist(), lam=res.lam, repaired=res.graph.repaired)
    _write_json(out / "adjacency.json", doc)
    res.graph.write_csv(out / "votes.csv")
    outputs += [out / "adjacency.json", out / "votes.csv"]
    _write_json(out / "timing.json", {k: round(v, 6) for k, v in res.timings.items()})
    _manifest(out, "fit", cfg, cfg.data.seed, [Path(args.data)], outputs, mode=cfg.mode, chains=cfg.chains)
    log.info("wrote %d edges to %s", int(res.graph.edges.sum()), out / "adjacency.json")
    return 0


def read_graph(path) -> dict:
    """Adjacency, optional weights/noise and metadata from a graph JSON file.

    Edges are ``[parent, child]`` or ``[parent, child, weight]``; a full
    ``"W"`` matrix takes precedence over edge weights.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        p = int(doc["p"])
        adj = np.zeros((p, p), dtype=int)
        weights = np.zeros((p, p))
        weighted = bool(doc["edges"])
        for edge in doc["edges"]:
            parent, child = int(edge[0]), int(edge[1])
            adj[child, parent] = 1
            if len(edge) > 2 and edge[2] is not None:
                weights[child, parent] = float(edge[2])
            else:
                weighted = False
        W = np.asarray(doc["W"], dtype=float) if doc.get("W") is not None else (weights if weighted else None)
        if W is not None and W.shape != (p, p):
            raise ValueError(f"W has shape {W.shape}, expected {(p, p)}")
        d = np.asarray(doc["d"], dtype=float) if doc.get("d") is not None else None
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if np.any(np.diag(adj)):
        raise SchemaError(f"{path}: self loops are not allowed")
    return {"adj": adj, "W": W, "d": d, "method": doc.get("method", "estimate"), "seed": doc.get("seed")}


def _runtime(adj_path: Path) -> float | None:
    timing = adj_path.parent / "timing.json"
    if not timing.exists():
        return None
    with open(timing, encoding="utf-8") as fh:
        return float(json.load(fh).get("total", 0.0))


def eval_pair(adj_path, truth_path, replicate: str | None = None, with_runtime: bool = False):
    est, truth = read_graph(adj_path), read_graph(truth_path)
    if est["adj"].shape != truth["adj"].shape:
        raise SchemaError(f"{adj_path} has p={est['adj'].shape[0]}, truth has p={truth['adj'].shape[0]}")
    rep = replicate if replicate is not None else str(truth["seed"] if truth["seed"] is not None else "0")
    runtime = _runtime(Path(adj_path)) if with_runtime else None
    # a complete truth adjacency without weights means no weight error can be computed
    row = evaluate(rep, est["method"], est["adj"], truth["adj"], est["W"], truth["W"], est["d"], truth["d"], runtime)
    diag = {"replicate": rep, "acyclic": not has_cycle(est["adj"])}
    if est["W"] is not None:
        try:
            ok, cond = hadamard_invertibility(est["W"])
            diag.update(hadamard_invertible=ok, hadamard_condition=cond)
        except StatDagError as exc:
            diag["hadamard_error"] = str(exc)
    return row, diag


def _find(directory: Path, name: str) -> Path | None:
    hits = sorted(directory.rglob(name))
    return hits[0] if hits else None


def cmd_eval(args) -> int:
    rows, diags = [], []
    if args.batch:
        root = Path(args.batch)
        reps = sorted(p for p in root.iterdir() if p.is_dir())
        for rep in reps:
            adj, truth = _find(rep, "adjacency.json"), _find(rep, "truth.json")
            if adj is None or truth is None:
                log.warning("skipping %s: needs adjacency.json and truth.json", rep)
                continue
            row, diag = eval_pair(adj, truth, rep.name, args.runtime)
            rows.append(row)
            diags.append(diag)
        if not rows:
            raise SchemaError(f"{root}: no replicate directories with adjacency.json and truth.json")
        rows.append(mean_row(rows))
    else:
        if not args.adjacency or not args.truth:
            raise SchemaError("give ADJACENCY and TRUTH files, or --batch DIR")
        row, diag = eval_pair(args.adjacency, args.truth, with_runtime=args.runtime)
        rows.append(row)
        diags.append(diag)
    text = format_metrics_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.diagnostics:
        _write_json(args.diagnostics, diags)
    return 0


def cmd_schema(args) -> int:
    json.dump(schema(), sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statdag", description="Causal DAG estimation for matrix-variate time series.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
        p.add_argument("--seed", type=int, help="overrides data.seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    sim = sub.add_parser("simulate", help="generate synthetic data and ground truth")
    common(sim)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--replicates", type=int, help="overrides data.replicates; >1 writes rep-NNN subdirectories")
    sim.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="estimate a DAG from a data CSV")
    common(f)
    f.add_argument("data", help="CSV with columns v<k>_s<s>")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--mode", choices=("bayes", "anotears"))
    f.add_argument("--threshold", type=float, help="edge threshold H (default 0.3)")
    f.add_argument("--chains", type=int)
    f.add_argument("--iters", type=int)
    f.add_argument("--burnin", type=int)
    f.add_argument("--thin", type=int)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score an estimated graph against ground truth")
    e.add_argument("adjacency", nargs="?")
    e.add_argument("truth", nargs="?")
    e.add_argument("--batch", help="directory of replicate subdirectories")
    e.add_argument("--out", help="metrics CSV path (stdout when omitted)")
    e.add_argument("--diagnostics", help="write acyclicity and identifiability checks to this JSON file")
    e.add_argument("--runtime", action="store_true", help="fill the runtime column from timing.json")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("schema", help="print every configuration field with its default")
    s.set_defaults(func=cmd_schema)
    return parser


def _error_doc(exc: BaseException) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("field", "line"):
        if getattr(exc, attr, None) is not None:
            doc[attr] = getattr(exc, attr)
    return doc


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("STATDAG_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StatDagError, ValueError, OSError) as exc:
        json.dump(_error_doc(exc), sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
