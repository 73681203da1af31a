"""Command line entry point.

Runs the pipeline in-process by default; with ``--server URL`` the same verbs
are forwarded to a running ``ptdgnn serve`` instance.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from . import pipeline
from .config import RunConfig
from .graph import generate_synthetic, load_snap_edgelist, write_snap_edgelist


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if getattr(args, "checkpoint", None) is not None:
        updates["checkpoint"] = args.checkpoint
    if updates:
        cfg = RunConfig.model_validate(cfg.model_dump() | updates)
    return cfg


def _remote(args, verb: str, payload: dict) -> dict:
    import httpx

    resp = httpx.post(f"{args.server.rstrip('/')}/{verb}", json=payload, timeout=None)
    if resp.status_code != 200:
        raise RuntimeError(f"server returned {resp.status_code}: {resp.text}")
    return resp.json()


def cmd_pretrain(args) -> dict:
    cfg = _load_config(args)
    if args.server:
        return _remote(args, "pretrain", {"config": cfg.model_dump(mode="json")})
    return pipeline.run_pretrain(cfg)


def cmd_finetune(args) -> dict:
    cfg = _load_config(args)
    if args.server:
        return _remote(args, "finetune", {"config": cfg.model_dump(mode="json")})
    doc = pipeline.run_finetune_eval(cfg)
    return {"variant": doc["variant"], "summary": doc["summary"], "output_dir": cfg.output_dir}


def cmd_eval(args) -> dict:
    cfg = _load_config(args)
    if args.server:
        return _remote(args, "eval", {"config": cfg.model_dump(mode="json")})
    return pipeline.run_eval(cfg)


def cmd_sweep(args) -> dict:
    cfg = _load_config(args)
    values = json.loads(args.values) if args.values else None
    if args.server:
        return _remote(args, "sweep", {"config": cfg.model_dump(mode="json"), "axis": args.axis, "values": values})
    return pipeline.run_sweep(cfg, args.axis, values, jobs=args.jobs)


def cmd_gen_synthetic(args) -> dict:
    g = generate_synthetic(args.n, args.m, args.horizon, args.seed if args.seed is not None else 0)
    write_snap_edgelist(g, args.output)
    return {"path": args.output, "nodes": g.num_nodes, "edges": g.num_edges}


def cmd_inspect(args) -> dict:
    path = Path(args.path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        return {
            "version": doc.get("version"),
            "encoder_config": doc.get("encoder_config"),
            "tensors": {k: v["shape"] for k, v in doc.get("tensors", {}).items()},
            "meta": {k: v for k, v in doc.get("meta", {}).items() if k != "config"},
        }
    g = load_snap_edgelist(path, directed=not args.undirected)
    return pipeline.inspect_graph(g)


def cmd_serve(args) -> dict:
    import uvicorn

    uvicorn.run("ptdgnn.service:app", host=args.host, port=args.port, log_level="info")
    return {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptdgnn", description="Pre-training on dynamic graphs")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--server", help="forward the command to a running service at this URL")
        if checkpoint:
            p.add_argument("--checkpoint", help="pretrained checkpoint JSON")

    p = sub.add_parser("pretrain", help="sample, mask and pretrain; writes checkpoint + loss CSV")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune (optionally from a checkpoint) and evaluate")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test block without fine-tuning")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="vary one axis and rerun the pipeline")
    common(p)
    p.add_argument("--axis", required=True, choices=sorted(pipeline.SWEEP_AXES))
    p.add_argument("--values", help='JSON list of values, e.g. "[0.1, 0.5]"')
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-synthetic", help="write a preferential-attachment edge list")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="output", required=True, help="output edge-list path")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("inspect", help="summarise an edge list or a checkpoint")
    p.add_argument("path")
    p.add_argument("--undirected", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except (ValidationError, pipeline.ConfigError) as exc:
        print(json.dumps({"error": "config", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # reported as machine-readable JSON
        print(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    if result:
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
