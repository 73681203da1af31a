"""End-to-end commands shared by the CLI and the HTTP service."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, derive_seed
from .evaluate import EvalReport, aggregate, evaluate, reports_to_csv
from .finetune import finetune
from .graph import (
    InvalidSplitError,
    SplitBlocks,
    TemporalGraph,
    chronological_split,
    generate_synthetic,
    init_features,
    load_snap_edgelist,
)
from .nn import ParamStore
from .pretrain import pretrain

log = logging.getLogger(__name__)

SWEEP_AXES = {
    "sample_depth": ("sampler", "depth", [1, 2, 3, 6]),
    "sample_width": ("sampler", "width", [16, 32, 64, 128]),
    "pretrain_fraction": ("pretrain", "pretrain_fraction", [0.25, 0.5, 0.75, 1.0]),
    "mask_ratio": ("mask", "edge_mask_ratio", [0.1, 0.3, 0.5, 0.7]),
    "sampler_kind": ("sampler", "kind", ["dyss", "layerwise-degree"]),
    "base_model": ("encoder", "base", ["gcn", "sgc"]),
}


class ConfigError(ValueError):
    pass


def load_graph(cfg: RunConfig) -> TemporalGraph:
    ds = cfg.dataset
    if ds.synthetic is not None:
        s = ds.synthetic
        g = generate_synthetic(s.n, s.m_per_node, s.horizon, s.seed)
    else:
        g = load_snap_edgelist(ds.path, ds.directed)
    f = cfg.features
    return g.with_attrs(init_features(g, f.kind, f.attr_dim, f.seed, f.path))


def prepare(cfg: RunConfig) -> tuple[TemporalGraph, SplitBlocks]:
    g = load_graph(cfg)
    return g, chronological_split(g, cfg.split.ratios)


def pretrain_block(blocks: SplitBlocks, fraction: float) -> np.ndarray:
    """The most recent ``fraction`` of the pretraining block (at least one edge)."""
    block = blocks.pretrain
    keep = max(1, int(math.ceil(fraction * block.size)))
    return block[block.size - keep :]


def variant_name(cfg: RunConfig | None) -> str:
    if cfg is None:
        return "DGNN_npt"
    if cfg.mask.scheme == "random":
        return "random-mask"
    if cfg.pretrain.lambda_attr == 0:
        return "PT-DGNN_Edge"
    return "PT-DGNN"


def _meta(cfg: RunConfig, **extra) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, **extra}


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def run_pretrain(cfg: RunConfig, out: Path | None = None) -> dict:
    """Pretrain and write ``checkpoint.json``, per-epoch checkpoints and ``pretrain_loss.csv``."""
    out = Path(cfg.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    g, blocks = prepare(cfg)
    pcfg = cfg.pretrain_config()
    meta = _meta(cfg, variant=variant_name(cfg), config=json.loads(cfg.model_dump_json()))

    def on_epoch(epoch, params):
        params.save(out / f"checkpoint_epoch{epoch:03d}.json", meta | {"epoch": epoch})

    res = pretrain(g, pretrain_block(blocks, cfg.pretrain.pretrain_fraction), pcfg, on_epoch_end=on_epoch)
    ckpt = out / "checkpoint.json"
    res.params.save(ckpt, meta)
    loss_csv = out / "pretrain_loss.csv"
    h, seed = cfg.config_hash(), cfg.seed
    _write_csv(
        loss_csv, ["step", "L_E", "L_A", "total", "config_hash", "seed"], [(*row, h, seed) for row in res.trace]
    )
    return {"checkpoint": str(ckpt), "loss_csv": str(loss_csv), "config_hash": h, "steps": len(res.trace)}


def _load_checkpoint(cfg: RunConfig, checkpoint: str | None) -> tuple[ParamStore | None, RunConfig | None]:
    path = checkpoint if checkpoint is not None else cfg.checkpoint
    if path is None:
        return None, None
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    params = ParamStore.load(path, expect=cfg.encoder_config())
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    src_cfg = doc.get("meta", {}).get("config")
    return params, (RunConfig.model_validate(src_cfg) if src_cfg else cfg)


def run_finetune_eval(cfg: RunConfig, checkpoint: str | None = None, out: Path | None = None) -> dict:
    """Fine-tune (from ``checkpoint`` or fresh) and evaluate, ``repetitions`` times."""
    out = Path(cfg.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    g, blocks = prepare(cfg)
    params, src_cfg = _load_checkpoint(cfg, checkpoint)
    variant = variant_name(src_cfg)
    h = cfg.config_hash()
    reports: list[EvalReport] = []
    for rep in range(cfg.repetitions):
        seed = derive_seed(cfg.seed, rep)
        res = finetune(g, blocks, cfg.finetune_config(seed), params, cfg.eval.threshold)
        _write_csv(
            out / f"finetune_trace_rep{rep}.csv",
            ["epoch", "loss", "AUC", "AP", "F1", "config_hash", "seed"],
            [(e, loss, r.auc, r.ap, r.f1, h, seed) for e, loss, r in res.trace],
        )
        res.params.save(out / f"finetuned_rep{rep}.json", _meta(cfg, variant=variant, repetition=rep))
        report = evaluate(res.params, g, blocks, target=3, seed=seed, threshold=cfg.eval.threshold)
        report.config_hash, report.variant = h, variant
        reports.append(report)
    summary = aggregate(reports)
    (out / "eval_report.csv").write_text(reports_to_csv(reports), encoding="utf-8")
    doc = {"variant": variant, "config_hash": h, "seed": cfg.seed, "reports": [r.row() for r in reports]}
    doc["checkpoint_config_hash"] = None if src_cfg is None else src_cfg.config_hash()
    doc["summary"] = summary
    (out / "eval_report.json").write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    return doc


def run_eval(cfg: RunConfig, checkpoint: str | None = None, out: Path | None = None) -> dict:
    """Evaluate a checkpoint as-is on the test block (no fine-tuning)."""
    out = Path(cfg.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    g, blocks = prepare(cfg)
    params, _ = _load_checkpoint(cfg, checkpoint)
    if params is None:
        raise ConfigError("eval needs a checkpoint (--checkpoint or config 'checkpoint')")
    report = evaluate(params, g, blocks, target=3, seed=cfg.seed, threshold=cfg.eval.threshold)
    report.config_hash, report.variant = cfg.config_hash(), "checkpoint"
    (out / "eval_only.csv").write_text(reports_to_csv([report]), encoding="utf-8")
    return report.row()


def _sweep_cell(args) -> dict:
    cfg_json, axis, value, out = args
    cfg = RunConfig.model_validate_json(cfg_json)
    out = Path(out)
    pre = run_pretrain(cfg, out)
    pt = run_finetune_eval(cfg, pre["checkpoint"], out / "pt")
    rows = [{"axis": axis, "value": value, "variant": pt["variant"], **_summary_cols(pt["summary"])}]
    if axis == "base_model":
        npt = run_finetune_eval(cfg, None, out / "npt")
        rows.append({"axis": axis, "value": value, "variant": npt["variant"], **_summary_cols(npt["summary"])})
    return {"rows": rows}


def _summary_cols(summary: dict) -> dict:
    return {k: summary[k] for k in ("auc_mean", "auc_stddev", "ap_mean", "ap_stddev", "f1_mean", "f1_stddev")}


def run_sweep(cfg: RunConfig, axis: str, values: list | None = None, jobs: int = 1, out: Path | None = None) -> dict:
    """Re-run pretrain + fine-tune/eval once per value of one axis, everything else fixed."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    section, key, default = SWEEP_AXES[axis]
    values = default if values is None else values
    out = Path(cfg.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for value in values:
        doc = cfg.model_dump(mode="json")
        doc[section][key] = value
        cell_cfg = RunConfig.model_validate(doc)
        cells.append((cell_cfg.model_dump_json(), axis, value, str(out / f"{axis}={value}")))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = [r for res in results for r in res["rows"]]
    h = cfg.config_hash()
    header = ["axis", "value", "variant", "auc_mean", "auc_stddev", "ap_mean", "ap_stddev", "f1_mean", "f1_stddev"]
    _write_csv(out / f"sweep_{axis}.csv", header + ["config_hash", "seed"], [[r[k] for k in header] + [h, cfg.seed] for r in rows])
    return {"axis": axis, "rows": rows, "csv": str(out / f"sweep_{axis}.csv"), "config_hash": h}


def inspect_graph(g: TemporalGraph, ratios=(0.7, 0.1, 0.1, 0.1)) -> dict:
    try:
        split_sizes = [int(b.size) for b in chronological_split(g, ratios)]
    except InvalidSplitError:
        split_sizes = None
    span = int(g.t_raw.max() - g.t_raw.min())
    deg = g.adjacency.degree()
    return {
        "nodes": g.num_nodes,
        "edges": g.num_edges,
        "directed": g.directed,
        "time_span_seconds": span,
        "time_span_days": span / 86400.0,
        "max_degree": int(deg.max()),
        "median_degree": float(np.median(deg)),
        "split_sizes": split_sizes,
    }
