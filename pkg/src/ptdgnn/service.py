"""HTTP front end over the pipeline commands."""
from __future__ import annotations

from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import pipeline
from .config import RunConfig
from .graph import GraphFormatError, load_snap_edgelist

app = FastAPI(title="ptdgnn")


class RunRequest(BaseModel):
    config: RunConfig
    checkpoint: Optional[str] = None


class SweepRequest(BaseModel):
    config: RunConfig
    axis: str
    values: Optional[list[Any]] = None


class InspectRequest(BaseModel):
    path: str
    directed: bool = True


class PretrainResponse(BaseModel):
    checkpoint: str
    loss_csv: str
    config_hash: str
    steps: int


class MetricSummary(BaseModel):
    runs: int
    auc_mean: float
    auc_stddev: float
    ap_mean: float
    ap_stddev: float
    f1_mean: float
    f1_stddev: float
    auc: str
    ap: str
    f1: str


class FinetuneResponse(BaseModel):
    variant: str
    config_hash: str
    seed: int
    reports: list[dict]
    summary: MetricSummary
    checkpoint_config_hash: Optional[str] = None


def _run(fn, *args):
    try:
        return fn(*args)
    except (pipeline.ConfigError, ValueError, FileNotFoundError, GraphFormatError) as exc:
        raise HTTPException(status_code=422, detail={"type": type(exc).__name__, "message": str(exc)})


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/pretrain", response_model=PretrainResponse)
def pretrain(req: RunRequest):
    return _run(pipeline.run_pretrain, req.config)


@app.post("/finetune", response_model=FinetuneResponse)
def finetune(req: RunRequest):
    return _run(pipeline.run_finetune_eval, req.config, req.checkpoint)


@app.post("/eval")
def evaluate(req: RunRequest):
    return _run(pipeline.run_eval, req.config, req.checkpoint)


@app.post("/sweep")
def sweep(req: SweepRequest):
    return _run(pipeline.run_sweep, req.config, req.axis, req.values)


@app.post("/inspect")
def inspect(req: InspectRequest):
    return _run(lambda: pipeline.inspect_graph(load_snap_edgelist(req.path, req.directed)))
