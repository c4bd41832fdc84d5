"""Scenario configs: strict parsing, validation, execution and output files."""
from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

from . import io, plotting, scenarios
from .core import CellOutcome, cell_stream_id, run_replications, summarize
from .errors import ConfigError, ScenarioError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURES = 3

_REQUIRED = ("name", "family", "truth", "n_grid", "reps", "metrics", "seed", "output_dir")
_OPTIONAL = ("epsilon",)
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", key=None) from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return validate_config(cfg, base_dir=Path(path).resolve().parent)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate_config(cfg, base_dir=None) -> dict:
    """Check the config and return it with ``output_dir`` resolved.

    Relative output directories resolve against ``base_dir`` (the config
    file's directory when loaded from disk).
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for key in cfg:
        if key not in _REQUIRED and key not in _OPTIONAL:
            raise ConfigError(f"unknown key '{key}'", key=key)
    for key in _REQUIRED:
        if key not in cfg:
            raise ConfigError(f"missing key '{key}'", key=key)
    if not isinstance(cfg["name"], str) or not _NAME_RE.match(cfg["name"]):
        raise ConfigError("name must match [A-Za-z0-9_.-]+", key="name")
    if cfg["family"] not in scenarios.FAMILIES:
        raise ConfigError(f"unknown family '{cfg['family']}'", key="family")
    grid = cfg["n_grid"]
    if not isinstance(grid, list) or not grid or not all(_is_int(n) and n >= 1 for n in grid):
        raise ConfigError("n_grid must be a non-empty list of positive integers", key="n_grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("n_grid not increasing", key="n_grid")
    if not _is_int(cfg["reps"]) or cfg["reps"] < 1:
        raise ConfigError("reps must be an integer >= 1", key="reps")
    if not _is_int(cfg["seed"]) or not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
    fam = scenarios.FAMILIES[cfg["family"]]
    mets = cfg["metrics"]
    if not isinstance(mets, list) or not all(isinstance(m, str) for m in mets):
        raise ConfigError("metrics must be a list of names", key="metrics")
    if len(set(mets)) != len(mets):
        raise ConfigError("metrics contains duplicates", key="metrics")
    for m in mets:
        if m not in scenarios.ALL_METRICS:
            raise ConfigError(f"unknown metric '{m}'", key="metrics")
        if m not in fam.supported:
            raise ConfigError(f"metric '{m}' is not available for family {cfg['family']}", key="metrics")
    if "consistency_mass" in mets:
        eps = cfg.get("epsilon")
        if not isinstance(eps, (int, float)) or isinstance(eps, bool) or not eps > 0:
            raise ConfigError("epsilon must be a positive number when consistency_mass is requested",
                              key="epsilon")
    elif "epsilon" in cfg and not (isinstance(cfg["epsilon"], (int, float)) and cfg["epsilon"] > 0):
        raise ConfigError("epsilon must be a positive number", key="epsilon")
    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        raise ConfigError("output_dir must be a non-empty path", key="output_dir")
    truth = scenarios.validate_truth(cfg["family"], cfg["truth"])
    if cfg["family"] in ("gprior", "modelselect"):
        k = truth["k"] if cfg["family"] == "gprior" else truth["m"]
        if grid[0] <= k + 1:
            raise ConfigError("every n must exceed the number of covariates plus one", key="n_grid")
    out = dict(cfg)
    out_dir = Path(cfg["output_dir"])
    if not out_dir.is_absolute() and base_dir is not None:
        out_dir = Path(base_dir) / out_dir
    out["_output_path"] = str(out_dir)
    return out


def canonical_json(cfg: dict) -> str:
    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    return json.dumps(public, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    """Git blob SHA-1 of the canonical config text."""
    body = canonical_json(cfg).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _event_names(cells):
    names = []
    for v in cells.values():
        if isinstance(v, CellOutcome):
            names += [e for e in v.events if e not in names]
    return names


def execute(cfg: dict, threads: int = 1) -> tuple[int, Path]:
    """Run all cells and write curve.csv, events.csv, meta.json and charts."""
    cell = scenarios.make_cell(cfg)
    cells = run_replications(cell, cfg["n_grid"], cfg["reps"], cfg["seed"], threads)
    out = Path(cfg["_output_path"]) / cfg["name"]
    failed = sum(1 for v in cells.values() if not isinstance(v, CellOutcome))
    meta = {
        "config": json.loads(canonical_json(cfg)),
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "stream_id": "n_index * reps + rep",
        "cells": len(cells),
        "failed_cells": failed,
    }
    out.mkdir(parents=True, exist_ok=True)

    events = _event_names(cells)
    rows = []
    for i, n in enumerate(cfg["n_grid"]):
        for r in range(cfg["reps"]):
            v = cells[(n, r)]
            sid = cell_stream_id(i, r, cfg["reps"])
            if isinstance(v, CellOutcome):
                rows.append([n, r, sid, "ok", ""] + [v.events.get(e, "") for e in events])
            else:
                rows.append([n, r, sid, "failed", v] + [""] * len(events))
    io.write_csv(out / "events.csv", ["n", "rep", "stream_id", "status", "error"] + events, rows)

    try:
        curve = summarize(cells, cfg["n_grid"], cfg["reps"])
    except ScenarioError as exc:
        meta["error"] = str(exc)
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return EXIT_FAILURES, out

    curve_rows = []
    for metric, per_n in curve.summary.items():
        for n, (mean, med, q10, q90, ok) in zip(curve.n_grid, per_n):
            curve_rows.append([n, metric, mean, med, q10, q90, ok])
    for ev, per_n in curve.event_freq.items():
        ok = [sum(1 for r in range(cfg["reps"]) if isinstance(cells[(n, r)], CellOutcome)) for n in curve.n_grid]
        for n, f, k in zip(curve.n_grid, per_n, ok):
            curve_rows.append([n, f"event:{ev}", f, f, f, f, k])
    curve_rows.sort(key=lambda r: (r[1], r[0]))
    io.write_csv(out / "curve.csv", ["n", "metric", "mean", "median", "q10", "q90", "reps_ok"], curve_rows)
    for metric, per_n in curve.summary.items():
        plotting.curve_chart(out / f"{metric}.svg", curve.n_grid, per_n, metric, f"{cfg['name']}: {metric}")
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK, out


def replay(cfg: dict, n: int, rep: int) -> dict:
    """Recompute one cell in isolation from (config, seed)."""
    if n not in cfg["n_grid"]:
        raise ConfigError(f"n={n} is not on the n_grid", key="n_grid")
    if not 0 <= rep < cfg["reps"]:
        raise ConfigError(f"rep={rep} outside 0..{cfg['reps'] - 1}", key="reps")
    cells = run_replications(scenarios.make_cell(cfg), cfg["n_grid"], cfg["reps"], cfg["seed"], 1,
                             cells=[(n, rep)])
    v = cells[(n, rep)]
    i = cfg["n_grid"].index(n)
    out = {"n": n, "rep": rep, "stream_id": cell_stream_id(i, rep, cfg["reps"])}
    if isinstance(v, CellOutcome):
        out.update(status="ok", values=v.values, events=v.events)
    else:
        out.update(status="failed", error=v)
    return out


def run_scenario(config_path, threads: int = 1) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError:
        return EXIT_CONFIG
    code, _ = execute(cfg, threads)
    return code
