"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 a checked criterion fails,
4 a solver failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dde, stability
from .config import ConfigError, RunConfig, load
from .field import HistoryGap, PicardDiverged, initial, solve_field
from .field import experiments as ex
from .field.operators import reconstruct_P

EXIT_OK, EXIT_CONFIG, EXIT_CRITERION, EXIT_SOLVER = 0, 2, 3, 4
SOLVER_ERRORS = (ArithmeticError, HistoryGap, dde.StepTooLarge, dde.DegenerateSeries)

log = logging.getLogger("hemostab")


class SolverFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")


def _fmt(v: float) -> str:
    return f"{v:.16e}"


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _field_kwargs(cfg: RunConfig) -> dict:
    g = cfg.grid
    keys = ("y_min", "dt", "quad_order", "picard_tol", "picard_max", "workers")
    return {k: g[k] for k in keys if k in g}


def _phi(cfg: RunConfig, block: dict):
    return initial.from_config(block, cfg.base_dir)


def _run(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SOLVER_ERRORS as exc:
        raise SolverFailure(stage, exc) from exc


def cmd_report(cfg: RunConfig, out: Path | None) -> int:
    rep = stability.evaluate(cfg.model)
    doc = rep.to_dict()
    text = json.dumps(doc, indent=2, default=_jsonable)
    print(text)
    if out is not None:
        _write_json(out / "report.json", doc)
    return EXIT_OK if rep.all_hold() else EXIT_CRITERION


def cmd_simulate_dde(cfg: RunConfig, out: Path) -> int:
    sec = cfg.section("dde")
    model = cfg.model
    dt = sec.get("dt") or dde.default_step(model)
    phi = _phi(cfg, sec.get("history", {"family": "constant", "value": 1.0}))
    psi = dde.ScalarHistory.from_function(lambda t: phi(t, np.zeros_like(t)), model.tau_max, dt)
    sol = _run("dde integrate", dde.integrate, model, psi, sec["T"], dt, cfg.grid.get("quad_order", 32))
    H = np.full(len(sol.x), np.nan)
    H[sol.K:] = _run("lyapunov", dde.H_series, model, sol)
    _write_csv(out / "dde.csv", "t,x,H", zip(sol.t, sol.x, H))
    _write_json(out / "dde.meta.json", {"dt": sol.dt, "T": float(sol.t[-1]), "K": sol.K,
                                        "quad_order": sol.quad_order, "model": model.config.to_dict()})
    log.info("wrote %s", out / "dde.csv")
    return EXIT_OK


def cmd_simulate_field(cfg: RunConfig, out: Path) -> int:
    sec = cfg.section("field")
    model = cfg.model
    phi = _phi(cfg, sec["initial"])
    kw = _field_kwargs(cfg)
    f = _run("field solve", solve_field, model, phi, sec["T"], **kw)
    nodes = f.grid.m
    slices = range(f.K, len(f.t))

    def rows(values):
        for row, i in enumerate(slices):
            for j, m in enumerate(nodes):
                yield f.t[i], m, values[row, j]

    _write_csv(out / "field.csv", "t,m,N", rows(f.values[f.K:]))
    meta = {**f.meta, "model": model.config.to_dict()}
    kw.pop("workers", None)
    meta["floor_sensitivity"] = _run("floor sensitivity", ex.floor_sensitivity, model, phi, sec["T"], **kw)
    if "P0" in sec:
        P = _run("reconstruct P", reconstruct_P, model, f.history, sec["P0"], kw.get("quad_order", 32))
        _write_csv(out / "field_P.csv", "t,m,P", rows(P))
    _write_json(out / "field.meta.json", meta)
    log.info("wrote %s", out / "field.csv")
    return EXIT_OK


def _experiment(cfg: RunConfig, name: str):
    block = cfg.experiment(name)
    model = cfg.model
    kw = _field_kwargs(cfg)
    if name == "decay":
        return ex.experiment_decay(model, _phi(cfg, block["initial"]), block.get("T", 30.0), **kw)
    if name == "extinction":
        return ex.experiment_extinction(model, _phi(cfg, block["initial"]), block["b"], block.get("margin", 0.5), **kw)
    if name == "agreement":
        return ex.experiment_agreement(
            model, _phi(cfg, block["initial_1"]), _phi(cfg, block["initial_2"]), block["b"], block.get("T"), **kw
        )
    return ex.experiment_equilibrium(model, block.get("T", 50.0), block.get("dt"))


def cmd_experiment(cfg: RunConfig, name: str, out: Path | None) -> int:
    try:
        rep = _run(f"experiment {name}", _experiment, cfg, name)
        doc = rep.to_dict()
    except ex.NotApplicable as exc:
        doc = {"experiment": name, "verdict": "fail", "measured": None, "expected": None, "tolerance": None,
               "reason": f"not applicable: {exc}"}
    text = json.dumps(doc, indent=2, default=_jsonable)
    print(text)
    if out is not None:
        _write_json(out / f"{name}.json", doc)
    return EXIT_OK if doc["verdict"] == "pass" else EXIT_CRITERION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hemostab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        return sp

    add("report", "stability constants and criteria as JSON").add_argument("config", type=Path)
    add("simulate-dde", "integrate the boundary equation to dde.csv").add_argument("config", type=Path)
    add("simulate-field", "solve the population field to field.csv").add_argument("config", type=Path)
    sp = add("experiment", "run one numerical check and print its verdict")
    sp.add_argument("name", choices=["decay", "extinction", "agreement", "equilibrium"])
    sp.add_argument("config", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = args.out
    try:
        cfg = load(args.config)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        if args.command == "report":
            return cmd_report(cfg, out)
        if args.command == "experiment":
            return cmd_experiment(cfg, args.name, out)
        out = Path(".") if out is None else out
        if args.command == "simulate-dde":
            return cmd_simulate_dde(cfg, out)
        return cmd_simulate_field(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, PicardDiverged) as exc:
        print(f"solver failure in {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
