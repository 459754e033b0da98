"""Scenario runner: ``modlab <command> --config cfg.json [--set k=v ...] [--out dir]``.

Writes ``report.json``, ``tables/*.csv`` and ``plots/*.svg`` under the output
directory.  Exit status: 0 all verdicts pass, 1 some verdict fails, 2 invalid
configuration (error list on stdout), 3 a solver result is not certified.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .curve import CurveFamily, connecting_family_spec
from .errors import ContractViolation, DivergentIntegralError
from .geom import Annulus, Box, Sphere
from .grid import Grid
from .mapzoo import MapFamily, sample_table, table_csv
from .modsolve import modulus_connecting, modulus_finite
from .svgplot import Series, bar_plot, line_plot
from .verify import PoletskySampling, closure_scan, equicontinuity_scan, verify_poletsky

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_UNCERTIFIED = 0, 1, 2, 3

MAP_DEFAULT = {"kind": "planar-branched", "alpha": 0.5, "n": 2, "p": 2.5, "inverse": False}

DEFAULTS: dict[str, dict[str, Any]] = {
    "modulus": {
        "scenario": "ring",  # ring | rectangle | family
        "p": 2.0,
        "r1": 1.0,
        "r2": 2.0,
        "width": 2.0,
        "height": 1.0,
        "cells": 256,
        "resolutions": [],
        "family_file": None,
        "slack": 1e-3,
        "gap_tol": 1e-3,
        "max_iter": 100_000,
        "stencil_radius": None,
        "tolerance": 0.05,
    },
    "verify-poletsky": {
        "map": dict(MAP_DEFAULT),
        "m_values": [2],
        "alphas": None,
        "y0": [0.0, 0.0],
        "shells": [[0.3, 0.6]],
        "directions": None,
        "cells": None,
        "profiles": ["step", "inverse-t"],
        "margin": 0.05,
    },
    "equicontinuity": {
        "map": dict(MAP_DEFAULT),
        "m_values": list(range(1, 17)),
        "x0": [0.0, 0.0],
        "r0": 0.4,
        "radii": None,
        "radius_count": 10,
        "directions": None,
        "expect": "bounded",  # bounded | unbounded
        "c_hat_ratio_max": 2.0,
    },
    "closure-scan": {
        "map": dict(MAP_DEFAULT),
        "m_values": list(range(1, 17)),
        "boundary_points": [[2.0, 0.0]],
        "radii": None,
        "radius_count": 10,
        "r_max": 0.5,
        "directions": None,
    },
    "zoo-dump": {
        "map": dict(MAP_DEFAULT, m=2),
        "samples": 100,
        "fd_step": 1e-6,
        "rtol": 1e-3,
    },
}


# configuration ------------------------------------------------------------------

def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: dict[str, Any], pairs: list[str]) -> list[str]:
    """Apply ``a.b=value`` overrides in place; returns error strings."""
    errors = []
    for item in pairs:
        if "=" not in item:
            errors.append(f"--set {item!r}: expected key=value")
            continue
        key, raw = item.split("=", 1)
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _parse_value(raw)
    return errors


def resolve_config(command: str, user: dict[str, Any]) -> tuple[dict[str, Any], list[str]]:
    cfg = copy.deepcopy(DEFAULTS[command])
    errors = []
    for k, v in user.items():
        if k in ("command", "name", "seed"):
            continue
        if k not in cfg:
            errors.append(f"unknown key {k!r} for command {command}")
            continue
        if isinstance(cfg[k], dict) and isinstance(v, dict):
            cfg[k].update(v)
        else:
            cfg[k] = v
    return cfg, errors


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_map(cfg: dict[str, Any], errors: list[str], need_m: bool = False) -> None:
    mp = cfg["map"]
    if need_m and not (isinstance(mp.get("m"), int) and mp["m"] >= 1):
        errors.append("map.m must be a positive integer")
    try:
        MapFamily(mp.get("kind"), int(mp.get("m", 1)) if _is_num(mp.get("m", 1)) else 1,
                  mp.get("alpha", 0.5), int(mp.get("n", 2)), mp.get("p", 2.5), bool(mp.get("inverse", False)))
    except (ContractViolation, TypeError, ValueError) as exc:
        errors.append(f"map: {exc}")


def _check_m_values(cfg, errors):
    ms = cfg["m_values"]
    if not (isinstance(ms, list) and ms and all(isinstance(m, int) and m >= 1 for m in ms)):
        errors.append("m_values must be a nonempty list of positive integers")


def _check_point(name, v, n, errors):
    if not (isinstance(v, list) and len(v) == n and all(_is_num(c) for c in v)):
        errors.append(f"{name} must be a list of {n} finite numbers")


def validate(command: str, cfg: dict[str, Any]) -> list[str]:
    errors: list[str] = []
    if command == "modulus":
        if cfg["scenario"] not in ("ring", "rectangle", "family"):
            errors.append("scenario must be ring, rectangle or family")
        if not (_is_num(cfg["p"]) and cfg["p"] >= 1):
            errors.append("p must be a number >= 1")
        if cfg["scenario"] != "family" and _is_num(cfg["p"]) and cfg["p"] <= 1:
            errors.append("connecting scenarios need p > 1")
        if not (_is_num(cfg["r1"]) and _is_num(cfg["r2"]) and 0 < cfg["r1"] < cfg["r2"]):
            errors.append("need 0 < r1 < r2")
        if not (_is_num(cfg["width"]) and _is_num(cfg["height"]) and cfg["width"] > 0 and cfg["height"] > 0):
            errors.append("width and height must be positive")
        res = cfg["resolutions"] or [cfg["cells"]]
        if not all(isinstance(c, int) and c >= 4 for c in res):
            errors.append("cells / resolutions must be integers >= 4")
        if cfg["scenario"] == "family" and not cfg["family_file"]:
            errors.append("family scenario needs family_file")
        for k in ("slack", "gap_tol", "tolerance"):
            if not (_is_num(cfg[k]) and cfg[k] > 0):
                errors.append(f"{k} must be positive")
    elif command == "verify-poletsky":
        _check_map(cfg, errors)
        _check_m_values(cfg, errors)
        n = cfg["map"].get("n", 2)
        _check_point("y0", cfg["y0"], n, errors)
        shells = cfg["shells"]
        if not (isinstance(shells, list) and shells):
            errors.append("shells must be a nonempty list of [r1, r2]")
        else:
            for s in shells:
                if not (isinstance(s, list) and len(s) == 2 and all(_is_num(v) for v in s) and 0 < s[0] < s[1]):
                    errors.append(f"shell {s!r}: need 0 < r1 < r2")
        if cfg["alphas"] is not None and not (isinstance(cfg["alphas"], list) and all(_is_num(a) for a in cfg["alphas"])):
            errors.append("alphas must be a list of numbers")
        bad = [p for p in cfg["profiles"] if p not in ("step", "inverse-t")]
        if bad or not cfg["profiles"]:
            errors.append("profiles must be a nonempty subset of [step, inverse-t]")
    elif command in ("equicontinuity", "closure-scan"):
        _check_map(cfg, errors)
        _check_m_values(cfg, errors)
        n = cfg["map"].get("n", 2)
        if command == "equicontinuity":
            _check_point("x0", cfg["x0"], n, errors)
            if not (_is_num(cfg["r0"]) and cfg["r0"] > 0):
                errors.append("r0 must be positive")
            if cfg["expect"] not in ("bounded", "unbounded"):
                errors.append("expect must be bounded or unbounded")
        else:
            pts = cfg["boundary_points"]
            if not (isinstance(pts, list) and pts):
                errors.append("boundary_points must be a nonempty list")
            else:
                for i, p in enumerate(pts):
                    _check_point(f"boundary_points[{i}]", p, n, errors)
        if cfg["radii"] is not None and not (isinstance(cfg["radii"], list) and all(_is_num(r) and r >= 0 for r in cfg["radii"])):
            errors.append("radii must be a list of nonnegative numbers")
    elif command == "zoo-dump":
        _check_map(cfg, errors, need_m=True)
        if not (isinstance(cfg["samples"], int) and cfg["samples"] >= 0):
            errors.append("samples must be a nonnegative integer")
        if not (_is_num(cfg["fd_step"]) and cfg["fd_step"] > 0):
            errors.append("fd_step must be positive")
    return errors


def _map(mp: dict[str, Any], m: int | None = None, alpha: float | None = None) -> MapFamily:
    return MapFamily(
        mp["kind"], int(m if m is not None else mp.get("m", 1)), float(alpha if alpha is not None else mp.get("alpha", 0.5)),
        int(mp.get("n", 2)), float(mp.get("p", 2.5)), bool(mp.get("inverse", False)),
    )


# outputs ---------------------------------------------------------------------------

class Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.tables: dict[str, str] = {}
        self.plots: dict[str, str] = {}

    def table(self, name: str, header: list[str], rows: list[list[Any]]) -> None:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in r])
        self.tables[name] = buf.getvalue()

    def write(self, report: dict[str, Any]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        for sub, items in (("tables", self.tables), ("plots", self.plots)):
            if items:
                (self.root / sub).mkdir(exist_ok=True)
            for name, text in items.items():
                (self.root / sub / name).write_text(text, encoding="utf-8")
        (self.root / "report.json").write_text(dumps(report), encoding="utf-8")


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(report: dict[str, Any]) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"


# commands ------------------------------------------------------------------------

def run_modulus(cfg, out: Outputs, seed: int) -> tuple[dict[str, Any], int]:
    p = float(cfg["p"])
    res_list = cfg["resolutions"] or [cfg["cells"]]
    kw = dict(slack=cfg["slack"], gap_tol=cfg["gap_tol"], max_iter=cfg["max_iter"], stencil_radius=cfg["stencil_radius"])
    runs, reference = [], None
    for cells in res_list:
        if cfg["scenario"] == "ring":
            r1, r2 = cfg["r1"], cfg["r2"]
            grid = Grid.square(r2, cells, 2)
            spec = connecting_family_spec(Sphere((0.0, 0.0), r1), Sphere((0.0, 0.0), r2), Annulus((0.0, 0.0), r1, r2))
            if p == 2:
                reference = 2 * math.pi / math.log(r2 / r1)
            res = modulus_connecting(spec, grid, p, **kw)
        elif cfg["scenario"] == "rectangle":
            w, h = cfg["width"], cfg["height"]
            ny = cells
            nx = max(1, int(round(cells * w / h)))
            grid = Grid((0.0, 0.0), (w, h), (nx, ny))
            big = 10.0 * max(w, h)
            spec = connecting_family_spec(Box((-big, -big), (0.0, big)), Box((w, -big), (w + big, big)), Box((0.0, 0.0), (w, h)))
            if p == 2:
                reference = h / w
            res = modulus_connecting(spec, grid, p, **{k: v for k, v in kw.items()})
        else:
            with open(cfg["family_file"], encoding="utf-8") as fh:
                fam = CurveFamily.load(fh)
            verts = np.concatenate([c.vertices for c in fam.curves]) if len(fam) else np.zeros((1, 2))
            lo, hi = verts.min(axis=0), verts.max(axis=0)
            pad = 1e-6 + 1e-3 * float(np.max(hi - lo))
            n = verts.shape[1]
            grid = Grid(tuple(lo - pad), tuple(hi + pad), (cells,) * n)
            res = modulus_finite(fam, grid, p, gap_tol=cfg["gap_tol"], max_iter=cfg["max_iter"])
        d = res.to_dict()
        d["cells"] = cells
        if reference is not None:
            d["reference"] = reference
            d["relative_error"] = abs(res.value - reference) / reference
        runs.append(d)
    out.table("modulus.csv", ["cells", "value", "lower_bound", "gap", "certified", "reference", "relative_error"],
              [[r["cells"], r["value"], r["lower_bound"], r["gap"], r["certified"], r.get("reference", ""), r.get("relative_error", "")]
               for r in runs])
    out.plots["modulus_vs_resolution.svg"] = line_plot(
        [Series("discrete modulus", [float(r["cells"]) for r in runs], [r["value"] for r in runs])],
        f"{cfg['scenario']} modulus vs resolution", "cells per axis", "modulus", logx=len(runs) > 1, hline=reference,
    )
    final = runs[-1]
    verdict = True if reference is None else final["relative_error"] <= cfg["tolerance"]
    certified = all(r["certified"] for r in runs)
    code = EXIT_OK if verdict and certified else (EXIT_VERDICT if not verdict else EXIT_UNCERTIFIED)
    return {"runs": runs, "reference": reference, "verdict": verdict, "certified": certified}, code


def run_poletsky(cfg, out: Outputs, seed: int) -> tuple[dict[str, Any], int]:
    mp = cfg["map"]
    alphas = cfg["alphas"] or [mp.get("alpha", 0.5)]
    sampling = PoletskySampling(cfg["directions"], cfg["cells"], tuple(cfg["profiles"]), cfg["margin"])
    reports = []
    for m in cfg["m_values"]:
        for a in alphas:
            fmap = _map(mp, m, a)
            for r1, r2 in cfg["shells"]:
                reports.append(verify_poletsky(fmap, None, cfg["y0"], r1, r2, sampling).to_dict())
    rows = []
    for r in reports:
        rows.append([r["map"]["m"], r["map"]["alpha"], r["r1"], r["r2"], r["lifted_family_size"], r["lhs"], r["lhs_lower"],
                     r["rhs"].get("step", ""), r["rhs"].get("inverse-t", ""), r["min_rhs"], r["verdict"], r["solver_certified"]])
    out.table("poletsky.csv", ["m", "alpha", "r1", "r2", "lifted", "lhs", "lhs_lower", "rhs_step", "rhs_inverse_t",
                               "min_rhs", "verdict", "certified"], rows)
    labels = [f"m={r['map']['m']} a={r['map']['alpha']:g} ({r['r1']:g},{r['r2']:g})" for r in reports]
    out.plots["poletsky_lhs_rhs.svg"] = bar_plot(
        labels, {"lhs": [r["lhs"] for r in reports], "min rhs": [r["min_rhs"] for r in reports]},
        "lifted-family modulus vs weighted shell integral", "value",
    )
    verdict = all(r["verdict"] for r in reports)
    certified = all(r["solver_certified"] for r in reports)
    code = EXIT_OK if verdict and certified else (EXIT_VERDICT if not verdict else EXIT_UNCERTIFIED)
    return {"checks": reports, "verdict": verdict, "certified": certified}, code


def _radii(cfg, r_max: float) -> list[float]:
    if cfg["radii"] is not None:
        return [float(r) for r in cfg["radii"]]
    return [r_max * 2.0 ** (-k) for k in range(int(cfg["radius_count"]))]


def _continuity_plot(rep, title: str) -> str:
    order = np.argsort(rep["radii"])
    xs = [rep["radii"][i] for i in order]
    series = [Series(f"m={row['m']}", xs, [row["displacement"][i] for i in order]) for row in rep["table"]]
    return line_plot(series, title, "radius", "modulus of continuity", logx=True, logy=True)


def run_equicontinuity(cfg, out: Outputs, seed: int) -> tuple[dict[str, Any], int]:
    family = [_map(cfg["map"], m) for m in cfg["m_values"]]
    rep = equicontinuity_scan(family, cfg["x0"], cfg["r0"], _radii(cfg, cfg["r0"]), cfg["directions"]).to_dict()
    f = rep["flags"]
    if cfg["expect"] == "bounded":
        ratio = f["C_hat_ratio"]
        verdict = f["uniformly_bounded"] and (ratio is None or ratio <= cfg["c_hat_ratio_max"])
    else:
        verdict = not f["uniformly_bounded"]
    out.table("equicontinuity.csv", ["m", "S", "C_hat"] + [f"d@{r:.6g}" for r in rep["radii"]],
              [[row["m"], row["S"], row["C_hat"] if row["C_hat"] is not None else ""] + row["displacement"] for row in rep["table"]])
    out.plots["continuity_vs_radius.svg"] = _continuity_plot(rep, "modulus of continuity at x0")
    return {"scan": rep, "expect": cfg["expect"], "verdict": verdict}, EXIT_OK if verdict else EXIT_VERDICT


def run_closure(cfg, out: Outputs, seed: int) -> tuple[dict[str, Any], int]:
    family = [_map(cfg["map"], m) for m in cfg["m_values"]]
    reps = [r.to_dict() for r in closure_scan(family, cfg["boundary_points"], _radii(cfg, cfg["r_max"]), None, cfg["directions"])]
    verdict = all(r["flags"]["monotone_per_m"] and r["flags"]["monotone_uniform"] for r in reps)
    rows = []
    for k, rep in enumerate(reps):
        for row in rep["table"]:
            rows.append([k, row["m"], row["S"]] + row["displacement"])
        out.plots[f"closure_{k}.svg"] = _continuity_plot(rep, f"chordal modulus of continuity at {rep['x0']}")
    out.table("closure.csv", ["point", "m", "S"] + [f"d@{r:.6g}" for r in reps[0]["radii"]], rows)
    return {"scans": reps, "verdict": verdict}, EXIT_OK if verdict else EXIT_VERDICT


def run_zoo(cfg, out: Outputs, seed: int) -> tuple[dict[str, Any], int]:
    fmap = _map(cfg["map"])
    rows = sample_table(fmap, cfg["samples"], seed, cfg["fd_step"])
    out.tables["zoo.csv"] = table_csv(fmap, rows)
    dev = max((abs(r["K_O_numeric"] / r["K_O_analytic"] - 1.0) for r in rows), default=0.0)
    verdict = dev <= cfg["rtol"]
    return {"map": fmap.describe(), "rows": len(rows), "max_K_O_relative_deviation": dev, "verdict": verdict}, (
        EXIT_OK if verdict else EXIT_VERDICT
    )


COMMANDS: dict[str, Callable] = {
    "modulus": run_modulus,
    "verify-poletsky": run_poletsky,
    "equicontinuity": run_equicontinuity,
    "closure-scan": run_closure,
    "zoo-dump": run_zoo,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modlab", description="Discrete modulus laboratory: scenario runner.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="JSON scenario file (defaults are used for missing keys)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config field; dotted keys reach nested fields, values parse as JSON")
    ap.add_argument("--out", type=Path, default=Path("modlab-out"), help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="recorded in the report; the compiled kernels run single-threaded")
    ap.add_argument("--seed", type=int, default=None, help="seed for randomized sampling (default: config seed or 0)")
    return ap


def _fail_config(errors: list[str]) -> int:
    sys.stdout.write(json.dumps({"status": "invalid-config", "errors": errors}, indent=2) + "\n")
    return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    user: dict[str, Any] = {}
    if args.config is not None:
        try:
            user = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            return _fail_config([f"cannot read config: {exc}"])
        if not isinstance(user, dict):
            return _fail_config(["config must be a JSON object"])
        if user.get("command", args.command) != args.command:
            return _fail_config([f"config is for command {user['command']!r}, not {args.command!r}"])
    errors = apply_overrides(user, args.overrides)
    cfg, more = resolve_config(args.command, user)
    errors += more
    seed = args.seed if args.seed is not None else user.get("seed", 0)
    if not isinstance(seed, int):
        errors.append("seed must be an integer")
    if args.threads < 1:
        errors.append("--threads must be >= 1")
    if not errors:
        errors = validate(args.command, cfg)
    if errors:
        return _fail_config(errors)
    out = Outputs(args.out)
    try:
        result, code = COMMANDS[args.command](cfg, out, seed)
    except (ContractViolation, DivergentIntegralError) as exc:
        return _fail_config([f"{type(exc).__name__}: {exc}"])
    report = {
        "command": args.command,
        "name": user.get("name", args.command),
        "config": cfg,
        "seed": seed,
        "threads": args.threads,
        "version": __version__,
        "result": result,
        "exit_code": code,
    }
    out.write(report)
    sys.stdout.write(json.dumps({"status": "done", "exit_code": code, "report": str(args.out / "report.json")}) + "\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
