"""
Config-driven experiment runner.

    opsampl <scenario> --config FILE [--seed N] [--out DIR]
    opsampl report DIR

Each run writes ``result.json`` (deterministic for a given config and seed),
``metadata.json`` (timestamps and timings), scenario CSV tables and a
``manifest.json`` with the config hash, library versions and file list.

Exit codes: 0 success, 2 invalid config, 3 scenario failure.
"""

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from . import identify as ident
from . import sparse as sp
from .errors import ConfigInvalid, OpsamplError
from .gabor import WeightVector, gabor_matrix
from .spark import corollary_window, random_window, sample_spark, spark, truncated_window
from .tfmodel import (
    LatticeParams,
    SupportSet,
    SupportSet2D,
    random_channel,
    random_channel_2d,
    rectify,
    to_impulse_response,
)

SCENARIOS = ("spark-cert", "identify-rect", "identify-general", "identify-2d", "sparse-id", "necessity-demo")
SCHEMA_VERSION = 1
DEFAULT_TOLERANCE = 1e-8


# -- config validation ----------------------------------------------------------------


def _require(cfg, key, where=""):
    if key not in cfg or cfg[key] is None:
        name = f"{where}.{key}" if where else key
        raise ConfigInvalid(f"missing required field '{name}'", name)
    return cfg[key]


def _int(value, name, lo=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigInvalid(f"field '{name}' must be an integer, got {value!r}", name)
    value = int(value)
    if lo is not None and value < lo:
        raise ConfigInvalid(f"field '{name}' must be >= {lo}, got {value}", name)
    return value


def _params(cfg, where="params", need_P=True):
    p = cfg.get(where) if isinstance(cfg, dict) else None
    if p is None:
        if need_P:
            raise ConfigInvalid(f"missing required field '{where}.P'", f"{where}.P")
        p = {}
    if not isinstance(p, dict):
        raise ConfigInvalid(f"field '{where}' must be an object", where)
    if need_P:
        _require(p, "P", where)
    out = {}
    for key in ("P", "R", "K"):
        if key in p:
            out[key] = _int(p[key], f"{where}.{key}", 1)
    T = p.get("T", 1.0)
    if not isinstance(T, (int, float)) or not T > 0:
        raise ConfigInvalid(f"field '{where}.T' must be a positive number, got {T!r}", f"{where}.T")
    out["T"] = float(T)
    return out


def _window(cfg, P, seed):
    spec = cfg.get("window", {"type": "corollary" if P >= 4 else "random"})
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type")
    if kind == "corollary":
        if P < 4:
            raise ConfigInvalid(f"corollary window needs P >= 4, got P = {P}", "window.type")
        return corollary_window(P)
    if kind == "random":
        return random_window(P, spec.get("seed", seed))
    if kind == "steinhaus":
        return sp.steinhaus_window(P, spec.get("seed", seed))
    if kind == "truncated":
        k = _int(_require(spec, "k", "window"), "window.k", 1)
        try:
            return truncated_window(P, k, spec.get("seed", seed))
        except OpsamplError as exc:
            raise ConfigInvalid(str(exc), "window.k") from exc
    if kind == "explicit":
        values = _require(spec, "values", "window")
        try:
            c = WeightVector.from_json(values)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid("window.values must be a list of [re, im] pairs", "window.values") from exc
        if c.period != P:
            raise ConfigInvalid(f"window has {c.period} entries, expected {P}", "window.values")
        return c
    raise ConfigInvalid(f"unknown window type {kind!r}", "window.type")


def _support(cfg, params_dict):
    spec = _require(cfg, "support")
    if "region" in spec:
        budget = _int(spec.get("budget", 8), "support.budget", 1)
        T_grid = spec.get("T_grid")
        if not isinstance(spec["region"], list) or not all(
            isinstance(r, list) and len(r) == 4 and all(isinstance(v, (int, float)) for v in r) for r in spec["region"]
        ):
            raise ConfigInvalid("support.region must be a list of [t0, t1, nu0, nu1] rectangles", "support.region")
        return rectify(spec["region"], budget, T_grid, params_dict.get("R", 1), params_dict.get("K", 1))
    if "P" not in params_dict:
        raise ConfigInvalid("missing required field 'params.P'", "params.P")
    cells = _require(spec, "cells", "support")
    params = LatticeParams(**params_dict)
    try:
        shifts = {int(q): float(s) for q, s in spec.get("doppler_shift", {}).items()}
        return SupportSet(frozenset(tuple(c) for c in cells), params, shifts)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid support: {exc}", "support.cells") from exc


# -- scenarios ------------------------------------------------------------------------


class Outcome:
    def __init__(self, result, tables=None, extra_files=None, ok=True):
        self.result = result
        self.tables = tables or {}
        self.extra_files = extra_files or {}
        self.ok = ok


def _run_spark(cfg, seed):
    P = _int(_require(_params(cfg), "P", "params"), "params.P", 1)
    c = _window(cfg, P, seed)
    G = gabor_matrix(c)
    if cfg.get("samples"):
        cert = sample_spark(G, _int(cfg["samples"], "samples", 1), seed)
    else:
        cert = spark(G)
    result = {"window": c.to_json(), "certificate": cert.to_json(with_elapsed=False)}
    return Outcome(result, extra_files={"certificate.json": cert.to_json(with_elapsed=True)})


def _run_rect(cfg, seed):
    pd = _params(cfg)
    if pd["P"] != 1:
        raise ConfigInvalid(f"identify-rect needs params.P = 1, got {pd['P']}", "params.P")
    params = LatticeParams(**pd)
    trials = _int(cfg.get("trials", 1), "trials", 1)
    tol = float(cfg.get("tolerance", DEFAULT_TOLERANCE))
    shift = float(cfg.get("doppler_shift", (params.K // 2) * params.doppler_resolution))
    S = SupportSet(frozenset({(0, 0)}), params, {0: shift})
    band_start = -S.shift_bins(0)
    rows, errors = [], []
    for t in range(trials):
        H = random_channel(S, [seed, t])
        out = ident.sound(H, np.ones(1))
        h = ident.reconstruct_rect(out, params, band_start=band_start)
        ref = to_impulse_response(H)[:, : params.R]
        err = float(np.linalg.norm(h - ref) / np.linalg.norm(ref))
        hg, sigma = ident.norm_identity(H)
        errors.append(err)
        rows.append([t, f"{err:.6e}", f"{hg:.12e}", f"{sigma:.12e}"])
    result = {
        "params": params.to_json(),
        "support": S.to_json(),
        "trials": trials,
        "kernel_error": max(errors),
        "tolerance": tol,
        "pass": max(errors) < tol,
    }
    table = [["trial", "kernel_error", "norm_Hg", "norm_sigma"]] + rows
    return Outcome(result, {"trials.csv": table}, ok=result["pass"])


def _run_general(cfg, seed):
    pd = _params(cfg, need_P=False)
    S = _support(cfg, pd)
    params = S.params
    c = _window(cfg, params.P, seed)
    trials = _int(cfg.get("trials", 1), "trials", 1)
    tol = float(cfg.get("tolerance", DEFAULT_TOLERANCE))
    k_err, e_err, r_err, first = [], [], [], None
    for t in range(trials):
        H = random_channel(S, [seed, t])
        out = ident.sound(H, c)
        res = ident.channel_errors(ident.solve_known_support(ident.assemble(out, c, params, S)), H)
        h = ident.reconstruct_general(out, c, S)
        ref = to_impulse_response(H)[:, : params.L]
        r_err.append(float(np.linalg.norm(h - ref) / np.linalg.norm(ref)))
        k_err.append(res.kernel_error)
        e_err.append(res.eta_error)
        first = first or res
    result = {
        "params": params.to_json(),
        "support": S.to_json(),
        "window": c.to_json(),
        "trials": trials,
        "kernel_error": max(k_err),
        "eta_error": max(e_err),
        "reconstruction_error": max(r_err),
        "max_residual": first.max_residual,
        "max_cond": float(first.cond.max()),
        "tolerance": tol,
    }
    result["pass"] = max(result["kernel_error"], result["reconstruction_error"]) < tol
    table = [["j", "k", "residual", "cond"]] + [
        [j, k, f"{r:.6e}", f"{cn:.6e}"] for j, k, r, cn in first.residual_rows()
    ]
    return Outcome(result, {"residuals.csv": table}, ok=result["pass"])


def _run_2d(cfg, seed):
    plist = _require(cfg, "params")
    if not isinstance(plist, list):
        raise ConfigInvalid("field 'params' must be a list of per-dimension parameter objects", "params")
    params = ident._check_params_2d(LatticeParams(**_params({"p": p}, "p")) for p in plist)
    P = [p.P for p in params]
    Ptot = math.prod(P)
    c = _window(cfg, Ptot, seed)
    tol = float(cfg.get("tolerance", DEFAULT_TOLERANCE))
    index_map = cfg.get("index_map", "mixed")
    if index_map not in ("mixed", "crt"):
        raise ConfigInvalid(f"index_map must be 'mixed' or 'crt', got {index_map!r}", "index_map")
    spec = _require(cfg, "support")
    rng = np.random.default_rng(seed)
    if "cells" in spec:
        cells = [(tuple(q), tuple(m)) for q, m in spec["cells"]]
    else:
        n = _int(_require(spec, "random_cells", "support"), "support.random_cells", 0)
        allc = ident._cells_2d(*P)
        cells = [allc[i] for i in sorted(rng.choice(len(allc), min(n, len(allc)), replace=False))]
    trials = _int(cfg.get("trials", 1), "trials", 1)
    errors = []
    for t in range(trials):
        S = SupportSet2D(frozenset(cells), params)
        H = random_channel_2d(S, [seed, t])
        res = ident.identify_2d(H, c, S, index_map)
        errors.append(res.eta_error)
    result = {
        "params": [p.to_json() for p in params],
        "cells": [[list(q), list(m)] for q, m in sorted(cells)],
        "index_map": index_map,
        "window": c.to_json(),
        "trials": trials,
        "eta_error": max(errors),
        "tolerance": tol,
        "pass": max(errors) < tol,
    }
    return Outcome(result, ok=result["pass"])


def _run_sparse(cfg, seed):
    P = _int(_require(_params(cfg), "P", "params"), "params.P", 1)
    ks = cfg.get("k", list(range(1, max(P // 2, 1) + 1)))
    ks = [_int(k, "k", 0) for k in (ks if isinstance(ks, list) else [ks])]
    trials = _int(cfg.get("trials", 100), "trials", 1)
    method = cfg.get("method", "greedy")
    if method not in ("greedy", "exhaustive"):
        raise ConfigInvalid(f"method must be 'greedy' or 'exhaustive', got {method!r}", "method")
    spec = cfg.get("window", {"type": "steinhaus"})
    kind = spec if isinstance(spec, str) else spec.get("type")
    window = "steinhaus" if kind == "steinhaus" else _window(cfg, P, seed)
    rows = sp.recovery_trials(P, ks, trials, seed, method, window)
    rates = [r["successes"] / r["trials"] for r in rows]
    result = {
        "P": P,
        "method": method,
        "window": kind,
        "rows": rows,
        "success_rate": rates,
        "monotone": all(a >= b for a, b in zip(rates, rates[1:])),
    }
    fields = ["P", "k", "method", "trials", "successes", "mean_residual"]
    table = [fields] + [[r[f] if f != "mean_residual" else f"{r[f]:.6e}" for f in fields] for r in rows]
    return Outcome(result, {"trials.csv": table})


def _run_necessity(cfg, seed):
    P = _int(_require(_params(cfg), "P", "params"), "params.P", 1)
    extra = _int(_require(cfg, "extra"), "extra", 1)
    if P + extra > P * P:
        raise ConfigInvalid(f"extra = {extra} exceeds P^2 - P = {P * P - P}", "extra")
    c = _window(cfg, P, seed)
    report = ident.necessity_demo(P, extra, c)
    report["pass"] = report["nullity"] >= extra and report["null_residual"] < 1e-10
    return Outcome(report, ok=report["pass"])


RUNNERS = {
    "spark-cert": _run_spark,
    "identify-rect": _run_rect,
    "identify-general": _run_general,
    "identify-2d": _run_2d,
    "sparse-id": _run_sparse,
    "necessity-demo": _run_necessity,
}


# -- persistence ----------------------------------------------------------------------


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _versions():
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for name in ("artifact", "shapely"):
        try:
            out[name] = importlib_metadata.version(name)
        except importlib_metadata.PackageNotFoundError:
            out[name] = None
    return out


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def run(config, seed=None, out=None):
    """Execute a scenario config (dict). Returns (exit code, output directory or None)."""
    if not isinstance(config, dict):
        raise ConfigInvalid("config must be a JSON object", "")
    scenario = _require(config, "scenario")
    if scenario not in SCENARIOS:
        raise ConfigInvalid(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}", "scenario")
    seed = _int(seed if seed is not None else config.get("seed", 0), "seed", 0)
    out_dir = Path(out or config.get("output_dir") or f"opsampl-out/{scenario}")
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    outcome = RUNNERS[scenario](config, seed)
    elapsed = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    effective = {**config, "seed": seed}
    effective.pop("output_dir", None)
    result = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario,
        "seed": seed,
        "ok": bool(outcome.ok),
        "result": outcome.result,
    }
    files = {"result.json": _dump(result)}
    for name, obj in outcome.extra_files.items():
        files[name] = _dump(obj)
    files["metadata.json"] = _dump(
        {"started": started.isoformat(), "elapsed_seconds": elapsed, "argv": sys.argv[1:]}
    )
    for name, text in files.items():
        (out_dir / name).write_text(text)
    for name, rows in outcome.tables.items():
        _write_csv(out_dir / name, rows)
    listing = sorted(list(files) + list(outcome.tables) + ["manifest.json"])
    canonical = json.dumps(effective, sort_keys=True, separators=(",", ":"))
    manifest = {
        "scenario": scenario,
        "config": effective,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "versions": _versions(),
        "files": listing,
    }
    (out_dir / "manifest.json").write_text(_dump(manifest))
    return (0 if outcome.ok else 3), out_dir


# -- reporting ------------------------------------------------------------------------


def _fmt(x):
    return f"{x:.3g}" if isinstance(x, float) else str(x)


def report(path):
    """Markdown summary of a run directory (or a result.json file)."""
    path = Path(path)
    result_file = path / "result.json" if path.is_dir() else path
    if not result_file.is_file():
        raise FileNotFoundError(f"no result.json in {path}")
    doc = json.loads(result_file.read_text())
    scenario, res = doc["scenario"], doc["result"]
    lines = [f"# {scenario}", "", f"- seed: {doc['seed']}"]
    if scenario == "spark-cert":
        cert = res["certificate"]
        if cert["full_spark"]:
            verdict = f"full spark ({cert['minors_checked']} minors, min |det| = {cert['min_abs_minor']:.3g})"
        else:
            verdict = f"spark {cert['spark']} < {cert['P'] + 1} (witness {cert['witness']})"
        if not cert["exhaustive"]:
            verdict += " [sampled]"
        lines.append(f"- verdict: {verdict}")
    elif scenario == "sparse-id":
        lines.append(f"- P = {res['P']}, method {res['method']}, window {res['window']}")
        lines += ["", "| k | successes | trials | rate | mean residual |", "|---|---|---|---|---|"]
        table = result_file.parent / "trials.csv"
        rows = list(csv.DictReader(table.open())) if table.is_file() else res["rows"]
        for r in rows:
            rate = int(r["successes"]) / int(r["trials"])
            lines.append(f"| {r['k']} | {r['successes']} | {r['trials']} | {rate:.2f} | {float(r['mean_residual']):.3g} |")
        lines.append("")
        lines.append(f"- success non-increasing in k: {res['monotone']}")
    elif scenario == "necessity-demo":
        lines.append(
            f"- P = {res['P']}, {res['unknowns']} unknowns, rank {res['rank']}, nullity {res['nullity']}, "
            f"||G v|| = {res['null_residual']:.3g}"
        )
    else:
        for key in ("params", "kernel_error", "eta_error", "reconstruction_error", "max_cond", "index_map"):
            if key in res:
                lines.append(f"- {key}: {_fmt(res[key])}")
    if "pass" in res:
        tol = res.get("tolerance")
        suffix = f" (tolerance {tol:g})" if tol is not None else ""
        lines.append(f"- status: {'PASS' if res['pass'] else 'FAIL'}{suffix}")
    return "\n".join(lines) + "\n"


# -- entry point ----------------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="opsampl", description="Operator sampling experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("path")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "report":
        try:
            sys.stdout.write(report(args.path))
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        return 0
    try:
        config = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        print(f"config error: file not found: {args.config}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 2
    if isinstance(config, dict):
        config.setdefault("scenario", args.command)
        if config["scenario"] != args.command:
            print(f"config error: field 'scenario' is {config['scenario']!r}, command is {args.command!r}", file=sys.stderr)
            return 2
    try:
        code, out_dir = run(config, args.seed, args.out)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OpsamplError as exc:
        print(f"scenario failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(f"{args.command}: {'ok' if code == 0 else 'FAILED'} -> {out_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
