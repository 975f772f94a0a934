"""Scenario runner: ``hydronls COMMAND --config cfg.json --out DIR``.

Commands
--------
profile    solve an amplitude equation, write ``profile.csv/json/svg``
classify   regime and collapse time for ``(H, M0, M0p)``, write ``blowup.json``
construct  build the exact solution at the requested times, write
           ``.wfield`` snapshots, 1D CSV sections and ``functionals.json``
evolve     build the ``t = 0`` field and run the split-step oracle on it
verify     construct + evolve + compare (+ optional rate fits); ``verdict.json``
sweep      classify a grid of ``(H, M0, M0p)`` concurrently; ``regime_map.csv``

Config documents are JSON objects with ``"schema": "hydronls/1"`` and the
blocks listed below; unknown keys anywhere are rejected.

``profile``   ``{"kind": "ground"|"dirichlet"|"stark", "n", "k", "gamma0",
              "k1", "ball_radius", "half_interval", "tol", "dr"}``
``virial``    ``{"H", "M0", "M0p", "N", "n"}``
``flow``      ``{"mode": "profile"|"general", "a0", "b0", "gamma0", "lambda"}``
              (``k``/``k1`` are taken from the profile block)
``solution``  ``{"x0", "theta", "gamma1", "times"}``
``grid``      ``{"n_dims", "points_per_dim", "half_width"}``
``evolve``    ``{"dt", "t_end", "snapshot_times", "containment_threshold",
              "amp_ceiling"}``
``verify``    ``{"l2_tol", "mass_tol", "rate": {"count", "window", "tol"}}``
``sweep``     ``{"H": [...], "M0": [...], "M0p": [...], "n"}``

Exit status: 0 ok, 2 config error, 3 solver failure, 4 verification failure.
On failure ``error.json`` is written to the output directory and echoed to
stdout.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from hydronls.constructor import SolutionSpec, build
from hydronls.diagnostics import fit_rate, functionals, rate_sample_times
from hydronls.errors import ConfigError, HydroNLSError
from hydronls.fields import export_csv_1d, make_grid, save_wfield
from hydronls.profile import (dirichlet_profile, export_profile, ground_state,
                              profile_residual, stark_profile_1d)
from hydronls.splitstep import EvolveConfig, compare, evolve
from hydronls.timeflow import (classify_blowup, general_timeflow, profile_timeflow,
                               virial_coefficients, virial_from_flow)

log = logging.getLogger("hydronls")

SCHEMA_VERSION = "hydronls/1"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1, "maxItems": 3}


def _block(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


BLOCKS = {
    "profile": _block({
        "kind": {"enum": ["ground", "dirichlet", "stark"]},
        "n": {"type": "integer", "minimum": 1, "maximum": 3},
        "k": _num, "gamma0": _num, "k1": _num,
        "ball_radius": _pos, "half_interval": _pos, "tol": _pos, "dr": _pos,
    }, ["kind"]),
    "virial": _block({"H": _num, "M0": _pos, "M0p": _num, "N": _pos,
                      "n": {"type": "integer", "minimum": 1, "maximum": 3}},
                     ["H", "M0", "M0p"]),
    "flow": _block({"mode": {"enum": ["profile", "general"]}, "a0": _num, "b0": _num,
                    "gamma0": _num, "lambda": _vec}, ["mode"]),
    "solution": _block({"x0": _vec, "theta": _num, "gamma1": _num,
                        "times": {"type": "array", "items": _num}}),
    "grid": _block({"n_dims": {"type": "integer", "minimum": 1, "maximum": 3},
                    "points_per_dim": {"type": "integer", "minimum": 8},
                    "half_width": _pos}, ["n_dims", "points_per_dim", "half_width"]),
    "evolve": _block({"dt": _pos, "t_end": _num,
                      "snapshot_times": {"type": "array", "items": _num},
                      "containment_threshold": _pos, "amp_ceiling": _pos}, ["dt", "t_end"]),
    "verify": _block({
        "l2_tol": _pos, "mass_tol": _pos,
        "rate": _block({"count": {"type": "integer", "minimum": 8},
                        "window": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "tol": _pos}),
    }),
    "sweep": _block({"H": {"type": "array", "items": _num, "minItems": 1},
                     "M0": {"type": "array", "items": _pos, "minItems": 1},
                     "M0p": {"type": "array", "items": _num, "minItems": 1},
                     "n": {"type": "integer", "minimum": 1, "maximum": 3}},
                    ["H", "M0", "M0p"]),
}

REQUIRED = {
    "profile": ["profile"],
    "classify": ["virial"],
    "construct": ["profile", "flow", "grid"],
    "evolve": ["profile", "flow", "grid", "evolve"],
    "verify": ["profile", "flow", "grid", "evolve"],
    "sweep": ["sweep"],
}


def config_schema(command: str) -> dict:
    props = {"schema": {"const": SCHEMA_VERSION}, "seed": {"type": "integer"}}
    props.update(BLOCKS)
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": ["schema"] + REQUIRED[command]}


def load_config(path, command: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, config_schema(command))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    return cfg


# -- output helpers ---------------------------------------------------------


def _clean(obj):
    """Make an object JSON-safe: numpy scalars to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def write_svg(path: Path, x, y, title: str = "") -> Path:
    """Single-polyline plot scaled into a 480x320 box."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    w, h, pad = 480, 320, 20
    xs = (x - x.min()) / (np.ptp(x) or 1.0) * (w - 2 * pad) + pad
    ys = h - pad - (y - y.min()) / (np.ptp(y) or 1.0) * (h - 2 * pad)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
    path.write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">\n'
        f'<text x="{pad}" y="14" font-size="12">{title}</text>\n'
        f'<polyline fill="none" stroke="black" points="{pts}"/>\n</svg>\n')
    return path


# -- building blocks --------------------------------------------------------


def make_profile(block: dict):
    kind = block["kind"]
    tol = block.get("tol")
    extra = {"dr": block["dr"]} if "dr" in block else {}
    if kind == "ground":
        return ground_state(block.get("n", 1), tol=tol or 1e-10, **extra)
    if kind == "dirichlet":
        if "ball_radius" not in block:
            raise ConfigError("profile/ball_radius is required for dirichlet profiles")
        return dirichlet_profile(block.get("n", 1), block.get("k", 0.0), block.get("gamma0", 1.0),
                                 block["ball_radius"], tol=tol or 1e-8, **extra)
    if "half_interval" not in block:
        raise ConfigError("profile/half_interval is required for stark profiles")
    return stark_profile_1d(block.get("k1", 0.0), block.get("gamma0", 1.0),
                            block["half_interval"], tol=tol or 1e-8, **extra)


def make_spec(cfg: dict, profile=None) -> SolutionSpec:
    profile = profile or make_profile(cfg["profile"])
    p = profile.params
    fb = cfg["flow"]
    sol = cfg.get("solution", {})
    a0 = fb.get("a0", 0.0)
    gamma0 = fb.get("gamma0", p.gamma0)
    if fb["mode"] == "profile":
        flow = profile_timeflow(a0, p.k, gamma0, p.n)
        vc = virial_from_flow(a0, p.k, profile.second_moment(), profile.l2_norm_sq())
    else:
        lam = fb.get("lambda", [p.lambda_dir] if p.mode == "stark" else [1.0] * p.n)
        flow = general_timeflow(a0, fb.get("b0", 0.0), p.k1, gamma0, lam)
        vc = None
    return SolutionSpec(profile, flow, vc, x0=sol.get("x0"), theta=sol.get("theta", 0.0),
                        gamma1=sol.get("gamma1", 0.0))


def make_grid_from(cfg: dict):
    g = cfg["grid"]
    return make_grid(g["n_dims"], g["points_per_dim"], g["half_width"])


def _lam(spec: SolutionSpec):
    return spec.flow.lam if spec.flow.mode == "general" else None


# -- commands ---------------------------------------------------------------


def cmd_profile(cfg, out: Path, threads: int) -> int:
    prof = make_profile(cfg["profile"])
    export_profile(prof, out / "profile")
    write_svg(out / "profile.svg", prof.r_nodes, prof.u_values, f"{prof.kind} profile")
    log.info("profile u0=%.12g residual=%.3g", prof.u_center, profile_residual(prof))
    return EXIT_OK


def cmd_classify(cfg, out: Path, threads: int) -> int:
    v = cfg["virial"]
    vc = virial_coefficients(v["H"], v["M0"], v["M0p"], v.get("N", 1.0))
    report = classify_blowup(vc, v.get("n", 1))
    write_json(out / "blowup.json", {"input": v, **report.to_json()})
    log.info("regime=%s T=%s", report.regime, report.T)
    return EXIT_OK


def cmd_construct(cfg, out: Path, threads: int) -> int:
    spec, grid = make_spec(cfg), make_grid_from(cfg)
    times = cfg.get("solution", {}).get("times", [0.0])
    reports = []
    for i, t in enumerate(times):
        psi = build(spec, t, grid)
        save_wfield(psi, out / f"snapshot_{i:03d}.wfield")
        if grid.n_dims == 1:
            export_csv_1d(psi, out / f"snapshot_{i:03d}.csv")
            write_svg(out / f"snapshot_{i:03d}.svg", grid.axis, psi.amplitude, f"|psi| at t={t}")
        reports.append({"t": t, **functionals(psi, _lam(spec)).to_json()})
    write_json(out / "functionals.json", reports)
    return EXIT_OK


def _run_oracle(cfg, spec, grid):
    e = cfg["evolve"]
    snaps = tuple(e.get("snapshot_times", [e["t_end"]]))
    ecfg = EvolveConfig(e["dt"], e["t_end"], snapshot_times=snaps,
                        containment_threshold=e.get("containment_threshold", 1e-8),
                        amp_ceiling=e.get("amp_ceiling", 1e6))
    psi0 = build(spec, 0.0, grid)
    return psi0, evolve(psi0, ecfg)


def cmd_evolve(cfg, out: Path, threads: int) -> int:
    spec, grid = make_spec(cfg), make_grid_from(cfg)
    _, res = _run_oracle(cfg, spec, grid)
    for i, snap in enumerate(res.snapshots):
        save_wfield(snap, out / f"numeric_{i:03d}.wfield")
        if grid.n_dims == 1:
            export_csv_1d(snap, out / f"numeric_{i:03d}.csv")
    write_json(out / "termination.json", res.termination_record())
    return EXIT_OK


def cmd_verify(cfg, out: Path, threads: int) -> int:
    spec, grid = make_spec(cfg), make_grid_from(cfg)
    vb = cfg.get("verify", {})
    psi0, res = _run_oracle(cfg, spec, grid)
    checks = {}
    errs = compare(lambda t: build(spec, t, grid), res.snapshots)
    l2_tol = vb.get("l2_tol", 1e-3)
    checks["termination"] = {"value": res.reason, "pass": res.reason == "completed"}
    checks["l2_error"] = {"value": max(errs) if errs else None, "tol": l2_tol,
                          "pass": bool(errs) and max(errs) <= l2_tol}
    n0 = functionals(psi0).N
    drift = max((abs(functionals(s).N - n0) / n0 for s in res.snapshots), default=0.0)
    mass_tol = vb.get("mass_tol", 1e-10)
    checks["mass_drift"] = {"value": drift, "tol": mass_tol, "pass": drift <= mass_tol}
    if "rate" in vb:
        checks.update(_rate_checks(spec, grid, vb["rate"]))
    verdict = all(c["pass"] for c in checks.values())
    write_json(out / "verdict.json", {
        "verdict": "pass" if verdict else "fail",
        "checks": checks,
        "errors": [{"t": s.time_tag, "rel_l2": e} for s, e in zip(res.snapshots, errs)],
        "termination": res.termination_record(),
    })
    return EXIT_OK if verdict else EXIT_VERIFY


def _rate_checks(spec, grid, rb) -> dict:
    if spec.vc is None:
        raise ConfigError("rate fits need a profile-mode flow")
    report = classify_blowup(spec.vc, spec.n)
    if report.T is None:
        raise ConfigError(f"rate fits need a collapsing solution, regime is {report.regime}")
    window = tuple(rb.get("window", (0.5, 0.9)))
    times = rate_sample_times(report.T, window, rb.get("count", 24))
    amp, grad = [], []
    for t in times:
        f = functionals(build(spec, float(t), grid))
        amp.append((t, f.amp_max))
        grad.append((t, f.grad_norm_sq))
    win = (window[0] * report.T, window[1] * report.T)
    tol = rb.get("tol", 0.02)
    out = {}
    for name, series, target in (("amplitude_exponent", amp, report.amplitude_exponent),
                                 ("gradient_exponent", grad, report.gradient_exponent)):
        fit = fit_rate(series, report.T, win)
        out[name] = {"value": fit.exponent, "expected": target, "r_squared": fit.r_squared,
                     "tol": tol, "pass": abs(fit.exponent - target) <= tol * target}
    return out


def _classify_row(triple, n):
    H, M0, M0p = triple
    rep = classify_blowup(virial_coefficients(H, M0, M0p, 1.0), n)
    return [H, M0, M0p, rep.K, rep.k, rep.regime, rep.T, rep.paper_T]


def cmd_sweep(cfg, out: Path, threads: int) -> int:
    s = cfg["sweep"]
    triples = list(itertools.product(s["H"], s["M0"], s["M0p"]))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda tr: _classify_row(tr, s.get("n", 1)), triples))
    with open(out / "regime_map.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["H", "M0", "M0p", "K", "k", "regime", "T", "paper_T"])
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v)
                        for v in row])
    return EXIT_OK


COMMANDS = {
    "profile": cmd_profile,
    "classify": cmd_classify,
    "construct": cmd_construct,
    "evolve": cmd_evolve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def run(command: str, config_path, out_dir, threads: int = 1) -> int:
    out = Path(out_dir)
    try:
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        cfg = load_config(config_path, command)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[command](cfg, out, threads)
    except ConfigError as exc:
        return _fail(out, EXIT_CONFIG, exc.code, str(exc))
    except (HydroNLSError, ValueError, RuntimeError, ArithmeticError) as exc:
        return _fail(out, EXIT_SOLVER, getattr(exc, "code", type(exc).__name__), str(exc))


def _fail(out: Path, status: int, code: str, message: str) -> int:
    payload = {"status": "error", "exit_code": status, "reason": code, "message": message}
    text = json.dumps(payload, sort_keys=True)
    print(text)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n")
    except OSError:
        pass
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hydronls", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON scenario config")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sweep")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return run(args.command, args.config, args.out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
