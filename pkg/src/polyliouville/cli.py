"""Command line front end.

Every subcommand reads one JSON config (validated against
``config.schema.json``), writes CSV/JSON artifacts into ``--out`` and a
``manifest.json`` that lists them and echoes the resolved config. Floats in
artifacts are rounded to 12 significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import platform
import sys
import time
from dataclasses import asdict
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .core import constants_for, round_sig
from .errors import (
    ConfigError,
    DomainError,
    InvalidOrderError,
    LiouvilleError,
    NoStandardSolutionError,
    ResolutionError,
    SignError,
)

COMMANDS = ("constants", "green", "phi", "residual", "energy", "spectra", "solve", "linking")
PRESETS = ("disc-k1", "disc-k2", "square-k1", "ball4-k1")
DIGITS = 12

BASE_DEFAULTS = {
    "m": 1,
    "bc": "dirichlet",
    "domain": {"kind": "unit_ball"},
    "V": {"kind": "constant", "value": 1.0},
    "k": 1,
    "eps": 0.05,
    "delta0": 0.05,
    "seed": 0,
    "tolerances": {},
}

SECTION_DEFAULTS = {
    "green": {"n_pairs": 16},
    "phi": {"n_grid": 41, "n_samples": 200, "n_starts": 32},
    "spectra": {"m_max": 6, "k_max": 10, "kernel_count": []},
    "solve": {"n_starts": 32, "contrast_delta": 0.25, "write_fields": True},
    "linking": {"mode": "min", "n_boundary": 64, "n_images": 33, "max_iter": 2000},
}

SWEEP_DEFAULTS = {
    "residual": [0.2, 0.1, 0.05, 0.025],
    "energy": [0.1, 0.05, 0.025],
}

CONFIG_ERRORS = (
    ConfigError,
    InvalidOrderError,
    DomainError,
    ResolutionError,
    SignError,
    NoStandardSolutionError,
)


class UsageError(Exception):
    """Bad command line or config; maps to exit code 1."""


# ---------------------------------------------------------------------------
# config handling


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config.schema.json").read_text())


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return json.loads(resources.files(__package__).joinpath("presets", f"{name}.json").read_text())


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise UsageError(f"config invalid at {where}: {exc.message}") from exc


def read_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    # a manifest from an earlier run can be fed back in
    if set(data) >= {"command", "resolved_config"}:
        data = data["resolved_config"]
    return data


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("domain", "V"):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _default_points(command: str, m: int, k: int) -> list | None:
    dim = 2 * m
    if command == "energy":
        if k == 1:
            return [[0.0] * dim]
        if k == 2:
            return [[0.45] + [0.0] * (dim - 1), [-0.45] + [0.0] * (dim - 1)]
    if command == "residual":
        if k == 1:
            return [[0.3] + [0.0] * (dim - 1)]
        if k == 2:
            return [[0.45] + [0.0] * (dim - 1), [-0.45] + [0.0] * (dim - 1)]
    return None


def resolve_config(command: str, args: argparse.Namespace, tol_overrides: dict) -> dict:
    user: dict = {}
    if args.preset:
        user = _merge(user, load_preset(args.preset))
    if args.config:
        user = _merge(user, read_config_file(args.config))
    validate(user)
    cfg = _merge(BASE_DEFAULTS, user)
    if command in SECTION_DEFAULTS:
        cfg[command] = _merge(SECTION_DEFAULTS[command], cfg.get(command, {}))
    if args.m is not None:
        cfg["m"] = args.m
    if args.k is not None:
        cfg["k"] = args.k
    if args.eps is not None:
        cfg["eps"] = args.eps
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.eps_sweep is not None:
        cfg["eps_sweep"] = args.eps_sweep
    elif command in SWEEP_DEFAULTS and "eps_sweep" not in cfg:
        cfg["eps_sweep"] = list(SWEEP_DEFAULTS[command])
    if args.m_max is not None:
        if command == "spectra":
            cfg["spectra"]["m_max"] = args.m_max
        elif command != "constants":
            raise UsageError("--m-max applies to constants and spectra")
    if command == "constants":
        if args.m_max:
            cfg["constants"] = {"m_values": list(range(1, args.m_max + 1))}
        elif args.m is not None or "m_values" not in cfg.get("constants", {}):
            cfg["constants"] = {"m_values": [cfg["m"]]}
    cfg["tolerances"] = _merge(cfg.get("tolerances", {}), tol_overrides)
    if "xi" not in cfg:
        pts = _default_points(command, cfg["m"], cfg["k"])
        if pts is not None:
            cfg["xi"] = pts
    validate(cfg)
    if cfg["m"] > 1 and cfg["domain"]["kind"] != "unit_ball":
        raise UsageError("planar domains need m = 1")
    return cfg


def parse_eps_sweep(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps sweep {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty eps sweep")
    return vals


def parse_tol_overrides(extra: list[str]) -> dict:
    """``--tol-NAME VALUE`` pairs; names use dashes or underscores."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--tol-"):
            raise UsageError(f"unrecognized argument {tok!r}")
        name, _, val = tok[len("--tol-") :].partition("=")
        if not val:
            if i + 1 >= len(extra):
                raise UsageError(f"{tok} needs a value")
            val = extra[i + 1]
            i += 1
        try:
            out[name.replace("-", "_")] = float(val)
        except ValueError as exc:
            raise UsageError(f"{tok} needs a number, got {val!r}") from exc
        i += 1
    return out


# ---------------------------------------------------------------------------
# output


def rounded(obj):
    """Recursively round floats to 12 significant digits; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return round_sig(x, DIGITS) if math.isfinite(x) else None
    return obj


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{DIGITS}g}"
    if v is None:
        return ""
    return str(v)


class Writer:
    """Collects emitted files for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> None:
        text = json.dumps(rounded(obj), indent=2, sort_keys=True, allow_nan=False)
        (self.out / name).write_text(text + "\n")
        self.files.append(name)

    def csv(self, name: str, header: list[str], rows) -> None:
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        self.files.append(name)


def versions() -> dict:
    return {
        "polyliouville": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "jsonschema": metadata.version("jsonschema"),
    }


# ---------------------------------------------------------------------------
# model construction


def build_green(cfg: dict):
    from .greens import make_green

    return make_green(cfg["m"], cfg["bc"], cfg["domain"])


def build_potential(cfg: dict):
    from .potentials import potential_from_dict

    return potential_from_dict(cfg["V"], 2 * cfg["m"])


def _points(cfg: dict, key: str = "xi") -> np.ndarray:
    pts = np.asarray(cfg[key], float)
    if pts.shape[1] != 2 * cfg["m"]:
        raise UsageError(f"{key} needs {2 * cfg['m']} coordinates per point")
    return pts


def _require_points(cfg: dict, command: str) -> np.ndarray:
    if "xi" not in cfg:
        raise UsageError(f"{command} needs 'xi' for k = {cfg['k']}")
    pts = _points(cfg)
    if len(pts) != cfg["k"]:
        raise UsageError(f"xi has {len(pts)} points but k = {cfg['k']}")
    return pts


# ---------------------------------------------------------------------------
# subcommands


def cmd_constants(cfg: dict, w: Writer) -> None:
    from .core import printed_constants

    out = []
    for m in cfg["constants"]["m_values"]:
        c = constants_for(m)
        d = c.as_dict()
        d["c1_over_c0_exact"] = str(c.c1_over_c0)
        d["energy_offset_per_bubble"] = c.energy_offset_per_bubble
        d["printed"] = printed_constants(m)
        out.append(d)
    w.json("constants.json", {"constants": out})


def _sample_pairs(green, n: int, rng: np.random.Generator, margin: float) -> list:
    dim = 2 * green.m
    dom = getattr(green, "domain", None)
    if dom is not None:
        x0, x1, y0, y1 = dom.bbox()
        lo, hi = np.array([x0, y0]), np.array([x1, y1])
    else:
        lo, hi = -np.ones(dim), np.ones(dim)

    def draw():
        for _ in range(100000):
            p = rng.uniform(lo, hi)
            if green.contains(p) and green.dist_to_boundary(p) > margin:
                return p
        raise ConfigError("could not sample admissible points")

    pairs = []
    while len(pairs) < n:
        x, xi = draw(), draw()
        if np.linalg.norm(x - xi) > margin:
            pairs.append((x, xi))
    return pairs


def cmd_green(cfg: dict, w: Writer) -> None:
    from .greens import green_table

    green = build_green(cfg)
    sec = cfg["green"]
    if "pairs" in sec:
        pairs = [(np.asarray(a, float), np.asarray(b, float)) for a, b in sec["pairs"]]
        for a, b in pairs:
            if len(a) != 2 * cfg["m"] or len(b) != 2 * cfg["m"]:
                raise UsageError("green pairs need 2m coordinates")
    else:
        rng = np.random.default_rng(cfg["seed"])
        pairs = _sample_pairs(green, sec["n_pairs"], rng, cfg["delta0"])
    rows = green_table(green, pairs)
    dim = 2 * cfg["m"]
    head = [f"x{i + 1}" for i in range(dim)] + [f"xi{i + 1}" for i in range(dim)] + ["G", "H", "robin_xi"]
    w.csv(
        "green.csv",
        head,
        (list(r["x"]) + list(r["xi"]) + [r["G"], r["H"], green.robin(np.asarray(r["xi"]))] for r in rows),
    )
    w.json("green_model.json", green.describe())


def cmd_phi(cfg: dict, w: Writer) -> None:
    from .reduced import phi_k_flagged
    from .search import SearchRegion, find_minimum

    green = build_green(cfg)
    V = build_potential(cfg)
    k = cfg["k"]
    sec = cfg["phi"]
    region = SearchRegion(green, k, cfg["delta0"])
    dim = 2 * cfg["m"]
    if k == 1:
        lo, hi = region.bbox()
        n = sec["n_grid"]
        xs = np.linspace(lo[0], hi[0], n)
        ys = np.linspace(lo[1], hi[1], n)
        rows = []
        for x in xs:
            for y in ys:
                p = np.zeros(dim)
                p[0], p[1] = x, y
                val, ok = phi_k_flagged(green, V, p[None]) if region.inside(p) else (math.nan, False)
                rows.append([x, y, val if ok else None, ok])
        w.csv("phi_landscape.csv", ["x1", "x2", "phi", "valid"], rows)
    else:
        rng = np.random.default_rng(cfg["seed"])
        rows = []
        for _ in range(sec["n_samples"]):
            x = region.sample(rng)
            val, ok = phi_k_flagged(green, V, region.points(x))
            rows.append(list(x) + [val if ok else None, ok])
        head = [f"xi{i + 1}_{a + 1}" for i in range(k) for a in range(dim)] + ["phi", "valid"]
        w.csv("phi_samples.csv", head, rows)
    seeds = [_points(cfg)] if "xi" in cfg and len(cfg["xi"]) == k else None
    cp = find_minimum(region, V, seeds=seeds, n_starts=sec["n_starts"], seed=cfg["seed"], gtol=cfg["tolerances"].get("grad"))
    w.json("critical_points.json", {"region": region.to_dict(), "critical_points": [cp.to_dict()]})


def cmd_residual(cfg: dict, w: Writer) -> None:
    from .reduction import residual_sweep

    green = build_green(cfg)
    V = build_potential(cfg)
    xi = _require_points(cfg, "residual")
    rows, slope = residual_sweep(green, V, xi, cfg["eps_sweep"], cfg.get("h_y"), cfg["delta0"])
    w.csv(
        "residual.csv",
        ["eps", "R_star", "R_exact_star", "mass_ratio", "h"],
        ([r.eps, r.R_star, r.R_exact_star, r.mass_ratio, r.h] for r in rows),
    )
    w.json("residual.json", {"rows": [asdict(r) for r in rows], "slope": slope, "xi": xi})


def cmd_energy(cfg: dict, w: Writer) -> None:
    from .reduced import expansion_check

    green = build_green(cfg)
    V = build_potential(cfg)
    xi = _require_points(cfg, "energy")
    quad = {}
    if "energy_quadrature" in cfg["tolerances"]:
        quad["tol"] = cfg["tolerances"]["energy_quadrature"]
    reports, slope = expansion_check(green, V, xi, cfg["eps_sweep"], cfg["delta0"], **quad)
    w.csv(
        "energy.csv",
        ["eps", "J", "phi_k", "residual", "residual_printed_offset", "quadrature_error"],
        ([r.eps, r.J_rho, r.phi_k, r.expansion_residual, r.expansion_residual_printed, r.quadrature_error] for r in reports),
    )
    w.json("energy.json", {"reports": [asdict(r) for r in reports], "slope": slope, "xi": xi})


def cmd_spectra(cfg: dict, w: Writer) -> None:
    from .linearized import kernel_count, spectral_table

    sec = cfg["spectra"]
    rows = spectral_table(sec["m_max"], sec["k_max"])
    w.csv(
        "spectra.csv",
        ["m", "k_index", "eigenvalue", "product", "t_m", "match"],
        ([r.m, r.k_index, r.eigenvalue, r.product, r.t_m, r.match] for r in rows),
    )
    counts = [asdict(kernel_count(kc["half_width"], kc["h"])) for kc in sec["kernel_count"]]
    w.json("spectra.json", {"table": [asdict(r) for r in rows], "kernel_count": counts})


def cmd_solve(cfg: dict, w: Writer) -> None:
    from .reduction import construct_solution

    green = build_green(cfg)
    V = build_potential(cfg)
    sec = cfg["solve"]
    seed_xi = _points(cfg) if "xi" in cfg and len(cfg["xi"]) == cfg["k"] else None
    res = construct_solution(
        green,
        V,
        cfg["k"],
        cfg["eps"],
        seed_xi=seed_xi,
        seed=cfg["seed"],
        h_y=cfg.get("h_y"),
        delta0=cfg["delta0"],
        c_tol=cfg["tolerances"].get("c"),
        n_starts=sec["n_starts"],
        delta=sec["contrast_delta"],
    )
    w.json("solution.json", res.summary())
    if sec["write_fields"]:
        u = res.u_final
        nx, ny = u.shape
        ii, jj = np.nonzero(u.mask)
        xs = u.origin[0] + u.spacing * ii
        ys = u.origin[1] + u.spacing * jj
        w.csv("u_final.csv", ["x1", "x2", "u"], zip(xs, ys, u.values[ii, jj]))


def cmd_linking(cfg: dict, w: Writer) -> None:
    from .search import SearchRegion, check_linking_level, straight_path

    green = build_green(cfg)
    V = build_potential(cfg)
    sec = cfg["linking"]
    region = SearchRegion(green, cfg["k"], cfg["delta0"])
    B = None
    if sec["mode"] == "mountain-pass":
        if "endpoints" not in sec:
            raise UsageError("mountain-pass linking needs linking.endpoints")
        a, b = (np.asarray(e, float) for e in sec["endpoints"])
        if a.shape != (cfg["k"], 2 * cfg["m"]) or b.shape != a.shape:
            raise UsageError("linking endpoints must be k points of 2m coordinates each")
        B = straight_path(a, b, sec["n_images"])
    rep = check_linking_level(
        region,
        V,
        B,
        mode=sec["mode"],
        n_boundary=sec["n_boundary"],
        seed=cfg["seed"],
        tol=cfg["tolerances"].get("linking", 1e-6),
        max_iter=sec["max_iter"],
    )
    d = rep.to_dict()
    path = d.pop("path")
    w.json("linking.json", d)
    if path:
        from .reduced import phi_k

        P = np.asarray(path)
        vals = [phi_k(green, V, region.points(p)) for p in P]
        w.csv("path.csv", ["index"] + [f"x{a + 1}" for a in range(P.shape[1])] + ["phi"], ([i, *p, v] for i, (p, v) in enumerate(zip(P, vals))))


HANDLERS = {
    "constants": cmd_constants,
    "green": cmd_green,
    "phi": cmd_phi,
    "residual": cmd_residual,
    "energy": cmd_energy,
    "spectra": cmd_spectra,
    "solve": cmd_solve,
    "linking": cmd_linking,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="polyliouville",
        description="Concentrating solutions of polyharmonic Liouville problems.",
        epilog="Tolerances are overridden with --tol-NAME VALUE (c, grad, linking, energy-quadrature).",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config (or a manifest from an earlier run)")
    p.add_argument("--preset", help=f"built-in config: {', '.join(PRESETS)}")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-sweep", type=parse_eps_sweep, help="comma separated eps values")
    p.add_argument("--m", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--k", type=int)
    return p


def _write_manifest(w: Writer, command: str, cfg, t0: float, status: str) -> None:
    manifest = {
        "command": command,
        "resolved_config": cfg,
        "files": list(w.files),
        "status": status,
        "wall_time_s": time.perf_counter() - t0,
        "versions": versions(),
    }
    (w.out / "manifest.json").write_text(json.dumps(rounded(manifest), indent=2, sort_keys=True) + "\n")


def run(argv: list[str] | None = None) -> int:
    t0 = time.perf_counter()
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        tol = parse_tol_overrides(extra)
        cfg = resolve_config(args.command, args, tol)
    except (UsageError, *CONFIG_ERRORS) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    w = Writer(Path(args.out))
    try:
        HANDLERS[args.command](cfg, w)
    except (UsageError, *CONFIG_ERRORS) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (LiouvilleError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "achieved", None) is not None:
            diag["achieved"] = exc.achieved
        if getattr(exc, "c", None) is not None:
            diag["c"] = np.asarray(exc.c).tolist()
        w.json("error.json", diag)
        _write_manifest(w, args.command, cfg, t0, "numeric-failure")
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _write_manifest(w, args.command, cfg, t0, "ok")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
