"""Command-line front end.

Subcommands: tasp, bis, winding, phase-diagram, chern, estimate-t,
selftest.  Options resolve in three layers: built-in defaults, then a
key=value config file (--config), then explicit flags.  All output is
deterministic: floats use 17 significant digits, line endings are LF,
JSON keys are sorted and no timestamps are embedded, so identical
configurations give byte-identical files and serial and threaded runs
agree.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .bisfield import dynamical_field, extract_bis, sample_grid, winding
from .errors import LayerQuenchError, UnsupportedStackingError, UsageError
from .hopping import ba_reference_magnitudes, estimate_t_abba, estimate_t_ba
from .models import LayeredConfig
from .quench import tasp_closed_form, time_averaged_expectation, mixed_state, global_observable
from .topology import chern_fhs, phase_diagram, total_chern_abba

# option name -> (type, default); the single source of truth for config
# file keys, flag resolution and manifest echo
OPTIONS = {
    "model": (str, "qwz"),
    "m": (float, 1.0),
    "stacking": (str, "abba"),
    "layers": (int, 2),
    "t": (float, 0.4),
    "axis": (int, 3),
    "observable": (str, "global"),
    "grid": (str, "256"),
    "out": (str, "."),
    "tol_bis": (float, 1e-6),
    "tol_deg": (float, 1e-9),
    "threads": (int, None),  # None -> QT_THREADS env or 1
    "delta": (float, 1e-4),
    "t_min": (float, 0.0),
    "t_max": (float, 2.0),
    "m_min": (float, -1.0),
    "m_max": (float, 3.0),
    "steps": (int, 16),
    "filled": (int, None),
    "true_t": (float, None),
}


def _fmt(x):
    return "%.17g" % float(x)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_cell(v) for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_config_file(path):
    """Parse a key=value config file; blank lines and # comments ignored."""
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected key=value, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{ln}: unknown config key {key!r}")
        typ = OPTIONS[key][0]
        try:
            out[key] = typ(val)
        except ValueError:
            raise UsageError(f"{path}:{ln}: cannot parse {val!r} as {typ.__name__}")
    return out


def resolve_options(args):
    """Merge defaults, config file and flags (flags win); returns a dict."""
    fromfile = read_config_file(args.config) if getattr(args, "config", None) else {}
    opts = {}
    for key, (_, default) in OPTIONS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = flag
        elif key in fromfile:
            opts[key] = fromfile[key]
        else:
            opts[key] = default
    if opts["threads"] is None:
        env = os.environ.get("QT_THREADS", "").strip()
        if env:
            try:
                opts["threads"] = int(env)
            except ValueError:
                raise UsageError(f"QT_THREADS={env!r} is not an integer")
        else:
            opts["threads"] = 1
    if opts["threads"] < 1:
        raise UsageError("threads must be >= 1")
    if opts["axis"] not in (1, 2, 3):
        raise UsageError("axis must be 1, 2 or 3")
    return opts


def parse_grid(spec):
    """'256' -> (256, 256); '256x128' -> (256, 128)."""
    s = str(spec).lower()
    try:
        if "x" in s:
            nx, ny = s.split("x", 1)
            return int(nx), int(ny)
        n = int(s)
        return n, n
    except ValueError:
        raise UsageError(f"cannot parse grid spec {spec!r}")


def parse_observable(spec):
    """'global' | 'subspace:R' | 'bilayer:W' -> observable tuple."""
    parts = str(spec).split(":")
    if parts[0] == "global":
        if len(parts) != 1:
            raise UsageError("observable 'global' takes no index")
        return ("global",)
    if parts[0] in ("subspace", "bilayer"):
        if len(parts) != 2:
            raise UsageError(f"observable {parts[0]!r} needs an index, e.g. {parts[0]}:1")
        try:
            return (parts[0], int(parts[1]))
        except ValueError:
            raise UsageError(f"bad observable index {parts[1]!r}")
    raise UsageError(f"unknown observable kind {parts[0]!r}")


def layered_config(opts):
    return LayeredConfig(stacking=opts["stacking"], layers=opts["layers"],
                         t=opts["t"], model=opts["model"], m=opts["m"])


def _manifest(command, opts, extra):
    # threads is an execution detail: leaving it out keeps serial and
    # parallel runs byte-identical
    echo = {k: opts[k] for k in ("model", "m", "stacking", "layers", "t", "axis",
                                 "observable", "grid", "tol_bis", "tol_deg")}
    obj = {"command": command, "config": echo, "version": __version__}
    obj.update(extra)
    return obj


def _outdir(opts):
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    return out


def cmd_tasp(opts):
    cfg = layered_config(opts)
    nx, ny = parse_grid(opts["grid"])
    obs = parse_observable(opts["observable"])
    grid = sample_grid(cfg, opts["axis"], obs, (nx, ny), threads=opts["threads"])
    u = np.arange(nx)[:, None] / nx
    v = np.arange(ny)[None, :] / ny
    KX, KY = grid.cell.k_at(u, v)
    out = _outdir(opts)
    files = []
    for comp in (1, 2, 3):
        name = f"tasp_s{comp}.csv"
        rows = ((KX[i, l], KY[i, l], grid.values[i, l, comp - 1])
                for i in range(nx) for l in range(ny))
        _write_csv(os.path.join(out, name), ["kx", "ky", "value"], rows)
        files.append(name)
    _write_json(os.path.join(out, "tasp_manifest.json"),
                _manifest("tasp", opts, {"files": files, "rows": nx * ny}))
    print(f"wrote {', '.join(files)} ({nx * ny} rows each) to {out}")
    return 0


def _bis_run(cfg, opts):
    """Contours with dynamical fields and windings for the configured observable."""
    j = opts["axis"]
    nx, ny = parse_grid(opts["grid"])
    obs = parse_observable(opts["observable"])
    contours = []
    total = 0
    if obs[0] == "global" and cfg.stacking == "abba":
        layer_factor = 1
        grids = [sample_grid(cfg, j, ("subspace", r), (nx, ny), threads=opts["threads"])
                 for r in range(1, cfg.layers + 1)]
    elif obs[0] == "global":
        layer_factor = cfg.layers
        grids = [sample_grid(cfg, j, obs, (nx, ny), threads=opts["threads"])]
    else:
        layer_factor = 1
        grids = [sample_grid(cfg, j, obs, (nx, ny), threads=opts["threads"])]
    for grid in grids:
        for c in extract_bis(grid, opts["tol_bis"]):
            dynamical_field(c, grid, opts["delta"])
            total += winding(c, layer_factor)
            contours.append(c)
    return contours, int(total), layer_factor


def _bis_summary(opts, contours, total, layer_factor, files=None):
    entries = []
    for n, c in enumerate(contours):
        e = {"source": c.source, "points": int(len(c.points)),
             "winding": int(c.w), "wraps": [int(w) for w in c.wraps],
             "residual": float(c.residual)}
        if files is not None:
            e["file"] = files[n]
        entries.append(e)
    extra = {"contours": entries, "total_w": total, "layer_factor": layer_factor}
    if not contours:
        extra["note"] = "no BIS"
    return extra


def cmd_bis(opts):
    cfg = layered_config(opts)
    contours, total, lf = _bis_run(cfg, opts)
    out = _outdir(opts)
    files = []
    for n, c in enumerate(contours):
        name = f"bis_contour_{n:02d}.csv"
        rows = ((c.points[p, 0], c.points[p, 1], c.gfield[p, 0], c.gfield[p, 1], c.source)
                for p in range(len(c.points)))
        _write_csv(os.path.join(out, name), ["kx", "ky", "g1", "g2", "source"], rows)
        files.append(name)
    _write_json(os.path.join(out, "bis_summary.json"),
                _manifest("bis", opts, _bis_summary(opts, contours, total, lf, files)))
    if contours:
        print(f"{len(contours)} contour(s), total_w = {total}")
    else:
        print("no BIS; total_w = 0")
    return 0


def cmd_winding(opts):
    cfg = layered_config(opts)
    contours, total, lf = _bis_run(cfg, opts)
    out = _outdir(opts)
    _write_json(os.path.join(out, "winding.json"),
                _manifest("winding", opts, _bis_summary(opts, contours, total, lf)))
    print(f"total_w = {total} (layer_factor {lf})")
    return 0


def cmd_phase_diagram(opts):
    nx, _ = parse_grid(opts["grid"])
    pd = phase_diagram(opts["stacking"], opts["layers"],
                       (opts["t_min"], opts["t_max"]), (opts["m_min"], opts["m_max"]),
                       opts["steps"], model=opts["model"], grid_n=min(nx, 64),
                       threads=opts["threads"])
    out = _outdir(opts)
    rows = []
    for i in range(len(pd.ts)):
        for l in range(len(pd.ms)):
            c = "boundary" if pd.boundary[i, l] else str(int(pd.chern[i, l]))
            rows.append((pd.ts[i], pd.ms[l], c, pd.gap_min[i, l]))
    _write_csv(os.path.join(out, "phase_diagram.csv"), ["t", "m", "chern", "gap_min"], rows)
    with open(os.path.join(out, "phase_matrix.dat"), "w", encoding="utf-8", newline="") as f:
        for i in range(len(pd.ts)):
            f.write(" ".join("nan" if pd.boundary[i, l] else str(int(pd.chern[i, l]))
                             for l in range(len(pd.ms))) + "\n")
    extra = {"t_range": [opts["t_min"], opts["t_max"]],
             "m_range": [opts["m_min"], opts["m_max"]], "steps": opts["steps"],
             "boundary_cells": int(pd.boundary.sum())}
    _write_json(os.path.join(out, "phase_manifest.json"), _manifest("phase-diagram", opts, extra))
    print(f"phase diagram {len(pd.ts)}x{len(pd.ms)} written to {out}")
    return 0


def cmd_chern(opts):
    cfg = layered_config(opts)
    nx, _ = parse_grid(opts["grid"])
    filled = opts["filled"] if opts["filled"] is not None else cfg.layers
    c = chern_fhs(cfg, filled, grid_n=nx)
    extra = {"chern_fhs": c, "filled": filled}
    if cfg.stacking == "abba" and filled == cfg.layers:
        extra["mode_degree_sum"] = total_chern_abba(cfg, grid_n=nx)
    out = _outdir(opts)
    _write_json(os.path.join(out, "chern.json"), _manifest("chern", opts, extra))
    if "mode_degree_sum" in extra:
        print(f"chern = {c} (mode degree sum {extra['mode_degree_sum']})")
    else:
        print(f"chern = {c}")
    return 0


def cmd_estimate_t(opts, samples):
    out = _outdir(opts)
    if samples:
        parsed = {}
        for item in samples:
            if "=" not in item:
                raise UsageError(f"--sample expects name=value, got {item!r}")
            key, val = item.split("=", 1)
            try:
                parsed[key.strip()] = float(val)
            except ValueError:
                raise UsageError(f"cannot parse sample value {val!r}")
        est = estimate_t_ba(parsed, m=opts["m"], layers=opts["layers"], j=opts["axis"])
        extra = {"samples": {k: parsed[k] for k in sorted(parsed)}}
    elif opts["true_t"] is not None:
        hidden = float(opts["true_t"])
        if opts["stacking"] == "abba":
            cfg = LayeredConfig(stacking="abba", layers=opts["layers"], t=hidden,
                                model=opts["model"], m=opts["m"])
            nx, _ = parse_grid(opts["grid"])
            est = estimate_t_abba(cfg, nx, j=opts["axis"])
        else:
            mags = ba_reference_magnitudes(hidden, m=opts["m"], layers=opts["layers"],
                                           j=opts["axis"])
            est = estimate_t_ba(mags, m=opts["m"], layers=opts["layers"], j=opts["axis"])
        extra = {"true_t": hidden, "error": abs(est.t_hat - hidden)}
    else:
        raise UsageError("estimate-t needs either --sample entries or --true-t")
    extra.update({"t_hat": est.t_hat, "method": est.method, "residual": est.residual})
    _write_json(os.path.join(out, "estimate.json"), _manifest("estimate-t", opts, extra))
    print(f"t_hat = {_fmt(est.t_hat)} ({est.method}, residual {_fmt(est.residual)})")
    return 0


def cmd_selftest(opts):
    from .spectra import abba_transform, analytic_levels, block_diagonalize_abba, numeric_levels
    from .models import build_layered, PAULI
    failures = []

    def check(name, ok):
        print(f"selftest {name}: {'PASS' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(1234)
    cfg3 = LayeredConfig(stacking="abba", layers=3, t=0.7)
    kx, ky = rng.uniform(-np.pi, np.pi, 2)
    fields, S = block_diagonalize_abba(kx, ky, cfg3)
    Hb = S @ build_layered(kx, ky, cfg3) @ S.T
    blocks = np.zeros_like(Hb)
    for f in fields:
        blk = sum(f.h[i] * PAULI[i] for i in range(3))
        blocks[2 * (f.r - 1):2 * f.r, 2 * (f.r - 1):2 * f.r] = blk
    check("block-diagonalization", np.max(np.abs(Hb - blocks)) < 1e-12)

    ok = True
    for stacking in ("abba", "ba"):
        cfg = LayeredConfig(stacking=stacking, layers=2, t=0.4)
        for _ in range(5):
            kx, ky = rng.uniform(-np.pi, np.pi, 2)
            closed = tasp_closed_form(kx, ky, cfg, 3)
            H = build_layered(kx, ky, cfg)
            rho = mixed_state(2, 3)
            proj = [time_averaged_expectation(H, rho, global_observable(2, i))
                    for i in (1, 2, 3)]
            ok = ok and np.max(np.abs(closed - proj)) < 1e-10
        ok = ok and np.max(np.abs(np.sort(analytic_levels(kx, ky, cfg))
                                  - numeric_levels(kx, ky, cfg))) < 1e-10
    check("closed-form-vs-projector", ok)

    mono = LayeredConfig(stacking="abba", layers=1, t=0.0, m=1.0)
    check("monolayer-chern", chern_fhs(mono, 1, grid_n=40) == -1)

    res = {}
    cfg = LayeredConfig(stacking="abba", layers=2, t=0.4)
    total = 0
    for r in (1, 2):
        grid = sample_grid(cfg, 3, ("subspace", r), 128)
        for c in extract_bis(grid):
            dynamical_field(c, grid)
            total += winding(c, 1)
    check("bilayer-winding", total == -2)

    est = estimate_t_ba(ba_reference_magnitudes(0.4))
    check("hopping-round-trip", abs(est.t_hat - 0.4) < 1e-12)

    if failures:
        print(f"selftest: {len(failures)} failure(s): {', '.join(failures)}")
        return 1
    print("selftest: all checks passed")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value config file")
    common.add_argument("--model", choices=("qwz", "haldane"))
    common.add_argument("--m", type=float)
    common.add_argument("--stacking", choices=("abba", "ba"))
    common.add_argument("--layers", type=int)
    common.add_argument("--t", type=float)
    common.add_argument("--axis", type=int, help="quench axis j (1, 2 or 3)")
    common.add_argument("--observable", help="global | subspace:R | bilayer:W")
    common.add_argument("--grid", help="resolution, N or NXxNY")
    common.add_argument("--out", help="output directory")
    common.add_argument("--tol-bis", dest="tol_bis", type=float)
    common.add_argument("--tol-deg", dest="tol_deg", type=float)
    common.add_argument("--threads", type=int, help="worker threads (QT_THREADS fallback)")
    common.add_argument("--delta", type=float, help="normal step for the dynamical field")

    p = argparse.ArgumentParser(prog="layerquench",
                                description="Quench dynamics of layered two-band stacks")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("tasp", parents=[common],
                   help="sample the time-averaged spin polarization on a grid")
    sub.add_parser("bis", parents=[common],
                   help="extract band-inversion contours with fields and windings")
    sub.add_parser("winding", parents=[common], help="winding report only")
    pd = sub.add_parser("phase-diagram", parents=[common], help="Chern scan over (t, m)")
    pd.add_argument("--t-min", dest="t_min", type=float)
    pd.add_argument("--t-max", dest="t_max", type=float)
    pd.add_argument("--m-min", dest="m_min", type=float)
    pd.add_argument("--m-max", dest="m_max", type=float)
    pd.add_argument("--steps", type=int)
    ch = sub.add_parser("chern", parents=[common], help="lattice Chern number")
    ch.add_argument("--filled", type=int, help="number of filled bands (default N)")
    et = sub.add_parser("estimate-t", parents=[common], help="interlayer hopping estimate")
    et.add_argument("--true-t", dest="true_t", type=float,
                    help="self-generate synthetic data from this hidden t")
    et.add_argument("--sample", action="append", metavar="NAME=VALUE",
                    help="measured magnitude, e.g. s1=0.41 (repeatable)")
    sub.add_parser("selftest", parents=[common], help="quick internal consistency battery")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
        if args.command == "tasp":
            return cmd_tasp(opts)
        if args.command == "bis":
            return cmd_bis(opts)
        if args.command == "winding":
            return cmd_winding(opts)
        if args.command == "phase-diagram":
            return cmd_phase_diagram(opts)
        if args.command == "chern":
            return cmd_chern(opts)
        if args.command == "estimate-t":
            return cmd_estimate_t(opts, getattr(args, "sample", None))
        if args.command == "selftest":
            return cmd_selftest(opts)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, UnsupportedStackingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LayerQuenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
