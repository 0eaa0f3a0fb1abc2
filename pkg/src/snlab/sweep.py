"""Configuration, deterministic parallel sweeps, and bit-stable emission.

A sweep is a pure function of (config, seed): tasks are keyed by grid
index, workers only change scheduling, and the merge is index-ordered, so
reruns are byte-identical at any worker count.  Failures at single grid
points become records with a failure code instead of aborting the sweep.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError

__version__ = "0.1.0"

KINDS = ("bifurcation", "chi", "gammas", "mather", "misiurewicz", "br-scan",
         "measure", "windows", "scaling")

# key -> (type, default); None default means required
_COMMON = {
    "experiment": (str, None),
    "family": (str, "quadratic"),
    "seed": (int, 1),
    "workers": (int, 1),
    "format": (str, "csv"),
    "output": (str, "-"),
}

_KIND_KEYS: Dict[str, Dict[str, tuple]] = {
    "bifurcation": {"mu_min": (float, 3.80), "mu_max": (float, 3.86),
                    "columns": (int, 2000), "keep": (int, 400),
                    "burn": (int, 1000)},
    "chi": {"gamma_min": (float, 1e-6), "gamma_max": (float, 1e-3),
            "points": (int, 12), "n": (int, 10**7), "seeds": (int, 8),
            "window_n": (int, 10**6)},
    "gammas": {"lmin": (int, 20), "lmax": (int, 200)},
    "mather": {"grid": (int, 4096), "jmax": (int, 40),
               "orbit_cap": (int, 100_000)},
    "misiurewicz": {"period": (int, 1), "lmin": (int, 120), "lmax": (int, 160)},
    "br-scan": {"l": (int, 120), "eps": (float, 0.05), "grid": (int, 512),
                "alpha": (float, 0.05), "delta": (float, math.exp(-10)),
                "iota": (float, 0.3), "horizon": (int, 10**5)},
    "measure": {"gamma": (float, 1e-5), "mode": (str, "base"), "n": (int, 10**7),
                "bins": (int, 4096), "l": (int, 0), "theta": (float, 0.5)},
    "windows": {"gamma_min": (float, 1e-6), "gamma_max": (float, 1e-3),
                "points": (int, 32), "n": (int, 10**6)},
    "scaling": {"gamma_min": (float, 1e-6), "gamma_max": (float, 1e-3),
                "points": (int, 12), "n": (int, 10**7), "window_n": (int, 10**6)},
}

_HEADERS: Dict[str, Tuple[str, ...]] = {
    "bifurcation": ("index", "mu", "k", "x", "error"),
    "chi": ("index", "gamma", "chi", "stderr", "masked", "error"),
    "gammas": ("index", "l", "gamma_l", "l2gamma_l", "error"),
    "mather": ("index", "tau", "mbar", "r", "n", "ok", "v_at_jmax", "error"),
    "misiurewicz": ("index", "l", "gamma_star", "theta_star", "residual", "error"),
    "br-scan": ("index", "theta", "gamma", "br_pass", "first_fail", "ce_slope", "error"),
    "measure": ("index", "bin_lo", "bin_hi", "mass", "error"),
    "windows": ("index", "gamma", "slope", "masked", "period", "error"),
    "scaling": ("index", "gamma", "chi", "masked", "mean_laminar", "error"),
}


@dataclass
class SweepConfig:
    kind: str
    params: Dict[str, object]
    family: str = "quadratic"
    seed: int = 1
    workers: int = 1
    format: str = "csv"
    output: str = "-"

    def canonical_text(self) -> str:
        lines = [f"experiment = {self.kind}",
                 f"family = {self.family}",
                 f"seed = {self.seed}",
                 f"workers = {self.workers}",
                 f"format = {self.format}",
                 f"output = {self.output}"]
        for k in sorted(self.params):
            v = self.params[k]
            lines.append(f"{k} = {_value_text(v)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        # worker count and output path affect scheduling/destination only
        core = [f"experiment = {self.kind}", f"family = {self.family}",
                f"seed = {self.seed}", f"format = {self.format}"]
        for k in sorted(self.params):
            core.append(f"{k} = {_value_text(self.params[k])}")
        return hashlib.sha256("\n".join(core).encode()).hexdigest()[:16]


@dataclass
class SweepResult:
    config: SweepConfig
    records: List[dict]
    wall_time: float
    config_hash: str
    version: str = __version__


def _value_text(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def parse_config(text: str) -> SweepConfig:
    """Parse the flat key = value format; collect every violation."""
    problems: List[str] = []
    raw: Dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"line {ln}: expected 'key = value', got {stripped!r}")
            continue
        key, val = stripped.split("=", 1)
        key = key.strip()
        val = val.strip()
        if not key:
            problems.append(f"line {ln}: empty key")
            continue
        if key in raw:
            problems.append(f"line {ln}: duplicate key {key!r}")
            continue
        raw[key] = val
    if problems:
        raise ConfigError(problems)
    return config_from_mapping(raw)


def config_from_mapping(raw: Dict[str, str]) -> SweepConfig:
    problems: List[str] = []
    kind = raw.get("experiment")
    if kind is None:
        problems.append("missing required key 'experiment'")
        raise ConfigError(problems)
    if kind not in KINDS:
        problems.append(f"experiment={kind!r} not one of {KINDS}")
        raise ConfigError(problems)
    known = dict(_COMMON)
    known.update(_KIND_KEYS[kind])
    vals: Dict[str, object] = {}
    for key, sval in raw.items():
        if key not in known:
            problems.append(f"unknown key {key!r}")
            continue
        typ, _ = known[key]
        if typ is str:
            vals[key] = sval
            continue
        try:
            vals[key] = typ(float(sval)) if typ is int else typ(sval)
        except ValueError:
            problems.append(f"key {key!r}: cannot parse {sval!r} as {typ.__name__}")
    for key, (typ, default) in known.items():
        if key in vals or key == "experiment":
            continue
        if default is None:
            problems.append(f"missing required key {key!r}")
        else:
            vals[key] = default
    fam = vals.get("family", "quadratic")
    if fam != "quadratic":
        problems.append(f"family={fam!r}: only the built-in 'quadratic' family is available")
    fmt = vals.get("format", "csv")
    if fmt not in ("csv", "json"):
        problems.append(f"format={fmt!r} must be csv or json")
    if int(vals.get("workers", 1)) < 1:
        problems.append("workers must be >= 1")
    for key in ("columns", "keep", "points", "n", "grid", "seeds", "horizon", "bins"):
        if key in vals and int(vals[key]) <= 0:
            problems.append(f"{key} must be positive")
    if problems:
        raise ConfigError(problems)
    params = {k: v for k, v in vals.items() if k in _KIND_KEYS[kind]}
    return SweepConfig(kind=kind, params=params, family=str(vals["family"]),
                       seed=int(vals["seed"]), workers=int(vals["workers"]),
                       format=str(vals["format"]), output=str(vals["output"]))


# ---------------------------------------------------------------------------
# shared per-process context (populated before forking workers)

_SHARED: dict = {}


def _get_context():
    """Family, fold data, geometry, and a ladder, built once per process
    tree; forked workers inherit the parent's copy."""
    if "ctx" in _SHARED:
        return _SHARED["ctx"]
    from .family import quadratic_family
    from .saddle import locate_saddle_node
    from . import phase
    fam = quadratic_family()
    sn = locate_saddle_node(fam, 3, (3.83, 0.16))
    geom = phase.get_geometry(fam, sn)
    _SHARED["ctx"] = {"family": fam, "sn": sn, "geom": geom, "ladders": {}}
    return _SHARED["ctx"]


def _get_ladder(l_lo: int, l_hi: int):
    ctx = _get_context()
    key = (l_lo, l_hi)
    for (a, b), lad in ctx["ladders"].items():
        if a <= l_lo and b >= l_hi:
            return lad
    from . import phase
    lad = phase.gamma_ladder(ctx["family"], ctx["sn"], ctx["geom"].d,
                             ctx["geom"].e, (l_lo, l_hi), geometry=ctx["geom"])
    ctx["ladders"][key] = lad
    return lad


# ---------------------------------------------------------------------------
# per-kind task layers


def _grid_tasks(config: SweepConfig) -> List[dict]:
    p = config.params
    kind = config.kind
    if kind == "bifurcation":
        return [{"col": j} for j in range(int(p["columns"]))]
    if kind in ("chi", "windows", "scaling"):
        gmin, gmax, pts = float(p["gamma_min"]), float(p["gamma_max"]), int(p["points"])
        if not (0 < gmin < gmax):
            raise ConfigError([f"need 0 < gamma_min < gamma_max, got {gmin}, {gmax}"])
        gs = np.geomspace(gmin, gmax, pts)
        return [{"gamma": float(g)} for g in gs]
    if kind == "gammas":
        return [{"l": l} for l in range(int(p["lmin"]), int(p["lmax"]) + 1)]
    if kind == "misiurewicz":
        return [{"l": l} for l in range(int(p["lmin"]), int(p["lmax"]) + 1)]
    if kind == "br-scan":
        return [{"i": i} for i in range(int(p["grid"]))]
    if kind in ("mather", "measure"):
        return [{"i": 0}]           # single composite task
    raise ConfigError([f"unhandled kind {kind}"])


def _run_task(kind: str, params: dict, seed: int, task: dict) -> List[dict]:
    from . import intermit
    ctx = _get_context()
    fam, sn, geom = ctx["family"], ctx["sn"], ctx["geom"]
    if kind == "bifurcation":
        j = task["col"]
        cols = int(params["columns"])
        mu = float(params["mu_min"]) + (float(params["mu_max"]) - float(params["mu_min"])) \
            * (j / max(1, cols - 1))
        keep = int(params["keep"])
        burn = int(params["burn"])
        x0 = float(intermit.seed_sequence(seed + j, 1)[0])
        from . import _kernels
        x = _kernels.final_point(mu, x0, burn)
        out = []
        for k in range(keep):
            x = _kernels.final_point(mu, x, 1)
            out.append({"mu": mu, "k": k, "x": x})
        return out
    if kind == "chi":
        g = task["gamma"]
        chi, err, _ = intermit.chi_estimate(fam, g, geom.ebar, int(params["n"]),
                                            seeds=int(params["seeds"]), seed=seed)
        inv = intermit.window_detect(fam, [g], n=int(params["window_n"]))
        return [{"gamma": g, "chi": chi, "stderr": err,
                 "masked": int(bool(inv.masked[0]))}]
    if kind == "windows":
        g = task["gamma"]
        inv = intermit.window_detect(fam, [g], n=int(params["n"]))
        return [{"gamma": g, "slope": float(inv.slopes[0]),
                 "masked": int(bool(inv.masked[0])),
                 "period": int(inv.periods[0])}]
    if kind == "scaling":
        g = task["gamma"]
        inv = intermit.window_detect(fam, [g], n=int(params["window_n"]))
        if inv.masked[0]:
            return [{"gamma": g, "chi": float("nan"), "masked": 1,
                     "mean_laminar": float("nan")}]
        x0 = float(intermit.seed_sequence(seed, 1)[0])
        prof = intermit.laminar_segments(fam, g, x0, int(params["n"]), geom.ebar)
        return [{"gamma": g, "chi": prof.chi, "masked": 0,
                 "mean_laminar": prof.mean_laminar}]
    if kind == "gammas":
        l = task["l"]
        lad = _get_ladder(int(params["lmin"]), int(params["lmax"]) + 1)
        g = lad.gamma(l)
        return [{"l": l, "gamma_l": g, "l2gamma_l": l * l * g}]
    if kind == "misiurewicz":
        from . import mather as mather_mod
        from .saddle import continue_periodic_point
        l = task["l"]
        lad = _get_ladder(int(params["lmin"]), int(params["lmax"]) + 1)
        target = _SHARED.setdefault("mis_target", None)
        if target is None:
            per = int(params["period"])
            x_fix = 1.0 - 1.0 / sn.gamma_sn_native if per == 1 else None
            gmax = lad.gamma(int(params["lmin"]))
            grid = list(np.linspace(0.0, gmax, 8))
            target = continue_periodic_point(fam, (per, x_fix, 0.0), grid)
            _SHARED["mis_target"] = target
        m = _SHARED.get("mis_offset")
        if m is None:
            m = mather_mod.discover_offset(fam, lad, target,
                                           (int(params["lmin"]) + int(params["lmax"])) // 2)
            _SHARED["mis_offset"] = m
        seq = mather_mod.misiurewicz_sequence(fam, lad, target, (l, l), m=m)
        if l in seq.entries:
            g, th, res = seq.entries[l]
            return [{"l": l, "gamma_star": g, "theta_star": th, "residual": res}]
        return [{"l": l, "gamma_star": float("nan"), "theta_star": float("nan"),
                 "residual": float("nan"), "error": "no-root-in-rung"}]
    if kind == "br-scan":
        from . import recurrence
        from .induced import build_induced
        from .phase import theta_map
        i = task["i"]
        l = int(params["l"])
        lad = _get_ladder(l, l + 2)
        pr = recurrence.delta_partition(fam.critical_point,
                                        alpha=float(params["alpha"]),
                                        delta=float(params["delta"]),
                                        iota=float(params["iota"]))
        center = _SHARED.get(("br_center", l))
        if center is None:
            from . import mather as mather_mod
            from .saddle import continue_periodic_point
            x_fix = 1.0 - 1.0 / sn.gamma_sn_native
            gmax = lad.gamma(l)
            target = continue_periodic_point(fam, (1, x_fix, 0.0),
                                             list(np.linspace(0.0, gmax, 8)))
            seq = mather_mod.misiurewicz_sequence(fam, lad, target, (l, l))
            center = seq.entries[l][1] if l in seq.entries else 0.5
            _SHARED[("br_center", l)] = center
        eps = float(params["eps"])
        grid = int(params["grid"])
        th = center - eps + 2 * eps * (i / max(1, grid - 1))
        th = float(min(1.0, max(0.0, th)))
        g = theta_map(lad, l, th)
        ictx = build_induced(fam, lad, l, th, gamma=g)
        rep = recurrence.br_check(ictx, pr, int(params["horizon"]),
                                  classify=False, early_stop=True)
        return [{"theta": th, "gamma": g, "br_pass": int(rep.br_pass),
                 "first_fail": rep.first_fail, "ce_slope": rep.ce_slope}]
    if kind == "mather":
        from . import mather as mather_mod
        from .phase import build_chart
        cs = build_chart(fam, sn, 0.0, "stable", geometry=geom)
        cu = build_chart(fam, sn, 0.0, "unstable", geometry=geom)
        table = mather_mod.mather_grid(fam, sn, cs, cu,
                                       grid_size=int(params["grid"]),
                                       j_max=int(params["jmax"]),
                                       orbit_cap=int(params["orbit_cap"]))
        vmask = table.v_mask(table.j_max)
        out = []
        for k in range(table.grid.size):
            out.append({"tau": float(table.grid[k]), "mbar": float(table.Mbar[k]),
                        "r": float(table.R[k]), "n": int(table.N[k]),
                        "ok": int(bool(table.ok[k])), "v_at_jmax": int(bool(vmask[k]))})
        return out
    if kind == "measure":
        mode = str(params["mode"])
        g = float(params["gamma"])
        ictx = None
        if mode in ("induced", "pushforward"):
            l = int(params["l"])
            if l <= 0:
                from .phase import theta_of_gamma
                lad = _get_ladder(20, 210)
                l, th = theta_of_gamma(lad, g)
            else:
                th = float(params["theta"])
                lad = _get_ladder(l, l + 2)
            from .induced import build_induced
            ictx = build_induced(fam, lad, l, th)
            g = ictx.gamma
        meas = intermit.measure_estimate(fam, g, mode, int(params["n"]),
                                         bins=int(params["bins"]), ctx=ictx)
        out = []
        for b in range(meas.masses.size):
            out.append({"bin_lo": float(meas.bin_edges[b]),
                        "bin_hi": float(meas.bin_edges[b + 1]),
                        "mass": float(meas.masses[b])})
        return out
    raise ConfigError([f"unhandled kind {kind}"])


def _task_wrapper(args):
    kind, params, seed, idx, task = args
    try:
        rows = _run_task(kind, params, seed, task)
        return idx, rows, None
    except Exception as exc:
        return idx, None, f"{type(exc).__name__}: {exc}"


def run_sweep(config: SweepConfig) -> SweepResult:
    """Run every grid task and merge records in index order."""
    t0 = time.time()
    tasks = _grid_tasks(config)
    payloads = [(config.kind, config.params, config.seed, i, t)
                for i, t in enumerate(tasks)]
    _get_context()         # build shared state before forking
    if config.kind in ("br-scan", "gammas", "misiurewicz"):
        p = config.params
        if config.kind == "br-scan":
            _get_ladder(int(p["l"]), int(p["l"]) + 2)
        else:
            _get_ladder(int(p["lmin"]), int(p["lmax"]) + 1)
    if config.workers <= 1 or len(payloads) <= 1:
        raw = [_task_wrapper(pl) for pl in payloads]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            raw = list(pool.map(_task_wrapper, payloads, chunksize=1))
    raw.sort(key=lambda t: t[0])
    records: List[dict] = []
    for idx, rows, err in raw:
        if err is not None:
            records.append({"index": idx, "error": err})
            continue
        for row in rows:
            rec = {"index": idx}
            rec.update(row)
            records.append(rec)
    return SweepResult(config=config, records=records,
                       wall_time=time.time() - t0, config_hash=config.hash())


# ---------------------------------------------------------------------------
# emission


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit(result: SweepResult, fmt: Optional[str] = None) -> bytes:
    """CSV or JSON rendering with a shared 17-significant-digit float
    formatter, so both formats carry identical numeric strings."""
    fmt = fmt or result.config.format
    header = _HEADERS[result.config.kind]
    if fmt == "csv":
        lines = [",".join(header)]
        for rec in result.records:
            lines.append(",".join(_fmt(rec.get(col)) for col in header))
        return ("\n".join(lines) + "\n").encode()
    if fmt == "json":
        rows = []
        for rec in result.records:
            fields = []
            for col in header:
                v = rec.get(col)
                if v is None:
                    continue
                if isinstance(v, str):
                    fields.append(f'"{col}": "{v}"')
                else:
                    fields.append(f'"{col}": {_fmt(v)}')
            rows.append("{" + ", ".join(fields) + "}")
        body = ",\n    ".join(rows)
        return (
            '{\n  "provenance": {"config_hash": "%s", "version": "%s"},\n'
            '  "records": [\n    %s\n  ]\n}\n'
            % (result.config_hash, result.version, body)).encode()
    raise ConfigError([f"unknown format {fmt!r}"])
