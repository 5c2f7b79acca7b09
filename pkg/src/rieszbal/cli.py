"""Command line driver: declarative JSON scenes in, JSON/CSV reports out.

Usage::

    rieszbal capacity --config scene.json --out results/ --level 3

Exit codes: 0 success, 1 config or validation error, 2 numerical failure,
3 inconclusive verdict while ``--require-conclusive`` is set.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import balayage as bal
from . import kelvin as kel
from . import wiener as wie
from .equilibrium import equilibrium, richardson
from .geometry import (
    PointCloud,
    RotationBodySpec,
    invert_cloud,
    merge_clouds,
    sample_ball,
    sample_rotation_body,
    sample_sphere,
    spherical_cap,
)
from .kernel import DiscreteMeasure, KernelModel, RieszParams
from .nnqp import ConvergenceError

__all__ = ["main", "ConfigError", "SceneConfig", "load_config", "run"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 1, 2, 3
COMMANDS = ("capacity", "balayage", "wiener", "kelvin-check", "mass-deficit")


class ConfigError(ValueError):
    """Malformed or inconsistent scene configuration."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

_TOP = {"version", "kernel", "tol", "levels", "sets", "measures", "task", "output"}
_KERNEL = {"n", "alpha", "beta"}
_OUTPUT = {"report", "csv"}
_SET_KEYS = {
    "sphere": {"center", "radius"},
    "ball": {"center", "radius", "lattice_factor", "gap"},
    "cap": {"of", "center", "axis", "angle"},
    "rotation_body": {"profile", "s", "x1_max", "density", "rho_max"},
    "inverted": {"of", "y"},
    "union": {"of"},
    "points": {"points", "spacing"},
}
_MEASURE_KEYS = {
    "diracs": {"points", "weights", "spacing"},
    "equilibrium": {"set"},
}
_TASK_KEYS = {
    "capacity": {"set"},
    "balayage": {"measure", "target", "probes", "lambda", "subset"},
    "wiener": {"set", "center", "q", "k_range", "x1_max", "points"},
    "kelvin-check": {"center", "atoms", "probes", "seed", "duality"},
    "mass-deficit": {"measure", "target", "x1_max"},
}
_WIENER_POINT = {"set", "y", "q", "k_range"}
_DUALITY = {"target", "y"}


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def _check_keys(obj, allowed, where, text):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"line {_line_of(text, k)}: unknown key {k!r} in {where}")


@dataclass
class SceneConfig:
    """Validated scene: kernel, named sets and measures, one task, outputs."""

    command: str
    kernel: dict
    tol: float
    levels: list
    sets: dict
    measures: dict
    task: dict
    output: dict
    raw: dict = field(repr=False, default_factory=dict)

    def model(self) -> KernelModel:
        k = self.kernel
        return KernelModel(RieszParams(int(k.get("n", 3)), float(k.get("alpha", 2.0))),
                           "spacing_scaled", float(k.get("beta", 0.5)))

    def resolved(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "kernel": {"n": int(self.kernel.get("n", 3)), "alpha": float(self.kernel.get("alpha", 2.0)),
                       "beta": float(self.kernel.get("beta", 0.5))},
            "tol": self.tol,
            "levels": list(self.levels),
            "sets": self.sets,
            "measures": self.measures,
            "task": self.task,
            "output": self.output,
        }


def load_config(text: str, command: str) -> SceneConfig:
    """Parse and validate a JSON scene for ``command``; errors carry line numbers."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: {exc.msg}") from None
    _check_keys(raw, _TOP, "top level", text)
    if raw.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"line {_line_of(text, 'version')}: version must be {SCHEMA_VERSION}")
    kernel = raw.get("kernel", {})
    _check_keys(kernel, _KERNEL, "kernel", text)
    sets = raw.get("sets", {})
    if not isinstance(sets, dict):
        raise ConfigError("sets: expected an object")
    for name, spec in sets.items():
        _check_keys(spec, {"type"} | _SET_KEYS.get(spec.get("type") if isinstance(spec, dict) else None, set()),
                    f"set {name!r}", text)
        if spec.get("type") not in _SET_KEYS:
            raise ConfigError(f"line {_line_of(text, name)}: set {name!r} has unknown type {spec.get('type')!r}")
    measures = raw.get("measures", {})
    if not isinstance(measures, dict):
        raise ConfigError("measures: expected an object")
    for name, spec in measures.items():
        kind = spec.get("type") if isinstance(spec, dict) else None
        if kind not in _MEASURE_KEYS:
            raise ConfigError(f"line {_line_of(text, name)}: measure {name!r} has unknown type {kind!r}")
        _check_keys(spec, {"type"} | _MEASURE_KEYS[kind], f"measure {name!r}", text)
    task = raw.get("task", {})
    _check_keys(task, _TASK_KEYS[command], f"task ({command})", text)
    for p in task.get("points", []) if command == "wiener" else []:
        _check_keys(p, _WIENER_POINT, "wiener point", text)
    if command == "kelvin-check" and "duality" in task:
        _check_keys(task["duality"], _DUALITY, "duality", text)
    output = raw.get("output", {})
    _check_keys(output, _OUTPUT, "output", text)
    levels = raw.get("levels", [0])
    if not (isinstance(levels, list) and levels and all(isinstance(l, int) and l >= 0 for l in levels)):
        raise ConfigError(f"line {_line_of(text, 'levels')}: levels must be a nonempty list of integers >= 0")
    cfg = SceneConfig(command, dict(kernel), float(raw.get("tol", 1e-10)), levels, sets, measures,
                      task, output, raw)
    _check_refs(cfg, text)
    return cfg


def _check_refs(cfg: SceneConfig, text: str):
    def need(kind, name, pool):
        if not isinstance(name, str) or name not in pool:
            line = _line_of(text, name) if isinstance(name, str) else 0
            raise ConfigError(f"line {line or _line_of(text, 'task')}: unknown {kind} {name!r}")

    for name, spec in cfg.sets.items():
        of = spec.get("of")
        for ref in ([of] if isinstance(of, str) else of or []):
            need("set", ref, cfg.sets)
    for spec in cfg.measures.values():
        if spec["type"] == "equilibrium":
            need("set", spec.get("set"), cfg.sets)
    t = cfg.task
    for key in ("set", "target", "subset"):
        if key in t:
            for ref in (t[key] if isinstance(t[key], list) else [t[key]]):
                need("set", ref, cfg.sets)
    for key in ("measure", "lambda"):
        if key in t:
            need("measure", t[key], cfg.measures)
    for p in t.get("points", []) if cfg.command == "wiener" else []:
        need("set", p.get("set"), cfg.sets)
    if cfg.command == "kelvin-check" and "duality" in t:
        need("set", t["duality"].get("target"), cfg.sets)


# ---------------------------------------------------------------------------
# building sets and measures
# ---------------------------------------------------------------------------

class Scene:
    """Level-aware factory for the named sets and measures of a config."""

    def __init__(self, cfg: SceneConfig):
        self.cfg = cfg
        self.model = cfg.model()
        self._cache: dict = {}

    def cloud(self, name: str, level: int, x1_max: float | None = None) -> PointCloud:
        key = (name, level, x1_max)
        if key not in self._cache:
            self._cache[key] = self._build(name, level, x1_max)
        return self._cache[key]

    def _build(self, name, level, x1_max):
        s = self.cfg.sets[name]
        kind = s["type"]
        if kind == "sphere":
            return sample_sphere(s.get("center", [0, 0, 0]), float(s.get("radius", 1.0)), level)
        if kind == "ball":
            return sample_ball(s.get("center", [0, 0, 0]), float(s.get("radius", 1.0)), level,
                               lattice_factor=float(s.get("lattice_factor", 1.0)), gap=float(s.get("gap", 0.5)))
        if kind == "cap":
            base = self.cloud(s["of"], level, x1_max)
            return spherical_cap(base, s.get("center", [0, 0, 0]), s["axis"], float(s["angle"]), label=name)
        if kind == "rotation_body":
            spec = RotationBodySpec(s["profile"], float(s["s"]), float(x1_max or s["x1_max"]),
                                    float(s.get("density", 0.5)), float(s.get("rho_max", 1.0)))
            return sample_rotation_body(spec, level)
        if kind == "inverted":
            return invert_cloud(self.cloud(s["of"], level, x1_max), s["y"])
        if kind == "union":
            return merge_clouds([self.cloud(o, level, x1_max) for o in s["of"]], label=name)
        if kind == "points":
            pts = np.array(s["points"], dtype=float, ndmin=2)
            h = np.broadcast_to(np.asarray(s.get("spacing", 1.0), dtype=float), (len(pts),))
            return PointCloud(pts, h, name)
        raise ConfigError(f"unknown set type {kind!r}")

    def measure(self, name: str, level: int) -> DiscreteMeasure:
        m = self.cfg.measures[name]
        if m["type"] == "diracs":
            pts = m["points"]
            w = m.get("weights", [1.0] * len(pts))
            spacing = m.get("spacing")
            if spacing is not None:
                spacing = np.broadcast_to(np.asarray(spacing, float), (len(pts),))
            return DiscreteMeasure.from_atoms(pts, w, spacing=spacing, label=name)
        cloud = self.cloud(m["set"], level)
        return equilibrium(self.model, cloud, tol=self.cfg.tol).gamma

    def sources(self, name: str):
        m = self.cfg.measures[name]
        if m["type"] != "diracs":
            raise ConfigError("superposition needs a 'diracs' measure")
        pts = m["points"]
        w = m.get("weights", [1.0] * len(pts))
        return [(tuple(p), float(c)) for p, c in zip(pts, w)]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _hmax(cloud: PointCloud) -> float:
    return float(np.max(cloud.spacing))


def cmd_capacity(scene: Scene, args) -> tuple:
    name = scene.cfg.task["set"]
    rows, caps, hs = [], [], []
    for level in scene.cfg.levels:
        cloud = scene.cloud(name, level)
        res = equilibrium(scene.model, cloud, bal.default_probes(cloud), tol=scene.cfg.tol)
        row = {"level": level, "nodes": len(cloud), "h_max": _hmax(cloud)}
        row.update(res.summary())
        rows.append(row)
        caps.append(res.capacity)
        hs.append(_hmax(cloud))
    out = {"set": name, "levels": rows}
    if len(caps) >= 2:
        out["extrapolated_capacity"] = richardson(caps, hs, order=1)
    csv_rows = [{k: r[k] for k in ("level", "nodes", "h_max", "capacity", "energy")} for r in rows]
    return out, csv_rows


def cmd_balayage(scene: Scene, args) -> tuple:
    t = scene.cfg.task
    rows, last = [], None
    for level in scene.cfg.levels:
        target = scene.cloud(t["target"], level)
        mu = scene.measure(t["measure"], level)
        probes = np.array(t["probes"], float) if "probes" in t else None
        res = bal.sweep(scene.model, mu, target, probes, tol=scene.cfg.tol)
        row = {"level": level}
        row.update(res.summary())
        row["deficit_ratio"] = 1.0 - res.swept_mass / res.source_mass if res.source_mass > 0 else 0.0
        if args.check_symmetry:
            if "lambda" not in t:
                raise ConfigError("--check-symmetry needs task.lambda")
            row["symmetry_gap"] = bal.check_symmetry(scene.model, mu, scene.measure(t["lambda"], level), target,
                                                     tol=scene.cfg.tol)
        if args.check_restriction:
            if "subset" not in t:
                raise ConfigError("--check-restriction needs task.subset")
            row["restriction"] = bal.check_restriction(scene.model, mu, target, scene.cloud(t["subset"], level),
                                                       probes, tol=scene.cfg.tol)
        if args.check_superposition:
            row["superposition"] = bal.superpose_diracs(scene.model, scene.sources(t["measure"]), target, probes,
                                                        tol=scene.cfg.tol)
        rows.append(row)
        last = (mu, res)
    mu, res = last
    csv_rows = [{"node": i, "weight": float(w), "U_mu": float(b), "U_swept": float(u)}
                for i, (w, b, u) in enumerate(zip(res.swept.weights, res.b, _node_potential(scene, res)))]
    return {"measure": t["measure"], "target": t["target"], "levels": rows}, csv_rows


def _node_potential(scene, res):
    from .kernel import kernel_matrix
    from . import _accel

    K = kernel_matrix(scene.model, res.swept.cloud)
    return _accel.matvec(K, np.ascontiguousarray(res.swept.weights))


def _series_block(d: wie.SeriesDiagnostic) -> dict:
    return d.as_dict()


def cmd_wiener(scene: Scene, args) -> tuple:
    t = scene.cfg.task
    level = scene.cfg.levels[-1]
    out, csv_rows, verdicts = {"level": level}, [], []
    if "set" in t:
        qs = t.get("q", [2.0])
        qs = qs if isinstance(qs, list) else [qs]
        if "k_range" not in t:
            raise ConfigError("wiener task needs k_range")
        truncations = t.get("x1_max", [None])
        truncations = truncations if isinstance(truncations, list) else [truncations]
        series = []
        for x1 in truncations:
            cloud = scene.cloud(t["set"], level, x1)
            for q in qs:
                d = wie.shell_capacities(scene.model, cloud, t.get("center", [0.0] * cloud.n), float(q),
                                         t["k_range"], tol=scene.cfg.tol)
                ex = wie.equilibrium_existence_series(d)
                fin = wie.capacity_finiteness_series(d)
                verdicts.append(ex.verdict)
                series.append({"x1_max": x1, "q": float(q), "shells": d.rows(),
                               "equilibrium_existence": _series_block(ex),
                               "capacity_finiteness": _series_block(fin)})
                for s, term, ps in zip(d.shells, ex.terms, ex.partial_sums):
                    csv_rows.append({"x1_max": x1, "q": float(q), "k": s.k, "node_count": len(s.cloud),
                                     "c_k": s.capacity, "term": float(term), "partial_sum": float(ps)})
        out["series"] = series
    points = []
    for p in t.get("points", []):
        cloud = scene.cloud(p["set"], level)
        r = wie.classify_point(scene.model, cloud, p["y"], float(p.get("q", 0.5)), p.get("k_range", [0, 2]),
                               tol=scene.cfg.tol)
        verdicts.append(r["verdict"])
        points.append({"set": p["set"], "y": p["y"], "verdict": r["verdict"], "series_route": r["series_route"],
                       "inversion_route": r["inversion_route"], "routes_agree": r["routes_agree"],
                       "truncated": r["truncated"], "series": _series_block(r["series"]),
                       "inverted_series": _series_block(r["inverted_series"])})
    if points:
        out["points"] = points
    if args.require_conclusive and "inconclusive" in verdicts:
        out["inconclusive"] = True
    return out, csv_rows


def cmd_kelvin_check(scene: Scene, args) -> tuple:
    t = scene.cfg.task
    params = scene.model.params
    ctx = kel.KelvinContext(t.get("center", [0.0] * params.n), params)
    rng = np.random.default_rng(int(t.get("seed", 0)))
    m = int(t.get("atoms", 100))
    y = ctx.y
    # atoms and probes in the shell 0.5 <= |x - y| <= 2 so both sides stay O(1)
    def shell(k):
        u = rng.standard_normal((k, params.n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return y + u * rng.uniform(0.5, 2.0, size=(k, 1))

    nu = DiscreteMeasure.from_atoms(shell(m), rng.uniform(0.1, 1.0, m), label="nu")
    lam = DiscreteMeasure.from_atoms(shell(m), rng.uniform(0.1, 1.0, m), label="lam")
    probes = shell(int(t.get("probes", 20)))
    inv = kel.check_involution(ctx, nu)
    out = {
        "involution_coordinate_gap": inv["coordinate_gap"],
        "involution_weight_gap": inv["weight_gap"],
        "mass_gap": kel.check_kelvin_mass(ctx, nu),
        "potential_gap": kel.check_kelvin_potential(ctx, nu, probes),
        "energy_gap": kel.check_kelvin_energy(ctx, nu, lam),
    }
    csv_rows = []
    if "duality" in t:
        dual = []
        for level in scene.cfg.levels:
            target = scene.cloud(t["duality"]["target"], level)
            r = kel.dirac_balayage_duality(scene.model, t["duality"]["y"], target, tol=scene.cfg.tol)
            r["level"] = level
            dual.append(r)
            csv_rows.append({"level": level, "direct_mass": r["direct_mass"], "kelvin_mass": r["kelvin_mass"],
                             "relative_mass_gap": r["relative_mass_gap"],
                             "relative_potential_gap": r["relative_potential_gap"]})
        out["duality"] = dual
    return out, csv_rows


def cmd_mass_deficit(scene: Scene, args) -> tuple:
    t = scene.cfg.task
    targets = t["target"] if isinstance(t["target"], list) else [t["target"]]
    truncations = t.get("x1_max", [None])
    truncations = truncations if isinstance(truncations, list) else [truncations]
    rows = []
    for level in scene.cfg.levels:
        mu = scene.measure(t["measure"], level)
        for name in targets:
            for x1 in truncations:
                cloud = scene.cloud(name, level, x1)
                m, s, ratio = bal.mass_deficit(scene.model, mu, cloud, tol=scene.cfg.tol)
                rows.append({"level": level, "target": name, "x1_max": x1, "nodes": len(cloud),
                             "source_mass": m, "swept_mass": s, "deficit_ratio": ratio})
    return {"rows": rows}, rows


_COMMANDS = {
    "capacity": cmd_capacity,
    "balayage": cmd_balayage,
    "wiener": cmd_wiener,
    "kelvin-check": cmd_kelvin_check,
    "mass-deficit": cmd_mass_deficit,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _round(obj):
    """Floats to 15 significant digits, NaN/inf to null, arrays to lists."""
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.15g}") if math.isfinite(x) else None
    return obj


def _atomic_write(path: str, data: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        cols = list(rows[0].keys())
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else (f"{r[k]:.15g}" if isinstance(r[k], float) else r[k]))
                        for k in cols})
    return buf.getvalue()


def _set_threads(n: int | None):
    if not n:
        return
    try:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    except ImportError:
        pass


def run(command: str, cfg: SceneConfig, args) -> dict:
    """Execute ``command`` and return the report dictionary (not yet written)."""
    from threadpoolctl import threadpool_limits

    scene = Scene(cfg)
    # BLAS stays single-threaded so that reports do not depend on --threads
    with threadpool_limits(limits=1):
        results, csv_rows = _COMMANDS[command](scene, args)
    report = {
        "tool": "rieszbal",
        "version": __version__,
        "command": command,
        "config": cfg.resolved(),
        "tolerances": {"kkt": cfg.tol, "beta": cfg.model().beta},
        "flags": {"check_symmetry": bool(args.check_symmetry), "check_superposition": bool(args.check_superposition),
                  "check_restriction": bool(args.check_restriction),
                  "require_conclusive": bool(args.require_conclusive)},
        "results": results,
    }
    return {"report": _round(report), "csv": csv_rows}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rieszbal", description="Riesz balayage and capacity experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON scene file")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--level", type=int, default=None, help="finest ladder level; runs levels 0..L")
    p.add_argument("--tol", type=float, default=None, help="KKT tolerance (overrides config)")
    p.add_argument("--beta", type=float, default=None, help="diagonal scale beta (overrides config)")
    p.add_argument("--threads", type=int, default=None, help="numba threads; results do not depend on it")
    p.add_argument("--check-symmetry", action="store_true")
    p.add_argument("--check-superposition", action="store_true")
    p.add_argument("--check-restriction", action="store_true")
    p.add_argument("--require-conclusive", action="store_true",
                   help="exit 3 when a series verdict is inconclusive")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        with open(args.config) as fh:
            text = fh.read()
        cfg = load_config(text, args.command)
        if args.level is not None:
            if args.level < 0:
                raise ConfigError("--level must be >= 0")
            cfg.levels = list(range(args.level + 1))
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            cfg.tol = float(args.tol)
        if args.beta is not None:
            cfg.kernel["beta"] = float(args.beta)
        cfg.model()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"rieszbal: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = run(args.command, cfg, args)
    except ConvergenceError as exc:
        print(f"rieszbal: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"rieszbal: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"rieszbal: validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stem = args.command.replace("-", "_")
    report_path = os.path.join(args.out, cfg.output.get("report", f"{stem}.json"))
    _atomic_write(report_path, json.dumps(out["report"], sort_keys=True, indent=2, allow_nan=False) + "\n")
    if out["csv"]:
        _atomic_write(os.path.join(args.out, cfg.output.get("csv", f"{stem}.csv")), _csv_text(out["csv"]))
    print(report_path)
    if out["report"]["results"].get("inconclusive"):
        print("rieszbal: inconclusive verdict", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
