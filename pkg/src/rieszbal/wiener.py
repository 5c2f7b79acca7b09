"""Shell-capacity series: existence of equilibrium measures for unbounded
sets (outward shells, q > 1) and irregularity of boundary points (inward
shells about the tested point, 0 < q < 1).

A finite truncation cannot prove that a series converges.  Verdicts come
from the geometric decay rate of the last third of the terms, with an
explicit ``inconclusive`` state:

* ``tail_ratio``: least-squares fit of log t_k against k over the tail.
* ``harmonic_ratio``: the same fit applied to j * t_j (j = 1, 2, ...).  A
  value >= 0.9 means the terms vanish no faster than the harmonic series,
  whose sum diverges; such terms count as non-vanishing.

``diverging`` if tail_ratio >= 1 or the terms are non-vanishing,
``converging`` if tail_ratio <= 0.9 otherwise, else ``inconclusive``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import equilibrium
from .geometry import PointCloud, invert_cloud, shell_clouds
from .kernel import KernelModel
from .nnqp import ConvergenceError

__all__ = [
    "Shell",
    "ShellDecomposition",
    "SeriesDiagnostic",
    "CONVERGING_RATIO",
    "HARMONIC_RATIO",
    "geometric_ratio",
    "series_diagnostic",
    "shell_capacities",
    "equilibrium_existence_series",
    "capacity_finiteness_series",
    "irregularity_series",
    "classify_point",
]

log = logging.getLogger(__name__)

CONVERGING_RATIO = 0.9
HARMONIC_RATIO = 0.9


@dataclass(frozen=True, eq=False)
class Shell:
    k: int
    cloud: PointCloud
    capacity: float
    valid: bool = True
    error: str | None = None


@dataclass(frozen=True, eq=False)
class ShellDecomposition:
    center: tuple
    q: float
    direction: str
    shells: tuple
    n: int = 3
    alpha: float = 2.0

    @property
    def ks(self) -> list:
        return [s.k for s in self.shells]

    @property
    def capacities(self) -> np.ndarray:
        return np.array([s.capacity for s in self.shells])

    @property
    def valid(self) -> bool:
        return all(s.valid for s in self.shells)

    def rows(self) -> list:
        return [{"k": s.k, "node_count": len(s.cloud), "c_k": s.capacity, "valid": s.valid} for s in self.shells]

    @classmethod
    def synthetic(cls, capacities, q: float, k_min: int = 0, n: int = 3, alpha: float = 2.0):
        """Decomposition with prescribed shell capacities (no geometry)."""
        shells = tuple(Shell(k_min + i, PointCloud.empty(n), float(c)) for i, c in enumerate(capacities))
        direction = "outward" if q > 1 else "inward"
        return cls((0.0,) * n, float(q), direction, shells, n, alpha)


@dataclass(frozen=True, eq=False)
class SeriesDiagnostic:
    ks: list
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_ratio: float
    harmonic_ratio: float
    verdict: str
    k_max: int
    kind: str

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": list(self.ks),
            "terms": self.terms.tolist(),
            "partial_sums": self.partial_sums.tolist(),
            "tail_ratio": self.tail_ratio,
            "harmonic_ratio": self.harmonic_ratio,
            "verdict": self.verdict,
            "k_max": self.k_max,
        }


def geometric_ratio(values) -> float:
    """exp of the least-squares slope of log(values) against index, over the
    last third of ``values`` (at least two entries).

    An all-zero tail gives 0; a tail with zeros gives 0 if it ends in zero
    and +inf otherwise; fewer than two values give NaN.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return math.nan
    m = max(2, math.ceil(len(v) / 3))
    tail = v[-m:]
    if np.all(tail == 0):
        return 0.0
    if np.any(tail <= 0):
        return 0.0 if tail[-1] <= 0 else math.inf
    x = np.arange(m, dtype=float)
    slope = np.polyfit(x, np.log(tail), 1)[0]
    return float(math.exp(slope))


def series_diagnostic(ks, terms, kind: str = "series") -> SeriesDiagnostic:
    """Partial sums, decay ratios and verdict for a finite list of terms."""
    t = np.asarray(terms, dtype=float)
    ks = [int(k) for k in ks]
    if len(t) and not np.all(np.isfinite(t)):
        return SeriesDiagnostic(ks, t, np.cumsum(t), math.nan, math.nan, "inconclusive",
                                ks[-1] if ks else 0, kind)
    tail = geometric_ratio(t)
    harm = geometric_ratio(np.arange(1, len(t) + 1) * t)
    if len(t) and np.all(t == 0):
        verdict = "converging"
    elif math.isnan(tail):
        verdict = "inconclusive"
    elif tail >= 1.0 or harm >= HARMONIC_RATIO:
        verdict = "diverging"
    elif tail <= CONVERGING_RATIO:
        verdict = "converging"
    else:
        verdict = "inconclusive"
    return SeriesDiagnostic(ks, t, np.cumsum(t), tail, harm, verdict, ks[-1] if ks else 0, kind)


def shell_capacities(model: KernelModel, cloud: PointCloud, center, q: float, k_range, *,
                     tol: float = 1e-10) -> ShellDecomposition:
    """Capacity of each radial shell of ``cloud`` about ``center``.

    Shells are solved independently.  Empty shells get capacity 0; a shell
    whose solve fails is kept with ``valid=False`` and capacity NaN.
    """
    center = tuple(float(c) for c in np.asarray(center, dtype=float).reshape(-1))
    pieces = shell_clouds(cloud, center, q, k_range)
    k_min = int(k_range[0])
    shells = []
    for i, piece in enumerate(pieces):
        k = k_min + i
        if len(piece) == 0:
            shells.append(Shell(k, piece, 0.0))
            continue
        try:
            c = equilibrium(model, piece, tol=tol).capacity
            shells.append(Shell(k, piece, c))
        except (ConvergenceError, np.linalg.LinAlgError) as exc:
            log.warning("shell %d failed: %s", k, exc)
            shells.append(Shell(k, piece, math.nan, False, str(exc)))
    direction = "outward" if q > 1 else "inward"
    return ShellDecomposition(center, float(q), direction, tuple(shells), model.params.n, model.params.alpha)


def _require(decomp: ShellDecomposition, direction: str):
    if decomp.direction != direction:
        raise ValueError(f"{direction} decomposition required, got {decomp.direction}")


def _terms(decomp: ShellDecomposition, power: float) -> np.ndarray:
    ks = np.array(decomp.ks, dtype=float)
    gap = decomp.n - decomp.alpha
    return decomp.capacities / decomp.q ** (power * ks * gap)


def equilibrium_existence_series(decomp: ShellDecomposition) -> SeriesDiagnostic:
    """Terms c_k / q^(k(n - alpha)) over outward shells."""
    _require(decomp, "outward")
    return series_diagnostic(decomp.ks, _terms(decomp, 1.0), "equilibrium_existence")


def capacity_finiteness_series(decomp: ShellDecomposition) -> SeriesDiagnostic:
    """Terms c_k / q^(2k(n - alpha)) over outward shells."""
    _require(decomp, "outward")
    return series_diagnostic(decomp.ks, _terms(decomp, 2.0), "capacity_finiteness")


def irregularity_series(decomp: ShellDecomposition) -> SeriesDiagnostic:
    """Terms c_k / q^(k(n - alpha)) over inward shells about the tested point.

    ``converging`` means the point is irregular, ``diverging`` regular.
    """
    _require(decomp, "inward")
    return series_diagnostic(decomp.ks, _terms(decomp, 1.0), "irregularity")


_POINT_VERDICT = {"converging": "irregular", "diverging": "regular", "inconclusive": "inconclusive"}


def classify_point(model: KernelModel, cloud: PointCloud, y, q: float = 0.5, k_range=(0, 3), *,
                   tol: float = 1e-10) -> dict:
    """Regularity of ``y`` for the set sampled by ``cloud``, by two routes.

    The series route sums inward shell capacities about y.  The inversion
    route inverts the cloud (minus a node at y, if any) about y and checks
    whether the image has an equilibrium measure, via outward shells with
    ratio 1/q over the same k_range.  When both routes are conclusive and
    disagree the verdict is ``inconclusive``.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    y = np.asarray(y, dtype=float).reshape(-1)
    keep = np.flatnonzero(np.any(cloud.points != y, axis=1))
    rest = cloud.subset(keep) if keep.size < len(cloud) else cloud
    inward = shell_capacities(model, rest, y, q, k_range, tol=tol)
    series = irregularity_series(inward)
    outward = shell_capacities(model, invert_cloud(rest, y), y, 1.0 / q, k_range, tol=tol)
    dual = equilibrium_existence_series(outward)
    v1, v2 = _POINT_VERDICT[series.verdict], _POINT_VERDICT[dual.verdict]
    if v1 == v2:
        verdict, agree = v1, True
    elif "inconclusive" in (v1, v2):
        verdict, agree = (v2 if v1 == "inconclusive" else v1), None
    else:
        log.warning("regularity routes disagree at %s: series says %s, inversion says %s", y, v1, v2)
        verdict, agree = "inconclusive", False
    d = np.linalg.norm(rest.points - y, axis=1)
    inner_edge = q ** (int(k_range[1]) + 1)
    return {
        "verdict": verdict,
        "series_route": v1,
        "inversion_route": v2,
        "routes_agree": agree,
        "series": series,
        "inverted_series": dual,
        "inward": inward,
        "outward": outward,
        # nodes nearer to y than the innermost shell are invisible to the truncated series
        "truncated": bool(np.any(d <= inner_edge)),
    }
