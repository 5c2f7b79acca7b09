"""Riesz kernel |x - y|^(alpha - n), its diagonal regularisation, potentials and energies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from . import _accel
from .geometry import PointCloud, nearest_neighbor_distance

__all__ = [
    "RieszParams",
    "KernelModel",
    "DiscreteMeasure",
    "EnergyReport",
    "tube_self_potential",
    "eval_potential",
    "potential_on_cloud",
    "mutual_energy",
    "energy",
    "kernel_matrix",
    "smallest_eigenvalue",
    "ordered_dot",
]


@dataclass(frozen=True)
class RieszParams:
    n: int = 3
    alpha: float = 2.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")

    @property
    def exponent(self) -> float:
        """alpha - n, the (negative) power of the distance."""
        return float(self.alpha) - int(self.n)


def tube_self_potential(length: float, radius: float, exponent: float) -> float:
    """Mean potential of a uniform unit line charge of ``length`` on a parallel
    line at distance ``radius``, for the kernel r**exponent (exponent <= -1).

    Equals (2/L^2) * int_0^L (L - t) (t^2 + r^2)^(exponent/2) dt, split as
    L * I0 - I1.  I1 is elementary; I0 = r^(p+1) int_0^(L/r) (1 + u^2)^(p/2) du
    becomes an incomplete beta function under u = tan(theta), which stays
    accurate for radii many orders of magnitude below L.
    """
    L, r, p = float(length), float(radius), float(exponent)
    if not (L > 0 and r > 0):
        raise ValueError("length and radius must be positive")
    if p > -1.0:
        raise ValueError("exponent must be <= -1")
    if p == -1.0:
        i0 = math.asinh(L / r)
    else:
        a = 0.5 * (-p - 1.0)
        x = L * L / (L * L + r * r)
        i0 = r ** (p + 1.0) * 0.5 * special.beta(0.5, a) * special.betainc(0.5, a, x)
    if p == -2.0:
        i1 = 0.5 * math.log1p((L / r) ** 2)
    else:
        i1 = ((L * L + r * r) ** (0.5 * p + 1.0) - r ** (p + 2.0)) / (p + 2.0)
    return 2.0 / L**2 * (L * i0 - i1)


@dataclass(frozen=True)
class KernelModel:
    """Riesz kernel plus the rule for coinciding points.

    ``spacing_scaled``: K(x_i, x_i) = (beta * h_i)^(alpha - n); tube nodes use
    :func:`tube_self_potential` of a segment of length h_i when that is larger.
    The floor matters for tubes with radius near h_i: their averaged
    self-potential drops below the point coupling 1/h_i to the neighbours
    and the matrix would lose definiteness.
    ``unregularized``: diagonal evaluation is an error.
    """

    params: RieszParams = RieszParams()
    diag_rule: str = "spacing_scaled"
    beta: float = 0.5

    def __post_init__(self):
        if self.diag_rule not in ("spacing_scaled", "unregularized"):
            raise ValueError(f"unknown diag_rule {self.diag_rule!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def exponent(self) -> float:
        return self.params.exponent

    @property
    def regularized(self) -> bool:
        return self.diag_rule == "spacing_scaled"

    def with_rule(self, diag_rule: str) -> "KernelModel":
        return KernelModel(self.params, diag_rule, self.beta)

    def off_diagonal(self, x, y) -> float:
        d = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
        if d == 0:
            raise ValueError("coinciding points need the diagonal rule")
        return d ** self.exponent

    def diagonal(self, cloud: PointCloud) -> np.ndarray:
        """Self-interaction value per node (``inf`` when unregularized)."""
        if not self.regularized:
            return np.full(len(cloud), np.inf)
        p = self.exponent
        d = (self.beta * cloud.spacing) ** p
        if cloud.tube_radius is not None:
            for i in np.flatnonzero(cloud.tube_radius > 0):
                d[i] = max(d[i], tube_self_potential(cloud.spacing[i], cloud.tube_radius[i], p))
        return d


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative atomic measure carried by the nodes of a cloud."""

    cloud: PointCloud
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(self.cloud):
            raise ValueError("one weight per node required")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.cloud, c * self.weights)

    @classmethod
    def zero(cls, cloud: PointCloud) -> "DiscreteMeasure":
        return cls(cloud, np.zeros(len(cloud)))

    @classmethod
    def from_atoms(cls, points, weights, spacing=None, label: str = "atoms") -> "DiscreteMeasure":
        """Build a measure from (possibly repeated) atom positions; repeated points merge."""
        pts = np.array(points, dtype=float, ndmin=2)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise ValueError("one weight per atom required")
        slot: dict = {}
        keep, merged = [], []
        for p, wi in zip(pts, w):
            key = p.tobytes()
            if key in slot:
                merged[slot[key]] += wi
            else:
                slot[key] = len(keep)
                keep.append(p)
                merged.append(float(wi))
        uniq = np.array(keep).reshape(-1, pts.shape[1])
        merged = np.array(merged)
        if spacing is None:
            nn = nearest_neighbor_distance(uniq)
            spacing = np.where(np.isfinite(nn), nn, 1.0)
        cloud = PointCloud(uniq, np.broadcast_to(np.asarray(spacing, float), (len(uniq),)), label)
        return cls(cloud, merged)

    @classmethod
    def dirac(cls, point, weight: float = 1.0, spacing: float = 1.0) -> "DiscreteMeasure":
        return cls.from_atoms([point], [weight], spacing=[spacing], label="dirac")

    def to_dict(self, inline_cloud: bool = True) -> dict:
        return {"cloud": self.cloud.to_dict() if inline_cloud else self.cloud.label,
                "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict, clouds: dict | None = None) -> "DiscreteMeasure":
        c = d["cloud"]
        cloud = clouds[c] if isinstance(c, str) else PointCloud.from_dict(c)
        return cls(cloud, d["weights"])


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    norm: float


def ordered_dot(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product with a fixed left-to-right reduction order."""
    a = np.ascontiguousarray(a, dtype=float)
    return float(_accel.matvec(a[None, :], np.ascontiguousarray(b, dtype=float))[0])


def _probes(probes, n: int) -> np.ndarray:
    P = np.array(probes, dtype=float, ndmin=2)
    if P.size == 0:
        return P.reshape(0, n)
    if P.shape[1] != n:
        raise ValueError("probe dimension does not match")
    return np.ascontiguousarray(P)


def eval_potential(model: KernelModel, mu: DiscreteMeasure, probes) -> np.ndarray:
    """U^mu at each probe.  A probe on a positive atom uses that atom's diagonal value."""
    P = _probes(probes, mu.cloud.n)
    diag = model.diagonal(mu.cloud)
    if not model.regularized and len(P) and mu.support.size:
        X = mu.points[mu.support]
        dist, _ = cKDTree(X).query(P, k=1)
        if np.any(dist == 0):
            raise ValueError("probe coincides with an atom under the unregularized rule")
    return _accel.potential(P, np.ascontiguousarray(mu.points), np.ascontiguousarray(mu.weights),
                            np.ascontiguousarray(diag), model.exponent)


def potential_on_cloud(model: KernelModel, mu: DiscreteMeasure, cloud: PointCloud) -> np.ndarray:
    """U^mu at the nodes of ``cloud``; atoms sitting on a node use that node's diagonal value."""
    idx = mu.cloud.index_in(cloud)
    hits = np.flatnonzero((idx >= 0) & (mu.weights > 0))
    if hits.size and not model.regularized:
        raise ValueError("atom on a target node under the unregularized rule")
    diag_t = model.diagonal(cloud)
    diag_mu = np.full(len(mu.cloud), np.inf)
    # coinciding atoms take the *target* node's diagonal value
    diag_mu[hits] = diag_t[idx[hits]]
    return _accel.potential(np.ascontiguousarray(cloud.points), np.ascontiguousarray(mu.points),
                            np.ascontiguousarray(mu.weights), diag_mu, model.exponent)


def _cross_matrix(model: KernelModel, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    P = np.ascontiguousarray(mu.points)
    X = np.ascontiguousarray(nu.points)
    K = _accel.cross_kernel(P, X, np.full(len(X), np.nan), model.exponent)
    idx = mu.cloud.index_in(nu.cloud) if mu.cloud is not nu.cloud else np.arange(len(P))
    a = np.flatnonzero(idx >= 0)
    if a.size:
        i = idx[a]
        if not model.regularized:
            if np.any((mu.weights[a] > 0) & (nu.weights[i] > 0)):
                raise ValueError("overlapping atoms under the unregularized rule")
            K[a, i] = 0.0
        else:
            # symmetric in the two measures: mean of the two diagonal values
            K[a, i] = 0.5 * (model.diagonal(mu.cloud)[a] + model.diagonal(nu.cloud)[i])
    return K


def mutual_energy(model: KernelModel, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """E(mu, nu) = sum_ij w_i v_j K(x_i, y_j), bitwise symmetric in its arguments."""
    if len(mu.cloud) == 0 or len(nu.cloud) == 0:
        return 0.0
    K = _cross_matrix(model, mu, nu)
    w = np.ascontiguousarray(mu.weights)
    v = np.ascontiguousarray(nu.weights)
    s1 = ordered_dot(w, _accel.matvec(K, v))
    s2 = ordered_dot(v, _accel.matvec(np.ascontiguousarray(K.T), w))
    return 0.5 * (s1 + s2)


def energy(model: KernelModel, mu: DiscreteMeasure) -> EnergyReport:
    e = mutual_energy(model, mu, mu)
    return EnergyReport(e, math.sqrt(max(e, 0.0)))


def kernel_matrix(model: KernelModel, cloud: PointCloud, check: bool = False) -> np.ndarray:
    """Dense Gram matrix K_ij = |x_i - x_j|^(alpha-n), K_ii from the diagonal rule.

    With ``check=True`` a :class:`UserWarning` is emitted when the smallest
    eigenvalue is not positive.
    """
    if not model.regularized:
        raise ValueError("kernel_matrix needs the spacing_scaled diagonal rule")
    K = _accel.kernel_matrix(np.ascontiguousarray(cloud.points), np.ascontiguousarray(model.diagonal(cloud)),
                             model.exponent)
    if check:
        lam = smallest_eigenvalue(K)
        if not lam > 0:
            import warnings

            warnings.warn(f"kernel matrix of {cloud.label!r} is not positive definite (min eig {lam:.3e})")
    return K


def smallest_eigenvalue(K: np.ndarray) -> float:
    if len(K) == 0:
        return math.inf
    if len(K) <= 2500:
        return float(np.linalg.eigvalsh(K)[0])
    from scipy.sparse.linalg import eigsh

    return float(eigsh(K, k=1, which="SA", return_eigenvectors=False)[0])
