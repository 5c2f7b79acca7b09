"""Kelvin transform of atomic measures with respect to the unit sphere about y.

J_y(x) = y + (x - y)/|x - y|^2 and an atom (x, w) maps to
(J_y(x), w |x - y|^(alpha - n)).  Mass, potential and energy identities are
exact on the off-diagonal kernel; the regularized diagonal does not
transform exactly, so the identity checks run on the unregularized path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .balayage import _rel_sup, default_probes, sweep
from .equilibrium import equilibrium
from .geometry import PointCloud, invert_cloud
from .kernel import DiscreteMeasure, KernelModel, RieszParams, eval_potential, mutual_energy

__all__ = [
    "KelvinContext",
    "kelvin_transform",
    "inversion_factor",
    "check_involution",
    "check_kelvin_mass",
    "check_kelvin_potential",
    "check_kelvin_energy",
    "dirac_balayage_duality",
]


@dataclass(frozen=True)
class KelvinContext:
    center: tuple
    params: RieszParams = RieszParams()

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.asarray(self.center).reshape(-1)))
        if len(self.center) != self.params.n:
            raise ValueError("center dimension does not match params.n")

    @property
    def y(self) -> np.ndarray:
        return np.array(self.center)

    def exact_model(self) -> KernelModel:
        return KernelModel(self.params, "unregularized")


def inversion_factor(ctx: KelvinContext, points) -> np.ndarray:
    """|x - y|^(alpha - n) for each point."""
    d = np.linalg.norm(np.array(points, float, ndmin=2) - ctx.y, axis=1)
    return d ** ctx.params.exponent


def kelvin_transform(ctx: KelvinContext, nu: DiscreteMeasure) -> DiscreteMeasure:
    """Image of ``nu`` under the Kelvin transform about ``ctx.center``.

    Zero-weight nodes sitting at the center are dropped; a positive atom
    there is an error.
    """
    cloud = nu.cloud
    at_y = np.flatnonzero(np.all(cloud.points == ctx.y, axis=1))
    if at_y.size:
        if np.any(nu.weights[at_y] > 0):
            raise ValueError("measure has an atom at the inversion center")
        keep = np.setdiff1d(np.arange(len(cloud)), at_y)
        nu = DiscreteMeasure(cloud.subset(keep), nu.weights[keep])
        cloud = nu.cloud
    image = invert_cloud(cloud, ctx.y)
    return DiscreteMeasure(image, nu.weights * inversion_factor(ctx, cloud.points))


def _max_rel(a, b) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    scale = np.maximum(np.abs(a), np.abs(b))
    diff = np.abs(a - b)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    return float(np.max(rel)) if rel.size else 0.0


def check_involution(ctx: KelvinContext, nu: DiscreteMeasure) -> dict:
    """Max absolute coordinate error and max relative weight error of K_y(K_y(nu)) vs nu."""
    back = kelvin_transform(ctx, kelvin_transform(ctx, nu))
    return {
        "coordinate_gap": float(np.max(np.abs(back.points - nu.points))) if len(nu.cloud) else 0.0,
        "weight_gap": _max_rel(back.weights, nu.weights),
    }


def check_kelvin_mass(ctx: KelvinContext, nu: DiscreteMeasure) -> float:
    """Relative gap between nu's total mass and U^{nu*}(y)."""
    star = kelvin_transform(ctx, nu)
    u = eval_potential(ctx.exact_model(), star, ctx.y[None, :])[0]
    return _max_rel([u], [nu.total_mass])


def check_kelvin_potential(ctx: KelvinContext, nu: DiscreteMeasure, probes) -> float:
    """max over probes x of the relative gap between U^{nu*}(x*) and |x - y|^(n - alpha) U^nu(x)."""
    P = np.array(probes, float, ndmin=2)
    d = np.linalg.norm(P - ctx.y, axis=1)
    if np.any(d == 0):
        raise ValueError("probe at the inversion center")
    model = ctx.exact_model()
    star = kelvin_transform(ctx, nu)
    P_star = ctx.y + (P - ctx.y) / (d * d)[:, None]
    lhs = eval_potential(model, star, P_star)
    rhs = d ** (-ctx.params.exponent) * eval_potential(model, nu, P)
    return _max_rel(lhs, rhs)


def check_kelvin_energy(ctx: KelvinContext, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Relative gap between E(mu*, nu*) and E(mu, nu) for disjointly supported measures."""
    a = {p.tobytes() for p in mu.points[mu.support]}
    if any(p.tobytes() in a for p in nu.points[nu.support]):
        raise ValueError("overlapping supports")
    model = ctx.exact_model()
    e = mutual_energy(model, mu, nu)
    e_star = mutual_energy(model, kelvin_transform(ctx, mu), kelvin_transform(ctx, nu))
    return _max_rel([e_star], [e])


def dirac_balayage_duality(model: KernelModel, y, target: PointCloud, probes=None, *,
                           tol: float = 1e-10) -> dict:
    """Sweep of the unit Dirac at y onto ``target`` versus the Kelvin image of
    the equilibrium measure of the inverted target.

    The two routes share no intermediate object: the first solves the
    balayage NNQP on the target, the second solves the b = 1 problem on a
    freshly sampled (inverted) cloud with its own spacings.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    ctx = KelvinContext(y, model.params)
    dirac = DiscreteMeasure.dirac(y)
    if probes is None:
        probes = default_probes(target, y[None, :])
    direct = sweep(model, dirac, target, probes, tol=tol)
    inv = invert_cloud(target, y)
    eq = equilibrium(model, inv, tol=tol)
    dual = kelvin_transform(ctx, eq.gamma)
    u_dual = eval_potential(model, dual, probes)
    m1, m2 = direct.swept_mass, dual.total_mass
    return {
        "direct_mass": m1,
        "kelvin_mass": m2,
        "inverted_capacity": eq.capacity,
        "relative_mass_gap": abs(m1 - m2) / max(abs(m1), abs(m2)) if max(m1, m2) > 0 else 0.0,
        "relative_potential_gap": _rel_sup(u_dual, direct.swept_potential),
    }
