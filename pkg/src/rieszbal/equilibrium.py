"""Equilibrium measures and capacities of node clouds.

The equilibrium measure solves the NNQP with b = 1: by the KKT conditions its
potential is 1 on its support and >= 1 on the rest of the cloud, and its
mass, energy and capacity coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _accel
from .geometry import PointCloud
from .kernel import DiscreteMeasure, KernelModel, eval_potential, kernel_matrix, mutual_energy
from .nnqp import ConvergenceError, KktReport, NnqpProblem, solve

__all__ = [
    "EquilibriumResult",
    "equilibrium",
    "capacity",
    "support_profile",
    "reduced_kernel",
    "richardson",
]


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    """Equilibrium measure ``gamma`` of a cloud and its diagnostics.

    ``support_potential_min`` is the smallest node potential over the
    support; ``node_potential_max`` the largest over all nodes.  Probe
    statistics are NaN when no probes were given.
    """

    gamma: DiscreteMeasure
    capacity: float
    energy: float
    node_potential_min: float
    node_potential_max: float
    support_potential_min: float
    probe_potential_min: float
    probe_potential_max: float
    interior_mass_fraction: float | None
    kkt: KktReport
    iterations: int
    converged: bool

    def summary(self) -> dict:
        return {
            "capacity": self.capacity,
            "energy": self.energy,
            "nodes": len(self.gamma.cloud),
            "node_potential_min": self.node_potential_min,
            "node_potential_max": self.node_potential_max,
            "support_potential_min": self.support_potential_min,
            "probe_potential_min": self.probe_potential_min,
            "probe_potential_max": self.probe_potential_max,
            "interior_mass_fraction": self.interior_mass_fraction,
            "kkt": self.kkt.as_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _interior_fraction(gamma: DiscreteMeasure) -> float | None:
    tags = gamma.cloud.tags
    if tags is None:
        return None
    m = gamma.total_mass
    inner = math.fsum(gamma.weights[gamma.cloud.tag_mask("interior")])
    return inner / m if m > 0 else 0.0


def equilibrium(model: KernelModel, cloud: PointCloud, probes=None, *, tol: float = 1e-10,
                w0=None, K=None) -> EquilibriumResult:
    """Equilibrium measure of ``cloud``.

    Parameters
    ----------
    model : KernelModel
        spacing_scaled rule.
    cloud : PointCloud
        Nonempty.
    probes : array (m, n), optional
        Points at which U^gamma is reported (discrete maximum-principle check).
    tol : float
        KKT tolerance.
    w0 : array, optional
        Warm start.
    K : array, optional
        Precomputed kernel matrix of ``cloud``.

    Raises
    ------
    ValueError
        Empty cloud.  By convention the capacity of the empty set is 0;
        callers that want that value catch this error.
    ConvergenceError
    """
    if len(cloud) == 0:
        raise ValueError("empty cloud: capacity of the empty set is 0 by convention")
    if K is None:
        K = kernel_matrix(model, cloud)
    sol = solve(NnqpProblem(K, np.ones(len(cloud)), tol=tol), w0=w0)
    if not sol.converged:
        raise ConvergenceError(f"equilibrium of {cloud.label!r} did not converge (kkt {sol.kkt.max():.3e})")
    gamma = DiscreteMeasure(cloud, sol.w)
    u = _accel.matvec(K, sol.w)
    supp = gamma.support
    if probes is not None and len(probes):
        up = eval_potential(model, gamma, probes)
        pmin, pmax = float(np.min(up)), float(np.max(up))
    else:
        pmin = pmax = math.nan
    return EquilibriumResult(
        gamma=gamma,
        capacity=gamma.total_mass,
        energy=mutual_energy(model, gamma, gamma),
        node_potential_min=float(np.min(u)),
        node_potential_max=float(np.max(u)),
        support_potential_min=float(np.min(u[supp])) if supp.size else math.nan,
        probe_potential_min=pmin,
        probe_potential_max=pmax,
        interior_mass_fraction=_interior_fraction(gamma),
        kkt=sol.kkt,
        iterations=sol.iterations,
        converged=True,
    )


def capacity(model: KernelModel, cloud: PointCloud, *, tol: float = 1e-10) -> float:
    """Capacity of the node cloud (mass of its equilibrium measure)."""
    return equilibrium(model, cloud, tol=tol).capacity


def support_profile(model: KernelModel, cloud: PointCloud, probes=None, *, tol: float = 1e-10) -> dict:
    """Where the equilibrium mass sits: interior versus boundary nodes.

    Raises
    ------
    ValueError
        If the cloud carries no interior/boundary tags.
    """
    if cloud.tags is None:
        raise ValueError("support_profile needs interior/boundary tags")
    res = equilibrium(model, cloud, probes, tol=tol)
    inner = cloud.tag_mask("interior")
    w = res.gamma.weights
    return {
        "alpha": model.params.alpha,
        "nodes": len(cloud),
        "interior_nodes": int(inner.sum()),
        "capacity": res.capacity,
        "interior_mass_fraction": res.interior_mass_fraction,
        "interior_support_nodes": int(np.count_nonzero(w[inner] > 0)),
        "boundary_support_nodes": int(np.count_nonzero(w[~inner] > 0)),
        "probe_potential_max": res.probe_potential_max,
    }


def reduced_kernel(model: KernelModel, cloud: PointCloud, radius_rule: float = 3.0) -> PointCloud:
    """Drop isolated nodes: those with no other node within ``radius_rule``
    times the cloud's median spacing.

    A neighbour-count heuristic standing in for "every neighbourhood has
    positive capacity"; ``model`` is accepted for interface symmetry.
    """
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if len(cloud) == 1:
        return cloud
    r = radius_rule * float(np.median(cloud.spacing))
    d, _ = cKDTree(cloud.points).query(cloud.points, k=2)
    keep = np.flatnonzero(d[:, 1] <= r)
    if keep.size == len(cloud):
        return cloud
    return cloud.subset(keep, label=f"{cloud.label}:reduced")


def richardson(values, h, order: int = 1) -> float:
    """Extrapolate ``values`` observed at mesh sizes ``h`` to h = 0.

    Fits a polynomial of degree ``order`` in h through the last
    ``order + 1`` observations.
    """
    v = np.asarray(values, dtype=float)
    h = np.asarray(h, dtype=float)
    if len(v) != len(h) or len(v) < order + 1:
        raise ValueError("need at least order + 1 observations")
    V = np.vander(h[-(order + 1):], order + 1)
    coef = np.linalg.solve(V, v[-(order + 1):])
    return float(coef[-1])
