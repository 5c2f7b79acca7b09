"""Point clouds for canonical sets in R^n and the maps acting on them.

All samplers are deterministic.  A cloud stores, per node, a positive length
``spacing`` (nearest-neighbour distance unless the sampler knows better) and an
optional ``tube_radius``: a node with ``tube_radius > 0`` stands for a segment
of a thin tube of that radius whose axis passes through the node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "PointCloud",
    "RefinementLadder",
    "RotationBodySpec",
    "nearest_neighbor_distance",
    "sample_sphere",
    "sample_ball",
    "sample_rotation_body",
    "spherical_cap",
    "invert_cloud",
    "shell_clouds",
    "merge_clouds",
    "sphere_node_count",
]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def nearest_neighbor_distance(points: np.ndarray) -> np.ndarray:
    """Distance from each point to its nearest distinct neighbour (``inf`` for a lone point)."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return np.full(len(points), np.inf)
    dist, _ = cKDTree(points).query(points, k=2)
    return dist[:, 1]


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite node set standing in for a compact subset of R^n.

    Parameters
    ----------
    points : (N, n) array
    spacing : (N,) array
        Positive local length per node, at most twice the nearest-neighbour
        distance.
    label : str
    tags : sequence of str, optional
        Per-node role, e.g. ``"interior"``, ``"boundary"``, ``"axis"``.
    tube_radius : (N,) array, optional
        Zero for ordinary nodes.
    """

    points: np.ndarray
    spacing: np.ndarray
    label: str = ""
    tags: tuple | None = None
    tube_radius: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2) + 0.0  # folds -0.0 into 0.0
        if pts.size == 0:
            pts = pts.reshape(0, max(pts.shape[-1], 3))
        h = np.array(self.spacing, dtype=float).reshape(-1)
        if pts.shape[1] < 3:
            raise ValueError(f"dimension must be >= 3, got {pts.shape[1]}")
        if h.shape[0] != pts.shape[0]:
            raise ValueError("spacing length does not match number of points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates")
        if np.any(~(h > 0)) or not np.all(np.isfinite(h)):
            raise ValueError("spacing must be positive and finite")
        nn = nearest_neighbor_distance(pts)
        if np.any(nn == 0):
            raise ValueError("duplicate nodes in cloud")
        bad = h > 2.0 * nn * (1 + 1e-12)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"spacing {h[i]:g} at node {i} exceeds twice the nearest-neighbour distance {nn[i]:g}")
        tags = None if self.tags is None else tuple(str(t) for t in self.tags)
        if tags is not None and len(tags) != len(pts):
            raise ValueError("tags length does not match number of points")
        r = None
        if self.tube_radius is not None:
            r = np.array(self.tube_radius, dtype=float).reshape(-1)
            if r.shape[0] != len(pts) or np.any(r < 0) or not np.all(np.isfinite(r)):
                raise ValueError("tube_radius must be a nonnegative per-node array")
            if not np.any(r > 0):
                r = None
        for arr in (pts, h, r):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "tube_radius", r)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls, n: int = 3, label: str = "") -> "PointCloud":
        return cls(np.zeros((0, n)), np.zeros(0), label)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def radii(self) -> np.ndarray:
        """Tube radii, zeros for ordinary nodes."""
        if self.tube_radius is None:
            return np.zeros(len(self))
        return np.asarray(self.tube_radius)

    def tag_mask(self, tag: str) -> np.ndarray:
        if self.tags is None:
            raise ValueError(f"cloud {self.label!r} carries no tags")
        return np.array([t == tag for t in self.tags], dtype=bool)

    def subset(self, index, label: str | None = None) -> "PointCloud":
        """Sub-cloud keeping the parent's spacing, tags and tube radii."""
        idx = np.asarray(index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        tags = None if self.tags is None else tuple(self.tags[i] for i in idx)
        r = None if self.tube_radius is None else self.tube_radius[idx]
        return PointCloud(self.points[idx], self.spacing[idx], self.label if label is None else label, tags, r)

    def index_in(self, other: "PointCloud") -> np.ndarray:
        """Index of each of our nodes inside ``other``; -1 where absent (exact coordinate match)."""
        lookup = {p.tobytes(): i for i, p in enumerate(other.points)}
        return np.array([lookup.get(p.tobytes(), -1) for p in self.points], dtype=int)

    def is_subset_of(self, other: "PointCloud") -> bool:
        return bool(np.all(self.index_in(other) >= 0))

    def scaled(self, factor: float, center=None) -> "PointCloud":
        c = np.zeros(self.n) if center is None else np.asarray(center, float)
        r = None if self.tube_radius is None else self.tube_radius * factor
        return PointCloud(c + factor * (self.points - c), self.spacing * factor, self.label, self.tags, r)

    def to_dict(self) -> dict:
        d = {
            "n": int(self.n),
            "points": self.points.tolist(),
            "spacing": self.spacing.tolist(),
            "tags": list(self.tags) if self.tags is not None else [],
            "label": self.label,
        }
        if self.tube_radius is not None:
            d["tube_radius"] = self.tube_radius.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PointCloud":
        n = int(d["n"])
        pts = np.asarray(d["points"], dtype=float).reshape(-1, n)
        tags = d.get("tags") or None
        return cls(pts, d["spacing"], d.get("label", ""), tags, d.get("tube_radius"))


@dataclass(frozen=True)
class RefinementLadder:
    """Clouds of one continuum set with strictly shrinking max spacing."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if len(levels) < 2:
            raise ValueError("a ladder needs at least 2 levels")
        hmax = [float(np.max(c.spacing)) for c in levels]
        for a, b in zip(hmax, hmax[1:]):
            if not b * 1.5 <= a * (1 + 1e-12):
                raise ValueError(f"max spacing must shrink by >= 1.5 per level, got {a:g} -> {b:g}")
        object.__setattr__(self, "levels", levels)

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


# ---------------------------------------------------------------------------
# spheres and balls
# ---------------------------------------------------------------------------

def sphere_node_count(level: int) -> int:
    # x3 per level keeps a four-level ladder under 3000 nodes
    return 110 * 3 ** level


def _fibonacci_sphere(count: int) -> np.ndarray:
    k = np.arange(count, dtype=float)
    z = 1.0 - (2.0 * k + 1.0) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * GOLDEN_ANGLE
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _cube_sphere(n: int, level: int) -> np.ndarray:
    """Grid on the surface of [-1, 1]^n projected radially onto the unit sphere."""
    m = int(round(4 * math.sqrt(3.0) ** level)) + 1
    ticks = np.linspace(-1.0, 1.0, m)
    faces = []
    grid = np.stack(np.meshgrid(*([ticks] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    for axis in range(n):
        for sign in (-1.0, 1.0):
            pts = np.insert(grid, axis, sign, axis=1)
            faces.append(pts)
    pts = np.unique(np.round(np.concatenate(faces), 12), axis=0)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def sample_sphere(center, radius: float, level: int, *, generic: bool = False) -> PointCloud:
    """Quasi-uniform nodes on the sphere S(center, radius).

    In R^3 a golden-angle spiral with ``110 * 3**level`` nodes is used.  Other
    dimensions need ``generic=True``, which projects a cube-surface lattice.
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    n = center.shape[0]
    if not radius > 0:
        raise ValueError("radius must be positive")
    if level < 0:
        raise ValueError("level must be >= 0")
    if generic:
        unit = _cube_sphere(n, level)
    elif n == 3:
        unit = _fibonacci_sphere(sphere_node_count(level))
    else:
        raise ValueError(f"built-in quasi-uniform scheme is 3-d only; pass generic=True for n={n}")
    pts = center + radius * unit
    h = nearest_neighbor_distance(pts)
    return PointCloud(pts, h, f"sphere(r={radius:g},L={level})", ("boundary",) * len(pts))


def sample_ball(center, radius: float, level: int, *, lattice_factor: float = 1.0,
                gap: float = 0.5) -> PointCloud:
    """Closed ball: sphere nodes (tagged ``boundary``) plus a cubic interior lattice.

    The lattice pitch is ``lattice_factor`` times the mean boundary spacing and
    interior nodes keep a distance ``gap * pitch`` from the sphere.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float).reshape(-1)
    shell = sample_sphere(center, radius, level)
    pitch = lattice_factor * float(np.mean(shell.spacing))
    m = int(math.floor(radius / pitch))
    ticks = pitch * np.arange(-m, m + 1)
    grid = np.stack(np.meshgrid(*([ticks] * len(center)), indexing="ij"), axis=-1).reshape(-1, len(center))
    grid = grid[np.linalg.norm(grid, axis=1) <= radius - gap * pitch + 1e-12]
    pts = np.concatenate([shell.points, center + grid])
    tags = ("boundary",) * len(shell) + ("interior",) * len(grid)
    h = nearest_neighbor_distance(pts)
    return PointCloud(pts, h, f"ball(r={radius:g},L={level})", tags)


def spherical_cap(cloud: PointCloud, center, axis, angle: float, label: str | None = None) -> PointCloud:
    """Nodes of ``cloud`` within polar ``angle`` (radians) of ``axis`` as seen from ``center``."""
    center = np.asarray(center, dtype=float)
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    v = cloud.points - center
    r = np.linalg.norm(v, axis=1)
    # the center itself counts as inside every cap
    cosang = np.divide(v @ axis, r, out=np.ones(len(r)), where=r > 0)
    keep = cosang >= math.cos(angle) - 1e-12
    return cloud.subset(keep, label or f"{cloud.label}|cap({angle:.4g})")


# ---------------------------------------------------------------------------
# rotation bodies
# ---------------------------------------------------------------------------

_PROFILES = ("power", "stretched_exp", "super_exp")


@dataclass(frozen=True)
class RotationBodySpec:
    """Body {0 <= x1 <= x1_max, x2^2 + x3^2 <= rho(x1)^2}.

    ``power``: rho = x1**-s (s >= 0); ``stretched_exp``: rho = exp(-x1**s),
    0 < s <= 1; ``super_exp``: rho = exp(-x1**s), s > 1.  The power profile is
    capped at ``rho_max`` near x1 = 0.  ``density`` is the level-0 node
    spacing; it shrinks by 1.5 per level.
    """

    profile: str
    s: float
    x1_max: float
    density: float = 0.5
    rho_max: float = 1.0

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ValueError(f"profile must be one of {_PROFILES}")
        if not self.x1_max > 1:
            raise ValueError("x1_max must exceed 1")
        if self.profile == "power" and not self.s >= 0:
            raise ValueError("power profile needs s >= 0")
        if self.profile == "stretched_exp" and not 0 < self.s <= 1:
            raise ValueError("stretched_exp profile needs 0 < s <= 1")
        if self.profile == "super_exp" and not self.s > 1:
            raise ValueError("super_exp profile needs s > 1")
        if not (self.density > 0 and self.rho_max > 0):
            raise ValueError("density and rho_max must be positive")

    def rho(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.profile == "power":
            if self.s == 0:
                return np.minimum(np.ones_like(x1), self.rho_max)
            with np.errstate(divide="ignore"):
                return np.minimum(x1 ** (-self.s), self.rho_max)
        return np.minimum(np.exp(-(x1 ** self.s)), self.rho_max)


def sample_rotation_body(spec: RotationBodySpec, level: int) -> PointCloud:
    """Fill the rotation body with stacked rings of nodes.

    Stations sit at uniform axial pitch ``h``.  Where rho >= h a station holds
    concentric rings at radii rho, rho - h, ... and a centre node; where the
    tube is thinner than ``h`` it degenerates to one axis node carrying
    ``tube_radius = rho`` and ``spacing = h``.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    h_target = spec.density / 1.5 ** level
    m = int(math.ceil(spec.x1_max / h_target))
    xs = np.linspace(0.0, spec.x1_max, m + 1)
    h = spec.x1_max / m
    rhos = spec.rho(xs)
    pts, tags, radii, spacing = [], [], [], []
    for j, (x, rho) in enumerate(zip(xs, rhos)):
        end = j == 0 or j == m
        if rho < h:
            pts.append((x, 0.0, 0.0))
            tags.append("axis")
            radii.append(float(rho))
            spacing.append(h)
            continue
        r = float(rho)
        ring = 0
        while r > 0.5 * h:
            cnt = max(3, int(round(2 * math.pi * r / h)))
            phase = (0.5 * (j % 2)) * 2 * math.pi / cnt
            ang = phase + 2 * math.pi * np.arange(cnt) / cnt
            for a in ang:
                pts.append((x, r * math.cos(a), r * math.sin(a)))
                tags.append("boundary" if (ring == 0 or end) else "interior")
                radii.append(0.0)
                spacing.append(np.nan)
            r -= h
            ring += 1
        pts.append((x, 0.0, 0.0))
        tags.append("boundary" if end else "interior")
        radii.append(0.0)
        spacing.append(np.nan)
    pts = np.asarray(pts)
    spacing = np.asarray(spacing)
    nn = nearest_neighbor_distance(pts)
    fill = np.isnan(spacing)
    spacing[fill] = nn[fill]
    spacing = np.minimum(spacing, 2.0 * nn)
    label = f"rotation({spec.profile},s={spec.s:g},x1max={spec.x1_max:g},L={level})"
    return PointCloud(pts, spacing, label, tuple(tags), np.asarray(radii))


# ---------------------------------------------------------------------------
# inversion and shells
# ---------------------------------------------------------------------------

def invert_cloud(cloud: PointCloud, y) -> PointCloud:
    """Image of ``cloud`` under the inversion x -> y + (x - y)/|x - y|^2.

    Spacings are recomputed from image nearest-neighbour distances; tube
    radii scale with the local dilation 1/|x - y|^2.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != cloud.n:
        raise ValueError("centre dimension does not match cloud")
    v = cloud.points - y
    d2 = np.einsum("ij,ij->i", v, v)
    if np.any(d2 == 0):
        raise ValueError("inversion centre coincides with a node")
    img = y + v / d2[:, None]
    if len(cloud) >= 2:
        h = nearest_neighbor_distance(img)
    else:
        h = cloud.spacing / d2
    r = None if cloud.tube_radius is None else cloud.tube_radius / d2
    return PointCloud(img, h, f"inv({cloud.label})", cloud.tags, r)


def shell_clouds(cloud: PointCloud, center, q: float, k_range: Sequence[int]) -> list:
    """Split ``cloud`` into radial shells about ``center``.

    For q > 1 shell k is q^k <= |x - c| < q^(k+1); for 0 < q < 1 it is
    q^(k+1) < |x - c| <= q^k.  ``k_range`` is an inclusive pair (k_min, k_max).
    Nodes outside every shell are dropped.
    """
    if q <= 0 or q == 1:
        raise ValueError("q must be positive and different from 1")
    k_min, k_max = (int(k) for k in k_range)
    if k_max < k_min:
        raise ValueError("empty k_range")
    d = np.linalg.norm(cloud.points - np.asarray(center, dtype=float), axis=1)
    out = []
    for k in range(k_min, k_max + 1):
        lo, hi = q ** k, q ** (k + 1)
        if q > 1:
            mask = (d >= lo) & (d < hi)
        else:
            mask = (d > hi) & (d <= lo)
        out.append(cloud.subset(mask, f"{cloud.label}|shell{k}"))
    return out


def merge_clouds(clouds: Iterable[PointCloud], label: str = "") -> PointCloud:
    """Concatenate clouds, keeping each node's spacing capped at its new nearest-neighbour distance."""
    clouds = list(clouds)
    pts = np.concatenate([c.points for c in clouds])
    h = np.concatenate([c.spacing for c in clouds])
    h = np.minimum(h, nearest_neighbor_distance(pts))
    tags = None
    if all(c.tags is not None for c in clouds):
        tags = sum((c.tags for c in clouds), ())
    radii = np.concatenate([c.radii for c in clouds])
    return PointCloud(pts, h, label, tags, radii)
