"""Object assets: spec schema, signed-distance queries, rigid-body dynamics,
and the YAML asset catalog.

Shapes are desk-scale primitives; ``mesh_lite`` approximates irregular
meshes as a union of spheres. All SDF queries are in the object's local
frame with the shape centered at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from ..errors import ConfigurationError
from ..transforms import integrate_quat, quat_rotate, quat_to_matrix

SHAPES = ("box", "sphere", "cylinder", "capsule", "mesh_lite")
MATERIALS = ("rigid", "deformable")


@dataclass
class ObjectSpec:
    """Geometry and material description of one graspable object.

    ``scale`` is the full extent along each local axis [m]. Deformable
    objects carry positive stiffness/damping and a lattice resolution;
    ``kinematic`` marks immovable test fixtures (welded objects).
    """

    name: str
    shape: str
    scale: tuple = (0.06, 0.06, 0.06)
    mass: float = 0.1
    friction: float = 0.8
    material: str = "rigid"
    stiffness: float = 0.0      # spring constant per lattice edge [N/m]
    damping: float = 0.25       # spring damping ratio
    node_resolution: int = 0
    spheres: list = field(default_factory=list)  # mesh_lite: [[cx,cy,cz,r], ...]
    kinematic: bool = False

    def __post_init__(self):
        self.scale = tuple(float(s) for s in self.scale)
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if self.material not in MATERIALS:
            raise ConfigurationError(f"unknown material {self.material!r}")
        if self.mass <= 0.0:
            raise ConfigurationError("mass must be positive")
        if self.friction < 0.0:
            raise ConfigurationError("friction must be nonnegative")
        if len(self.scale) != 3 or any(s <= 0 for s in self.scale):
            raise ConfigurationError("scale must be three positive extents")
        if self.material == "deformable":
            if self.stiffness <= 0.0:
                raise ConfigurationError("deformable objects need positive stiffness")
            if self.node_resolution < 2:
                raise ConfigurationError("deformable objects need node_resolution >= 2")
        if self.shape == "mesh_lite" and not self.spheres:
            raise ConfigurationError("mesh_lite objects need a sphere list")

    @property
    def is_deformable(self) -> bool:
        return self.material == "deformable"

    @property
    def max_extent(self) -> float:
        return max(self.scale)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "shape": self.shape, "scale": list(self.scale),
            "mass": self.mass, "friction": self.friction, "material": self.material,
            "stiffness": self.stiffness, "damping": self.damping,
            "node_resolution": self.node_resolution,
            "spheres": [list(s) for s in self.spheres], "kinematic": self.kinematic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectSpec":
        return cls(**d)


def size_class(spec: ObjectSpec, small_max: float = 0.05,
               large_min: float = 0.10) -> str:
    """Bucket an object by its maximum extent: small/medium/large."""
    e = spec.max_extent
    if e < small_max:
        return "small"
    if e > large_min:
        return "large"
    return "medium"


def load_catalog(path) -> dict:
    """Load every object spec from a YAML catalog file or directory.

    Returns a name-keyed dict; duplicate names are a configuration error.
    """
    import pathlib
    p = pathlib.Path(path)
    files = sorted(p.glob("*.yaml")) if p.is_dir() else [p]
    if not files:
        raise ConfigurationError(f"no asset files found at {path}")
    catalog: dict[str, ObjectSpec] = {}
    for f in files:
        with open(f) as fh:
            docs = yaml.safe_load(fh)
        entries = docs if isinstance(docs, list) else [docs]
        for entry in entries:
            if entry is None:
                continue
            try:
                spec = ObjectSpec.from_dict(entry)
            except TypeError as e:
                raise ConfigurationError(f"bad asset entry in {f}: {e}") from e
            if spec.name in catalog:
                raise ConfigurationError(f"duplicate asset name {spec.name!r}")
            catalog[spec.name] = spec
    return catalog


def save_catalog(path, specs) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump([s.to_dict() for s in specs], fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Signed distance queries (local frame, shape centered at origin)
# ---------------------------------------------------------------------------

def sdf_local(spec: ObjectSpec, p: np.ndarray):
    """Signed distance and outward unit normal at local point p."""
    x, y, z = p
    if spec.shape == "sphere":
        r = spec.scale[0] / 2.0
        d = math.sqrt(x * x + y * y + z * z)
        if d < 1e-12:
            return -r, np.array([0.0, 0.0, 1.0])
        return d - r, np.asarray(p) / d
    if spec.shape == "box":
        h = np.asarray(spec.scale) / 2.0
        q = np.abs(p) - h
        outside = np.maximum(q, 0.0)
        dist_out = float(np.linalg.norm(outside))
        if dist_out > 0.0:
            n = np.sign(p) * outside / dist_out
            return dist_out, n
        k = int(np.argmax(q))
        n = np.zeros(3)
        n[k] = math.copysign(1.0, p[k])
        return float(q[k]), n
    if spec.shape == "cylinder":
        r = spec.scale[0] / 2.0
        hh = spec.scale[2] / 2.0
        rad = math.sqrt(x * x + y * y)
        qr, qz = rad - r, abs(z) - hh
        radial = (np.array([x, y, 0.0]) / rad) if rad > 1e-12 else np.array([1.0, 0.0, 0.0])
        axial = np.array([0.0, 0.0, math.copysign(1.0, z) if z != 0 else 1.0])
        if qr > 0.0 and qz > 0.0:  # edge region
            d = math.hypot(qr, qz)
            return d, (radial * qr + axial * qz) / d
        if qr > qz:
            return qr, radial
        return qz, axial
    if spec.shape == "capsule":
        r = spec.scale[0] / 2.0
        a = max(spec.scale[2] / 2.0 - r, 0.0)  # half segment length
        cz = min(max(z, -a), a)
        delta = np.array([x, y, z - cz])
        d = float(np.linalg.norm(delta))
        if d < 1e-12:
            return -r, np.array([0.0, 0.0, 1.0])
        return d - r, delta / d
    if spec.shape == "mesh_lite":
        best, n_best = math.inf, np.array([0.0, 0.0, 1.0])
        for cx, cy, cz_, rr in spec.spheres:
            delta = np.array([x - cx, y - cy, z - cz_])
            d = float(np.linalg.norm(delta))
            sd = d - rr
            if sd < best:
                best = sd
                n_best = delta / d if d > 1e-12 else np.array([0.0, 0.0, 1.0])
        return best, n_best
    raise ConfigurationError(f"unknown shape {spec.shape!r}")


def sdf_local_batch(spec: ObjectSpec, P: np.ndarray):
    """Vectorized signed distance and outward normals for points (N, 3)."""
    P = np.asarray(P, dtype=float)
    if spec.shape == "sphere":
        r = spec.scale[0] / 2.0
        d = np.linalg.norm(P, axis=1)
        safe = np.maximum(d, 1e-12)
        n = P / safe[:, None]
        n[d < 1e-12] = [0.0, 0.0, 1.0]
        return d - r, n
    if spec.shape == "box":
        h = np.asarray(spec.scale) / 2.0
        q = np.abs(P) - h
        outside = np.maximum(q, 0.0)
        dist_out = np.linalg.norm(outside, axis=1)
        inner = np.max(q, axis=1)
        d = np.where(dist_out > 0.0, dist_out, inner)
        n = np.sign(P) * outside / np.maximum(dist_out, 1e-12)[:, None]
        inside = dist_out <= 0.0
        if np.any(inside):
            k = np.argmax(q[inside], axis=1)
            n_in = np.zeros((int(inside.sum()), 3))
            n_in[np.arange(len(k)), k] = np.copysign(1.0, P[inside, k])
            n[inside] = n_in
        return d, n
    if spec.shape == "capsule":
        r = spec.scale[0] / 2.0
        a = max(spec.scale[2] / 2.0 - r, 0.0)
        cz = np.clip(P[:, 2], -a, a)
        delta = P.copy()
        delta[:, 2] -= cz
        d = np.linalg.norm(delta, axis=1)
        safe = np.maximum(d, 1e-12)
        n = delta / safe[:, None]
        n[d < 1e-12] = [0.0, 0.0, 1.0]
        return d - r, n
    if spec.shape == "mesh_lite":
        centers = np.asarray([s[:3] for s in spec.spheres])
        radii = np.asarray([s[3] for s in spec.spheres])
        delta = P[:, None, :] - centers[None, :, :]
        dist = np.linalg.norm(delta, axis=2)
        sd = dist - radii[None, :]
        best = np.argmin(sd, axis=1)
        rows = np.arange(len(P))
        n = delta[rows, best] / np.maximum(dist[rows, best], 1e-12)[:, None]
        return sd[rows, best], n
    # cylinder: loop over the scalar query (edge handling is branchy)
    d = np.empty(len(P))
    n = np.empty((len(P), 3))
    for i, p in enumerate(P):
        d[i], n[i] = sdf_local(spec, p)
    return d, n


def support_points_local(spec: ObjectSpec) -> np.ndarray:
    """Candidate ground-contact points on the surface, local frame.

    Coarse but sufficient for stable resting: corners for boxes, rim and
    face samples for cylinders, endpoint spheres for capsules, sphere
    centers (offset by radius at query time) for mesh_lite.
    """
    if spec.shape == "sphere":
        return np.zeros((1, 3))  # treated as a ball center with radius
    if spec.shape == "box":
        h = np.asarray(spec.scale) / 2.0
        pts = [[sx * h[0], sy * h[1], sz * h[2]]
               for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
        return np.asarray(pts, dtype=float)
    if spec.shape == "cylinder":
        r = spec.scale[0] / 2.0
        hh = spec.scale[2] / 2.0
        pts = []
        for sz in (-1, 1):
            pts.append([0.0, 0.0, sz * hh])
            for k in range(8):
                a = 2 * math.pi * k / 8
                pts.append([r * math.cos(a), r * math.sin(a), sz * hh])
        return np.asarray(pts)
    if spec.shape == "capsule":
        a = max(spec.scale[2] / 2.0 - spec.scale[0] / 2.0, 0.0)
        return np.array([[0.0, 0.0, -a], [0.0, 0.0, a]])
    if spec.shape == "mesh_lite":
        return np.asarray([s[:3] for s in spec.spheres], dtype=float)
    raise ConfigurationError(f"unknown shape {spec.shape!r}")


def support_balls_local(spec: ObjectSpec):
    """Ground-contact query balls: (centers (n, 3), radii (n,)), local frame."""
    pts = support_points_local(spec)
    if spec.shape in ("sphere", "capsule"):
        radii = np.full(len(pts), spec.scale[0] / 2.0)
    elif spec.shape == "mesh_lite":
        radii = np.asarray([s[3] for s in spec.spheres], dtype=float)
    else:
        radii = np.zeros(len(pts))  # box corners / cylinder rim lie on the surface
    return pts, radii


def inertia_local(spec: ObjectSpec) -> np.ndarray:
    """Diagonal body-frame inertia [kg m^2]; capsules approximated as
    cylinders of the same bounding height."""
    m = spec.mass
    sx, sy, sz = spec.scale
    if spec.shape == "sphere":
        i = 0.4 * m * (sx / 2.0) ** 2
        return np.array([i, i, i])
    if spec.shape == "box":
        return (m / 12.0) * np.array([sy ** 2 + sz ** 2,
                                      sx ** 2 + sz ** 2,
                                      sx ** 2 + sy ** 2])
    if spec.shape in ("cylinder", "capsule"):
        r = sx / 2.0
        h = sz
        ixy = m * (3 * r * r + h * h) / 12.0
        iz = 0.5 * m * r * r
        return np.array([ixy, ixy, iz])
    if spec.shape == "mesh_lite":
        centers = np.asarray([s[:3] for s in spec.spheres])
        radii = np.asarray([s[3] for s in spec.spheres])
        vols = radii ** 3
        masses = m * vols / vols.sum()
        inertia = np.zeros(3)
        for c, r_, mm in zip(centers, radii, masses):
            own = 0.4 * mm * r_ * r_
            d2 = np.sum(c * c) - c * c  # parallel-axis per-axis offsets
            inertia += own + mm * d2
        return inertia
    raise ConfigurationError(f"unknown shape {spec.shape!r}")


class RigidBody:
    """6-DoF rigid object with semi-implicit integration.

    Kinematic bodies (welded fixtures) never move but still answer
    geometric queries.
    """

    def __init__(self, spec: ObjectSpec, position, orientation=None):
        self.spec = spec
        self.position = np.asarray(position, dtype=float)
        self.orientation = (np.array([1.0, 0.0, 0.0, 0.0]) if orientation is None
                            else np.asarray(orientation, dtype=float))
        self.linear_velocity = np.zeros(3)
        self.angular_velocity = np.zeros(3)
        self.inertia_body = inertia_local(spec)
        self._force = np.zeros(3)
        self._torque = np.zeros(3)

    def apply_force(self, force, point=None) -> None:
        """Accumulate a world-frame force; torque arises when a world
        application point is given."""
        self._force += force
        if point is not None:
            self._torque += np.cross(np.asarray(point) - self.position, force)

    def apply_torque(self, torque) -> None:
        self._torque += torque

    def step(self, h: float, gravity: float) -> None:
        if not self.spec.kinematic:
            accel = self._force / self.spec.mass + np.array([0.0, 0.0, -gravity])
            self.linear_velocity = self.linear_velocity + h * accel
            R = quat_to_matrix(self.orientation)
            inertia_world = R @ np.diag(self.inertia_body) @ R.T
            gyro = np.cross(self.angular_velocity, inertia_world @ self.angular_velocity)
            ang_accel = np.linalg.solve(inertia_world, self._torque - gyro)
            self.angular_velocity = self.angular_velocity + h * ang_accel
            # clamp spin to keep the explicit gyroscopic term stable
            w = np.linalg.norm(self.angular_velocity)
            if w > 50.0:
                self.angular_velocity *= 50.0 / w
            self.position = self.position + h * self.linear_velocity
            self.orientation = integrate_quat(self.orientation, self.angular_velocity, h)
        self._force[:] = 0.0
        self._torque[:] = 0.0

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def world_to_local(self, p_world: np.ndarray) -> np.ndarray:
        R = quat_to_matrix(self.orientation)
        return R.T @ (np.asarray(p_world) - self.position)

    def point_velocity(self, p_world: np.ndarray) -> np.ndarray:
        return self.linear_velocity + np.cross(self.angular_velocity,
                                               np.asarray(p_world) - self.position)

    def sdf_world(self, p_world: np.ndarray):
        """Signed distance and world-frame outward normal at a world point."""
        d, n_local = sdf_local(self.spec, self.world_to_local(p_world))
        return d, quat_rotate(self.orientation, n_local)

    def sdf_world_batch(self, P_world: np.ndarray):
        """Vectorized sdf_world for points (N, 3)."""
        R = quat_to_matrix(self.orientation)
        local = (np.asarray(P_world, dtype=float) - self.position) @ R
        d, n_local = sdf_local_batch(self.spec, local)
        return d, n_local @ R.T

    def rest_height(self, ground_z: float = 0.0, k_normal: float = 3000.0,
                    gravity: float = 9.81) -> float:
        """Spawn height (CoM z) at which ground penalty balances gravity."""
        pts, radii = support_balls_local(self.spec)
        lows = pts[:, 2] - radii
        clearance = -float(np.min(lows))
        if self.spec.kinematic:
            return ground_z + clearance
        # share weight over the support points that actually rest on the plane
        n_support = max(1, int(np.sum(np.abs(lows + clearance) < 1e-9)))
        pen = self.spec.mass * gravity / (k_normal * n_support)
        return ground_z + clearance - pen

    def snapshot(self) -> dict:
        return {
            "position": self.position.copy(),
            "orientation": self.orientation.copy(),
            "linear_velocity": self.linear_velocity.copy(),
            "angular_velocity": self.angular_velocity.copy(),
        }

    def restore(self, snap: dict) -> None:
        self.position = snap["position"].copy()
        self.orientation = snap["orientation"].copy()
        self.linear_velocity = snap["linear_velocity"].copy()
        self.angular_velocity = snap["angular_velocity"].copy()
