"""Parameter spaces, grids, unit-cube scaling, and quasi-random initial designs.

All algorithm math in this package operates on the unit cube [0, 1]^d.
Native parameter units exist only at presentation and logging boundaries,
and the functions here own the conversion in both directions.
"""
from __future__ import annotations

import importlib.resources
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import CapacityError, ConfigError, ContractViolation

COORD_TOL = 1e-12
GRID_NODE_CAP = 10**7


@dataclass(frozen=True)
class ParameterSpec:
    """One named, bounded parameter in native units."""

    name: str
    lower: float
    upper: float
    unit_label: str = ""

    def __post_init__(self):
        if not self.name:
            raise ContractViolation("parameter name must be nonempty")
        if not self.lower < self.upper:
            raise ContractViolation(
                f"parameter {self.name!r}: lower ({self.lower}) must be "
                f"strictly below upper ({self.upper})"
            )


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered collection of parameters, either continuous or discretized.

    In grid mode every dimension carries ``points_per_dim`` equally spaced
    nodes (including both endpoints of the unit interval).
    """

    specs: tuple[ParameterSpec, ...]
    mode: str = "continuous"
    points_per_dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if len(self.specs) < 1:
            raise ContractViolation("a space needs at least one parameter")
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise ContractViolation(f"duplicate parameter names in {names}")
        if self.mode not in ("continuous", "grid"):
            raise ContractViolation(f"unknown mode {self.mode!r}")
        if self.mode == "grid":
            if self.points_per_dim is None or self.points_per_dim < 2:
                raise ContractViolation("grid mode requires points_per_dim >= 2")
        elif self.points_per_dim is not None:
            raise ContractViolation("points_per_dim only applies to grid mode")

    @property
    def dimension(self) -> int:
        return len(self.specs)

    @property
    def lower_bounds(self) -> np.ndarray:
        return np.array([s.lower for s in self.specs])

    @property
    def upper_bounds(self) -> np.ndarray:
        return np.array([s.upper for s in self.specs])


@dataclass(frozen=True)
class Configuration:
    """A point in the unit cube [0, 1]^d."""

    coords: tuple[float, ...]

    def __post_init__(self):
        clamped = []
        for c in self.coords:
            if not (-COORD_TOL <= c <= 1.0 + COORD_TOL) or not math.isfinite(c):
                raise ContractViolation(f"coordinate {c} outside [0, 1] +- {COORD_TOL}")
            clamped.append(min(1.0, max(0.0, float(c))))
        object.__setattr__(self, "coords", tuple(clamped))

    @classmethod
    def from_array(cls, arr: Iterable[float]) -> "Configuration":
        return cls(tuple(float(v) for v in arr))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)

    @property
    def dimension(self) -> int:
        return len(self.coords)


def configs_to_matrix(configs: Sequence[Configuration]) -> np.ndarray:
    """Stack configurations into an (n, d) coordinate matrix."""
    if not configs:
        raise ContractViolation("need at least one configuration")
    return np.array([c.coords for c in configs])


def same_point(a: Configuration, b: Configuration, tol: float = 1e-10) -> bool:
    """Coordinate-wise equality within tolerance (the dedup rule)."""
    if a.dimension != b.dimension:
        return False
    return all(abs(x - y) <= tol for x, y in zip(a.coords, b.coords))


def _check_dim(space: ParameterSpace, x: Configuration) -> None:
    if x.dimension != space.dimension:
        raise ContractViolation(
            f"configuration has dimension {x.dimension}, space has {space.dimension}"
        )


def to_native(space: ParameterSpace, x: Configuration) -> np.ndarray:
    """Map unit-cube coordinates to native units, component-wise affine."""
    _check_dim(space, x)
    lo, hi = space.lower_bounds, space.upper_bounds
    return lo + x.array * (hi - lo)


def from_native(space: ParameterSpace, values: Iterable[float]) -> Configuration:
    """Inverse of :func:`to_native`; round-trips within 1e-12."""
    vals = np.asarray(list(values), dtype=float)
    if vals.shape != (space.dimension,):
        raise ContractViolation(
            f"native vector has shape {vals.shape}, expected ({space.dimension},)"
        )
    lo, hi = space.lower_bounds, space.upper_bounds
    return Configuration.from_array((vals - lo) / (hi - lo))


def grid_nodes_1d(points_per_dim: int) -> np.ndarray:
    # same arithmetic as snap_to_grid (idx / n), so node floats match exactly
    return np.arange(points_per_dim) / (points_per_dim - 1)


def snap_to_grid(space: ParameterSpace, x: Configuration) -> Configuration:
    """Replace each coordinate by its nearest grid node, ties toward the lower node."""
    if space.mode != "grid":
        raise ContractViolation("snap_to_grid requires a grid-mode space")
    _check_dim(space, x)
    n = space.points_per_dim - 1
    snapped = []
    for c in x.coords:
        # ceil(t - 0.5) rounds to nearest with exact .5 ties going down
        idx = min(n, max(0, math.ceil(c * n - 0.5)))
        snapped.append(idx / n)
    return Configuration(tuple(snapped))


def make_grid(space: ParameterSpace) -> list[Configuration]:
    """Full Cartesian grid in deterministic lexicographic order."""
    if space.mode != "grid":
        raise ContractViolation("make_grid requires a grid-mode space")
    total = space.points_per_dim**space.dimension
    if total > GRID_NODE_CAP:
        raise CapacityError(
            f"grid of {total} nodes exceeds the cap of {GRID_NODE_CAP}; "
            "use continuous mode or fewer points per dimension"
        )
    nodes = grid_nodes_1d(space.points_per_dim)
    mesh = np.meshgrid(*([nodes] * space.dimension), indexing="ij")
    flat = np.stack([m.ravel() for m in mesh], axis=-1)
    return [Configuration(tuple(row)) for row in flat]


def sobol_engine(space: ParameterSpace, seed: int, scramble: bool = True) -> qmc.Sobol:
    """Seeded Sobol engine over the space's unit cube."""
    return qmc.Sobol(d=space.dimension, scramble=scramble, seed=seed)


def sobol_points(
    space: ParameterSpace, count: int, seed: int, scramble: bool = True
) -> list[Configuration]:
    """Quasi-random Sobol points; snapped to the grid in grid mode."""
    if count < 1:
        raise ContractViolation("count must be >= 1")
    engine = sobol_engine(space, seed, scramble)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-2 draws are fine here
        raw = engine.random(count)
    pts = [Configuration.from_array(row) for row in raw]
    if space.mode == "grid":
        pts = [snap_to_grid(space, p) for p in pts]
    return pts


def uniform_points(space: ParameterSpace, count: int, seed: int) -> list[Configuration]:
    """Plain uniform-random alternative to :func:`sobol_points`."""
    if count < 1:
        raise ContractViolation("count must be >= 1")
    rng = np.random.default_rng(seed)
    pts = [Configuration.from_array(row) for row in rng.random((count, space.dimension))]
    if space.mode == "grid":
        pts = [snap_to_grid(space, p) for p in pts]
    return pts


def space_to_dict(space: ParameterSpace, name: str = "") -> dict:
    out = {
        "name": name,
        "specs": [
            {"name": s.name, "lower": s.lower, "upper": s.upper, "unit_label": s.unit_label}
            for s in space.specs
        ],
        "mode": space.mode,
    }
    if space.points_per_dim is not None:
        out["points_per_dim"] = space.points_per_dim
    return out


def space_from_dict(data: dict) -> ParameterSpace:
    try:
        specs = tuple(
            ParameterSpec(
                name=s["name"],
                lower=float(s["lower"]),
                upper=float(s["upper"]),
                unit_label=s.get("unit_label", ""),
            )
            for s in data["specs"]
        )
        return ParameterSpace(
            specs=specs,
            mode=data.get("mode", "continuous"),
            points_per_dim=data.get("points_per_dim"),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed parameter-space definition: {exc}") from exc


def load_preset(
    name_or_path: str,
    mode: str | None = None,
    points_per_dim: int | None = None,
) -> ParameterSpace:
    """Load a bundled preset by name, or any preset file by path.

    ``mode``/``points_per_dim`` override the file's discretization so one
    preset serves both grid-restricted and continuous sessions.
    """
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        data = json.loads(path.read_text())
    else:
        resource = importlib.resources.files("preftune.presets").joinpath(
            f"{name_or_path}.json"
        )
        if not resource.is_file():
            raise ConfigError(f"unknown preset {name_or_path!r}")
        data = json.loads(resource.read_text())
    if mode is not None:
        data["mode"] = mode
        if mode == "continuous":
            data.pop("points_per_dim", None)
    if points_per_dim is not None:
        data["mode"] = "grid"
        data["points_per_dim"] = points_per_dim
    return space_from_dict(data)
