"""Uniform configuration-space grids on (q1, q2, x)."""

from dataclasses import dataclass

import numpy as np

MIN_POINTS = 8


@dataclass(frozen=True)
class Axis:
    lower: float
    upper: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_POINTS:
            raise ValueError(f"axis needs an integer point count >= {MIN_POINTS}, got {self.n}")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.upper <= self.lower:
            raise ValueError(f"axis bounds must be finite with upper > lower, got [{self.lower}, {self.upper}]")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.n)

    def nearest_index(self, value: float) -> int:
        i = int(round((value - self.lower) / self.spacing))
        return min(max(i, 0), self.n - 1)

    def refined(self) -> "Axis":
        """Same extent, half the spacing."""
        return Axis(self.lower, self.upper, 2 * self.n - 1)

    @classmethod
    def symmetric(cls, half_width: float, n: int, center: float = 0.0) -> "Axis":
        return cls(center - half_width, center + half_width, n)

    def to_list(self):
        return [self.lower, self.upper, self.n]


@dataclass(frozen=True)
class Grid:
    """Product grid over the three configuration coordinates.

    Arrays living on a grid are indexed ``[i_q1, i_q2, i_x]``. The labels
    only matter for reporting; the fully classical analog uses
    ``("x1", "x2", "x")``.
    """

    q1: Axis
    q2: Axis
    x: Axis
    labels: tuple = ("q1", "q2", "x")

    @property
    def axes(self):
        return (self.q1, self.q2, self.x)

    @property
    def shape(self):
        return (self.q1.n, self.q2.n, self.x.n)

    @property
    def spacings(self):
        return tuple(a.spacing for a in self.axes)

    @property
    def cell_volume(self) -> float:
        return self.q1.spacing * self.q2.spacing * self.x.spacing

    @property
    def q_cell(self) -> float:
        return self.q1.spacing * self.q2.spacing

    def mesh(self, sparse=True):
        return np.meshgrid(self.q1.points, self.q2.points, self.x.points, indexing="ij", sparse=sparse)

    def refined(self) -> "Grid":
        return Grid(self.q1.refined(), self.q2.refined(), self.x.refined(), self.labels)

    def relabeled(self, labels) -> "Grid":
        return Grid(self.q1, self.q2, self.x, tuple(labels))

    def to_dict(self):
        return {"labels": list(self.labels), "q1": self.q1.to_list(),
                "q2": self.q2.to_list(), "x": self.x.to_list()}

    @classmethod
    def from_dict(cls, d):
        return cls(Axis(*d["q1"]), Axis(*d["q2"]), Axis(*d["x"]), tuple(d.get("labels", ("q1", "q2", "x"))))

    @classmethod
    def cube(cls, half_width: float, n: int) -> "Grid":
        a = Axis.symmetric(half_width, n)
        return cls(a, a, a)


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Midpoint quadrature of a grid function over all three coordinates."""
    return float(np.sum(values) * grid.cell_volume)
