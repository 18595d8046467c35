"""
Exact and approximate reward distributions, risk statistics, projections and the
distributional Bellman backup.

Three representations are supported:

* :class:`SparseDist` – an exact discrete distribution over the naturals plus a point mass
  at infinity; this is what forward computation on a DTMC produces
* :class:`CategoricalDist` – probabilities on ``m`` evenly spaced atoms
* :class:`QuantileDist` – ``m`` equally weighted atoms at arbitrary locations
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Literal, Optional, Tuple, Union

import numpy as np

from asphalt.distmc.exceptions import InfiniteMass, ParamMismatch

#: tolerance used for normalization checks and probability comparisons
PROB_TOLERANCE = 1e-9
#: slack used when comparing cumulative probabilities against risk levels
CDF_SLACK = 1e-12


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _aggregate(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge equal values, summing their weights, and return them sorted."""
    unique, inverse = np.unique(values, return_inverse=True)
    return unique, np.bincount(inverse.ravel(), weights=weights, minlength=len(unique))


@dataclass(frozen=True, eq=False)
class SparseDist:
    """
    An exact distribution over ``ℕ ∪ {∞}``.

    :param values: strictly increasing nonnegative integers
    :param probs: positive probabilities of ``values``
    :param p_inf: probability mass at infinity
    """

    values: np.ndarray
    probs: np.ndarray
    p_inf: float = 0.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.int64).copy()
        probs = np.asarray(self.probs, dtype=np.float64).copy()
        if values.shape != probs.shape or values.ndim != 1:
            raise ValueError("values and probs must be 1-D arrays of equal length")
        if len(values) and (np.any(np.diff(values) <= 0) or values[0] < 0):
            raise ValueError("values must be strictly increasing and nonnegative")
        if np.any(probs <= 0):
            raise ValueError("probabilities must be positive")

        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "probs", _readonly(probs))
        object.__setattr__(self, "p_inf", float(self.p_inf))

    @classmethod
    def from_arrays(
        cls, values: Iterable[int], probs: Iterable[float], p_inf: float = 0.0
    ) -> SparseDist:
        """Build a distribution from unsorted values, merging duplicates and zeros."""
        value_array = np.asarray(list(values), dtype=np.int64).ravel()
        prob_array = np.asarray(list(probs), dtype=np.float64).ravel()
        unique, summed = _aggregate(value_array, prob_array)
        keep = summed > 0
        return cls(unique[keep], summed[keep], p_inf)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float], p_inf: float = 0.0) -> SparseDist:
        return cls.from_arrays(mapping.keys(), mapping.values(), p_inf)

    @classmethod
    def dirac(cls, value: int) -> SparseDist:
        return cls(np.array([value]), np.array([1.0]))

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum()) + self.p_inf

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self.values.astype(np.float64), self.probs

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.values.tolist(), self.probs.tolist()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseDist):
            return NotImplemented

        return (
            np.array_equal(self.values, other.values)
            and np.array_equal(self.probs, other.probs)
            and self.p_inf == other.p_inf
        )


@dataclass(frozen=True, eq=False)
class CategoricalDist:
    """
    Probabilities on the evenly spaced atoms ``theta1 + i * stride`` for ``i < m``.
    """

    theta1: float
    stride: float
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64).copy()
        if probs.ndim != 1 or len(probs) < 2:
            raise ValueError("a categorical distribution needs at least 2 atoms")
        if self.stride <= 0:
            raise ValueError("stride must be positive")

        object.__setattr__(self, "probs", _readonly(probs))
        object.__setattr__(self, "theta1", float(self.theta1))
        object.__setattr__(self, "stride", float(self.stride))

    @property
    def m(self) -> int:
        return len(self.probs)

    @property
    def locations(self) -> np.ndarray:
        return self.theta1 + self.stride * np.arange(self.m)

    @property
    def p_inf(self) -> float:
        return 0.0

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self.locations, self.probs

    def cdf(self) -> np.ndarray:
        """The CDF evaluated at every atom."""
        return np.cumsum(self.probs)


@dataclass(frozen=True, eq=False)
class QuantileDist:
    """``m`` equally weighted atoms; several atoms may share a location."""

    locations: np.ndarray

    def __post_init__(self) -> None:
        locations = np.sort(np.asarray(self.locations, dtype=np.float64))
        if locations.ndim != 1 or len(locations) < 1:
            raise ValueError("a quantile distribution needs at least one atom")

        object.__setattr__(self, "locations", _readonly(locations))

    @property
    def m(self) -> int:
        return len(self.locations)

    @property
    def p_inf(self) -> float:
        return 0.0

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self.locations, np.full(self.m, 1.0 / self.m)


Dist = Union[SparseDist, CategoricalDist, QuantileDist]
Kind = Literal["categorical", "quantile"]


@dataclass(frozen=True)
class ReprParams:
    """
    Parameters of an approximate distribution representation.

    :param kind: ``categorical`` or ``quantile``
    :param m: number of atoms
    :param vmin: lowest categorical atom
    :param vmax: highest categorical atom
    """

    kind: Kind = "categorical"
    m: int = 201
    vmin: float = 0.0
    vmax: float = 100.0

    def __post_init__(self) -> None:
        if self.kind not in ("categorical", "quantile"):
            raise ValueError(f"unknown representation kind: {self.kind!r}")
        if self.m < 2:
            raise ValueError("the number of atoms must be at least 2")
        if not self.vmin < self.vmax:
            raise ValueError("vmin must be smaller than vmax")

    @property
    def stride(self) -> float:
        return (self.vmax - self.vmin) / (self.m - 1)

    @property
    def atoms(self) -> np.ndarray:
        return self.vmin + self.stride * np.arange(self.m)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"risk level must lie in the open interval (0, 1), got {alpha}")


def _merged_atoms(dist: Dist) -> tuple[np.ndarray, np.ndarray]:
    values, probs = dist.atoms()
    if isinstance(dist, QuantileDist):
        return _aggregate(values, probs)

    return values, probs


def mean(dist: Dist) -> float:
    if dist.p_inf > 0:
        return math.inf

    values, probs = dist.atoms()
    return float(values @ probs)


def variance(dist: Dist) -> float:
    if dist.p_inf > 0:
        return math.inf

    values, probs = dist.atoms()
    mu = values @ probs
    return float(np.maximum(((values - mu) ** 2) @ probs, 0.0))


def standard_deviation(dist: Dist) -> float:
    return math.sqrt(variance(dist))


def mode(dist: Dist) -> float:
    """Return the smallest value attaining the largest probability."""
    values, probs = _merged_atoms(dist)
    if not len(values) or (dist.p_inf > 0 and dist.p_inf > probs.max()):
        return math.inf

    index = int(np.flatnonzero(probs >= probs.max() - CDF_SLACK)[0])
    return float(values[index])


def var_at_risk(dist: Dist, alpha: float) -> float:
    """Return the smallest value ``x`` with ``F(x) >= alpha`` (``∞`` if there is none)."""
    _check_alpha(alpha)
    values, probs = _merged_atoms(dist)
    cdf = np.cumsum(probs)
    index = int(np.searchsorted(cdf, alpha - CDF_SLACK, side="left"))
    return float(values[index]) if index < len(values) else math.inf


def cvar(dist: Dist, alpha: float) -> float:
    """
    Return the conditional value-at-risk at level ``alpha``.

    For a discrete distribution the tail integral is evaluated exactly: with
    ``v = VaR_alpha``, ``CVaR = ((F(v) - alpha) * v + Σ_{x > v} x P(x)) / (1 - alpha)``.
    """
    _check_alpha(alpha)
    if dist.p_inf > 0:
        return math.inf

    values, probs = _merged_atoms(dist)
    cdf = np.cumsum(probs)
    index = int(np.searchsorted(cdf, alpha - CDF_SLACK, side="left"))
    index = min(index, len(values) - 1)
    v = values[index]
    tail = values[index + 1 :] @ probs[index + 1 :]
    return float(((cdf[index] - alpha) * v + tail) / (1.0 - alpha))


def expected_excess(dist: Dist, b: float) -> float:
    """Return ``E([X - b]^+)``."""
    if dist.p_inf > 0:
        return math.inf

    values, probs = dist.atoms()
    return float(np.maximum(values - b, 0.0) @ probs)


def cvar_dual(dist: Dist, alpha: float, grid: Sequence[float]) -> tuple[float, float]:
    """
    Minimize ``b + E([X - b]^+) / (1 - alpha)`` over the given grid of ``b`` values.

    Ties are resolved in favor of the smallest ``b``.

    :return: the minimizing ``b`` and the objective value there

    """
    _check_alpha(alpha)
    grid_array = np.asarray(grid, dtype=np.float64)
    if dist.p_inf > 0:
        return float(grid_array[0]), math.inf

    values, probs = dist.atoms()
    excess = np.maximum(values[None, :] - grid_array[:, None], 0.0) @ probs
    objective = grid_array + excess / (1.0 - alpha)
    index = int(np.flatnonzero(objective <= objective.min() + CDF_SLACK)[0])
    return float(grid_array[index]), float(objective[index])


def project_categorical_batch(
    values: np.ndarray, weights: np.ndarray, params: ReprParams
) -> tuple[np.ndarray, np.ndarray]:
    """
    Project many weighted atom sets onto the categorical grid of ``params`` at once.

    Each row of ``values``/``weights`` describes one source distribution. Mass at ``x`` is
    split between the two neighbouring atoms in proportion to proximity; mass outside
    ``[vmin, vmax]`` goes to the nearest boundary atom.

    :return: the ``rows × m`` projected probabilities and the mass clamped onto the top
        atom from above ``vmax``, per row

    """
    rows = values.shape[0]
    m = params.m
    overflow = np.where(values > params.vmax, weights, 0.0).sum(axis=1)
    position = (np.clip(values, params.vmin, params.vmax) - params.vmin) / params.stride
    rounded = np.rint(position)
    position = np.where(np.abs(position - rounded) < 1e-9, rounded, position)
    lower = np.minimum(np.floor(position).astype(np.int64), m - 1)
    upper = np.minimum(lower + 1, m - 1)
    fraction = position - lower
    offsets = (np.arange(rows, dtype=np.int64) * m)[:, None]
    projected = np.bincount(
        (offsets + lower).ravel(), weights=(weights * (1.0 - fraction)).ravel(),
        minlength=rows * m,
    ) + np.bincount(
        (offsets + upper).ravel(), weights=(weights * fraction).ravel(),
        minlength=rows * m,
    )
    return projected.reshape(rows, m), overflow


def quantile_locations(values: np.ndarray, weights: np.ndarray, m: int) -> np.ndarray:
    """Evaluate the inverse CDF of a weighted atom set at ``τ_i = (2i - 1) / 2m``."""
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    cdf = np.cumsum(weights[order])
    cdf /= cdf[-1]
    taus = (2.0 * np.arange(1, m + 1) - 1.0) / (2.0 * m)
    indices = np.searchsorted(cdf, taus - CDF_SLACK, side="left")
    return sorted_values[np.minimum(indices, len(sorted_values) - 1)]


def project_categorical(dist: Dist, params: ReprParams) -> CategoricalDist:
    """
    Project a distribution onto the categorical representation described by ``params``.

    Mass at infinity is treated like any other mass above ``vmax`` and lands on the
    highest atom.
    """
    values, probs = dist.atoms()
    if dist.p_inf > 0:
        values = np.append(values, math.inf)
        probs = np.append(probs, dist.p_inf)

    projected, _ = project_categorical_batch(values[None, :], probs[None, :], params)
    total = projected.sum()
    return CategoricalDist(params.vmin, params.stride, projected[0] / total)


def project_quantile(dist: Dist, m: int) -> QuantileDist:
    """
    Project a distribution onto ``m`` equally weighted atoms at the midpoint quantiles.

    :raises InfiniteMass: if at least ``1 / 2m`` of the mass lies at infinity

    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if dist.p_inf >= 1.0 / (2 * m):
        raise InfiniteMass(
            f"{dist.p_inf:g} of the mass is at infinity, which {m} quantile atoms "
            f"cannot represent"
        )

    values, probs = dist.atoms()
    if dist.p_inf > 0:
        values = np.append(values, math.inf)
        probs = np.append(probs, dist.p_inf)

    return QuantileDist(quantile_locations(values, probs, m))


def mixture(
    branches: Sequence[tuple[float, Dist]], shift: float = 0.0
) -> tuple[np.ndarray, np.ndarray, float]:
    """
    Return the atoms, weights and infinite mass of ``shift + Σ p_j · D_j``.
    """
    value_parts = []
    weight_parts = []
    p_inf = 0.0
    for prob, dist in branches:
        values, probs = dist.atoms()
        value_parts.append(values + shift)
        weight_parts.append(probs * prob)
        p_inf += prob * dist.p_inf

    return np.concatenate(value_parts), np.concatenate(weight_parts), p_inf


def bellman_backup(
    reward: int,
    branches: Sequence[tuple[float, Dist]],
    params: Optional[ReprParams] = None,
) -> Dist:
    """
    Compute ``proj(reward + Σ_j p_j · D_j)``.

    :param reward: the reward collected on this step
    :param branches: ``(probability, distribution)`` pairs of the successors
    :param params: the target representation; ``None`` means no projection, in which case
        all atoms must be integers and an exact :class:`SparseDist` is returned

    """
    values, weights, p_inf = mixture(branches, reward)
    if params is None:
        rounded = np.rint(values)
        if not np.allclose(values, rounded, rtol=0.0, atol=PROB_TOLERANCE):
            raise ValueError("exact backups require integer atoms")

        return SparseDist.from_arrays(rounded.astype(np.int64), weights, p_inf)

    if params.kind == "categorical":
        if p_inf > 0:
            values = np.append(values, math.inf)
            weights = np.append(weights, p_inf)

        projected, _ = project_categorical_batch(values[None, :], weights[None, :], params)
        return CategoricalDist(params.vmin, params.stride, projected[0] / projected.sum())

    if p_inf >= 1.0 / (2 * params.m):
        raise InfiniteMass(f"{p_inf:g} of the mass is at infinity")

    if p_inf > 0:
        values = np.append(values, math.inf)
        weights = np.append(weights, p_inf)

    return QuantileDist(quantile_locations(values, weights, params.m))


def cramer_l2(a: CategoricalDist, b: CategoricalDist) -> float:
    """
    Return the Cramér (ℓ2) distance between two categorical distributions on the same
    atoms: ``sqrt(stride · Σ_i (F_a(θ_i) - F_b(θ_i))²)``.
    """
    if a.m != b.m or not math.isclose(a.theta1, b.theta1) or not math.isclose(
        a.stride, b.stride
    ):
        raise ParamMismatch("categorical distributions have different atoms")

    difference = a.cdf() - b.cdf()
    return math.sqrt(a.stride * float(difference @ difference))


def wasserstein_w1(a: QuantileDist, b: QuantileDist) -> float:
    """Return the 1-Wasserstein distance between two quantile distributions of equal size."""
    if a.m != b.m:
        raise ParamMismatch(f"quantile distributions have {a.m} and {b.m} atoms")

    return float(np.mean(np.abs(a.locations - b.locations)))


def cramer_distance(a: Dist, b: Dist) -> float:
    """
    Return the Cramér distance ``sqrt(∫ (F_a(x) - F_b(x))² dx)`` between any two
    distributions (exact for step CDFs).
    """
    if abs(a.p_inf - b.p_inf) > CDF_SLACK:
        return math.inf

    a_values, a_probs = _merged_atoms(a)
    b_values, b_probs = _merged_atoms(b)
    points = np.union1d(a_values, b_values)
    a_cdf = _cdf_at(a_values, a_probs, points)
    b_cdf = _cdf_at(b_values, b_probs, points)
    widths = np.diff(points)
    difference = (a_cdf - b_cdf)[:-1]
    return math.sqrt(float((difference * difference) @ widths))


def wasserstein_distance(a: Dist, b: Dist) -> float:
    """
    Return ``∫ |F_a(x) - F_b(x)| dx``, which is infinite unless both distributions
    carry the same mass at infinity.
    """
    if abs(a.p_inf - b.p_inf) > CDF_SLACK:
        return math.inf

    a_values, a_probs = _merged_atoms(a)
    b_values, b_probs = _merged_atoms(b)
    points = np.union1d(a_values, b_values)
    difference = (_cdf_at(a_values, a_probs, points) - _cdf_at(b_values, b_probs, points))
    return float(np.abs(difference[:-1]) @ np.diff(points))


def _cdf_at(values: np.ndarray, probs: np.ndarray, points: np.ndarray) -> np.ndarray:
    cdf = np.concatenate(([0.0], np.cumsum(probs)))
    return cdf[np.searchsorted(values, points, side="right")]


Statistic = Tuple[str, Optional[float]]


def statistic(dist: Dist, name: str, alpha: float | None = None) -> float:
    """
    Evaluate a named statistic (``E``, ``Var``, ``sd``, ``mode``, ``VaR``, ``CVaR``).
    """
    if name == "E":
        return mean(dist)
    elif name == "Var":
        return variance(dist)
    elif name == "sd":
        return standard_deviation(dist)
    elif name == "mode":
        return mode(dist)
    elif name in ("VaR", "CVaR"):
        if alpha is None:
            raise ValueError(f"{name} requires a risk level")

        return var_at_risk(dist, alpha) if name == "VaR" else cvar(dist, alpha)
    else:
        raise ValueError(f"unknown statistic: {name!r}")


def statistic_label(name: str, alpha: float | None = None) -> str:
    """Return the display form of a statistic, e.g. ``E`` or ``CVaR@0.7``."""
    return name if alpha is None else f"{name}@{alpha:g}"
