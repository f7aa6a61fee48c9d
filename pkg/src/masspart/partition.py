"""Mass-partition data model, the self-normalization map and size-biasing."""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import NORMALIZE_TOLERANCE, RESIDUAL_TOLERANCE, SUM_TOLERANCE
from .errors import (
    EmptyInputError,
    InvalidParameterError,
    NonFiniteInputError,
    ResidualTooLargeError,
)

log = logging.getLogger(__name__)


class Order(str, Enum):
    SIZE_BIASED = "size_biased"
    NONINCREASING = "nonincreasing"
    CONSTRUCTION = "construction"


def _frozen_array(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MassPartition:
    """Finite prefix of a random mass-partition.

    ``atoms`` are the stored weights, ``residual`` the mass beyond them and
    ``mass`` the total they account for (1 for a full partition, Q for a
    sub-partition such as Q * eta'). ``approximate`` marks samplers whose
    residual is an estimate. ``scale`` is the unnormalized total the atoms
    were divided by, when the construction has one.

    Atoms are nonnegative rather than strictly positive: deep stick products
    can underflow to 0.0 in double precision.
    """

    atoms: np.ndarray
    residual: float = 0.0
    order: Order = Order.CONSTRUCTION
    approximate: bool = False
    mass: float = 1.0
    scale: float | None = None

    def __post_init__(self):
        atoms = _frozen_array(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "order", Order(self.order))
        object.__setattr__(self, "residual", float(self.residual))
        if atoms.ndim != 1:
            raise InvalidParameterError("atoms must be one-dimensional")
        if not np.all(np.isfinite(atoms)) or not math.isfinite(self.residual):
            raise NonFiniteInputError("partition atoms and residual must be finite")
        if np.any(atoms < 0) or self.residual < 0:
            raise InvalidParameterError("partition atoms and residual must be nonnegative")
        total = math.fsum(atoms) + self.residual
        if abs(total - self.mass) > SUM_TOLERANCE * max(1.0, self.mass):
            raise InvalidParameterError(
                f"atoms + residual sum to {total!r}, expected {self.mass!r}"
            )
        if self.order is Order.NONINCREASING and np.any(np.diff(atoms) > 0):
            raise InvalidParameterError("nonincreasing partition has unsorted atoms")

    def __len__(self):
        return self.atoms.size

    @property
    def total(self):
        return math.fsum(self.atoms) + self.residual

    def prefix(self, k):
        """First ``k`` atoms padded with zeros, and the mass beyond them."""
        head = np.zeros(k)
        n = min(k, self.atoms.size)
        head[:n] = self.atoms[:n]
        return head, max(0.0, self.mass - math.fsum(head))

    def to_dict(self):
        return {
            "atoms": self.atoms.tolist(),
            "residual": self.residual,
            "order": self.order.value,
            "approximate": self.approximate,
            "mass": self.mass,
        }


@dataclass(frozen=True)
class MarkedPointSet:
    """Finite collection of Poisson points, size-only or (time, size).

    ``truncation_level`` records how the infinite point process was cut,
    e.g. ``{"gamma_n": ..., "tail_mean": ...}``.
    """

    sizes: np.ndarray
    times: np.ndarray | None = None
    truncation_level: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = _frozen_array(self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if sizes.ndim != 1:
            raise InvalidParameterError("sizes must be one-dimensional")
        if not np.all(np.isfinite(sizes)):
            raise NonFiniteInputError("point sizes must be finite")
        if np.any(sizes < 0):
            raise InvalidParameterError("point sizes must be positive")
        if self.times is not None:
            times = _frozen_array(self.times)
            object.__setattr__(self, "times", times)
            if times.shape != sizes.shape:
                raise InvalidParameterError("times and sizes must have equal length")
            if np.any(np.diff(times) < 0):
                raise InvalidParameterError("point times must be nondecreasing")

    def __len__(self):
        return self.sizes.size

    def points(self):
        if self.times is None:
            return [(float(s),) for s in self.sizes]
        return list(zip(self.times.tolist(), self.sizes.tolist()))


def _checked_sizes(points):
    sizes = points.sizes if isinstance(points, MarkedPointSet) else np.asarray(points, dtype=float)
    if sizes.size == 0:
        raise EmptyInputError("cannot normalize an empty point set")
    if not np.all(np.isfinite(sizes)):
        raise NonFiniteInputError("cannot normalize non-finite sizes")
    if np.any(sizes < 0) or not np.any(sizes > 0):
        raise InvalidParameterError("sizes must be positive")
    return sizes


def normalize(points):
    """The self-normalization map: sizes divided by their (exactly rounded) sum."""
    sizes = _checked_sizes(points)
    total = math.fsum(sizes)
    atoms = sizes / total
    if abs(math.fsum(atoms) - 1.0) > NORMALIZE_TOLERANCE:
        log.debug("normalized atoms drift from one by %g", math.fsum(atoms) - 1.0)
    return MassPartition(atoms=atoms, residual=0.0, order=Order.CONSTRUCTION, scale=total)


def close_with_tail(points, tail, order=Order.CONSTRUCTION, approximate=True):
    """Normalize ``points`` together with an estimated unrealized tail mass."""
    sizes = _checked_sizes(points)
    tail = float(tail)
    if not math.isfinite(tail) or tail < 0:
        raise InvalidParameterError(f"tail mass must be finite and >= 0, got {tail!r}")
    total = math.fsum(sizes) + tail
    return MassPartition(
        atoms=sizes / total,
        residual=tail / total,
        order=order,
        approximate=approximate,
        scale=total,
    )


def _permutation_by_inversion(atoms, stream):
    k = atoms.size
    available = np.ones(k, dtype=bool)
    perm = np.empty(k, dtype=np.intp)
    for step in range(k):
        cumulative = np.cumsum(np.where(available, atoms, 0.0))
        target = stream.uniform() * cumulative[-1]
        idx = int(np.searchsorted(cumulative, target, side="right"))
        if idx >= k:
            # only zero-weight atoms remain
            idx = int(np.flatnonzero(available)[0])
        perm[step] = idx
        available[idx] = False
    return perm


def _permutation_by_race(atoms, stream):
    # Exponential clocks E_i / w_i ring in size-biased order.
    with np.errstate(divide="ignore"):
        keys = stream.exponential(atoms.size) / atoms
    return np.argsort(keys, kind="stable")


def size_biased_permutation(p, stream, *, residual_tolerance=RESIDUAL_TOLERANCE, method="inversion"):
    """Reorder atoms by successive draws proportional to weight, without replacement.

    ``method="inversion"`` walks the shrinking cumulative sum (O(k^2));
    ``method="race"`` sorts exponential clocks scaled by the weights and has
    the same law in O(k log k). A residual above ``residual_tolerance`` is
    refused; with a looser tolerance only stored atoms are permuted and the
    residual is carried over unchanged.
    """
    if p.residual > residual_tolerance * p.mass:
        raise ResidualTooLargeError(
            f"residual {p.residual:.3g} exceeds tolerance {residual_tolerance:.3g}; "
            "size-biasing a truncated partition is biased"
        )
    if method == "inversion":
        perm = _permutation_by_inversion(p.atoms, stream)
    elif method == "race":
        perm = _permutation_by_race(p.atoms, stream)
    else:
        raise InvalidParameterError(f"unknown size-biasing method {method!r}")
    return MassPartition(
        atoms=p.atoms[perm],
        residual=p.residual,
        order=Order.SIZE_BIASED,
        approximate=p.approximate,
        mass=p.mass,
        scale=p.scale,
    )


def sort_nonincreasing(p):
    return MassPartition(
        atoms=np.sort(p.atoms)[::-1],
        residual=p.residual,
        order=Order.NONINCREASING,
        approximate=p.approximate,
        mass=p.mass,
        scale=p.scale,
    )


def to_csv(p, handle, header=None):
    """One atom per row (index, weight, order); residual in a leading comment line."""
    handle.write(f"# residual={p.residual!r} order={p.order.value} approximate={p.approximate}")
    if header:
        handle.write(" " + header)
    handle.write("\n")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["index", "weight", "order"])
    for i, weight in enumerate(p.atoms, start=1):
        writer.writerow([i, repr(float(weight)), p.order.value])


def to_json(p):
    return json.dumps(p.to_dict(), indent=4)


def from_json(text):
    data = json.loads(text)
    return MassPartition(
        atoms=data["atoms"],
        residual=data["residual"],
        order=data["order"],
        approximate=data.get("approximate", False),
        mass=data.get("mass", 1.0),
    )
