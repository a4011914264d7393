#!/usr/bin/env python3
"""
Dense complex linear algebra over small labeled composite Hilbert spaces.

Basis conventions used across the package:
  - subsystems are ordered as listed in their layout (atoms before cavities)
  - amplitudes are stored row-major in that order
  - atom basis is (g=0, e=1), Fock basis is ascending |0>..|n_max>
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Mapping, Sequence, Tuple

import numpy as np

from .errors import LayoutError, UndefinedFidelityError, ValidationError, ZeroNormError

logger = logging.getLogger(__name__)

# Tolerances
HERMITIAN_TOL = 1e-10
DEFAULT_MAX_DIM = 4096

# Atom levels
GROUND = 0
EXCITED = 1


def _frozen_array(values, ndim: int) -> np.ndarray:
    """Copy values into a read-only complex array"""
    array = np.array(values, dtype=complex)
    if ndim == 1:
        array = array.reshape(-1)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered (label, dim) factors of a composite space"""

    subsystems: Tuple[Tuple[str, int], ...]
    max_dim: int = field(default=DEFAULT_MAX_DIM, compare=False, repr=False)

    def __post_init__(self):
        subsystems = tuple((str(label), int(dim)) for label, dim in self.subsystems)
        object.__setattr__(self, "subsystems", subsystems)

        if not subsystems:
            raise LayoutError("a layout needs at least one subsystem")
        labels = [label for label, _ in subsystems]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise LayoutError(f"duplicate subsystem labels: {', '.join(duplicates)}")
        for label, dim in subsystems:
            if dim < 2:
                raise LayoutError(f"subsystem {label!r} has dimension {dim}, expected >= 2")
        if self.total_dim > self.max_dim:
            raise LayoutError(
                f"total dimension {self.total_dim} exceeds the cap of {self.max_dim}"
            )

    @classmethod
    def of(cls, *subsystems: Tuple[str, int], max_dim: int = DEFAULT_MAX_DIM) -> "SubsystemLayout":
        return cls(tuple(subsystems), max_dim=max_dim)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def __contains__(self, label) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        """Position of a subsystem in the layout"""
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(
                f"unknown subsystem {label!r}; layout has {', '.join(self.labels)}"
            ) from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return SubsystemLayout(
            self.subsystems + other.subsystems, max_dim=max(self.max_dim, other.max_dim)
        )

    def subset(self, labels: Iterable[str]) -> "SubsystemLayout":
        """Sub-layout of the given labels, kept in layout order"""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return SubsystemLayout(
            tuple(item for item in self.subsystems if item[0] in wanted), max_dim=self.max_dim
        )

    def flat_index(self, occupation: Mapping[str, int]) -> int:
        """Row-major index of a basis state; unspecified subsystems sit in level 0"""
        for label in occupation:
            self.index(label)
        digits = tuple(int(occupation.get(label, 0)) for label in self.labels)
        for digit, (label, dim) in zip(digits, self.subsystems):
            if not 0 <= digit < dim:
                raise LayoutError(f"level {digit} out of range for {label!r} (dim {dim})")
        return int(np.ravel_multi_index(digits, self.dims))

    def digits(self) -> np.ndarray:
        """Basis digits, shape (total_dim, n_subsystems)"""
        grid = np.indices(self.dims).reshape(len(self.dims), -1)
        return grid.T


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitude vector on a layout; may be unnormalized"""

    layout: SubsystemLayout
    amps: np.ndarray

    def __post_init__(self):
        amps = _frozen_array(self.amps, ndim=1)
        if amps.shape[0] != self.layout.total_dim:
            raise LayoutError(
                f"state has {amps.shape[0]} amplitudes, layout needs {self.layout.total_dim}"
            )
        object.__setattr__(self, "amps", amps)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def normalized(self) -> "StateVector":
        norm = self.norm()
        if norm == 0.0:
            raise ZeroNormError("cannot normalize the zero vector")
        return StateVector(self.layout, self.amps / norm)

    def amplitude(self, occupation: Mapping[str, int]) -> complex:
        return complex(self.amps[self.layout.flat_index(occupation)])

    def overlap(self, other: "StateVector") -> complex:
        """<self|other>"""
        _require_same_space(self.layout, other.layout)
        return complex(np.vdot(self.amps, other.amps))

    def __add__(self, other: "StateVector") -> "StateVector":
        _require_same_space(self.layout, other.layout)
        return StateVector(self.layout, self.amps + other.amps)

    def __rmul__(self, scalar) -> "StateVector":
        return StateVector(self.layout, complex(scalar) * self.amps)

    __mul__ = __rmul__


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Square matrix acting on a layout"""

    layout: SubsystemLayout
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen_array(self.entries, ndim=2)
        dim = self.layout.total_dim
        if entries.shape != (dim, dim):
            raise LayoutError(f"operator shape {entries.shape} does not match dimension {dim}")
        object.__setattr__(self, "entries", entries)

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.entries.conj().T)

    def apply(self, state: StateVector) -> StateVector:
        _require_same_space(self.layout, state.layout)
        return StateVector(state.layout, self.entries @ state.amps)

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return self.apply(other)
        _require_same_space(self.layout, other.layout)
        return OperatorMatrix(self.layout, self.entries @ other.entries)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _require_same_space(self.layout, other.layout)
        return OperatorMatrix(self.layout, self.entries + other.entries)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _require_same_space(self.layout, other.layout)
        return OperatorMatrix(self.layout, self.entries - other.entries)

    def __rmul__(self, scalar) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, complex(scalar) * self.entries)

    __mul__ = __rmul__


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian positive-semidefinite matrix; the trace may carry a probability weight"""

    layout: SubsystemLayout
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        dim = self.layout.total_dim
        if entries.shape != (dim, dim):
            raise LayoutError(f"density matrix shape {entries.shape} does not match dimension {dim}")
        scale = max(1.0, float(np.max(np.abs(entries)))) if entries.size else 1.0
        defect = float(np.max(np.abs(entries - entries.conj().T)))
        if defect > HERMITIAN_TOL * scale:
            raise ValidationError(f"density matrix is not Hermitian (defect {defect:.3e})")
        object.__setattr__(self, "entries", _frozen_array((entries + entries.conj().T) / 2, ndim=2))

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        """|psi><psi| without normalizing"""
        return cls(state.layout, np.outer(state.amps, state.amps.conj()))

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def normalized(self) -> "DensityMatrix":
        trace = self.trace()
        if not trace > 0.0:
            raise ZeroNormError("cannot normalize a zero-trace density matrix")
        return DensityMatrix(self.layout, self.entries / trace)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def positivity_defect(self) -> float:
        """Magnitude of the most negative eigenvalue (0 when PSD)"""
        return max(0.0, -float(np.linalg.eigvalsh(self.entries)[0]))

    def trace_defect(self) -> float:
        """Imaginary part of the trace"""
        return abs(float(np.trace(self.entries).imag))


def _require_same_space(left: SubsystemLayout, right: SubsystemLayout):
    if left.subsystems != right.subsystems:
        raise LayoutError(f"layouts differ: {left.labels} vs {right.labels}")


# Builders

def basis_state(layout: SubsystemLayout, occupation: Mapping[str, int]) -> StateVector:
    """Product basis state; unspecified subsystems in level 0"""
    amps = np.zeros(layout.total_dim, dtype=complex)
    amps[layout.flat_index(occupation)] = 1.0
    return StateVector(layout, amps)


def ket(label: str, dim: int, level: int) -> StateVector:
    """Single-subsystem basis state |level>"""
    return basis_state(SubsystemLayout.of((label, dim)), {label: level})


def identity(layout: SubsystemLayout) -> OperatorMatrix:
    return OperatorMatrix(layout, np.eye(layout.total_dim))


def annihilation(n_max: int, label: str = "mode") -> OperatorMatrix:
    """Truncated bosonic lowering operator on |0>..|n_max>"""
    if int(n_max) != n_max or n_max < 1:
        raise ValidationError(f"Fock truncation must be a positive integer, got {n_max}")
    n_max = int(n_max)
    entries = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    return OperatorMatrix(SubsystemLayout.of((label, n_max + 1)), entries)


def raising(label: str = "atom") -> OperatorMatrix:
    """|e><g|"""
    entries = np.zeros((2, 2))
    entries[EXCITED, GROUND] = 1.0
    return OperatorMatrix(SubsystemLayout.of((label, 2)), entries)


def lowering(label: str = "atom") -> OperatorMatrix:
    """|g><e|"""
    return raising(label).dagger()


def diagonal(label: str, values: Sequence[complex]) -> OperatorMatrix:
    return OperatorMatrix(SubsystemLayout.of((label, len(values))), np.diag(values))


# Operations

def tensor(factors: Sequence[StateVector]) -> StateVector:
    """Kronecker product in listed order"""
    factors = list(factors)
    if not factors:
        raise ValidationError("tensor needs at least one factor")
    layout = reduce(SubsystemLayout.concat, (factor.layout for factor in factors))
    amps = reduce(np.kron, (factor.amps for factor in factors))
    return StateVector(layout, amps)


def embed(op: OperatorMatrix, target_label: str, layout: SubsystemLayout) -> OperatorMatrix:
    """Lift a single-subsystem operator onto a layout, identity elsewhere"""
    if len(op.layout.subsystems) != 1:
        raise LayoutError("only single-subsystem operators can be embedded")
    position = layout.index(target_label)
    if op.layout.total_dim != layout.dims[position]:
        raise LayoutError(
            f"operator dimension {op.layout.total_dim} does not match "
            f"{target_label!r} (dim {layout.dims[position]})"
        )
    factors = [
        op.entries if i == position else np.eye(dim) for i, dim in enumerate(layout.dims)
    ]
    return OperatorMatrix(layout, reduce(np.kron, factors))


def partial_trace(rho: DensityMatrix, keep: Iterable[str]) -> DensityMatrix:
    """Trace out every subsystem not in keep; kept factors stay in layout order"""
    keep = set(keep)
    if not keep:
        raise ValidationError("partial trace must keep at least one subsystem")
    layout = rho.layout
    kept = [label for label in layout.labels if label in keep]
    unknown = sorted(keep.difference(layout.labels))
    if unknown:
        raise LayoutError(f"unknown subsystems: {', '.join(unknown)}")

    dims = list(layout.dims)
    count = len(dims)
    keep_axes = [layout.index(label) for label in kept]
    trace_axes = [axis for axis in range(count) if axis not in keep_axes]
    order = keep_axes + trace_axes

    tensor_form = rho.entries.reshape(dims + dims)
    tensor_form = tensor_form.transpose(order + [axis + count for axis in order])
    kept_dim = math.prod(dims[axis] for axis in keep_axes)
    traced_dim = math.prod(dims[axis] for axis in trace_axes)
    blocks = tensor_form.reshape(kept_dim, traced_dim, kept_dim, traced_dim)
    reduced = np.einsum("aibi->ab", blocks)
    return DensityMatrix(layout.subset(kept), reduced)


def fidelity_pure(rho: DensityMatrix, target: StateVector) -> float:
    """<target|rho|target> / tr(rho)"""
    _require_same_space(rho.layout, target.layout)
    if abs(target.norm_squared() - 1.0) > 1e-9:
        raise ValidationError("fidelity target must be normalized")
    trace = rho.trace()
    if not trace > 0.0:
        raise UndefinedFidelityError("fidelity is undefined for a zero-trace density matrix")
    overlap = float(np.vdot(target.amps, rho.entries @ target.amps).real)
    return min(max(overlap / trace, 0.0), 1.0)
