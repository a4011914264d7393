#!/usr/bin/env python3
"""
Effective atom-cavity dynamics with cavity decay.

H = i*delta*(a|e><g| - a+|g><e|) - i*k*a+a

delta is the effective Raman coupling and is taken as the primitive input.
Conditional (no-jump) evolution is exp(-iHt); its squared norm is the
probability that no photon has leaked out of the cavity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .errors import LayoutError, NumericalError, RegimeError, ValidationError
from .qcore import (
    OperatorMatrix, StateVector, SubsystemLayout,
    annihilation, embed, lowering, raising,
)

logger = logging.getLogger(__name__)

ROOT_RESIDUAL_TOL = 1e-12
ATOM = "atom"
CAVITY = "cavity"


@dataclass(frozen=True)
class DynamicsParams:
    """Effective coupling delta and cavity decay rate k (both 1/time)"""

    delta: float
    k: float

    def __post_init__(self):
        delta, k = float(self.delta), float(self.k)
        if not (math.isfinite(delta) and math.isfinite(k)):
            raise ValidationError("delta and k must be finite")
        if delta <= 0.0:
            raise ValidationError(f"delta must be positive, got {delta}")
        if k < 0.0:
            raise ValidationError(f"k must be non-negative, got {k}")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "k", k)

    @property
    def underdamped(self) -> bool:
        return 2.0 * self.delta > self.k


@dataclass(frozen=True)
class TransferSolution:
    """Oscillation rate, transfer time and atom-to-photon amplitude"""

    omega_k: float
    t1: float
    alpha: float

    @property
    def transfer_probability(self) -> float:
        return self.alpha ** 2


def _require_underdamped(params: DynamicsParams):
    if not params.underdamped:
        raise RegimeError(
            f"overdamped regime: 2*delta = {2.0 * params.delta:g} <= k = {params.k:g}, "
            "Omega_k = sqrt(4 delta^2 - k^2) is not real"
        )


def omega_k(params: DynamicsParams) -> float:
    """sqrt(4 delta^2 - k^2)"""
    _require_underdamped(params)
    return math.sqrt(4.0 * params.delta ** 2 - params.k ** 2)


def no_jump_amplitudes(params: DynamicsParams, t: float) -> Tuple[complex, complex]:
    """Closed-form (c_e, c_g1) in span{|e,0>, |g,1>} starting from |e,0>"""
    if t < 0.0:
        raise ValidationError(f"evolution time must be non-negative, got {t}")
    rate = omega_k(params)
    envelope = math.exp(-params.k * t / 2.0)
    phase = rate * t / 2.0
    c_e = envelope * (math.cos(phase) + params.k / rate * math.sin(phase))
    c_g1 = -(2.0 * params.delta / rate) * envelope * math.sin(phase)
    return complex(c_e), complex(c_g1)


def t1_star(params: DynamicsParams) -> float:
    """Smallest positive root of tan(Omega_k t / 2) = -Omega_k / k"""
    rate = omega_k(params)
    if params.k == 0.0:
        return math.pi / rate

    t1 = 2.0 / rate * (math.pi - math.atan2(rate, params.k))
    residual = abs(no_jump_amplitudes(params, t1)[0])
    if residual > ROOT_RESIDUAL_TOL:
        # Omega_k t / 2 lies in (pi/2, pi): c_e changes sign on this bracket
        t1 = brentq(
            lambda t: no_jump_amplitudes(params, t)[0].real,
            math.pi / rate, 2.0 * math.pi / rate, xtol=1e-15, maxiter=200,
        )
        residual = abs(no_jump_amplitudes(params, t1)[0])
    if residual > ROOT_RESIDUAL_TOL:
        raise NumericalError(f"transfer time root residual {residual:.3e} above tolerance")
    logger.debug("t1 = %.15g for delta=%g k=%g (residual %.2e)", t1, params.delta, params.k, residual)
    return t1


@lru_cache(maxsize=256)
def transfer_solution(params: DynamicsParams) -> TransferSolution:
    t1 = t1_star(params)
    alpha = no_jump_amplitudes(params, t1)[1].real
    return TransferSolution(omega_k=omega_k(params), t1=t1, alpha=alpha)


@lru_cache(maxsize=16)
def single_atom_layout(n_max: int = 2) -> SubsystemLayout:
    return SubsystemLayout.of((ATOM, 2), (CAVITY, n_max + 1))


def build_h_eff(params: DynamicsParams, layout: SubsystemLayout,
                atom_label: str = ATOM, cavity_label: str = CAVITY) -> OperatorMatrix:
    """Effective Hamiltonian embedded in layout"""
    if layout.dim_of(atom_label) != 2:
        raise LayoutError(f"{atom_label!r} must be a two-level atom")
    n_max = layout.dim_of(cavity_label) - 1

    a = embed(annihilation(n_max), cavity_label, layout)
    a_dag = a.dagger()
    sigma_up = embed(raising(), atom_label, layout)
    sigma_down = embed(lowering(), atom_label, layout)

    coupling = 1j * params.delta * (a @ sigma_up - a_dag @ sigma_down)
    decay = -1j * params.k * (a_dag @ a)
    return coupling + decay


@lru_cache(maxsize=64)
def _propagator(params: DynamicsParams, layout: SubsystemLayout,
                atom_label: str, cavity_label: str, t: float) -> OperatorMatrix:
    hamiltonian = build_h_eff(params, layout, atom_label, cavity_label)
    return OperatorMatrix(layout, expm(-1j * t * hamiltonian.entries))


def evolve_no_jump(state: StateVector, params: DynamicsParams, t: float,
                   atom_label: str = ATOM, cavity_label: str = CAVITY) -> StateVector:
    """Apply exp(-iHt) to one atom-cavity pair of state (unnormalized result)"""
    if t < 0.0:
        raise ValidationError(f"evolution time must be non-negative, got {t}")
    propagator = _propagator(params, state.layout, atom_label, cavity_label, float(t))
    return propagator @ state


def integrate_amplitudes(params: DynamicsParams, t: float, n_max: int = 2) -> Tuple[complex, complex]:
    """(c_e, c_g1) at time t from the propagator instead of the closed form"""
    layout = single_atom_layout(n_max)
    start = np.zeros(layout.total_dim, dtype=complex)
    start[layout.flat_index({ATOM: 1})] = 1.0
    final = evolve_no_jump(StateVector(layout, start), params, t)
    return final.amplitude({ATOM: 1}), final.amplitude({CAVITY: 1})
