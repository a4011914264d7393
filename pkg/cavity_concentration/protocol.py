#!/usr/bin/env python3
"""
Concentration pipeline on atoms 1-4 and cavities A, B.

Pairs (1,2) and (3,4) start in a|e g> + b|g e> and c|e g> + d|g e>.
Atoms 1 and 3 sit in cavities A and B. A transfer pulse of length t1 maps
their excitation onto a cavity photon; both cavities then leak into a 50/50
beam splitter watched by detectors D+ and D-. One click heralds an entangled
state of atoms 2 and 4 (after a pi phase on |g>_4 when D- fires).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .dynamics import DynamicsParams, evolve_no_jump, transfer_solution
from .errors import (
    QuadratureError, TruncationError, UnsupportedConfigError,
    ValidationError, ZeroNormError,
)
from .qcore import (
    EXCITED, GROUND,
    DensityMatrix, OperatorMatrix, StateVector, SubsystemLayout,
    annihilation, diagonal, embed, fidelity_pure, ket, partial_trace, tensor,
)

logger = logging.getLogger(__name__)

ATOMS = ("atom1", "atom2", "atom3", "atom4")
CAVITY_A = "cavA"
CAVITY_B = "cavB"
KEPT_ATOMS = ("atom2", "atom4")

PAIR_TOL = 1e-12
LEAKAGE_TOL = 1e-12
COMPLETENESS_TOL = 1e-9
REFINEMENT_TOL = 1e-8
MIN_QUAD_POINTS = 64
ZERO_PROBABILITY = 1e-15


class Detector(str, Enum):
    PLUS = "+"
    MINUS = "-"

    @property
    def sign(self) -> int:
        return 1 if self is Detector.PLUS else -1


class Provenance(str, Enum):
    ANALYTIC = "analytic"
    DETERMINISTIC = "deterministic"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class InputPair:
    """amp_eg on |e>|g>, amp_ge on |g>|e>"""

    amp_eg: complex
    amp_ge: complex

    def __post_init__(self):
        amp_eg, amp_ge = complex(self.amp_eg), complex(self.amp_ge)
        if not all(math.isfinite(x) for x in (amp_eg.real, amp_eg.imag, amp_ge.real, amp_ge.imag)):
            raise ValidationError("pair amplitudes must be finite")
        norm = abs(amp_eg) ** 2 + abs(amp_ge) ** 2
        if abs(norm - 1.0) > PAIR_TOL:
            raise ValidationError(f"pair is not normalized: |eg|^2 + |ge|^2 = {norm:.15g}")
        object.__setattr__(self, "amp_eg", amp_eg)
        object.__setattr__(self, "amp_ge", amp_ge)

    @classmethod
    def normalized(cls, amp_eg: complex, amp_ge: complex, tol: float = 1e-9,
                   name: str = "pair") -> "InputPair":
        """Accept amplitudes normalized to within tol and rescale them exactly"""
        norm = abs(complex(amp_eg)) ** 2 + abs(complex(amp_ge)) ** 2
        if not abs(norm - 1.0) <= tol:
            raise ValidationError(
                f"{name} is not normalized: |{amp_eg}|^2 + |{amp_ge}|^2 = {norm:.12g}"
            )
        scale = math.sqrt(norm)
        return cls(complex(amp_eg) / scale, complex(amp_ge) / scale)

    def close_to(self, other: "InputPair", tol: float = PAIR_TOL) -> bool:
        return abs(self.amp_eg - other.amp_eg) <= tol and abs(self.amp_ge - other.amp_ge) <= tol


@dataclass(frozen=True)
class ProtocolConfig:
    pair12: InputPair
    pair34: InputPair
    dyn: DynamicsParams
    t2: float
    n_max: int = 2
    matched: bool = False

    def __post_init__(self):
        t2 = float(self.t2)
        if not (math.isfinite(t2) and t2 > 0.0):
            raise ValidationError(f"detection window t2 must be positive, got {self.t2}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError(f"Fock truncation n_max must be >= 1, got {self.n_max}")
        if self.matched and not self.pair12.close_to(self.pair34):
            raise ValidationError("matched configuration requires a = c and b = d")
        object.__setattr__(self, "t2", t2)
        object.__setattr__(self, "n_max", int(self.n_max))

    @classmethod
    def matched_pairs(cls, pair: InputPair, dyn: DynamicsParams, t2: float,
                      n_max: int = 2) -> "ProtocolConfig":
        return cls(pair, pair, dyn, t2, n_max, matched=True)

    @property
    def layout(self) -> SubsystemLayout:
        return protocol_layout(self.n_max)

    @property
    def a(self) -> complex:
        return self.pair12.amp_eg

    @property
    def b(self) -> complex:
        return self.pair12.amp_ge

    @property
    def c(self) -> complex:
        return self.pair34.amp_eg

    @property
    def d(self) -> complex:
        return self.pair34.amp_ge


@dataclass(frozen=True, eq=False)
class ConcentrationResult:
    provenance: Provenance
    p_step1: float
    fidelity: Optional[float] = None
    rho24: Optional[DensityMatrix] = None
    p_no_click: Optional[float] = None
    p_click_plus: Optional[float] = None
    p_click_minus: Optional[float] = None
    p_two_clicks: Optional[float] = None
    p_residual_photon: Optional[float] = None
    p_success_paper: Optional[float] = None
    rho24_by_detector: Mapping[Detector, DensityMatrix] = field(default_factory=dict)

    @property
    def p_one_click(self) -> Optional[float]:
        if self.p_click_plus is None or self.p_click_minus is None:
            return None
        return self.p_click_plus + self.p_click_minus

    def event_probabilities(self) -> Dict[str, Optional[float]]:
        return {
            "no_click": self.p_no_click,
            "one_click_plus": self.p_click_plus,
            "one_click_minus": self.p_click_minus,
            "two_clicks": self.p_two_clicks,
        }


# Layout and fixed operators

@lru_cache(maxsize=16)
def protocol_layout(n_max: int = 2) -> SubsystemLayout:
    return SubsystemLayout.of(
        *((atom, 2) for atom in ATOMS), (CAVITY_A, n_max + 1), (CAVITY_B, n_max + 1)
    )


@lru_cache(maxsize=16)
def photon_numbers(layout: SubsystemLayout) -> np.ndarray:
    """Total cavity photon number of every basis state"""
    digits = layout.digits()
    total = digits[:, layout.index(CAVITY_A)] + digits[:, layout.index(CAVITY_B)]
    total.setflags(write=False)
    return total


@lru_cache(maxsize=16)
def jump_operator(layout: SubsystemLayout, detector: Detector) -> OperatorMatrix:
    """(a_A +/- a_B) / sqrt(2)"""
    n_max = layout.dim_of(CAVITY_A) - 1
    a_A = embed(annihilation(n_max), CAVITY_A, layout)
    a_B = embed(annihilation(n_max), CAVITY_B, layout)
    return (1.0 / math.sqrt(2.0)) * (a_A + detector.sign * a_B)


@lru_cache(maxsize=16)
def _phase_flip(layout: SubsystemLayout) -> OperatorMatrix:
    signs = np.ones(2)
    signs[GROUND] = -1.0
    return embed(diagonal("atom4", signs), "atom4", layout)


@lru_cache(maxsize=16)
def _transferred_projector(layout: SubsystemLayout) -> OperatorMatrix:
    ground = np.zeros(2)
    ground[GROUND] = 1.0
    return embed(diagonal("atom1", ground), "atom1", layout) @ embed(diagonal("atom3", ground), "atom3", layout)


@lru_cache(maxsize=1)
def bell_target() -> StateVector:
    """(|g>_2|e>_4 + |e>_2|g>_4) / sqrt(2)"""
    layout = SubsystemLayout.of(("atom2", 2), ("atom4", 2))
    amps = np.zeros(4, dtype=complex)
    amps[layout.flat_index({"atom2": GROUND, "atom4": EXCITED})] = 1.0 / math.sqrt(2.0)
    amps[layout.flat_index({"atom2": EXCITED, "atom4": GROUND})] = 1.0 / math.sqrt(2.0)
    return StateVector(layout, amps)


@lru_cache(maxsize=16)
def _bell_pairs(layout: SubsystemLayout) -> Tuple[np.ndarray, np.ndarray]:
    """Indices of |g>_2|e>_4 basis states and their |e>_2|g>_4 partners"""
    digits = layout.digits()
    col2, col4 = layout.index("atom2"), layout.index("atom4")
    ge = np.flatnonzero((digits[:, col2] == GROUND) & (digits[:, col4] == EXCITED))
    partner = digits[ge].copy()
    partner[:, col2] = EXCITED
    partner[:, col4] = GROUND
    eg = np.ravel_multi_index(tuple(partner.T), layout.dims)
    ge.setflags(write=False)
    eg.setflags(write=False)
    return ge, eg


def bell_fidelity(state: StateVector) -> float:
    """<Phi|rho24|Phi> read off the amplitudes, without forming rho24"""
    norm_sq = state.norm_squared()
    if norm_sq == 0.0:
        raise ZeroNormError("cannot take the fidelity of the zero vector")
    ge, eg = _bell_pairs(state.layout)
    overlap = state.amps[ge] + state.amps[eg]
    return float(np.vdot(overlap, overlap).real / (2.0 * norm_sq))


def _pair_state(first: str, second: str, pair: InputPair) -> StateVector:
    layout = SubsystemLayout.of((first, 2), (second, 2))
    amps = np.zeros(4, dtype=complex)
    amps[layout.flat_index({first: EXCITED, second: GROUND})] = pair.amp_eg
    amps[layout.flat_index({first: GROUND, second: EXCITED})] = pair.amp_ge
    return StateVector(layout, amps)


def _decay(state: StateVector, k: float, t: float) -> StateVector:
    """Free cavity decay: each stored photon damps the amplitude by exp(-k t)"""
    return StateVector(state.layout, state.amps * np.exp(-k * t * photon_numbers(state.layout)))


def fock_leakage(state: StateVector) -> float:
    """Population with more than one photon in either cavity"""
    digits = state.layout.digits()
    layout = state.layout
    over = (digits[:, layout.index(CAVITY_A)] > 1) | (digits[:, layout.index(CAVITY_B)] > 1)
    return float(np.sum(np.abs(state.amps[over]) ** 2))


def _check_leakage(state: StateVector):
    leakage = fock_leakage(state)
    if leakage >= LEAKAGE_TOL:
        raise TruncationError(f"population above Fock level 1 is {leakage:.3e}")


# Pipeline

def prepare_initial(config: ProtocolConfig) -> StateVector:
    """Both pairs with cavities in vacuum"""
    vacuum_dim = config.n_max + 1
    state = tensor([
        _pair_state("atom1", "atom2", config.pair12),
        _pair_state("atom3", "atom4", config.pair34),
        ket(CAVITY_A, vacuum_dim, 0),
        ket(CAVITY_B, vacuum_dim, 0),
    ])
    return StateVector(config.layout, state.amps).normalized()


@lru_cache(maxsize=128)
def _step1(config: ProtocolConfig) -> Tuple[StateVector, float]:
    t1 = transfer_solution(config.dyn).t1
    state = prepare_initial(config)
    state = evolve_no_jump(state, config.dyn, t1, "atom1", CAVITY_A)
    state = evolve_no_jump(state, config.dyn, t1, "atom3", CAVITY_B)

    transferred = _transferred_projector(config.layout) @ state
    p_step1 = transferred.norm_squared()
    if p_step1 <= ZERO_PROBABILITY:
        raise ZeroNormError("the transfer step has vanishing success probability")
    normalized = transferred.normalized()
    _check_leakage(normalized)
    logger.debug("step 1: t1=%.12g p_step1=%.15g", t1, p_step1)
    return normalized, p_step1


def run_step1(config: ProtocolConfig) -> Tuple[StateVector, float]:
    """Transfer pulse on both cavities, conditioned on atoms 1 and 3 ending in |g>"""
    return _step1(config)


def detection_no_click(state: StateVector, config: ProtocolConfig,
                       t_j: float) -> Tuple[StateVector, float]:
    """Conditional state after t_j without a click, and the survival probability"""
    if not 0.0 <= t_j <= config.t2:
        raise ValidationError(f"detection time {t_j} outside [0, t2={config.t2}]")
    survivor = _decay(state, config.dyn.k, t_j)
    survival = survivor.norm_squared()
    return survivor.normalized(), survival


def click_jump(state: StateVector, detector: Detector) -> StateVector:
    """Apply (a_A +/- a_B)/sqrt(2); the result is unnormalized"""
    return jump_operator(state.layout, Detector(detector)) @ state


def phase_correct(state: StateVector) -> StateVector:
    """pi phase on |g>_4 relative to |e>_4"""
    return _phase_flip(state.layout) @ state


def reduce_rho24(state: StateVector) -> DensityMatrix:
    """Reduced state of atoms 2 and 4"""
    if state.norm_squared() == 0.0:
        raise ZeroNormError("cannot reduce the zero vector")
    return partial_trace(DensityMatrix.from_state(state.normalized()), KEPT_ATOMS)


def conditional_click_state(config: ProtocolConfig, t_j: float,
                            detector: Detector) -> StateVector:
    """Click at t_j, no second click up to t2, phase corrected"""
    state, _ = run_step1(config)
    survivor, _ = detection_no_click(state, config, t_j)
    clicked = click_jump(survivor, detector).normalized()
    if Detector(detector) is Detector.MINUS:
        clicked = phase_correct(clicked)
    return _decay(clicked, config.dyn.k, config.t2 - t_j).normalized()


# Closed forms

def closed_form_step1_probability(config: ProtocolConfig) -> float:
    alpha_sq = transfer_solution(config.dyn).alpha ** 2
    p_a = abs(config.a) ** 2 * alpha_sq + abs(config.b) ** 2
    p_b = abs(config.c) ** 2 * alpha_sq + abs(config.d) ** 2
    return p_a * p_b


def _memory(config: ProtocolConfig) -> float:
    """alpha^2 exp(-2 k t2)"""
    return transfer_solution(config.dyn).alpha ** 2 * math.exp(-2.0 * config.dyn.k * config.t2)


def _require_matched(config: ProtocolConfig):
    if not config.matched:
        raise UnsupportedConfigError("closed-form results require matched pairs (a = c, b = d)")


def closed_form_fidelity(config: ProtocolConfig) -> float:
    """|b|^2 / (|b|^2 + |a|^2 alpha^2 exp(-2 k t2))"""
    _require_matched(config)
    numerator = abs(config.b) ** 2
    denominator = numerator + abs(config.a) ** 2 * _memory(config)
    if denominator == 0.0:
        raise ZeroNormError("fidelity formula is undefined for these amplitudes")
    return numerator / denominator


def closed_form_success_probability(config: ProtocolConfig) -> float:
    _require_matched(config)
    memory = _memory(config)
    decayed = math.exp(-2.0 * config.dyn.k * config.t2)
    weight = abs(config.a * config.b) ** 2 + abs(config.a) ** 4 * memory
    return weight * memory * (1.0 - decayed)


def closed_form_rho24(config: ProtocolConfig) -> DensityMatrix:
    """Mixture of the target Bell state and |gg>"""
    _require_matched(config)
    target = bell_target()
    bell_weight = abs(config.a * config.b) ** 2
    ground_weight = abs(config.a) ** 4 * _memory(config)
    total = bell_weight + ground_weight
    if total == 0.0:
        raise ZeroNormError("no click branch exists for these amplitudes")
    ground = np.zeros(4, dtype=complex)
    ground[target.layout.flat_index({"atom2": GROUND, "atom4": GROUND})] = 1.0
    entries = (bell_weight * np.outer(target.amps, target.amps.conj())
               + ground_weight * np.outer(ground, ground)) / total
    return DensityMatrix(target.layout, entries)


def closed_form_click_state(config: ProtocolConfig, detector: Detector) -> StateVector:
    """Normalized state right after a click at t2, atoms 1 and 3 in |g>"""
    layout = config.layout
    sign = Detector(detector).sign
    alpha = transfer_solution(config.dyn).alpha
    stored = config.a * config.c * alpha * math.exp(-config.dyn.k * config.t2)

    amps = np.zeros(layout.total_dim, dtype=complex)
    amps[layout.flat_index({CAVITY_B: 1})] += stored
    amps[layout.flat_index({CAVITY_A: 1})] += sign * stored
    amps[layout.flat_index({"atom4": EXCITED})] += config.a * config.d
    amps[layout.flat_index({"atom2": EXCITED})] += sign * config.b * config.c
    return StateVector(layout, amps).normalized()


def click_state_fidelity(config: ProtocolConfig) -> float:
    """Fidelity of the phase-corrected click state, valid for unmatched pairs"""
    alpha = transfer_solution(config.dyn).alpha
    decayed = math.exp(-2.0 * config.dyn.k * config.t2)
    ad, bc, ac = config.a * config.d, config.b * config.c, config.a * config.c
    denominator = abs(ad) ** 2 + abs(bc) ** 2 + 2.0 * abs(ac) ** 2 * alpha ** 2 * decayed
    if denominator == 0.0:
        raise ZeroNormError("no click branch exists for these amplitudes")
    return abs(ad + bc) ** 2 / 2.0 / denominator


def analytic_result(config: ProtocolConfig) -> ConcentrationResult:
    _require_matched(config)
    try:
        rho24 = closed_form_rho24(config)
    except ZeroNormError:
        rho24 = None
    return ConcentrationResult(
        provenance=Provenance.ANALYTIC,
        p_step1=closed_form_step1_probability(config),
        fidelity=closed_form_fidelity(config),
        rho24=rho24,
        p_success_paper=closed_form_success_probability(config),
    )


# Deterministic event oracle

def _gauss_legendre(t2: float, k: float, quad_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on [0, t2], ascending"""
    panels = max(1, math.ceil(2.0 * k * t2))
    x, w = np.polynomial.legendre.leggauss(quad_points)
    edges = np.linspace(0.0, t2, panels + 1)
    half = np.diff(edges) / 2.0
    middle = (edges[:-1] + edges[1:]) / 2.0
    nodes = (middle[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _click_integrals(config: ProtocolConfig, state: StateVector, quad_points: int) -> dict:
    layout = state.layout
    k, t2 = config.dyn.k, config.t2
    photons = photon_numbers(layout)
    stored = photons > 0
    nodes, weights = _gauss_legendre(t2, k, quad_points)
    logger.debug("click quadrature: %d nodes on [0, %g]", nodes.size, t2)

    before = np.exp(-k * np.outer(nodes, photons)) * state.amps
    after = np.exp(-k * np.outer(t2 - nodes, photons))
    flip = _phase_flip(layout).entries.diagonal()

    totals = {
        "p_no_click": _decay(state, k, t2).norm_squared(),
        "p_two_clicks": 0.0,
        "p_residual_photon": 0.0,
    }
    moments = {}
    for detector in Detector:
        rate = math.sqrt(2.0 * k) * jump_operator(layout, detector).entries
        jumped = before @ rate.T
        survived = jumped * after
        if detector is Detector.MINUS:
            survived = survived * flip
        emitted = np.sum(np.abs(jumped) ** 2, axis=1)
        kept = np.sum(np.abs(survived) ** 2, axis=1)

        totals[f"p_click_{detector.name.lower()}"] = float(weights @ kept)
        totals["p_two_clicks"] += float(weights @ (emitted - kept))
        totals["p_residual_photon"] += float(weights @ np.sum(np.abs(survived[:, stored]) ** 2, axis=1))
        moments[detector] = (survived * weights[:, None]).T @ survived.conj()
    totals["moments"] = moments
    return totals


def event_distribution(config: ProtocolConfig, quad_points: int = MIN_QUAD_POINTS) -> ConcentrationResult:
    """Exact detection statistics by quadrature over the first click time"""
    if quad_points < MIN_QUAD_POINTS:
        raise ValidationError(f"quad_points must be >= {MIN_QUAD_POINTS}, got {quad_points}")
    state, p_step1 = run_step1(config)

    coarse = _click_integrals(config, state, quad_points)
    fine = _click_integrals(config, state, 2 * quad_points)
    keys = ("p_no_click", "p_click_plus", "p_click_minus", "p_two_clicks", "p_residual_photon")
    drift = max(abs(coarse[key] - fine[key]) for key in keys)
    if drift > REFINEMENT_TOL:
        raise QuadratureError(f"quadrature refinement changed probabilities by {drift:.3e}")

    total = sum(fine[key] for key in keys[:4])
    if abs(total - 1.0) > COMPLETENESS_TOL:
        raise QuadratureError(f"event probabilities sum to {total:.15g}")

    layout = state.layout
    by_detector = {}
    for detector, moment in fine["moments"].items():
        weight = fine[f"p_click_{detector.name.lower()}"]
        if weight > ZERO_PROBABILITY:
            by_detector[detector] = partial_trace(DensityMatrix(layout, moment / weight), KEPT_ATOMS)

    rho24 = fidelity = None
    p_one = fine["p_click_plus"] + fine["p_click_minus"]
    if p_one > ZERO_PROBABILITY:
        combined = sum(fine["moments"].values()) / p_one
        rho24 = partial_trace(DensityMatrix(layout, combined), KEPT_ATOMS)
        fidelity = fidelity_pure(rho24, bell_target())

    p_success_paper = closed_form_success_probability(config) if config.matched else None
    return ConcentrationResult(
        provenance=Provenance.DETERMINISTIC,
        p_step1=p_step1,
        fidelity=fidelity,
        rho24=rho24,
        p_no_click=fine["p_no_click"],
        p_click_plus=fine["p_click_plus"],
        p_click_minus=fine["p_click_minus"],
        p_two_clicks=fine["p_two_clicks"],
        p_residual_photon=fine["p_residual_photon"],
        p_success_paper=p_success_paper,
        rho24_by_detector=by_detector,
    )
