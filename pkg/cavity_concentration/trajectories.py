#!/usr/bin/env python3
"""
Quantum-jump unraveling of the detection stage.

Between clicks the state decays without jumps (each stored photon damps its
amplitude by exp(-k t)). A jump happens when the squared norm falls below a
uniform threshold; the detector is drawn from the weights ||L+ psi||^2 and
||L- psi||^2 with L+/- = sqrt(k) (a_A +/- a_B).

Each trajectory owns a Philox stream keyed by the seed and offset by the
trajectory index, so an estimate does not depend on how trajectories are
spread over worker processes.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import repeat
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import ValidationError
from .protocol import (
    ConcentrationResult, Detector, ProtocolConfig, Provenance,
    bell_fidelity, jump_operator, phase_correct, photon_numbers, run_step1,
)
from .qcore import StateVector

logger = logging.getLogger(__name__)

WORKERS_ENV = "CAVCONC_WORKERS"
JUMP_TIME_TOL = 1e-10
CHUNKS_PER_WORKER = 4


class Event(str, Enum):
    NO_CLICK = "no_click"
    ONE_CLICK_PLUS = "one_click_plus"
    ONE_CLICK_MINUS = "one_click_minus"
    TWO_CLICKS = "two_clicks"


@dataclass(frozen=True)
class Click:
    time: float
    detector: Detector


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    clicks: Tuple[Click, ...]
    final_state_classification: Event
    conditional_fidelity: Optional[float] = None
    final_state: Optional[StateVector] = field(default=None, repr=False)

    def __post_init__(self):
        times = [click.time for click in self.clicks]
        if any(later <= earlier for earlier, later in zip(times, times[1:])):
            raise ValidationError("click times must be strictly increasing")
        if self.final_state_classification is not classify(self.clicks):
            raise ValidationError("classification does not match the click record")


@dataclass(frozen=True)
class EventEstimate:
    count: int
    probability: float
    stderr: float


@dataclass(frozen=True)
class EstimateReport:
    n_trajectories: int
    seed: int
    events: Mapping[Event, EventEstimate]
    n_one_click: int
    fidelity_mean: Optional[float]
    fidelity_stderr: Optional[float]

    def probability(self, event: Event) -> float:
        return self.events[Event(event)].probability

    def stderr(self, event: Event) -> float:
        return self.events[Event(event)].stderr

    def to_result(self, p_step1: float) -> ConcentrationResult:
        return ConcentrationResult(
            provenance=Provenance.MONTE_CARLO,
            p_step1=p_step1,
            fidelity=self.fidelity_mean,
            p_no_click=self.probability(Event.NO_CLICK),
            p_click_plus=self.probability(Event.ONE_CLICK_PLUS),
            p_click_minus=self.probability(Event.ONE_CLICK_MINUS),
            p_two_clicks=self.probability(Event.TWO_CLICKS),
        )


def classify(clicks) -> Event:
    if not clicks:
        return Event.NO_CLICK
    if len(clicks) > 1:
        return Event.TWO_CLICKS
    if clicks[0].detector is Detector.PLUS:
        return Event.ONE_CLICK_PLUS
    return Event.ONE_CLICK_MINUS


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream: Philox keyed by seed, counter offset by index"""
    if not 0 <= seed < 2 ** 128:
        raise ValidationError(f"seed must be in [0, 2**128), got {seed}")
    counter = np.array([0, 0, 0, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ValidationError(f"{WORKERS_ENV} must be >= 1, got {workers}")
    return workers


class JumpSampler:
    """Precomputed step-one state and jump operators for one configuration"""

    def __init__(self, config: ProtocolConfig):
        self.config = config
        self.start, _ = run_step1(config)
        layout = self.start.layout
        self.photons = photon_numbers(layout)
        self.levels = int(self.photons.max()) + 1
        self.k = config.dyn.k
        self.jumps = {
            detector: math.sqrt(2.0 * self.k) * jump_operator(layout, detector).entries
            for detector in Detector
        }

    def _decayed(self, amps: np.ndarray, t: float) -> np.ndarray:
        return amps * np.exp(-self.k * t * self.photons)

    def waiting_time(self, amps: np.ndarray, threshold: float, horizon: float) -> Optional[float]:
        """Time until the squared norm of normalized amps drops to threshold, None past horizon"""
        if self.k == 0.0 or horizon <= 0.0:
            return None
        by_photons = np.bincount(self.photons, weights=np.abs(amps) ** 2, minlength=self.levels)
        # squared norm is a polynomial in x = exp(-2 k tau), increasing in x
        at_horizon = math.exp(-2.0 * self.k * horizon)
        if float(np.polyval(by_photons[::-1], at_horizon)) > threshold:
            return None
        if np.any(by_photons[3:] > 0.0):
            return self._waiting_time_search(by_photons, threshold, horizon)
        w0, w1, w2 = (float(w) for w in np.pad(by_photons, (0, 3))[:3])
        gap = threshold - w0
        if gap <= 0.0:
            return horizon
        x = 2.0 * gap / (w1 + math.sqrt(w1 * w1 + 4.0 * w2 * gap))
        return min(max(-math.log(x) / (2.0 * self.k), 0.0), horizon)

    def _waiting_time_search(self, by_photons: np.ndarray, threshold: float, horizon: float) -> float:
        terms = [(float(weight), -2.0 * self.k * count)
                 for count, weight in enumerate(by_photons) if weight > 0.0]

        def excess(tau: float) -> float:
            return sum(weight * math.exp(rate * tau) for weight, rate in terms) - threshold

        return brentq(excess, 0.0, horizon, xtol=JUMP_TIME_TOL)

    def run(self, rng: np.random.Generator) -> TrajectoryRecord:
        t2 = self.config.t2
        amps = np.array(self.start.amps)
        now = 0.0
        clicks: List[Click] = []

        while True:
            tau = self.waiting_time(amps, rng.random(), t2 - now)
            if tau is None:
                amps = self._decayed(amps, t2 - now)
                break
            amps = self._decayed(amps, tau)
            now += tau
            candidates = {detector: jump @ amps for detector, jump in self.jumps.items()}
            weights = {detector: float(np.vdot(v, v).real) for detector, v in candidates.items()}
            total = weights[Detector.PLUS] + weights[Detector.MINUS]
            if total <= 0.0:
                amps = self._decayed(amps, t2 - now)
                break
            detector = Detector.PLUS if rng.random() * total < weights[Detector.PLUS] else Detector.MINUS
            amps = candidates[detector] / math.sqrt(weights[detector])
            clicks.append(Click(now, detector))

        final = StateVector(self.start.layout, amps).normalized()
        event = classify(clicks)
        fidelity = None
        if event is Event.ONE_CLICK_MINUS:
            final = phase_correct(final)
        if event in (Event.ONE_CLICK_PLUS, Event.ONE_CLICK_MINUS):
            fidelity = bell_fidelity(final)
        return TrajectoryRecord(tuple(clicks), event, fidelity, final)


@lru_cache(maxsize=32)
def _sampler(config: ProtocolConfig) -> JumpSampler:
    return JumpSampler(config)


def run_trajectory(config: ProtocolConfig, rng: np.random.Generator) -> TrajectoryRecord:
    """Sample one detection record over [0, t2]"""
    return _sampler(config).run(rng)


def _run_chunk(config: ProtocolConfig, seed: int, start: int, stop: int) -> Tuple[Dict[Event, int], np.ndarray]:
    counts = {event: 0 for event in Event}
    fidelities = []
    for index in range(start, stop):
        record = run_trajectory(config, trajectory_rng(seed, index))
        counts[record.final_state_classification] += 1
        if record.conditional_fidelity is not None:
            fidelities.append(record.conditional_fidelity)
    return counts, np.array(fidelities, dtype=float)


def _chunk_bounds(n: int, workers: int) -> List[Tuple[int, int]]:
    pieces = min(n, workers * CHUNKS_PER_WORKER)
    edges = np.linspace(0, n, pieces + 1).astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def estimate(config: ProtocolConfig, n: int, seed: int, workers: Optional[int] = None) -> EstimateReport:
    """Aggregate n trajectories; identical for every worker count"""
    if n < 1:
        raise ValidationError(f"number of trajectories must be >= 1, got {n}")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")

    bounds = _chunk_bounds(n, workers)
    starts = [lo for lo, _ in bounds]
    stops = [hi for _, hi in bounds]
    logger.debug("running %d trajectories in %d chunks on %d workers", n, len(bounds), workers)
    if workers == 1:
        chunks = [_run_chunk(config, seed, lo, hi) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, repeat(config), repeat(seed), starts, stops))

    counts = {event: sum(chunk[0][event] for chunk in chunks) for event in Event}
    fidelities = np.concatenate([chunk[1] for chunk in chunks])

    events = {}
    for event, count in counts.items():
        p = count / n
        events[event] = EventEstimate(count, p, math.sqrt(p * (1.0 - p) / n))

    n_one = int(fidelities.size)
    fidelity_mean = fidelity_stderr = None
    if n_one:
        fidelity_mean = math.fsum(fidelities) / n_one
    if n_one > 1:
        spread = math.fsum((fidelities - fidelity_mean) ** 2) / (n_one - 1)
        fidelity_stderr = math.sqrt(spread / n_one)
    if n_one == 0:
        logger.warning("no one-click trajectories among %d; conditional fidelity undefined", n)

    return EstimateReport(
        n_trajectories=n,
        seed=seed,
        events=events,
        n_one_click=n_one,
        fidelity_mean=fidelity_mean,
        fidelity_stderr=fidelity_stderr,
    )
