#!/usr/bin/env python3
"""
Report building and serialization: run reports, sweep rows, verification tables.

JSON reports carry schema_version "1" (see docs/report_schema.md).
CSV tables have a frozen column order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import terminal
from .dynamics import TransferSolution, integrate_amplitudes, transfer_solution
from .errors import NumericalError
from .protocol import (
    ConcentrationResult, ProtocolConfig, Provenance,
    analytic_result, event_distribution, closed_form_rho24, closed_form_step1_probability, run_step1,
)
from .qcore import DensityMatrix
from .trajectories import EstimateReport, Event

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
CSV_COLUMNS = (
    "vary_value", "omega_k", "t1", "alpha", "p_step1",
    "p_no_click", "p_click_plus", "p_click_minus", "p_two_clicks",
    "fidelity_sim", "fidelity_paper", "p_success_paper",
)
EXACT_TOL = 1e-9
SIGMA_LIMIT = 3.0
STOCHASTIC_FLOOR = 1e-9


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INFO = "INFO"
    NA = "N/A"


# Plain-data conversion

def complex_to_dict(value: complex) -> dict:
    return {"re": float(value.real), "im": float(value.imag)}


def matrix_to_dict(rho: Optional[DensityMatrix]) -> Optional[dict]:
    if rho is None:
        return None
    return {
        "labels": list(rho.layout.labels),
        "re": rho.entries.real.tolist(),
        "im": rho.entries.imag.tolist(),
    }


def config_to_dict(config: ProtocolConfig) -> dict:
    return {
        "a": complex_to_dict(config.a),
        "b": complex_to_dict(config.b),
        "c": complex_to_dict(config.c),
        "d": complex_to_dict(config.d),
        "delta": config.dyn.delta,
        "k": config.dyn.k,
        "t2": config.t2,
        "n_max": config.n_max,
        "matched": config.matched,
    }


def transfer_to_dict(solution: TransferSolution) -> dict:
    return {"omega_k": solution.omega_k, "t1": solution.t1, "alpha": solution.alpha}


def result_to_dict(result: ConcentrationResult) -> dict:
    return {
        "provenance": result.provenance.value,
        "p_step1": result.p_step1,
        "p_no_click": result.p_no_click,
        "p_click_plus": result.p_click_plus,
        "p_click_minus": result.p_click_minus,
        "p_two_clicks": result.p_two_clicks,
        "p_residual_photon": result.p_residual_photon,
        "fidelity": result.fidelity,
        "p_success_paper": result.p_success_paper,
        "rho24": matrix_to_dict(result.rho24),
        "rho24_by_detector": {
            detector.value: matrix_to_dict(rho)
            for detector, rho in sorted(result.rho24_by_detector.items(), key=lambda item: item[0].value)
        },
    }


def estimate_to_dict(report: EstimateReport) -> dict:
    return {
        "n_trajectories": report.n_trajectories,
        "seed": report.seed,
        "events": {
            event.value: {
                "count": estimate.count,
                "probability": estimate.probability,
                "stderr": estimate.stderr,
            }
            for event, estimate in report.events.items()
        },
        "n_one_click": report.n_one_click,
        "fidelity_mean": report.fidelity_mean,
        "fidelity_stderr": report.fidelity_stderr,
    }


def discrepancy(reference: Optional[float], value: Optional[float]) -> Optional[dict]:
    """Absolute and relative difference; relative is null for a zero reference"""
    if reference is None or value is None:
        return None
    absolute = abs(value - reference)
    relative = absolute / abs(reference) if reference != 0 else None
    return {"absolute": absolute, "relative": relative}


def to_json(payload: dict) -> str:
    try:
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    except ValueError as exc:
        raise NumericalError(f"report contains non-finite numbers: {exc}") from exc


# Run report

@dataclass(frozen=True, eq=False)
class RunReport:
    config: ProtocolConfig
    transfer: TransferSolution
    results: Mapping[Provenance, ConcentrationResult]
    discrepancies: Mapping[str, Optional[dict]]
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": config_to_dict(self.config),
            "transfer": transfer_to_dict(self.transfer),
            "results": {
                provenance.value: result_to_dict(result)
                for provenance, result in self.results.items()
            },
            "discrepancies": dict(self.discrepancies),
        }


def _rho_gap(left: Optional[DensityMatrix], right: Optional[DensityMatrix]) -> Optional[float]:
    if left is None or right is None:
        return None
    return float(np.max(np.abs(left.entries - right.entries)))


def build_run_report(config: ProtocolConfig, quad_points: int = 64,
                     estimate: Optional[EstimateReport] = None) -> RunReport:
    transfer = transfer_solution(config.dyn)
    results: Dict[Provenance, ConcentrationResult] = {}
    if config.matched:
        results[Provenance.ANALYTIC] = analytic_result(config)
    deterministic = event_distribution(config, quad_points)
    results[Provenance.DETERMINISTIC] = deterministic
    if estimate is not None:
        results[Provenance.MONTE_CARLO] = estimate.to_result(deterministic.p_step1)

    discrepancies: Dict[str, Optional[dict]] = {}
    analytic = results.get(Provenance.ANALYTIC)
    if analytic is not None:
        discrepancies["p_step1:analytic-deterministic"] = discrepancy(analytic.p_step1, deterministic.p_step1)
        discrepancies["fidelity:analytic-deterministic"] = discrepancy(analytic.fidelity, deterministic.fidelity)
        gap = _rho_gap(analytic.rho24, deterministic.rho24)
        discrepancies["rho24:analytic-deterministic"] = None if gap is None else {"absolute": gap, "relative": None}
    if estimate is not None:
        mc = results[Provenance.MONTE_CARLO]
        discrepancies["fidelity:deterministic-monte_carlo"] = discrepancy(deterministic.fidelity, mc.fidelity)
        for event, value in deterministic.event_probabilities().items():
            discrepancies[f"{event}:deterministic-monte_carlo"] = discrepancy(
                value, mc.event_probabilities()[event]
            )
    logger.info("run report: %s", ", ".join(p.value for p in results))
    return RunReport(config, transfer, results, discrepancies)


# CSV rows

def csv_row(config: ProtocolConfig, vary_value: Optional[float] = None,
            quad_points: int = 64) -> list:
    transfer = transfer_solution(config.dyn)
    deterministic = event_distribution(config, quad_points)
    analytic = analytic_result(config) if config.matched else None
    return [
        vary_value,
        transfer.omega_k,
        transfer.t1,
        transfer.alpha,
        deterministic.p_step1,
        deterministic.p_no_click,
        deterministic.p_click_plus,
        deterministic.p_click_minus,
        deterministic.p_two_clicks,
        deterministic.fidelity,
        analytic.fidelity if analytic else None,
        analytic.p_success_paper if analytic else None,
    ]


def to_csv(rows: Sequence[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        for value in row:
            if isinstance(value, float) and not math.isfinite(value):
                raise NumericalError(f"non-finite value {value!r} in CSV row")
        writer.writerow(row)
    return buffer.getvalue()


# Verification table

@dataclass(frozen=True)
class VerificationRow:
    quantity: str
    analytic: Optional[float]
    deterministic: Optional[float]
    monte_carlo: Optional[float]
    max_discrepancy: Optional[float]
    verdict: Verdict
    notes: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "analytic": self.analytic,
            "deterministic": self.deterministic,
            "monte_carlo": self.monte_carlo,
            "max_discrepancy": self.max_discrepancy,
            "verdict": self.verdict.value,
            "notes": dict(self.notes),
        }


def _exact_row(quantity, analytic, deterministic, monte_carlo=None, sigma=None) -> VerificationRow:
    """Closed form vs deterministic within EXACT_TOL; Monte Carlo within 3 sigma"""
    gaps = []
    verdict = Verdict.PASS
    if analytic is not None and deterministic is not None:
        gaps.append(abs(analytic - deterministic))
        if gaps[-1] > EXACT_TOL:
            verdict = Verdict.FAIL
    if monte_carlo is not None and deterministic is not None:
        gaps.append(abs(monte_carlo - deterministic))
        if gaps[-1] > SIGMA_LIMIT * (sigma or 0.0) + STOCHASTIC_FLOOR:
            verdict = Verdict.FAIL
    if not gaps:
        verdict = Verdict.NA
    return VerificationRow(quantity, analytic, deterministic, monte_carlo,
                           max(gaps) if gaps else None, verdict)


def build_verification(config: ProtocolConfig, estimate: EstimateReport,
                       quad_points: int = 64) -> List[VerificationRow]:
    transfer = transfer_solution(config.dyn)
    deterministic = event_distribution(config, quad_points)
    _, p_step1 = run_step1(config)
    analytic = analytic_result(config) if config.matched else None

    rows = [
        _exact_row("alpha", transfer.alpha, integrate_amplitudes(config.dyn, transfer.t1, config.n_max)[1].real),
        _exact_row("p_step1", closed_form_step1_probability(config), p_step1),
        _exact_row(
            "fidelity",
            analytic.fidelity if analytic else None,
            deterministic.fidelity,
            estimate.fidelity_mean,
            estimate.fidelity_stderr,
        ),
    ]

    if analytic is not None and analytic.rho24 is not None and deterministic.rho24 is not None:
        mixture = closed_form_rho24(config)
        gap = _rho_gap(mixture, deterministic.rho24)
        rows.append(VerificationRow(
            "rho24",
            float(mixture.entries[0, 0].real),
            float(deterministic.rho24.entries[0, 0].real),
            None,
            gap,
            Verdict.PASS if gap <= EXACT_TOL else Verdict.FAIL,
        ))
    else:
        rows.append(VerificationRow("rho24", None, None, None, None, Verdict.NA))

    n = estimate.n_trajectories
    for event in Event:
        expected = deterministic.event_probabilities()[event.value]
        rows.append(_exact_row(
            f"p_{event.value}",
            None,
            expected,
            estimate.probability(event),
            math.sqrt(expected * (1.0 - expected) / n),
        ))

    exact_one = deterministic.p_one_click * p_step1
    mc_one = (estimate.probability(Event.ONE_CLICK_PLUS) + estimate.probability(Event.ONE_CLICK_MINUS)) * p_step1
    formula = analytic.p_success_paper if analytic else None
    notes = {
        "ratio_unconditional": exact_one / formula if formula else None,
        "ratio_conditional": deterministic.p_one_click / formula if formula else None,
        "p_one_click_conditional": deterministic.p_one_click,
        "p_residual_photon": deterministic.p_residual_photon,
    }
    rows.append(VerificationRow(
        "p_success_paper",
        formula,
        exact_one,
        mc_one,
        abs(exact_one - formula) if formula is not None else None,
        Verdict.INFO if formula is not None else Verdict.NA,
        notes,
    ))
    return rows


def verification_to_dict(config: ProtocolConfig, rows: Sequence[VerificationRow],
                         estimate: EstimateReport) -> dict:
    failed = [row.quantity for row in rows if row.verdict is Verdict.FAIL]
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(config),
        "transfer": transfer_to_dict(transfer_solution(config.dyn)),
        "monte_carlo": estimate_to_dict(estimate),
        "rows": [row.to_dict() for row in rows],
        "verdict": Verdict.FAIL.value if failed else Verdict.PASS.value,
        "failed": failed,
    }


def _cell(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.10g}"


def format_verification_table(rows: Sequence[VerificationRow], color: bool = False) -> str:
    """Human summary of the verification table"""
    if color:
        terminal.enable_ansi_colors()
    header = ("quantity", "analytic", "deterministic", "monte_carlo", "max_discrepancy", "verdict")
    cells = [header] + [
        (row.quantity, _cell(row.analytic), _cell(row.deterministic),
         _cell(row.monte_carlo), _cell(row.max_discrepancy), row.verdict.value)
        for row in rows
    ]
    widths = [max(len(line[i]) for line in cells) for i in range(len(header))]

    lines = ["  ".join(text.ljust(width) for text, width in zip(header, widths))]
    lines.append(terminal.rule(sum(widths) + 2 * (len(widths) - 1), fancy=color))
    for row, line in zip(rows, cells[1:]):
        text = "  ".join(value.ljust(width) for value, width in zip(line[:-1], widths))
        verdict = terminal.paint(line[-1], terminal.VERDICT_COLORS[line[-1]], enabled=color)
        lines.append(f"{text}  {verdict}")
    failed = sum(row.verdict is Verdict.FAIL for row in rows)
    summary = "all checks passed" if not failed else f"{failed} check(s) failed"
    lines.append(terminal.paint(summary, terminal.RED if failed else terminal.GREEN, enabled=color))
    return "\n".join(lines) + "\n"
