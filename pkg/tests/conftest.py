"""Shared fixtures for the cavity_concentration test suite."""

import math

import pytest

from cavity_concentration.dynamics import DynamicsParams, transfer_solution
from cavity_concentration.protocol import InputPair, ProtocolConfig

SQRT_HALF = 1.0 / math.sqrt(2.0)


def real_pair(a: float) -> InputPair:
    return InputPair.normalized(a, math.sqrt(1.0 - a * a))


def matched_config(a=SQRT_HALF, delta=1.0, k=0.1, t2=2.0, n_max=2) -> ProtocolConfig:
    return ProtocolConfig.matched_pairs(real_pair(a), DynamicsParams(delta, k), t2, n_max)


def unmatched_config(a=0.6, c=0.3, delta=1.0, k=0.2, t2=1.5, n_max=2) -> ProtocolConfig:
    return ProtocolConfig(real_pair(a), real_pair(c), DynamicsParams(delta, k), t2, n_max)


def independent_emission(config: ProtocolConfig) -> dict:
    """Event probabilities when each stored photon leaks independently with survival exp(-2 k t2)"""
    alpha_sq = transfer_solution(config.dyn).alpha ** 2
    survive = math.exp(-2.0 * config.dyn.k * config.t2)
    p_a = abs(config.a) ** 2 * alpha_sq + abs(config.b) ** 2
    p_b = abs(config.c) ** 2 * alpha_sq + abs(config.d) ** 2
    x, y = abs(config.a) ** 2 * alpha_sq / p_a, abs(config.b) ** 2 / p_a
    u, v = abs(config.c) ** 2 * alpha_sq / p_b, abs(config.d) ** 2 / p_b

    residual = 2.0 * x * u * survive * (1.0 - survive)
    p_one = residual + (x * v + y * u) * (1.0 - survive)
    return {
        "p_step1": p_a * p_b,
        "no_click": (x * survive + y) * (u * survive + v),
        "one_click_plus": p_one / 2.0,
        "one_click_minus": p_one / 2.0,
        "two_clicks": x * u * (1.0 - survive) ** 2,
        "residual_photon": residual,
    }


@pytest.fixture
def matched():
    """a = b = 1/sqrt(2), delta = 1, k = 0.1, t2 = 2"""
    return matched_config()


@pytest.fixture
def unmatched():
    return unmatched_config()


@pytest.fixture
def make_matched():
    return matched_config


@pytest.fixture
def make_unmatched():
    return unmatched_config


@pytest.fixture
def emission_oracle():
    return independent_emission
