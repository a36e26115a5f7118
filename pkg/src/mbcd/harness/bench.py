"""Monte Carlo false-alarm and delay benchmarks on univariate Gaussian streams.

The library holds the pre-change model N(0, 1) (active) and the alternative
N(mu1, 1); the bank also carries the new-context statistic, and any crossing
counts as an alarm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..changepoint import CusumBank, DetectorConfig, bank_update, decide_context, predicted_worst_delay
from ..gaussian import DiagonalGaussian, kl_divergence


@dataclass
class FarResult:
    streams: int
    length: int
    alarms: int
    mean_run_length: float
    far: float


@dataclass
class DelayResult:
    trials: int
    mean_delay: float
    predicted: float
    undetected: int


def _library(mu1: float):
    return {1: DiagonalGaussian([0.0], [1.0]), 2: DiagonalGaussian([mu1], [1.0])}


def far_benchmark(h: float = 5.0, delta: float = 2.0, mu1: float = 2.0, streams: int = 200,
                  length: int = 2000, seed: int = 0, shift: str = "variance") -> FarResult:
    """Alarms on pre-change data only; the bank restarts after each alarm, so
    total steps / alarms is a renewal estimate of the mean run length."""
    rng = np.random.default_rng(seed)
    cfg = DetectorConfig(h=h, delta=delta, shift=shift)
    lib = _library(mu1)
    alarms = 0
    for _ in range(streams):
        bank = CusumBank.create([1, 2], 1)
        for y in rng.standard_normal(length):
            bank, _ = bank_update(bank, lib, [y], cfg)
            if decide_context(bank, cfg) != 1:
                alarms += 1
                bank = CusumBank.create([1, 2], 1)
    total = streams * length
    mrl = total / alarms if alarms else math.inf
    return FarResult(streams, length, alarms, mrl, alarms / total)


def delay_benchmark(h: float = 5.0, delta: float = 2.0, mu1: float = 2.0, trials: int = 500,
                    max_steps: int = 1000, seed: int = 0, shift: str = "variance") -> DelayResult:
    """Statistics start at zero at the change (the worst case for CUSUM); the
    delay is the index of the first post-change sample that raises an alarm,
    counted from 1."""
    rng = np.random.default_rng(seed)
    cfg = DetectorConfig(h=h, delta=delta, shift=shift)
    lib = _library(mu1)
    delays, undetected = [], 0
    for _ in range(trials):
        bank = CusumBank.create([1, 2], 1)
        for n, y in enumerate(mu1 + rng.standard_normal(max_steps), start=1):
            bank, _ = bank_update(bank, lib, [y], cfg)
            if decide_context(bank, cfg) != 1:
                delays.append(n)
                break
        else:
            undetected += 1
    kl = kl_divergence(lib[2], lib[1])
    mean = float(np.mean(delays)) if delays else math.inf
    return DelayResult(trials, mean, predicted_worst_delay(h, kl), undetected)
