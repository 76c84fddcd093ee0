"""Returns to the origin of simple random walk on Z^d.

A walk counts its visits to the origin after time 0 and stops when its
L-infinity norm reaches ``escape_radius`` (mirroring boundary killing in the
engine) or after ``max_steps`` steps; the latter leaves it censored.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from arwlab import _hashing
from arwlab._core import mix64
from arwlab.parallel import run_chunks

DEFAULT_ESCAPE_RADIUS = 1000
DEFAULT_MAX_STEPS = 10**7
CENSORING_LIMIT = 1e-3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_WALK_TAG = np.uint64(_hashing.WALK_TAG)
_LOW = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


class CensoringError(RuntimeError):
    pass


@njit(cache=True)
def _walk(d, rng, radius, max_steps):
    pos = np.zeros(d, np.int64)
    two_d = np.uint64(2 * d)
    nonzero = 0
    returns = 0
    steps = 0
    h = np.uint64(0)
    spare = False
    while steps < max_steps:
        if spare:
            r = h >> _S32
            spare = False
        else:
            rng = rng + _GOLDEN
            h = mix64(rng)
            r = h & _LOW
            spare = True
        j = np.int64((r * two_d) >> _S32)
        axis = j >> 1
        old = pos[axis]
        new = old + 1 if j & 1 else old - 1
        pos[axis] = new
        steps += 1
        if old == 0:
            nonzero += 1
        elif new == 0:
            nonzero -= 1
            if nonzero == 0:
                returns += 1
        if new >= radius or new <= -radius:
            return returns, steps, True
    return returns, steps, False


@njit(cache=True)
def _walk_batch(d, master, start, count, radius, max_steps):
    out = np.zeros((count, 3), np.int64)
    base = mix64(master ^ _WALK_TAG)
    for i in range(count):
        rng = mix64(base + _GOLDEN * (np.uint64(start + i) + np.uint64(1)))
        r, s, e = _walk(d, rng, radius, max_steps)
        out[i, 0] = r
        out[i, 1] = s
        out[i, 2] = e
    return out


def _batch(d, master, start, count, radius, max_steps):
    return _walk_batch(d, np.uint64(master), start, count, radius, max_steps)


@dataclass(frozen=True)
class ReturnsSample:
    returns: int
    steps_used: int
    escaped: bool

    @property
    def censored(self) -> bool:
        return not self.escaped


@dataclass(frozen=True)
class ReturnsEstimate:
    d: int
    mean: float
    std_error: float
    trials: int
    censoring_rate: float
    divergent: bool = False
    truncated_mean: float = float("nan")
    escape_radius: int = DEFAULT_ESCAPE_RADIUS
    max_steps: int = DEFAULT_MAX_STEPS
    master_seed: int = 0

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


def simulate_returns(d: int, seed: int, escape_radius: int = DEFAULT_ESCAPE_RADIUS,
                     max_steps: int = DEFAULT_MAX_STEPS) -> ReturnsSample:
    """One walk, indexed as walk 0 of master seed ``seed``."""
    _validate(d, escape_radius)
    r, s, e = _batch(d, _hashing.parse_seed(seed), 0, 1, escape_radius, max_steps)[0]
    return ReturnsSample(int(r), int(s), bool(e))


def sample_returns(d: int, trials: int, escape_radius: int = DEFAULT_ESCAPE_RADIUS,
                   max_steps: int = DEFAULT_MAX_STEPS, master_seed: int = 0,
                   workers: int = 1) -> np.ndarray:
    """(trials, 3) array of (returns, steps, escaped) for walks 0..trials-1."""
    _validate(d, escape_radius)
    seed = _hashing.parse_seed(master_seed)
    return run_chunks(_batch, trials, workers, d, seed, radius=escape_radius, max_steps=max_steps)


def expected_returns(d: int, trials: int, escape_radius: int = DEFAULT_ESCAPE_RADIUS,
                     max_steps: int = DEFAULT_MAX_STEPS, master_seed: int = 0,
                     workers: int = 1, allow_censored: bool = False) -> ReturnsEstimate:
    """Monte Carlo E[R(Z^d)] with its standard error.

    Dimensions 1 and 2 are recurrent: the estimate is flagged divergent and
    ``mean`` is infinite (the radius-limited average is kept in
    ``truncated_mean``). In transient dimensions a censoring rate above
    ``CENSORING_LIMIT`` raises unless ``allow_censored``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    data = sample_returns(d, trials, escape_radius, max_steps, master_seed, workers)
    r = data[:, 0].astype(np.float64)
    censoring = float(1.0 - data[:, 2].mean())
    mean = float(r.mean())
    se = float(r.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("inf")
    common = dict(d=d, trials=trials, censoring_rate=censoring, truncated_mean=mean,
                  escape_radius=escape_radius, max_steps=max_steps, master_seed=master_seed)
    if d <= 2 or censoring > CENSORING_LIMIT:
        if d >= 3 and not allow_censored:
            raise CensoringError(
                f"censoring rate {censoring:.4g} exceeds {CENSORING_LIMIT}; raise max_steps or "
                "pass allow_censored=True")
        if d <= 2:
            return ReturnsEstimate(mean=float("inf"), std_error=float("inf"), divergent=True, **common)
        return ReturnsEstimate(mean=mean, std_error=se, divergent=True, **common)
    return ReturnsEstimate(mean=mean, std_error=se, **common)


def returns_asymptotic(d: int) -> float:
    """Leading-order surrogate 1/(2d) for E[R(Z^d)]."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return 1.0 / (2 * d)


def _validate(d, escape_radius):
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    if escape_radius < 1:
        raise ValueError(f"escape_radius must be >= 1, got {escape_radius}")
