"""Toppling and stabilization on a finite box with boundary killing.

Site states are encoded as ints: ``SLEEPING`` (-1), ``EMPTY`` (0) or the
number of active particles. A :class:`Configuration` carries the states, the
odometer and the number of particles killed at the boundary so far.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from arwlab import _core, _hashing
from arwlab.lattice import Box, Site, make_box
from arwlab.stacks import StackSource

SLEEPING = _core.SLEEPING
EMPTY = _core.EMPTY

MAX_STEPS = 10**9


class EngineError(RuntimeError):
    """Stabilization exceeded the step ceiling; finite-volume runs terminate a.s., so this is a bug."""


class CouplingViolation(AssertionError):
    pass


def describe(code: int) -> str:
    if code == SLEEPING:
        return "Sleeping"
    if code == EMPTY:
        return "Empty"
    return f"Active({code})"


@dataclass
class Configuration:
    box: Box
    states: np.ndarray
    odometer: np.ndarray = None
    killed: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64).copy()
        if self.states.shape != (self.box.size,):
            raise ValueError(f"expected {self.box.size} site states, got shape {self.states.shape}")
        if np.any(self.states < SLEEPING):
            raise ValueError("site states must be -1 (sleeping), 0 (empty) or an active count")
        if self.odometer is None:
            self.odometer = np.zeros(self.box.size, dtype=np.int64)
        else:
            self.odometer = np.asarray(self.odometer, dtype=np.int64).copy()

    @classmethod
    def empty(cls, box: Box) -> "Configuration":
        return cls(box, np.zeros(box.size, dtype=np.int64))

    @classmethod
    def from_sites(cls, box: Box, occupation: Mapping[Sequence[int], int]) -> "Configuration":
        cfg = cls.empty(box)
        for x, code in occupation.items():
            cfg.states[box.index(x)] = code
        return cfg

    @classmethod
    def delta(cls, box: Box, site: Sequence[int] | None = None, count: int = 1) -> "Configuration":
        return cls.from_sites(box, {box.origin if site is None else tuple(site): count})

    def copy(self) -> "Configuration":
        return Configuration(self.box, self.states, self.odometer, self.killed)

    def __getitem__(self, x) -> int:
        return int(self.states[self.box.index(x)])

    def odom(self, x) -> int:
        return int(self.odometer[self.box.index(x)])

    def particles(self) -> int:
        return int(np.where(self.states == SLEEPING, 1, self.states).sum())

    def sleepers(self) -> np.ndarray:
        return self.states == SLEEPING

    def has_sleepers(self) -> bool:
        return bool(np.any(self.states == SLEEPING))

    def same_state(self, other: "Configuration") -> bool:
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.odometer, other.odometer)
        )

    def to_snapshot(self, seed: int, **extra) -> dict:
        """JSON-ready snapshot; states are run-length encoded as [code, run] pairs."""
        runs = []
        for code in self.states.tolist():
            if runs and runs[-1][0] == code:
                runs[-1][1] += 1
            else:
                runs.append([code, 1])
        snap = {
            "d": self.box.d,
            "n": self.box.n,
            "seed": int(seed),
            "states": runs,
            "odometer": self.odometer.tolist(),
        }
        snap.update(extra)
        return snap

    @classmethod
    def from_snapshot(cls, snap: Mapping) -> "Configuration":
        box = make_box(snap["d"], snap["n"])
        states = []
        for code, run in snap["states"]:
            states.extend([code] * run)
        return cls(box, states, snap.get("odometer"), snap.get("killed", 0))


def dump_snapshot(cfg: Configuration, seed: int, **extra) -> str:
    return json.dumps(cfg.to_snapshot(seed, **extra), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class StabilizationMode:
    """``kind`` is "true", "weak" or "strong"; U is ignored for "true"."""

    kind: str = "true"
    U: frozenset = frozenset()

    def __post_init__(self):
        if self.kind not in ("true", "weak", "strong"):
            raise ValueError(f"unknown stabilization mode {self.kind!r}")
        object.__setattr__(self, "U", frozenset(tuple(x) for x in self.U))

    def rules(self, box: Box) -> np.ndarray:
        rule = np.zeros(box.size, dtype=np.int8)
        if self.kind != "true":
            for x in self.U:
                rule[box.index(x)] = _core.RULE_WEAK if self.kind == "weak" else _core.RULE_STRONG
        return rule


TRUE_STAB = StabilizationMode()


def Weak(U: Iterable[Sequence[int]]) -> StabilizationMode:
    return StabilizationMode("weak", frozenset(tuple(x) for x in U))


def Strong(U: Iterable[Sequence[int]]) -> StabilizationMode:
    return StabilizationMode("strong", frozenset(tuple(x) for x in U))


def _kernel_args(cfg: Configuration, src: StackSource):
    if src.params.d != cfg.box.d:
        raise ValueError(f"stack source is for d={src.params.d}, configuration for d={cfg.box.d}")
    return (cfg.box.neighbor_table, cfg.box.site_keys, np.uint64(src.seed),
            src.params.p_s, src.params.two_d)


def _check(status: int, what: str):
    if status == _core.STATUS_CEILING:
        raise EngineError(f"{what} exceeded {MAX_STEPS} instruction consumptions")


def topple(cfg: Configuration, src: StackSource, x: Sequence[int], acceptable: bool = False,
           mode: StabilizationMode = TRUE_STAB) -> Configuration:
    """Execute the next instruction of x's stack; returns a new configuration.

    Without ``acceptable`` the site must hold an active particle; with it a
    sleeping particle is woken first.
    """
    i = cfg.box.index(x)
    s = int(cfg.states[i])
    if s == EMPTY:
        raise ValueError(f"cannot topple empty site {tuple(x)}")
    if s == SLEEPING and not acceptable:
        raise ValueError(f"site {tuple(x)} is sleeping; use an acceptable toppling to wake it")
    out = cfg.copy()
    nbr, keys, seed, p_s, two_d = _kernel_args(cfg, src)
    ins, t = _core.topple(i, out.states, out.odometer, mode.rules(cfg.box), nbr, keys, seed, p_s, two_d)
    if ins >= 0 and t < 0:
        out.killed += 1
    return out


def is_stable(cfg: Configuration, x: Sequence[int], mode: StabilizationMode = TRUE_STAB) -> bool:
    s = cfg[x]
    if mode.kind == "true" or tuple(x) not in mode.U:
        return s in (EMPTY, SLEEPING)
    if mode.kind == "weak":
        return s in (EMPTY, SLEEPING, 1)
    return s == EMPTY


def stabilize(cfg: Configuration, src: StackSource, mode: StabilizationMode = TRUE_STAB,
              order: str = "fifo", order_seed: int = 0, max_steps: int = MAX_STEPS) -> Configuration:
    """Topple unstable sites (under ``mode``) until none remain.

    ``order`` is "fifo" (the default, deduplicated queue) or "random" (one
    uniformly chosen unstable site per step, driven by ``order_seed``). The
    returned configuration carries the stabilizing odometer, started from
    ``cfg.odometer``.
    """
    out = cfg.copy()
    nbr, keys, seed, p_s, two_d = _kernel_args(cfg, src)
    if order not in ("fifo", "random"):
        raise ValueError(f"unknown order policy {order!r}")
    code = _core.ORDER_FIFO if order == "fifo" else _core.ORDER_RANDOM
    oseed = np.uint64(_hashing.mix64(order_seed ^ _hashing.ORDER_TAG))
    killed, _, status = _core.stabilize(out.states, out.odometer, mode.rules(cfg.box), nbr, keys,
                                        seed, p_s, two_d, max_steps, code, oseed)
    _check(status, "stabilization")
    out.killed += int(killed)
    return out


@dataclass
class ChanceRecord:
    ch: int
    ach: int
    sleep_trials: list[bool]
    final_config: Configuration
    first_success_iteration: int | None = None
    jumps_into_origin: int = 0

    @property
    def succeeded(self) -> bool:
        return self.first_success_iteration is not None


def _require_active(sigma: Configuration):
    if sigma.has_sleepers():
        raise ValueError("the iterative strong stabilization needs an all-active configuration")


def _strong_run(sigma: Configuration, src: StackSource, max_steps: int):
    _require_active(sigma)
    box = sigma.box
    o = box.origin_index
    cfg = sigma.copy()
    snap = sigma.copy()
    rule = Weak([box.origin]).rules(box)
    nbr, keys, seed, p_s, two_d = _kernel_args(sigma, src)
    ch, trials, first, killed, _, status = _core.strong_iterative(
        o, cfg.states, cfg.odometer, rule, nbr, keys, seed, p_s, two_d, max_steps,
        snap.states, snap.odometer)
    _check(status, "strong stabilization")
    cfg.killed += int(killed)
    return int(ch), [bool(t) for t in trials], int(first), cfg, snap


def strong_stabilize_iterative(sigma: Configuration, src: StackSource,
                               max_steps: int = MAX_STEPS) -> ChanceRecord:
    """Strongly stabilize w.r.t. the origin by the iterative jump-out procedure.

    Pre-step: weakly stabilize w.r.t. the origin. Then, while the origin is
    occupied: topple its lone particle until it jumps (sleep instructions on
    the way mark the sleep trial successful), weakly stabilize again, and
    count one completed iteration.
    """
    ch, trials, first, cfg, _ = _strong_run(sigma, src, max_steps)
    return ChanceRecord(ch=ch, ach=max(ch - 1, 0), sleep_trials=trials, final_config=cfg,
                        first_success_iteration=first or None)


def coupled_true_vs_strong(sigma: Configuration, src: StackSource,
                           max_steps: int = MAX_STEPS) -> tuple[bool, ChanceRecord]:
    """Run true and iterative strong stabilization on the same stacks and check the coupling.

    Origin sleeping in the true stabilization iff some sleep trial
    succeeded. Beyond the equivalence, the states must match exactly: with a
    first success at iteration k the true result is the state just before
    jump-out k with the origin asleep (odometer +1 there); with no success
    it equals the strongly stable state.
    """
    ch, trials, first, cfg, snap = _strong_run(sigma, src, max_steps)
    true_cfg = stabilize(sigma, src, TRUE_STAB, max_steps=max_steps)
    occupied = true_cfg[sigma.box.origin] == SLEEPING
    record = ChanceRecord(ch=ch, ach=max(ch - 1, 0), sleep_trials=trials, final_config=cfg,
                          first_success_iteration=first or None)
    if occupied != record.succeeded:
        raise CouplingViolation(
            f"origin sleeping in true stabilization: {occupied}, sleep trials: {trials}")
    if record.succeeded:
        o = sigma.box.origin_index
        snap.states[o] = SLEEPING
        snap.odometer[o] += 1
        expected = snap
    else:
        expected = cfg
    if not expected.same_state(true_cfg):
        raise CouplingViolation("true stabilization does not match the strong procedure's state")
    return occupied, record


@dataclass
class FillResult:
    config: Configuration
    filled: int
    size: int

    @property
    def fraction(self) -> float:
        return self.filled / self.size if self.size else 1.0

    @property
    def fills(self) -> bool:
        return self.filled == self.size


def fill_attempt(sigma: Configuration, src: StackSource, U: Iterable[Sequence[int]]) -> FillResult:
    """Weakly stabilize w.r.t. U and count the sites of U left holding exactly one active particle."""
    U = [tuple(x) for x in U]
    out = stabilize(sigma, src, Weak(U))
    filled = sum(1 for x in set(U) if out[x] == 1)
    return FillResult(out, filled, len(set(U)))


@dataclass(frozen=True)
class FiveStepRecord:
    X: Site
    jump1: bool
    jump2: bool
    tau1_X_sleeping: bool
    ch_ge_2: bool
    ch: int = 0


def five_step_experiment(tau: Configuration, src: StackSource, max_steps: int = MAX_STEPS,
                         final: dict | None = None) -> FiveStepRecord:
    """Strong stabilization split into Steps 1-5 of the lower-bound argument.

    1. weakly stabilize w.r.t. the origin; 2. jump the origin's particle out,
    landing on X; 3. if X holds two particles, topple X until one jumps
    (jump1 if it lands on the origin); 4. topple the lone particle at X once
    (jump2 if it jumps to the origin); 5. finish the strong stabilization.

    If ``final`` is a dict, the end configuration is stored under "config".
    """
    box = tau.box
    if box.n < 1:
        raise ValueError("the box must contain the origin's neighbors")
    for x in box.ball():
        if tau[x] != 1:
            raise ValueError(f"tau must fill B_1; site {x} is {describe(tau[x])}")
    _require_active(tau)
    cfg = tau.copy()
    rule = Weak([box.origin]).rules(box)
    nbr, keys, seed, p_s, two_d = _kernel_args(tau, src)
    x_dir, j1, j2, slp, ch, killed, _, status = _core.five_step(
        box.origin_index, cfg.states, cfg.odometer, rule, nbr, keys, seed, p_s, two_d, max_steps)
    _check(status, "five-step strong stabilization")
    cfg.killed += int(killed)
    if final is not None:
        final["config"] = cfg
    X = box.site(int(nbr[box.origin_index, x_dir]))
    return FiveStepRecord(X=X, jump1=bool(j1), jump2=bool(j2), tau1_X_sleeping=bool(slp),
                          ch_ge_2=ch >= 2, ch=int(ch))


@dataclass
class LeastActionReport:
    stabilizing_odometer: np.ndarray
    trials: int
    violations: list = field(default_factory=list)
    wakes: int = 0
    max_excess: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def acceptable_stabilize(cfg: Configuration, src: StackSource, order_seed: int,
                         wake_prob: float = 0.2, max_wakes: int = 5,
                         mode: StabilizationMode = TRUE_STAB,
                         max_steps: int = MAX_STEPS) -> tuple[Configuration, int]:
    """Stabilize through a random acceptable-toppling sequence that may wake sleepers.

    Returns the stable configuration and the number of enforced wake-ups.
    """
    out = cfg.copy()
    nbr, keys, seed, p_s, two_d = _kernel_args(cfg, src)
    oseed = np.uint64(_hashing.mix64(order_seed ^ _hashing.ORDER_TAG))
    killed, _, wakes, status = _core.acceptable_replay(
        out.states, out.odometer, mode.rules(cfg.box), nbr, keys, seed, p_s, two_d, max_steps,
        oseed, wake_prob, max_wakes)
    _check(status, "acceptable stabilization")
    out.killed += int(killed)
    return out, int(wakes)


def least_action_replay(cfg: Configuration, src: StackSource, trials: int, seed: int = 0,
                        wake_prob: float = 0.2, max_wakes: int = 5,
                        mode: StabilizationMode = TRUE_STAB) -> LeastActionReport:
    """Compare random acceptable-toppling routes to stability with the stabilizing odometer."""
    ref = stabilize(cfg, src, mode)
    report = LeastActionReport(ref.odometer.copy(), trials)
    for t in range(trials):
        out, wakes = acceptable_stabilize(cfg, src, _hashing.trial_seed(seed, t), wake_prob,
                                          max_wakes, mode)
        report.wakes += wakes
        excess = out.odometer - ref.odometer
        if np.any(excess < 0):
            report.violations.append({"trial": t, "sites": np.flatnonzero(excess < 0).tolist()})
        else:
            report.max_excess = max(report.max_excess, int(excess.max(initial=0)))
    return report
