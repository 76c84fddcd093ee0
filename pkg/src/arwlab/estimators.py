"""Monte Carlo estimators and verification suites built on the engine kernels.

Every estimator draws trial i from (master_seed, i) only, so reports are
reproducible bit-for-bit and independent of the worker count.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from arwlab import _core, _hashing
from arwlab import engine
from arwlab.engine import MAX_STEPS, Configuration, EngineError, Weak
from arwlab.lattice import Box, make_box
from arwlab.parallel import run_chunks
from arwlab.stacks import Params, StackSource
from arwlab.walks import ReturnsEstimate, returns_asymptotic

Z95 = 1.959963984540054
Z_PASS = 4.0


@dataclass(frozen=True)
class InitialLaw:
    """Law of the initial configuration.

    kind: "fixed" (the sites in ``sites``; sites outside the box are
    dropped), "poisson" or "bernoulli" (i.i.d. with mean ``rho``).
    ``filled_ball`` overrides the origin and its neighbors with one active
    particle each.
    """

    kind: str
    rho: float = 0.0
    sites: tuple = ()
    filled_ball: bool = False

    def __post_init__(self):
        if self.kind not in ("fixed", "poisson", "bernoulli"):
            raise ValueError(f"unknown law {self.kind!r}")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.kind == "bernoulli" and self.rho > 1:
            raise ValueError("a Bernoulli occupation law needs rho <= 1")

    def kernel_args(self, box: Box):
        base = np.zeros(box.size, dtype=np.int64)
        for x, code in self.sites:
            if tuple(x) in box:
                base[box.index(x)] = code
        fill = box.mask(box.ball()) if self.filled_ball else np.zeros(box.size, dtype=bool)
        code = {"fixed": _core.LAW_FIXED, "poisson": _core.LAW_POISSON,
                "bernoulli": _core.LAW_BERNOULLI}[self.kind]
        return code, float(self.rho), base, fill

    def all_active(self) -> bool:
        return not any(code == _core.SLEEPING for _, code in self.sites)

    def label(self) -> str:
        if self.kind == "fixed":
            body = "delta" if _is_delta(self.sites) else ("fixed" if self.sites else "empty")
        else:
            body = f"{self.kind}({self.rho:g})"
        return f"filled_ball+{body}" if self.filled_ball else body


def _is_delta(sites) -> bool:
    return len(sites) == 1 and sites[0][1] == 1 and not any(sites[0][0])


def Deterministic(occupation: Mapping[Sequence[int], int]) -> InitialLaw:
    return InitialLaw("fixed", sites=tuple((tuple(x), int(c)) for x, c in occupation.items()))


def DeltaOrigin(d: int) -> InitialLaw:
    return Deterministic({(0,) * d: 1})


def Empty() -> InitialLaw:
    return InitialLaw("fixed")


def IIDPoisson(rho: float) -> InitialLaw:
    return InitialLaw("poisson", rho)


def IIDBernoulliPair(rho: float) -> InitialLaw:
    return InitialLaw("bernoulli", rho)


def FilledBall(extra: InitialLaw) -> InitialLaw:
    return InitialLaw(extra.kind, extra.rho, extra.sites, True)


def parse_law(text: str, d: int) -> InitialLaw:
    """Parse a CLI law: delta, empty, poisson:RHO, bernoulli:RHO, filled:<law>."""
    text = text.strip().lower()
    if text.startswith("filled:"):
        return FilledBall(parse_law(text[len("filled:"):], d))
    if text in ("filled", "filled_ball"):
        return FilledBall(Empty())
    if text == "delta":
        return DeltaOrigin(d)
    if text == "empty":
        return Empty()
    kind, _, rho = text.partition(":")
    if kind in ("poisson", "bernoulli") and rho:
        return InitialLaw(kind, float(rho))
    raise ValueError(f"cannot parse law {text!r}; use delta, empty, poisson:RHO, bernoulli:RHO or filled:LAW")


@dataclass(frozen=True)
class EstimateReport:
    value: float
    std_error: float
    trials: int
    master_seed: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("an estimate needs at least one trial")

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.value - Z95 * self.std_error, self.value + Z95 * self.std_error)

    def z(self, target: float) -> float:
        return _z(self.value - target, self.std_error)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        return out


def _z(diff: float, se: float) -> float:
    if se == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / se


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return float(x.mean()), math.inf
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _binomial(hits: np.ndarray) -> tuple[float, float]:
    p = float(np.mean(hits))
    return p, math.sqrt(p * (1.0 - p) / hits.size)


# ---------------------------------------------------------------- kernel glue

def _setup(params: Params, n: int, law: InitialLaw):
    box = make_box(params.d, n)
    return box, law.kernel_args(box)


def trial_instance(params: Params, n: int, law: InitialLaw, master_seed, trial: int = 0
                   ) -> tuple[Configuration, StackSource]:
    """Initial configuration and stacks of one trial, exactly as the batch kernels draw them."""
    box, (code, rho, base, fill) = _setup(params, n, law)
    seed = _hashing.trial_seed(_hashing.parse_seed(master_seed), trial)
    states = np.empty(box.size, dtype=np.int64)
    _core.sample_initial(states, box.site_keys, np.uint64(_core.init_seed(np.uint64(seed))), code, rho, base, fill)
    return Configuration(box, states), StackSource(seed, params)


def _true_chunk(master, start, count, o, rule, nbr, keys, p_s, two_d, law_args, inner):
    return _core.batch_true(np.uint64(master), start, count, o, rule, nbr, keys, p_s, two_d,
                            MAX_STEPS, *law_args, inner)


def _origin_weak_chunk(master, start, count, o, rule, nbr, keys, p_s, two_d, law_args, kernel):
    fn = getattr(_core, kernel)
    return fn(np.uint64(master), start, count, o, rule, nbr, keys, p_s, two_d, MAX_STEPS, *law_args)


def _fill_chunk(master, start, count, rule, nbr, keys, p_s, two_d, law_args, u_mask):
    return _core.batch_fill(np.uint64(master), start, count, rule, nbr, keys, p_s, two_d,
                            MAX_STEPS, *law_args, u_mask)


def _raise_on_ceiling(status_column: np.ndarray):
    if np.any(status_column == _core.STATUS_CEILING):
        raise EngineError(f"a stabilization exceeded {MAX_STEPS} instruction consumptions")


def run_true(params: Params, n: int, law: InitialLaw, trials: int, master_seed: int,
             margin: int = 0, workers: int = 1) -> np.ndarray:
    """Per-trial true stabilization rows; see ``_core.batch_true`` for columns."""
    box, law_args = _setup(params, n, law)
    rule = np.zeros(box.size, dtype=np.int8)
    out = run_chunks(_true_chunk, trials, workers, _hashing.parse_seed(master_seed),
                     o=box.origin_index, rule=rule, nbr=box.neighbor_table, keys=box.site_keys,
                     p_s=params.p_s, two_d=params.two_d, law_args=law_args,
                     inner=box.inner_mask(margin))
    _raise_on_ceiling(out[:, 6])
    return out


def _run_origin_weak(kernel, params, n, law, trials, master_seed, workers):
    if not law.all_active():
        raise ValueError("strong stabilization needs an all-active initial law")
    box, law_args = _setup(params, n, law)
    rule = Weak([box.origin]).rules(box)
    return run_chunks(_origin_weak_chunk, trials, workers, _hashing.parse_seed(master_seed),
                      o=box.origin_index, rule=rule, nbr=box.neighbor_table, keys=box.site_keys,
                      p_s=params.p_s, two_d=params.two_d, law_args=law_args, kernel=kernel)


def run_strong(params: Params, n: int, law: InitialLaw, trials: int, master_seed: int,
               workers: int = 1) -> np.ndarray:
    """Per-trial chance counts; see ``_core.batch_strong`` for columns."""
    out = _run_origin_weak("batch_strong", params, n, law, trials, master_seed, workers)
    _raise_on_ceiling(out[:, 5])
    return out


def _metadata(params: Params, n, law: InitialLaw, **extra) -> dict:
    meta = {"d": params.d, "n": n, "lambda": params.lam, "law": law.label()}
    meta.update(extra)
    return meta


# ---------------------------------------------------------------- estimators

def estimate_occupation(params: Params, n: int, law: InitialLaw, trials: int,
                        master_seed: int = 0, workers: int = 1) -> EstimateReport:
    """Frequency of a sleeping particle at the origin after true stabilization of V_n."""
    rows = run_true(params, n, law, trials, master_seed, workers=workers)
    p, se = _binomial(rows[:, 0])
    return EstimateReport(p, se, trials, master_seed, _metadata(params, n, law))


@dataclass(frozen=True)
class ChanceDistribution:
    tail: np.ndarray          # tail[k-1] = P^(Ch >= k), k = 1..k_max
    tail_se: np.ndarray
    mean_ach: float
    mean_ach_se: float
    trials: int
    master_seed: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tail"] = self.tail.tolist()
        out["tail_se"] = self.tail_se.tolist()
        return out


def chance_distribution(params: Params, n: int, law: InitialLaw, trials: int,
                        master_seed: int = 0, k_max: int = 5, workers: int = 1,
                        ch: np.ndarray | None = None) -> ChanceDistribution:
    if ch is None:
        ch = run_strong(params, n, law, trials, master_seed, workers)[:, 0]
    ks = np.arange(1, k_max + 1)
    tail = (ch[:, None] >= ks[None, :]).mean(axis=0)
    tail_se = np.sqrt(tail * (1 - tail) / ch.size)
    ach, ach_se = _mean_se(np.maximum(ch - 1, 0))
    return ChanceDistribution(tail, tail_se, ach, ach_se, int(ch.size), master_seed,
                              _metadata(params, n, law, k_max=k_max))


def _stream_seed(master: int, stream: int) -> int:
    return _hashing.mix64(_hashing.parse_seed(master) ^ _hashing.mix64(stream + 1))


@dataclass(frozen=True)
class IdentityReport:
    direct: EstimateReport
    series: EstimateReport
    generating: EstimateReport
    z_direct_series: float
    z_direct_generating: float
    z_series_generating: float
    threshold: float = Z_PASS

    @property
    def passed(self) -> bool:
        return max(abs(self.z_direct_series), abs(self.z_direct_generating),
                   abs(self.z_series_generating)) < self.threshold

    def to_dict(self) -> dict:
        return {
            "direct": self.direct.to_dict(),
            "series": self.series.to_dict(),
            "generating": self.generating.to_dict(),
            "z_direct_series": self.z_direct_series,
            "z_direct_generating": self.z_direct_generating,
            "z_series_generating": self.z_series_generating,
            "passed": self.passed,
        }


def verify_identity(params: Params, n: int, law: InitialLaw, trials: int, master_seed: int = 0,
                    workers: int = 1) -> IdentityReport:
    """Three estimates of P(origin in Stab) from independent trial streams.

    (a) direct frequency under true stabilization; (b) the chance series
    sum_k p_s p_j^(k-1) P^(Ch >= k) from empirical tails; (c) 1 - mean(p_j^Ch).
    """
    p_s, p_j = params.p_s, params.p_j
    direct = estimate_occupation(params, n, law, trials, _stream_seed(master_seed, 0), workers)

    ch_b = run_strong(params, n, law, trials, _stream_seed(master_seed, 1), workers)[:, 0]
    k_top = int(ch_b.max(initial=0))
    ks = np.arange(1, k_top + 1)
    tails = (ch_b[:, None] >= ks[None, :]).mean(axis=0) if k_top else np.zeros(0)
    series_value = float(np.sum(p_s * p_j ** (ks - 1) * tails))
    # per-trial contribution of the series is 1 - p_j^Ch
    _, series_se = _mean_se(1.0 - p_j ** ch_b)
    series = EstimateReport(series_value, series_se, trials, _stream_seed(master_seed, 1),
                            _metadata(params, n, law, estimator="chance series"))

    ch_c = run_strong(params, n, law, trials, _stream_seed(master_seed, 2), workers)[:, 0]
    gen_value, gen_se = _mean_se(1.0 - p_j ** ch_c)
    generating = EstimateReport(gen_value, gen_se, trials, _stream_seed(master_seed, 2),
                                _metadata(params, n, law, estimator="1 - E[p_j^Ch]"))

    def z(a, b):
        return _z(a.value - b.value, math.hypot(a.std_error, b.std_error))

    return IdentityReport(direct, series, generating, z(direct, series), z(direct, generating),
                          z(series, generating))


@dataclass(frozen=True)
class AchBoundReport:
    mean_ach: float
    ach_se: float
    e_r: float
    e_r_se: float
    trials: int
    metadata: dict = field(default_factory=dict)
    sigmas: float = 3.0

    @property
    def combined_se(self) -> float:
        return math.hypot(self.ach_se, self.e_r_se)

    @property
    def passed(self) -> bool:
        return self.mean_ach <= self.e_r + self.sigmas * self.combined_se

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(combined_se=self.combined_se, passed=self.passed)
        return out


def verify_ach_bound(params: Params, n: int, law: InitialLaw, trials: int, master_seed: int,
                     returns_estimate: ReturnsEstimate, workers: int = 1) -> AchBoundReport:
    """Check E^[ACh] <= E^[R] + 3 combined standard errors."""
    if returns_estimate.divergent:
        raise ValueError("the additional-chance bound needs a finite E[R] (d >= 3)")
    ch = run_strong(params, n, law, trials, master_seed, workers)[:, 0]
    ach, ach_se = _mean_se(np.maximum(ch - 1, 0))
    return AchBoundReport(ach, ach_se, returns_estimate.mean, returns_estimate.std_error, trials,
                          _metadata(params, n, law))


@dataclass(frozen=True)
class ConservationRow:
    n: int
    margin: int
    inner_density: float
    inner_se: float
    whole_density: float
    whole_se: float
    rho: float

    @property
    def deviation(self) -> float:
        return abs(self.inner_density - self.rho)


def mass_conservation_probe(params: Params, n_list: Sequence[int], rho: float, trials: int,
                            master_seed: int = 0, margin: int | None = None,
                            workers: int = 1) -> list[ConservationRow]:
    """Density of Stab_{V_n} sigma (i.i.d. Poisson(rho)) on V_{n - margin}, per n.

    ``margin=None`` uses n // 2 for each n.
    """
    rows = []
    for n in n_list:
        m = n // 2 if margin is None else margin
        box = make_box(params.d, n)
        inner_size = int(box.inner_mask(m).sum())
        data = run_true(params, n, IIDPoisson(rho), trials, master_seed, margin=m, workers=workers)
        inner, inner_se = _mean_se(data[:, 1] / inner_size)
        whole, whole_se = _mean_se(data[:, 2] / box.size)
        rows.append(ConservationRow(n, m, inner, inner_se, whole, whole_se, rho))
    return rows


@dataclass(frozen=True)
class BoundsReport:
    d: int
    lam: float
    p_s: float
    p_j: float
    lower: float
    upper: float
    e_r: float
    e_r_source: str          # "MonteCarlo", "Asymptotic" or "Divergent"
    e_r_se: float = 0.0

    @property
    def upper_se(self) -> float:
        return self.p_s * self.p_j * self.e_r_se

    def to_dict(self) -> dict:
        out = asdict(self)
        out["upper_se"] = self.upper_se
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in out.items()}


def lower_bound(params: Params) -> float:
    c = params.p_s * params.p_j / params.two_d
    return params.p_s + c * (1.0 - c)


def bounds_report(params: Params, returns_estimate: ReturnsEstimate | None = None) -> BoundsReport:
    """Both sides of p_s + (p_s p_j/2d)(1 - p_s p_j/2d) <= rho_c <= p_s + p_s p_j E[R].

    Without a returns estimate the upper side uses 1/(2d). Recurrent
    dimensions (d <= 2) give an infinite upper side.
    """
    p_s, p_j = params.p_s, params.p_j
    lower = lower_bound(params)
    if params.d <= 2 or (returns_estimate is not None and returns_estimate.divergent):
        return BoundsReport(params.d, params.lam, p_s, p_j, lower, math.inf, math.inf, "Divergent",
                            math.inf)
    if returns_estimate is None:
        e_r, se, source = returns_asymptotic(params.d), 0.0, "Asymptotic"
    else:
        if returns_estimate.d != params.d:
            raise ValueError("returns estimate is for a different dimension")
        e_r, se, source = returns_estimate.mean, returns_estimate.std_error, "MonteCarlo"
    return BoundsReport(params.d, params.lam, p_s, p_j, lower, p_s + p_s * p_j * e_r, e_r, source, se)


@dataclass(frozen=True)
class BracketRow:
    rho: float
    occupation: float
    std_error: float

    @property
    def z(self) -> float:
        return _z(self.occupation - self.rho, self.std_error)


@dataclass(frozen=True)
class BracketReport:
    rows: list
    bracket: tuple | None
    z_threshold: float
    metadata: dict = field(default_factory=dict)
    note: str = ("finite-volume pseudo-critical interval: the grid cell where the origin's "
                 "occupation first falls significantly below rho; a proxy, not rho_c itself")

    def to_dict(self) -> dict:
        return {
            "rows": [dict(asdict(r), z=r.z) for r in self.rows],
            "bracket": list(self.bracket) if self.bracket else None,
            "z_threshold": self.z_threshold,
            "metadata": self.metadata,
            "note": self.note,
        }


def rhoc_bracket(params: Params, n: int, trials: int, master_seed: int,
                 rho_grid: Sequence[float], z_threshold: float = Z_PASS,
                 workers: int = 1) -> BracketReport:
    """Scan P(0 in Stab_{V_n} sigma) - rho over a density grid under IIDPoisson(rho).

    A grid point counts as supercritical once the occupation falls below rho
    by more than ``z_threshold`` standard errors. The bracket is
    (last subcritical point, first supercritical point); None if the sign
    never flips on the grid.
    """
    grid = [float(r) for r in rho_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("rho_grid must be strictly increasing")
    rows = []
    for i, rho in enumerate(grid):
        rep = estimate_occupation(params, n, IIDPoisson(rho), trials, _stream_seed(master_seed, i),
                                  workers)
        rows.append(BracketRow(rho, rep.value, rep.std_error))
    bracket = None
    for a, b in zip(rows, rows[1:]):
        if a.z > -z_threshold and b.z <= -z_threshold:
            bracket = (a.rho, b.rho)
            break
    return BracketReport(rows, bracket, z_threshold,
                         {"d": params.d, "n": n, "lambda": params.lam, "trials": trials,
                          "master_seed": master_seed})


@dataclass(frozen=True)
class CouplingReport:
    trials: int
    violations: int
    mismatches: int
    occupied: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.mismatches == 0


def coupling_check(params: Params, n: int, law: InitialLaw, trials: int, master_seed: int = 0,
                   workers: int = 1) -> CouplingReport:
    """Batch version of ``engine.coupled_true_vs_strong``; counts rather than raises."""
    out = _run_origin_weak("batch_coupled", params, n, law, trials, master_seed, workers)
    _raise_on_ceiling(out[:, 6])
    return CouplingReport(trials, int(out[:, 4].sum()), int(out[:, 5].sum()), int(out[:, 0].sum()))


@dataclass(frozen=True)
class FiveStepReport:
    p_jump1: float
    p_jump2: float
    p_jump2_se: float
    p_tau1_sleeping: float
    p_tau1_se: float
    p_ch_ge_2: float
    p_ch_ge_2_se: float
    independence_z: float
    invariant_failures: int
    procedure_mismatches: int
    trials: int
    target_jump2: float
    target_ch_ge_2: float
    p_s: float
    direction_counts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def five_step_summary(params: Params, n: int, extra: InitialLaw, trials: int,
                      master_seed: int = 0, workers: int = 1) -> FiveStepReport:
    """Aggregate the five-step experiment over i.i.d. trials with a filled B_1."""
    if n < 1:
        raise ValueError("the box must contain B_1 (n >= 1)")
    law = extra if extra.filled_ball else FilledBall(extra)
    out = _run_origin_weak("batch_five_step", params, n, law, trials, master_seed, workers)
    _raise_on_ceiling(out[:, 7])
    x_dir, j1, j2, slp, ch, ch_b, mismatch = (out[:, c] for c in range(7))
    j1 = j1.astype(bool)
    j2 = j2.astype(bool)
    slp = slp.astype(bool)
    ch2 = ch >= 2
    bad = int(np.sum(j1 & ~slp) + np.sum((j1 | j2) & ~ch2))
    mism = int(np.sum(mismatch) + np.sum(ch != ch_b))
    p1, _ = _binomial(j1)
    p2, se2 = _binomial(j2)
    pt, set_ = _binomial(slp)
    pc, sec = _binomial(ch2)
    # independence: P(j1 and j2) against P(j1) P(j2)
    joint = float(np.mean(j1 & j2))
    indep_se = math.sqrt(max(p1 * p2 * (1 - p1 * p2), 1e-300) / trials)
    c = params.p_s * params.p_j / params.two_d
    return FiveStepReport(
        p_jump1=p1, p_jump2=p2, p_jump2_se=se2, p_tau1_sleeping=pt, p_tau1_se=set_,
        p_ch_ge_2=pc, p_ch_ge_2_se=sec, independence_z=_z(joint - p1 * p2, indep_se),
        invariant_failures=bad, procedure_mismatches=mism, trials=trials,
        target_jump2=params.p_j / params.two_d, target_ch_ge_2=(1.0 - c) / params.two_d,
        p_s=params.p_s, direction_counts=np.bincount(x_dir, minlength=params.two_d).tolist())


def fill_frequency(params: Params, n: int, law: InitialLaw, U: Sequence[Sequence[int]],
                   trials: int, master_seed: int = 0, workers: int = 1) -> EstimateReport:
    """Frequency with which WeakStab_{V_n,U} sigma fills every site of U."""
    box, law_args = _setup(params, n, law)
    U = {tuple(x) for x in U}
    rule = Weak(U).rules(box)
    out = run_chunks(_fill_chunk, trials, workers, _hashing.parse_seed(master_seed), rule=rule,
                     nbr=box.neighbor_table, keys=box.site_keys, p_s=params.p_s,
                     two_d=params.two_d, law_args=law_args, u_mask=box.mask(U))
    _raise_on_ceiling(out[:, 2])
    p, se = _binomial(out[:, 0] == len(U))
    return EstimateReport(p, se, trials, master_seed, _metadata(params, n, law, U_size=len(U)))


# ---------------------------------------------------------------- exact structural checks

def random_instance(rng: np.random.Generator, max_d: int = 3, max_n: int = 3,
                    max_particles: int = 10) -> tuple[Configuration, StackSource]:
    """Random small configuration (lone particles asleep with prob. 1/2) and random stacks."""
    d = int(rng.integers(1, max_d + 1))
    n = int(rng.integers(0, max_n + 1))
    box = make_box(d, n)
    states = np.bincount(rng.integers(0, box.size, rng.integers(1, max_particles + 1)),
                         minlength=box.size).astype(np.int64)
    lone = (states == 1) & (rng.random(box.size) < 0.5)
    states[lone] = engine.SLEEPING
    lam = float(rng.choice([0.25, 0.5, 1.0, 2.0, 4.0]))
    seed = int(rng.integers(0, 2**63))
    return Configuration(box, states), StackSource(seed, Params(d, lam))


@dataclass(frozen=True)
class ExactCheckReport:
    check: str
    instances: int
    orders: int
    violations: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return dict(asdict(self), passed=self.passed)


def abelian_check(instances: int = 200, orders: int = 50, seed: int = 0) -> ExactCheckReport:
    """Stabilize random instances in random orders; final states and odometers must coincide."""
    rng = np.random.default_rng(_hashing.parse_seed(seed))
    bad = []
    for i in range(instances):
        cfg, src = random_instance(rng)
        ref = engine.stabilize(cfg, src)
        for k in range(orders):
            out = engine.stabilize(cfg, src, order="random", order_seed=_hashing.trial_seed(seed, k))
            if not (out.same_state(ref) and out.killed == ref.killed):
                bad.append({"instance": i, "order": k})
    return ExactCheckReport("abelian", instances, orders, bad)


def least_action_check(instances: int = 100, orders: int = 20, seed: int = 0) -> ExactCheckReport:
    """Random acceptable routes (with forced wake-ups) must dominate the stabilizing odometer."""
    rng = np.random.default_rng(_hashing.parse_seed(seed))
    bad = []
    wakes = 0
    for i in range(instances):
        cfg, src = random_instance(rng)
        rep = engine.least_action_replay(cfg, src, orders, seed=i)
        wakes += rep.wakes
        bad.extend({"instance": i, **v} for v in rep.violations)
    return ExactCheckReport("least-action", instances, orders, bad, {"wakes": wakes})
