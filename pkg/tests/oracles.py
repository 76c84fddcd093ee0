"""Independent oracles used to freeze expected values.

Nothing here touches the stacks or the numba kernels: the chains below
work at the level of transition probabilities, with their own neighbor
logic, and solve for absorption probabilities exactly (linear algebra).
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
from scipy import integrate, special

SLEEP = -1


def _box_sites(d, n):
    return list(itertools.product(range(-n, n + 1), repeat=d))


def _nbrs(x):
    out = []
    for axis in range(len(x)):
        for step in (-1, 1):
            y = list(x)
            y[axis] += step
            out.append(tuple(y))
    return out


def _solve(transient, transitions, absorb_value):
    """Absorption functional for a finite chain.

    transitions[s] -> list of (prob, next_state); absorbing states are those
    not in ``transient``; absorb_value(state) is the payoff collected there.
    """
    index = {s: i for i, s in enumerate(transient)}
    size = len(transient)
    A = np.eye(size)
    b = np.zeros(size)
    for s, i in index.items():
        for p, t in transitions[s]:
            if t in index:
                A[i, index[t]] -= p
            else:
                b[i] += p * absorb_value(t)
    return dict(zip(transient, np.linalg.solve(A, b)))


def _explore(start, step):
    seen = {start}
    frontier = [start]
    transitions = {}
    while frontier:
        s = frontier.pop()
        moves = step(s)
        if moves is None:
            continue
        transitions[s] = moves
        for _, t in moves:
            if t not in seen:
                seen.add(t)
                frontier.append(t)
    return transitions


def occupation_probability(d, n, lam, initial):
    """P(origin sleeping after true stabilization) for ARW on V_n.

    ``initial`` maps sites to codes (-1 sleeping or an active count).
    Topples the first unstable site in lexicographic order; the abelian
    property makes the law of the final state independent of that choice.
    """
    sites = _box_sites(d, n)
    pos = {x: i for i, x in enumerate(sites)}
    p_s = lam / (1 + lam)
    p_jump = (1 - p_s) / (2 * d)
    start = tuple(initial.get(x, 0) for x in sites)
    origin = pos[(0,) * d]

    def step(s):
        unstable = [i for i, v in enumerate(s) if v >= 1]
        if not unstable:
            return None
        i = unstable[0]
        moves = []
        if s[i] == 1:
            t = list(s)
            t[i] = SLEEP
            moves.append((p_s, tuple(t)))
        else:
            moves.append((p_s, s))
        for y in _nbrs(sites[i]):
            t = list(s)
            t[i] -= 1
            if y in pos:
                j = pos[y]
                t[j] = 2 if t[j] == SLEEP else t[j] + 1
            moves.append((p_jump, tuple(t)))
        return moves

    transitions = _explore(start, step)
    if start not in transitions:
        return float(start[origin] == SLEEP)
    values = _solve(list(transitions), transitions, lambda t: float(t[origin] == SLEEP))
    return float(values[start])


def chance_tail(d, n, lam, initial, k_max):
    """[P(Ch >= k) for k = 1..k_max] for the iterative strong stabilization.

    Chain state: (configuration, phase, chances so far). Phase "w" weakly
    stabilizes w.r.t. the origin (lone active particle stable there); phase
    "j" is the jump-out, whose sleep instructions are no-ops so its jump
    direction is uniform. Reaching k_max chances is absorbing.
    """
    sites = _box_sites(d, n)
    pos = {x: i for i, x in enumerate(sites)}
    p_s = lam / (1 + lam)
    p_jump = (1 - p_s) / (2 * d)
    o = pos[(0,) * d]
    start = (tuple(initial.get(x, 0) for x in sites), "w", 0)

    def move(s, i, y):
        t = list(s)
        t[i] -= 1
        if y in pos:
            j = pos[y]
            t[j] = 2 if t[j] == SLEEP else t[j] + 1
        return tuple(t)

    def step(state):
        s, phase, ch = state
        if ch >= k_max:
            return None
        if phase == "j":
            return [(1 / (2 * d), (move(s, o, y), "w", ch + 1)) for y in _nbrs(sites[o])]
        unstable = [i for i, v in enumerate(s) if (v >= 2 if i == o else v >= 1)]
        if not unstable:
            if s[o] == 0:
                return None
            return [(1.0, (s, "j", ch))]
        i = unstable[0]
        moves = []
        if s[i] == 1:
            t = list(s)
            t[i] = SLEEP
            moves.append((p_s, (tuple(t), "w", ch)))
        else:
            moves.append((p_s, state))
        for y in _nbrs(sites[i]):
            moves.append((p_jump, (move(s, i, y), "w", ch)))
        return moves

    transitions = _explore(start, step)
    out = []
    for k in range(1, k_max + 1):
        if start not in transitions:
            out.append(float(start[2] >= k))
            continue
        values = _solve(list(transitions), transitions, lambda t, k=k: float(t[2] >= k))
        out.append(float(values[start]))
    return out


def delta_origin_1d_occupation():
    """Closed form on V_1 in Z with lambda = 1: (1/2) sum_k (1/8)^(k-1) = 4/7."""
    return Fraction(1, 2) / (1 - Fraction(1, 8))


def expected_returns_green(d):
    """E[R(Z^d)] = G(0) - 1, with G(0) = int_0^inf (e^{-t/d} I_0(t/d))^d dt.

    Numerical lattice Green function evaluation (d >= 3).
    """
    f = lambda t: special.ive(0, t / d) ** d
    head = integrate.quad(f, 0, 50, limit=500, epsabs=1e-13)[0]
    tail = integrate.quad(f, 50, np.inf, limit=500, epsabs=1e-13)[0]
    return head + tail - 1.0


# Frozen output of expected_returns_green (re-derived in test_walks.py).
EXPECTED_RETURNS = {
    3: 0.51638605915195,
    4: 0.23946712184848162,
    5: 0.15630812484023116,
    6: 0.11696337322667238,
    7: 0.09390631558784768,
    8: 0.07864701201692559,
    9: 0.06774608638140456,
    10: 0.05954374788826211,
}
