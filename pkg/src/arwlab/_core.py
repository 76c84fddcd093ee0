"""Numba kernels: instruction decoding, toppling, stabilization, batch trials.

Site states are int64 codes: ``SLEEPING`` (-1), ``EMPTY`` (0), or k >= 1
active particles. Per-site rules: ``RULE_TRUE``, ``RULE_WEAK`` (a lone
active particle is stable), ``RULE_STRONG`` (only an empty site is stable;
sleep instructions are consumed without effect).

Status codes returned by the loops: 0 ok, 1 step ceiling exceeded.
"""
import numpy as np
from numba import njit

SLEEPING = -1
EMPTY = 0

RULE_TRUE = 0
RULE_WEAK = 1
RULE_STRONG = 2

ORDER_FIFO = 0
ORDER_RANDOM = 1

LAW_FIXED = 0
LAW_POISSON = 1
LAW_BERNOULLI = 2

STATUS_OK = 0
STATUS_CEILING = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TRIAL_TAG = np.uint64(0x13198A2E03707344)
_INIT_TAG = np.uint64(0xA4093822299F31D0)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S32 = np.uint64(32)
_ONE = np.uint64(1)
_UNIT = 2.0**-53


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def unit(h):
    return np.float64(h >> _S11) * _UNIT


@njit(cache=True)
def trial_seed(master, index):
    return mix64(mix64(master ^ _TRIAL_TAG) + _GOLDEN * (np.uint64(index) + _ONE))


@njit(cache=True)
def init_seed(seed):
    return mix64(seed ^ _INIT_TAG)


@njit(cache=True)
def stream_base(seed, key):
    return mix64(key ^ mix64(seed))


@njit(cache=True)
def decode(h, p_s, two_d):
    """-1 for sleep, else jump direction in [0, two_d)."""
    u = unit(h)
    if u < p_s:
        return -1
    j = np.int64((u - p_s) / (1.0 - p_s) * two_d)
    if j >= two_d:
        j = two_d - 1
    return j


@njit(cache=True)
def instruction(seed, key, k, p_s, two_d):
    a = mix64(key ^ mix64(seed))
    return decode(mix64(a + _GOLDEN * (np.uint64(k) + _ONE)), p_s, two_d)


@njit(cache=True)
def randbelow(state, size):
    """Advance a SplitMix64 state; return (new_state, uniform int in [0, size))."""
    state = state + _GOLDEN
    h = mix64(state)
    return state, np.int64(((h >> _S32) * np.uint64(size)) >> _S32)


@njit(cache=True)
def is_unstable(s, rule):
    if rule == RULE_TRUE:
        return s >= 1
    if rule == RULE_WEAK:
        return s >= 2
    return s != EMPTY


@njit(cache=True)
def topple(i, state, odom, rule, nbr, keys, seed, p_s, two_d):
    """Acceptable toppling of a nonempty site i.

    Returns (instruction, target): target is -1 for a sleep or a jump that
    left the box (the particle is killed).
    """
    s = state[i]
    if s == SLEEPING:
        s = 1
    ins = instruction(seed, keys[i], odom[i], p_s, two_d)
    odom[i] += 1
    if ins < 0:
        if s == 1 and rule[i] != RULE_STRONG:
            s = SLEEPING
        state[i] = s
        return ins, -1
    state[i] = s - 1
    t = nbr[i, ins]
    if t >= 0:
        if state[t] == SLEEPING:
            state[t] = 2
        else:
            state[t] += 1
    return ins, t


@njit(cache=True)
def stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps):
    """Deduplicated FIFO of unstable sites; each popped site is toppled until stable.

    Returns (killed, steps, status).
    """
    n = state.size
    queue = np.empty(n, np.int64)
    inq = np.zeros(n, np.bool_)
    head = 0
    count = 0
    for i in range(n):
        if is_unstable(state[i], rule[i]):
            queue[(head + count) % n] = i
            inq[i] = True
            count += 1
    killed = 0
    steps = 0
    while count > 0:
        i = queue[head]
        head = (head + 1) % n
        count -= 1
        inq[i] = False
        while is_unstable(state[i], rule[i]):
            if steps >= max_steps:
                return killed, steps, STATUS_CEILING
            ins, t = topple(i, state, odom, rule, nbr, keys, seed, p_s, two_d)
            steps += 1
            if ins >= 0:
                if t < 0:
                    killed += 1
                elif not inq[t] and is_unstable(state[t], rule[t]):
                    queue[(head + count) % n] = t
                    inq[t] = True
                    count += 1
    return killed, steps, STATUS_OK


@njit(cache=True)
def stabilize_random(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps, order_seed):
    """Topple one uniformly chosen unstable site at a time."""
    n = state.size
    pend = np.empty(n, np.int64)
    pos = np.full(n, -1, np.int64)
    size = 0
    for i in range(n):
        if is_unstable(state[i], rule[i]):
            pend[size] = i
            pos[i] = size
            size += 1
    rng = order_seed
    killed = 0
    steps = 0
    while size > 0:
        if steps >= max_steps:
            return killed, steps, STATUS_CEILING
        rng, r = randbelow(rng, size)
        i = pend[r]
        ins, t = topple(i, state, odom, rule, nbr, keys, seed, p_s, two_d)
        steps += 1
        if not is_unstable(state[i], rule[i]):
            last = pend[size - 1]
            pend[r] = last
            pos[last] = r
            pos[i] = -1
            size -= 1
        if ins >= 0:
            if t < 0:
                killed += 1
            elif pos[t] < 0 and is_unstable(state[t], rule[t]):
                pend[size] = t
                pos[t] = size
                size += 1
    return killed, steps, STATUS_OK


@njit(cache=True)
def stabilize(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps, order, order_seed):
    if order == ORDER_FIFO:
        return stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps)
    return stabilize_random(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps, order_seed)


@njit(cache=True)
def acceptable_replay(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps,
                      order_seed, wake_prob, max_wakes):
    """Random acceptable toppling sequence ending in a stable state.

    At each step, with probability ``wake_prob`` (while the wake budget
    lasts) a uniformly chosen sleeping site is toppled, waking its particle;
    otherwise a uniformly chosen unstable site is toppled.
    Returns (killed, steps, wakes, status).
    """
    n = state.size
    rng = order_seed
    killed = 0
    steps = 0
    wakes = 0
    while True:
        n_unstable = 0
        n_sleeping = 0
        for i in range(n):
            if is_unstable(state[i], rule[i]):
                n_unstable += 1
            elif state[i] == SLEEPING:
                n_sleeping += 1
        if n_unstable == 0 and (n_sleeping == 0 or wakes >= max_wakes):
            return killed, steps, wakes, STATUS_OK
        if steps >= max_steps:
            return killed, steps, wakes, STATUS_CEILING
        rng, r = randbelow(rng, 1 << 30)
        wake = n_sleeping > 0 and wakes < max_wakes and (r < wake_prob * (1 << 30) or n_unstable == 0)
        if wake:
            rng, r = randbelow(rng, n_sleeping)
            want_sleeping = True
        else:
            rng, r = randbelow(rng, n_unstable)
            want_sleeping = False
        chosen = -1
        c = 0
        for i in range(n):
            if want_sleeping:
                hit = state[i] == SLEEPING and not is_unstable(state[i], rule[i])
            else:
                hit = is_unstable(state[i], rule[i])
            if hit:
                if c == r:
                    chosen = i
                    break
                c += 1
        if want_sleeping:
            wakes += 1
        ins, t = topple(chosen, state, odom, rule, nbr, keys, seed, p_s, two_d)
        steps += 1
        if ins >= 0 and t < 0:
            killed += 1


@njit(cache=True)
def jump_out(o, state, odom, nbr, keys, seed, p_s, two_d):
    """Topple the lone active particle at o until it executes a jump.

    Returns (slept, target); slept is True if a sleep instruction came
    before the jump, target is -1 if the particle left the box.
    """
    slept = False
    while True:
        ins = instruction(seed, keys[o], odom[o], p_s, two_d)
        odom[o] += 1
        if ins < 0:
            slept = True
            continue
        state[o] -= 1
        t = nbr[o, ins]
        if t >= 0:
            if state[t] == SLEEPING:
                state[t] = 2
            else:
                state[t] += 1
        return slept, t


@njit(cache=True)
def strong_iterative(o, state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps,
                     snap_state, snap_odom):
    """Pre-step, then {jump-out; weak stabilization} until the origin is empty.

    ``rule`` must mark the origin weak and every other site true. If a sleep
    trial succeeds, (state, odom) just before that first successful jump-out
    is copied into (snap_state, snap_odom).
    Returns (ch, trials, first_success, killed, steps, status).
    """
    trials = np.zeros(8, np.bool_)
    killed, steps, status = stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps)
    ch = 0
    first = 0
    if status != STATUS_OK:
        return ch, trials[:0], first, killed, steps, status
    while state[o] != EMPTY:
        if first == 0:
            snap_state[:] = state
            snap_odom[:] = odom
        before = odom[o]
        slept, t = jump_out(o, state, odom, nbr, keys, seed, p_s, two_d)
        steps += odom[o] - before
        if t < 0:
            killed += 1
        if ch == trials.size:
            grown = np.zeros(2 * trials.size, np.bool_)
            grown[:ch] = trials
            trials = grown
        trials[ch] = slept
        if slept and first == 0:
            first = ch + 1
        k, s, status = stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps - steps)
        killed += k
        steps += s
        ch += 1
        if status != STATUS_OK:
            break
    return ch, trials[:ch], first, killed, steps, status


@njit(cache=True)
def five_step(o, state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps):
    """Strong stabilization broken into the five steps of the lower-bound argument.

    Requires the origin and all its neighbors to hold one active particle and
    lie inside the box; ``rule`` marks the origin weak.
    Returns (x_dir, jump1, jump2, tau1_x_sleeping, ch, killed, steps, status).
    """
    # Step 1
    killed, steps, status = stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps)
    if status != STATUS_OK:
        return -1, False, False, False, 0, killed, steps, status
    # Step 2: jump out of the origin, landing on X
    while True:
        ins = instruction(seed, keys[o], odom[o], p_s, two_d)
        odom[o] += 1
        steps += 1
        if ins >= 0:
            break
    x_dir = ins
    x = nbr[o, ins]
    tau1_sleeping = state[x] == SLEEPING
    state[o] -= 1
    if tau1_sleeping:
        state[x] = 2
    else:
        state[x] += 1
    # Step 3: with two particles at X, topple X until one jumps
    jump1 = False
    if state[x] == 2:
        while True:
            ins, t = topple(x, state, odom, rule, nbr, keys, seed, p_s, two_d)
            steps += 1
            if ins >= 0:
                if t < 0:
                    killed += 1
                jump1 = t == o
                break
    # Step 4: topple the lone particle at X once
    ins, t = topple(x, state, odom, rule, nbr, keys, seed, p_s, two_d)
    steps += 1
    if ins >= 0 and t < 0:
        killed += 1
    jump2 = ins >= 0 and t == o
    # Step 5: finish iteration 1, then keep iterating
    k, s, status = stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps - steps)
    killed += k
    steps += s
    ch = 1
    while status == STATUS_OK and state[o] != EMPTY:
        before = odom[o]
        slept, t = jump_out(o, state, odom, nbr, keys, seed, p_s, two_d)
        steps += odom[o] - before
        if t < 0:
            killed += 1
        k, s, status = stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps - steps)
        killed += k
        steps += s
        ch += 1
    return x_dir, jump1, jump2, tau1_sleeping, ch, killed, steps, status


@njit(cache=True)
def sample_initial(state, keys, iseed, law, rho, base, fill_mask):
    """Fill ``state`` from the initial law; sites in fill_mask get one active particle."""
    n = state.size
    for i in range(n):
        if law == LAW_FIXED:
            state[i] = base[i]
        else:
            u = unit(mix64(mix64(keys[i] ^ iseed) + _GOLDEN))
            if law == LAW_BERNOULLI:
                state[i] = 1 if u < rho else 0
            else:
                p = np.exp(-rho)
                cdf = p
                k = 0
                while u >= cdf and k < 10000:
                    k += 1
                    p *= rho / k
                    cdf += p
                    if p == 0.0:
                        break
                state[i] = k
        if fill_mask[i]:
            state[i] = 1


@njit(cache=True)
def particle_count(state):
    total = 0
    for s in state:
        total += 1 if s == SLEEPING else s
    return total


@njit(cache=True)
def batch_true(master, start, count, o, rule, nbr, keys, p_s, two_d, max_steps,
               law, rho, base, fill_mask, inner_mask):
    """True stabilization per trial.

    Columns of the int64 result: origin sleeping, sleepers in inner_mask,
    sleepers overall, initial particles, killed, steps, status.
    """
    n = keys.size
    out = np.zeros((count, 7), np.int64)
    state = np.empty(n, np.int64)
    odom = np.empty(n, np.int64)
    for j in range(count):
        seed = trial_seed(master, start + j)
        sample_initial(state, keys, init_seed(seed), law, rho, base, fill_mask)
        odom[:] = 0
        before = particle_count(state)
        killed, steps, status = stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps)
        inner = 0
        total = 0
        for i in range(n):
            if state[i] == SLEEPING:
                total += 1
                if inner_mask[i]:
                    inner += 1
        out[j, 0] = 1 if state[o] == SLEEPING else 0
        out[j, 1] = inner
        out[j, 2] = total
        out[j, 3] = before
        out[j, 4] = killed
        out[j, 5] = steps
        out[j, 6] = status
    return out


@njit(cache=True)
def batch_strong(master, start, count, o, rule, nbr, keys, p_s, two_d, max_steps,
                 law, rho, base, fill_mask):
    """Iterative strong stabilization per trial.

    Columns: ch, first successful trial (0 if none), successes, killed,
    steps, status.
    """
    n = keys.size
    out = np.zeros((count, 6), np.int64)
    state = np.empty(n, np.int64)
    odom = np.empty(n, np.int64)
    snap_state = np.empty(n, np.int64)
    snap_odom = np.empty(n, np.int64)
    for j in range(count):
        seed = trial_seed(master, start + j)
        sample_initial(state, keys, init_seed(seed), law, rho, base, fill_mask)
        odom[:] = 0
        ch, trials, first, killed, steps, status = strong_iterative(
            o, state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps, snap_state, snap_odom)
        out[j, 0] = ch
        out[j, 1] = first
        out[j, 2] = trials.sum()
        out[j, 3] = killed
        out[j, 4] = steps
        out[j, 5] = status
    return out


@njit(cache=True)
def batch_coupled(master, start, count, o, rule, nbr, keys, p_s, two_d, max_steps,
                  law, rho, base, fill_mask):
    """True and strong stabilization on the same stacks, checked against each other.

    Columns: origin sleeping in true stabilization, some trial succeeded,
    ch, first success, equivalence violated, state/odometer mismatch, status.
    """
    n = keys.size
    out = np.zeros((count, 7), np.int64)
    true_rule = np.zeros(n, np.int8)
    sigma = np.empty(n, np.int64)
    t_state = np.empty(n, np.int64)
    t_odom = np.empty(n, np.int64)
    s_state = np.empty(n, np.int64)
    s_odom = np.empty(n, np.int64)
    snap_state = np.empty(n, np.int64)
    snap_odom = np.empty(n, np.int64)
    for j in range(count):
        seed = trial_seed(master, start + j)
        sample_initial(sigma, keys, init_seed(seed), law, rho, base, fill_mask)
        t_state[:] = sigma
        t_odom[:] = 0
        s_state[:] = sigma
        s_odom[:] = 0
        k1, st1, status1 = stabilize_fifo(t_state, t_odom, true_rule, nbr, keys, seed, p_s, two_d, max_steps)
        ch, trials, first, k2, st2, status2 = strong_iterative(
            o, s_state, s_odom, rule, nbr, keys, seed, p_s, two_d, max_steps, snap_state, snap_odom)
        occupied = t_state[o] == SLEEPING
        success = first > 0
        mismatch = False
        if success:
            snap_state[o] = SLEEPING
            snap_odom[o] += 1
            for i in range(n):
                if snap_state[i] != t_state[i] or snap_odom[i] != t_odom[i]:
                    mismatch = True
        else:
            for i in range(n):
                if s_state[i] != t_state[i] or s_odom[i] != t_odom[i]:
                    mismatch = True
        out[j, 0] = occupied
        out[j, 1] = success
        out[j, 2] = ch
        out[j, 3] = first
        out[j, 4] = occupied != success
        out[j, 5] = mismatch
        out[j, 6] = max(status1, status2)
    return out


@njit(cache=True)
def batch_five_step(master, start, count, o, rule, nbr, keys, p_s, two_d, max_steps,
                    law, rho, base, fill_mask):
    """Five-step experiment per trial, cross-checked against strong_iterative.

    Columns: X direction, jump1, jump2, tau1(X) sleeping, ch, ch from the
    iterative procedure, final state/odometer mismatch, status.
    """
    n = keys.size
    out = np.zeros((count, 8), np.int64)
    sigma = np.empty(n, np.int64)
    a_state = np.empty(n, np.int64)
    a_odom = np.empty(n, np.int64)
    b_state = np.empty(n, np.int64)
    b_odom = np.empty(n, np.int64)
    snap_state = np.empty(n, np.int64)
    snap_odom = np.empty(n, np.int64)
    for j in range(count):
        seed = trial_seed(master, start + j)
        sample_initial(sigma, keys, init_seed(seed), law, rho, base, fill_mask)
        a_state[:] = sigma
        a_odom[:] = 0
        b_state[:] = sigma
        b_odom[:] = 0
        x_dir, j1, j2, slp, ch, k1, st1, status1 = five_step(
            o, a_state, a_odom, rule, nbr, keys, seed, p_s, two_d, max_steps)
        ch_b, trials, first, k2, st2, status2 = strong_iterative(
            o, b_state, b_odom, rule, nbr, keys, seed, p_s, two_d, max_steps, snap_state, snap_odom)
        mismatch = False
        for i in range(n):
            if a_state[i] != b_state[i] or a_odom[i] != b_odom[i]:
                mismatch = True
        out[j, 0] = x_dir
        out[j, 1] = j1
        out[j, 2] = j2
        out[j, 3] = slp
        out[j, 4] = ch
        out[j, 5] = ch_b
        out[j, 6] = mismatch
        out[j, 7] = max(status1, status2)
    return out


@njit(cache=True)
def batch_fill(master, start, count, rule, nbr, keys, p_s, two_d, max_steps,
               law, rho, base, fill_mask, u_mask):
    """Weak stabilization w.r.t. U per trial. Columns: filled sites of U, killed, status."""
    n = keys.size
    out = np.zeros((count, 3), np.int64)
    state = np.empty(n, np.int64)
    odom = np.empty(n, np.int64)
    for j in range(count):
        seed = trial_seed(master, start + j)
        sample_initial(state, keys, init_seed(seed), law, rho, base, fill_mask)
        odom[:] = 0
        killed, steps, status = stabilize_fifo(state, odom, rule, nbr, keys, seed, p_s, two_d, max_steps)
        filled = 0
        for i in range(n):
            if u_mask[i] and state[i] == 1:
                filled += 1
        out[j, 0] = filled
        out[j, 1] = killed
        out[j, 2] = status
    return out
