"""Counter-based hashing shared by the instruction stacks and the samplers.

Every random quantity in a run is a pure function of integers:

* site key      key(x) = fold of mix64 over the coordinates of x
* stack stream  I_x(k) is output k of a SplitMix64 stream started at
                mix64(key(x) ^ mix64(seed))
* trial seed    seed_i = mix64(mix64(master ^ TRIAL_TAG) + GOLDEN * (i + 1))
* initial law   one uniform per site from mix64(mix64(key(x) ^ init_seed) + GOLDEN),
                init_seed = mix64(seed_i ^ INIT_TAG)

Keys depend on coordinates only, so the same site carries the same stack
in every box that contains it.

The numba kernels in ``_core`` re-implement these with identical
constants; ``tests/test_stacks.py`` pins them together.
"""
import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB
SITE_TAG = 0x243F6A8885A308D3
TRIAL_TAG = 0x13198A2E03707344
INIT_TAG = 0xA4093822299F31D0
ORDER_TAG = 0x082EFA98EC4E6C89
WALK_TAG = 0x452821E638D01377

_U = np.uint64


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (taken mod 2**64)."""
    z &= MASK
    z = ((z ^ (z >> 30)) * M1) & MASK
    z = ((z ^ (z >> 27)) * M2) & MASK
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U(30))) * _U(M1)
        z = (z ^ (z >> _U(27))) * _U(M2)
    return z ^ (z >> _U(31))


def site_key(x) -> int:
    z = SITE_TAG
    for c in x:
        z = mix64(((z + GOLDEN) & MASK) ^ (int(c) & MASK))
    return z


def site_keys(coords: np.ndarray) -> np.ndarray:
    """Vectorized :func:`site_key` over the rows of an (N, d) int array."""
    coords = np.asarray(coords, dtype=np.int64)
    z = np.full(coords.shape[0], SITE_TAG, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for axis in range(coords.shape[1]):
            z = mix64_array((z + _U(GOLDEN)) ^ coords[:, axis].view(np.uint64))
    return z


def stream_start(seed: int, key: int) -> int:
    return (key ^ mix64(seed)) & MASK


def stream_values(seed: int, key: int, ks) -> np.ndarray:
    """Raw 64-bit outputs k of the stack stream of the site with ``key``."""
    a = _U(mix64(stream_start(seed, key)))
    ks = np.asarray(ks, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(a + _U(GOLDEN) * (ks + _U(1)))


def to_unit(h: np.ndarray) -> np.ndarray:
    """Top 53 bits of a uint64 as a float in [0, 1)."""
    return (np.asarray(h, dtype=np.uint64) >> _U(11)).astype(np.float64) * 2.0**-53


def trial_seed(master: int, index: int) -> int:
    return mix64((mix64(master ^ TRIAL_TAG) + GOLDEN * (index + 1)) & MASK)


def parse_seed(text: str | int) -> int:
    """Accept a decimal or 0x-prefixed hexadecimal 64-bit seed."""
    if isinstance(text, int):
        value = text
    else:
        value = int(str(text).strip(), 0)
    if not 0 <= value <= MASK:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {text}")
    return value
