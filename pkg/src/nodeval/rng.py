"""Counter-based random streams for resampling.

Every draw is a pure function of ``(seed, stream words..., counter)`` hashed
with the SplitMix64 finalizer, so a bootstrap replicate can be regenerated in
isolation and results never depend on evaluation order or worker count.
The generator lives here (not in numpy) so its output is frozen across
library versions.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def splitmix64(z):
    """SplitMix64 output function applied elementwise to uint64 data."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_key(seed, *words):
    """Fold integer words into a 64-bit key; arrays broadcast."""
    key = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for w in words:
        w = np.asarray(w, dtype=np.uint64)
        with np.errstate(over="ignore"):
            key = splitmix64(key ^ (w + GOLDEN))
    return key


def uniform(key, counter):
    """Uniform doubles in [0, 1) from ``key`` and integer ``counter`` (broadcast)."""
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = splitmix64(np.asarray(key, dtype=np.uint64) + c * GOLDEN)
    return (bits >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def integers(key, counter, n):
    """Integers in ``[0, n)``; bias is below 2**-53 * n."""
    return np.floor(uniform(key, counter) * n).astype(np.intp)
