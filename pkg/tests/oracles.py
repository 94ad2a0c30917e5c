"""Reference implementations written independently of the package."""

import numpy as np

SQ3 = np.sqrt(3.0)
D4_LOW = np.array([1 + SQ3, 3 + SQ3, 3 - SQ3, 1 - SQ3]) / (4 * np.sqrt(2.0))
D4_HIGH = np.array([D4_LOW[3], -D4_LOW[2], D4_LOW[1], -D4_LOW[0]])


def d4_convolution(x):
    """Periodic D4 filter bank written straight from the filter taps."""
    n = len(x)
    low = np.zeros(n // 2)
    high = np.zeros(n // 2)
    for i in range(n // 2):
        for k in range(4):
            low[i] += D4_LOW[k] * x[(2 * i + k) % n]
            high[i] += D4_HIGH[k] * x[(2 * i + k) % n]
    return low, high
