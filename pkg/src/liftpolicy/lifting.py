"""Classical (non-learnable) lifting wavelets: Haar and Daubechies-2.

A transform is a list of :class:`LiftingStep` objects applied in order to the
even/odd polyphase streams, followed by an optional per-stream scaling.  The
inverse replays the steps backwards with the opposite sign, so perfect
reconstruction holds by construction for any step list.

Haar keeps the unnormalized convention (predict with the identity, update
with one half), so the approximation is the pairwise mean.  DB2 uses the
three-step Daubechies-Sweldens factorization of the D4 filter with periodic
boundaries; its approximation equals the periodic D4 low-pass output and its
detail equals the high-pass output up to a sign and a one-sample rotation
(see :func:`db2_to_filterbank`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .autodiff import DimensionError, UsageError

SQRT3 = np.sqrt(3.0)
SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class LiftingStep:
    """``target[n] += sum(c * source[n + k] for k, c in taps)``.

    ``target`` is ``"odd"`` for a predict step (source is the even stream)
    and ``"even"`` for an update step (source is the odd stream).
    """

    target: str
    taps: Tuple[Tuple[int, float], ...]

    @property
    def source(self) -> str:
        return "even" if self.target == "odd" else "odd"


@dataclass(frozen=True)
class Wavelet:
    name: str
    steps: Tuple[LiftingStep, ...]
    even_scale: float = 1.0
    odd_scale: float = 1.0


HAAR = Wavelet(
    "haar",
    (
        LiftingStep("odd", ((0, -1.0),)),   # d = x_odd - x_even
        LiftingStep("even", ((0, 0.5),)),   # s = x_even + d/2
    ),
)

DB2 = Wavelet(
    "db2",
    (
        LiftingStep("even", ((0, SQRT3),)),
        LiftingStep("odd", ((0, -SQRT3 / 4.0), (-1, -(SQRT3 - 2.0) / 4.0))),
        LiftingStep("even", ((1, -1.0),)),
    ),
    even_scale=(SQRT3 - 1.0) / SQRT2,
    odd_scale=(SQRT3 + 1.0) / SQRT2,
)

WAVELETS: Dict[str, Wavelet] = {"haar": HAAR, "db2": DB2}


def get_wavelet(kind: str) -> Wavelet:
    try:
        return WAVELETS[kind]
    except KeyError:
        raise UsageError(f"unknown wavelet {kind!r}; expected one of {sorted(WAVELETS)}") from None


@dataclass
class LiftedPair:
    s: np.ndarray
    d: np.ndarray


@dataclass
class MultiLevelDecomposition:
    """Multi-level lifting decomposition, finest detail first.

    ``lengths[j]`` is the length of the sequence analysed at level ``j`` before
    any repeat-padding, which is what reconstruction trims back to.
    """

    details: List[np.ndarray]
    approx: np.ndarray
    wavelet: str
    lengths: List[int] = field(default_factory=list)

    @property
    def level_count(self) -> int:
        return len(self.details)


def _as_1d(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-D sequence, got shape {arr.shape}")
    return arr


def split(x) -> Tuple[np.ndarray, np.ndarray]:
    x = _as_1d(x)
    if x.size < 2:
        raise UsageError("split needs at least two samples")
    return x[0::2].copy(), x[1::2].copy()


def merge(even, odd) -> np.ndarray:
    even, odd = _as_1d(even), _as_1d(odd)
    if even.size - odd.size not in (0, 1):
        raise DimensionError(f"cannot interleave {even.size} even with {odd.size} odd samples")
    out = np.empty(even.size + odd.size)
    out[0::2] = even
    out[1::2] = odd
    return out


def _apply(step: LiftingStep, streams: Dict[str, np.ndarray], sign: float) -> None:
    src = streams[step.source]
    acc = np.zeros_like(streams[step.target])
    for k, c in step.taps:
        # periodic extension: source[n + k]
        acc += c * np.roll(src, -k)
    streams[step.target] = streams[step.target] + sign * acc


def analysis(x, wavelet: Wavelet | str) -> LiftedPair:
    """One level of forward lifting on an even-length sequence."""
    w = get_wavelet(wavelet) if isinstance(wavelet, str) else wavelet
    x = _as_1d(x)
    if x.size % 2:
        raise UsageError(f"analysis needs an even length, got {x.size}; pad first")
    even, odd = split(x)
    streams = {"even": even, "odd": odd}
    for step in w.steps:
        _apply(step, streams, +1.0)
    return LiftedPair(streams["even"] * w.even_scale, streams["odd"] * w.odd_scale)


def synthesis(pair: LiftedPair, wavelet: Wavelet | str) -> np.ndarray:
    """Exact inverse of :func:`analysis`."""
    w = get_wavelet(wavelet) if isinstance(wavelet, str) else wavelet
    s, d = _as_1d(pair.s), _as_1d(pair.d)
    if s.size != d.size:
        raise DimensionError(f"approximation ({s.size}) and detail ({d.size}) lengths differ")
    streams = {"even": s / w.even_scale, "odd": d / w.odd_scale}
    for step in reversed(w.steps):
        _apply(step, streams, -1.0)
    return merge(streams["even"], streams["odd"])


def haar_analysis(x) -> LiftedPair:
    return analysis(x, HAAR)


def haar_synthesis(pair: LiftedPair) -> np.ndarray:
    return synthesis(pair, HAAR)


def db2_analysis(x) -> LiftedPair:
    return analysis(x, DB2)


def db2_synthesis(pair: LiftedPair) -> np.ndarray:
    return synthesis(pair, DB2)


def db2_to_filterbank(pair: LiftedPair) -> Tuple[np.ndarray, np.ndarray]:
    """Map DB2 lifting output onto periodic D4 filter-bank coefficients.

    With ``h = [1+r3, 3+r3, 3-r3, 1-r3] / (4 sqrt 2)`` and the quadrature
    mirror ``g``, the filter-bank approximation is ``s`` and the filter-bank
    detail at ``n`` is ``-d[n + 1]`` (periodic).
    """
    return pair.s.copy(), -np.roll(pair.d, -1)


def _pad_even(x: np.ndarray) -> np.ndarray:
    return np.append(x, x[-1]) if x.size % 2 else x


def max_levels(n: int) -> int:
    return int(np.floor(np.log2(n))) if n >= 2 else 0


def multilevel_decompose(x, levels: int, wavelet: str = "haar") -> MultiLevelDecomposition:
    """Recursive analysis on the approximation stream.

    Odd-length inputs at any level are repeat-padded by one sample; the
    unpadded length is stored so reconstruction can trim it again.
    """
    x = _as_1d(x)
    w = get_wavelet(wavelet)
    if levels < 1:
        raise UsageError("levels must be >= 1")
    if x.size < 2**levels:
        raise UsageError(f"{levels} levels need at least {2**levels} samples, got {x.size}")
    details, lengths = [], []
    cur = x
    for _ in range(levels):
        lengths.append(cur.size)
        pair = analysis(_pad_even(cur), w)
        details.append(pair.d)
        cur = pair.s
    return MultiLevelDecomposition(details, cur, w.name, lengths)


def multilevel_reconstruct(m: MultiLevelDecomposition) -> np.ndarray:
    cur = m.approx
    for j in reversed(range(m.level_count)):
        cur = synthesis(LiftedPair(cur, m.details[j]), m.wavelet)[: m.lengths[j]]
    return cur


def level_components(m: MultiLevelDecomposition) -> Tuple[List[np.ndarray], np.ndarray]:
    """Each level's contribution rendered at the original length.

    Component ``j`` is the reconstruction with every coefficient zeroed except
    the level-``j`` detail; the approximation component keeps only the
    coarsest approximation.  The transform is linear, so the components sum
    to the original signal.
    """

    def only(detail_index: int | None) -> np.ndarray:
        details = [np.zeros_like(d) for d in m.details]
        approx = np.zeros_like(m.approx)
        if detail_index is None:
            approx = m.approx
        else:
            details[detail_index] = m.details[detail_index]
        return multilevel_reconstruct(
            MultiLevelDecomposition(details, approx, m.wavelet, m.lengths)
        )

    return [only(j) for j in range(m.level_count)], only(None)


def decomposition_table(x, levels: int, wavelet: str = "haar") -> Tuple[List[str], np.ndarray]:
    """Columns ``time, original, f-1..f-L, approx`` as a 2-D array."""
    x = _as_1d(x)
    m = multilevel_decompose(x, levels, wavelet)
    comps, approx = level_components(m)
    header = ["time", "original"] + [f"f-{j + 1}" for j in range(levels)] + ["approx"]
    cols = [np.arange(x.size, dtype=np.float64), x] + comps + [approx]
    return header, np.column_stack(cols)


def reconstruction_error(x: Sequence[float], wavelet: str = "haar") -> float:
    x = _as_1d(x)
    return float(np.max(np.abs(synthesis(analysis(x, wavelet), wavelet) - x)))
