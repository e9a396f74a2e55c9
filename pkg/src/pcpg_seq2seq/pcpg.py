"""Pseudo-convolutional aggregation of per-step policy-gradient losses.

A kernel of size k with normalized weights w slides over the per-step losses
L_1..L_U with stride s. Window centers are u = 1, 1+s, 1+2s, ... <= U; the
window at u reads L_{u - k//2} .. L_{u - k//2 + k - 1}. The PCPG loss is the sum
of all window outputs, which is linear in L: L_PCPG = sum_i c_i * L_i, where
c is :func:`coefficient_map`.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple, Union

import numpy as np

WEIGHT_TOLERANCE = 1e-12


class BoundaryPolicy(str, Enum):
    """What taps falling outside [1, U] do.

    ``ZERO_PAD`` lets them contribute 0. ``TRUNCATE`` drops them and
    renormalizes the remaining weights of that window to sum to 1.
    """

    ZERO_PAD = "zero-pad"
    TRUNCATE = "truncate"


def _normalize(weights: Sequence[float]) -> Tuple[float, ...]:
    total = math.fsum(weights)
    if not total > 0.0 or not math.isfinite(total):
        raise ValueError(f"kernel weights must have a positive finite sum, got {total}")
    scaled = [float(w) / total for w in weights]
    if math.fsum(scaled) != 1.0:
        # Put the rounding residue on the last tap so the weights fsum to 1.
        scaled[-1] = 1.0 - math.fsum(scaled[:-1])
    return tuple(scaled)


@dataclass(frozen=True)
class PcpgKernel:
    """Window size ``k``, stride ``s`` and weights ``w`` (normalized on construction)."""

    k: int = 5
    s: int = 1
    w: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"kernel size must be >= 1, got {self.k}")
        if self.s < 1:
            raise ValueError(f"stride must be >= 1, got {self.s}")
        weights = tuple(self.w) if len(self.w) else (1.0,) * self.k
        if len(weights) != self.k:
            raise ValueError(f"kernel of size {self.k} needs {self.k} weights, got {len(weights)}")
        weights = _normalize(weights)
        if abs(math.fsum(weights) - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"kernel weights do not normalize: {weights}")
        object.__setattr__(self, "w", weights)

    @classmethod
    def uniform(cls, k: int, s: int = 1) -> "PcpgKernel":
        return cls(k=k, s=s, w=(1.0,) * k)

    @classmethod
    def build(cls, k: int, s: int, w: Union[str, Sequence[float]] = "uniform") -> "PcpgKernel":
        """Build from the config-file surface where ``w`` may be ``"uniform"``."""
        if isinstance(w, str):
            if w != "uniform":
                raise ValueError(f"kernel weights must be a list or 'uniform', got {w!r}")
            return cls.uniform(k, s)
        return cls(k=k, s=s, w=tuple(w))

    @property
    def half(self) -> int:
        return self.k // 2

    def centers(self, length: int) -> range:
        """0-based window centers emitted for a sequence of ``length`` steps."""
        return range(0, length, self.s)


def per_step_losses(returns: Sequence[float], log_probs: Sequence[float]) -> np.ndarray:
    """L_u = -R_u * log P(y_u); returns are constants."""
    returns = np.asarray(returns, dtype=np.float64)
    log_probs = np.asarray(log_probs, dtype=np.float64)
    if returns.shape != log_probs.shape or returns.ndim != 1:
        raise ValueError(
            f"returns and log-probs must be equal-length vectors, got {returns.shape} and {log_probs.shape}"
        )
    if len(returns) == 0:
        raise ValueError("per-step losses need at least one step")
    return -returns * log_probs


def _window_taps(
    kernel: PcpgKernel, length: int, center: int, padding: BoundaryPolicy
) -> List[Tuple[int, float]]:
    """(position, weight) pairs one window applies, in tap order."""
    taps = []
    for j, weight in enumerate(kernel.w):
        position = center - kernel.half + j
        if 0 <= position < length:
            taps.append((position, weight))
    if padding is BoundaryPolicy.TRUNCATE:
        in_range = math.fsum(weight for _, weight in taps)
        if in_range > 0.0:
            taps = [(position, weight / in_range) for position, weight in taps]
    return taps


def window_matrix(
    kernel: PcpgKernel, length: int, padding: BoundaryPolicy = BoundaryPolicy.ZERO_PAD
) -> np.ndarray:
    """Matrix A with one row per emitted window so that window_map(L) == A @ L."""
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    padding = BoundaryPolicy(padding)
    centers = kernel.centers(length)
    matrix = np.zeros((len(centers), length), dtype=np.float64)
    for row, center in enumerate(centers):
        for position, weight in _window_taps(kernel, length, center, padding):
            matrix[row, position] += weight
    return matrix


def window_map(
    losses: Sequence[float],
    kernel: PcpgKernel,
    padding: BoundaryPolicy = BoundaryPolicy.ZERO_PAD,
) -> np.ndarray:
    """Windowed losses L'_u at the emitted centers, summed in tap order."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or len(losses) < 1:
        raise ValueError(f"window_map needs a non-empty loss vector, got shape {losses.shape}")
    padding = BoundaryPolicy(padding)
    length = len(losses)
    mapped = np.zeros(len(kernel.centers(length)), dtype=np.float64)
    for row, center in enumerate(kernel.centers(length)):
        acc = 0.0
        for position, weight in _window_taps(kernel, length, center, padding):
            acc += weight * losses[position]
        mapped[row] = acc
    return mapped


def aggregate(mapped: Sequence[float]) -> float:
    """L_PCPG: the sum of all window outputs, left to right."""
    total = 0.0
    for value in mapped:
        total += float(value)
    return total


def coefficient_map(
    kernel: PcpgKernel, length: int, padding: BoundaryPolicy = BoundaryPolicy.ZERO_PAD
) -> np.ndarray:
    """Per-position total weight c_i with L_PCPG == sum_i c_i * L_i.

    Each column is accumulated with ``math.fsum`` so an interior position with
    s = 1, which receives every kernel weight once, gets exactly fsum(w) == 1.
    """
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    padding = BoundaryPolicy(padding)
    contributions: List[List[float]] = [[] for _ in range(length)]
    for center in kernel.centers(length):
        for position, weight in _window_taps(kernel, length, center, padding):
            contributions[position].append(weight)
    return np.array([math.fsum(c) for c in contributions], dtype=np.float64)


def pcpg_value(
    returns: Sequence[float],
    log_probs: Sequence[float],
    kernel: PcpgKernel,
    padding: BoundaryPolicy = BoundaryPolicy.ZERO_PAD,
) -> float:
    """aggregate(window_map(per_step_losses(...))) for plain arrays."""
    return aggregate(window_map(per_step_losses(returns, log_probs), kernel, padding))


def combine(loss_ce: float, loss_pcpg: float, lam: float) -> float:
    """(1 - lambda) * L_CE + lambda * L_PCPG."""
    check_lambda(lam)
    return (1.0 - lam) * loss_ce + lam * loss_pcpg


def check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")


# Weight presets from the kernel-weight study (k = 3).
WEIGHT_PRESETS = {
    "uniform3": (1 / 3, 1 / 3, 1 / 3),
    "peaked": (1 / 4, 1 / 2, 1 / 4),
    "left-heavy": (1 / 3, 1 / 2, 1 / 6),
    "right-heavy": (1 / 6, 1 / 2, 1 / 3),
}
