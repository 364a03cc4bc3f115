"""Time-sampled Grassmann-component data for curves on a chart.

A trajectory stores one real column per (symbol, generator subset) pair; the
subset is a bitmask over the q generators and always matches the symbol's
parity.  The column order is the file schema used by the CSV/JSON writers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grassmann import GrassmannElement


def parity_masks(q: int, parity_bit: int) -> list[int]:
    """Ascending bitmasks over {1..q} whose degree has the given parity."""
    return [m for m in range(1 << q) if bin(m).count("1") % 2 == parity_bit]


def mask_label(mask: int) -> str:
    if mask == 0:
        return "1"
    return "".join(f"z{i + 1}" for i in range(mask.bit_length()) if mask >> i & 1)


def parse_mask_label(label: str) -> int:
    if label == "1":
        return 0
    mask = 0
    for piece in label.split("z"):
        if not piece:
            continue
        mask |= 1 << (int(piece) - 1)
    return mask


@dataclass
class Trajectory:
    """Sampled S-curve components; immutable by convention."""

    q: int
    colspec: tuple  # tuple of (symbol name, subset mask)
    times: np.ndarray  # (n,)
    data: np.ndarray  # (n, len(colspec))
    meta: dict = field(default_factory=dict)
    diverged_at: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != (self.times.shape[0], len(self.colspec)):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.times.shape[0]} samples x {len(self.colspec)} columns"
            )
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def labels(self) -> list[str]:
        return [f"{name}.{mask_label(mask)}" for name, mask in self.colspec]

    def names(self) -> list[str]:
        seen = []
        for name, _ in self.colspec:
            if name not in seen:
                seen.append(name)
        return seen

    def has(self, name: str) -> bool:
        return any(n == name for n, _ in self.colspec)

    def series(self, name: str) -> tuple[list[int], np.ndarray]:
        """(masks, view of shape (n, len(masks))) for one symbol name."""
        idx = [i for i, (n, _) in enumerate(self.colspec) if n == name]
        if not idx:
            raise KeyError(f"trajectory has no columns for {name!r}")
        masks = [self.colspec[i][1] for i in idx]
        return masks, self.data[:, idx]

    def element(self, name: str, i: int) -> GrassmannElement:
        masks, block = self.series(name)
        return GrassmannElement(self.q, dict(zip(masks, block[i])))

    def max_abs(self, name: str) -> float:
        _, block = self.series(name)
        return float(np.max(np.abs(block))) if block.size else 0.0

    def with_meta(self, **extra) -> "Trajectory":
        meta = dict(self.meta)
        meta.update(extra)
        return Trajectory(self.q, self.colspec, self.times, self.data, meta, self.diverged_at)
