"""Layout representations and conversions.

A *stack* is an ``(M, H, W)`` float array of component intensities in [0, 1].
A *field* is an ``(H, W)`` integer array of labels in ``{0, ..., M}`` where 0
is background and label ``i`` is component ``i`` (1-based). A *mask* is an
``(H, W)`` boolean array.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 0.5

COMPONENT_NAMES = ("tread", "carcass", "sidewall", "inner_liner", "bead_filler", "cushion")


@dataclass(frozen=True, order=True)
class DimSpec:
    """Width/height of a layout in pixels."""

    width: int
    height: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.width, self.height)

    def normalized(self, H: int, W: int) -> tuple[float, float]:
        return (self.width / W, self.height / H)

    def validate(self, H: int, W: int) -> None:
        if not (0 < self.width <= W and 0 < self.height <= H):
            raise ValueError(f"{self} outside grid {W}x{H}")


def component_names(M: int) -> tuple[str, ...]:
    if M <= len(COMPONENT_NAMES):
        return COMPONENT_NAMES[:M]
    return COMPONENT_NAMES + tuple(f"component_{i}" for i in range(len(COMPONENT_NAMES) + 1, M + 1))


def validate_stack(stack) -> np.ndarray:
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or min(stack.shape) < 1:
        raise ValueError(f"stack must be (M, H, W) with positive sizes, got {stack.shape}")
    if stack.size and (stack.min() < 0.0 or stack.max() > 1.0):
        raise ValueError("stack intensities must lie in [0, 1]")
    return stack


def validate_field(field, K: int | None = None) -> np.ndarray:
    field = np.asarray(field)
    if field.ndim != 2 or not np.issubdtype(field.dtype, np.integer):
        raise ValueError(f"field must be an (H, W) integer array, got {field.dtype} {field.shape}")
    if field.size and field.min() < 0:
        raise ValueError("labels must be non-negative")
    if K is not None and field.size and field.max() >= K:
        raise ValueError(f"label {field.max()} out of range for K={K}")
    return field


def stack_to_categorical(stack, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Label each pixel with its strongest component if it beats ``threshold``.

    Ties go to the lowest component index (``argmax`` returns the first hit).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    stack = validate_stack(stack)
    best = np.argmax(stack, axis=0)
    peak = np.take_along_axis(stack, best[None], axis=0)[0]
    return np.where(peak > threshold, best + 1, 0).astype(np.int64)


def categorical_to_stack(field, M: int) -> np.ndarray:
    field = validate_field(field, M + 1)
    labels = np.arange(1, M + 1)[:, None, None]
    return (field[None] == labels).astype(np.float64)


def one_hot(field, K: int, dtype=np.float64) -> np.ndarray:
    """(..., H, W) labels -> (..., H, W, K) one-hot."""
    field = np.asarray(field)
    return (field[..., None] == np.arange(K)).astype(dtype)


def component_mask(x, index: int, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Boolean mask of 0-based component ``index`` in a stack or field."""
    x = np.asarray(x)
    if x.ndim == 2:
        return x == index + 1
    return x[index] > threshold


def assembled_mask(x, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Union of all components; ``threshold`` is ignored for fields."""
    x = np.asarray(x)
    if x.ndim == 2:
        return x != 0
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return np.any(x > threshold, axis=0)


def measure_dims(mask) -> DimSpec | None:
    """Tight bounding box of the true pixels, or None for an empty mask."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return DimSpec(int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))
