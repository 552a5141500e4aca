"""
Validation split by evenly spaced root-pixel rank.

Images are sorted by root-pixel count (ties by id) and the validation set is
taken at evenly spaced positions of that order, so it spans the full range
from the sparsest to the densest image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

DEFAULT_VALIDATION_SIZE = 9


@dataclass(frozen=True)
class SplitResult:
    train_ids: list[str]
    validation_ids: list[str]


def validation_positions(n: int, k: int) -> list[int]:
    """round(j * (n - 1) / (k - 1)) for j = 0..k-1, collisions moved to the next free slot."""
    if k == 1:
        return [0]
    taken: list[int] = []
    used: set[int] = set()
    for j in range(k):
        idx = round(j * (n - 1) / (k - 1))
        while idx in used and idx < n - 1:
            idx += 1
        while idx in used:
            idx -= 1
        used.add(idx)
        taken.append(idx)
    return sorted(taken)


def split_dataset(
    ids_with_root_counts: Sequence[tuple[str, int]],
    *,
    validation_size: int = DEFAULT_VALIDATION_SIZE,
    test_ids: Optional[Iterable[str]] = None,
) -> SplitResult:
    """Split into training and validation ids; `test_ids` are held out first."""
    if validation_size < 1:
        raise ValueError(f"validation_size must be >= 1, got {validation_size}")
    held_out = set(test_ids or ())
    pool = [(name, int(count)) for name, count in ids_with_root_counts if name not in held_out]
    if len({name for name, _ in pool}) != len(pool):
        raise ValueError("duplicate image ids in split input")
    needed = validation_size + 1
    if len(pool) < needed:
        raise ValueError(
            f"need at least {needed} images to hold out {validation_size} for validation, got {len(pool)}"
        )
    ordered = sorted(pool, key=lambda item: (item[1], item[0]))
    positions = set(validation_positions(len(ordered), validation_size))
    validation = [ordered[i][0] for i in sorted(positions)]
    train = [name for i, (name, _) in enumerate(ordered) if i not in positions]
    return SplitResult(train_ids=train, validation_ids=validation)
