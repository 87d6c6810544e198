"""Record and dataset containers."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from ..exceptions import ShapeError

CNN_TEST = "cnn_test"
LR_HALF = "lr_half"
_FOLD_RE = re.compile(r"^cnn_fold(\d+)$")


def fold_tag(fold: int) -> str:
    return f"cnn_fold{fold}"


@dataclass
class TimeSeriesInstance:
    """One multi-lead record, shape ``(n_leads, n_samples)``."""

    values: np.ndarray
    sample_rate_hz: float
    lead_names: list[str]
    label: int
    id: str
    age: float | None = None
    sex: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ShapeError(f"values must be (n_leads, n_samples), got {self.values.shape}")
        if len(self.lead_names) != self.values.shape[0]:
            raise ShapeError(
                f"{len(self.lead_names)} lead names for {self.values.shape[0]} leads"
            )
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        self.label = int(self.label)
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")

    @property
    def n_leads(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "TimeSeriesInstance":
        """Copy of this record carrying new signal values."""
        return replace(self, values=np.array(values, dtype=float), lead_names=list(self.lead_names))


@dataclass
class Dataset:
    """A list of records plus an optional split tag per record.

    Tags are ``cnn_fold<f>`` (cross-validation folds of the CNN half),
    ``cnn_test`` and ``lr_half``.
    """

    instances: list[TimeSeriesInstance] = field(default_factory=list)
    split_tags: list[str] | None = None

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[TimeSeriesInstance]:
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=int)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack records into ``X`` of shape (N, n_leads, n_samples) and labels ``y``."""
        if not self.instances:
            return np.zeros((0, 0, 0)), np.zeros(0, dtype=int)
        shapes = {inst.values.shape for inst in self.instances}
        if len(shapes) != 1:
            raise ShapeError(f"records have differing shapes: {sorted(shapes)}")
        X = np.stack([inst.values for inst in self.instances])
        return X, self.labels

    def take(self, indices: Sequence[int]) -> "Dataset":
        tags = None
        if self.split_tags is not None:
            tags = [self.split_tags[i] for i in indices]
        return Dataset([self.instances[i] for i in indices], tags)

    def _require_tags(self) -> list[str]:
        if self.split_tags is None:
            raise ValueError("dataset has not been split")
        return self.split_tags

    def indices_with_tag(self, tag: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self._require_tags()) if t == tag], dtype=int)

    @property
    def n_folds(self) -> int:
        folds = {int(m.group(1)) for t in self._require_tags() if (m := _FOLD_RE.match(t))}
        return len(folds)

    def fold_indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Training and validation indices for one cross-validation fold."""
        tags = self._require_tags()
        n_folds = self.n_folds
        if not 0 <= fold < n_folds:
            raise ValueError(f"fold {fold} outside 0..{n_folds - 1}")
        val = [i for i, t in enumerate(tags) if t == fold_tag(fold)]
        train = [i for i, t in enumerate(tags) if _FOLD_RE.match(t) and t != fold_tag(fold)]
        return np.array(train, dtype=int), np.array(val, dtype=int)

    def part(self, name: str) -> "Dataset":
        """Sub-dataset by tag, ``fold<f>`` or ``cnn_cv`` (all folds)."""
        tags = self._require_tags()
        if name == "cnn_cv":
            idx = [i for i, t in enumerate(tags) if _FOLD_RE.match(t)]
        else:
            idx = [i for i, t in enumerate(tags) if t == name]
        return self.take(idx)
