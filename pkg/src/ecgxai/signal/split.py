"""CNN / LR dataset split with a held-out CNN test set and CV folds."""

from __future__ import annotations

import numpy as np

from ..exceptions import SplitError
from .types import CNN_TEST, LR_HALF, Dataset, fold_tag


def _stratified_halves(idx: np.ndarray, labels: np.ndarray, frac: float, rng):
    """Split ``idx`` per class, putting round(frac * n_class) of each class first."""
    first, second = [], []
    for cls in (0, 1):
        members = idx[labels[idx] == cls]
        members = members[rng.permutation(len(members))]
        k = int(round(frac * len(members)))
        first.extend(members[:k])
        second.extend(members[k:])
    return np.array(first, dtype=int), np.array(second, dtype=int)


def split_dataset(ds: Dataset, seed: int, n_folds: int = 5,
                  test_fraction: float = 0.2) -> Dataset:
    """Tag every record with its role in the pipeline.

    Stratified 50/50 split into a CNN half and an LR half; the CNN half is
    split again into a stratified test set (``test_fraction``) and
    ``n_folds`` stratified cross-validation folds.
    """
    labels = ds.labels
    counts = np.bincount(labels, minlength=2)
    if counts.min() < 2:
        raise SplitError(f"need at least 2 records per class, got counts {counts.tolist()}")
    rng = np.random.default_rng(seed)
    all_idx = np.arange(len(ds))
    cnn, lr = _stratified_halves(all_idx, labels, 0.5, rng)
    test, cv = _stratified_halves(cnn, labels, test_fraction, rng)

    tags = [LR_HALF] * len(ds)
    for i in test:
        tags[i] = CNN_TEST
    # deal each class round-robin over folds after shuffling
    for cls in (0, 1):
        members = cv[labels[cv] == cls]
        members = members[rng.permutation(len(members))]
        for j, i in enumerate(members):
            tags[i] = fold_tag(j % n_folds)

    required = {LR_HALF: lr, CNN_TEST: test}
    for name, idx in required.items():
        missing = {0, 1} - set(labels[idx].tolist())
        if missing:
            raise SplitError(f"class {sorted(missing)} absent from {name}")
    for f in range(n_folds):
        idx = [i for i, t in enumerate(tags) if t == fold_tag(f)]
        if not idx:
            raise SplitError(f"fold {f} is empty")
    return Dataset(list(ds.instances), tags)
