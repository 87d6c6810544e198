"""Reading and writing datasets.

Two layouts are supported.

``csv_dir``
    One ``<id>.csv`` per record (header row of lead names, one row per
    sample) and a sidecar ``<id>.json`` holding ``id``, ``sample_rate_hz``,
    ``label``, ``age`` and ``sex``. Split tags, when present, live in
    ``split_tags.csv`` with columns ``id,tag``.

``bundle``
    A single JSON document with the same fields for every record plus an
    optional ``split_tags`` list.

Floats are written with ``repr`` so finite values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from pathlib import Path

import numpy as np

from ..exceptions import ParseError
from .types import Dataset, TimeSeriesInstance

BUNDLE_FORMAT = "ecgxai-bundle"
TAGS_FILE = "split_tags.csv"


def _meta(inst: TimeSeriesInstance) -> dict:
    return {
        "id": inst.id,
        "sample_rate_hz": inst.sample_rate_hz,
        "label": inst.label,
        "age": inst.age,
        "sex": inst.sex,
    }


def write_instance_csv(path, inst: TimeSeriesInstance) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(inst.lead_names)
        for row in inst.values.T:
            w.writerow([repr(float(v)) for v in row])


def save_dataset(ds: Dataset, path, format: str = "bundle") -> None:
    path = Path(path)
    if format == "bundle":
        doc = {
            "format": BUNDLE_FORMAT,
            "version": 1,
            "instances": [
                {**_meta(inst), "lead_names": inst.lead_names, "values": inst.values.tolist()}
                for inst in ds.instances
            ],
            "split_tags": ds.split_tags,
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc))
    elif format == "csv_dir":
        path.mkdir(parents=True, exist_ok=True)
        for inst in ds.instances:
            write_instance_csv(path / f"{inst.id}.csv", inst)
            (path / f"{inst.id}.json").write_text(json.dumps(_meta(inst), indent=1))
        if ds.split_tags is not None:
            with open(path / TAGS_FILE, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["id", "tag"])
                for inst, tag in zip(ds.instances, ds.split_tags):
                    w.writerow([inst.id, tag])
    else:
        raise ValueError(f"unknown dataset format {format!r}")


def _read_csv_values(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        if not header or any(h == "" for h in header):
            raise ParseError(f"{path}: missing header row")
        try:
            float(header[0])
        except ValueError:
            pass
        else:
            raise ParseError(f"{path}: missing header row (first row is numeric)")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {lineno} has {len(row)} columns, header declares {len(header)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ParseError(f"{path}: row {lineno} has a non-numeric cell") from None
    values = np.array(rows, dtype=float).reshape(-1, len(header)).T
    return header, values


def _instance_from_meta(meta: dict, lead_names, values, source) -> TimeSeriesInstance:
    try:
        return TimeSeriesInstance(
            values=values,
            sample_rate_hz=float(meta["sample_rate_hz"]),
            lead_names=list(lead_names),
            label=int(meta["label"]),
            id=str(meta["id"]),
            age=None if meta.get("age") is None else float(meta["age"]),
            sex=None if meta.get("sex") is None else int(meta["sex"]),
        )
    except KeyError as exc:
        raise ParseError(f"{source}: metadata lacks field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ParseError(f"{source}: {exc}") from None


def load_dataset(path, format: str | None = None) -> Dataset:
    """Load a dataset; the format is inferred from ``path`` when not given."""
    path = Path(path)
    if format is None:
        format = "csv_dir" if path.is_dir() else "bundle"
    if format == "bundle":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not a valid bundle ({exc})") from None
        if doc.get("format") != BUNDLE_FORMAT:
            raise ParseError(f"{path}: not an {BUNDLE_FORMAT} file")
        instances = []
        for i, rec in enumerate(doc["instances"]):
            values = rec.get("values")
            if values is None or len({len(v) for v in values}) > 1:
                raise ParseError(f"{path}: record {i} has ragged or missing leads")
            instances.append(
                _instance_from_meta(rec, rec.get("lead_names", []), np.array(values, dtype=float),
                                    f"{path} record {i}")
            )
        return Dataset(instances, doc.get("split_tags"))
    if format != "csv_dir":
        raise ValueError(f"unknown dataset format {format!r}")

    csv_files = sorted(p for p in path.glob("*.csv") if p.name != TAGS_FILE)
    if not csv_files:
        warnings.warn(f"no records found in {path}", stacklevel=2)
        return Dataset([])
    instances = []
    for csv_path in csv_files:
        meta_path = csv_path.with_suffix(".json")
        if not meta_path.exists():
            raise ParseError(f"{csv_path}: sidecar {meta_path.name} not found")
        meta = json.loads(meta_path.read_text())
        header, values = _read_csv_values(csv_path)
        instances.append(_instance_from_meta(meta, header, values, meta_path))
    tags = None
    tags_path = path / TAGS_FILE
    if tags_path.exists():
        with open(tags_path, newline="") as fh:
            by_id = {row["id"]: row["tag"] for row in csv.DictReader(fh)}
        try:
            tags = [by_id[inst.id] for inst in instances]
        except KeyError as exc:
            raise ParseError(f"{tags_path}: no tag for record {exc.args[0]}") from None
    return Dataset(instances, tags)


def default_data_dir() -> Path:
    """Directory named by ``ECGXAI_DATA_DIR``, else ``./data``."""
    return Path(os.environ.get("ECGXAI_DATA_DIR", "data"))
