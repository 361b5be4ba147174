"""File formats: grid JSON, sample CSV, dataset manifests, basis JSON, RD pairs CSV.

Writes are atomic (temporary file in the target directory, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from .basis import EigenBasis
from .compare import RdSamplePair
from .errors import SchemaError
from .grid import AxisSpec, GrdGrid, SampleSet

SAMPLE_HEADER = ["bitrate_kbps", "resolution_diag", "quality"]
PAIRS_HEADER = ["content_id", "codec", "bitrate_kbps", "quality"]
MANIFEST = "manifest.json"


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


# -- grids ----------------------------------------------------------------------


def grid_to_dict(grid: GrdGrid) -> dict:
    out = grid.axes.to_dict()
    out["values"] = grid.values.tolist()
    out["metadata"] = dict(grid.metadata)
    return out


def grid_from_dict(data) -> GrdGrid:
    try:
        axes = AxisSpec.from_dict(data)
        return GrdGrid(axes, data["values"], data.get("metadata", {}))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"grid file is missing or mistyping a field: {exc}") from None


def save_grid(grid: GrdGrid, path) -> None:
    atomic_write(path, dumps(grid_to_dict(grid)))


def load_grid(path) -> GrdGrid:
    return grid_from_dict(_load_json(path))


# -- samples --------------------------------------------------------------------


def samples_to_csv(samples: SampleSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SAMPLE_HEADER)
    for i, j, q in samples.entries:
        writer.writerow([repr(samples.axes.bitrates[i]), repr(samples.axes.resolutions[j]), repr(q)])
    return buf.getvalue()


def save_samples(samples: SampleSet, path) -> None:
    atomic_write(path, samples_to_csv(samples))


def load_samples(path, axes: AxisSpec) -> SampleSet:
    """Read a sample CSV; bitrate and resolution must equal axis labels."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SAMPLE_HEADER:
            raise SchemaError(f"{path}: header must be {','.join(SAMPLE_HEADER)}")
        entries = []
        for row in reader:
            try:
                b, r, q = (float(row[k]) for k in SAMPLE_HEADER)
            except (TypeError, ValueError):
                raise SchemaError(f"{path}: non-numeric row {row}") from None
            entries.append((axes.bitrate_index(b), axes.resolution_index(r), q))
    return SampleSet(axes, tuple(entries))


# -- datasets -------------------------------------------------------------------


def save_dataset(grids: Sequence[GrdGrid], directory, splits: Sequence[str] | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    splits = list(splits) if splits is not None else ["train"] * len(grids)
    entries = []
    width = max(5, len(str(len(grids))))
    for m, (grid, split) in enumerate(zip(grids, splits)):
        name = f"grid_{m:0{width}d}.json"
        save_grid(grid, directory / name)
        entries.append({"file": name, "split": split})
    manifest = directory / MANIFEST
    atomic_write(manifest, dumps({"grids": entries}))
    return manifest


def load_dataset(path, split: str | None = None) -> list[GrdGrid]:
    """Load grids listed in a manifest (file or its directory), optionally one split."""
    return [g for g, _ in load_dataset_with_splits(path) if split is None or _ == split]


def load_dataset_with_splits(path) -> list[tuple[GrdGrid, str]]:
    path = Path(path)
    manifest = path / MANIFEST if path.is_dir() else path
    data = _load_json(manifest)
    try:
        entries = data["grids"]
        return [(load_grid(manifest.parent / e["file"]), e.get("split", "train")) for e in entries]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{manifest}: bad manifest ({exc})") from None


# -- bases ----------------------------------------------------------------------


def save_basis(basis: EigenBasis, path) -> None:
    atomic_write(path, dumps(basis.to_dict()))


def load_basis(path) -> EigenBasis:
    try:
        return EigenBasis.from_dict(_load_json(path))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: bad basis file ({exc})") from None


# -- codec comparison samples ---------------------------------------------------


def load_pairs(path) -> list[RdSamplePair]:
    """Read ``content_id,codec,bitrate_kbps,quality`` rows; codecs are A and B."""
    grouped: dict[str, dict[str, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PAIRS_HEADER:
            raise SchemaError(f"{path}: header must be {','.join(PAIRS_HEADER)}")
        for row in reader:
            codec = row["codec"].strip().upper()
            if codec not in ("A", "B"):
                raise SchemaError(f"{path}: codec must be A or B, got {row['codec']!r}")
            try:
                point = (float(row["bitrate_kbps"]), float(row["quality"]))
            except (TypeError, ValueError):
                raise SchemaError(f"{path}: non-numeric row {row}") from None
            grouped.setdefault(row["content_id"], {"A": [], "B": []})[codec].append(point)
    return [RdSamplePair(cid, tuple(v["A"]), tuple(v["B"])) for cid, v in grouped.items()]


def pairs_to_csv(pairs: Iterable[RdSamplePair]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PAIRS_HEADER)
    for p in pairs:
        for codec, pts in (("A", p.a), ("B", p.b)):
            for x, z in pts:
                writer.writerow([p.content_id, codec, repr(x), repr(z)])
    return buf.getvalue()
