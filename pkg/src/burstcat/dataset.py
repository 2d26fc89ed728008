"""Burst manifests: ingestion, label binarization, splitting and class balancing."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

HEADER = ("burst_id", "site_id", "label", "frame1", "frame2", "frame3")
SPLITS = ("train", "val", "test")
UNCLASSIFIABLE = "unclassifiable"


class ManifestError(ValueError):
    """Malformed manifest; ``line`` is the 1-based line number in the file."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MappingError(KeyError):
    def __init__(self, labels):
        self.labels = sorted(labels)
        super().__init__(f"labels missing from species map: {', '.join(map(repr, self.labels))}")


class SplitConfigError(ValueError):
    pass


class BalanceError(ValueError):
    pass


@dataclass(frozen=True)
class BurstRecord:
    burst_id: str
    site_id: str
    raw_label: str
    frame_paths: tuple[Path, Path, Path]
    binary_label: int | None = None
    split: str | None = None


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "uniform"
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("uniform", "site_based"):
            raise SplitConfigError(f"split mode must be 'uniform' or 'site_based', got {self.mode!r}")
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise SplitConfigError(f"split fractions must be 3 positive numbers summing to 1, got {self.fractions}")
        object.__setattr__(self, "fractions", fr)


# --- manifests ---------------------------------------------------------------

def load_manifest(path) -> list[BurstRecord]:
    """Parse a manifest CSV; frame paths are resolved against the manifest's directory.

    Rows with fewer than three frame paths and rows labelled unclassifiable are
    dropped (and counted in the log).
    """
    path = Path(path)
    base = path.parent
    records: list[BurstRecord] = []
    short = unclassifiable = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ManifestError("empty manifest", 1)
        header = [h.strip() for h in header]
        if tuple(header[:6]) != HEADER or len(header) > 7 or (len(header) == 7 and header[6] != "split"):
            raise ManifestError(f"header must be {','.join(HEADER)}[,split], got {','.join(header)}", 1)
        has_split = len(header) == 7
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 4 or len(row) > len(header):
                raise ManifestError(f"expected {len(header)} fields, got {len(row)}", line)
            row = [c.strip() for c in row] + [""] * (len(header) - len(row))
            burst_id, site_id, label = row[:3]
            if not burst_id or not site_id or not label:
                raise ManifestError("burst_id, site_id and label must be non-empty", line)
            frames = [f for f in row[3:6] if f]
            split = row[6] if has_split and row[6] else None
            if split is not None and split not in SPLITS:
                raise ManifestError(f"unknown split {split!r}", line)
            if len(frames) < 3:
                short += 1
                continue
            if label.lower() == UNCLASSIFIABLE:
                unclassifiable += 1
                continue
            records.append(BurstRecord(burst_id, site_id, label, tuple(base / f for f in frames), None, split))
    if short or unclassifiable:
        log.info("%s: dropped %d bursts with < 3 frames and %d unclassifiable bursts", path, short, unclassifiable)
    return records


def write_manifest(records, path, with_split: bool = True) -> Path:
    """Write records as a manifest; frame paths are stored relative to the manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER + (("split",) if with_split else ()))
        for r in records:
            rel = [Path(os.path.relpath(Path(f).resolve(), base)).as_posix() for f in r.frame_paths]
            writer.writerow([r.burst_id, r.site_id, r.raw_label, *rel] + ([r.split or ""] if with_split else []))
    return path


def load_species_map(path=None) -> dict[str, int]:
    """Read ``raw_label,binary_label`` lines; ``#`` starts a comment.  Defaults to the bundled map."""
    if path is None:
        text = resources.files("burstcat").joinpath("species_map.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    mapping = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise ManifestError(f"species map entries are 'label,0|1', got {raw!r}", n)
        mapping[parts[0].lower()] = int(parts[1])
    return mapping


def binarize(records, species_map: dict[str, int]) -> list[BurstRecord]:
    lookup = {k.lower(): v for k, v in species_map.items()}
    missing = {r.raw_label for r in records if r.raw_label.lower() not in lookup}
    if missing:
        raise MappingError(missing)
    return [replace(r, binary_label=lookup[r.raw_label.lower()]) for r in records]


# --- splitting ---------------------------------------------------------------

def _partition_sizes(n: int, fractions, rounding) -> tuple[int, int, int]:
    n_val = rounding(n * fractions[1])
    n_test = rounding(n * fractions[2])
    return n - n_val - n_test, n_val, n_test


def split(records, spec: SplitSpec) -> list[BurstRecord]:
    """Assign train/val/test.  Returns records in their input order."""
    records = list(records)
    rng = np.random.default_rng(spec.seed)
    if spec.mode == "uniform":
        sizes = _partition_sizes(len(records), spec.fractions, lambda x: math.floor(x + 1e-9))
        order = rng.permutation(len(records))
        assignment = np.empty(len(records), dtype=object)
        bounds = np.cumsum((0,) + sizes)
        for name, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
            assignment[order[lo:hi]] = name
        return [replace(r, split=s) for r, s in zip(records, assignment)]

    sites = sorted({r.site_id for r in records})
    if len(sites) < 3:
        raise SplitConfigError(f"site-based split needs at least 3 sites, got {len(sites)}")
    sizes = _partition_sizes(len(sites), spec.fractions, lambda x: int(round(x)))
    if min(sizes) < 1:
        raise SplitConfigError(f"site counts {sizes} leave a split without sites; adjust fractions")
    shuffled = [sites[i] for i in rng.permutation(len(sites))]
    site_split = {}
    bounds = np.cumsum((0,) + sizes)
    for name, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
        for s in shuffled[lo:hi]:
            site_split[s] = name
    return [replace(r, split=site_split[r.site_id]) for r in records]


def balance(records, seed: int = 0) -> list[BurstRecord]:
    """Equalize class counts per split.

    train: the minority class is oversampled with replacement (duplicates share
    files); val/test: the majority class is randomly downsampled.  Output keeps
    the input order, with train duplicates appended after the train records.
    """
    records = list(records)
    if any(r.split not in SPLITS for r in records):
        raise BalanceError("every record needs a split before balancing")
    if any(r.binary_label not in (0, 1) for r in records):
        raise BalanceError("every record needs a binary label before balancing")
    out = []
    for k, name in enumerate(SPLITS):
        members = [r for r in records if r.split == name]
        if not members:
            continue
        rng = np.random.default_rng([seed, k])
        by_class = {c: [i for i, r in enumerate(members) if r.binary_label == c] for c in (0, 1)}
        if not by_class[0] or not by_class[1]:
            raise BalanceError(f"{name} split has no {'empty' if not by_class[0] else 'animal'} bursts")
        small, large = sorted((0, 1), key=lambda c: (len(by_class[c]), c))
        gap = len(by_class[large]) - len(by_class[small])
        if name == "train":
            extra = rng.choice(by_class[small], size=gap, replace=True) if gap else []
            out += members + [members[i] for i in extra]
        else:
            drop = set(rng.choice(by_class[large], size=gap, replace=False).tolist()) if gap else set()
            out += [r for i, r in enumerate(members) if i not in drop]
    return out


def class_counts(records) -> dict[str, tuple[int, int]]:
    """``{split: (n_empty, n_animal)}``."""
    counts = {}
    for r in records:
        n0, n1 = counts.get(r.split, (0, 0))
        counts[r.split] = (n0 + (r.binary_label == 0), n1 + (r.binary_label == 1))
    return counts
