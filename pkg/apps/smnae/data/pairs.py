"""Pair lists (CSV) and the family-disjoint train/test split."""
from __future__ import annotations

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

import numpy as np

from ..errors import DataFormatError, ValidationError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["video_a", "video_b", "label"]
RELATION_COLUMN = "relation"
# father-son, father-daughter, mother-son, mother-daughter, brother-brother, sister-sister, brother-sister
KIN_RELATIONS = ("FS", "FD", "MS", "MD", "BB", "SS", "BS")


@dataclass(frozen=True)
class PairRecord:
    video_a: str
    video_b: str
    label: bool  # True for kin
    relation: str = ""

    def __post_init__(self) -> None:
        if not self.video_a or not self.video_b:
            raise ValidationError("pair records need two nonempty video paths")

    @property
    def families(self) -> tuple[str, str]:
        return family_of(self.video_a), family_of(self.video_b)


def family_of(video_path: str) -> str:
    """Family id is the first component of a family/subject/... path."""
    parts = PurePosixPath(video_path.replace("\\", "/")).parts
    return parts[0] if parts else video_path


def load_pair_list(path: str | Path) -> list[PairRecord]:
    path = Path(path)
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataFormatError(f"{path}: cannot read pair list: {e}") from e
    if not rows:
        raise DataFormatError(f"{path}: empty pair list")
    header = [h.strip() for h in rows[0]]
    if header not in (REQUIRED_COLUMNS, [*REQUIRED_COLUMNS, RELATION_COLUMN]):
        raise DataFormatError(
            f"{path}: line 1: header must be {','.join(REQUIRED_COLUMNS)}[,{RELATION_COLUMN}], got {','.join(header)}"
        )
    width = len(header)
    records: list[PairRecord] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != width:
            raise DataFormatError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
        a, b, label = (cell.strip() for cell in row[:3])
        if label not in ("0", "1"):
            raise DataFormatError(f"{path}: line {lineno}: label must be 1 or 0, got {label!r}")
        if not a or not b:
            raise DataFormatError(f"{path}: line {lineno}: empty video path")
        relation = row[3].strip() if width == 4 else ""
        if relation and relation not in KIN_RELATIONS:
            raise DataFormatError(
                f"{path}: line {lineno}: relation must be one of {','.join(KIN_RELATIONS)} or empty, got {relation!r}"
            )
        records.append(PairRecord(a, b, label == "1", relation))
    return records


def write_pair_list(path: str | Path, pairs: Sequence[PairRecord], with_relation: bool | None = None) -> None:
    if with_relation is None:
        with_relation = any(p.relation for p in pairs)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([*REQUIRED_COLUMNS, RELATION_COLUMN] if with_relation else REQUIRED_COLUMNS)
        for p in pairs:
            row = [p.video_a, p.video_b, "1" if p.label else "0"]
            writer.writerow([*row, p.relation] if with_relation else row)


def _family_components(pairs: Sequence[PairRecord]) -> list[list[str]]:
    """Families linked by any pair must land on the same side of the split."""
    parent: dict[str, str] = {}

    def find(f: str) -> str:
        while parent[f] != f:
            parent[f] = parent[parent[f]]
            f = parent[f]
        return f

    for p in pairs:
        fa, fb = p.families
        for fam in (fa, fb):
            parent.setdefault(fam, fam)
        ra, rb = find(fa), find(fb)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for fam in sorted(parent):
        groups.setdefault(find(fam), []).append(fam)
    return sorted(groups.values())


def partition_subject_disjoint(pairs: Sequence[PairRecord], test_fraction: float,
                               seed: int) -> tuple[list[PairRecord], list[PairRecord]]:
    """Split pairs so that no family appears on both sides; input order is kept within each side."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    components = _family_components(pairs)
    n_families = sum(len(c) for c in components)
    target = math.floor(test_fraction * n_families + 0.5)
    if len(components) < 2 or target < 1 or target >= n_families:
        raise ValidationError(
            f"cannot split {n_families} families ({len(components)} linked groups) with test_fraction={test_fraction}"
        )

    order = np.random.default_rng(seed).permutation(len(components))
    test_families: set[str] = set()
    for idx in order:
        comp = components[idx]
        if len(test_families) + len(comp) <= target:
            test_families.update(comp)
        if len(test_families) == target:
            break
    if len(test_families) != target:
        logger.warning(f"Family split short of target: target={target}, achieved={len(test_families)}, "
                       f"groups={len(components)}, seed={seed}")
    if not test_families or len(test_families) == n_families:
        raise ValidationError(f"cannot split {n_families} families into a nonempty train and test side")

    train = [p for p in pairs if p.families[0] not in test_families]
    test = [p for p in pairs if p.families[0] in test_families]
    for name, side in (("train", train), ("test", test)):
        if not any(p.label for p in side) or all(p.label for p in side):
            raise ValidationError(f"{name} partition needs at least one kin and one non-kin pair")
    logger.info(f"Family-disjoint split: families={n_families}, test_families={len(test_families)}, "
                f"train_pairs={len(train)}, test_pairs={len(test)}, seed={seed}")
    return train, test
