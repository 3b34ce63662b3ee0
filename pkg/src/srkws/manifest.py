"""Dataset manifests (JSON-lines) and deterministic stratified 8:1:1 splits."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .labels import KEYWORD, LABEL_KINDS, HierLabel


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: HierLabel

    def __post_init__(self):
        if not self.path:
            raise ValueError("manifest entry path must be non-empty")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[ManifestEntry, ...]
    validation: tuple[ManifestEntry, ...]
    test: tuple[ManifestEntry, ...]


def _entry_to_record(entry: ManifestEntry) -> dict:
    record = {"path": entry.path, "label_kind": entry.label.kind}
    if entry.label.kind == KEYWORD:
        record["keyword_index"] = entry.label.keyword_index
    return record


def _record_to_entry(record: dict, lineno: int) -> ManifestEntry:
    allowed = {"path", "label_kind", "keyword_index"}
    unknown = set(record) - allowed
    if unknown:
        raise ValueError(f"manifest line {lineno}: unknown fields {sorted(unknown)}")
    if "path" not in record or "label_kind" not in record:
        raise ValueError(f"manifest line {lineno}: missing path or label_kind")
    kind = record["label_kind"]
    if kind not in LABEL_KINDS:
        raise ValueError(f"manifest line {lineno}: unknown label_kind {kind!r}")
    has_index = "keyword_index" in record
    if (kind == KEYWORD) != has_index:
        raise ValueError(
            f"manifest line {lineno}: keyword_index must be present exactly for keyword labels"
        )
    try:
        if kind == KEYWORD:
            label = HierLabel.keyword(int(record["keyword_index"]))
        elif kind == "non_keyword_speech":
            label = HierLabel.non_keyword_speech()
        else:
            label = HierLabel.non_speech()
        return ManifestEntry(path=str(record["path"]), label=label)
    except ValueError as exc:
        raise ValueError(f"manifest line {lineno}: {exc}") from exc


def save_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(_entry_to_record(entry)) + "\n")


def load_manifest(path, n_keywords: int | None = None) -> list[ManifestEntry]:
    """Parse one entry per non-empty line, preserving order.

    When ``n_keywords`` is given, keyword indices are range-checked.
    """
    entries = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"manifest line {lineno}: invalid record ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ValueError(f"manifest line {lineno}: expected a key-value object")
            entry = _record_to_entry(record, lineno)
            if n_keywords is not None:
                try:
                    entry.label.validate(n_keywords)
                except ValueError as exc:
                    raise ValueError(f"manifest line {lineno}: {exc}") from exc
            entries.append(entry)
    return entries


def _class_key(entry: ManifestEntry) -> tuple:
    return (entry.label.kind, entry.label.keyword_index or 0)


def split_dataset(entries, seed: int) -> DatasetSplit:
    """Deterministic per-class split into floor(0.8n) / floor(0.1n) / remainder."""
    entries = list(entries)
    if not entries:
        raise ValueError("cannot split an empty dataset")
    groups: dict[tuple, list[ManifestEntry]] = {}
    for entry in entries:
        groups.setdefault(_class_key(entry), []).append(entry)
    rng = np.random.default_rng(seed)
    train, validation, test = [], [], []
    for key in sorted(groups):
        group = groups[key]
        if len(group) < 3:
            raise ValueError(
                f"class {key} has only {len(group)} samples; at least 3 are needed "
                "to populate every split"
            )
        order = rng.permutation(len(group))
        n_train = int(0.8 * len(group))
        n_val = int(0.1 * len(group))
        picked = [group[i] for i in order]
        train.extend(picked[:n_train])
        validation.extend(picked[n_train : n_train + n_val])
        test.extend(picked[n_train + n_val :])
    return DatasetSplit(train=tuple(train), validation=tuple(validation), test=tuple(test))
