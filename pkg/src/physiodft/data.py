"""Choice datasets and their wide-form CSV schemas.

Static (stated-preference) rows::

    participant_id, task_id, chosen, alt0_kitchen, ..., alt2_transport,
    count_share_kitchen, ..., time_share_transport

Gap-acceptance rows (alternative 0 = accept, 1 = reject)::

    participant_id, task_id, chosen, gap_index, x_gapsize, x_pos, x_speed,
    z_age, z_reg, x_scen, z_hr, z_scr, y_gaze_left, y_gaze_yaw_sd, y_gaze_pitch_sd
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

STATIC_ATTRIBUTES = ("kitchen", "condition", "size", "transport")
GAP_REQUIRED = ("gap_index", "x_gapsize", "x_pos", "x_speed", "z_age", "z_reg")
GAP_PHYSIO = ("x_scen", "z_hr", "z_scr", "y_gaze_left", "y_gaze_yaw_sd", "y_gaze_pitch_sd")
SHARE_FEATURES = ("count_share", "time_share")
_ALT_COL = re.compile(r"^alt(\d+)_(\w+)$")


@dataclass
class Dataset:
    """A set of choice observations held as column arrays.

    ``attributes`` is (N, J, K) for static data and ``None`` for gap data,
    whose attribute matrices are built by the model from ``features``.
    Share features are stored as (N, K) arrays, everything else as (N,).
    """

    application: str
    participant_id: np.ndarray
    task_id: np.ndarray
    chosen: np.ndarray
    n_alternatives: int
    features: dict = field(default_factory=dict)
    attributes: np.ndarray | None = None
    attribute_names: tuple = ()

    def __post_init__(self):
        self.participant_id = np.asarray(self.participant_id, dtype=object)
        self.task_id = np.asarray(self.task_id, dtype=object)
        self.chosen = np.asarray(self.chosen, dtype=int)
        n = self.chosen.shape[0]
        if self.participant_id.shape != (n,) or self.task_id.shape != (n,):
            raise DataError("participant_id, task_id and chosen must have equal length")
        if n and (self.chosen.min() < 0 or self.chosen.max() >= self.n_alternatives):
            bad = int(np.flatnonzero((self.chosen < 0) | (self.chosen >= self.n_alternatives))[0])
            raise DataError(f"task {self.task_id[bad]!r}: chosen index {self.chosen[bad]} outside [0, {self.n_alternatives})")
        if self.attributes is not None:
            self.attributes = np.asarray(self.attributes, dtype=float)
            if self.attributes.shape[:2] != (n, self.n_alternatives):
                raise DataError(f"attributes shape {self.attributes.shape} inconsistent with N={n}, J={self.n_alternatives}")

    def __len__(self):
        return self.chosen.shape[0]

    def has(self, name: str) -> bool:
        return name in self.features

    def feature(self, name: str) -> np.ndarray:
        """Feature column; missing columns or blank cells raise DataError."""
        if name not in self.features:
            first = self.task_id[0] if len(self) else "<empty>"
            raise DataError(f"task {first!r}: missing covariate {name!r}")
        col = self.features[name]
        nan = np.isnan(col)
        if np.any(nan):
            row = int(np.flatnonzero(nan.reshape(len(self), -1).any(axis=1))[0])
            raise DataError(f"task {self.task_id[row]!r}: covariate {name!r} is missing")
        return col

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            application=self.application,
            participant_id=self.participant_id[index],
            task_id=self.task_id[index],
            chosen=self.chosen[index],
            n_alternatives=self.n_alternatives,
            features={k: v[index] for k, v in self.features.items()},
            attributes=None if self.attributes is None else self.attributes[index],
            attribute_names=self.attribute_names,
        )

    def with_choices(self, chosen) -> "Dataset":
        out = self.subset(np.arange(len(self)))
        out.chosen = np.asarray(chosen, dtype=int)
        return out

    def clusters(self) -> np.ndarray:
        """Integer cluster labels (participants) in order of first appearance."""
        _, first, inv = np.unique(self.participant_id.astype(str), return_index=True, return_inverse=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        return rank[inv]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def dataset_header(data: Dataset) -> list[str]:
    head = ["participant_id", "task_id", "chosen"]
    if data.application == "static":
        names = data.attribute_names
        head += [f"alt{j}_{a}" for j in range(data.n_alternatives) for a in names]
        for s in SHARE_FEATURES:
            if s in data.features:
                head += [f"{s}_{a}" for a in names]
    else:
        head += [c for c in GAP_REQUIRED + GAP_PHYSIO if c in data.features]
    return head


def write_dataset(data: Dataset, path) -> None:
    """Write a dataset as UTF-8 CSV at full float precision."""
    head = dataset_header(data)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for n in range(len(data)):
            row = [data.participant_id[n], data.task_id[n], int(data.chosen[n])]
            if data.application == "static":
                row += list(data.attributes[n].ravel())
                for s in SHARE_FEATURES:
                    if s in data.features:
                        row += list(data.features[s][n])
            else:
                for c in head[3:]:
                    v = data.features[c][n]
                    row.append(int(v) if c == "gap_index" else float(v))
            w.writerow([_fmt(v) for v in row])


def _to_float(text: str, column: str, line: int) -> float:
    if text.strip() == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"line {line}: column {column!r} is not numeric: {text!r}") from None


def read_dataset(path) -> Dataset:
    """Read a static or gap dataset; the schema is detected from the header."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    head = [h.strip() for h in head]
    missing = [c for c in ("participant_id", "task_id", "chosen") if c not in head]
    if missing:
        raise DataError(f"{path}: missing column(s) {missing}")
    col = {c: i for i, c in enumerate(head)}
    rows = [r for r in rows if any(x.strip() for x in r)]
    for ln, r in enumerate(rows, start=2):
        if len(r) != len(head):
            raise DataError(f"{path}: line {ln} has {len(r)} fields, header has {len(head)}")
    pid = [r[col["participant_id"]] for r in rows]
    tid = [r[col["task_id"]] for r in rows]
    chosen = np.array([_to_float(r[col["chosen"]], "chosen", ln) for ln, r in enumerate(rows, 2)])
    if np.any(np.isnan(chosen)) or np.any(chosen != np.round(chosen)):
        raise DataError(f"{path}: column 'chosen' must hold integer indices")

    def numeric(c):
        return np.array([_to_float(r[col[c]], c, ln) for ln, r in enumerate(rows, 2)], dtype=float)

    if "gap_index" in col:
        absent = [c for c in GAP_REQUIRED if c not in col]
        if absent:
            raise DataError(f"{path}: gap schema missing column(s) {absent}")
        feats = {c: numeric(c) for c in GAP_REQUIRED + GAP_PHYSIO if c in col}
        return Dataset("gap", pid, tid, chosen.astype(int), 2, features=feats)

    alts = {}
    for c in head:
        m = _ALT_COL.match(c)
        if m:
            alts.setdefault(int(m.group(1)), []).append(m.group(2))
    if not alts:
        raise DataError(f"{path}: neither gap columns (gap_index, ...) nor static alternative columns (alt0_<attr>, ...) found")
    J = max(alts) + 1
    names = tuple(alts[0])
    for j in range(J):
        if tuple(alts.get(j, ())) != names:
            raise DataError(f"{path}: alternative {j} attribute columns {alts.get(j)} differ from alt0 {list(names)}")
    M = np.stack([np.column_stack([numeric(f"alt{j}_{a}") for a in names]) for j in range(J)], axis=1) if rows else np.zeros((0, J, len(names)))
    if np.any(np.isnan(M)):
        raise DataError(f"{path}: blank attribute values")
    feats = {}
    for s in SHARE_FEATURES:
        cols = [f"{s}_{a}" for a in names]
        present = [c in col for c in cols]
        if all(present):
            feats[s] = np.column_stack([numeric(c) for c in cols]) if rows else np.zeros((0, len(names)))
        elif any(present):
            raise DataError(f"{path}: incomplete {s} columns; need {cols}")
    return Dataset("static", pid, tid, chosen.astype(int), J, features=feats, attributes=M, attribute_names=names)
