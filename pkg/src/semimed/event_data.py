"""Semi-competing-risks records and their aggregated counting processes.

Each subject contributes to three counting processes: the non-terminal
event (``N*``), the terminal event without a prior non-terminal event
(``N0``) and the terminal event after a non-terminal event (``N1``), with
at-risk processes ``Y* = Y0`` and ``Y1``.  A non-terminal and terminal event
recorded at the same time are ordered non-terminal first, so the death is
counted in ``N1`` and the subject sits in ``Y1`` at that instant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "CSV_COLUMNS",
    "DataValidationError",
    "CohortArrays",
    "RiskSetPanel",
    "SubjectRecord",
    "as_arrays",
    "build_panel",
    "build_panels",
    "panel_counts",
    "pooled_grid",
    "read_csv",
    "validate_and_load",
    "write_csv",
]

CSV_COLUMNS = (
    "id",
    "z",
    "time_nonterminal",
    "status_nonterminal",
    "time_terminal",
    "status_terminal",
)


class DataValidationError(ValueError):
    """Raised when input rows violate the record invariants.

    ``issues`` holds ``(row_number, message)`` pairs; row numbers count the
    header as row 1, matching what a spreadsheet shows.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [f"row {row}: {msg}" if row is not None else msg for row, msg in self.issues]
        super().__init__("invalid semi-competing-risks data:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class SubjectRecord:
    """One subject's observed outcome.

    ``x1`` is the observed non-terminal time (``T1 ^ C``, or ``x2`` when no
    non-terminal event was seen) and ``x2`` the observed terminal time
    (``T2 ^ C``); ``delta1``/``delta2`` flag whether each was an event.
    """

    id: str
    z: int
    x1: float
    delta1: int
    x2: float
    delta2: int

    def __post_init__(self):
        problem = _record_problem(self.z, self.x1, self.delta1, self.x2, self.delta2)
        if problem:
            raise DataValidationError([(None, f"subject {self.id!r}: {problem}")])


def _record_problem(z, x1, d1, x2, d2):
    if z not in (0, 1):
        return f"treatment arm z={z!r} is not 0 or 1"
    if d1 not in (0, 1) or d2 not in (0, 1):
        return "status flags must be 0 or 1"
    if not (math.isfinite(x1) and math.isfinite(x2)):
        return "times must be finite"
    if x1 < 0 or x2 < 0:
        return "negative time"
    if x2 == 0:
        return "terminal time is 0 (zero-length follow-up)"
    if x1 > x2:
        return f"x1={x1!r} > x2={x2!r}: non-terminal time after terminal time"
    if d1 == 0 and x1 != x2:
        return "status_nonterminal=0 requires time_nonterminal == time_terminal"
    return None


def _parse_flag(text, name):
    value = float(text)
    if value not in (0.0, 1.0):
        raise ValueError(f"{name}={text!r} outside {{0,1}}")
    return int(value)


def validate_and_load(rows: Iterable[Mapping[str, object]], first_row_number: int = 2):
    """Validate parsed CSV rows and return a list of :class:`SubjectRecord`.

    Every row is checked and all problems are reported together in a
    :class:`DataValidationError`; both arms must be nonempty.
    """
    records = []
    issues = []
    seen_ids = set()
    for offset, row in enumerate(rows):
        rownum = first_row_number + offset
        missing = [c for c in CSV_COLUMNS if c not in row or row[c] in (None, "")]
        if missing:
            issues.append((rownum, f"missing value(s) for {', '.join(missing)}"))
            continue
        try:
            z = _parse_flag(row["z"], "z")
            x1 = float(row["time_nonterminal"])
            d1 = _parse_flag(row["status_nonterminal"], "status_nonterminal")
            x2 = float(row["time_terminal"])
            d2 = _parse_flag(row["status_terminal"], "status_terminal")
        except (TypeError, ValueError) as exc:
            issues.append((rownum, f"malformed value: {exc}"))
            continue
        problem = _record_problem(z, x1, d1, x2, d2)
        if problem:
            issues.append((rownum, problem))
            continue
        rid = str(row["id"])
        if rid in seen_ids:
            issues.append((rownum, f"duplicate id {rid!r}"))
            continue
        seen_ids.add(rid)
        records.append(SubjectRecord(rid, z, x1, d1, x2, d2))
    if not issues:
        for arm in (0, 1):
            if not any(r.z == arm for r in records):
                issues.append((None, f"arm z={arm} has no subjects"))
    if issues:
        raise DataValidationError(issues)
    return records


def read_csv(path):
    """Read and validate a CSV file with the columns in :data:`CSV_COLUMNS`."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        if header != CSV_COLUMNS:
            raise DataValidationError(
                [(1, f"header must be exactly {','.join(CSV_COLUMNS)}; got {','.join(header)}")]
            )
        return validate_and_load(reader)


def write_csv(records: Sequence[SubjectRecord], path):
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([r.id, r.z, repr(float(r.x1)), r.delta1, repr(float(r.x2)), r.delta2])


class CohortArrays(NamedTuple):
    """Column view of a list of records."""

    z: np.ndarray
    x1: np.ndarray
    d1: np.ndarray
    x2: np.ndarray
    d2: np.ndarray

    def arm(self, arm):
        keep = self.z == arm
        return CohortArrays(*(col[keep] for col in self))

    def __len__(self):
        return self.z.size


def as_arrays(records) -> CohortArrays:
    if isinstance(records, CohortArrays):
        return records
    return CohortArrays(
        np.array([r.z for r in records], dtype=np.int64),
        np.array([r.x1 for r in records], dtype=float),
        np.array([r.delta1 for r in records], dtype=np.int64),
        np.array([r.x2 for r in records], dtype=float),
        np.array([r.delta2 for r in records], dtype=np.int64),
    )


def pooled_grid(records):
    """All distinct observed times: non-terminal event times and every
    terminal/censoring time.  At-risk sets only change on this grid."""
    data = as_arrays(records)
    return np.unique(np.concatenate((data.x1[data.d1 == 1], data.x2)))


@dataclass(frozen=True, eq=False)
class RiskSetPanel:
    """Aggregated counting and at-risk processes of one arm.

    ``Y_0[k]`` and ``Y_1[k]`` are at-risk counts just before ``grid[k]``;
    ``dN_*[k]`` are the jumps at ``grid[k]``.  The grid also carries
    censoring times, where all jumps are zero but at-risk sets change.
    """

    arm: int
    grid: np.ndarray
    dN_star: np.ndarray
    dN_0: np.ndarray
    dN_1: np.ndarray
    Y_0: np.ndarray
    Y_1: np.ndarray
    m_arm: int

    @property
    def Y_star(self):
        return self.Y_0

    def counts(self, kind):
        """``(dN, Y)`` for ``kind`` in {'nonterminal', 'terminal_from_state0',
        'terminal_from_state1'}."""
        if kind == "nonterminal":
            return self.dN_star, self.Y_0
        if kind == "terminal_from_state0":
            return self.dN_0, self.Y_0
        if kind == "terminal_from_state1":
            return self.dN_1, self.Y_1
        raise ValueError(f"unknown hazard kind {kind!r}")


def _grid_index(grid, times):
    idx = np.searchsorted(grid, times)
    if np.any(idx >= grid.size) or np.any(grid[np.minimum(idx, grid.size - 1)] != times):
        raise ValueError("grid must contain every observed time")
    return idx


def panel_counts(arm_data: CohortArrays, grid, weights=None):
    """Counting-process arrays ``(dN_star, dN_0, dN_1, Y_0, Y_1)`` on ``grid``.

    With ``weights`` of shape ``(B, n_arm)`` (frequency weights, e.g.
    bootstrap multiplicities) every output gains a leading axis of length
    ``B``; a subject with weight ``k`` counts as ``k`` identical copies.
    """
    grid = np.asarray(grid, dtype=float)
    n_grid = grid.size
    d1 = arm_data.d1.astype(bool)
    d2 = arm_data.d2.astype(bool)
    i1 = _grid_index(grid, arm_data.x1)
    i2 = _grid_index(grid, arm_data.x2)
    # Y1 membership runs over [start, i2]; a same-time relapse and exit
    # still puts the subject in Y1 at that instant.
    start = i1 + (i1 < i2)
    stop = i2 + 1

    every = np.ones(i1.size, dtype=bool)
    # (grid index, subject mask, output block, sign)
    specs = [
        (i1, d1, 0, 1.0),
        (i2, ~d1 & d2, 1, 1.0),
        (i2, d1 & d2, 2, 1.0),
        (i1, every, 3, 1.0),
        (start, d1, 4, 1.0),
        (stop, d1, 4, -1.0),
    ]
    width = n_grid + 1
    if weights is None:
        stacked = np.zeros(5 * width, dtype=np.int64)
        for index, mask, block, sign in specs:
            stacked += int(sign) * np.bincount(index[mask] + block * width, minlength=5 * width)
    else:
        weights = np.asarray(weights, dtype=float)
        indicator = sparse.csr_matrix(
            (
                np.concatenate([np.full(int(mask.sum()), sign) for _, mask, _, sign in specs]),
                (
                    np.concatenate([np.flatnonzero(mask) for _, mask, _, _ in specs]),
                    np.concatenate([index[mask] + block * width for index, mask, block, _ in specs]),
                ),
            ),
            shape=(i1.size, 5 * width),
        )
        stacked = np.asarray(weights @ indicator)
    blocks = [stacked[..., k * width: (k + 1) * width] for k in range(5)]

    dN_star, dN_0, dN_1, exit_at = (blk[..., :n_grid] for blk in blocks[:4])
    y1_diff = blocks[4]
    Y_0 = np.cumsum(exit_at[..., ::-1], axis=-1)[..., ::-1]
    Y_1 = np.cumsum(y1_diff, axis=-1)[..., :n_grid]
    return dN_star, dN_0, dN_1, Y_0, Y_1


def build_panel(records, arm, grid=None) -> RiskSetPanel:
    """Aggregate one arm's records into a :class:`RiskSetPanel`.

    ``grid`` defaults to the arm's own observed times; pass a pooled grid
    (see :func:`pooled_grid`) to put both arms on common support.
    """
    data = as_arrays(records).arm(arm)
    if len(data) == 0:
        raise ValueError(f"arm z={arm} has no subjects")
    grid = pooled_grid(data) if grid is None else np.asarray(grid, dtype=float)
    arrays = panel_counts(data, grid)
    for a in arrays:
        a.flags.writeable = False
    grid = grid.copy()
    grid.flags.writeable = False
    return RiskSetPanel(arm, grid, *arrays, m_arm=len(data))


def build_panels(records):
    """Both arms' panels on the pooled grid."""
    grid = pooled_grid(records)
    return {arm: build_panel(records, arm, grid) for arm in (0, 1)}
