"""Attempt data: ingestion, indexed datasets, grouping transforms, fold splits.

File formats
------------
Attempt file: UTF-8 CSV with header
    competition_id,year,round,climber,problem_key,hold_type,outcome
where round is one of Q/S/F, hold_type is top/zone, outcome is 0/1.
Reaching the top hold and reaching the zone hold of the same physical
problem are two separate columns of the outcome matrix, so hold_type is
part of a problem's identity.

Heights file: UTF-8 CSV with header ``climber,height_cm``; the height field
may be empty when unknown.
"""

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

import numpy as np

# Reserved group labels. Climbers below the replacement level share the
# REPLACEMENT row; problems attempted by too few climbers share the
# RARE_PROBLEM column.
REPLACEMENT = "REPLACEMENT"
RARE_PROBLEM = "RARE_PROBLEM"

ATTEMPT_HEADER = ["competition_id", "year", "round", "climber", "problem_key", "hold_type", "outcome"]
HEIGHTS_HEADER = ["climber", "height_cm"]


class IngestError(ValueError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Round(Enum):
    QUALIFIER = "Q"
    SEMIFINAL = "S"
    FINAL = "F"

    @property
    def code(self) -> str:
        return self.value

    @classmethod
    def from_code(cls, code: str) -> "Round":
        try:
            return cls(code)
        except ValueError:
            raise ValueError(f"unknown round {code!r}, expected one of Q/S/F") from None


class HoldType(Enum):
    TOP = "top"
    ZONE = "zone"

    @property
    def code(self) -> str:
        return self.value

    @classmethod
    def from_code(cls, code: str) -> "HoldType":
        try:
            return cls(code)
        except ValueError:
            raise ValueError(f"unknown hold_type {code!r}, expected top or zone") from None


@dataclass(frozen=True)
class AttemptRecord:
    """One climber's binary outcome on one (problem, hold) column."""

    competition_id: str
    year: int
    round: Round
    climber: str
    problem_key: str
    hold_type: HoldType
    outcome: int

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.outcome!r}")

    @property
    def problem(self) -> tuple:
        """Raw identity of the problem column this attempt belongs to."""
        return (self.competition_id, self.round, self.problem_key, self.hold_type)


@dataclass(frozen=True)
class ClimberMeta:
    climber: str
    height_cm: Optional[float] = None

    def __post_init__(self):
        if self.height_cm is not None and not (100.0 < self.height_cm < 250.0):
            raise ValueError(f"height_cm {self.height_cm} outside plausible range (100, 250)")


def problem_label(competition_id: str, round: Round, problem_key: str, hold_type: HoldType) -> str:
    """Identity group label for one problem column."""
    return f"{competition_id}/{round.code}/{problem_key}/{hold_type.code}"


@dataclass(frozen=True)
class Dataset:
    """Immutable indexed collection of attempts.

    climber_groups / problem_groups send raw names / raw problem tuples to
    group labels; climber_index / problem_index assign each group label a
    dense row / column index in first-appearance order.
    """

    attempts: tuple
    climber_groups: Mapping[str, str]
    problem_groups: Mapping[tuple, str]
    climber_index: Mapping[str, int]
    problem_index: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "attempts", tuple(self.attempts))
        object.__setattr__(self, "climber_groups", MappingProxyType(dict(self.climber_groups)))
        object.__setattr__(self, "problem_groups", MappingProxyType(dict(self.problem_groups)))
        object.__setattr__(self, "climber_index", MappingProxyType(dict(self.climber_index)))
        object.__setattr__(self, "problem_index", MappingProxyType(dict(self.problem_index)))
        if sorted(self.climber_index.values()) != list(range(len(self.climber_index))):
            raise ValueError("climber_index is not dense")
        if sorted(self.problem_index.values()) != list(range(len(self.problem_index))):
            raise ValueError("problem_index is not dense")
        for a in self.attempts:
            if self.climber_groups.get(a.climber) not in self.climber_index:
                raise ValueError(f"climber {a.climber!r} does not resolve to an indexed group")
            if self.problem_groups.get(a.problem) not in self.problem_index:
                raise ValueError(f"problem {a.problem!r} does not resolve to an indexed group")

    @property
    def m(self) -> int:
        return len(self.climber_index)

    @property
    def n(self) -> int:
        return len(self.problem_index)

    @classmethod
    def from_attempts(cls, attempts: Iterable[AttemptRecord]) -> "Dataset":
        """Build a dataset with identity grouping, indices in first-appearance order."""
        attempts = tuple(attempts)
        climber_groups = {}
        problem_groups = {}
        climber_index = {}
        problem_index = {}
        for a in attempts:
            if a.climber not in climber_groups:
                climber_groups[a.climber] = a.climber
                climber_index[a.climber] = len(climber_index)
            if a.problem not in problem_groups:
                label = problem_label(*a.problem)
                problem_groups[a.problem] = label
                if label not in problem_index:
                    problem_index[label] = len(problem_index)
        return cls(attempts, climber_groups, problem_groups, climber_index, problem_index)

    def climber_rows(self) -> np.ndarray:
        """Row index of each attempt, in attempt order."""
        return np.array(
            [self.climber_index[self.climber_groups[a.climber]] for a in self.attempts],
            dtype=np.intp,
        )

    def problem_cols(self) -> np.ndarray:
        """Column index of each attempt, in attempt order."""
        return np.array(
            [self.problem_index[self.problem_groups[a.problem]] for a in self.attempts],
            dtype=np.intp,
        )

    def outcomes(self) -> np.ndarray:
        return np.array([a.outcome for a in self.attempts], dtype=np.float64)


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignments: tuple
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(int(x) for x in self.assignments))
        sizes = Counter(self.assignments)
        if set(sizes) - set(range(self.k)):
            raise ValueError("fold labels outside 0..k-1")
        if sizes and max(sizes.values()) - min(sizes.values()) > 1:
            raise ValueError("fold sizes differ by more than 1")


def _parse_row(fields: list, line: int) -> AttemptRecord:
    comp, year_s, round_s, climber, key, hold_s, outcome_s = fields
    try:
        year = int(year_s)
    except ValueError:
        raise IngestError(f"column 'year': {year_s!r} is not an integer", line) from None
    try:
        rnd = Round.from_code(round_s)
    except ValueError as e:
        raise IngestError(f"column 'round': {e}", line) from None
    try:
        hold = HoldType.from_code(hold_s)
    except ValueError as e:
        raise IngestError(f"column 'hold_type': {e}", line) from None
    if outcome_s not in ("0", "1"):
        raise IngestError(f"column 'outcome': {outcome_s!r} is not 0 or 1", line)
    if not climber:
        raise IngestError("column 'climber': empty name", line)
    return AttemptRecord(comp, year, rnd, climber, key, hold, int(outcome_s))


def ingest_attempts(path) -> Dataset:
    """Read an attempt CSV into a Dataset with identity grouping.

    Raises IngestError naming the offending line for malformed rows and for
    duplicate (competition, round, problem_key, hold_type, climber) keys.
    """
    attempts = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file, expected header row", 1) from None
        if [h.strip() for h in header] != ATTEMPT_HEADER:
            raise IngestError(f"bad header {header!r}, expected {','.join(ATTEMPT_HEADER)}", 1)
        for fields in reader:
            line = reader.line_num
            if not fields:
                continue
            if len(fields) != len(ATTEMPT_HEADER):
                raise IngestError(f"expected {len(ATTEMPT_HEADER)} columns, got {len(fields)}", line)
            rec = _parse_row(fields, line)
            key = (rec.competition_id, rec.round, rec.problem_key, rec.hold_type, rec.climber)
            if key in seen:
                raise IngestError(f"duplicate attempt key {key!r}", line)
            seen.add(key)
            attempts.append(rec)
    return Dataset.from_attempts(attempts)


def ingest_heights(path) -> list:
    """Read a heights CSV. Missing heights are allowed and stay None."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file, expected header row", 1) from None
        if [h.strip() for h in header] != HEIGHTS_HEADER:
            raise IngestError(f"bad header {header!r}, expected {','.join(HEIGHTS_HEADER)}", 1)
        for fields in reader:
            line = reader.line_num
            if not fields:
                continue
            if len(fields) != 2:
                raise IngestError(f"expected 2 columns, got {len(fields)}", line)
            name, height_s = fields
            if not name:
                raise IngestError("column 'climber': empty name", line)
            height = None
            if height_s.strip():
                try:
                    height = float(height_s)
                except ValueError:
                    raise IngestError(f"column 'height_cm': {height_s!r} is not a number", line) from None
            try:
                out.append(ClimberMeta(name, height))
            except ValueError as e:
                raise IngestError(str(e), line) from None
    return out


def write_attempts_csv(path, attempts: Iterable[AttemptRecord]) -> None:
    """Write attempts in the standard attempt-file format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ATTEMPT_HEADER)
        for a in attempts:
            writer.writerow(
                [a.competition_id, a.year, a.round.code, a.climber, a.problem_key, a.hold_type.code, a.outcome]
            )


def climber_attempt_counts(d: Dataset) -> Counter:
    """Attempts per raw climber name."""
    return Counter(a.climber for a in d.attempts)


def problem_climber_counts(d: Dataset) -> dict:
    """Distinct raw climbers per raw problem."""
    seen = {}
    for a in d.attempts:
        seen.setdefault(a.problem, set()).add(a.climber)
    return {p: len(names) for p, names in seen.items()}


def _rebuild(d: Dataset, climber_groups: Mapping[str, str], problem_groups: Mapping[tuple, str]) -> Dataset:
    """New dataset with the given group maps; indices in first-appearance order."""
    climber_index = {}
    problem_index = {}
    for a in d.attempts:
        cg = climber_groups[a.climber]
        if cg not in climber_index:
            climber_index[cg] = len(climber_index)
        pg = problem_groups[a.problem]
        if pg not in problem_index:
            problem_index[pg] = len(problem_index)
    return Dataset(d.attempts, climber_groups, problem_groups, climber_index, problem_index)


def apply_replacement_level(d: Dataset, N: int) -> Dataset:
    """Merge climbers with fewer than N attempts in d into the REPLACEMENT group.

    Counts are over raw climber names, so the transform is a projection:
    applying it twice with the same N equals applying it once. N=0 is the
    identity.
    """
    if N < 0:
        raise ValueError(f"replacement level must be >= 0, got {N}")
    counts = climber_attempt_counts(d)
    groups = {name: (REPLACEMENT if counts[name] < N else name) for name in d.climber_groups}
    return _rebuild(d, groups, d.problem_groups)


def apply_problem_grouping(d: Dataset, min_climbers: int) -> Dataset:
    """Merge problems attempted by fewer than min_climbers distinct climbers
    into the RARE_PROBLEM column."""
    if min_climbers < 0:
        raise ValueError(f"min_climbers must be >= 0, got {min_climbers}")
    counts = problem_climber_counts(d)
    groups = {
        p: (RARE_PROBLEM if counts[p] < min_climbers else problem_label(*p))
        for p in d.problem_groups
    }
    return _rebuild(d, d.climber_groups, groups)


def with_reserved_groups(d: Dataset, add_replacement: bool = False, add_rare_problem: bool = False) -> Dataset:
    """Append empty REPLACEMENT / RARE_PROBLEM groups to the index when absent.

    Models trained on the result always carry a fallback row/column, so
    prediction on entities unseen in training can never fail to resolve.
    The extra groups have no attempts and therefore receive no gradient.
    """
    climber_index = dict(d.climber_index)
    problem_index = dict(d.problem_index)
    if add_replacement and REPLACEMENT not in climber_index:
        climber_index[REPLACEMENT] = len(climber_index)
    if add_rare_problem and RARE_PROBLEM not in problem_index:
        problem_index[RARE_PROBLEM] = len(problem_index)
    return replace(d, climber_index=climber_index, problem_index=problem_index)


def split_folds(d: Dataset, k: int, seed: int) -> FoldSplit:
    """Assign each attempt to one of k folds, uniformly at random.

    Deterministic for fixed (d, k, seed); fold sizes differ by at most 1.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    n = len(d.attempts)
    if k > n:
        raise ValueError(f"k={k} exceeds the number of attempts ({n})")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.intp)
    labels[perm] = np.arange(n) % k
    return FoldSplit(k=k, assignments=tuple(int(x) for x in labels), seed=seed)
