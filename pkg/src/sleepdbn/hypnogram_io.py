"""Reading, writing and validating epoch-level hypnogram files.

A hypnogram file is delimited text with the header
``subject_id,health_status,epoch_index,stage`` and one scored epoch per row.
An optional ``epoch_seconds`` column overrides the default 30 s epoch.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

STAGES = ("W", "N1", "N2", "N3", "R")
HEALTH_STATUSES = ("H", "CFS", "CFSFM")
STAGE_INDEX = {s: i for i, s in enumerate(STAGES)}
HS_INDEX = {h: i for i, h in enumerate(HEALTH_STATUSES)}

# Legacy R&K scoring: S3 and S4 both fold into N3. Movement time is rejected.
NUMERIC_STAGES = {0: "W", 1: "N1", 2: "N2", 3: "N3", 4: "N3", 5: "R"}

HS_ALIASES = {"CFS+FM": "CFSFM", "CFS_FM": "CFSFM"}


class CohortParseError(ValueError):
    pass


class CohortIntegrityError(ValueError):
    pass


@dataclass
class SubjectRecord:
    subject_id: str
    health_status: str
    stages: list[str]
    epoch_seconds: int = 30

    def __post_init__(self):
        if self.health_status not in HS_INDEX:
            raise CohortIntegrityError(
                f"subject {self.subject_id!r}: unknown health status {self.health_status!r}"
            )
        if self.epoch_seconds <= 0:
            raise CohortIntegrityError(f"subject {self.subject_id!r}: epoch_seconds must be > 0")
        if not self.stages:
            raise CohortIntegrityError(f"subject {self.subject_id!r}: no epochs")
        bad = set(self.stages) - set(STAGES)
        if bad:
            raise CohortIntegrityError(f"subject {self.subject_id!r}: unknown stages {sorted(bad)}")


@dataclass
class Cohort:
    subjects: list[SubjectRecord]
    provenance: str = ""

    def __post_init__(self):
        dup = [k for k, n in Counter(s.subject_id for s in self.subjects).items() if n > 1]
        if dup:
            raise CohortIntegrityError(f"duplicate subject_id(s): {dup}")

    def __len__(self):
        return len(self.subjects)

    def __iter__(self):
        return iter(self.subjects)

    def group_counts(self) -> dict[str, int]:
        counts = Counter(s.health_status for s in self.subjects)
        return {h: counts.get(h, 0) for h in HEALTH_STATUSES}

    def subset(self, subject_ids) -> "Cohort":
        keep = set(subject_ids)
        return Cohort([s for s in self.subjects if s.subject_id in keep], self.provenance)


def normalize_health_status(value: str) -> str:
    v = value.strip().upper()
    return HS_ALIASES.get(v, v)


def decode_stage(value: str, stage_format: str) -> str:
    """Map one stage cell to the five-stage alphabet, or raise ``KeyError``."""
    value = value.strip()
    if stage_format == "token":
        if value.upper() not in STAGE_INDEX:
            raise KeyError(value)
        return value.upper()
    if stage_format == "numeric":
        try:
            code = int(value)
        except ValueError:
            raise KeyError(value) from None
        return NUMERIC_STAGES[code]
    raise ValueError(f"unknown stage format {stage_format!r}")


def read_metadata(path) -> dict[str, str]:
    """Read a ``subject_id,health_status`` sidecar file."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["subject_id"].strip()] = normalize_health_status(row["health_status"])
    return out


def parse_cohort(path, stage_format: str = "token", metadata=None, provenance: str | None = None) -> Cohort:
    """Parse an epoch-level hypnogram file into a :class:`Cohort`.

    Parameters
    ----------
    path : path-like
        Delimited text with columns ``subject_id, epoch_index, stage`` and,
        unless ``metadata`` is given, ``health_status``.
    stage_format : {"token", "numeric"}
        ``token`` accepts W/N1/N2/N3/R; ``numeric`` accepts the legacy
        codes 0-5 with 4 folded into N3.
    metadata : path-like or dict, optional
        Sidecar ``subject_id,health_status`` table overriding the column.

    Raises
    ------
    CohortParseError
        Unknown stage token or malformed epoch index, naming the file row.
    CohortIntegrityError
        Duplicate (subject, epoch_index) or missing health status.
    """
    path = Path(path)
    if metadata is not None and not isinstance(metadata, dict):
        metadata = read_metadata(metadata)

    epochs: dict[str, dict[int, str]] = {}
    status: dict[str, str] = {}
    epoch_seconds: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            sid = (row.get("subject_id") or "").strip()
            if not sid:
                raise CohortParseError(f"{path}:{lineno}: missing subject_id")
            try:
                stage = decode_stage(row["stage"], stage_format)
            except KeyError as exc:
                raise CohortParseError(f"{path}:{lineno}: unknown stage {exc.args[0]!r}") from None
            try:
                idx = int(row["epoch_index"])
            except (KeyError, ValueError, TypeError):
                raise CohortParseError(f"{path}:{lineno}: bad epoch_index") from None
            per = epochs.setdefault(sid, {})
            if idx in per:
                raise CohortIntegrityError(f"{path}:{lineno}: duplicate epoch {idx} for subject {sid!r}")
            per[idx] = stage
            hs = (row.get("health_status") or "").strip()
            if hs:
                status.setdefault(sid, normalize_health_status(hs))
            es = (row.get("epoch_seconds") or "").strip()
            if es:
                epoch_seconds.setdefault(sid, int(es))

    subjects = []
    for sid, per in epochs.items():
        hs = metadata.get(sid) if metadata is not None else status.get(sid)
        if not hs:
            raise CohortIntegrityError(f"{path}: missing health_status for subject {sid!r}")
        stages = [per[i] for i in sorted(per)]
        subjects.append(SubjectRecord(sid, hs, stages, epoch_seconds.get(sid, 30)))
    return Cohort(subjects, provenance if provenance is not None else str(path))


def write_cohort(cohort: Cohort, path, stage_format: str = "token") -> None:
    """Write a cohort in the hypnogram file format (inverse of :func:`parse_cohort`)."""
    inverse = {"W": 0, "N1": 1, "N2": 2, "N3": 3, "R": 5}
    with_seconds = any(s.epoch_seconds != 30 for s in cohort)
    header = ["subject_id", "health_status", "epoch_index", "stage"]
    if with_seconds:
        header.append("epoch_seconds")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in cohort:
            for i, st in enumerate(s.stages):
                cell = st if stage_format == "token" else inverse[st]
                row = [s.subject_id, s.health_status, i, cell]
                if with_seconds:
                    row.append(s.epoch_seconds)
                w.writerow(row)


@dataclass
class ValidationReport:
    n_subjects: int
    epoch_counts: dict[str, int] = field(default_factory=dict)
    stage_counts: dict[str, int] = field(default_factory=dict)
    group_counts: dict[str, int] = field(default_factory=dict)
    no_sleep_onset: list[str] = field(default_factory=list)

    @property
    def missing_stages(self) -> list[str]:
        return [s for s in STAGES if self.stage_counts.get(s, 0) == 0]

    def lines(self) -> list[str]:
        out = [f"subjects: {self.n_subjects}"]
        out.append("groups: " + ", ".join(f"{h}={n}" for h, n in self.group_counts.items()))
        out.append("stages: " + ", ".join(f"{s}={self.stage_counts.get(s, 0)}" for s in STAGES))
        for sid in self.no_sleep_onset:
            out.append(f"flag: {sid}: no sleep onset")
        return out


def validate_cohort(cohort: Cohort) -> ValidationReport:
    stage_counts = Counter()
    report = ValidationReport(n_subjects=len(cohort), group_counts=cohort.group_counts())
    for s in cohort:
        report.epoch_counts[s.subject_id] = len(s.stages)
        stage_counts.update(s.stages)
        if all(st == "W" for st in s.stages):
            report.no_sleep_onset.append(s.subject_id)
    report.stage_counts = {st: stage_counts.get(st, 0) for st in STAGES}
    return report
