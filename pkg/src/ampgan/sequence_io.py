"""Parsing, validation and registration of labeled peptide datasets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
_CANONICAL = frozenset(AMINO_ACIDS)

log = logging.getLogger(__name__)


class SequenceError(ValueError):
    """Raised for malformed files and invalid residues or labels."""


@dataclass(frozen=True)
class PeptideRecord:
    id: str
    sequence: str
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise SequenceError(f"{self.id}: label must be 0 or 1, got {self.label!r}")
        if not self.sequence or any(c not in _CANONICAL for c in self.sequence):
            raise SequenceError(f"{self.id}: sequence is not canonical: {self.sequence!r}")


@dataclass
class Dataset:
    name: str
    records: list[PeptideRecord]
    warnings: list[str] = field(default_factory=list)

    @property
    def n_pos(self) -> int:
        return sum(r.label for r in self.records)

    @property
    def n_neg(self) -> int:
        return len(self.records) - self.n_pos

    @property
    def labels(self) -> list[int]:
        return [r.label for r in self.records]

    def __len__(self):
        return len(self.records)


# Published benchmark sizes (total, positive, negative), verbatim. Three
# names appear twice with different sizes; both rows are kept.
BENCHMARK_ROWS = [
    ("acp_mlacp", 585, 398, 187),
    ("aip_antiinfam", 2124, 1261, 863),
    ("amp_antibp2", 1993, 994, 999),
    ("cpp_mlcpp", 492, 246, 246),
    ("hem_hemopi", 1478, 739, 739),
    ("isp_il10pred", 1903, 1165, 738),
    ("pip_pipel", 1104, 582, 522),
    ("acp_mlacp", 1242, 848, 394),
    ("aip_antiinfam", 1750, 875, 875),
    ("amp_antibp2", 3228, 2395, 833),
]


class DatasetRegistry:
    """Expected (total, n_pos, n_neg) rows per dataset name.

    Unknown names are a soft miss: ``expected`` returns an empty list.
    """

    def __init__(self, rows=BENCHMARK_ROWS):
        self.entries: dict[str, list[tuple[int, int, int]]] = {}
        for name, total, pos, neg in rows:
            self.entries.setdefault(name, []).append((total, pos, neg))

    def expected(self, name: str) -> list[tuple[int, int, int]]:
        return list(self.entries.get(name, []))

    def __contains__(self, name):
        return name in self.entries


def validate_sequence(raw: str) -> str:
    """Uppercase ``raw`` and check it against the 20-letter alphabet.

    Raises SequenceError for empty input or the first illegal letter,
    reporting its 0-based index.
    """
    seq = raw.upper()
    if not seq:
        raise SequenceError("empty sequence")
    for i, c in enumerate(seq):
        if c not in _CANONICAL:
            raise SequenceError(f"illegal residue {c!r} at index {i} (position {i + 1})")
    return seq


def _make_record(rid: str, raw_seq: str, label: int) -> PeptideRecord:
    try:
        seq = validate_sequence(raw_seq)
    except SequenceError as exc:
        raise SequenceError(f"record {rid!r}: {exc}") from None
    return PeptideRecord(rid, seq, label)


def _check_unique(records: list[PeptideRecord]) -> None:
    seen = set()
    for r in records:
        if r.id in seen:
            raise SequenceError(f"duplicate record id {r.id!r}")
        seen.add(r.id)


def parse_fasta(text: str) -> list[PeptideRecord]:
    """Parse FASTA with ``>id|label`` headers; sequence lines may wrap."""
    entries: list[tuple[str, int, list[str], int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            header = line[1:].strip()
            rid, sep, label = header.rpartition("|")
            if not sep or not rid or label.strip() not in ("0", "1"):
                raise SequenceError(f"line {lineno}: header lacks a trailing |0 or |1 label: {line!r}")
            entries.append((rid.strip(), int(label), [], lineno))
        else:
            if not entries:
                raise SequenceError(f"line {lineno}: sequence data before the first header")
            entries[-1][2].append(line)

    records = []
    for rid, label, chunks, lineno in entries:
        if not chunks:
            raise SequenceError(f"line {lineno}: record {rid!r} has no sequence")
        records.append(_make_record(rid, "".join(chunks), label))
    _check_unique(records)
    return records


def parse_labeled_csv(text: str) -> list[PeptideRecord]:
    """Parse ``id,sequence,label`` CSV text (no quoting)."""
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise SequenceError("CSV is empty; expected header id,sequence,label")
    header = [h.strip() for h in lines[0].split(",")]
    missing = [c for c in ("id", "sequence", "label") if c not in header]
    if missing:
        raise SequenceError(f"CSV header is missing column(s): {', '.join(missing)}")
    col = {name: header.index(name) for name in ("id", "sequence", "label")}

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != len(header):
            raise SequenceError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        label = fields[col["label"]]
        if label not in ("0", "1"):
            raise SequenceError(f"line {lineno}: label must be 0 or 1, got {label!r}")
        records.append(_make_record(fields[col["id"]], fields[col["sequence"]], int(label)))
    _check_unique(records)
    return records


def records_to_csv(records: list[PeptideRecord]) -> str:
    return "id,sequence,label\n" + "".join(f"{r.id},{r.sequence},{r.label}\n" for r in records)


def records_to_fasta(records: list[PeptideRecord]) -> str:
    return "".join(f">{r.id}|{r.label}\n{r.sequence}\n" for r in records)


def load_dataset(name: str, path, registry: DatasetRegistry | None = None) -> Dataset:
    """Load a dataset file, choosing the parser by extension.

    ``.csv`` files go through :func:`parse_labeled_csv`, anything else is read
    as FASTA. When ``name`` is registered and none of its rows match the
    recomputed class counts, a warning is attached to the dataset.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        records = parse_labeled_csv(text)
    else:
        records = parse_fasta(text)
    ds = Dataset(name, records)

    if registry is not None and name in registry:
        counts = (len(ds), ds.n_pos, ds.n_neg)
        rows = registry.expected(name)
        if counts not in rows:
            msg = (f"{name}: counts (total={counts[0]}, pos={counts[1]}, neg={counts[2]}) "
                   f"match no registry row {rows}")
            ds.warnings.append(msg)
            log.warning(msg)
    return ds
