"""Fixed-length numeric encodings of peptide sequences.

Five encoders are provided: sparse one-hot, amino-acid composition (AAC),
Chou's pseudo amino-acid composition (PseAAC), mean physicochemical
properties, and the magnitude spectrum of a property-mapped series. All use
the alphabetical residue order ACDEFGHIKLMNPQRSTVWY for their columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .sequence_io import AMINO_ACIDS, Dataset

AA_INDEX = {aa: i for i, aa in enumerate(AMINO_ACIDS)}
ENCODER_ORDER = ("sparse", "aac", "pseaac", "physchem", "fourier")


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class PropertyTable:
    id: str
    values: dict

    def __post_init__(self):
        if set(self.values) != set(AMINO_ACIDS):
            raise EncodingError(f"table {self.id!r} must cover exactly the 20 canonical residues")
        if not all(math.isfinite(v) for v in self.values.values()):
            raise EncodingError(f"table {self.id!r} has non-finite values")

    def as_array(self) -> np.ndarray:
        return np.array([self.values[aa] for aa in AMINO_ACIDS], dtype=float)


def load_property_table(text: str) -> PropertyTable:
    """Read a table: an id line followed by 20 ``<residue>\\t<value>`` lines."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EncodingError("property table is empty")
    table_id = lines[0]
    values = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise EncodingError(f"line {lineno}: expected '<residue>\\t<value>', got {line!r}")
        aa, raw = parts[0].strip().upper(), parts[1].strip()
        if aa not in AA_INDEX:
            raise EncodingError(f"line {lineno}: unknown residue {aa!r}")
        if aa in values:
            raise EncodingError(f"line {lineno}: duplicate residue {aa!r}")
        try:
            values[aa] = float(raw)
        except ValueError:
            raise EncodingError(f"line {lineno}: value {raw!r} is not numeric") from None
    missing = [aa for aa in AMINO_ACIDS if aa not in values]
    if missing:
        raise EncodingError(f"table {table_id!r} is missing residue(s): {', '.join(missing)}")
    return PropertyTable(table_id, values)


def bundled_table(name: str) -> PropertyTable:
    path = resources.files("ampgan.data.tables").joinpath(f"{name}.tsv")
    return load_property_table(path.read_text(encoding="utf-8"))


def bundled_table_names() -> list[str]:
    root = resources.files("ampgan.data.tables")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".tsv"))


def default_table_sets() -> dict:
    text = resources.files("ampgan.data.tables").joinpath("sets.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


@dataclass(frozen=True)
class SparseConfig:
    max_len: int = 100

    def __post_init__(self):
        if self.max_len < 1:
            raise EncodingError("max_len must be >= 1")


@dataclass(frozen=True)
class PseAacConfig:
    lam: int = 5
    weight: float = 0.05
    properties: tuple = field(default_factory=lambda: tuple(
        bundled_table(n) for n in default_table_sets()["pseaac"]))

    def __post_init__(self):
        if self.lam < 0:
            raise EncodingError("lambda must be >= 0")
        if not self.weight > 0:
            raise EncodingError("weight must be > 0")
        if self.lam > 0 and not self.properties:
            raise EncodingError("at least one property table is required when lambda > 0")


@dataclass(frozen=True)
class FourierConfig:
    table: PropertyTable = field(default_factory=lambda: bundled_table(default_table_sets()["fourier"]))
    n_fft: int = 128
    normalize_by_length: bool = True

    def __post_init__(self):
        n = self.n_fft
        if n < 2 or n & (n - 1):
            raise EncodingError(f"n_fft must be a power of two >= 2, got {n}")


@dataclass(frozen=True)
class EncoderConfigs:
    sparse: SparseConfig = field(default_factory=SparseConfig)
    pseaac: PseAacConfig = field(default_factory=PseAacConfig)
    physchem: tuple = field(default_factory=lambda: tuple(
        bundled_table(n) for n in default_table_sets()["physchem"]))
    fourier: FourierConfig = field(default_factory=FourierConfig)

    def width(self, name: str) -> int:
        if name == "sparse":
            return 20 * self.sparse.max_len
        if name == "aac":
            return 20
        if name == "pseaac":
            return 20 + self.pseaac.lam
        if name == "physchem":
            return len(self.physchem)
        if name == "fourier":
            return self.fourier.n_fft // 2 + 1
        raise EncodingError(f"unknown encoder {name!r}")


def _indices(seq: str) -> np.ndarray:
    return np.fromiter((AA_INDEX[c] for c in seq), dtype=np.intp, count=len(seq))


def encode_sparse(seq: str, cfg: SparseConfig = SparseConfig()) -> np.ndarray:
    out = np.zeros(20 * cfg.max_len)
    idx = _indices(seq[: cfg.max_len])
    out[20 * np.arange(len(idx)) + idx] = 1.0
    return out


def encode_aac(seq: str) -> np.ndarray:
    return np.bincount(_indices(seq), minlength=20) / len(seq)


def encode_pseaac(seq: str, cfg: PseAacConfig) -> np.ndarray:
    """Chou's pseudo amino-acid composition, length ``20 + lam``.

    Each property is standardized over the 20 residues; the correlation of
    tier ``j`` is the mean, over residue pairs ``j`` apart, of the
    property-averaged squared difference.
    """
    lam, w = cfg.lam, cfg.weight
    if len(seq) <= lam:
        raise EncodingError(f"sequence length {len(seq)} must exceed lambda {lam}")
    freqs = encode_aac(seq)
    if lam == 0:
        return freqs

    props = np.array([t.as_array() for t in cfg.properties])
    props = (props - props.mean(axis=1, keepdims=True)) / props.std(axis=1, keepdims=True)
    series = props[:, _indices(seq)]
    theta = np.array([np.mean((series[:, : -j] - series[:, j:]) ** 2) for j in range(1, lam + 1)])
    denom = 1.0 + w * theta.sum()
    return np.concatenate([freqs / denom, w * theta / denom])


def encode_physicochemical(seq: str, tables) -> np.ndarray:
    if not tables:
        raise EncodingError("at least one property table is required")
    idx = _indices(seq)
    return np.array([t.as_array()[idx].mean() for t in tables])


def property_series(seq: str, table: PropertyTable) -> np.ndarray:
    return table.as_array()[_indices(seq)]


def padded_dft(series: np.ndarray, n_fft: int) -> np.ndarray:
    """Full two-sided DFT of ``series`` zero-padded to ``n_fft`` points."""
    if len(series) > n_fft:
        raise EncodingError(f"series length {len(series)} exceeds n_fft={n_fft}")
    return np.fft.fft(series, n=n_fft)


def encode_fourier(seq: str, cfg: FourierConfig | None = None) -> np.ndarray:
    """Magnitudes of bins ``0..n_fft/2`` of the zero-padded DFT."""
    cfg = cfg or FourierConfig()
    if len(seq) > cfg.n_fft:
        raise EncodingError(f"sequence length {len(seq)} exceeds n_fft={cfg.n_fft}; choose a larger n_fft")
    spectrum = np.abs(padded_dft(property_series(seq, cfg.table), cfg.n_fft)[: cfg.n_fft // 2 + 1])
    if cfg.normalize_by_length:
        spectrum /= len(seq)
    return spectrum


@dataclass(frozen=True)
class Block:
    name: str
    offset: int
    width: int


@dataclass(frozen=True)
class BlockSchema:
    blocks: tuple

    @property
    def width(self) -> int:
        return sum(b.width for b in self.blocks)

    def column_names(self) -> list[str]:
        return [f"{b.name}_{i}" for b in self.blocks for i in range(b.width)]

    def slice(self, name: str) -> slice:
        for b in self.blocks:
            if b.name == name:
                return slice(b.offset, b.offset + b.width)
        raise KeyError(name)

    @classmethod
    def from_column_names(cls, names) -> "BlockSchema":
        blocks: list[Block] = []
        for col, name in enumerate(names):
            block, _, _ = name.rpartition("_")
            if blocks and blocks[-1].name == block:
                last = blocks[-1]
                blocks[-1] = Block(last.name, last.offset, last.width + 1)
            else:
                blocks.append(Block(block, col, 1))
        return cls(tuple(blocks))


@dataclass
class FeatureMatrix:
    rows: np.ndarray
    schema: BlockSchema
    row_ids: list
    labels: np.ndarray

    def __post_init__(self):
        if self.rows.shape != (len(self.row_ids), self.schema.width):
            raise EncodingError("matrix shape does not match ids and schema")
        if len(self.labels) != len(self.row_ids):
            raise EncodingError("labels are not aligned with rows")

    def to_csv(self, extra: dict | None = None) -> str:
        """CSV with header ``id,label,<block>_<index>,...``.

        ``extra`` maps column name to a per-row list of strings appended at
        the end of each line.
        """
        extra = extra or {}
        header = ["id", "label", *self.schema.column_names(), *extra]
        lines = [",".join(header)]
        for i, rid in enumerate(self.row_ids):
            cells = [rid, str(int(self.labels[i]))]
            cells.extend(repr(float(v)) for v in self.rows[i])
            cells.extend(str(col[i]) for col in extra.values())
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def read_feature_csv(text: str):
    """Inverse of :meth:`FeatureMatrix.to_csv`.

    Returns the matrix and a dict of any trailing non-feature columns
    (e.g. ``provenance``).
    """
    lines = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[:2] != ["id", "label"]:
        raise EncodingError("feature CSV must start with columns id,label")
    extra_names = [h for h in header[2:] if not h.rpartition("_")[2].isdigit()]
    n_feat = len(header) - 2 - len(extra_names)
    ids, labels, data = [], [], []
    extra = {name: [] for name in extra_names}
    for line in lines[1:]:
        cells = line.split(",")
        ids.append(cells[0])
        labels.append(int(cells[1]))
        data.append([float(c) for c in cells[2: 2 + n_feat]])
        for name, value in zip(extra_names, cells[2 + n_feat:]):
            extra[name].append(value)
    schema = BlockSchema.from_column_names(header[2: 2 + n_feat])
    rows = np.array(data, dtype=float).reshape(len(ids), n_feat)
    return FeatureMatrix(rows, schema, ids, np.array(labels, dtype=int)), extra


def encode_sequence(seq: str, name: str, configs: EncoderConfigs) -> np.ndarray:
    if name == "sparse":
        return encode_sparse(seq, configs.sparse)
    if name == "aac":
        return encode_aac(seq)
    if name == "pseaac":
        return encode_pseaac(seq, configs.pseaac)
    if name == "physchem":
        return encode_physicochemical(seq, configs.physchem)
    if name == "fourier":
        return encode_fourier(seq, configs.fourier)
    raise EncodingError(f"unknown encoder {name!r}")


def encode_dataset(ds: Dataset, configs: EncoderConfigs = None, enabled=ENCODER_ORDER) -> FeatureMatrix:
    """Concatenate the enabled encodings, blocks in the fixed encoder order."""
    configs = configs or EncoderConfigs()
    enabled = set(enabled)
    unknown = enabled - set(ENCODER_ORDER)
    if unknown:
        raise EncodingError(f"unknown encoder(s): {sorted(unknown)}")
    if not enabled:
        raise EncodingError("at least one encoder must be enabled")
    names = [n for n in ENCODER_ORDER if n in enabled]

    blocks, offset = [], 0
    for n in names:
        w = configs.width(n)
        blocks.append(Block(n, offset, w))
        offset += w
    schema = BlockSchema(tuple(blocks))

    rows = np.zeros((len(ds.records), offset))
    for i, rec in enumerate(ds.records):
        for b in blocks:
            try:
                rows[i, b.offset: b.offset + b.width] = encode_sequence(rec.sequence, b.name, configs)
            except EncodingError as exc:
                raise EncodingError(f"record {rec.id!r}: {exc}") from None
    return FeatureMatrix(rows, schema, [r.id for r in ds.records],
                         np.array([r.label for r in ds.records], dtype=int))
