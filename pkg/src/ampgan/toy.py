"""Seeded synthetic peptide corpus used for offline runs and tests.

Active peptides are drawn from a cationic, amphipathic residue profile with
occasional helical motifs; inactive ones from a generic background profile.
Each class leaks some of the other's profile so the task is learnable but
not trivial. Regenerate the bundled files with ``python -m ampgan.toy``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .sequence_io import AMINO_ACIDS, PeptideRecord, records_to_csv, records_to_fasta

# relative weights in ACDEFGHIKLMNPQRSTVWY order
_ACTIVE = np.array([6, 2, 1, 1, 5, 6, 2, 7, 14, 11, 2, 2, 2, 1, 10, 3, 2, 5, 6, 2], dtype=float)
_BACKGROUND = np.array([8, 2, 6, 7, 4, 7, 2, 5, 6, 9, 2, 4, 5, 4, 5, 7, 5, 7, 1, 3], dtype=float)
_MOTIFS = ("KWKLFKK", "RRWWRR", "GLLKKL", "KKLLKK", "FLPIIA")

TOY_FILES = {"toy_balanced": "toy_balanced.fasta", "toy_imbalanced": "toy_imbalanced.csv"}


def _sequence(rng, active: bool) -> str:
    own, other = (_ACTIVE, _BACKGROUND) if active else (_BACKGROUND, _ACTIVE)
    mix = 0.8 if active else 0.9
    profile = mix * own / own.sum() + (1 - mix) * other / other.sum()
    length = int(rng.integers(10, 41))
    seq = "".join(rng.choice(list(AMINO_ACIDS), size=length, p=profile))
    if rng.random() < (0.6 if active else 0.1):
        motif = _MOTIFS[rng.integers(len(_MOTIFS))]
        at = int(rng.integers(0, max(1, length - len(motif))))
        seq = (seq[:at] + motif + seq[at + len(motif):])[:length]
    return seq


def make_records(n_pos: int, n_neg: int, seed: int, prefix: str) -> list[PeptideRecord]:
    rng = np.random.default_rng(seed)
    labels = np.array([1] * n_pos + [0] * n_neg)
    rng.shuffle(labels)
    return [PeptideRecord(f"{prefix}{i:04d}", _sequence(rng, bool(lab)), int(lab))
            for i, lab in enumerate(labels)]


def make_toy_corpus(seed: int = 2024) -> dict:
    return {
        "toy_balanced": make_records(100, 100, seed, "bal"),
        "toy_imbalanced": make_records(67, 133, seed + 1, "imb"),
    }


def toy_path(name: str) -> Path:
    return Path(str(resources.files("ampgan.data.toy").joinpath(TOY_FILES[name])))


def write_toy_corpus(directory, seed: int = 2024) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, records in make_toy_corpus(seed).items():
        path = directory / TOY_FILES[name]
        text = records_to_csv(records) if path.suffix == ".csv" else records_to_fasta(records)
        path.write_text(text, encoding="utf-8")
        paths[name] = path
    return paths


if __name__ == "__main__":
    for name, path in write_toy_corpus(Path(__file__).parent / "data" / "toy").items():
        print(name, path)
