"""Basis sift, BSM post-selection and the per-setting tally table."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .bsm import RoundBatch, is_accepted_pattern
from .config import N_INTENSITIES, Basis, PulsePairOutcome

CSV_COLUMNS = ("k", "l", "basis", "sent", "accepted", "errors",
               "Q", "E", "sigma_Q", "sigma_E")
SENT, ACCEPTED, ERRORS = 0, 1, 2
_SHAPE = (N_INTENSITIES, N_INTENSITIES, 2, 3)


class TallyFormatError(ValueError):
    pass


def sift(outcome: PulsePairOutcome) -> tuple[bool, bool]:
    """Return ``(accepted, error)`` for one round.

    Bob flips his bit on every accepted event, so an error is a pair of equal
    raw bits.
    """
    accepted = outcome.basis_alice == outcome.basis_bob and is_accepted_pattern(outcome.clicks)
    error = accepted and outcome.bit_alice != 1 - outcome.bit_bob
    return accepted, error


@dataclass(frozen=True)
class TallyCell:
    sent: int
    accepted: int
    errors: int


@dataclass(frozen=True, eq=False)
class TallyTable:
    """Counts per (Alice intensity k, Bob intensity l, basis).

    Only rounds with matching bases enter a cell; basis-mismatched rounds are
    counted per (k, l) in ``mismatched`` so that all rounds are accounted for.
    """

    counts: np.ndarray  # int64, shape (4, 4, 2, 3): sent, accepted, errors
    mismatched: np.ndarray  # int64, shape (4, 4)

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64).reshape(_SHAPE)
        mismatched = np.array(self.mismatched, dtype=np.int64).reshape(_SHAPE[:2])
        counts.flags.writeable = False
        mismatched.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "mismatched", mismatched)

    @classmethod
    def empty(cls) -> TallyTable:
        return cls(np.zeros(_SHAPE, np.int64), np.zeros(_SHAPE[:2], np.int64))

    @property
    def total_rounds(self) -> int:
        return int(self.counts[..., SENT].sum() + self.mismatched.sum())

    def cell(self, k: int, l: int, basis: Basis) -> TallyCell:
        sent, accepted, errors = (int(x) for x in self.counts[k, l, int(basis)])
        return TallyCell(sent, accepted, errors)

    def merge(self, other: TallyTable) -> TallyTable:
        return TallyTable(self.counts + other.counts, self.mismatched + other.mismatched)

    def __add__(self, other: TallyTable) -> TallyTable:
        return self.merge(other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TallyTable):
            return NotImplemented
        return (np.array_equal(self.counts, other.counts)
                and np.array_equal(self.mismatched, other.mismatched))


def tally_batch(batch: RoundBatch) -> TallyTable:
    """Vectorized sift and accumulation of a simulated batch."""
    k = batch.intensity_index_alice.astype(np.int64)
    l = batch.intensity_index_bob.astype(np.int64)
    matched = batch.basis_alice == batch.basis_bob
    c = batch.clicks
    pattern = (c[:, 0] & ~c[:, 1] & ~c[:, 2] & c[:, 3]) | (~c[:, 0] & c[:, 1] & c[:, 2] & ~c[:, 3])
    accepted = matched & pattern
    errors = accepted & (batch.bit_alice == batch.bit_bob)

    n_cells = N_INTENSITIES * N_INTENSITIES * 2
    cell = (k * N_INTENSITIES + l) * 2 + batch.basis_alice.astype(np.int64)
    counts = np.zeros((n_cells, 3), np.int64)
    counts[:, SENT] = np.bincount(cell[matched], minlength=n_cells)
    counts[:, ACCEPTED] = np.bincount(cell[accepted], minlength=n_cells)
    counts[:, ERRORS] = np.bincount(cell[errors], minlength=n_cells)
    pair = k * N_INTENSITIES + l
    mismatched = np.bincount(pair[~matched], minlength=N_INTENSITIES ** 2)
    return TallyTable(counts.reshape(_SHAPE), mismatched.reshape(_SHAPE[:2]))


def accumulate(outcomes: Iterable[PulsePairOutcome | RoundBatch]) -> TallyTable:
    """Tally a stream of single outcomes and/or simulated batches."""
    counts = np.zeros(_SHAPE, np.int64)
    mismatched = np.zeros(_SHAPE[:2], np.int64)
    table = TallyTable.empty()
    for item in outcomes:
        if isinstance(item, RoundBatch):
            table = table.merge(tally_batch(item))
            continue
        k, l = item.intensity_index_alice, item.intensity_index_bob
        if item.basis_alice != item.basis_bob:
            mismatched[k, l] += 1
            continue
        accepted, error = sift(item)
        row = counts[k, l, int(item.basis_alice)]
        row[SENT] += 1
        row[ACCEPTED] += accepted
        row[ERRORS] += error
    return table.merge(TallyTable(counts, mismatched))


@dataclass(frozen=True)
class CellRates:
    """Gains and error rates, each shaped (4, 4, 2) = (k, l, basis).

    ``sigma_EQ`` is the binomial deviation of the error gain ``errors/sent``.
    ``empty`` marks cells with nothing sent (their numbers are NaN);
    ``no_accepted`` marks cells where E is set to 0 by convention.
    """

    Q: np.ndarray
    E: np.ndarray
    sigma_Q: np.ndarray
    sigma_E: np.ndarray
    sigma_EQ: np.ndarray
    empty: np.ndarray
    no_accepted: np.ndarray
    sent: np.ndarray


def rates(table: TallyTable) -> CellRates:
    sent = table.counts[..., SENT].astype(float)
    accepted = table.counts[..., ACCEPTED].astype(float)
    errors = table.counts[..., ERRORS].astype(float)
    empty = sent == 0
    no_accepted = ~empty & (accepted == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = np.where(empty, np.nan, accepted / sent)
        sigma_Q = np.sqrt(Q * (1.0 - Q) / sent)
        E = np.where(empty, np.nan, np.where(accepted > 0, errors / accepted, 0.0))
        sigma_E = np.where(accepted > 0, np.sqrt(E * (1.0 - E) / accepted), 0.0)
        EQ = errors / sent
        sigma_EQ = np.sqrt(EQ * (1.0 - EQ) / sent)
    sigma_E = np.where(empty, np.nan, sigma_E)
    return CellRates(Q, E, sigma_Q, sigma_E, sigma_EQ, empty, no_accepted, sent)


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else repr(float(x))


def to_csv(table: TallyTable) -> str:
    r = rates(table)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for k in range(N_INTENSITIES):
        for l in range(N_INTENSITIES):
            for basis in Basis:
                b = int(basis)
                sent, accepted, errors = (int(x) for x in table.counts[k, l, b])
                writer.writerow([k, l, basis.name, sent, accepted, errors,
                                 _fmt(r.Q[k, l, b]), _fmt(r.E[k, l, b]),
                                 _fmt(r.sigma_Q[k, l, b]), _fmt(r.sigma_E[k, l, b])])
    return buf.getvalue()


def write_csv(table: TallyTable, path: str | Path) -> None:
    Path(path).write_text(to_csv(table))


def from_csv(text: str) -> TallyTable:
    """Rebuild a table from exported CSV.  Only the count columns are used.

    Basis-mismatched rounds are not part of the CSV and come back as zero.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TallyFormatError("empty CSV") from None
    header = [h.strip() for h in header]
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise TallyFormatError(f"header: missing column(s) {', '.join(missing)}")
    col = {name: header.index(name) for name in CSV_COLUMNS}
    counts = np.zeros(_SHAPE, np.int64)
    seen: set[tuple[int, int, int]] = set()
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not field.strip() for field in row):
            continue
        if len(row) != len(header):
            raise TallyFormatError(f"row {rowno}: expected {len(header)} columns, got {len(row)}")

        def integer(name: str, lo: int, hi: int | None = None) -> int:
            raw = row[col[name]].strip()
            try:
                value = int(raw)
            except ValueError:
                raise TallyFormatError(f"row {rowno}, column {name}: not an integer: {raw!r}") from None
            if value < lo or (hi is not None and value > hi):
                raise TallyFormatError(f"row {rowno}, column {name}: {value} out of range")
            return value

        k = integer("k", 0, N_INTENSITIES - 1)
        l = integer("l", 0, N_INTENSITIES - 1)
        basis_name = row[col["basis"]].strip().upper()
        if basis_name not in Basis.__members__:
            raise TallyFormatError(f"row {rowno}, column basis: unknown basis {basis_name!r}")
        b = int(Basis[basis_name])
        if (k, l, b) in seen:
            raise TallyFormatError(f"row {rowno}: duplicate cell (k={k}, l={l}, basis={basis_name})")
        seen.add((k, l, b))
        sent = integer("sent", 0)
        accepted = integer("accepted", 0, sent)
        errors = integer("errors", 0, accepted)
        counts[k, l, b] = (sent, accepted, errors)
    absent = [(k, l, Basis(b).name) for k in range(N_INTENSITIES) for l in range(N_INTENSITIES)
              for b in range(2) if (k, l, b) not in seen]
    if absent:
        k, l, name = absent[0]
        raise TallyFormatError(
            f"missing cell (k={k}, l={l}, basis={name})"
            + (f" and {len(absent) - 1} more" if len(absent) > 1 else ""))
    return TallyTable(counts, np.zeros(_SHAPE[:2], np.int64))


def read_csv(path: str | Path) -> TallyTable:
    return from_csv(Path(path).read_text())
