"""Observational sample container and input validation.

A `Sample` holds outcomes Y (n,), integer treatments D (n,) taking values
in {0, ..., n_levels - 1}, and covariates X (n, p).  Arrays are stored
read-only so a sample never mutates under an estimator.

`validate_sample` returns violations as data instead of raising, so callers
can report every problem at once; `ValidationFailed` wraps the list at the
API boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationFailed


@dataclass(frozen=True)
class Violation:
    """Base class for validation findings; subclasses are plain records."""


@dataclass(frozen=True)
class LengthMismatch(Violation):
    outcomes: int
    treatments: int
    covariate_rows: int


@dataclass(frozen=True)
class NonFiniteOutcome(Violation):
    row: int


@dataclass(frozen=True)
class NonFiniteCovariate(Violation):
    row: int
    col: int


@dataclass(frozen=True)
class InvalidTreatment(Violation):
    row: int
    value: float


@dataclass(frozen=True)
class MissingLevel(Violation):
    level: int


@dataclass(frozen=True)
class SparseArm(Violation):
    level: int
    count: int
    required: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Sample:
    """Immutable (Y, D, X) triple with a declared number of treatment levels."""

    outcomes: np.ndarray
    treatments: np.ndarray
    covariates: np.ndarray
    n_levels: int

    @classmethod
    def from_arrays(cls, outcomes, treatments, covariates, n_levels=None) -> "Sample":
        """Build a sample from array-likes, inferring n_levels if omitted.

        Treatments are cast to integers; a non-integral value raises
        immediately because the level structure would be meaningless.
        """
        y = np.asarray(outcomes, dtype=float).reshape(-1)
        d_raw = np.asarray(treatments, dtype=float).reshape(-1)
        x = np.asarray(covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if not np.all(np.isfinite(d_raw)) or not np.all(d_raw == np.round(d_raw)):
            bad = int(np.flatnonzero(~(np.isfinite(d_raw) & (d_raw == np.round(d_raw))))[0])
            raise ValidationFailed([InvalidTreatment(row=bad, value=float(d_raw[bad]))])
        d = d_raw.astype(np.int64)
        if n_levels is None:
            n_levels = int(d.max()) + 1 if d.size else 0
        return cls(_readonly(y), _readonly(d), _readonly(x), int(n_levels))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def indicator(self, level: int) -> np.ndarray:
        """Float indicator vector 1{D_i == level}."""
        return (self.treatments == level).astype(float)

    def arm(self, level: int) -> np.ndarray:
        """Boolean mask of rows carrying `level`."""
        return self.treatments == level


def min_arm_size(p: int) -> int:
    """Smallest arm count accepted by validation: max(30, 2p)."""
    return max(30, 2 * p)


def validate_sample(sample: Sample) -> list[Violation]:
    """Check the sample contract; return all violations found (possibly none).

    Checks, in order: array length agreement, finite outcomes, finite
    covariates, treatment range, presence of every level, and a minimum
    arm size of max(30, 2p) per level.
    """
    out: list[Violation] = []
    n_y = sample.outcomes.shape[0]
    n_d = sample.treatments.shape[0]
    n_x = sample.covariates.shape[0]
    if not n_y == n_d == n_x:
        out.append(LengthMismatch(n_y, n_d, n_x))
        return out

    for row in np.flatnonzero(~np.isfinite(sample.outcomes)):
        out.append(NonFiniteOutcome(row=int(row)))
    bad_rows, bad_cols = np.nonzero(~np.isfinite(sample.covariates))
    for row, col in zip(bad_rows, bad_cols):
        out.append(NonFiniteCovariate(row=int(row), col=int(col)))

    in_range = (sample.treatments >= 0) & (sample.treatments < sample.n_levels)
    for row in np.flatnonzero(~in_range):
        out.append(InvalidTreatment(row=int(row), value=float(sample.treatments[row])))

    counts = np.bincount(sample.treatments[in_range], minlength=sample.n_levels)
    required = min_arm_size(sample.p)
    for level in range(sample.n_levels):
        if counts[level] == 0:
            out.append(MissingLevel(level=level))
        elif counts[level] < required:
            out.append(SparseArm(level=level, count=int(counts[level]), required=required))
    return out


def require_valid(sample: Sample) -> Sample:
    """Raise ValidationFailed on the first call with a bad sample."""
    violations = validate_sample(sample)
    if violations:
        raise ValidationFailed(violations)
    return sample
