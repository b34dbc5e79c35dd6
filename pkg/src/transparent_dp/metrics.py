"""Dissimilarity index of two count distributions and its privatized law.

The index is half the L1 distance between the tract-level shares of two
groups.  On privatized tables the noisy totals enter the denominators, so
the released index fluctuates, can leave [0, 1], and is undefined whenever
a noisy total is nonpositive; the study operation quantifies all of that
under repeated mechanism draws without any clipping or post-processing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedIndexError
from .mechanisms import PrivacyBudget, double_geometric_noise

__all__ = [
    "CountyTable",
    "DissimilarityStudy",
    "dissimilarity",
    "privatized_dissimilarity_study",
    "county_table_from_csv",
]

_QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class CountyTable:
    """Per-tract counts of two groups plus county totals.

    On confidential input the totals equal the column sums
    (:meth:`from_counts` enforces this); privatized tables may carry
    independently noised totals that do not.
    """

    w: np.ndarray
    b: np.ndarray
    w_cty: float
    b_cty: float

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if w.shape != b.shape or w.ndim != 1 or w.size == 0:
            raise ValueError("w and b must be 1-d arrays of equal, nonzero length")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_counts(cls, w, b) -> "CountyTable":
        """Build a confidential table; totals are the column sums."""
        w = np.asarray(w, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(w < 0) or np.any(b < 0):
            raise ValueError("confidential counts must be nonnegative")
        return cls(w=w, b=b, w_cty=float(w.sum()), b_cty=float(b.sum()))


def dissimilarity(table: CountyTable) -> float:
    """Half the L1 distance between the two tract share distributions.

    Raises
    ------
    UndefinedIndexError
        If either county total is nonpositive.
    """
    if table.w_cty <= 0 or table.b_cty <= 0:
        raise UndefinedIndexError(
            f"totals must be positive, got ({table.w_cty}, {table.b_cty})"
        )
    return 0.5 * float(np.abs(table.w / table.w_cty - table.b / table.b_cty).sum())


@dataclass(frozen=True)
class DissimilarityStudy:
    """Distribution summary of the privatized index over mechanism draws."""

    mean: float
    sd: float
    quantiles: dict
    undefined_fraction: float
    out_of_range_fraction: float
    replicates: int
    epsilon: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean": self.mean,
                "sd": self.sd,
                "quantiles": {str(k): v for k, v in self.quantiles.items()},
                "undefined_fraction": self.undefined_fraction,
                "out_of_range_fraction": self.out_of_range_fraction,
                "replicates": self.replicates,
                "epsilon": self.epsilon,
            },
            sort_keys=True,
        )


def privatized_dissimilarity_study(
    table: CountyTable,
    eps: PrivacyBudget,
    replicates: int,
    rng: np.random.Generator,
) -> DissimilarityStudy:
    """Recompute the index under repeated independent privatizations.

    Every cell and both totals receive independent double geometric noise
    at budget ``eps`` per replicate.  Replicates whose noisy totals are
    nonpositive leave the index undefined and are excluded from the
    moments but counted; defined values outside [0, 1] stay in the moments
    unclipped and are counted separately.

    Parameters
    ----------
    table : CountyTable
        Confidential table (or any table; noise is added to what is given).
    eps : PrivacyBudget
        Per-count budget of each noisy release.
    replicates : int
        Number of independent privatizations, at least 2.
    rng : numpy.random.Generator
        Source stream.
    """
    if replicates < 2:
        raise ValueError("replicates must be at least 2")
    m = table.w.size
    w_noisy = table.w + double_geometric_noise(rng, eps, replicates * m).reshape(replicates, m)
    b_noisy = table.b + double_geometric_noise(rng, eps, replicates * m).reshape(replicates, m)
    w_tot = table.w_cty + double_geometric_noise(rng, eps, replicates)
    b_tot = table.b_cty + double_geometric_noise(rng, eps, replicates)

    defined = (w_tot > 0) & (b_tot > 0)
    d = np.full(replicates, np.nan)
    if defined.any():
        shares = (
            w_noisy[defined] / w_tot[defined, None]
            - b_noisy[defined] / b_tot[defined, None]
        )
        d[defined] = 0.5 * np.abs(shares).sum(axis=1)

    vals = d[defined]
    undefined_fraction = 1.0 - defined.mean()
    out_of_range = ((vals < 0) | (vals > 1)).mean() if vals.size else 0.0
    if vals.size:
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        quantiles = {
            q: float(np.quantile(vals, q)) for q in _QUANTILE_LEVELS
        }
    else:
        mean, sd = math.nan, math.nan
        quantiles = {q: math.nan for q in _QUANTILE_LEVELS}

    return DissimilarityStudy(
        mean=mean,
        sd=sd,
        quantiles=quantiles,
        undefined_fraction=float(undefined_fraction),
        out_of_range_fraction=float(out_of_range),
        replicates=replicates,
        epsilon=eps.epsilon,
    )


def county_table_from_csv(text: str) -> CountyTable:
    """Parse a confidential table from CSV with header ``tract,w,b``."""
    lines = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0].strip().lower() != "tract,w,b":
        raise ValueError("expected CSV header 'tract,w,b'")
    w, b = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"malformed row {ln!r}")
        w.append(float(parts[1]))
        b.append(float(parts[2]))
    return CountyTable.from_counts(w, b)
