"""Pairwise similarity measures computed from co-rated entries.

Every measure returns a :class:`SimilarityMatrix` over users or items. Pairs
for which a measure cannot be evaluated (empty co-rated set, vanishing
denominator) are *undefined*: they carry ``defined == False`` and are never
selected as neighbors.

The PCC, CPCC and co-rated Jaccard numerators and norms are formed from
integer-valued sums, so zero-norm detection is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import RatingMatrix, check_axis


class UnsupportedMeasureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Symmetric n x n scores with an explicit definedness mask.

    ``values`` holds 0.0 wherever ``defined`` is False; the diagonal is always
    undefined.
    """

    axis: str
    values: np.ndarray
    defined: np.ndarray
    measure: str

    def __post_init__(self):
        self.values.setflags(write=False)
        self.defined.setflags(write=False)

    @classmethod
    def build(cls, axis, values, defined, measure):
        values = np.array(values, dtype=float)
        defined = np.array(defined, dtype=bool)
        np.fill_diagonal(defined, False)
        # mirror the upper triangle so symmetry is exact
        upper = np.triu(values, 1)
        values = upper + upper.T
        dupper = np.triu(defined, 1)
        defined = dupper | dupper.T
        values[~defined] = 0.0
        return cls(axis, values, defined, measure)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def score(self, i, j) -> float | None:
        return float(self.values[i, j]) if self.defined[i, j] else None

    def masked(self) -> np.ma.MaskedArray:
        return np.ma.MaskedArray(self.values, mask=~self.defined)

    @property
    def n_undefined(self) -> int:
        """Undefined off-diagonal ordered pairs."""
        return int(self.n * (self.n - 1) - self.defined.sum())

    def to_csv(self, path, ids=None):
        """Write ``i,j,score`` rows for i < j; undefined scores are written as ``NA``."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "score"])
            rows, cols = np.triu_indices(self.n, 1)
            for i, j in zip(rows.tolist(), cols.tolist()):
                a, b = (ids[i], ids[j]) if ids is not None else (i, j)
                w.writerow([a, b, repr(float(self.values[i, j])) if self.defined[i, j] else "NA"])

    def save(self, path):
        np.savez_compressed(path, values=self.values, defined=self.defined,
                            axis=self.axis, measure=self.measure)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            return cls(str(z["axis"]), z["values"].copy(), z["defined"].copy(), str(z["measure"]))


def _counts(B):
    """Co-rated counts N[a, b] and per-entity rating counts."""
    N = B @ B.T
    return N, np.diag(N).copy()


def pcc(m: RatingMatrix, axis="user", centering="corated") -> SimilarityMatrix:
    """Pearson correlation over co-rated entries.

    ``centering="corated"`` subtracts each vector's mean over the co-rated set;
    ``"global"`` subtracts the entity's mean over all of its ratings.
    Undefined below two co-rated entries or when either centered vector is zero.
    """
    X, mask = m.oriented(check_axis(axis))
    B = mask.astype(float)
    N, _ = _counts(B)
    if centering == "corated":
        S = X @ B.T              # sum of a's ratings over entries co-rated with b
        Q = (X * X) @ B.T
        P = X @ X.T
        num = N * P - S * S.T
        var = N * Q - S * S
    elif centering == "global":
        C = (X - m.means(axis)[:, None]) * B
        num = C @ C.T
        var = (C * C) @ B.T
    else:
        raise ValueError(f"unknown centering {centering!r}")
    var_t = var.T
    defined = (N >= 2) & (var > 0) & (var_t > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(defined, num / (np.sqrt(np.where(defined, var, 1.0))
                                          * np.sqrt(np.where(defined, var_t, 1.0))), 0.0)
    return SimilarityMatrix.build(axis, np.clip(values, -1.0, 1.0), defined, "pcc")


def cosine(m: RatingMatrix, axis="user") -> SimilarityMatrix:
    """Cosine of the full rating vectors, unrated entries counting as 0."""
    X, _ = m.oriented(check_axis(axis))
    P = X @ X.T
    norms = np.sqrt(np.diag(P))
    defined = (norms[:, None] > 0) & (norms[None, :] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(defined, P / np.outer(norms, norms), 0.0)
    return SimilarityMatrix.build(axis, np.clip(values, 0.0, 1.0), defined, "cosine")


def adjusted_cosine(m: RatingMatrix, axis="item") -> SimilarityMatrix:
    """Item-item correlation with ratings centered by each rater's global mean."""
    if check_axis(axis) != "item":
        raise UnsupportedMeasureError("adjusted cosine is defined for the item axis only")
    X, mask = m.oriented("item")
    B = mask.astype(float)
    N, _ = _counts(B)
    C = (X - m.user_means[None, :]) * B
    num = C @ C.T
    sq = (C * C) @ B.T
    sq_t = sq.T
    defined = (N >= 2) & (sq > 0) & (sq_t > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(defined, num / (np.sqrt(np.where(defined, sq, 1.0))
                                          * np.sqrt(np.where(defined, sq_t, 1.0))), 0.0)
    return SimilarityMatrix.build("item", np.clip(values, -1.0, 1.0), defined, "adjcos")


def cpcc(m: RatingMatrix, axis="user") -> SimilarityMatrix:
    """Constrained Pearson: center by the rating-scale median instead of a mean."""
    X, mask = m.oriented(check_axis(axis))
    B = mask.astype(float)
    N, _ = _counts(B)
    C = (X - m.median) * B
    num = C @ C.T
    sq = (C * C) @ B.T
    sq_t = sq.T
    defined = (N >= 1) & (sq > 0) & (sq_t > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(defined, num / (np.sqrt(np.where(defined, sq, 1.0))
                                          * np.sqrt(np.where(defined, sq_t, 1.0))), 0.0)
    return SimilarityMatrix.build(axis, np.clip(values, -1.0, 1.0), defined, "cpcc")


def jaccard_corated(m: RatingMatrix, axis="user") -> SimilarityMatrix:
    _, mask = m.oriented(check_axis(axis))
    B = mask.astype(float)
    N, counts = _counts(B)
    union = counts[:, None] + counts[None, :] - N
    defined = union > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(defined, N / np.where(defined, union, 1.0), 0.0)
    return SimilarityMatrix.build(axis, values, defined, "jaccard-corated")


# --------------------------------------------------------------------------
# PIP (proximity-impact-popularity)

def pip_agreement(r1, r2, median):
    """False iff the two ratings lie on opposite sides of the median."""
    return not ((r1 > median and r2 < median) or (r1 < median and r2 > median))


def pip_proximity(r1, r2, lo, hi):
    median = (lo + hi) / 2
    d = abs(r1 - r2)
    if not pip_agreement(r1, r2, median):
        d *= 2
    return (2 * (hi - lo) + 1 - d) ** 2


def pip_impact(r1, r2, lo, hi):
    median = (lo + hi) / 2
    v = (abs(r1 - median) + 1) * (abs(r2 - median) + 1)
    return v if pip_agreement(r1, r2, median) else 1.0 / v


def pip_popularity(r1, r2, mu):
    """``mu`` is the mean rating of the co-rated entity (the item for user pairs)."""
    if (r1 > mu and r2 > mu) or (r1 < mu and r2 < mu):
        return 1 + ((r1 + r2) / 2 - mu) ** 2
    return 1.0


def _level_kernel(X, B, weight):
    """sum_k w(X[a,k], X[b,k], k) over co-rated k, for all pairs (a, b).

    ``weight(r1, r2)`` returns a vector over the columns of X. Ratings take few
    distinct values, so the sum splits into one matrix product per value pair.
    """
    levels = np.unique(X[B > 0]).tolist()
    E = {a: (X == a).astype(float) for a in levels}
    out = np.zeros((X.shape[0], X.shape[0]))
    for a in levels:
        for b in levels:
            out += (E[a] * weight(a, b)[None, :]) @ E[b].T
    return out


def pip(m: RatingMatrix, axis="user") -> SimilarityMatrix:
    """Sum of proximity * impact * popularity over co-rated entries.

    Proximity is ``(2(hi-lo)+1 - D)^2`` with ``D = |r1-r2|``, doubled when the
    ratings sit on opposite sides of the scale median. Impact is
    ``(|r1-med|+1)(|r2-med|+1)``, inverted on disagreement. Popularity is
    ``1 + ((r1+r2)/2 - mu)^2`` when both ratings are on the same side of the
    co-rated entity's mean ``mu``, else 1.
    """
    X, mask = m.oriented(check_axis(axis))
    B = mask.astype(float)
    lo, hi = m.rating_domain
    mu = m.means("item" if axis == "user" else "user")
    N, _ = _counts(B)

    def weight(a, b):
        pi = pip_proximity(a, b, lo, hi) * pip_impact(a, b, lo, hi)
        same_side = ((a > mu) & (b > mu)) | ((a < mu) & (b < mu))
        return pi * np.where(same_side, 1 + ((a + b) / 2 - mu) ** 2, 1.0)

    values = _level_kernel(X, B, weight)
    return SimilarityMatrix.build(axis, values, N >= 1, "pip")


# --------------------------------------------------------------------------
# NHSM (proximity-significance-singularity, modified Jaccard, rating preference)

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def nhsm_proximity(r1, r2):
    return 1 - _sigmoid(abs(r1 - r2))


def nhsm_significance(r1, r2, median):
    return _sigmoid(abs(r1 - median) * abs(r2 - median))


def nhsm_singularity(r1, r2, mu):
    return 1 - _sigmoid(np.abs((r1 + r2) / 2 - mu))


def nhsm(m: RatingMatrix, axis="user") -> SimilarityMatrix:
    """PSS sum x modified Jaccard x user-rating-preference.

    * PSS: sum over co-rated entries of proximity, significance and singularity,
      each a logistic function of a rating distance.
    * Modified Jaccard: ``|I_a & I_b| / (|I_a| * |I_b|)``.
    * URP: ``1 - sigmoid(|mu_a - mu_b| * |sd_a - sd_b|)`` from each entity's
      rating mean and population standard deviation.
    """
    X, mask = m.oriented(check_axis(axis))
    B = mask.astype(float)
    median = m.median
    mu_other = m.means("item" if axis == "user" else "user")
    N, counts = _counts(B)

    def weight(a, b):
        return (nhsm_proximity(a, b) * nhsm_significance(a, b, median)
                * nhsm_singularity(a, b, mu_other))

    pss = _level_kernel(X, B, weight)
    with np.errstate(divide="ignore", invalid="ignore"):
        jacc = np.where(N > 0, N / np.maximum(np.outer(counts, counts), 1.0), 0.0)
    mu = m.means(axis)
    safe = np.maximum(counts, 1)
    sd = np.sqrt(((X - mu[:, None]) ** 2 * B).sum(axis=1) / safe)
    urp = 1 - _sigmoid(np.abs(mu[:, None] - mu[None, :]) * np.abs(sd[:, None] - sd[None, :]))
    return SimilarityMatrix.build(axis, pss * jacc * urp, N >= 1, "nhsm")


MEASURES = {
    "pcc": pcc,
    "cosine": cosine,
    "adjcos": adjusted_cosine,
    "cpcc": cpcc,
    "jaccard-corated": jaccard_corated,
    "pip": pip,
    "nhsm": nhsm,
}


def compute(measure: str, m: RatingMatrix, axis="user") -> SimilarityMatrix:
    try:
        fn = MEASURES[measure]
    except KeyError:
        raise UnsupportedMeasureError(
            f"unknown measure {measure!r}; available: {', '.join(MEASURES)}") from None
    return fn(m, axis)
