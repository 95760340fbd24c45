"""Neighborhood rating prediction: user-based, item-based and the HB1/HB2 hybrids.

Hybrid methods complement the raters of an item with *intermediate ratings*:
an item-based estimate of what a similar user who has not rated the item
would give it.

Two readings are fixed here:

* HB2 decides per neighbor: a neighbor who rated the item contributes its
  rating, one who did not contributes its intermediate rating, all inside one
  weighted sum.
* When the selected similarities sum to zero in absolute value the prediction
  is treated as having no neighbors and falls back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import RatingMatrix
from .similarity import SimilarityMatrix

METHODS = ("user", "item", "hb1", "hb2")
FALLBACKS = ("mean", "skip")


@dataclass(frozen=True)
class PredictorSpec:
    method: str = "user"
    user_measure: str | None = "pcc"
    item_measure: str | None = None
    K: int = 10
    K_I: int = 10
    fallback: str = "mean"
    clamp: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; available: {', '.join(METHODS)}")
        if self.K < 1 or self.K_I < 1:
            raise ValueError("K and K_I must be >= 1")
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")
        if self.method in ("hb1", "hb2") and not (self.user_measure and self.item_measure):
            raise ValueError("hybrid methods need both a user and an item similarity")
        if self.method == "user" and not self.user_measure:
            raise ValueError("user-based prediction needs a user similarity")
        if self.method == "item" and not self.item_measure:
            raise ValueError("item-based prediction needs an item similarity")


@dataclass(frozen=True)
class Prediction:
    user: int
    item: int
    value: float | None
    raw: float | None = None
    neighbors_used: int = 0
    ir_used: int = 0
    fallback: bool = False

    @property
    def abstained(self) -> bool:
        return self.value is None


def select_neighbors(scores, candidates, K, defined=None) -> np.ndarray:
    """Top-``K`` candidates by descending score, ties by ascending index.

    ``scores`` is the anchor's row over all entities; candidates whose score is
    undefined (``defined`` False, or NaN when no mask is given) are skipped.
    """
    scores = np.asarray(scores, dtype=float)
    cand = np.asarray(candidates, dtype=np.int64)
    if defined is None:
        keep = ~np.isnan(scores[cand])
    else:
        keep = np.asarray(defined, dtype=bool)[cand]
    cand = cand[keep]
    if len(cand) == 0 or K <= 0:
        return cand[:0]
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[:K]]


def _finalize(u, i, raw, train, clamp, **detail):
    value = raw
    if raw is not None and clamp:
        lo, hi = train.rating_domain
        value = min(max(raw, float(lo)), float(hi))
    return Prediction(u, i, value, raw, **detail)


def _fallback(u, i, base, train, fallback, clamp, neighbors_used=0, ir_used=0):
    if fallback == "skip":
        return Prediction(u, i, None, None, neighbors_used, ir_used, True)
    return _finalize(u, i, float(base), train, clamp, neighbors_used=neighbors_used,
                     ir_used=ir_used, fallback=True)


def _weighted(sims, deviations):
    """(sum s*d, sum |s|) in neighbor order."""
    num = float(np.dot(sims, deviations))
    den = float(np.abs(sims).sum())
    return num, den


def predict_user_based(train: RatingMatrix, s_users: SimilarityMatrix, u, i, K,
                       fallback="mean", clamp=True) -> Prediction:
    """``mean_u + sum s(u,k)(r_ki - mean_k) / sum |s(u,k)|`` over the top-K raters of ``i``."""
    if fallback == "skip" and len(train.rated_by(u)) == 0:
        return Prediction(u, i, None, None, 0, 0, True)
    base = train.user_means[u]
    raters = train.raters_of(i)
    raters = raters[raters != u]
    nbrs = select_neighbors(s_users.values[u], raters, K, s_users.defined[u])
    if len(nbrs) == 0:
        return _fallback(u, i, base, train, fallback, clamp)
    sims = s_users.values[u, nbrs]
    dev = train.dense[nbrs, i] - train.user_means[nbrs]
    num, den = _weighted(sims, dev)
    if den == 0:
        return _fallback(u, i, base, train, fallback, clamp, len(nbrs))
    return _finalize(u, i, base + num / den, train, clamp, neighbors_used=len(nbrs))


def predict_item_based(train: RatingMatrix, s_items: SimilarityMatrix, u, i, K,
                       fallback="mean", clamp=True, centered=True) -> Prediction:
    """``mean_i + sum s(i,k)(r_uk - mean_k) / sum |s(i,k)|`` over the top-K items rated by ``u``.

    ``centered=False`` gives the plain weighted average ``sum s r_uk / sum |s|``.
    """
    if fallback == "skip" and len(train.raters_of(i)) == 0:
        return Prediction(u, i, None, None, 0, 0, True)
    base = train.item_means[i]
    rated = train.rated_by(u)
    rated = rated[rated != i]
    nbrs = select_neighbors(s_items.values[i], rated, K, s_items.defined[i])
    if len(nbrs) == 0:
        return _fallback(u, i, base, train, fallback, clamp)
    sims = s_items.values[i, nbrs]
    r = train.dense[u, nbrs]
    if centered:
        num, den = _weighted(sims, r - train.item_means[nbrs])
        raw = None if den == 0 else base + num / den
    else:
        num, den = _weighted(sims, r)
        raw = None if den == 0 else num / den
    if raw is None:
        return _fallback(u, i, base, train, fallback, clamp, len(nbrs))
    return _finalize(u, i, raw, train, clamp, neighbors_used=len(nbrs))


def intermediate_rating(train: RatingMatrix, s_items: SimilarityMatrix, user_k, i, K_I=10) -> float:
    """Item-based estimate of ``user_k``'s rating of ``i`` from its top-``K_I`` rated items.

    Uses as many items as ``user_k`` has rated when that is fewer than ``K_I``;
    returns ``mean_i`` when nothing usable is left.
    """
    base = float(train.item_means[i])
    rated = train.rated_by(user_k)
    rated = rated[rated != i]
    nbrs = select_neighbors(s_items.values[i], rated, K_I, s_items.defined[i])
    if len(nbrs) == 0:
        return base
    sims = s_items.values[i, nbrs]
    num, den = _weighted(sims, train.dense[user_k, nbrs] - train.item_means[nbrs])
    return base if den == 0 else base + num / den


def intermediate_ratings(train: RatingMatrix, s_items: SimilarityMatrix, i, K_I=10) -> np.ndarray:
    """:func:`intermediate_rating` of item ``i`` for every user at once."""
    base = float(train.item_means[i])
    row = s_items.values[i]
    cand = np.flatnonzero(s_items.defined[i])
    cand = cand[cand != i]
    order = cand[np.lexsort((cand, -row[cand]))]
    B = train.mask[:, order]
    take = B & (np.cumsum(B, axis=1) <= K_I)
    sims = row[order]
    dev = train.dense[:, order] - train.item_means[order][None, :]
    num = (take * (sims * dev)).sum(axis=1)
    den = (take * np.abs(sims)).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, base + num / np.where(den > 0, den, 1.0), base)


def _ir_values(train, s_items, users, i, K_I, ir):
    if ir is not None:
        return np.asarray(ir)[users]
    return np.array([intermediate_rating(train, s_items, k, i, K_I) for k in users.tolist()])


def predict_hb1(train: RatingMatrix, s_users: SimilarityMatrix, s_items: SimilarityMatrix,
                u, i, K, K_I=10, fallback="mean", clamp=True, ir=None) -> Prediction:
    """HB1: user-based when ``i`` has at least ``K`` raters, otherwise add an IR term.

    With ``N_u < K`` raters the prediction is ``mean_u`` plus the weighted
    deviation over all raters plus the weighted ``IR_k - mean_k`` deviation over
    the ``K - N_u`` most similar users who did not rate ``i``. The two
    corrections are not renormalized against each other. ``ir`` may carry
    precomputed intermediate ratings of ``i`` for every user.
    """
    raters = train.raters_of(i)
    raters = raters[raters != u]
    n_raters = len(raters)
    if n_raters >= K:
        return predict_user_based(train, s_users, u, i, K, fallback, clamp)
    if fallback == "skip" and len(train.rated_by(u)) == 0:
        return Prediction(u, i, None, None, 0, 0, True)
    base = train.user_means[u]
    row, dmask = s_users.values[u], s_users.defined[u]

    rated_nbrs = select_neighbors(row, raters, n_raters, dmask)
    num1, den1 = _weighted(row[rated_nbrs],
                           train.dense[rated_nbrs, i] - train.user_means[rated_nbrs])

    others = np.ones(train.n_users, dtype=bool)
    others[raters] = False
    others[u] = False
    sim_nbrs = select_neighbors(row, np.flatnonzero(others), K - n_raters, dmask)
    irs = _ir_values(train, s_items, sim_nbrs, i, K_I, ir)
    num2, den2 = _weighted(row[sim_nbrs], irs - train.user_means[sim_nbrs])

    used = len(rated_nbrs) + len(sim_nbrs)
    if den1 == 0 and den2 == 0:
        return _fallback(u, i, base, train, fallback, clamp, used, len(sim_nbrs))
    raw = base
    if den1 > 0:
        raw += num1 / den1
    if den2 > 0:
        raw += num2 / den2
    return _finalize(u, i, raw, train, clamp, neighbors_used=used,
                     ir_used=len(sim_nbrs) if den2 > 0 else 0)


def predict_hb2(train: RatingMatrix, s_users: SimilarityMatrix, s_items: SimilarityMatrix,
                u, i, K, K_I=10, fallback="mean", clamp=True, ir=None) -> Prediction:
    """HB2: top-K users regardless of whether they rated ``i``.

    A neighbor who rated ``i`` contributes ``r_ki - mean_k``, one who did not
    contributes ``IR_k - mean_k``.
    """
    if fallback == "skip" and len(train.rated_by(u)) == 0:
        return Prediction(u, i, None, None, 0, 0, True)
    base = train.user_means[u]
    cand = np.arange(train.n_users)
    cand = cand[cand != u]
    nbrs = select_neighbors(s_users.values[u], cand, K, s_users.defined[u])
    if len(nbrs) == 0:
        return _fallback(u, i, base, train, fallback, clamp)
    r = train.dense[nbrs, i]
    unrated = r == 0
    target = r.copy()
    if unrated.any():
        target[unrated] = _ir_values(train, s_items, nbrs[unrated], i, K_I, ir)
    num, den = _weighted(s_users.values[u, nbrs], target - train.user_means[nbrs])
    if den == 0:
        return _fallback(u, i, base, train, fallback, clamp, len(nbrs), int(unrated.sum()))
    return _finalize(u, i, base + num / den, train, clamp, neighbors_used=len(nbrs),
                     ir_used=int(unrated.sum()))


@dataclass
class Predictor:
    """Bind a :class:`PredictorSpec` to a train matrix and its similarities.

    Intermediate ratings are computed once per target item; pass the same
    ``ir_cache`` dict to predictors sharing train data, item similarity and K_I.
    """

    spec: PredictorSpec
    train: RatingMatrix
    s_users: SimilarityMatrix | None = None
    s_items: SimilarityMatrix | None = None
    ir_cache: dict = field(default_factory=dict, repr=False)

    def ir_column(self, i):
        col = self.ir_cache.get(i)
        if col is None:
            col = intermediate_ratings(self.train, self.s_items, i, self.spec.K_I)
            self.ir_cache[i] = col
        return col

    def predict(self, u, i) -> Prediction:
        sp_ = self.spec
        if sp_.method == "user":
            return predict_user_based(self.train, self.s_users, u, i, sp_.K, sp_.fallback, sp_.clamp)
        if sp_.method == "item":
            return predict_item_based(self.train, self.s_items, u, i, sp_.K, sp_.fallback, sp_.clamp)
        fn = predict_hb1 if sp_.method == "hb1" else predict_hb2
        return fn(self.train, self.s_users, self.s_items, u, i, sp_.K, sp_.K_I,
                  sp_.fallback, sp_.clamp, ir=self.ir_column(i))

    def predict_many(self, pairs) -> list[Prediction]:
        return [self.predict(u, i) for u, i in pairs]


def write_predictions(predictions, path, user_ids=None, item_ids=None):
    """CSV ``user,item,predicted,neighbors_used,ir_used,fallback``; abstentions as ``NA``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("user,item,predicted,neighbors_used,ir_used,fallback\n")
        for p in predictions:
            u = user_ids[p.user] if user_ids is not None else p.user
            i = item_ids[p.item] if item_ids is not None else p.item
            v = "NA" if p.value is None else repr(float(p.value))
            fh.write(f"{u},{i},{v},{p.neighbors_used},{p.ir_used},{int(p.fallback)}\n")
