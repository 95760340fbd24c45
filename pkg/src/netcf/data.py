"""Rating data: loading, grouping, hold-out splits and sparsification.

All randomized operations draw from ``numpy.random.Generator(PCG64(seed))``,
so a split is fully determined by its seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
import scipy.sparse as sp

AXES = ("user", "item")
DELIMITERS = {"tab": "\t", "comma": ",", "dcolon": "::", "\t": "\t", ",": ",", "::": "::"}


class RatingFileError(ValueError):
    """A rating file row could not be parsed."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}, line {line_no}: {message}")
        self.path = path
        self.line_no = line_no


class RatingDomainError(ValueError):
    pass


def check_axis(axis):
    if axis not in AXES:
        raise ValueError(f"axis must be 'user' or 'item', got {axis!r}")
    return axis


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class RatingMatrix:
    """Immutable sparse user x item rating matrix.

    Ratings are stored as COO triplets sorted by (user, item). A zero rating is
    never stored; absence means "unrated". ``user_ids``/``item_ids`` hold the
    original labels for each dense index.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    rating_domain: tuple[int, int] = (1, 5)
    user_ids: tuple = ()
    item_ids: tuple = ()

    def __post_init__(self):
        lo, hi = self.rating_domain
        if lo > hi:
            raise RatingDomainError(f"empty rating domain {self.rating_domain}")
        if len(self.values):
            if self.values.min() < lo or self.values.max() > hi:
                bad = self.values[(self.values < lo) | (self.values > hi)][0]
                raise RatingDomainError(f"rating {bad} outside domain [{lo}, {hi}]")
            if (self.values == 0).any():
                raise RatingDomainError("0 is reserved for 'unrated' and cannot be stored")
        for arr in (self.users, self.items, self.values):
            arr.setflags(write=False)
        if not self.user_ids:
            object.__setattr__(self, "user_ids", tuple(str(u) for u in range(self.n_users)))
        if not self.item_ids:
            object.__setattr__(self, "item_ids", tuple(str(i) for i in range(self.n_items)))
        if len(self.user_ids) != self.n_users or len(self.item_ids) != self.n_items:
            raise ValueError("id tables do not match matrix dimensions")

    @classmethod
    def from_triplets(cls, users, items, values, n_users=None, n_items=None,
                      rating_domain=(1, 5), user_ids=(), item_ids=()):
        """Build a matrix from index triplets; duplicate cells keep the last value."""
        users = np.asarray(users, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        values = np.asarray(values).ravel()
        if values.size and not np.all(np.mod(values, 1) == 0):
            raise RatingDomainError("ratings must be integers")
        values = values.astype(np.int64)
        if not (len(users) == len(items) == len(values)):
            raise ValueError("triplet arrays differ in length")
        if n_users is None:
            n_users = int(users.max()) + 1 if len(users) else 0
        if n_items is None:
            n_items = int(items.max()) + 1 if len(items) else 0
        if len(users) and (users.min() < 0 or users.max() >= n_users
                           or items.min() < 0 or items.max() >= n_items):
            raise IndexError("triplet index out of range")
        # keep last occurrence per cell, then sort by (user, item)
        keys = users * max(n_items, 1) + items
        rev_keys = keys[::-1]
        _, first_in_rev = np.unique(rev_keys, return_index=True)
        keep = len(keys) - 1 - first_in_rev
        keep.sort()
        users, items, values = users[keep], items[keep], values[keep]
        order = np.lexsort((items, users))
        return cls(int(n_users), int(n_items), users[order], items[order], values[order],
                   tuple(int(x) for x in rating_domain), tuple(user_ids), tuple(item_ids))

    @classmethod
    def from_dense(cls, array, rating_domain=(1, 5)):
        array = np.asarray(array)
        u, i = np.nonzero(array)
        return cls.from_triplets(u, i, array[u, i], array.shape[0], array.shape[1], rating_domain)

    def __eq__(self, other):
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and self.rating_domain == other.rating_domain
                and self.user_ids == other.user_ids
                and self.item_ids == other.item_ids
                and np.array_equal(self.users, other.users)
                and np.array_equal(self.items, other.items)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self):
        return (f"RatingMatrix(n_users={self.n_users}, n_items={self.n_items}, "
                f"nnz={self.nnz}, domain={self.rating_domain})")

    @property
    def shape(self):
        return (self.n_users, self.n_items)

    @property
    def nnz(self):
        return len(self.values)

    @property
    def density(self) -> float:
        """Percentage of filled cells (kappa)."""
        cells = self.n_users * self.n_items
        return 100.0 * self.nnz / cells if cells else 0.0

    @property
    def median(self) -> float:
        lo, hi = self.rating_domain
        return (lo + hi) / 2

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.users, self.items)), shape=self.shape)

    @cached_property
    def csc(self) -> sp.csc_matrix:
        return self.csr.tocsc()

    @cached_property
    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.users, self.items] = self.values
        out.setflags(write=False)
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[self.users, self.items] = True
        out.setflags(write=False)
        return out

    def counts(self, axis="user") -> np.ndarray:
        check_axis(axis)
        idx, n = (self.users, self.n_users) if axis == "user" else (self.items, self.n_items)
        return np.bincount(idx, minlength=n)

    def rated_by(self, u) -> np.ndarray:
        """Item indices rated by user ``u`` (ascending)."""
        csr = self.csr
        return csr.indices[csr.indptr[u]:csr.indptr[u + 1]]

    def raters_of(self, i) -> np.ndarray:
        """User indices who rated item ``i`` (ascending)."""
        csc = self.csc
        return csc.indices[csc.indptr[i]:csc.indptr[i + 1]]

    def get(self, u, i) -> int:
        return int(self.csr[u, i])

    @cached_property
    def global_mean(self) -> float:
        return float(self.values.mean()) if self.nnz else float(self.median)

    def _means(self, axis):
        counts = self.counts(axis)
        idx = self.users if axis == "user" else self.items
        sums = np.bincount(idx, weights=self.values, minlength=len(counts))
        out = np.full(len(counts), self.global_mean)
        has = counts > 0
        out[has] = sums[has] / counts[has]
        out.setflags(write=False)
        return out

    @cached_property
    def user_means(self) -> np.ndarray:
        """Mean train rating per user; users without ratings get the global mean."""
        return self._means("user")

    @cached_property
    def item_means(self) -> np.ndarray:
        return self._means("item")

    def means(self, axis) -> np.ndarray:
        return self.user_means if check_axis(axis) == "user" else self.item_means

    def oriented(self, axis):
        """Dense ratings and mask with rows indexing entities on ``axis``."""
        if check_axis(axis) == "user":
            return self.dense, self.mask
        return self.dense.T, self.mask.T

    @cached_property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr((self.shape, self.rating_domain)).encode())
        for arr in (self.users, self.items, self.values):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        h.update("\x1f".join(self.user_ids).encode())
        h.update("\x1e".join(self.item_ids).encode())
        return h.hexdigest()[:16]

    def with_ratings(self, keep: np.ndarray) -> "RatingMatrix":
        """Same index space, restricted to the stored ratings selected by ``keep``."""
        return RatingMatrix(self.n_users, self.n_items, self.users[keep].copy(),
                            self.items[keep].copy(), self.values[keep].copy(),
                            self.rating_domain, self.user_ids, self.item_ids)

    def triplets(self):
        return zip(self.users.tolist(), self.items.tolist(), self.values.tolist())


# --------------------------------------------------------------------------
# file I/O

def _sort_ids(ids):
    try:
        return sorted(ids, key=lambda s: (int(s), s))
    except ValueError:
        return sorted(ids)


def _detect_delimiter(line):
    if "::" in line:
        return "::"
    if "\t" in line:
        return "\t"
    return ","


def load_ratings(source, delimiter=None, fields=("user", "item", "rating"),
                 rating_domain=(1, 5), header="auto") -> RatingMatrix:
    """Read a delimited ``user, item, rating[, timestamp]`` file.

    ``delimiter`` may be ``"\\t"``, ``","``, ``"::"`` (or ``tab``/``comma``/``dcolon``);
    ``None`` sniffs it from the first row. ``fields`` names the column order and
    only positions of ``user``, ``item`` and ``rating`` are used. With
    ``header="auto"`` a first row whose rating column is not numeric is skipped.
    Ids are remapped to dense indices in sorted id order.
    """
    if delimiter is not None:
        delimiter = DELIMITERS[delimiter]
    fields = tuple(fields)
    try:
        cols = fields.index("user"), fields.index("item"), fields.index("rating")
    except ValueError:
        raise ValueError(f"fields must name user, item and rating: {fields}") from None
    lo, hi = rating_domain
    cells = {}
    with open(source, encoding="utf-8") as fh:
        first = True
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if delimiter is None:
                delimiter = _detect_delimiter(line)
            parts = [p.strip() for p in line.split(delimiter)]
            if len(parts) <= max(cols):
                raise RatingFileError(source, line_no, f"expected at least {max(cols) + 1} fields")
            u, i, r = (parts[c] for c in cols)
            try:
                value = float(r)
            except ValueError:
                if first and header in ("auto", True):
                    first = False
                    continue
                raise RatingFileError(source, line_no, f"rating {r!r} is not a number") from None
            if first and header is True:
                first = False
                continue
            first = False
            if not value.is_integer():
                raise RatingFileError(source, line_no, f"rating {r!r} is not an integer")
            value = int(value)
            if not lo <= value <= hi:
                raise RatingDomainError(f"{source}, line {line_no}: rating {value} outside [{lo}, {hi}]")
            if not u or not i:
                raise RatingFileError(source, line_no, "empty id")
            cells[(u, i)] = value
    user_ids = _sort_ids({u for u, _ in cells})
    item_ids = _sort_ids({i for _, i in cells})
    uidx = {u: k for k, u in enumerate(user_ids)}
    iidx = {i: k for k, i in enumerate(item_ids)}
    n = len(cells)
    users = np.fromiter((uidx[u] for u, _ in cells), dtype=np.int64, count=n)
    items = np.fromiter((iidx[i] for _, i in cells), dtype=np.int64, count=n)
    values = np.fromiter(cells.values(), dtype=np.int64, count=n)
    return RatingMatrix.from_triplets(users, items, values, len(user_ids), len(item_ids),
                                      rating_domain, tuple(user_ids), tuple(item_ids))


def write_ratings(m: RatingMatrix, path, header=True):
    """Write the canonical ``user_id,item_id,rating`` CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write("user_id,item_id,rating\n")
        for u, i, r in m.triplets():
            fh.write(f"{m.user_ids[u]},{m.item_ids[i]},{r}\n")


# --------------------------------------------------------------------------
# groups and splits

@dataclass(frozen=True)
class EntityGroup:
    axis: str
    min_count: int
    max_count: float | int
    members: tuple[int, ...]

    @property
    def label(self):
        prefix = "U" if self.axis == "user" else "I"
        if math.isinf(self.max_count):
            return f"{prefix}GE{self.min_count}"
        return f"{prefix}{self.min_count}-{self.max_count}"

    def __len__(self):
        return len(self.members)


def group_by_count(m: RatingMatrix, axis="user", lo=0, hi=math.inf) -> EntityGroup:
    if hi is None:
        hi = math.inf
    if lo < 0 or hi < lo:
        raise ValueError(f"invalid count range [{lo}, {hi}]")
    counts = m.counts(axis)
    members = np.flatnonzero((counts >= lo) & (counts <= hi))
    return EntityGroup(axis, int(lo), hi if math.isinf(hi) else int(hi), tuple(members.tolist()))


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: RatingMatrix
    test: Mapping[tuple[int, int], int]
    seed: int
    selected: tuple[int, ...] = ()
    axis: str = "user"

    def test_triplets(self):
        return [(u, i, r) for (u, i), r in self.test.items()]


def n_holdout(count, deletions, min_remaining=5):
    """Ratings to hold out for an entity with ``count`` ratings."""
    if count >= deletions + min_remaining:
        return deletions
    return min(max(count - min_remaining, 1), count)


def holdout_split(m: RatingMatrix, targets: EntityGroup, sample_size=150,
                  per_entity_deletions=15, seed=0, min_remaining=5) -> SplitPair:
    """Sample entities from ``targets`` and move some of their ratings to a test set.

    Entities with fewer than ``per_entity_deletions + min_remaining`` ratings
    give up ``count - min_remaining`` ratings instead (at least one).
    """
    if per_entity_deletions < 1:
        raise ValueError("per_entity_deletions must be >= 1")
    if sample_size == 0:
        return SplitPair(m, {}, seed, (), targets.axis)
    if not len(targets):
        raise ValueError("no entities to sample")
    rng = make_rng(seed)
    members = np.asarray(targets.members, dtype=np.int64)
    k = min(sample_size, len(members))
    selected = np.sort(rng.choice(members, size=k, replace=False))

    # positions of each entity's ratings in the triplet arrays
    key = m.users if targets.axis == "user" else m.items
    n = m.n_users if targets.axis == "user" else m.n_items
    order = np.argsort(key, kind="stable")
    bounds = np.searchsorted(key[order], np.arange(n + 1))
    drop = np.zeros(m.nnz, dtype=bool)
    for e in selected:
        pos = order[bounds[e]:bounds[e + 1]]
        d = n_holdout(len(pos), per_entity_deletions, min_remaining)
        if d:
            drop[rng.choice(pos, size=d, replace=False)] = True
    test = {(int(u), int(i)): int(r) for u, i, r in
            zip(m.users[drop], m.items[drop], m.values[drop])}
    return SplitPair(m.with_ratings(~drop), test, seed, tuple(selected.tolist()), targets.axis)


def sparsify(m: RatingMatrix, fraction_removed: float, axis="user", seed=0) -> RatingMatrix:
    """Remove ``floor(fraction * count)`` ratings from every entity on ``axis``.

    Entities on the opposite axis left without ratings are dropped and indices
    re-densified; entities on ``axis`` are kept.
    """
    check_axis(axis)
    if not 0 <= fraction_removed < 1:
        raise ValueError("fraction_removed must be in [0, 1)")
    if fraction_removed == 0 or m.nnz == 0:
        return m
    rng = make_rng(seed)
    key = m.users if axis == "user" else m.items
    n = m.n_users if axis == "user" else m.n_items
    order = np.argsort(key, kind="stable")
    bounds = np.searchsorted(key[order], np.arange(n + 1))
    drop = np.zeros(m.nnz, dtype=bool)
    for e in range(n):
        pos = order[bounds[e]:bounds[e + 1]]
        d = math.floor(fraction_removed * len(pos))
        if d:
            drop[rng.choice(pos, size=d, replace=False)] = True
    keep = ~drop
    users, items, values = m.users[keep], m.items[keep], m.values[keep]
    user_ids, item_ids = m.user_ids, m.item_ids
    n_users, n_items = m.n_users, m.n_items
    if axis == "user":
        alive = np.flatnonzero(np.bincount(items, minlength=n_items))
        remap = np.full(n_items, -1)
        remap[alive] = np.arange(len(alive))
        items = remap[items]
        item_ids = tuple(item_ids[k] for k in alive)
        n_items = len(alive)
    else:
        alive = np.flatnonzero(np.bincount(users, minlength=n_users))
        remap = np.full(n_users, -1)
        remap[alive] = np.arange(len(alive))
        users = remap[users]
        user_ids = tuple(user_ids[k] for k in alive)
        n_users = len(alive)
    return RatingMatrix.from_triplets(users, items, values, n_users, n_items,
                                      m.rating_domain, user_ids, item_ids)


def read_pairs(path, m: RatingMatrix) -> list[tuple[int, int]]:
    """Read a ``user,item`` CSV of raw ids and map it to dense indices."""
    uidx = {u: k for k, u in enumerate(m.user_ids)}
    iidx = {i: k for k, i in enumerate(m.item_ids)}
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.replace("\t", ",").split(",")]
            if len(parts) < 2:
                raise RatingFileError(path, line_no, "expected user,item")
            if line_no == 1 and parts[0] not in uidx and parts[0].lower() in ("user", "user_id"):
                continue
            try:
                pairs.append((uidx[parts[0]], iidx[parts[1]]))
            except KeyError as e:
                raise RatingFileError(path, line_no, f"unknown id {e.args[0]!r}") from None
    return pairs


__all__ = [
    "RatingMatrix", "SplitPair", "EntityGroup", "RatingFileError", "RatingDomainError",
    "load_ratings", "write_ratings", "group_by_count", "holdout_split", "sparsify",
    "make_rng", "n_holdout", "read_pairs",
]
