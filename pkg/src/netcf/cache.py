"""On-disk cache of similarity matrices and structural scores (``.npz`` per key)."""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path

import numpy as np

from .network import StructuralSimilarity
from .similarity import SimilarityMatrix

log = logging.getLogger(__name__)


def cache_key(*parts) -> str:
    return hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).hexdigest()[:24]


class DiskCache:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key):
        return self.root / f"{key}.npz"

    def get_similarity(self, dataset_hash, measure, axis) -> SimilarityMatrix | None:
        path = self._path(cache_key("sim", dataset_hash, measure, axis))
        if not path.exists():
            return None
        log.debug("cache hit %s", path.name)
        return SimilarityMatrix.load(path)

    def put_similarity(self, dataset_hash, s: SimilarityMatrix):
        path = self._path(cache_key("sim", dataset_hash, s.measure, s.axis))
        tmp = path.with_suffix(".tmp.npz")
        s.save(tmp)
        os.replace(tmp, path)

    def get_structural(self, network_hash, kind, beta) -> StructuralSimilarity | None:
        path = self._path(cache_key("struct", network_hash, kind, beta))
        if not path.exists():
            return None
        with np.load(path, allow_pickle=False) as z:
            b = float(z["beta"])
            lam = float(z["lambda1"])
            return StructuralSimilarity(str(z["kind"]), str(z["axis"]), z["scores"].copy(),
                                        None if np.isnan(b) else b, None if np.isnan(lam) else lam)

    def put_structural(self, network_hash, beta, st: StructuralSimilarity):
        path = self._path(cache_key("struct", network_hash, st.kind, beta))
        tmp = path.with_suffix(".tmp.npz")
        np.savez_compressed(tmp, scores=st.scores, kind=st.kind, axis=st.axis,
                            beta=np.nan if st.beta is None else st.beta,
                            lambda1=np.nan if st.lambda1 is None else st.lambda1)
        os.replace(tmp, path)
