"""Experiment harness: hold-out protocol (setup 1), sparsified protocol (setup 2).

A run evaluates every (group, series, K) cell, where a series is a
``measure/method`` pair such as ``pcc/user`` or ``net-jaccard/hb1``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import network as netmod
from . import similarity as simmod
from .cache import DiskCache
from .data import (RatingMatrix, check_axis, group_by_count, holdout_split, load_ratings,
                   sparsify)
from .metrics import METRIC_NAMES, EvaluationReport, count_undefined, evaluate
from .predict import METHODS, Predictor, PredictorSpec

log = logging.getLogger(__name__)

MEASURES = tuple(simmod.MEASURES) + netmod.STRUCTURAL
DEFAULT_K_SWEEP = (5, 10, 25, 50, 75, 100, 125, 150)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = ""
    format: str | None = None
    fields: tuple = ("user", "item", "rating")
    rating_domain: tuple = (1, 5)
    setup: int = 1
    axis: str = "user"
    groups: tuple = ((20, 25), (100, 149), (150, math.inf), (20, math.inf))
    sample_size: int = 150
    deletions: int = 15
    min_remaining: int = 5
    sparsify_fraction: float = 0.75
    min_count: int = 0
    measures: tuple = ("pcc", "pip", "nhsm", "net-cn", "net-jaccard", "net-katz")
    methods: tuple = ("user", "hb1", "hb2")
    K_sweep: tuple = DEFAULT_K_SWEEP
    K_I: int = 10
    katz_beta: str | float = "auto"
    network_measure_user: str = "pcc"
    network_measure_item: str = "pcc"
    hybrid_user_measure: str = "net-jaccard"
    hybrid_item_measure: str = "net-jaccard"
    threshold: float = 4
    list_size: int = 10
    bcri_t: int = 5
    fallback: str = "mean"
    clamp: bool = True
    seed: int = 0
    out: str = "results"
    cache_dir: str | None = None

    def validate(self):
        if self.setup not in (1, 2):
            raise ConfigError(f"setup must be 1 or 2, got {self.setup}")
        try:
            check_axis(self.axis)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not self.K_sweep or list(self.K_sweep) != sorted(set(self.K_sweep)):
            raise ConfigError("K_sweep must be a non-empty ascending list")
        for name in self.measures:
            if name not in MEASURES:
                raise ConfigError(f"unknown measure {name!r}; registry: {', '.join(MEASURES)}")
        for name in (self.hybrid_user_measure, self.hybrid_item_measure):
            if name not in MEASURES:
                raise ConfigError(f"unknown measure {name!r}; registry: {', '.join(MEASURES)}")
        for name in (self.network_measure_user, self.network_measure_item):
            if name not in simmod.MEASURES:
                raise ConfigError(f"network source must be a traditional measure, got {name!r}")
        if self.network_measure_user == "adjcos":
            raise ConfigError("adjcos is defined for the item axis only")
        for name in self.methods:
            if name not in METHODS:
                raise ConfigError(f"unknown method {name!r}; registry: {', '.join(METHODS)}")
        if "user" in self.methods and "adjcos" in self.measures:
            raise ConfigError("adjcos is defined for the item axis only; drop it or the user method")
        if not 0 <= self.sparsify_fraction < 1:
            raise ConfigError("sparsify_fraction must be in [0, 1)")
        if self.setup == 1 and not self.groups:
            raise ConfigError("setup 1 needs at least one group")
        if self.katz_beta != "auto" and float(self.katz_beta) <= 0:
            raise ConfigError("katz_beta must be 'auto' or positive")
        return self

    def echo(self) -> dict:
        """Config as plain JSON-ready values (output location excluded)."""
        d = asdict(self)
        d.pop("out")
        d.pop("cache_dir")
        d["groups"] = [group_text(lo, hi) for lo, hi in self.groups]
        return json.loads(json.dumps(d))


def group_text(lo, hi):
    return f"{lo}-" if math.isinf(hi) else f"{lo}-{hi}"


def _parse_groups(text):
    out = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        lo, _, hi = part.partition("-")
        out.append((int(lo), math.inf if hi.strip() in ("", "inf") else int(hi)))
    return tuple(out)


def _split_list(text):
    return tuple(p.strip() for p in text.replace(";", ",").split(",") if p.strip())


def _as_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "fields": _split_list,
    "rating_domain": lambda t: tuple(int(x) for x in t.replace(",", "-").split("-")),
    "groups": _parse_groups,
    "measures": _split_list,
    "methods": _split_list,
    "K_sweep": lambda t: tuple(int(x) for x in _split_list(t)),
    "katz_beta": lambda t: "auto" if t.strip() == "auto" else float(t),
    "clamp": _as_bool,
    "format": lambda t: t.strip() or None,
    "cache_dir": lambda t: t.strip() or None,
}
_KEYS = {f.name.lower(): f.name for f in fields(ExperimentConfig)}


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Relative ``dataset``, ``out`` and ``cache_dir`` paths resolve against
    ``base_dir`` when given.
    """
    cfg = ExperimentConfig()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {line_no}: expected 'key = value'")
        key = key.strip().lower().replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        name = _KEYS[key]
        value = value.strip()
        try:
            if name in _PARSERS:
                parsed = _PARSERS[name](value)
            else:
                default = getattr(ExperimentConfig, name, None)
                parsed = type(default)(value) if isinstance(default, (int, float)) else value
        except ValueError as e:
            raise ConfigError(f"line {line_no}: bad value for {name}: {e}") from None
        setattr(cfg, name, parsed)
    if base_dir is not None:
        for name in ("dataset", "out", "cache_dir"):
            v = getattr(cfg, name)
            if v and not Path(v).is_absolute():
                setattr(cfg, name, str(Path(base_dir) / v))
    if not cfg.dataset:
        raise ConfigError("missing required key 'dataset'")
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def load_dataset(cfg: ExperimentConfig) -> RatingMatrix:
    if not Path(cfg.dataset).exists():
        raise FileNotFoundError(f"dataset not found: {cfg.dataset}")
    return load_ratings(cfg.dataset, cfg.format, cfg.fields, cfg.rating_domain)


# --------------------------------------------------------------------------
# similarity provisioning

class SimilarityStore:
    """Memoized similarity matrices for one train matrix, optionally disk-backed."""

    def __init__(self, train: RatingMatrix, cfg: ExperimentConfig, cache: DiskCache | None = None):
        self.train = train
        self.cfg = cfg
        self.cache = cache
        self._mem = {}

    def traditional(self, measure, axis):
        key = (measure, axis)
        if key not in self._mem:
            s = self.cache.get_similarity(self.train.content_hash, measure, axis) if self.cache else None
            if s is None:
                log.info("computing %s on %s axis", measure, axis)
                s = simmod.compute(measure, self.train, axis)
                if self.cache:
                    self.cache.put_similarity(self.train.content_hash, s)
            self._mem[key] = s
        return self._mem[key]

    def network(self, axis):
        key = ("network", axis)
        if key not in self._mem:
            src = self.cfg.network_measure_user if axis == "user" else self.cfg.network_measure_item
            self._mem[key] = netmod.build_network(self.traditional(src, axis))
        return self._mem[key]

    def get(self, measure, axis) -> simmod.SimilarityMatrix:
        if measure not in netmod.STRUCTURAL:
            return self.traditional(measure, axis)
        key = (measure, axis)
        if key not in self._mem:
            g = self.network(axis)
            beta = self.cfg.katz_beta if measure == "net-katz" else None
            st = self.cache.get_structural(g.content_hash, measure, beta) if self.cache else None
            if st is None:
                log.info("computing %s on %s axis", measure, axis)
                st = netmod.structural(measure, g, beta if beta is not None else "auto")
                if self.cache:
                    self.cache.put_structural(g.content_hash, beta, st)
            self._mem[key] = st.to_similarity()
        return self._mem[key]


# --------------------------------------------------------------------------
# runs

def series_list(cfg: ExperimentConfig):
    """(series label, method, user measure, item measure) in deterministic order."""
    out = []
    for method in cfg.methods:
        if method == "user":
            out += [(f"{m}/user", "user", m, None) for m in cfg.measures]
        elif method == "item":
            out += [(f"{m}/item", "item", None, m) for m in cfg.measures]
        else:
            out.append((f"{cfg.hybrid_user_measure}/{method}", method,
                        cfg.hybrid_user_measure, cfg.hybrid_item_measure))
    return out


def run_group(m: RatingMatrix, lo, hi, cfg: ExperimentConfig, extra=None, cache=None):
    """Sample, hold out, predict every cell and evaluate; returns (reports, group info)."""
    group = group_by_count(m, cfg.axis, lo, hi)
    if not len(group):
        log.warning("group %s is empty; skipped", group.label)
        return [], {"label": group.label, "n_members": 0, "n_sampled": 0, "n_test": 0}
    split = holdout_split(m, group, cfg.sample_size, cfg.deletions, cfg.seed, cfg.min_remaining)
    train = split.train
    pairs = sorted(split.test)
    store = SimilarityStore(train, cfg, cache)
    is_user_axis = cfg.axis == "user"
    test_users = sorted({u for u, _ in pairs})
    test_items = sorted({i for _, i in pairs})
    reports = []
    base_echo = {"group": group.label, "seed": cfg.seed, "setup": cfg.setup,
                 "dataset_hash": m.content_hash, "K_I": cfg.K_I, **(extra or {})}
    for label, method, um, im in series_list(cfg):
        su = store.get(um, "user") if um else None
        si = store.get(im, "item") if im else None
        s_main = su if su is not None else si
        if s_main.axis == cfg.axis:
            anchors = split.selected
        else:
            anchors = test_items if is_user_axis else test_users
        undefined = count_undefined(s_main, anchors)
        ir_cache = {}
        for K in cfg.K_sweep:
            spec = PredictorSpec(method, um, im, K, cfg.K_I, cfg.fallback, cfg.clamp)
            predictor = Predictor(spec, train, su, si, ir_cache)
            preds = predictor.predict_many(pairs)
            echo = {**base_echo, "series": label, "method": method,
                    "measure": um if method != "item" else im, "K": K}
            reports.append(evaluate(preds, split.test, cfg.axis, cfg.threshold, cfg.list_size,
                                    cfg.bcri_t, undefined, echo))
    info = {"label": group.label, "n_members": len(group), "n_sampled": len(split.selected),
            "n_test": len(split.test)}
    return reports, info


def _cache(cfg):
    return DiskCache(cfg.cache_dir) if cfg.cache_dir else None


def run_setup1(cfg: ExperimentConfig, m: RatingMatrix | None = None, info=None):
    """Setup 1: per rating-count group, hold out and evaluate on the original data."""
    m = load_dataset(cfg) if m is None else m
    cache = _cache(cfg)
    reports = []
    for lo, hi in cfg.groups:
        r, gi = run_group(m, lo, hi, cfg, cache=cache)
        reports += r
        if info is not None:
            info.setdefault("groups", []).append(gi)
    return reports


def run_setup2(cfg: ExperimentConfig, m: RatingMatrix | None = None, info=None):
    """Setup 2: sparsify, then the hold-out protocol on the group ``[min_count, inf)``."""
    m = load_dataset(cfg) if m is None else m
    sparse = sparsify(m, cfg.sparsify_fraction, cfg.axis, cfg.seed)
    dims = {"n_users": sparse.n_users, "n_items": sparse.n_items, "n_ratings": sparse.nnz,
            "density": sparse.density}
    if info is not None:
        info["sparse"] = dims
    r, gi = run_group(sparse, cfg.min_count, math.inf, cfg, extra={"sparse_dims": dims},
                      cache=_cache(cfg))
    if info is not None:
        info.setdefault("groups", []).append(gi)
    return r


def emit_plot_data(reports, out_dir, metrics=METRIC_NAMES) -> list[Path]:
    """One CSV per (group, metric): rows are K, columns are series."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if not reports:
        for metric in metrics:
            path = out_dir / f"plot_{metric}.csv"
            path.write_text("K\n", encoding="utf-8")
            written.append(path)
        return written
    groups = {}
    for r in reports:
        groups.setdefault(r.config["group"], []).append(r)
    for group, reps in groups.items():
        series = list(dict.fromkeys(r.config["series"] for r in reps))
        ks = sorted({r.config["K"] for r in reps})
        table = {(r.config["series"], r.config["K"]): r.aggregate for r in reps}
        for metric in metrics:
            path = out_dir / f"plot_{group}_{metric}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["K", *series])
                for K in ks:
                    w.writerow([K] + [_fmt(table[(s, K)][metric]) if (s, K) in table else "NA"
                                      for s in series])
            written.append(path)
    return written


def _fmt(v):
    if isinstance(v, int):
        return v
    v = float(v)
    return "NA" if math.isnan(v) else repr(v)


SUMMARY_FIELDS = ("group", "series", "measure", "method", "K")
COUNT_FIELDS = ("undefined_similarity_count", "abstained_count", "f1_inapplicable_count",
                "bcri_lowered_count")


def write_outputs(reports, out_dir, m: RatingMatrix, cfg: ExperimentConfig, info=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*SUMMARY_FIELDS, "n_entities", *METRIC_NAMES, "f1_applicable", *COUNT_FIELDS])
        for r in reports:
            w.writerow([r.config[k] for k in SUMMARY_FIELDS] + [r.aggregate["n_entities"]]
                       + [_fmt(r.aggregate[k]) for k in (*METRIC_NAMES, "f1_applicable")]
                       + [getattr(r, k) for k in COUNT_FIELDS])
    ids = m.user_ids if cfg.axis == "user" else m.item_ids
    with open(out_dir / "reports.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "series", "K", "entity", *METRIC_NAMES])
        for r in reports:
            head = [r.config["group"], r.config["series"], r.config["K"]]
            for row in r.rows():
                label = row[0]
                if ids is not None and label != "ALL":
                    label = ids[label]
                w.writerow(head + [label] + [_fmt(v) for v in row[1:]])
    meta = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "dataset_hash": m.content_hash,
        "dataset": {"n_users": m.n_users, "n_items": m.n_items, "n_ratings": m.nnz,
                    "density": m.density},
        **(info or {}),
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    emit_plot_data(reports, out_dir)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[EvaluationReport]:
    m = load_dataset(cfg)
    info = {}
    if cfg.setup == 1:
        reports = run_setup1(cfg, m, info)
    else:
        reports = run_setup2(cfg, m, info)
    write_outputs(reports, out_dir or cfg.out, m, cfg, info)
    return reports


def nan_counts(m: RatingMatrix, axis="user", groups=((20, 25), (26, 99), (100, 149), (150, math.inf)),
               sample_size=150, deletions=15, seed=0, measure="pcc", min_remaining=5):
    """Undefined-similarity counts between sampled group members and every other entity.

    Similarities are computed on each group's train matrix, as in a run.
    """
    rows = []
    for lo, hi in groups:
        group = group_by_count(m, axis, lo, hi)
        if not len(group):
            rows.append({"group": group.label, "n_members": 0, "n_sampled": 0,
                         "undefined": 0, "undefined_per_entity": float("nan")})
            continue
        split = holdout_split(m, group, sample_size, deletions, seed, min_remaining)
        s = simmod.compute(measure, split.train, axis)
        n_undef = count_undefined(s, split.selected)
        n = len(split.selected)
        rows.append({"group": group.label, "n_members": len(group), "n_sampled": n,
                     "undefined": n_undef, "undefined_per_entity": n_undef / n if n else float("nan")})
    return rows
