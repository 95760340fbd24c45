"""Command line entry point: ``netcf run|sim|nan-count|predict``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from . import bench
from . import network as netmod
from . import similarity as simmod
from .cache import DiskCache
from .data import RatingDomainError, RatingFileError, load_ratings, read_pairs
from .predict import Predictor, PredictorSpec, write_predictions

log = logging.getLogger("netcf")


def _dataset_args(p):
    p.add_argument("--dataset", required=True, help="rating file (user,item,rating[,timestamp])")
    p.add_argument("--delimiter", default=None, help="tab, comma or '::' (sniffed when omitted)")
    p.add_argument("--rating-domain", default="1-5", help="inclusive range, e.g. 1-5")
    p.add_argument("--axis", default="user", choices=("user", "item"))


def _domain(text):
    lo, hi = text.split("-")
    return int(lo), int(hi)


def _load(args):
    return load_ratings(args.dataset, args.delimiter, rating_domain=_domain(args.rating_domain))


def _similarity(m, measure, axis, network_measure="pcc", cache=None):
    cfg = bench.ExperimentConfig(dataset="-", network_measure_user=network_measure,
                                 network_measure_item=network_measure)
    return bench.SimilarityStore(m, cfg, cache).get(measure, axis)


def cmd_run(args):
    cfg = bench.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.out
    reports = bench.run_experiment(cfg, out)
    log.info("wrote %d reports to %s", len(reports), out)
    print(json.dumps({"reports": len(reports), "out": str(out), "seed": cfg.seed}))
    return 0


def cmd_sim(args):
    m = _load(args)
    if args.measure not in bench.MEASURES:
        raise bench.ConfigError(f"unknown measure {args.measure!r}; registry: {', '.join(bench.MEASURES)}")
    cache = DiskCache(args.cache) if args.cache else None
    s = _similarity(m, args.measure, args.axis, args.network_measure, cache)
    ids = m.user_ids if args.axis == "user" else m.item_ids
    if args.out:
        s.to_csv(args.out, ids)
    if args.edges:
        src = _similarity(m, args.network_measure, args.axis, cache=cache)
        netmod.build_network(src).to_edge_csv(args.edges, ids)
    print(json.dumps({"measure": args.measure, "axis": args.axis, "n": s.n,
                      "undefined_pairs": s.n_undefined // 2, "dataset_hash": m.content_hash}))
    return 0


def cmd_nan_count(args):
    m = _load(args)
    groups = bench._parse_groups(args.groups)
    rows = bench.nan_counts(m, args.axis, groups, args.sample, args.deletions, args.seed,
                            args.measure)
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["group", "n_members", "n_sampled", "undefined", "undefined_per_entity", "seed"])
        for r in rows:
            per = r["undefined_per_entity"]
            w.writerow([r["group"], r["n_members"], r["n_sampled"], r["undefined"],
                        "NA" if math.isnan(per) else repr(per), args.seed])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_predict(args):
    m = _load(args)
    pairs = read_pairs(args.pairs, m)
    if args.method in ("user", "hb1", "hb2"):
        um = args.user_measure or ("net-jaccard" if args.method != "user" else "pcc")
    else:
        um = None
    im = args.item_measure or ("net-jaccard" if args.method != "item" else "pcc")
    if args.method == "user":
        im = None
    spec = PredictorSpec(args.method, um, im, args.K, args.K_I, args.fallback, not args.no_clamp)
    su = _similarity(m, um, "user") if um else None
    si = _similarity(m, im, "item") if im else None
    preds = Predictor(spec, m, su, si).predict_many(pairs)
    write_predictions(preds, args.out, m.user_ids, m.item_ids)
    print(json.dumps({"predictions": len(preds), "abstained": sum(p.abstained for p in preds)}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="netcf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sim", help="compute (and cache) a similarity matrix")
    _dataset_args(p)
    p.add_argument("--measure", required=True)
    p.add_argument("--network-measure", default="pcc", help="source of network edges")
    p.add_argument("--cache", default=None, help="cache directory")
    p.add_argument("--out", default=None, help="write i,j,score CSV")
    p.add_argument("--edges", default=None, help="write the network edge list CSV")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("nan-count", help="undefined-similarity counts per rating-count group")
    _dataset_args(p)
    p.add_argument("--groups", default="20-25,26-99,100-149,150-")
    p.add_argument("--sample", type=int, default=150)
    p.add_argument("--deletions", type=int, default=15)
    p.add_argument("--measure", default="pcc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_nan_count)

    p = sub.add_parser("predict", help="batch-predict (user,item) pairs")
    _dataset_args(p)
    p.add_argument("--pairs", required=True, help="CSV of user,item raw ids")
    p.add_argument("--method", default="hb1", choices=("user", "item", "hb1", "hb2"))
    p.add_argument("--user-measure", default=None)
    p.add_argument("--item-measure", default=None)
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--K-I", dest="K_I", type=int, default=10)
    p.add_argument("--fallback", default="mean", choices=("mean", "skip"))
    p.add_argument("--no-clamp", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (bench.ConfigError, simmod.UnsupportedMeasureError, RatingFileError,
            RatingDomainError, FileNotFoundError, ValueError) as e:
        print(f"netcf: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
