"""Acceptance criteria, one test (or group of tests) per criterion.

Each check records a PASS/FAIL line; the lines are printed as they happen and
again in the terminal summary (see conftest.py).
"""

import filecmp
import math
import subprocess
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp

import oracles as O
from netcf import bench
from netcf.data import RatingMatrix, write_ratings
from netcf.metrics import bcri, f1, mae, rmse
from netcf.network import (Network, build_network, common_neighbors, jaccard_network, katz,
                           katz_closed_form, katz_series, spectral_radius)
from netcf.predict import (Predictor, PredictorSpec, predict_hb1, predict_hb2, predict_item_based,
                           predict_user_based)
from netcf.similarity import (adjusted_cosine, cosine, cpcc, jaccard_corated, nhsm, pcc, pip)

from conftest import ROOT, random_dense

RESULTS = []


def record(name, ok, detail, capsys=None):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    return ok


def _close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


# --------------------------------------------------------------------------
# 1. oracle equivalence on 50 random 10x12 matrices

def _sim_mismatches(s, ref, tol=1e-12):
    bad = 0
    for (a, b), v in ref.items():
        if v is None:
            bad += bool(s.defined[a, b])
        else:
            bad += not (s.defined[a, b] and _close(s.values[a, b], v, tol))
    return bad


def _as_dict(s):
    return {(a, b): (float(s.values[a, b]) if s.defined[a, b] else None)
            for a in range(s.n) for b in range(s.n) if a != b}


def _oracle_adjacency(ref, n):
    # exact-zero PCC is no edge; the naive float formula may leave ~1e-17 residue
    A = [[0.0] * n for _ in range(n)]
    for (a, b), v in ref.items():
        if v is not None and abs(v) > 1e-12:
            A[a][b] = v
    return A


def _check_matrix(seed):
    rng = np.random.default_rng(seed)
    density = rng.uniform(0.3, 0.8)
    dense = random_dense(rng, 10, 12, density)
    m = RatingMatrix.from_dense(dense)
    bad = {}

    def count(key, n):
        bad[key] = bad.get(key, 0) + n

    users = O.as_dicts(dense, "user")
    gm = m.global_mean
    for axis in ("user", "item"):
        vecs = O.as_dicts(dense, axis)
        other = "item" if axis == "user" else "user"
        mu_other = O.means(O.as_dicts(dense, other), gm)
        ref_pcc = O.naive_pcc(vecs)
        count("pcc", _sim_mismatches(pcc(m, axis), ref_pcc))
        count("cosine", _sim_mismatches(cosine(m, axis), O.naive_cosine(vecs)))
        count("cpcc", _sim_mismatches(cpcc(m, axis), O.naive_cpcc(vecs, 3.0)))
        count("jaccard-corated", _sim_mismatches(jaccard_corated(m, axis), O.naive_jaccard_corated(vecs)))
        count("pip", _sim_mismatches(pip(m, axis), O.naive_pip(vecs, mu_other, 1, 5)))
        count("nhsm", _sim_mismatches(nhsm(m, axis), O.naive_nhsm(vecs, mu_other, 3.0)))
        if axis == "item":
            count("adjcos", _sim_mismatches(adjusted_cosine(m), O.naive_adjcos(vecs, O.means(users, gm))))

        # structural indices on the PCC network
        n = len(vecs)
        A = _oracle_adjacency(ref_pcc, n)
        g = build_network(pcc(m, axis))
        count("network", int(not np.allclose(g.adjacency.toarray(), A, rtol=0, atol=1e-12)))
        count("net-cn", int(not np.array_equal(common_neighbors(g).scores, O.naive_cn(A))))
        count("net-jaccard", int(not np.allclose(jaccard_network(g).scores, O.naive_network_jaccard(A),
                                                  rtol=0, atol=1e-12)))
        An = np.array(A)
        if np.any(An):
            lam = np.abs(np.linalg.eigvalsh(An)).max()
            beta = 0.85 / lam
            direct = np.linalg.inv(np.eye(n) - beta * An) - np.eye(n)
            kz = katz(g)
            off = ~np.eye(n, dtype=bool)
            ok = (_close(kz.beta, beta, 1e-8)
                  and np.abs(kz.scores[off] - direct[off]).max() <= 1e-8
                  and np.abs(katz_series(An, beta) - direct).max() <= 1e-8)
            count("net-katz", int(not ok))

    # predictors on every (u, i), unclamped
    su = jaccard_network(build_network(pcc(m, "user"))).to_similarity()
    si = jaccard_network(build_network(pcc(m, "item"))).to_similarity()
    s_pcc = pcc(m, "user")
    d_su, d_si, d_pcc = _as_dict(su), _as_dict(si), _as_dict(s_pcc)
    for K in (2, 5):
        for u in range(10):
            for i in range(12):
                ref, _ = O.naive_user_based(users, d_pcc, u, i, K, gm)
                count("user", not _close(predict_user_based(m, s_pcc, u, i, K, clamp=False).value, ref, 1e-12))
                ref, _ = O.naive_item_based(users, d_si, u, i, K, gm, 12)
                count("item", not _close(predict_item_based(m, si, u, i, K, clamp=False).value, ref, 1e-12))
                ref = O.naive_hb1(users, d_su, d_si, u, i, K, 3, gm, 12)
                count("hb1", not _close(predict_hb1(m, su, si, u, i, K, 3, clamp=False).value, ref, 1e-12))
                ref = O.naive_hb2(users, d_su, d_si, u, i, K, 3, gm, 12)
                count("hb2", not _close(predict_hb2(m, su, si, u, i, K, 3, clamp=False).value, ref, 1e-12))

    # metrics on random per-user test sets
    for u in range(10):
        items = rng.choice(12, size=int(rng.integers(1, 12)), replace=False).tolist()
        actual = {i: int(rng.integers(1, 6)) for i in items}
        pred = {i: (None if rng.random() < 0.1 else float(rng.uniform(1, 5))) for i in items}
        err = [pred[i] - actual[i] for i in items if pred[i] is not None]
        if err:
            count("rmse", not _close(rmse(err), O.naive_rmse(err), 1e-12))
            count("mae", not _close(mae(err), O.naive_mae(err), 1e-12))
        got = f1(pred, actual, 4, 10)
        count("f1", not all(_close(a, b, 1e-12) for a, b in zip(got[:3], O.naive_f1(pred, actual, 4, 10))))
        count("bcri", bcri(pred, actual, 5) != O.naive_bcri(pred, actual, 5))
    return bad


def test_c1_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    totals = {}
    for seed in range(50):
        for k, v in _check_matrix(seed).items():
            totals[k] = totals.get(k, 0) + int(v)
    elapsed = time.perf_counter() - t0
    failing = {k: v for k, v in totals.items() if v}
    ok = not failing and elapsed < 60
    detail = (f"{len(totals)} checks (7 measures, network, CN, Jaccard, Katz, 4 predictors, 4 metrics) "
              f"x 50 matrices, mismatches={failing or 0}, {elapsed:.1f}s (< 60s)")
    assert record("C1 oracle equivalence (1e-12; Katz 1e-8)", ok, detail, capsys), detail


# --------------------------------------------------------------------------
# 2. Katz closed form on random graphs up to n = 200

def test_c2_katz_closed_form(capsys):
    rng = np.random.default_rng(2024)
    worst = 0.0
    cases = 0
    for n in (2, 10, 25, 50, 100, 150, 200):
        for p in (0.02, 0.1, 0.3):
            for signed in (False, True):
                up = np.triu(rng.random((n, n)) < p, 1)
                w = rng.uniform(-1, 1, (n, n)) if signed else np.ones((n, n))
                W = np.where(up, w, 0.0)
                W = W + W.T
                g = Network("user", sp.csr_matrix(W))
                if g.n_edges == 0:
                    continue
                kz = katz(g)
                assert kz.beta == pytest.approx(0.85 / spectral_radius(g), rel=1e-12)
                closed = np.linalg.inv(np.eye(n) - kz.beta * W) - np.eye(n)
                raw = katz_series(W, kz.beta)
                off = ~np.eye(n, dtype=bool)
                worst = max(worst, np.abs(raw - closed).max(), np.abs(kz.scores[off] - closed[off]).max(),
                            np.abs(katz_closed_form(g, kz.beta) - closed).max())
                cases += 1
    ok = worst <= 1e-8
    detail = f"{cases} graphs n<=200, beta=0.85/lambda1, max-norm error {worst:.2e} (<= 1e-8)"
    assert record("C2 Katz truncated series vs (I-bA)^-1 - I", ok, detail, capsys), detail


# --------------------------------------------------------------------------
# 3. HB1 first branch equals user-based bitwise

def test_c3_hb1_branch_equality(capsys):
    from test_bench import synthetic
    m = synthetic(7, 30, 20, 0.5)
    su = jaccard_network(build_network(pcc(m, "user"))).to_similarity()
    si = jaccard_network(build_network(pcc(m, "item"))).to_similarity()
    checked = other_branch = mismatches = 0
    for K in range(1, 31):
        pr = Predictor(PredictorSpec("hb1", "net-jaccard", "net-jaccard", K, 10), m, su, si)
        for u in range(m.n_users):
            for i in range(m.n_items):
                raters = m.raters_of(i)
                n_u = int((raters != u).sum())
                if n_u < K:
                    other_branch += 1
                    continue
                ub = predict_user_based(m, su, u, i, K)
                for hb in (predict_hb1(m, su, si, u, i, K), pr.predict(u, i)):
                    same = (hb == ub and np.float64(hb.value).tobytes() == np.float64(ub.value).tobytes())
                    mismatches += not same
                checked += 1
    ok = mismatches == 0 and checked > 0
    detail = (f"{checked} (u,i,K) cases with N_u >= K on a 30x20 matrix, K=1..30, "
              f"{mismatches} not bitwise equal ({other_branch} cases took the IR branch)")
    assert record("C3 HB1 == user-based when N_u >= K", ok, detail, capsys), detail


# --------------------------------------------------------------------------
# 4. undefined-PCC ordering on MovieLens 100k

@pytest.mark.movielens
def test_c4_nan_ordering(ml100k, capsys):
    rows = bench.nan_counts(ml100k, "user", ((20, 25), (26, 99), (100, 149), (150, math.inf)),
                            150, 15, 0, "pcc")
    per = {r["group"]: r["undefined_per_entity"] for r in rows}
    ok = per["U20-25"] > per["UGE150"]
    detail = ", ".join(f"{r['group']}: {r['undefined']} over {r['n_sampled']} users "
                       f"({r['undefined_per_entity']:.1f}/user)" for r in rows)
    assert record("C4 undefined PCC: U20-25 > UGE150 per sampled user", ok, detail, capsys), detail


# --------------------------------------------------------------------------
# 5. trends on the 75%-sparsified MovieLens 100k

@pytest.fixture(scope="module")
def setup2_run(ml100k, tmp_path_factory):
    cfg = bench.load_config(ROOT / "configs" / "ml100k_setup2.cfg")
    t0 = time.perf_counter()
    info = {}
    reports = bench.run_setup2(cfg, ml100k, info)
    elapsed = time.perf_counter() - t0
    table = {(r.config["series"], r.config["K"]): r.aggregate for r in reports}
    return cfg, table, elapsed, info


def _fmt_series(table, series, metric, ks):
    return "/".join(f"{table[(series, K)][metric]:.4f}" for K in ks)


@pytest.mark.movielens
def test_c5a_structural_beats_pcc(setup2_run, capsys):
    cfg, table, elapsed, info = setup2_run
    structural = ["net-cn/user", "net-jaccard/user", "net-katz/user"]
    ks = (50, 100, 150)
    fails = [(s, K, metric) for s in structural for K in ks for metric in ("rmse", "mae")
             if not table[(s, K)][metric] < table[("pcc/user", K)][metric]]
    ok = not fails
    detail = (f"K=50/100/150 MAE pcc {_fmt_series(table, 'pcc/user', 'mae', ks)}; "
              + "; ".join(f"{s} {_fmt_series(table, s, 'mae', ks)}" for s in structural)
              + f"; RMSE pcc {_fmt_series(table, 'pcc/user', 'rmse', ks)}; "
              + "; ".join(f"{s} {_fmt_series(table, s, 'rmse', ks)}" for s in structural)
              + f"; violations={fails or 0}")
    assert record("C5a structural CF < PCC CF in RMSE and MAE", ok, detail, capsys), detail


@pytest.mark.movielens
def test_c5b_hb1_lowest_mae(setup2_run, capsys):
    cfg, table, elapsed, info = setup2_run
    at150 = {s: a["mae"] for (s, K), a in table.items() if K == 150}
    best = min(at150, key=at150.get)
    hb1 = at150["net-jaccard/hb1"]
    lowest = all(hb1 < v for s, v in at150.items() if s != "net-jaccard/hb1")
    in_band = 0.75 <= hb1 <= 0.90
    ok = lowest and in_band
    detail = (f"K=150 MAE: " + ", ".join(f"{s} {v:.4f}" for s, v in sorted(at150.items(), key=lambda x: x[1]))
              + f"; lowest={best}; HB1 {hb1:.4f} in [0.75, 0.90]: {in_band}")
    assert record("C5b HB1 lowest MAE at K=150, MAE in [0.75, 0.90]", ok, detail, capsys), detail


@pytest.mark.movielens
def test_c5c_hybrid_monotone_in_k(setup2_run, capsys):
    cfg, table, elapsed, info = setup2_run
    ks = cfg.K_sweep
    parts, ok = [], True
    for s in ("net-jaccard/hb1", "net-jaccard/hb2"):
        for metric, sign in (("rmse", -1), ("mae", -1), ("bcri", 1)):
            vals = [table[(s, K)][metric] for K in ks]
            good = all(sign * (b - a) >= 0 for a, b in zip(vals, vals[1:]))
            ok &= good
            parts.append(f"{s} {metric} {'ok' if good else 'VIOLATED'} "
                         f"[{', '.join(f'{v:.4f}' for v in vals)}]")
    detail = f"K={list(ks)}; " + "; ".join(parts) + f"; run {elapsed:.0f}s (< 1800s)"
    ok &= elapsed < 1800
    assert record("C5c hybrids: RMSE/MAE non-increasing, BCRI non-decreasing in K", ok, detail, capsys), detail


# --------------------------------------------------------------------------
# 6. metric properties

def test_c6_metric_properties(capsys):
    rng = np.random.default_rng(6)
    ge = all(rmse(e) >= mae(e) for e in (rng.normal(size=int(rng.integers(1, 50))) * rng.uniform(0.1, 5)
                                         for _ in range(1000)))
    f1_range = True
    eq_t = rev_0 = True
    for _ in range(300):
        n = int(rng.integers(1, 30))
        actual = {k: int(v) for k, v in enumerate(rng.integers(1, 6, n))}
        pred = {k: float(v) for k, v in enumerate(rng.uniform(0, 6, n))}
        r = f1(pred, actual, 4, int(rng.integers(1, 15)))
        f1_range &= all(0 <= x <= 1 for x in r[:3])
        t = int(rng.integers(1, 10))
        # stated for rankings: with distinct actual values, predicted = actual gives t
        distinct = {k: float(v) for k, v in enumerate(rng.permutation(n) + 1)}
        eq_t &= bcri(dict(distinct), distinct, t) == min(t, n)
        if n >= 2 * t:
            rev = {k: -v for k, v in distinct.items()}
            rev_0 &= bcri(rev, distinct, t) == 0
    # the stated example: 15 distinct values reversed, t = 5
    actual = {k: 15 - k for k in range(15)}
    rev_0 &= bcri({k: float(k) for k in range(15)}, actual, 5) == 0
    eq_t &= bcri({k: float(v) for k, v in actual.items()}, actual, 5) == 5
    ok = ge and f1_range and eq_t and rev_0
    detail = (f"rmse>=mae on 1000 vectors: {ge}; F1 in [0,1]: {f1_range}; "
              f"BCRI=t on identical ranking: {eq_t}; BCRI=0 on reversed: {rev_0}")
    assert record("C6 metric properties", ok, detail, capsys), detail


# --------------------------------------------------------------------------
# 7. determinism of `netcf run`

def test_c7_determinism(tmp_path, capsys):
    from test_bench import synthetic
    write_ratings(synthetic(11, 60, 40, 0.5), tmp_path / "ratings.csv")
    cfgs = {
        "setup1.cfg": "dataset = ratings.csv\nsetup = 1\ngroups = 10-19, 20-\nsample_size = 12\n"
                      "deletions = 4\nK_sweep = 5, 10, 25\nseed = 3\n",
        "setup2.cfg": "dataset = ratings.csv\nsetup = 2\nsparsify_fraction = 0.5\nsample_size = 15\n"
                      "deletions = 3\nK_sweep = 5, 10\nseed = 3\n",
    }
    compared, differing = 0, []
    for name, text in cfgs.items():
        (tmp_path / name).write_text(text)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}.{run}"
            r = subprocess.run([sys.executable, "-m", "netcf.cli", "run", "--config", str(tmp_path / name),
                                "--out", str(out)], capture_output=True, text=True)
            assert r.returncode == 0, r.stderr
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir())
        assert files == sorted(p.name for p in outs[1].iterdir())
        for f in files:
            compared += 1
            if not filecmp.cmp(outs[0] / f, outs[1] / f, shallow=False):
                differing.append(f"{name}:{f}")
    ok = compared > 0 and not differing
    detail = f"{compared} output files from 2x2 runs compared byte-for-byte, differing={differing or 0}"
    assert record("C7 identical config + seed -> byte-identical outputs", ok, detail, capsys), detail
