"""Acceptance suite: one group of tests per numbered criterion.

The terminal summary (see conftest.py) prints a PASS/FAIL/SKIP line per
criterion. Full-scale criteria 6 and 7 need the public Gowalla and
Amazon-book files (LightGCN layout: <dir>/train.txt and <dir>/test.txt) under
the directory named by ``LOWPASS_CF_DATA``; without it they skip.
"""

import dataclasses
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from lowpass_cf.errors import EmptyEvaluationError
from lowpass_cf.filters import FilterSpec, fit_response, predefined_filter
from lowpass_cf.graph import SimilarityGraph, build_graph
from lowpass_cf.interactions import (
    SplitSpec,
    checksum,
    from_pairs,
    load_interactions,
    serialize_interactions,
    split_holdout,
    write_split,
)
from lowpass_cf.metrics import evaluate, ndcg_at_k, per_user_metrics, recall_at_k
from lowpass_cf.oracle import eigendecompose, laplacian, spectral_filter_matrix
from lowpass_cf.pipeline import RunConfig, load_dataset, run, sweep
from lowpass_cf.recommend import RankedList, filter_matrix, score_users, top_k
from lowpass_cf.synthetic import planted_clusters

from .conftest import random_interactions, random_psd

BUILTIN = ("linear", "second_order", "ideal_approx")


def h_of(coeffs):
    """Spectral response sum_k a_k (1 - lam)^k written out term by term."""
    return lambda lam: sum(a * (1.0 - lam) ** (k + 1) for k, a in enumerate(coeffs))


def identity_signals(n):
    ids = [str(i) for i in range(n)]
    return from_pairs(range(n), range(n), ids, ids)


# ---------------------------------------------------------------- criterion 1


@pytest.mark.criterion_1
def test_matrix_polynomial_equals_spectral_construction():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 65))
        P = random_psd(rng, n, scale=float(rng.uniform(0.1, 1.5)))
        G = SimilarityGraph(P, 0.5, 1.0)
        D = eigendecompose(laplacian(P))
        filters = [predefined_filter(kind) for kind in BUILTIN]
        filters += [FilterSpec(rng.normal(0, 2, size=int(rng.integers(1, 6)))) for _ in range(20)]
        E = identity_signals(n)
        for f in filters:
            want = spectral_filter_matrix(D, h_of(f.effective_coeffs))
            worst = max(worst, np.abs(filter_matrix(G, f) - want).max())
            worst = max(worst, np.abs(score_users(E, G, f) - want).max())
    elapsed = time.perf_counter() - start
    print(f"max abs error {worst:.3e}, {elapsed:.2f} s")
    assert worst <= 1e-8
    assert elapsed < 10.0


# ---------------------------------------------------------------- criterion 2


@pytest.mark.criterion_2
def test_horner_scoring_equals_explicit_filter_matrix():
    rng = np.random.default_rng(2)
    worst = 0.0
    for trial in range(100):
        n_items = int(rng.integers(2, 65))
        R = random_interactions(rng, int(rng.integers(1, 80)), n_items, float(rng.uniform(0.05, 0.5)))
        G = build_graph(R, float(rng.uniform(0, 1)), float(rng.uniform(0.3, 1.5)))
        if trial < 3 * len(BUILTIN):
            f = predefined_filter(BUILTIN[trial % 3], beta=float(rng.uniform(0, 1)))
        else:
            f = FilterSpec(rng.normal(0, 2, size=int(rng.integers(1, 5))))
        horner = score_users(R, G, f)
        explicit = R.csr.toarray() @ filter_matrix(G, f)
        scale = np.abs(explicit).max()
        if scale == 0.0:
            assert not horner.any()
            continue
        worst = max(worst, np.abs(horner - explicit).max() / scale)
    print(f"max relative error {worst:.3e}")
    assert worst <= 1e-12


# ---------------------------------------------------------------- criterion 3


def brute_recall(ranking, relevant, k):
    hits = 0
    for position in range(min(k, len(ranking))):
        if ranking[position] in relevant:
            hits += 1
    return hits / len(relevant)


def brute_ndcg(ranking, relevant, k):
    gains = [1.0 / math.log2(pos + 1) for pos in range(1, min(k, len(ranking)) + 1) if ranking[pos - 1] in relevant]
    ideal = [1.0 / math.log2(pos + 1) for pos in range(1, min(k, len(relevant)) + 1)]
    return math.fsum(gains) / math.fsum(ideal)


def random_case(rng):
    n_items = int(rng.integers(1, 60))
    scores = rng.integers(0, int(rng.integers(1, 6)), size=n_items).astype(float)  # tie-heavy
    seen = set(rng.choice(n_items, size=int(rng.integers(0, n_items)), replace=False).tolist())
    k = int(rng.integers(1, 30))
    relevant = set(rng.choice(n_items, size=int(rng.integers(1, n_items + 1)), replace=False).tolist()) - seen
    return scores, seen, k, relevant


@pytest.mark.criterion_3
def test_metrics_match_definitional_evaluator():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 1000:
        scores, seen, k, relevant = random_case(rng)
        if not relevant:
            continue
        ranked = top_k(scores, seen, k)
        # the definitional ranking: unseen items by descending score, ties to the lower index
        ranking = sorted((i for i in range(len(scores)) if i not in seen), key=lambda i: (-scores[i], i))[:k]
        assert list(ranked.items) == ranking
        assert recall_at_k(ranked, relevant, k) == brute_recall(ranking, relevant, k)
        assert ndcg_at_k(ranked, relevant, k) == brute_ndcg(ranking, relevant, k)
        checked += 1


@pytest.mark.criterion_3
def test_batched_evaluation_matches_definitional_evaluator():
    rng = np.random.default_rng(33)
    for _ in range(20):
        n_users, n_items, k = int(rng.integers(1, 60)), int(rng.integers(1, 50)), int(rng.integers(1, 25))
        held = random_interactions(rng, n_users, n_items, float(rng.uniform(0.02, 0.4)))
        lists = []
        for u in range(n_users):
            width = int(rng.integers(0, min(k, n_items) + 1))
            lists.append(RankedList(u, tuple(rng.permutation(n_items)[:width].tolist())))
        per_user = [
            (brute_recall(list(r.items), set(held.row(r.user_index).tolist()), k),
             brute_ndcg(list(r.items), set(held.row(r.user_index).tolist()), k))
            for r in lists
            if held.row(r.user_index).size
        ]
        if not per_user:
            with pytest.raises(EmptyEvaluationError):
                evaluate(lists, held, k)
            continue
        report = evaluate(lists, held, k)
        assert report.n_evaluated_users == len(per_user)
        assert report.recall == math.fsum(r for r, _ in per_user) / len(per_user)
        assert report.ndcg == math.fsum(n for _, n in per_user) / len(per_user)


@pytest.mark.criterion_3
def test_metric_boundary_cases():
    # perfect ranking
    assert recall_at_k([4, 2, 9], {2, 4, 9}, 3) == 1.0
    assert ndcg_at_k([4, 2, 9], {2, 4, 9}, 3) == 1.0
    assert ndcg_at_k([4, 2], {2, 4, 9, 11}, 2) == 1.0  # ideal truncated at k
    # empty inputs
    assert recall_at_k([], {1}, 5) == 0.0 and ndcg_at_k([], {1}, 5) == 0.0
    with pytest.raises(EmptyEvaluationError):
        recall_at_k([1, 2], set(), 2)
    with pytest.raises(EmptyEvaluationError):
        ndcg_at_k([1, 2], set(), 2)
    # every score tied: the ranking falls back to ascending index
    ranked = top_k(np.ones(10), {0, 3}, 4)
    assert ranked.items == (1, 2, 4, 5)
    assert recall_at_k(ranked, {5, 6}, 4) == 0.5
    assert ndcg_at_k(ranked, {5, 6}, 4) == brute_ndcg([1, 2, 4, 5], {5, 6}, 4)
    # padded vectorized rows agree with the scalar definitions bit for bit
    held = from_pairs([0, 0], [5, 6], ["u"], [str(i) for i in range(10)])
    rec, ndcg, ok = per_user_metrics(np.array([[1, 2, 4, 5, -1, -1]]), held.csr, 6)
    assert ok[0] and rec[0] == 0.5 and ndcg[0] == brute_ndcg([1, 2, 4, 5], {5, 6}, 6)


# ---------------------------------------------------------------- criterion 4


@pytest.mark.criterion_4
@pytest.mark.parametrize(
    "target, order, expected",
    [(lambda lam: 1.0 - lam, 1, [1.0]), (lambda lam: 1.0 - lam**2, 2, [2.0, -1.0])],
    ids=["linear", "second_order"],
)
@pytest.mark.parametrize("method", ["linear", "nonlinear"])
def test_fit_recovers_exact_polynomials(target, order, expected, method):
    fit = fit_response(target, order, method=method)
    np.testing.assert_allclose(fit.coeffs, expected, atol=1e-10)
    assert fit.rms <= 1e-10


# ---------------------------------------------------------------- criterion 5


def check_partition(R, spec):
    train, test, val = split_holdout(R, spec)
    for u in range(R.n_users):
        full = R.row(u)
        parts = [train.row(u), test.row(u), val.row(u)]
        merged = np.concatenate(parts)
        assert merged.size == full.size and np.array_equal(np.sort(merged), full)  # disjoint union
        n = full.size
        assert parts[1].size == math.floor(spec.test_frac * n + 1e-9)
        assert parts[2].size == math.floor(spec.val_frac * n + 1e-9)
    return train, test, val


FRACTIONS = [(0.7, 0.2, 0.1), (0.8, 0.2, 0.0), (0.5, 0.25, 0.25), (0.34, 0.33, 0.33), (1.0, 0.0, 0.0), (0.0, 0.5, 0.5)]


@pytest.mark.criterion_5
@pytest.mark.parametrize("fractions", FRACTIONS, ids=lambda f: "-".join(map(str, f)))
def test_split_partition_and_floor_rule(fractions):
    rng = np.random.default_rng(5)
    datasets = [random_interactions(rng, 40, 30, d) for d in (0.02, 0.1, 0.5, 1.0)]
    datasets.append(planted_clusters(300, 500, 0.01, seed=5))
    for R in datasets:
        for seed in (0, 1, 2**63):
            check_partition(R, SplitSpec(*fractions, seed))


def split_checksums(R, seed, directory):
    files = write_split(directory, R, SplitSpec(0.7, 0.2, 0.1, seed), checksum(serialize_interactions(R)))
    return {name: checksum(Path(path).read_bytes()) for name, path in files.items()}


@pytest.mark.criterion_5
def test_split_checksums_depend_only_on_seed(tmp_path):
    R = planted_clusters(300, 500, 0.01, seed=7)
    a = split_checksums(R, 42, tmp_path / "a")
    b = split_checksums(R, 42, tmp_path / "b")
    c = split_checksums(R, 43, tmp_path / "c")
    assert a == b
    assert a["test"] != c["test"]


# ---------------------------------------------------------------- criteria 6 and 7

DATA_ROOT = os.environ.get("LOWPASS_CF_DATA")
needs_data = pytest.mark.skipif(
    not DATA_ROOT, reason="set LOWPASS_CF_DATA to a directory with gowalla/ and amazon-book/ train.txt + test.txt"
)


def lightgcn_split(name, val_seed=2024):
    """(train, test) from the public files, sharing one index space, plus a validation carve-out of train."""
    directory = Path(DATA_ROOT) / name
    if not (directory / "train.txt").exists():
        pytest.skip(f"{directory} has no train.txt")
    paths = [directory / "train.txt", directory / "test.txt"]
    both = load_interactions(paths)
    train = load_interactions(paths[0], user_ids=both.user_ids, item_ids=both.item_ids)
    test = load_interactions(paths[1], user_ids=both.user_ids, item_ids=both.item_ids)
    fit, _, val = split_holdout(train, SplitSpec(0.9, 0.0, 0.1, val_seed))
    return train, test, fit, val


def full_scale_config(n_items, tmp_path, **kw):
    blocked = n_items > 20_000
    return RunConfig(
        storage="blocked" if blocked else "dense",
        spill=str(tmp_path / "graph.bin") if blocked else None,
        threads=os.cpu_count() or 1,
        **kw,
    )


@pytest.fixture(scope="module")
def gowalla():
    return lightgcn_split("gowalla") if DATA_ROOT else None


@needs_data
@pytest.mark.criterion_6
@pytest.mark.fullscale
def test_gowalla_validation_selected_filter(gowalla, tmp_path):
    train, test, fit, val = gowalla
    config = full_scale_config(
        train.n_items, tmp_path, alpha=0.7, s=0.6, kinds=BUILTIN, betas=(0.1, 0.3, 0.5, 1.0), dump=False
    )
    _, best, _ = sweep(config, data=(fit, test, val, 0.0))
    winner = dataclasses.replace(config, kind=best["kind"], beta=best["beta"] if best["beta"] is not None else config.beta)
    report = run(winner, data=(train, test, val, 0.0))
    print(f"gowalla best={best} recall={report.recall:.4f} ndcg={report.ndcg:.4f}")
    assert abs(report.recall - 0.1835) <= 0.005
    assert abs(report.ndcg - 0.1531) <= 0.005


@needs_data
@pytest.mark.criterion_6
@pytest.mark.fullscale
def test_gowalla_linear_filter(gowalla, tmp_path):
    train, test, _, val = gowalla
    report = run(full_scale_config(train.n_items, tmp_path, alpha=0.7, s=0.6), data=(train, test, val, 0.0))
    print(f"gowalla linear recall={report.recall:.4f}")
    assert abs(report.recall - 0.1823) <= 0.005


@needs_data
@pytest.mark.criterion_6
@pytest.mark.fullscale
def test_amazon_book_linear_blocked(tmp_path):
    train, test, _, val = lightgcn_split("amazon-book")
    config = RunConfig(
        alpha=0.7, s=0.6, storage="blocked", spill=str(tmp_path / "graph.bin"), threads=os.cpu_count() or 1
    )
    report = run(config, data=(train, test, val, 0.0))
    print(f"amazon-book linear recall={report.recall:.4f}")
    assert abs(report.recall - 0.0730) <= 0.005


@needs_data
@pytest.mark.criterion_7
@pytest.mark.fullscale
def test_gowalla_sensitivity_shape(gowalla, tmp_path):
    train, test, _, val = gowalla

    def recall(alpha, s):
        config = full_scale_config(train.n_items, tmp_path, alpha=alpha, s=s)
        return run(config, data=(train, test, val, 0.0)).recall

    assert recall(0.7, 0.6) > recall(0.5, 0.6)
    assert recall(0.7, 0.6) > recall(0.7, 1.0)


# ---------------------------------------------------------------- criterion 8

DESK = RunConfig(synthetic="2000x3000", seed=8, alpha=0.7, s=0.6, kind="linear", k=20, threads=1)


def uniform_random_recall(train, test, k, seed):
    rng = np.random.default_rng(seed)
    lists = []
    for u in range(train.n_users):
        candidates = np.setdiff1d(np.arange(train.n_items), train.row(u))
        lists.append(RankedList(u, tuple(rng.permutation(candidates)[:k].tolist())))
    return evaluate(lists, test, k).recall


@pytest.mark.criterion_8
def test_desk_scale_pipeline():
    R = planted_clusters(2000, 3000, 0.005, seed=DESK.seed)
    assert R.n_interactions == 30_000
    start = time.perf_counter()
    report = run(DESK)
    elapsed = time.perf_counter() - start
    train, test, _, _ = load_dataset(DESK)
    baseline = uniform_random_recall(train, test, DESK.k, seed=8)
    print(f"pipeline {elapsed:.3f} s, recall@20 {report.recall:.4f}, random {baseline:.4f}")
    assert elapsed < 2.0
    assert report.recall >= 5 * baseline


# ---------------------------------------------------------------- criterion 9


@pytest.mark.criterion_9
def test_rerun_reports_are_byte_identical(tmp_path):
    reports = [run(DESK).to_json(timings=False).encode() for _ in range(2)]
    assert reports[0] == reports[1]
    R = planted_clusters(2000, 3000, 0.005, seed=DESK.seed)
    assert split_checksums(R, DESK.seed, tmp_path / "a") == split_checksums(R, DESK.seed, tmp_path / "b")
    for fractions in FRACTIONS:
        spec = SplitSpec(*fractions, 99)
        first = [serialize_interactions(x) for x in split_holdout(R, spec)]
        again = [serialize_interactions(x) for x in split_holdout(R, spec)]
        assert first == again
