"""Exit criteria for the package, one test per criterion.

Tolerances are pinned here and nowhere else.  Criteria 7 and 8 drive the
installed CLI end to end on synthetic data.
"""

import json
import time

import numpy as np
import pytest

from chartpeak import cli
from chartpeak.charts import write_tracks_csv
from chartpeak.dataset import apply_preprocess, fit_preprocess, stratified_holdout, stratified_kfold
from chartpeak.enrich import (
    ClientConfig,
    EnrichmentClient,
    FixtureTransport,
    SimulatedClock,
    TransportResponse,
    build_batch_request,
    write_features_csv,
)
from chartpeak.errors import RetriesExhaustedError
from chartpeak.evaluation import metrics
from chartpeak.learners import (
    GradientBoostedTrees,
    NearestNeighbors,
    RandomForest,
    SoftmaxRegression,
    load_model,
    save_model,
)
from chartpeak.learners.boosting import softmax_gradients
from chartpeak.learners.logistic import softmax_gradient, softmax_loss
from chartpeak.synthetic import make_tracks

CART_INSTANCES = 200
CART_SECONDS = 10.0
GRAD_INSTANCES, GRAD_STEP, GRAD_RTOL = 50, 1e-5, 1e-5
LEAF_TOL = 1e-10
GBT_INSTANCES, GBT_ROUNDS = 20, 50
METRIC_INSTANCES, METRIC_TOL = 100, 1e-12
SPLIT_INSTANCES = 100
PACING_REQUESTS = 20
E2E_SECONDS = 60.0
PREP_TOL = 1e-9
ROUND_TRIP_ROWS = 1000

# configurations used for the synthetic end-to-end run
E2E_PARAMS = [
    "--param", "rf.n_estimators=100",
    "--param", "gbt.n_rounds=60", "--param", "gbt.max_depth=4", "--param", "gbt.learning_rate=0.3",
]


# -- 1 -----------------------------------------------------------------------

def _oracle_gini(labels, k):
    if len(labels) == 0:
        return 0.0
    p = np.bincount(labels, minlength=k) / len(labels)
    return 1.0 - float((p ** 2).sum())


def _oracle_tree(X, y, k):
    """Exhaustive CART: try every (feature, midpoint), keep the first strictly best."""
    counts = np.bincount(y, minlength=k)
    leaf = ("leaf", counts / len(y))
    if len(y) < 2 or np.count_nonzero(counts) <= 1:
        return leaf
    n, parent = len(y), _oracle_gini(y, k)
    best = None
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(values, values[1:]):
            t = lo + (hi - lo) / 2
            go = X[:, f] <= t
            gain = (parent - go.sum() / n * _oracle_gini(y[go], k)
                    - (~go).sum() / n * _oracle_gini(y[~go], k))
            if best is None or gain > best[0] + 1e-12:
                best = (gain, f, t)
    if best is None or best[0] <= 1e-12:
        return leaf
    _, f, t = best
    go = X[:, f] <= t
    return ("split", f, t, _oracle_tree(X[go], y[go], k), _oracle_tree(X[~go], y[~go], k))


def _oracle_predict(node, x):
    while node[0] == "split":
        node = node[3] if x[node[1]] <= node[2] else node[4]
    return node[1]


@pytest.mark.criterion(1, "CART matches exhaustive split-search oracle")
def test_criterion_1_cart_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for _ in range(CART_INSTANCES):
        n, p = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        k = min(int(rng.integers(2, 4)), n)
        X = rng.integers(0, 5, size=(n, p)).astype(float)
        y = rng.integers(0, k, n)
        y[:k] = np.arange(k)
        y = rng.permutation(y)
        model = RandomForest(n_estimators=1, bootstrap=False, features_per_split=p).fit(X, y)
        oracle = _oracle_tree(X, y, k)
        probe = np.vstack([X, rng.integers(-1, 6, size=(10, p)).astype(float)])
        expected = np.array([_oracle_predict(oracle, x) for x in probe])
        assert np.array_equal(model.predict_proba(probe), expected)
        assert np.array_equal(model.predict(probe), expected.argmax(axis=1))
    assert time.perf_counter() - start < CART_SECONDS


# -- 2 -----------------------------------------------------------------------

@pytest.mark.criterion(2, "softmax regression gradient vs central differences")
def test_criterion_2_gradient_check():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(GRAD_INSTANCES):
        n, p, k = rng.integers(5, 30), rng.integers(1, 6), rng.integers(2, 5)
        X = rng.normal(size=(n, p))
        Y = np.eye(k)[rng.integers(0, k, n)]
        W, b = rng.normal(size=(p, k)), rng.normal(size=k)
        lam = float(rng.choice([0.0, 1e-4, 0.1]))
        gW, gb = softmax_gradient(W, b, X, Y, lam)
        analytic = np.concatenate([gW.ravel(), gb])
        theta = np.concatenate([W.ravel(), b])

        def loss(t):
            return softmax_loss(t[:W.size].reshape(W.shape), t[W.size:], X, Y, lam)

        numeric = np.empty_like(theta)
        for i in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[i] += GRAD_STEP
            dn[i] -= GRAD_STEP
            numeric[i] = (loss(up) - loss(dn)) / (2 * GRAD_STEP)
        # relative to the gradient's scale so that near-zero entries do not divide by ~0
        rel = np.abs(analytic - numeric) / max(np.abs(analytic).max(), np.abs(numeric).max())
        worst = max(worst, float(rel.max()))
    assert worst < GRAD_RTOL, worst


# -- 3 -----------------------------------------------------------------------

@pytest.mark.criterion(3, "GBT leaf weight closed form and monotone training loss")
def test_criterion_3_gbt_closed_forms():
    rng = np.random.default_rng(3)
    for i in range(GBT_INSTANCES):
        n, p, k = rng.integers(20, 80), rng.integers(1, 5), rng.integers(2, 4)
        X = rng.normal(size=(n, p))
        y = rng.integers(0, k, n)
        y[:k] = np.arange(k)
        lam = float(rng.choice([0.5, 1.0, 3.0]))

        stump = GradientBoostedTrees(n_rounds=1, learning_rate=1.0, reg_lambda=lam, max_depth=0).fit(X, y)
        grad, hess = softmax_gradients(np.tile(stump.base_score_, (n, 1)), np.eye(k)[y])
        for c, tree in enumerate(stump.trees_[0]):
            assert abs(tree.value[0, 0] - (-grad[:, c].sum() / (hess[:, c].sum() + lam))) < LEAF_TOL

        eta = (0.1, 0.3, 1.0)[i % 3]
        model = GradientBoostedTrees(n_rounds=GBT_ROUNDS, learning_rate=eta, reg_lambda=lam,
                                     max_depth=int(rng.integers(1, 5))).fit(X, y)
        assert np.all(np.diff(model.train_loss_) <= 0.0), (i, eta)


# -- 4 -----------------------------------------------------------------------

def _definition_macro_f1(cm):
    k = len(cm)
    f1s = []
    for c in range(k):
        tp = cm[c][c]
        predicted = sum(cm[r][c] for r in range(k))
        actual = sum(cm[c])
        prec = tp / predicted if predicted else 0.0
        rec = tp / actual if actual else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(f1s) / k


@pytest.mark.criterion(4, "metrics match from-definition recomputation")
def test_criterion_4_metrics_oracle():
    rng = np.random.default_rng(4)
    for i in range(METRIC_INSTANCES):
        k = int(rng.integers(2, 5))
        cm = rng.integers(0, 20, size=(k, k))
        if i % 4 == 0:
            cm = np.diag(rng.integers(1, 20, k))
        if cm.sum() == 0:
            cm[0, 0] = 1
        report = metrics(cm)
        assert abs(report.macro_f1 - _definition_macro_f1(cm.tolist())) < METRIC_TOL
        assert abs(report.accuracy - np.trace(cm) / cm.sum()) < METRIC_TOL
        # "diagonal" here means every class present and no off-diagonal mass
        diagonal = not (cm - np.diag(np.diag(cm))).any() and np.all(np.diag(cm) > 0)
        assert (report.macro_f1 == 1.0) == diagonal


# -- 5 -----------------------------------------------------------------------

@pytest.mark.criterion(5, "stratified folds and holdout are balanced per class")
def test_criterion_5_stratification():
    rng = np.random.default_rng(5)
    for _ in range(SPLIT_INSTANCES):
        k = int(rng.integers(2, 5))
        counts = rng.integers(5, 120, k)
        y = rng.permutation(np.repeat(np.arange(k), counts))
        seed = int(rng.integers(0, 2 ** 31))
        folds = stratified_kfold(y, 5, seed).folds
        per_fold = np.array([np.bincount(y[f], minlength=k) for f in folds])
        assert np.all(per_fold.max(axis=0) - per_fold.min(axis=0) <= 1)
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(len(y)))
        split = stratified_holdout(y, 0.8, seed)
        train = np.bincount(y[split.train], minlength=k)
        assert np.all(np.abs(train - 0.8 * counts) <= 1)
        assert len(np.intersect1d(split.train, split.test)) == 0


# -- 6 -----------------------------------------------------------------------

class _Recording:
    def __init__(self, inner, clock, script=()):
        self.inner, self.clock, self.script = inner, clock, list(script)
        self.starts, self.attempts = [], 0

    def send(self, request):
        if request.method == "GET":
            self.starts.append(self.clock.now())
            self.attempts += 1
            if self.script:
                status = self.script.pop(0)
                if status != 200:
                    return TransportResponse(status, b"")
        return self.inner.send(request)


@pytest.mark.criterion(6, "client pacing, backoff schedule and retry limit")
def test_criterion_6_client_pacing():
    config = ClientConfig(client_id="id", client_secret="secret")
    uris = [f"spotify:track:{i:022d}" for i in range(PACING_REQUESTS * config.batch_size)]
    fixture = {u: None for u in uris}

    clock = SimulatedClock()
    transport = _Recording(FixtureTransport(fixture), clock)
    EnrichmentClient(transport, config, clock).enrich_all(uris)
    starts = transport.starts
    assert len(starts) == PACING_REQUESTS
    assert all(b - a >= 0.5 for a, b in zip(starts, starts[1:]))
    assert all(sum(s <= t < s + 1.0 for t in starts) <= 2 for s in starts)

    clock = SimulatedClock()
    transport = _Recording(FixtureTransport(fixture), clock, script=[429, 429, 200])
    EnrichmentClient(transport, config, clock).fetch_batch(build_batch_request(uris[:3], config.features_endpoint))
    assert clock.sleeps == [1.0, 2.0]

    clock = SimulatedClock()
    transport = _Recording(FixtureTransport(fixture), clock, script=[429] * 6)
    client = EnrichmentClient(transport, ClientConfig(client_id="id", client_secret="s", max_retries=5), clock)
    with pytest.raises(RetriesExhaustedError) as err:
        client.fetch_batch(build_batch_request(uris[:3], config.features_endpoint))
    assert transport.attempts == 6 and err.value.attempts == 6


# -- 7 / 8 -------------------------------------------------------------------

def _end_to_end(root):
    tracks, features = make_tracks(n=1500, proportions=(0.05, 0.20, 0.75), seed=42)
    write_tracks_csv(tracks, root / "tracks.csv")
    write_features_csv(features, root / "features.csv")
    assert cli.main(["prepare", "--tracks", str(root / "tracks.csv"), "--features",
                     str(root / "features.csv"), "--out", str(root / "data"), "--seed", "42"]) == 0
    reports = {}
    for mode in ("full", "audio_only"):
        out = root / mode
        assert cli.main(["evaluate", "--data", str(root / "data"), "--model", "all", "--features", mode,
                         "--cv", "5", "--seed", "42", "--no-timestamp", "--no-plots",
                         "--out", str(out), *E2E_PARAMS]) == 0
        reports[mode] = (out / "report.json").read_bytes()
    return reports


@pytest.fixture(scope="module")
def e2e_runs(tmp_path_factory):
    start = time.perf_counter()
    first = _end_to_end(tmp_path_factory.mktemp("e2e_a"))
    elapsed = time.perf_counter() - start
    return first, elapsed, tmp_path_factory


@pytest.mark.criterion(7, "synthetic end to end: model ordering and metadata ablation")
def test_criterion_7_synthetic_end_to_end(e2e_runs, capsys):
    reports, elapsed, _ = e2e_runs
    cv = {mode: {r["model"]: r["cv"]["mean"] for r in json.loads(raw)} for mode, raw in reports.items()}
    with capsys.disabled():
        for mode, scores in cv.items():
            print(f"\n  {mode:<10} " + "  ".join(f"{m}={v:.4f}" for m, v in scores.items()), end="")
        print(f"\n  runtime {elapsed:.1f} s")
    full, audio = cv["full"], cv["audio_only"]
    for strong in ("rf", "gbt"):
        assert full[strong] >= 0.90
        assert full[strong] > full["logreg"] and full[strong] > full["knn"]
    for model in full:
        assert audio[model] < full[model]
    assert audio["rf"] >= 0.70
    assert elapsed < E2E_SECONDS


@pytest.mark.criterion(8, "same seed gives byte-identical report.json")
def test_criterion_8_determinism(e2e_runs):
    first, _, factory = e2e_runs
    second = _end_to_end(factory.mktemp("e2e_b"))
    assert first == second


# -- 9 -----------------------------------------------------------------------

@pytest.mark.criterion(9, "train-view standardization and train-only imputation")
def test_criterion_9_preprocessing():
    rng = np.random.default_rng(9)
    for _ in range(50):
        n, p = int(rng.integers(10, 200)), int(rng.integers(1, 8))
        X = rng.normal(rng.normal(0, 100, p), rng.uniform(0.01, 50, p), size=(n, p))
        X[rng.random((n, p)) < 0.15] = np.nan
        X[0] = rng.normal(size=p)  # every column keeps an observed value
        if p > 1:
            X[:, -1] = 7.0  # one constant column
        rows = rng.permutation(n)
        train, test = rows[: int(0.8 * n)], rows[int(0.8 * n):]
        train = np.union1d(train, [0])
        test = np.setdiff1d(test, [0])

        state = fit_preprocess(X[train])
        Z = apply_preprocess(state, X[train])
        for j in range(p):
            column = np.nan_to_num(X[train, j], nan=state.column_means[j])
            if np.ptp(column) > 0:
                assert abs(Z[:, j].mean()) < PREP_TOL
                assert abs(Z[:, j].std(ddof=1) - 1.0) < PREP_TOL
            else:
                assert np.all(Z[:, j] == 0.0)
        assert np.array_equal(state.column_means, np.nanmean(X[train], axis=0))

        # scrambling the held-out rows must leave every fitted statistic untouched
        poisoned = X.copy()
        poisoned[test] = rng.normal(1e6, 1e5, size=(len(test), p))
        again = fit_preprocess(poisoned[train])
        assert np.array_equal(again.column_means, state.column_means)
        assert np.array_equal(again.scaler_mean, state.scaler_mean)
        assert np.array_equal(again.scaler_scale, state.scaler_scale)


# -- 10 ----------------------------------------------------------------------

@pytest.mark.criterion(10, "save/load reproduces predictions for every learner")
def test_criterion_10_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    X = rng.normal(size=(300, 6))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0.5).astype(int)
    probe = rng.normal(size=(ROUND_TRIP_ROWS, 6)) * 2
    for model in (SoftmaxRegression(max_iters=300), NearestNeighbors(k=5),
                  RandomForest(n_estimators=25), GradientBoostedTrees(n_rounds=20, max_depth=3)):
        model.fit(X, y, column_names=[f"c{j}" for j in range(6)])
        path = tmp_path / f"{model.variant}.json"
        save_model(model, path)
        back = load_model(path)
        assert type(back) is type(model)
        assert np.array_equal(back.predict(probe), model.predict(probe))
        assert np.array_equal(back.predict_proba(probe), model.predict_proba(probe))

