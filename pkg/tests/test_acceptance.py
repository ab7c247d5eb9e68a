"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` to see the summary section.
Criterion 9 needs the published TLOS table; point ``SURVTIME_TLOS_CSV`` at
it (optionally ``SURVTIME_TLOS_TIME`` / ``SURVTIME_TLOS_EVENT`` for column
names) or it is skipped.
"""
import contextlib
import hashlib
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from survtime.cli import main
from survtime.data import FeatureGroup, TimeGrid, make_time_grid
from survtime.explain import gpfi_t, ice_t, pdp_t, pfi_t, sfi_t, survshap_t
from survtime.explain.importance import permutation_losses
from survtime.metrics import (
    auc_t,
    brier_score_t,
    concordance_index,
    integrated_brier_score,
    risk_from_survival,
)
from survtime.models import fit_coxph, fit_kaplan_meier, fit_nelson_aalen, fit_survival_forest
from survtime.models.base import ConstantModel, RandomRiskModel
from survtime.simulate import simulate_ph
from survtime.workflow import cross_validate

import oracles


@contextlib.contextmanager
def criterion(number, title):
    """Record one PASS/FAIL line; details are appended through the yielded list."""
    details = []
    start = time.perf_counter()
    try:
        yield details
    except BaseException as exc:
        if isinstance(exc, pytest.skip.Exception):
            ACCEPTANCE_LINES.append(f"SKIP  {number}. {title}: {exc}")
        else:
            first = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            ACCEPTANCE_LINES.append(f"FAIL  {number}. {title}: {first}")
        raise
    elapsed = time.perf_counter() - start
    info = "; ".join(details + [f"{elapsed:.1f}s"])
    ACCEPTANCE_LINES.append(f"PASS  {number}. {title} ({info})")


# -- 1 ---------------------------------------------------------------------------------

def test_1_random_model_baselines():
    with criterion(1, "random-model baselines") as log:
        start = time.perf_counter()
        ds = simulate_ph(1000, (1.0, -0.5), censoring=0.2, seed=101)
        assert abs(1 - ds.events.mean() - 0.2) < 0.01
        rng = np.random.default_rng(102)
        c_scores = concordance_index(rng.normal(size=ds.n), ds.times, ds.events)
        grid = make_time_grid(ds, "quantiles", 20)
        random_model = RandomRiskModel.fit(ds, seed=103)
        c_model = concordance_index(risk_from_survival(random_model.predict_survival(
            ds.features, grid)), ds.times, ds.events)
        cv = cross_validate(ds, {"kind": "random"}, k=5, repeats=2, seed=104,
                            metrics=["cindex"]).aggregate()["cindex"]["mean"]
        for c in (c_scores, c_model, cv):
            assert 0.45 <= c <= 0.55, f"random C-index {c:.4f}"

        light = simulate_ph(1000, (1.0, -0.5), censoring=0.05, seed=105)
        assert np.sum(~light.events) <= 0.05 * light.n
        lgrid = make_time_grid(light)
        S = ConstantModel(light.p, 0.5).predict_survival(light.features, lgrid)
        brier = brier_score_t(S, light.times, light.events, lgrid)
        ibs = integrated_brier_score(brier)
        worst = float(np.max(np.abs(brier.values - 0.25)))
        assert worst <= 0.01, f"max |Brier - 0.25| = {worst:.4f}"
        assert abs(ibs - 0.25) <= 0.01, f"IBS {ibs:.4f}"
        runtime = time.perf_counter() - start
        assert runtime < 10, f"runtime {runtime:.1f}s"
        log.append(f"C={c_scores:.3f}/{c_model:.3f}/cv {cv:.3f}, "
                   f"max|Brier-0.25|={worst:.4f} over {len(lgrid)} points, IBS={ibs:.4f}")


# -- 2 ---------------------------------------------------------------------------------

def test_2_shapley_sampling_matches_exact():
    with criterion(2, "Shapley oracle equivalence") as log:
        start = time.perf_counter()
        ds = simulate_ph(300, (1.0, -0.5, 0.25), seed=201)
        model = fit_coxph(ds)
        grid = make_time_grid(ds, "quantiles", 20)
        background = ds.features[np.random.default_rng(202).choice(ds.n, 50, replace=False)]
        worst_err, worst_gap = 0.0, 0.0
        for i in range(3):
            x = ds.features[i]
            exact = survshap_t(model, x, background, grid, estimator="exact")
            sampled = survshap_t(model, x, background, grid, estimator="sampling",
                                 n_samples=2000, seed=203 + i)
            worst_err = max(worst_err, float(np.max(np.abs(sampled.values - exact.values))))
            worst_gap = max(worst_gap, exact.local_accuracy_gap())
        assert worst_err < 0.02, f"max |sampling - exact| = {worst_err:.4f}"
        assert worst_gap <= 1e-10, f"local accuracy gap {worst_gap:.2e}"
        runtime = time.perf_counter() - start
        assert runtime < 60, f"runtime {runtime:.1f}s"
        log.append(f"max error {worst_err:.4f}, local accuracy gap {worst_gap:.1e}")


# -- 3 ---------------------------------------------------------------------------------

def test_3_pdp_is_mean_of_ice():
    with criterion(3, "PDP equals mean of ICE") as log:
        worst = 0.0
        for draw in range(100):
            rng = np.random.default_rng(300 + draw)
            p = int(rng.integers(1, 5))
            beta = rng.normal(size=p)
            binary = (0,) if rng.random() < 0.3 else ()
            ds = simulate_ph(int(rng.integers(5, 40)), beta, censoring=0.3, binary=binary,
                             seed=draw)
            if ds.events.sum() == 0:
                ds = simulate_ph(ds.n, beta, censoring=0.0, binary=binary, seed=draw)
            if draw % 2:
                model = fit_survival_forest(ds, n_trees=3, min_node_size=3, seed=draw)
            else:
                try:
                    model = fit_coxph(ds)
                except Exception:
                    model = fit_survival_forest(ds, n_trees=3, min_node_size=3, seed=draw)
            grid = make_time_grid(ds, "quantiles", 8)
            j = int(rng.integers(p))
            z = np.round(rng.normal(size=3), 3)
            pdp = pdp_t(model, ds, j, z, grid, contrast=None)
            ices = [ice_t(model, x, j, z, grid) for x in ds.features]
            for name in ices[0].names:
                mean = np.mean([c[name] for c in ices], axis=0)
                worst = max(worst, float(np.max(np.abs(pdp[name] - mean))))
        assert worst <= 1e-12, f"max deviation {worst:.2e}"
        log.append(f"100 draws, max deviation {worst:.1e}")


# -- 4 ---------------------------------------------------------------------------------

def test_4_grouped_and_single_permutation_importance():
    with criterion(4, "GPFI/PFI consistency") as log:
        train = simulate_ph(400, (1.0, -0.5, 0.0), seed=401)
        test = simulate_ph(400, (1.0, -0.5, 0.0), seed=402)
        model = fit_coxph(train)
        grid = make_time_grid(test, "quantiles", 15)
        singles = [FeatureGroup(nm, (j,)) for j, nm in enumerate(test.feature_names)]
        for mode in ("difference", "absolute-difference", "relative"):
            a = pfi_t(model, test, None, grid, b=5, seed=403, mode=mode)
            g = gpfi_t(model, test, singles, grid, b=5, seed=403, mode=mode)
            for nm in a.names:
                np.testing.assert_array_equal(a[nm], g[nm])
                np.testing.assert_array_equal(a.dispersion[nm], g.dispersion[nm])

        # Label-independent x3, b=50. Under the null the intact loss is exchangeable with
        # the permuted ones, so mean(L0 - L_i) has standard error s * sqrt(1 + 1/b) where s
        # is the spread over permutations; s / sqrt(b) alone ignores the L0 term.
        b = 50
        noise = [FeatureGroup("x3", (2,))]
        within, naive_within = 0, 0
        for rep in range(100):
            tr = simulate_ph(400, (1.0, -0.5, 0.0), seed=4000 + rep)
            te = simulate_ph(400, (1.0, -0.5, 0.0), seed=5000 + rep)
            m = fit_coxph(tr)
            g = make_time_grid(te, "quantiles", 15)
            base, permuted = permutation_losses(m, te, noise, g, b=b, seed=rep)
            t = g.points
            areas = np.trapezoid(base.values[None, :] - permuted[0], t, axis=1) / (t[-1] - t[0])
            diff = pfi_t(m, te, "x3", g, b=b, seed=rep, mode="difference")
            assert diff.area("x3") / (t[-1] - t[0]) == pytest.approx(areas.mean(), abs=1e-15)
            s = areas.std(ddof=1)
            within += abs(areas.mean()) <= 2 * s * np.sqrt(1 + 1 / b)
            naive_within += abs(areas.mean()) <= 2 * s / np.sqrt(b)
        assert within >= 90, f"noise importance within 2 SE in {within}/100 replications"
        log.append(f"noise feature within 2 SE in {within}/100 replications "
                   f"({naive_within}/100 with s/sqrt(b))")


# -- 5 ---------------------------------------------------------------------------------

def breslow_loglik_many(X, times, events, B):
    """Breslow partial log-likelihood for each column of ``B`` (p, K)."""
    order = np.argsort(times, kind="stable")
    t, d, eta = times[order], events[order].astype(bool), X[order] @ B
    shift = eta.max(axis=0)
    w = np.exp(eta - shift)
    at_risk = np.cumsum(w[::-1], axis=0)[::-1]
    first = np.searchsorted(t, t, side="left")
    log_risk = np.log(at_risk[first]) + shift
    return (eta - log_risk)[d].sum(axis=0)


def grid_search_maximizer(X, times, events, centre=(0.0, 0.0), half=2.0, steps=40,
                          resolution=1e-7):
    """Nested grid search on a 2-D box, zooming into the best cell."""
    centre = np.asarray(centre, float)
    step = half / steps
    while True:
        axis = np.arange(-steps, steps + 1) * step
        B = np.stack(np.meshgrid(centre[0] + axis, centre[1] + axis, indexing="ij"))
        B = B.reshape(2, -1)
        centre = B[:, np.argmax(breslow_loglik_many(X, times, events, B))]
        if step <= resolution:
            return centre
        step /= 10
        steps = 10


def test_5_cox_recovery():
    with criterion(5, "Cox recovery") as log:
        start = time.perf_counter()
        ds = simulate_ph(2000, (1.0, -0.5), censoring=0.2, seed=501)
        model = fit_coxph(ds)
        beta = model.coefficients
        assert np.all(np.abs(beta - [1.0, -0.5]) <= 0.1), f"beta_hat {beta}"
        # the vectorized objective agrees with the naive loop on a subsample
        sub = ds.subset(np.arange(60))
        naive = oracles.breslow_loglik(beta.tolist(), sub.features.tolist(),
                                       sub.times.tolist(), sub.events.tolist())
        fast = breslow_loglik_many(sub.features, sub.times, sub.events, beta[:, None])[0]
        assert fast == pytest.approx(naive, rel=1e-12)
        best = grid_search_maximizer(ds.features, ds.times, ds.events)
        gap = float(np.max(np.abs(beta - best)))
        assert gap <= 1e-4, f"|beta_hat - grid maximizer| = {gap:.2e}"
        runtime = time.perf_counter() - start
        assert runtime < 30, f"runtime {runtime:.1f}s"
        log.append(f"beta_hat=({beta[0]:.4f}, {beta[1]:.4f}), grid gap {gap:.1e}")


# -- 6 ---------------------------------------------------------------------------------

def test_6_hand_computed_estimators():
    with criterion(6, "hand-computed estimators") as log:
        km = fit_kaplan_meier([5, 5, 8, 10], [1, 0, 1, 1])
        assert list(km(np.array([5.0, 8.0, 10.0]))) == [0.75, 0.375, 0.0]
        na = fit_nelson_aalen([1, 2], [1, 1])
        assert list(na(np.array([1.0, 2.0]))) == [0.5, 1.5]

        S = np.array([[0.2, 0.1], [0.6, 0.5], [0.7, 0.4], [0.9, 0.8]])
        brier = brier_score_t(S, [1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1], TimeGrid([2.5, 3.5]))
        np.testing.assert_allclose(brier.values, [0.0475, 0.0775], rtol=0, atol=1e-15)

        Sa = np.array([0.1, 0.6, 0.5, 0.6, 0.9])[:, None]
        auc = auc_t(Sa, [1.0, 2.0, 3.0, 4.0, 5.0], np.ones(5), TimeGrid([2.5]))
        assert auc.values[0] == 0.75
        log.append("KM, NA, Brier, AUC exact")


# -- 7 ---------------------------------------------------------------------------------

def test_7_importance_ranking_recovery():
    with criterion(7, "importance-ranking recovery") as log:
        expected = ["x1", "x2", "x3"]
        sfi_hits = pfi_hits = 0
        for rep in range(100):
            ds = simulate_ph(400, (1.0, 0.5, 0.0), censoring=0.2, seed=700 + rep)
            train, test = ds.subset(np.arange(300)), ds.subset(np.arange(300, 400))
            model = fit_coxph(train)
            grid = make_time_grid(test, "quantiles", 10)
            sfi = sfi_t(model, test, grid, estimator="exact", background_cap=50, seed=rep)
            pfi = pfi_t(model, test, None, grid, b=10, seed=rep, mode="absolute-difference")
            sfi_hits += sfi.ranking() == expected
            pfi_hits += pfi.ranking() == expected
        assert sfi_hits >= 95, f"SFI ranked correctly in {sfi_hits}/100"
        assert pfi_hits >= 95, f"PFI ranked correctly in {pfi_hits}/100"
        log.append(f"SFI {sfi_hits}/100, PFI {pfi_hits}/100")


# -- 8 ---------------------------------------------------------------------------------

def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.iterdir())}


def test_8_cli_determinism(tmp_path):
    with criterion(8, "CLI determinism") as log:
        data_dir = tmp_path / "data"
        assert main(["simulate", "--seed", "801", "--n", "150", "--beta", "1.0,-0.5,0",
                     "--binary", "2", "--out", str(data_dir)]) == 0
        data = str(data_dir / "simulated.csv")
        model_file = tmp_path / "model" / "model.json"
        groups = tmp_path / "groups.yaml"
        groups.write_text("signal: [x1, x2]\nnoise: [x3]\n")
        assert main(["fit", "--data", data, "--model", "forest", "--param", "n_trees=8",
                     "--seed", "802", "--out", str(model_file.parent)]) == 0
        verbs = {
            "simulate": ["simulate", "--seed", "801", "--n", "150", "--beta", "1.0,-0.5,0",
                         "--binary", "2"],
            "fit-forest": ["fit", "--data", data, "--model", "forest", "--param", "n_trees=8",
                           "--seed", "802"],
            "fit-coxph": ["fit", "--data", data, "--model", "coxph"],
            "evaluate": ["evaluate", "--data", data, "--model", "forest", "--param",
                         "n_trees=4", "--folds", "3", "--repeats", "2", "--seed", "803"],
            "explain": ["explain", "--data", data, "--model-file", str(model_file),
                        "--observation", "1", "--ice", "x1", "--pdp", "x3", "--shap",
                        "--sfi", "--pfi", "--gpfi", "--groups", str(groups), "--b", "3", "--estimator", "sampling",
                        "--n-samples", "40", "--background-cap", "30", "--svg",
                        "--seed", "804"],
        }
        n_files = 0
        for verb, argv in verbs.items():
            seen = []
            for run, workers in enumerate(("1", "1", "4")):
                out = tmp_path / f"{verb}-{run}"
                assert main(argv + ["--workers", workers, "--out", str(out)]) == 0, verb
                seen.append(_digest(out))
            assert seen[0] == seen[1] == seen[2], f"{verb} outputs differ"
            n_files += len(seen[0])
        log.append(f"{len(verbs)} runs x 3, {n_files} files byte-identical")


# -- 9 (optional) ------------------------------------------------------------------------

def test_9_tlos_reproduction():
    with criterion(9, "TLOS CoxPH baseline reproduction (optional)") as log:
        path = os.environ.get("SURVTIME_TLOS_CSV")
        if not path:
            pytest.skip("SURVTIME_TLOS_CSV not set")
        from survtime.data import load_dataset
        ds = load_dataset(path, os.environ.get("SURVTIME_TLOS_TIME", "time"),
                          os.environ.get("SURVTIME_TLOS_EVENT", "event"))
        rep = cross_validate(ds, {"kind": "coxph"}, k=10, repeats=10, seed=901,
                             metrics=["cindex"])
        c = rep.aggregate()["cindex"]["mean"]
        assert abs(c - 0.567) <= 0.04, f"C-index {c:.3f}"
        log.append(f"C-index {c:.3f}")
