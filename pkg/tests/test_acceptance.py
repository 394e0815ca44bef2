"""Release acceptance gate.

One test per release criterion, each checked at its stated tolerance and
each printing a single PASS/FAIL verdict line (visible with ``pytest -s``,
and in the captured output on failure).  The statistical benchmark runs the
full desk-scale configuration, so this file takes a few tens of seconds;
everything else is exact-covariance algebra and completes in seconds.
"""

import functools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import make_model
from rrloc import (
    ExperimentConfig,
    IndexFamily,
    IndexSpec,
    LocalizationConfig,
    core_matrices,
    estimate_source_count,
    localize,
    mai,
    mai_ext,
    mai_rr,
    mpz,
    mpz_ext,
    mpz_rr,
    pairwise_pvalues,
    pooled_errors,
    psd_inv,
    rank_from_eigenmass,
    run_experiment,
    select_leadfield,
)
from rrloc.cli import JOBS_ENV_VAR, run
from rrloc.matcore import eigvals_product

DESK_CFG = Path(__file__).resolve().parent.parent / "configs" / "desk.cfg"


def verdict(title):
    """Print exactly one PASS/FAIL line for the wrapped criterion check."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                print(f"FAIL  {title}  [{exc}]")
                raise
            print(f"PASS  {title}" + (f"  [{detail}]" if detail else ""))

        return wrapper

    return deco


def _rel(actual, expected):
    expected = np.asarray(expected, dtype=float)
    scale = max(float(np.linalg.norm(expected)), 1.0)
    return float(np.linalg.norm(np.asarray(actual, dtype=float) - expected)) / scale


def _random_models(count, rng, s_extra=8):
    """Exact-covariance models with m <= 16 and l0 <= 4, varied freely."""
    for i in range(count):
        m = int(rng.integers(6, 17))
        l0 = int(rng.integers(1, 5))
        yield make_model(
            m=m,
            s=m + int(rng.integers(2, s_extra)),
            l0=l0,
            seed=1000 + i,
            coherence=float(rng.uniform(0.2, 0.7)),
            corr=float(rng.uniform(0.0, 0.8)),
            noise_scale=float(rng.uniform(0.5, 2.0)),
        )


def _descending_eigs(mat):
    return np.linalg.eigvalsh(0.5 * (mat + mat.T))[::-1]


# -- shared instances ---------------------------------------------------------

@pytest.fixture(scope="module")
def exhaustion_instance():
    """The 12-candidate two-source exact-covariance scan instance."""
    leads, model, pair = make_model(m=10, s=12, l0=2, seed=42,
                                    coherence=0.5, corr=0.4)
    return leads, model, pair


@pytest.fixture(scope="module")
def desk():
    """Full desk-scale benchmark records plus the wall time they took."""
    cfg = ExperimentConfig()
    jobs = min(4, os.cpu_count() or 1)
    start = time.perf_counter()
    records = run_experiment(cfg, jobs=jobs)
    elapsed = time.perf_counter() - start
    return cfg, records, elapsed


# -- criteria -----------------------------------------------------------------

@verdict("1. exact-model identities (100 random models)")
def test_1_exact_model_identities():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for leads, model, pair in _random_models(100, rng):
        l0 = len(model.theta0)
        h0 = select_leadfield(leads, model.theta0)
        core0 = core_matrices(h0, pair.R, pair.N, q=model.Q)

        # inverse shift between the whitened signal and noise Grams
        dev = _rel(psd_inv(core0.S), psd_inv(core0.G) + np.eye(l0))
        worst = max(worst, dev)

        # leading generalized eigenvalues of (R, N) are the whitened noise
        # Gram's eigenvalues shifted by one
        lam_rn = eigvals_product(pair.R, pair.N)
        lam_g = _descending_eigs(core0.G)
        worst = max(worst, _rel(lam_rn[:l0], lam_g + 1.0))

        # dominance T' >= S'(G')^{-1}S' at a random tuple, equality at theta0
        theta = tuple(sorted(
            rng.choice(leads.s, size=l0, replace=False).tolist()))
        core = core_matrices(select_leadfield(leads, theta),
                             pair.R, pair.N, q=model.Q)
        gap = core.T - core.S @ psd_inv(core.G) @ core.S
        min_eig = float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0])
        scale = max(float(np.linalg.norm(core.T)), 1.0)
        assert min_eig >= -1e-8 * scale, \
            f"dominance violated: min eig {min_eig:.3e} at {theta}"
        gap0 = core0.T - core0.S @ psd_inv(core0.G) @ core0.S
        worst = max(worst, float(np.linalg.norm(gap0))
                    / max(float(np.linalg.norm(core0.T)), 1.0))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-8, f"worst relative deviation {worst:.3e}"
    assert elapsed < 10.0, f"identity suite took {elapsed:.1f} s"
    return f"max rel dev {worst:.2e}, {elapsed:.1f} s"


@verdict("2. peak value equals leading eigenvalue sum, every rank")
def test_2_peak_eigenvalue_sum():
    rng = np.random.default_rng(202)
    worst = 0.0
    for leads, model, pair in _random_models(100, rng):
        l0 = len(model.theta0)
        h0 = select_leadfield(leads, model.theta0)
        core0 = core_matrices(h0, pair.R, pair.N, q=model.Q)
        lam_g = _descending_eigs(core0.G)
        for r in range(1, l0 + 1):
            expected = float(lam_g[:r].sum())
            worst = max(worst, _rel(mai_rr(core0, r).value, expected))
            worst = max(worst, _rel(mpz_rr(core0, r).value, expected))
            worst = max(worst, _rel(mai_rr(core0, r).value,
                                    mpz_rr(core0, r).value))
    assert worst <= 1e-8, f"worst relative deviation {worst:.3e}"
    return f"max rel dev {worst:.2e}"


@verdict("3. pointwise comparisons on 50 random tuples per model")
def test_3_pointwise_comparisons():
    rng = np.random.default_rng(303)
    slack_floor = -1e-9
    worst_slack = np.inf
    worst_ident = 0.0
    for leads, model, pair in _random_models(10, rng):
        l0 = len(model.theta0)
        if l0 < 2:
            continue
        h0 = select_leadfield(leads, model.theta0)
        core0 = core_matrices(h0, pair.R, pair.N, q=model.Q)
        lam_g = _descending_eigs(core0.G)
        lam_rn = eigvals_product(pair.R, pair.N)
        full0 = mai(core0).value
        full0_pz = mpz(core0).value
        for r in range(1, l0):
            # gap identity at theta0: full-rank value minus the truncated
            # value is the trailing eigenvalue sum
            worst_ident = max(worst_ident, _rel(
                full0 - mai_rr(core0, r).value, float(lam_g[r:].sum())))
            worst_ident = max(worst_ident, _rel(
                full0_pz - mpz_rr(core0, r).value, float(lam_g[r:].sum())))
            # theta0-equality of the truncated and eigenvalue-sum variants
            worst_ident = max(worst_ident, _rel(
                mai_ext(core0, r).value, mai_rr(core0, r).value))
            worst_ident = max(worst_ident, _rel(
                mpz_ext(core0, r).value, mpz_rr(core0, r).value))

        for _ in range(50):
            theta = tuple(sorted(
                rng.choice(leads.s, size=l0, replace=False).tolist()))
            core = core_matrices(select_leadfield(leads, theta),
                                 pair.R, pair.N, q=model.Q)
            vals_mai = [mai_rr(core, r).value for r in range(1, l0 + 1)]
            vals_mpz = [mpz_rr(core, r).value for r in range(1, l0 + 1)]
            for r in range(1, l0 + 1):
                # rank monotonicity
                if r < l0:
                    worst_slack = min(worst_slack,
                                      vals_mai[r] - vals_mai[r - 1],
                                      vals_mpz[r] - vals_mpz[r - 1])
                # truncated value never exceeds the eigenvalue-sum variant
                worst_slack = min(
                    worst_slack,
                    mai_ext(core, r).value - vals_mai[r - 1],
                    mpz_ext(core, r).value - vals_mpz[r - 1])
                # global bound from the generalized (R, N) spectrum
                bound = float(lam_rn[:r].sum()) - r
                worst_slack = min(worst_slack, bound - vals_mai[r - 1])
    assert worst_slack >= slack_floor, f"worst slack {worst_slack:.3e}"
    assert worst_ident <= 1e-8, f"worst identity deviation {worst_ident:.3e}"
    return f"min slack {worst_slack:+.2e}, max ident dev {worst_ident:.2e}"


@verdict("4. unbiasedness by exhaustion over all 66 pairs + greedy match")
def test_4_exhaustion(exhaustion_instance):
    leads, model, pair = exhaustion_instance
    start = time.perf_counter()
    theta0 = tuple(sorted(model.theta0))
    pairs = [(i, j) for i in range(leads.s) for j in range(i + 1, leads.s)]
    assert len(pairs) == 66

    cases = [
        ("mai", lambda c: mai(c).value, IndexFamily.MAI, None),
        ("mpz", lambda c: mpz(c).value, IndexFamily.MPZ, None),
        ("mai_rr r=1", lambda c: mai_rr(c, 1).value, IndexFamily.MAI_RR_I, 1),
        ("mai_rr r=2", lambda c: mai_rr(c, 2).value, IndexFamily.MAI_RR_I, 2),
        ("mpz_rr r=1", lambda c: mpz_rr(c, 1).value, IndexFamily.MPZ_RR_I, 1),
        ("mpz_rr r=2", lambda c: mpz_rr(c, 2).value, IndexFamily.MPZ_RR_I, 2),
    ]
    for name, value_fn, family, rank in cases:
        values = {}
        for theta in pairs:
            core = core_matrices(select_leadfield(leads, theta),
                                 pair.R, pair.N, q=model.Q)
            values[theta] = value_fn(core)
        best = max(values.values())
        argmax = {t for t, v in values.items()
                  if v >= best - 1e-9 * max(1.0, abs(best))}
        assert theta0 in argmax, \
            f"{name}: true pair {theta0} not in argmax set {argmax}"

        cfg = LocalizationConfig(l0=2, spec=IndexSpec(family, rank=rank))
        res = localize(cfg, pair.R, pair.N, leads)
        assert tuple(sorted(res.found)) in argmax, \
            f"{name}: greedy found {res.found}, argmax set {argmax}"
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"exhaustion took {elapsed:.1f} s"
    return f"6 families/ranks, {elapsed:.2f} s"


@verdict("5. saturation: strict growth below the source count, then plateau")
def test_5_saturation(exhaustion_instance):
    leads, model, pair = exhaustion_instance
    est = estimate_source_count(pair.R, pair.N, leads, l_max=4)
    values = est.values
    assert est.estimate == 2 and est.plateaued
    # strict increase while the scan is still finding true sources
    assert values[1] - values[0] > 1e-6 * max(abs(values[0]), 1.0), \
        f"no strict growth: {values[:2]}"
    # plateau once the true count is reached
    for l in (2, 3):
        change = abs(values[l] - values[l - 1])
        assert change < 1e-6 * max(abs(values[l - 1]), 1.0), \
            f"no plateau at l={l + 1}: change {change:.3e}"
    return f"trace {tuple(round(v, 4) for v in values)}"


@verdict("6. rank-selection rule unit cases")
def test_6_rank_selection_rule():
    assert rank_from_eigenmass([8.0, 3.0, 1.0], 3, 0.8) == 2
    assert rank_from_eigenmass([8.0, 3.0, 1.0], 3, 1.0) == 3
    # strict-inequality boundary: cumulative share 4/5 does not exceed 0.8
    assert rank_from_eigenmass([1.0] * 5, 5, 0.8) == 5
    return "[8,3,1] d=0.8 -> 2; d=1 -> l0; equal-mass boundary -> 5"


@verdict("7. statistical benchmark: truncated beats full-rank at low SNR")
def test_7_statistical_benchmark(desk):
    cfg, records, elapsed = desk
    assert elapsed < 900.0, f"benchmark took {elapsed:.0f} s"
    failures = [r for r in records if r.error is not None]
    assert not failures, f"{len(failures)} runs failed"

    pools = pooled_errors(records, scope="last_two")
    pvals = pairwise_pvalues(records, scope="last_two")
    lines = []
    for fam_full, fam_rr in ((IndexFamily.MAI, IndexFamily.MAI_RR_I),
                             (IndexFamily.MPZ, IndexFamily.MPZ_RR_I)):
        n_pass = 0
        for snr in cfg.snr_grid_db:
            med_full = float(np.median(pools[(snr, fam_full.value)]))
            med_rr = float(np.median(pools[(snr, fam_rr.value)]))
            p = pvals[(snr, fam_full.value, fam_rr.value)].p_value
            ok = med_rr <= med_full and p < 0.05
            n_pass += ok
            lines.append(f"{fam_rr.value}@{snr:g}dB p={p:.4f}"
                         f"{'*' if ok else ''}")
        assert n_pass >= 2, \
            f"{fam_rr.value} significant at only {n_pass}/3 SNR levels"
    return f"{elapsed:.0f} s; " + ", ".join(lines)


@verdict("8. determinism: repeated runs are byte-identical")
def test_8_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(JOBS_ENV_VAR, raising=False)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["bench", "--config", str(DESK_CFG), "--out", str(out_a)]) == 0
    assert run(["bench", "--config", str(DESK_CFG), "--out", str(out_b),
                "--jobs", "2"]) == 0
    capsys.readouterr()
    sizes = []
    for name in ("errors.csv", "pvalues.csv", "ranks.csv"):
        data_a = (out_a / name).read_bytes()
        assert data_a == (out_b / name).read_bytes(), f"{name} differs"
        sizes.append(len(data_a))
    return f"3 files identical across jobs=1/2 ({sum(sizes)} bytes)"


@verdict("9. achieved SNR within 1% of target across the grid")
def test_9_snr_calibration(desk):
    cfg, records, _ = desk
    worst = 0.0
    seen = set()
    for rec in records:
        if rec.error is not None:
            continue
        seen.add(rec.snr_db)
        ratio = 10.0 ** ((rec.achieved_snr_db - rec.snr_db) / 20.0)
        worst = max(worst, abs(ratio - 1.0))
    assert seen == set(cfg.snr_grid_db)
    assert worst <= 0.01, f"worst amplitude-ratio deviation {worst:.4%}"
    return f"max deviation {worst:.2e}"
