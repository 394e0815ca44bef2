"""Quick built-in verification battery for the exact-covariance invariants.

Each check builds small random ground-truth models, computes both sides of
an identity or inequality independently, and reports pass/fail.  The
battery is a fast smoke test for installations; the full pytest suite
covers the same ground (and much more) at larger scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import (
    assemble_covariances,
    generate_leadfields,
    random_source_model,
    select_leadfield,
)
from .filters import core_matrices
from .indices import IndexFamily, IndexSpec, mai, mai_rr, mpz_rr
from .localizer import (
    LocalizationConfig,
    localize,
    rank_from_eigenmass,
)
from .matcore import eigvals_product, loewner_geq
from .stats import rank_sum_test


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_setup(seed: int, m: int = 10, s: int = 24, l0: int = 3):
    leads = generate_leadfields(m=m, s=s, coherence=0.4, seed=seed)
    model = random_source_model(leads, l0=l0, seed=seed + 1, correlation=0.3)
    pair = assemble_covariances(model)
    return leads, model, pair


def _check_whitened_identity(n_models: int = 10) -> CheckResult:
    """(S0')^{-1} = (G0')^{-1} + I at the true tuple."""
    worst = 0.0
    for seed in range(n_models):
        _, model, pair = _random_setup(seed)
        core = core_matrices(model.H0, pair.R, pair.N, q=model.Q)
        lhs = np.linalg.inv(core.S)
        rhs = np.linalg.inv(core.G) + np.eye(core.l)
        worst = max(worst, np.abs(lhs - rhs).max() / np.abs(rhs).max())
    return CheckResult("whitened inverse identity", worst < 1e-8,
                       f"max rel err {worst:.2e}")


def _check_eigenvalue_shift(n_models: int = 10) -> CheckResult:
    """lambda_i(R N^{-1}) = lambda_i(G0') + 1 for i <= l0, = 1 after."""
    worst = 0.0
    for seed in range(n_models):
        _, model, pair = _random_setup(seed)
        core = core_matrices(model.H0, pair.R, pair.N, q=model.Q)
        lam_rn = eigvals_product(pair.R, pair.N)
        lam_g = np.linalg.eigvalsh(core.G)[::-1]
        l0 = core.l
        top = np.abs(lam_rn[:l0] - (lam_g + 1.0)).max() / (1.0 + lam_g.max())
        tail = np.abs(lam_rn[l0:] - 1.0).max()
        worst = max(worst, top, tail)
    return CheckResult("eigenvalue shift of R N^{-1}", worst < 1e-8,
                       f"max rel err {worst:.2e}")


def _check_peak_equalities(n_models: int = 10) -> CheckResult:
    """MAI_RR(theta0, r) = MPZ_RR(theta0, r) = partial eigensum of G0'."""
    worst = 0.0
    for seed in range(n_models):
        _, model, pair = _random_setup(seed)
        core = core_matrices(model.H0, pair.R, pair.N, q=model.Q)
        lam_g = np.linalg.eigvalsh(core.G)[::-1]
        for r in range(1, core.l + 1):
            expect = lam_g[:r].sum()
            a = mai_rr(core, r).value
            b = mpz_rr(core, r).value
            scale = max(abs(expect), 1.0)
            worst = max(worst, abs(a - expect) / scale, abs(b - expect) / scale)
    return CheckResult("peak-value equalities", worst < 1e-8,
                       f"max rel err {worst:.2e}")


def _check_loewner(n_models: int = 6) -> CheckResult:
    """T' dominates S'(G')^{-1}S' for random tuples, equality at theta0."""
    ok = True
    for seed in range(n_models):
        leads, model, pair = _random_setup(seed)
        rng = np.random.default_rng(seed + 100)
        for _ in range(10):
            theta = tuple(sorted(rng.choice(leads.s, size=len(model.theta0),
                                            replace=False).tolist()))
            h = select_leadfield(leads, theta)
            core = core_matrices(h, pair.R, pair.N, q=model.Q)
            bound = core.S @ np.linalg.inv(core.G) @ core.S
            lam_max = np.linalg.eigvalsh(core.T)[-1]
            if not loewner_geq(core.T, bound, tol=1e-8 * lam_max):
                ok = False
    return CheckResult("noise-output dominance", ok, "50+ random tuples")


def _check_rank_rule() -> CheckResult:
    cases = [
        (rank_from_eigenmass([8.0, 3.0, 1.0], 3, 0.8), 2),
        (rank_from_eigenmass([8.0, 3.0, 1.0], 3, 1.0), 3),
        (rank_from_eigenmass([1.0] * 5, 5, 0.8), 5),
    ]
    ok = all(got == want for got, want in cases)
    return CheckResult("rank-selection rule", ok, f"{[g for g, _ in cases]}")


def _check_exhaustive_unbiasedness() -> CheckResult:
    """theta0 is the global argmax over all pairs, and the greedy scan agrees."""
    from itertools import combinations

    leads = generate_leadfields(m=8, s=12, coherence=0.3, seed=5)
    model = random_source_model(leads, l0=2, seed=11)
    pair = assemble_covariances(model)
    best_val, best_pair = -np.inf, None
    for pair_idx in combinations(range(leads.s), 2):
        h = select_leadfield(leads, pair_idx)
        val = mai(core_matrices(h, pair.R, pair.N)).value
        if val > best_val:
            best_val, best_pair = val, pair_idx
    cfg = LocalizationConfig(l0=2, spec=IndexSpec(IndexFamily.MAI))
    res = localize(cfg, pair.R, pair.N, leads)
    ok = set(best_pair) == set(model.theta0) == set(res.found)
    return CheckResult("exhaustive unbiasedness + greedy match", ok,
                       f"truth {model.theta0}, greedy {res.found}")


def _check_rank_sum() -> CheckResult:
    res = rank_sum_test([5.0, 6.0, 7.0], [1.0, 2.0, 3.0])
    ok = res.method == "exact" and abs(res.p_value - 0.05) < 1e-12
    return CheckResult("rank-sum exact enumeration", ok,
                       f"p = {res.p_value:.4f}")


def run_selftest() -> list[CheckResult]:
    """Run the whole battery; order is stable for output diffing."""
    return [
        _check_whitened_identity(),
        _check_eigenvalue_shift(),
        _check_peak_equalities(),
        _check_loewner(),
        _check_rank_rule(),
        _check_exhaustive_unbiasedness(),
        _check_rank_sum(),
    ]
