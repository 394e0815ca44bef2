"""Monte-Carlo benchmark: multi-run SNR sweeps comparing index families.

Protocol per run: a fixed leadfield set hosts l0 active sources, of which
``n_fixed_close`` sit in a constant cluster of mutually adjacent (hence
strongly correlated) candidates and the rest are drawn fresh; sources follow
a coupled MVAR process; a pre/post recording is simulated at the target SNR;
covariances are estimated from the two halves, ridge-loaded, the rank is
selected from the eigenmass rule, and every configured index family
localizes the sources.  Everything is deterministic given ``seed_base``:
run (i, j) derives its RNG from SeedSequence(seed_base, spawn_key=(i, j)),
so runs can execute in any order or in parallel without changing a bit of
the output.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matcore import ContractViolation
from .forward import (
    closest_cluster,
    generate_leadfields,
    random_noise_cov,
    select_leadfield,
)
from .indices import IndexFamily, IndexSpec
from .localizer import LocalizationConfig, ScanContext, localize, select_rank
from .signals import estimate_cov, regularize_pd, simulate_recording
from .stats import RankSumResult, rank_sum_test

#: Comparisons reported by default: each full-rank index against its
#: truncated variants (a is expected to have the larger errors).
DEFAULT_PAIRS = (
    (IndexFamily.MAI, IndexFamily.MAI_RR_I),
    (IndexFamily.MPZ, IndexFamily.MPZ_RR_I),
    (IndexFamily.MAI, IndexFamily.MAI_EXT),
    (IndexFamily.MPZ, IndexFamily.MPZ_EXT),
)

ALL_FAMILIES = (
    IndexFamily.MAI,
    IndexFamily.MPZ,
    IndexFamily.MAI_EXT,
    IndexFamily.MPZ_EXT,
    IndexFamily.MAI_RR_I,
    IndexFamily.MPZ_RR_I,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Benchmark shape and generator knobs; defaults are the desk scale.

    ``indices`` lists index families rather than full specs because the
    rank of the truncated families is data-driven: it is re-selected per
    run from the estimated covariances via the eigenmass rule.

    The generator defaults (``coherence``, ``source_coupling_strength``,
    ``close_source_gain``) pin the benchmark to the hard regime: a
    spatially coherent, temporally correlated close triplet whose share of
    signal power keeps the eigenmass rule away from degenerate rank-1
    selections.  Under these values the selected rank is stable per SNR
    level and the reduced-rank indices show their low-SNR advantage.
    """

    m: int = 32
    s: int = 300
    l0: int = 5
    n_fixed_close: int = 3
    snr_grid_db: tuple[float, ...] = (-10.0, 0.0, 10.0)
    runs: int = 20
    samples_pre: int = 500
    samples_post: int = 500
    delta: float = 0.8
    seed_base: int = 2024
    indices: tuple[IndexFamily, ...] = ALL_FAMILIES
    coherence: float = 0.98
    leadfield_seed: int = 7
    radius: float = 0.09
    scale_mm: float = 1000.0
    mvar_order: int = 6
    background_sources: int = 10
    sensor_noise_db: float = -20.0
    ridge_rel: float = 1e-6
    source_coupling_density: float = 1.0
    source_coupling_strength: float = 0.5
    source_power: str = "unit"
    close_source_gain: float = 0.55
    exact_covariances: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ContractViolation(f"runs must be >= 1, got {self.runs}")
        if not 0 <= self.n_fixed_close <= self.l0:
            raise ContractViolation(
                f"n_fixed_close {self.n_fixed_close} outside [0, l0={self.l0}]"
            )
        if self.l0 > self.m:
            raise ContractViolation(f"l0 = {self.l0} exceeds m = {self.m}")
        if not 0.0 < self.delta <= 1.0:
            raise ContractViolation(f"delta must be in (0, 1], got {self.delta}")
        if len(self.snr_grid_db) == 0:
            raise ContractViolation("snr_grid_db must be nonempty")
        if len(set(f.value for f in self.indices)) != len(self.indices):
            raise ContractViolation("duplicate index family in config")


@dataclass(frozen=True)
class RunRecord:
    """One run's outcome: per-index localization results plus diagnostics.

    ``error`` carries the failure message when a sub-module aborted the
    run; results are then empty and downstream aggregation skips the
    record.  ``wall_time`` is for operator feedback only and never reaches
    the CSV outputs (which must be byte-reproducible).
    """

    run_id: int
    snr_db: float
    theta0: tuple[int, ...]
    r_selected: int
    results: dict = field(default_factory=dict)
    achieved_snr_db: float = float("nan")
    wall_time: float = 0.0
    error: str | None = None


def build_leadfields(config: ExperimentConfig):
    """The benchmark's fixed leadfield set (shared across runs and SNRs)."""
    return generate_leadfields(
        m=config.m,
        s=config.s,
        coherence=config.coherence,
        seed=config.leadfield_seed,
        radius=config.radius,
    )


def _draw_theta0(config: ExperimentConfig, fixed: tuple[int, ...],
                 rng: np.random.Generator) -> tuple[int, ...]:
    pool = np.setdiff1d(np.arange(config.s), np.array(fixed, dtype=int))
    n_extra = config.l0 - len(fixed)
    extra = rng.choice(pool, size=n_extra, replace=False) if n_extra else []
    return tuple(sorted(int(t) for t in (*fixed, *extra)))


def run_single(config: ExperimentConfig, snr_idx: int, run_id: int,
               leads=None) -> RunRecord:
    """Execute one (SNR level, run) cell; deterministic from its spawn key."""
    t_start = time.perf_counter()
    snr_db = float(config.snr_grid_db[snr_idx])
    try:
        if leads is None:
            leads = build_leadfields(config)
        fixed = closest_cluster(leads, config.n_fixed_close)
        ss = np.random.SeedSequence(config.seed_base, spawn_key=(snr_idx, run_id))
        pick_rng = np.random.default_rng(ss.spawn(1)[0])
        theta0 = _draw_theta0(config, fixed, pick_rng)
        rec_seed = int(ss.generate_state(1)[0])

        achieved_snr_db = float("nan")
        if config.exact_covariances:
            # Debug mode: skip simulation and covariance estimation; use the
            # analytically assembled pair R = H0 Q H0^t + N with unit powers,
            # so the indices are evaluated on their exact-model domain.
            h0 = select_leadfield(leads, theta0)
            n_hat = random_noise_cov(config.m, seed=rec_seed)
            r_hat = n_hat + h0 @ h0.T
        else:
            mask = None
            if config.source_coupling_density < 1.0 or config.source_coupling_strength < 1.0:
                mask = (pick_rng.random((config.l0, config.l0))
                        < config.source_coupling_density).astype(float)
                mask *= config.source_coupling_strength
                np.fill_diagonal(mask, 1.0)
            gains = None
            if config.close_source_gain != 1.0:
                gains = np.array([config.close_source_gain if t in fixed else 1.0
                                  for t in theta0])
            rec = simulate_recording(
                leads,
                theta0,
                snr_db=snr_db,
                t_pre=config.samples_pre,
                t_post=config.samples_post,
                seed=rec_seed,
                mvar_order=config.mvar_order,
                source_mask=mask,
                background_sources=config.background_sources,
                sensor_noise_db=config.sensor_noise_db,
                source_power=config.source_power,
                source_gains=gains,
            )
            achieved_snr_db = rec.achieved_snr_db
            r_hat, r_ok = regularize_pd(estimate_cov(rec.post), config.ridge_rel)
            n_hat, n_ok = regularize_pd(estimate_cov(rec.pre), config.ridge_rel)
            if not (r_ok and n_ok):
                raise ContractViolation("covariance estimate not PD after ridge")
        r_sel = select_rank(r_hat, n_hat, config.l0, config.delta)

        ctx = ScanContext(leads, r_hat, n_hat)
        true_pos = leads.positions[list(theta0)]
        results = {}
        for fam in config.indices:
            spec = IndexSpec(fam, rank=r_sel if fam.uses_rank else None)
            loc_cfg = LocalizationConfig(l0=config.l0, spec=spec, delta=config.delta)
            results[fam.value] = localize(
                loc_cfg, r_hat, n_hat, leads,
                rank=r_sel if fam.uses_rank else None,
                true_positions=true_pos,
                scale_mm=config.scale_mm,
                context=ctx,
            )
        return RunRecord(
            run_id=run_id,
            snr_db=snr_db,
            theta0=theta0,
            r_selected=r_sel,
            results=results,
            achieved_snr_db=achieved_snr_db,
            wall_time=time.perf_counter() - t_start,
        )
    except Exception as exc:  # record, don't kill the sweep
        return RunRecord(
            run_id=run_id,
            snr_db=snr_db,
            theta0=(),
            r_selected=0,
            results={},
            wall_time=time.perf_counter() - t_start,
            error=f"{type(exc).__name__}: {exc}",
        )


def _pool_worker(args) -> RunRecord:
    config, snr_idx, run_id = args
    return run_single(config, snr_idx, run_id)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[RunRecord]:
    """All (SNR, run) cells, optionally on a process pool.

    Output order and content are independent of ``jobs``.
    """
    cells = [(config, i, j)
             for i in range(len(config.snr_grid_db))
             for j in range(config.runs)]
    if jobs <= 1:
        leads = build_leadfields(config)
        records = [run_single(config, i, j, leads=leads) for _, i, j in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_pool_worker, cells, chunksize=1))
    return records


def pooled_errors(records, scope: str = "all_iterations") -> dict:
    """Raw per-iteration errors pooled across runs: (snr_db, label) -> array.

    ``scope`` is "all_iterations" or "last_two" (the final two discoveries
    of each run, where crowding between close sources bites hardest).
    """
    if scope not in ("all_iterations", "last_two"):
        raise ContractViolation(f"unknown scope {scope!r}")
    out: dict[tuple[float, str], list[float]] = {}
    for rec in records:
        if rec.error is not None:
            continue
        for label, res in rec.results.items():
            errs = res.errors_mm
            if errs is None:
                continue
            use = errs[-2:] if scope == "last_two" else errs
            out.setdefault((rec.snr_db, label), []).extend(use)
    if not out:
        raise ContractViolation("no errors found in records for aggregation")
    return {k: np.array(v) for k, v in sorted(out.items())}


def aggregate_errors(records, scope: str = "all_iterations") -> dict:
    """Mean and sample std of pooled errors: (snr_db, label) -> (mean, std, n)."""
    pools = pooled_errors(records, scope)
    return {
        k: (float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0, len(v))
        for k, v in pools.items()
    }


def pairwise_pvalues(records, scope: str = "last_two",
                     pairs=DEFAULT_PAIRS) -> dict:
    """Right-tailed rank-sum tests a > b: (snr_db, label_a, label_b) -> result."""
    pools = pooled_errors(records, scope)
    snrs = sorted({k[0] for k in pools})
    out: dict[tuple[float, str, str], RankSumResult] = {}
    for snr in snrs:
        for fam_a, fam_b in pairs:
            key_a, key_b = (snr, fam_a.value), (snr, fam_b.value)
            if key_a in pools and key_b in pools:
                out[(snr, fam_a.value, fam_b.value)] = rank_sum_test(
                    pools[key_a], pools[key_b])
    return out


def rank_histogram(records) -> dict:
    """Counts of the selected rank per SNR level: snr_db -> {rank: count}."""
    out: dict[float, dict[int, int]] = {}
    for rec in records:
        if rec.error is not None:
            continue
        level = out.setdefault(rec.snr_db, {})
        level[rec.r_selected] = level.get(rec.r_selected, 0) + 1
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def write_errors_csv(records, path: str | Path) -> Path:
    """`errors.csv`: one row per (run, index, iteration) Chebyshev error."""
    rows = []
    for rec in records:
        if rec.error is not None:
            continue
        for label in sorted(rec.results):
            res = rec.results[label]
            if res.errors_mm is None:
                continue
            for it, err in enumerate(res.errors_mm, start=1):
                rows.append((rec.run_id, rec.snr_db, label, it, err))
    rows.sort(key=lambda r: (r[1], r[0], r[2], r[3]))
    path = Path(path)
    lines = ["run_id,snr_db,index,iteration,error_mm"]
    lines += [f"{rid},{_fmt(snr)},{label},{it},{_fmt(err)}"
              for rid, snr, label, it, err in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_pvalues_csv(records, path: str | Path,
                      scopes=("all_iterations", "last_two")) -> Path:
    """`pvalues.csv`: rank-sum comparisons per scope, SNR, and index pair."""
    lines = ["scope,snr_db,index_a,index_b,p_value,u_statistic,method,n_a,n_b"]
    for scope in scopes:
        tests = pairwise_pvalues(records, scope=scope)
        for (snr, la, lb), res in sorted(tests.items()):
            lines.append(
                f"{scope},{_fmt(snr)},{la},{lb},{_fmt(res.p_value)},"
                f"{_fmt(res.u_statistic)},{res.method},{res.n_a},{res.n_b}"
            )
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_ranks_csv(records, path: str | Path) -> Path:
    """`ranks.csv`: histogram of selected ranks per SNR level."""
    hist = rank_histogram(records)
    lines = ["snr_db,rank,count"]
    for snr in sorted(hist):
        for r in sorted(hist[snr]):
            lines.append(f"{_fmt(snr)},{r},{hist[snr][r]}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_all_csv(records, out_dir: str | Path) -> dict:
    """Write the three canonical CSVs into ``out_dir``; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {
        "errors": write_errors_csv(records, out_dir / "errors.csv"),
        "pvalues": write_pvalues_csv(records, out_dir / "pvalues.csv"),
        "ranks": write_ranks_csv(records, out_dir / "ranks.csv"),
    }
