"""Time-series generation and covariance estimation.

Sources follow a stable multivariate autoregressive (MVAR) process; sensor
noise is a mixture of background brain activity (an independent MVAR process
projected through non-active leadfield columns) and white measurement noise.
A recording mimics a pre/post-stimulus protocol: the pre block contains
noise only, the post block adds the source signal on top of the same noise
process.  Noise amplitude is rescaled exactly so the post block hits a
requested SNR, defined on amplitudes:
SNR_dB = 20 log10(||H0 q||_F / ||noise||_F).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .matcore import ContractViolation

#: Samples discarded at the start of every MVAR simulation, per model order.
BURN_IN_PER_ORDER = 10

#: Stability margin: companion spectral radius must stay below 1 - this.
STABILITY_MARGIN = 1e-6


@dataclass(frozen=True)
class MvarModel:
    """Stable MVAR(p) process ``x_t = sum_k A_k x_{t-k} + e_t``.

    ``coeffs`` stacks the lag matrices as (p, d, d); ``noise_cov`` is the
    innovation covariance (d, d); ``mask`` records the coupling mask the
    coefficients were filtered through (all-ones when unconstrained).
    Stability means the companion matrix has spectral radius below
    1 - 1e-6, checked here so sampling can assume it.
    """

    coeffs: np.ndarray
    noise_cov: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.coeffs, dtype=float)
        c = np.asarray(self.noise_cov, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ContractViolation(f"coeffs must be (p, d, d), got {a.shape}")
        if c.shape != a.shape[1:]:
            raise ContractViolation("noise_cov shape does not match process dim")
        if np.linalg.eigvalsh(0.5 * (c + c.T))[0] <= 0:
            raise ContractViolation("innovation covariance must be PD")
        rho = companion_radius(a)
        if rho >= 1.0 - STABILITY_MARGIN:
            raise ContractViolation(f"unstable MVAR model (spectral radius {rho:.6f})")
        object.__setattr__(self, "coeffs", a)
        object.__setattr__(self, "noise_cov", c)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]


@dataclass(frozen=True)
class Recording:
    """Pre/post-stimulus sensor blocks plus the ground truth behind them.

    ``pre`` holds noise only; ``post`` holds signal plus an independent
    stretch of the same noise process.  ``achieved_snr_db`` is the realized
    amplitude ratio on the post block (scaled to match ``snr_db`` exactly up
    to float rounding).
    """

    pre: np.ndarray               # (m, t_pre), noise only
    post: np.ndarray              # (m, t_post), signal + noise
    source_data: np.ndarray       # (l0, t_post)
    theta0: tuple[int, ...]
    snr_db: float
    achieved_snr_db: float
    seed: int
    sample_rate: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pre.shape[1] < 1 or self.post.shape[1] < 1:
            raise ContractViolation("pre and post blocks need at least one sample")
        if not (np.isfinite(self.pre).all() and np.isfinite(self.post).all()):
            raise ContractViolation("recording contains non-finite samples")


def companion_radius(coeffs: np.ndarray) -> float:
    """Spectral radius of the MVAR companion matrix."""
    p, d, _ = coeffs.shape
    comp = np.zeros((p * d, p * d))
    comp[:d] = np.concatenate(list(coeffs), axis=1)
    if p > 1:
        comp[d:, :-d] = np.eye((p - 1) * d)
    return float(np.abs(np.linalg.eigvals(comp)).max())


def random_stable_mvar(
    dim: int,
    order: int = 6,
    mask: np.ndarray | None = None,
    seed: int = 0,
    target_radius: float = 0.95,
) -> MvarModel:
    """Random MVAR model rescaled to a prescribed companion spectral radius.

    Coefficients start i.i.d. Gaussian with geometrically decaying lag
    scale, then every lag matrix is multiplied elementwise by ``mask``
    (identity mask = independent sources; all-ones = fully coupled).
    Scaling lag k by c^k scales every companion eigenvalue by c, so the
    radius is corrected in one step; the loop guards against rounding.
    """
    if not 0.0 < target_radius < 1.0 - STABILITY_MARGIN:
        raise ContractViolation(f"target_radius must be in (0, 1), got {target_radius}")
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((order, dim, dim))
    coeffs *= (0.6 ** np.arange(1, order + 1))[:, None, None] / np.sqrt(dim)
    if mask is not None:
        mask = np.asarray(mask, dtype=float)
        if mask.shape != (dim, dim):
            raise ContractViolation(f"mask shape {mask.shape} != ({dim}, {dim})")
        coeffs = coeffs * mask
    rho = companion_radius(coeffs)
    if rho > 0:
        for attempt in range(100):
            c = target_radius / rho
            coeffs = coeffs * (c ** np.arange(1, order + 1))[:, None, None]
            rho = companion_radius(coeffs)
            if abs(rho - target_radius) < 1e-9:
                break
        else:
            raise ContractViolation(
                f"could not stabilize MVAR model in 100 steps (radius {rho:.4f})"
            )
    return MvarModel(coeffs=coeffs, noise_cov=np.eye(dim), mask=mask)


def sample_mvar(model: MvarModel, n_samples: int, seed) -> np.ndarray:
    """Simulate (dim, n_samples) from the model, discarding the burn-in.

    ``seed`` may be an int, a SeedSequence, or an existing Generator (the
    latter advances the caller's stream).
    """
    if n_samples < 1:
        raise ContractViolation("n_samples must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p, d = model.order, model.dim
    burn = BURN_IN_PER_ORDER * p
    total = n_samples + burn
    chol = np.linalg.cholesky(model.noise_cov)
    innov = chol @ rng.standard_normal((d, total))
    x = np.zeros((d, total))
    for t in range(total):
        acc = innov[:, t].copy()
        for k in range(1, min(p, t) + 1):
            acc += model.coeffs[k - 1] @ x[:, t - k]
        x[:, t] = acc
    return x[:, burn:]


def simulate_recording(
    leads,
    theta0,
    snr_db: float,
    t_pre: int = 500,
    t_post: int = 500,
    seed: int = 0,
    mvar_order: int = 6,
    source_mask: np.ndarray | None = None,
    background_sources: int = 0,
    sensor_noise_db: float = -20.0,
    source_power: str = "unit",
    source_gains: np.ndarray | None = None,
    src_mvar: MvarModel | None = None,
    bg_mvar: MvarModel | None = None,
) -> Recording:
    """Pre/post-stimulus recording for active sources ``theta0`` at exact SNR.

    The active sources follow an MVAR process coupled through
    ``source_mask``.  Noise combines (a) background activity: an
    independent MVAR process mapped through ``background_sources``
    leadfield columns drawn from the non-active candidates, and (b) white
    sensor noise at ``sensor_noise_db`` relative to the background (white
    noise stands alone when there is no background).  One continuous noise
    stream covers both blocks and is scaled so that
    20 log10(||H0 q||_F / ||post-block noise||_F) equals ``snr_db``.
    Passing ``src_mvar``/``bg_mvar`` overrides the freshly drawn models.

    ``source_power`` "unit" (default) rescales each source trace to unit
    RMS, so every active source contributes comparable energy; "natural"
    keeps the raw MVAR variances, which spread over orders of magnitude
    for spectral radii near 1.  ``source_gains``, when given, multiplies
    trace ``i`` by ``source_gains[i]`` after that normalization, tilting
    the relative power of individual sources (order matches ``theta0``).
    """
    from .forward import select_leadfield  # local import to avoid cycle

    theta0 = tuple(int(t) for t in theta0)
    rng = np.random.default_rng(seed)
    l0 = len(theta0)
    if src_mvar is None:
        src_mvar = random_stable_mvar(l0, order=mvar_order, mask=source_mask,
                                      seed=int(rng.integers(2**31)))
    if src_mvar.dim != l0:
        raise ContractViolation("source MVAR dimension does not match theta0")
    if source_power not in ("unit", "natural"):
        raise ContractViolation(f"source_power must be 'unit' or 'natural', "
                                f"got {source_power!r}")
    q = sample_mvar(src_mvar, t_post, rng)
    if source_power == "unit":
        rms = np.sqrt((q**2).mean(axis=1, keepdims=True))
        if (rms <= 0).any():
            raise ContractViolation("degenerate source trace with zero power")
        q = q / rms
    if source_gains is not None:
        gains = np.asarray(source_gains, dtype=float).reshape(-1)
        if gains.shape != (l0,):
            raise ContractViolation(
                f"source_gains has {gains.size} entries for {l0} sources")
        if not np.all(np.isfinite(gains)) or (gains <= 0).any():
            raise ContractViolation("source_gains must be finite and positive")
        q = q * gains[:, None]
    h0 = select_leadfield(leads, theta0)
    signal = h0 @ q
    sig_norm = np.linalg.norm(signal)
    if sig_norm <= 0.0:
        raise ContractViolation("simulated source signal has zero energy")

    m = leads.m
    t_total = t_pre + t_post
    if background_sources > 0:
        pool = np.setdiff1d(np.arange(leads.s), np.array(theta0))
        if background_sources > len(pool):
            raise ContractViolation("not enough non-active candidates for background")
        bg_idx = np.sort(rng.choice(pool, size=background_sources, replace=False))
        if bg_mvar is None:
            bg_mvar = random_stable_mvar(background_sources, order=mvar_order,
                                         mask=np.eye(background_sources),
                                         seed=int(rng.integers(2**31)))
        bg = leads.columns[:, bg_idx] @ sample_mvar(bg_mvar, t_total, rng)
        white = rng.standard_normal((m, t_total))
        white *= 10.0 ** (sensor_noise_db / 20.0) * (
            np.linalg.norm(bg) / np.linalg.norm(white)
        )
        noise = bg + white
    else:
        noise = rng.standard_normal((m, t_total))

    # Calibrate on the post-block noise; the pre block shares the scale so
    # both halves estimate the same noise covariance.
    target_ratio = 10.0 ** (snr_db / 20.0)
    noise *= sig_norm / (target_ratio * np.linalg.norm(noise[:, t_pre:]))
    pre = noise[:, :t_pre]
    post = signal + noise[:, t_pre:]
    achieved = 20.0 * np.log10(sig_norm / np.linalg.norm(noise[:, t_pre:]))
    return Recording(
        pre=pre,
        post=post,
        source_data=q,
        theta0=theta0,
        snr_db=snr_db,
        achieved_snr_db=float(achieved),
        seed=seed,
        meta={"t_pre": t_pre, "t_post": t_post, "mvar_order": src_mvar.order,
              "background_sources": background_sources},
    )


def estimate_cov(
    block: np.ndarray, divisor: str = "n-1", center: bool = True
) -> np.ndarray:
    """Sample covariance of an (m, T) block.

    ``divisor`` selects "n-1" (unbiased, default) or "n".  Centering removes
    the per-channel mean first, matching the zero-mean process assumption.
    """
    block = np.asarray(block, dtype=float)
    if block.ndim != 2:
        raise ContractViolation(f"block must be 2-D, got shape {block.shape}")
    n = block.shape[1]
    if n < 2:
        raise ContractViolation(f"need at least 2 samples, got {n}")
    if divisor not in ("n", "n-1"):
        raise ContractViolation(f"divisor must be 'n' or 'n-1', got {divisor!r}")
    denom = n if divisor == "n" else n - 1
    x = block - block.mean(axis=1, keepdims=True) if center else block
    c = x @ x.T / denom
    return 0.5 * (c + c.T)


def regularize_pd(cov: np.ndarray, ridge_rel: float = 1e-6) -> tuple[np.ndarray, bool]:
    """Ridge-load a covariance: C + ridge_rel * tr(C)/m * I.

    Returns the loaded matrix and a flag that is True when the result is
    positive definite.  A False flag (e.g. the zero matrix, whose trace
    contributes no ridge) is the caller's signal to reject the estimate;
    this function never raises on valid shapes.
    """
    if ridge_rel < 0:
        raise ContractViolation(f"ridge_rel must be >= 0, got {ridge_rel}")
    cov = 0.5 * (cov + cov.T)
    m = cov.shape[0]
    loaded = cov + (ridge_rel * np.trace(cov) / m) * np.eye(m)
    is_pd = bool(np.linalg.eigvalsh(loaded)[0] > 0.0)
    return loaded, is_pd


def save_recording(rec: Recording, stem: str | Path) -> None:
    """Write a recording as ``<stem>.csv`` plus a ``<stem>.json`` sidecar.

    The CSV holds one sensor per row with the pre and post blocks
    concatenated along time; the sidecar carries the block split, theta0,
    the SNR request and achievement, and the seed, so the file pair is
    self-describing.
    """
    stem = Path(stem)
    data = np.concatenate([rec.pre, rec.post], axis=1)
    np.savetxt(stem.with_suffix(".csv"), data, delimiter=",", fmt="%.17g")
    sidecar = {
        "theta0": list(rec.theta0),
        "snr_db": rec.snr_db,
        "achieved_snr_db": rec.achieved_snr_db,
        "seed": rec.seed,
        "sample_rate": rec.sample_rate,
        "m": rec.pre.shape[0],
        "t_pre": rec.pre.shape[1],
        "t_post": rec.post.shape[1],
        "meta": rec.meta,
    }
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_recording(stem: str | Path) -> Recording:
    """Inverse of :func:`save_recording` (source traces are not persisted)."""
    stem = Path(stem)
    data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",")
    side = json.loads(stem.with_suffix(".json").read_text())
    data = data.reshape(side["m"], side["t_pre"] + side["t_post"])
    return Recording(
        pre=data[:, : side["t_pre"]],
        post=data[:, side["t_pre"]:],
        source_data=np.zeros((len(side["theta0"]), 0)),
        theta0=tuple(side["theta0"]),
        snr_db=side["snr_db"],
        achieved_snr_db=side["achieved_snr_db"],
        seed=side["seed"],
        sample_rate=side.get("sample_rate", 1.0),
        meta=side.get("meta", {}),
    )
