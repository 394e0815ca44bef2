"""Synthetic forward models: leadfield dictionaries and source configurations.

The main generator places candidate locations on a regular 3-D grid inside a
ball and builds leadfield columns by Gaussian-kernel mixing of an i.i.d.
Gaussian matrix, so that spatial proximity implies column correlation.  The
``coherence`` knob sets the target correlation between columns of adjacent
grid points, which is exactly the ill-conditioned regime the reduced-rank
indices are designed for.  A secondary analytic generator produces
single-sphere EEG dipole potentials for more realistic column structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import eval_legendre, lpmv

from .matcore import ContractViolation, psd_sqrt

#: Default head radius in meters (90 mm); localization errors in mm follow
#: directly from positions expressed in meters.
DEFAULT_RADIUS_M = 0.09


@dataclass(frozen=True)
class LeadfieldSet:
    """Dictionary of candidate source locations and their leadfield columns.

    Attributes
    ----------
    columns : ndarray, shape (m, s)
        One sensor-space column per candidate location.
    positions : ndarray, shape (s, 3)
        Cartesian coordinates in meters.
    spacing : float
        Grid step between neighboring candidates (meters); 0 if unknown.
    radius : float
        Radius of the ball containing the candidates (meters).
    """

    columns: np.ndarray
    positions: np.ndarray
    spacing: float
    radius: float

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        if cols.ndim != 2 or pos.ndim != 2 or pos.shape[1] != 3:
            raise ContractViolation(
                f"bad leadfield shapes: columns {cols.shape}, positions {pos.shape}"
            )
        if cols.shape[1] != pos.shape[0]:
            raise ContractViolation(
                f"column count {cols.shape[1]} != position count {pos.shape[0]}"
            )
        if not (np.isfinite(cols).all() and np.isfinite(pos).all()):
            raise ContractViolation("leadfields contain non-finite entries")
        # Coincident candidates make H() rank-deficient by construction.
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 1e-12:
            i, j = np.unravel_index(np.argmin(dist), dist.shape)
            raise ContractViolation(
                f"duplicate candidate positions at indices {i} and {j}"
            )
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "positions", pos)

    @property
    def m(self) -> int:
        return self.columns.shape[0]

    @property
    def s(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class SourceModel:
    """Ground-truth configuration: active sources, their covariance, noise.

    ``theta0`` indexes the active candidates, ``H0`` holds the matching
    leadfield columns, ``Q`` is the source covariance and ``N`` the sensor
    noise covariance.  Both covariances must be positive definite.
    """

    theta0: tuple[int, ...]
    Q: np.ndarray
    N: np.ndarray
    H0: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.Q, dtype=float)
        n = np.asarray(self.N, dtype=float)
        l0 = len(self.theta0)
        if q.shape != (l0, l0):
            raise ContractViolation(f"Q shape {q.shape} != ({l0}, {l0})")
        if self.H0.shape[1] != l0:
            raise ContractViolation("H0 column count does not match theta0")
        if n.shape != (self.H0.shape[0],) * 2:
            raise ContractViolation("N shape does not match sensor count")
        for name, mat in (("Q", q), ("N", n)):
            lam_min = np.linalg.eigvalsh(0.5 * (mat + mat.T))[0]
            if lam_min <= 0.0:
                raise ContractViolation(
                    f"{name} is not positive definite (min eigenvalue {lam_min:.3e})"
                )


@dataclass(frozen=True)
class CovariancePair:
    """Signal and noise covariances, both symmetric positive definite.

    ``provenance`` records whether the pair is analytic ("exact") or a
    finite-sample estimate ("estimated").  Note that R - N is PSD only for
    exact pairs; estimated pairs carry independent sampling noise, so no
    ordering between R and N is guaranteed or assumed downstream.
    """

    R: np.ndarray
    N: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in ("exact", "estimated"):
            raise ContractViolation(f"unknown provenance {self.provenance!r}")
        for name, mat in (("R", self.R), ("N", self.N)):
            mat = np.asarray(mat, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ContractViolation(f"{name} is not square: {mat.shape}")
            lam_min = np.linalg.eigvalsh(0.5 * (mat + mat.T))[0]
            if lam_min <= 0.0:
                raise ContractViolation(
                    f"{name} is not positive definite (min eigenvalue {lam_min:.3e})"
                )


def _ball_grid(s: int, radius: float) -> tuple[np.ndarray, float]:
    """Regular grid of at least ``s`` points inside a ball; returns (points, step).

    The ``s`` points closest to the center are kept so the selection stays a
    contiguous blob with well-defined nearest neighbors, then sorted
    lexicographically for stable indexing.
    """
    for n in range(2, 200):
        axis = np.linspace(-0.92 * radius, 0.92 * radius, n)
        step = axis[1] - axis[0]
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        pts = pts[np.linalg.norm(pts, axis=1) <= 0.92 * radius]
        if len(pts) >= s:
            order = np.lexsort(pts.T)
            pts = pts[order]
            dist = np.linalg.norm(pts, axis=1)
            keep = np.sort(np.argsort(dist, kind="stable")[:s])
            return pts[keep], float(step)
    raise ContractViolation(f"cannot place {s} grid points inside the ball")


def generate_leadfields(
    m: int,
    s: int,
    coherence: float = 0.0,
    seed: int = 0,
    radius: float = DEFAULT_RADIUS_M,
) -> LeadfieldSet:
    """Random smooth leadfield dictionary on a ball grid.

    Columns are built as Gaussian-kernel mixtures of an i.i.d. Gaussian
    matrix and normalized to unit norm.  The kernel width is chosen so the
    correlation between columns of adjacent grid points is approximately
    ``coherence``; ``coherence = 0`` disables mixing entirely.  Output is
    deterministic for a fixed seed.

    Parameters
    ----------
    m, s : int
        Sensor count and candidate count.
    coherence : float
        Target adjacent-column correlation in [0, 1).
    seed : int
        RNG seed.
    radius : float
        Ball radius in meters.
    """
    if not 0.0 <= coherence < 1.0:
        raise ContractViolation(f"coherence must be in [0, 1), got {coherence}")
    if m < 1 or s < 1:
        raise ContractViolation("m and s must be positive")
    positions, step = _ball_grid(s, radius)
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((m, s))
    if coherence > 0.0:
        sigma = step / (2.0 * np.sqrt(-np.log(coherence)))
        diff = positions[:, None, :] - positions[None, :, :]
        weights = np.exp(-(diff**2).sum(axis=2) / (2.0 * sigma**2))
        cols = base @ weights.T
    else:
        cols = base
    cols = cols / np.linalg.norm(cols, axis=0, keepdims=True)
    return LeadfieldSet(columns=cols, positions=positions, spacing=step, radius=radius)


def sphere_dipole_leadfields(
    m: int,
    s: int,
    seed: int = 0,
    radius: float = DEFAULT_RADIUS_M,
    conductivity: float = 0.33,
    n_terms: int = 80,
) -> LeadfieldSet:
    """Analytic EEG leadfields for dipoles in a homogeneous conducting sphere.

    Electrodes sit on a Fibonacci layout over the upper part of the sphere;
    candidate dipoles sit on the interior ball grid (restricted to 85% of
    the radius so the Legendre series converges quickly) with a fixed,
    seed-deterministic orientation each.  Potentials are referenced to the
    electrode mean.
    """
    positions, step = _ball_grid(s, 0.85 * radius)
    rng = np.random.default_rng(seed)
    orientations = rng.standard_normal((s, 3))
    orientations /= np.linalg.norm(orientations, axis=1, keepdims=True)

    # Fibonacci layout over the cap z/R > -0.25 (an EEG-cap-like coverage).
    idx = np.arange(m)
    z = 1.0 - (1.0 - (-0.25)) * (idx + 0.5) / m
    phi = idx * np.pi * (3.0 - np.sqrt(5.0))
    rho = np.sqrt(1.0 - z**2)
    electrodes = radius * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])

    cols = np.empty((m, s))
    for j in range(s):
        cols[:, j] = _sphere_potential(
            electrodes, positions[j], orientations[j], radius, conductivity, n_terms
        )
    cols -= cols.mean(axis=0, keepdims=True)  # average reference
    return LeadfieldSet(columns=cols, positions=positions, spacing=step, radius=radius)


def _sphere_potential(electrodes, r_dipole, moment, radius, conductivity, n_terms):
    """Surface potential of a current dipole inside a homogeneous sphere.

    Classical Legendre expansion for an insulating boundary; the dipole
    moment is split into a radial part and a tangential part resolved along
    the electrode's tangential direction in the dipole frame.
    """
    b = np.linalg.norm(r_dipole)
    r_hat = electrodes / np.linalg.norm(electrodes, axis=1, keepdims=True)
    scale = 1.0 / (4.0 * np.pi * conductivity * radius**2)
    if b < 1e-12 * radius:
        # Center dipole: only the n=1 term survives, V = 3 (p . r_hat) / (4 pi sigma R^2).
        return scale * 3.0 * (r_hat @ moment)
    z_hat = r_dipole / b
    f = b / radius
    cosg = np.clip(r_hat @ z_hat, -1.0, 1.0)
    sing = np.sqrt(np.maximum(1.0 - cosg**2, 0.0))
    # Tangential direction of each electrode in the dipole frame.
    tang = r_hat - np.outer(cosg, z_hat)
    tnorm = np.linalg.norm(tang, axis=1, keepdims=True)
    tang = np.divide(tang, tnorm, out=np.zeros_like(tang), where=tnorm > 1e-15)
    p_r = moment @ z_hat
    p_perp = moment - p_r * z_hat
    p_t = tang @ p_perp

    v = np.zeros(len(electrodes))
    for n in range(1, n_terms + 1):
        pn = eval_legendre(n, cosg)
        # lpmv carries the Condon-Shortley phase: lpmv(1, n, x) = -sqrt(1-x^2) Pn'(x).
        pn1 = -lpmv(1, n, cosg)
        coeff = (2.0 * n + 1.0) / n * f ** (n - 1)
        v += coeff * (n * p_r * pn + p_t * pn1)
        if f ** n * (2 * n + 3) < 1e-14:
            break
    return scale * v


def select_leadfield(leads: LeadfieldSet, thetas) -> np.ndarray:
    """Leadfield matrix H(theta): the selected columns, in the order given.

    Indices must be distinct (a source cannot appear twice) and in range.
    """
    thetas = tuple(int(t) for t in thetas)
    if len(set(thetas)) != len(thetas):
        raise ContractViolation(f"duplicate candidate index in {thetas}")
    for t in thetas:
        if not 0 <= t < leads.s:
            raise ContractViolation(f"candidate index {t} out of range [0, {leads.s})")
    return leads.columns[:, list(thetas)].copy()


def assemble_covariances(model: SourceModel) -> CovariancePair:
    """Exact covariance pair R = H0 Q H0^t + N for a ground-truth model."""
    r = model.H0 @ model.Q @ model.H0.T + model.N
    return CovariancePair(R=0.5 * (r + r.T), N=np.asarray(model.N, dtype=float),
                          provenance="exact")


def correlated_source_cov(
    powers, correlation: float = 0.0, mask: np.ndarray | None = None
) -> np.ndarray:
    """Source covariance Q = D^{1/2} C D^{1/2} from powers and a correlation mask.

    ``C`` has unit diagonal and ``correlation * mask[i, j]`` off the
    diagonal (mask defaults to all-ones, i.e. every pair correlated).  The
    result must be comfortably positive definite.
    """
    d = np.asarray(powers, dtype=float)
    if d.ndim != 1 or (d <= 0).any():
        raise ContractViolation("powers must be a vector of positive values")
    l = len(d)
    if mask is None:
        mask = np.ones((l, l))
    mask = np.asarray(mask, dtype=float)
    if mask.shape != (l, l):
        raise ContractViolation(f"mask shape {mask.shape} != ({l}, {l})")
    c = correlation * 0.5 * (mask + mask.T)
    np.fill_diagonal(c, 1.0)
    lam_min = np.linalg.eigvalsh(c)[0]
    if lam_min <= 1e-8:
        raise ContractViolation(
            f"correlation matrix is not safely PD (min eigenvalue {lam_min:.3e}); "
            f"reduce correlation={correlation}"
        )
    root = np.sqrt(d)
    q = c * np.outer(root, root)
    return 0.5 * (q + q.T)


def random_noise_cov(m: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    """Random well-conditioned PD noise covariance (for exact-model studies)."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, 2 * m))
    n = a @ a.T / (2 * m)
    n += 0.1 * (np.trace(n) / m) * np.eye(m)
    return scale * 0.5 * (n + n.T)


def random_source_model(
    leads: LeadfieldSet,
    l0: int,
    seed: int = 0,
    power_range: tuple[float, float] = (0.5, 2.0),
    correlation: float = 0.0,
    noise_scale: float = 1.0,
) -> SourceModel:
    """Random ground-truth model over a leadfield set, deterministic per seed."""
    rng = np.random.default_rng(seed)
    theta0 = tuple(sorted(rng.choice(leads.s, size=l0, replace=False).tolist()))
    powers = rng.uniform(*power_range, size=l0)
    q = correlated_source_cov(powers, correlation)
    n = random_noise_cov(leads.m, seed=int(rng.integers(2**31)), scale=noise_scale)
    return SourceModel(
        theta0=theta0,
        Q=q,
        N=n,
        H0=select_leadfield(leads, theta0),
        positions=leads.positions[list(theta0)],
    )


def whitened_leadfield(h: np.ndarray, q: np.ndarray) -> np.ndarray:
    """H' = H Q^{1/2}: absorb the source covariance into the leadfield."""
    return h @ psd_sqrt(q)


def closest_cluster(leads: LeadfieldSet, k: int) -> tuple[int, ...]:
    """Indices of ``k`` mutually close candidates (smallest max pair distance).

    Each candidate is grouped with its k-1 nearest neighbors; the group
    minimizing the maximum pairwise distance wins (ties resolve to the
    lowest anchor index).  Used to pin the fixed closely-positioned sources
    in benchmark runs.
    """
    if k < 0 or k > leads.s:
        raise ContractViolation(f"cluster size {k} outside [0, s={leads.s}]")
    if k == 0:
        return ()
    if k == 1:
        center = leads.positions.mean(axis=0)
        return (int(np.linalg.norm(leads.positions - center, axis=1).argmin()),)
    pos = leads.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    best = None
    best_span = np.inf
    for i in range(leads.s):
        group = [i] + [int(j) for j in np.argsort(dist[i], kind="stable")[: k - 1]]
        span = max(dist[a, b] for ai, a in enumerate(group) for b in group[ai + 1:])
        if span < best_span:
            best_span = span
            best = tuple(sorted(group))
    return best


def closest_triplet(leads: LeadfieldSet) -> tuple[int, int, int]:
    """Three mutually close candidates; shorthand for ``closest_cluster(leads, 3)``."""
    return closest_cluster(leads, 3)


def save_leadfields(leads: LeadfieldSet, stem: str | Path) -> None:
    """Write a leadfield set as a CSV bundle with a JSON header.

    Layout: ``<stem>.json`` holds {m, s, spacing, radius};
    ``<stem>.positions.csv`` has one ``x,y,z`` row per candidate;
    ``<stem>.columns.csv`` stores the column block row-major (one row of m
    values per candidate).
    """
    stem = Path(stem)
    header = {"m": leads.m, "s": leads.s, "spacing": leads.spacing,
              "radius": leads.radius}
    stem.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
    np.savetxt(stem.with_suffix(".positions.csv"), leads.positions,
               delimiter=",", fmt="%.17g")
    np.savetxt(stem.with_suffix(".columns.csv"), leads.columns.T,
               delimiter=",", fmt="%.17g")


def load_leadfields(stem: str | Path) -> LeadfieldSet:
    """Inverse of :func:`save_leadfields`."""
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    positions = np.loadtxt(stem.with_suffix(".positions.csv"), delimiter=",")
    columns = np.loadtxt(stem.with_suffix(".columns.csv"), delimiter=",").T
    positions = positions.reshape(header["s"], 3)
    columns = columns.reshape(header["m"], header["s"])
    return LeadfieldSet(columns=columns, positions=positions,
                        spacing=header["spacing"], radius=header["radius"])
