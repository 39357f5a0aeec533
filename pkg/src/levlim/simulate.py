"""Monte Carlo oracle: reflected risky/safe ratio and wealth accounting under a band policy.

The ratio is simulated as x = log|zeta|, an arithmetic Brownian motion with drift
mu - sigma^2/2, reflected at the band edges.  The default step is the exact
Skorokhod map of each Gaussian segment: the segment's extreme is drawn from the
Brownian bridge between its endpoints, and the part beyond the edge is the
log-space local time.  Divided by |1 + zeta_-| it is the fraction of shares bought,
divided by |1 + (1 - eps) zeta_+| the fraction sold.  Euler projection, with or
without the mean-overshoot shift, is kept for comparison.

Normals come from one ``numpy.random.Philox`` stream per path, spawned from
``SeedSequence(seed)``, so estimates do not depend on how paths are scheduled.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from . import ergodic, model
from .errors import DomainError, NumericalError
from .fbp import Band
from .model import MarketParams, Preference

GENERATOR = "numpy.random.Philox (SeedSequence.spawn per path)"
# expected overshoot of a Gaussian random walk over a level, in units of sigma sqrt(dt):
# -zeta(1/2) / sqrt(2 pi)
OVERSHOOT_CONSTANT = 0.5825971579390106
N_BINS = 200
# exact bridge reflection, projection with the overshoot shift, plain projection
BOUNDARY_MODES = ("bridge", "shift", "project")
CHUNK = 1 << 16

# accumulator slots
_SUM_PI, _SUM_PI2, _SUM_PIDB, _COST, _L, _U, _STEPS = range(7)
_N_ACC = 7


@dataclass(frozen=True)
class SimConfig:
    dt: float
    n_steps: int
    n_paths: int = 1
    seed: int = 0
    burn_in: Optional[int] = None
    boundary: str = "bridge"
    antithetic: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.n_steps < 1 or self.n_paths < 1:
            raise DomainError("need at least one step and one path")
        if self.burn_in is not None and not 0 <= self.burn_in < self.n_steps:
            raise DomainError("burn_in must lie in [0, n_steps)")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even number of paths")
        if self.boundary not in BOUNDARY_MODES:
            raise DomainError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")

    @property
    def burn_in_steps(self) -> int:
        return self.n_steps // 10 if self.burn_in is None else self.burn_in


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def z_score(self, reference: float) -> float:
        return (self.value - reference) / self.se if self.se > 0 else math.inf


@dataclass
class SimEstimate:
    m_hat: Estimate
    m_hat_drift: Estimate
    s_hat: Estimate
    atc: Estimate
    esr: Estimate
    mean_pi: Estimate
    occupancy_histogram: np.ndarray
    bin_edges: np.ndarray
    buy_rate: float
    sell_rate: float
    seed: int
    generator: str = GENERATOR
    per_path: dict = field(default_factory=dict, repr=False)

    def histogram_sup_relative_error(self, band: Band, params: MarketParams) -> float:
        """Largest relative gap between simulated and exact bin probabilities."""
        exact = bin_probabilities(band, params, self.bin_edges)
        return float(np.max(np.abs(self.occupancy_histogram - exact) / exact))


@numba.njit(cache=True, nogil=True)
def _advance(x, z, u, x_lo, x_hi, drift, vol, sqdt, dt, sgn, buy_at_hi, buy_den, sell_den,
             cost_per_sale, z_lo, inv_bin, n_bins, record_from, step0, acc, hist):
    """Advance one path over len(z) steps; returns the final state.

    With ``u`` of the same length as ``z`` each step is the exact Skorokhod map of the
    Brownian segment: the bridge extreme towards the nearer edge is drawn from ``u``
    and its excursion beyond the edge is the local time.  An empty ``u`` means plain
    projection onto [x_lo, x_hi].
    """
    bridge = u.shape[0] == z.shape[0]
    var = vol * vol * dt
    for k in range(z.shape[0]):
        zeta = sgn * math.exp(x)
        pi = zeta / (1.0 + zeta)
        recording = step0 + k >= record_from
        db = sqdt * z[k]
        if recording:
            acc[0] += pi * dt
            acc[1] += pi * pi * dt
            acc[2] += pi * db
            acc[6] += 1.0
            j = int((zeta - z_lo) * inv_bin)
            if j < 0:
                j = 0
            elif j >= n_bins:
                j = n_bins - 1
            hist[j] += 1.0
        y = x + drift * dt + vol * db
        push_hi = 0.0
        push_lo = 0.0
        if bridge:
            if x_hi - x <= x - x_lo:
                d1, d2 = x_hi - x, x_hi - y
                # P(max > x_hi | x, y) = exp(-2 d1 d2 / var); skip when negligible
                if d2 < 0.0 or d1 * d2 < 20.0 * var:
                    m = 0.5 * (x + y + math.sqrt((y - x) ** 2 - 2.0 * var * math.log(u[k])))
                    if m > x_hi:
                        push_hi = m - x_hi
                        y -= push_hi
            else:
                d1, d2 = x - x_lo, y - x_lo
                if d2 < 0.0 or d1 * d2 < 20.0 * var:
                    m = 0.5 * (x + y - math.sqrt((y - x) ** 2 - 2.0 * var * math.log(u[k])))
                    if m < x_lo:
                        push_lo = x_lo - m
                        y += push_lo
        elif y > x_hi:
            push_hi = y - x_hi
            y = x_hi
        elif y < x_lo:
            push_lo = x_lo - y
            y = x_lo
        x = y
        if recording:
            if push_hi > 0.0:
                if buy_at_hi:
                    acc[4] += push_hi / buy_den
                else:
                    f = push_hi / sell_den
                    acc[5] += f
                    acc[3] += cost_per_sale * f
            if push_lo > 0.0:
                if buy_at_hi:
                    f = push_lo / sell_den
                    acc[5] += f
                    acc[3] += cost_per_sale * f
                else:
                    acc[4] += push_lo / buy_den
        if not (x_lo <= x <= x_hi):
            acc[0] = np.nan
            return x
    return x


class _Kernel:
    """Band geometry in log|zeta| coordinates, shared by all paths."""

    def __init__(self, band: Band, params: MarketParams):
        if band.is_degenerate:
            raise DomainError("cannot simulate a degenerate band")
        ergodic._require_band(band)
        if not band.pi_plus < 1.0 / params.epsilon:
            raise DomainError("band violates the liquidation bound pi_+ < 1/eps")
        self.band = band
        self.params = params
        eps = params.epsilon
        lo, hi = math.log(abs(band.zeta_minus)), math.log(abs(band.zeta_plus))
        # positive branch: buy at small |zeta|; leveraged branch: buy at large |zeta|
        self.buy_at_hi = lo > hi
        self.x_lo, self.x_hi = min(lo, hi), max(lo, hi)
        self.sgn = 1.0 if band.zeta_minus > 0 else -1.0
        self.buy_den = abs(1.0 + band.zeta_minus)
        self.sell_den = abs(1.0 + (1.0 - eps) * band.zeta_plus)
        self.cost_per_sale = eps * band.pi_plus
        self.drift = params.mu - 0.5 * params.sigma**2
        self.vol = params.sigma

    def clip_levels(self, config: "SimConfig"):
        """Reflection levels; pulled inward by the mean overshoot in "shift" mode."""
        if config.boundary != "shift":
            return self.x_lo, self.x_hi
        shift = OVERSHOOT_CONSTANT * self.vol * math.sqrt(config.dt)
        if 2.0 * shift >= self.x_hi - self.x_lo:
            raise DomainError("dt too large: the overshoot correction exceeds the band width")
        return self.x_lo + shift, self.x_hi - shift

    def stationary_start(self, u: float) -> float:
        """Map a uniform u to log|zeta| under the exact stationary law (density prop. to exp((a-1) x))."""
        b = self.params.exponent - 1.0
        span = self.x_hi - self.x_lo
        if abs(b * span) < 1e-12:
            return self.x_lo + u * span
        return self.x_lo + math.log1p(u * math.expm1(b * span)) / b


def _path_seeds(seed: int, n_paths: int):
    return np.random.SeedSequence(seed).spawn(n_paths)


def _run_path(kern: _Kernel, seq, config: SimConfig, edges):
    """One path, or an antithetic pair driven by z and -z; returns a list of (acc, hist)."""
    rng = np.random.Generator(np.random.Philox(seq))
    signs = (1.0, -1.0) if config.antithetic else (1.0,)
    x_lo, x_hi = kern.clip_levels(config)
    u = rng.random()
    xs = [min(max(kern.stationary_start(v), x_lo), x_hi) for v in ((u, 1.0 - u) if config.antithetic else (u,))]
    accs = [np.zeros(_N_ACC) for _ in signs]
    hists = [np.zeros(N_BINS) for _ in signs]
    sqdt = math.sqrt(config.dt)
    z_lo = edges[0]
    inv_bin = N_BINS / (edges[-1] - edges[0])
    record_from = config.burn_in_steps
    bridge = config.boundary == "bridge"
    no_u = np.empty(0)
    done = 0
    while done < config.n_steps:
        m = min(CHUNK, config.n_steps - done)
        z = rng.standard_normal(m)
        ub = 1.0 - rng.random(m) if bridge else no_u
        for i, sgn in enumerate(signs):
            zi = z if sgn > 0 else -z
            xs[i] = _advance(xs[i], zi, ub, x_lo, x_hi, kern.drift, kern.vol, sqdt, config.dt, kern.sgn,
                             kern.buy_at_hi, kern.buy_den, kern.sell_den, kern.cost_per_sale, z_lo,
                             inv_bin, N_BINS, record_from, done, accs[i], hists[i])
        done += m
    for acc in accs:
        if not np.all(np.isfinite(acc)):
            raise NumericalError("non-finite accumulator or state left the band")
    return list(zip(accs, hists))


def _workers() -> int:
    env = os.environ.get("LEVLIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"LEVLIM_THREADS={env!r} is not an integer")
    return os.cpu_count() or 1


def dt_guard(band: Band, params: MarketParams) -> float:
    """Largest recommended step: 1e-4 times the log-width of the band over sigma."""
    return 1e-4 * band.log_width / params.sigma


def bin_probabilities(band: Band, params: MarketParams, edges) -> np.ndarray:
    """Exact stationary probability of each zeta-bin, from the closed-form CDF."""
    edges = np.asarray(edges, dtype=float)
    b = params.exponent - 1.0
    logs = np.log(np.abs(edges))
    ref = logs.min()
    if abs(b) < ergodic.SINGULAR_TOL:
        prim = logs - ref
    else:
        prim = np.expm1(b * (logs - ref)) / b
    mass = np.abs(np.diff(prim))
    return mass / mass.sum()


def simulate_band(band: Band, params: MarketParams, config: SimConfig,
                  pref: Optional[Preference] = None) -> SimEstimate:
    """Time averages after burn-in, with standard errors across independent paths.

    ``m_hat`` is the realized mean wealth return including the sigma dB martingale;
    ``m_hat_drift`` drops that term, which leaves the mean unchanged but removes
    most of the noise.  ``esr`` uses ``pref`` (risk-neutral if omitted).
    """
    kern = _Kernel(band, params)
    if config.dt > dt_guard(band, params):
        warnings.warn(
            f"dt={config.dt:g} exceeds the recommended {dt_guard(band, params):.3g} for this band; "
            "projection bias may dominate",
            RuntimeWarning,
            stacklevel=2,
        )
    gamma = 0.0 if pref is None else pref.gamma
    edges = np.linspace(band.zeta_minus, band.zeta_plus, N_BINS + 1)
    n_units = config.n_paths // 2 if config.antithetic else config.n_paths
    seqs = _path_seeds(config.seed, n_units)
    n_workers = min(_workers(), n_units)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(lambda s: _run_path(kern, s, config, edges), seqs))
    else:
        results = [_run_path(kern, s, config, edges) for s in seqs]
    # merged in path order, so totals are independent of scheduling
    flat = [item for unit in results for item in unit]
    acc = np.array([a for a, _ in flat])
    hist = np.sum([h for _, h in flat], axis=0)
    t = acc[:, _STEPS] * config.dt
    mu, sigma, r = params.mu, params.sigma, params.r
    drift_part = (mu * acc[:, _SUM_PI] - acc[:, _COST]) / t
    per_path = {
        "m_hat": r + drift_part + sigma * acc[:, _SUM_PIDB] / t,
        "m_hat_drift": r + drift_part,
        "s_hat_sq": sigma**2 * acc[:, _SUM_PI2] / t,
        "atc": acc[:, _COST] / t,
        "esr": r + (mu * acc[:, _SUM_PI] - 0.5 * gamma * sigma**2 * acc[:, _SUM_PI2] - acc[:, _COST]) / t,
        "mean_pi": acc[:, _SUM_PI] / t,
    }
    # antithetic partners are dependent; standard errors come from pair means
    width = 2 if config.antithetic else 1
    est = {k: _mean_se(v.reshape(n_units, width).mean(axis=1)) for k, v in per_path.items()}
    s_val = math.sqrt(est["s_hat_sq"].value)
    return SimEstimate(
        m_hat=est["m_hat"],
        m_hat_drift=est["m_hat_drift"],
        s_hat=Estimate(s_val, est["s_hat_sq"].se / (2.0 * s_val)),
        atc=est["atc"],
        esr=est["esr"],
        mean_pi=est["mean_pi"],
        occupancy_histogram=hist / hist.sum(),
        bin_edges=edges,
        buy_rate=float(np.mean(acc[:, _L] / t)),
        sell_rate=float(np.mean(acc[:, _U] / t)),
        seed=config.seed,
        per_path=per_path,
    )


def _mean_se(values) -> Estimate:
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf
    return Estimate(float(np.mean(v)), se)


@dataclass(frozen=True)
class SweepRow:
    width: float
    band: Band
    esr_mc: Estimate
    esr_exact: float


def policy_sweep(center: float, widths, params: MarketParams, pref: Preference,
                 config: SimConfig) -> list:
    """Monte Carlo ESR of bands [center - w/2, center + w/2] in weight coordinates.

    Each row also carries the exact ESR of that band for reference.
    """
    rows = []
    for w in widths:
        band = Band.from_pi(center - 0.5 * w, center + 0.5 * w, params)
        est = simulate_band(band, params, config, pref)
        exact = ergodic.policy_stats(band, params, pref).esr
        rows.append(SweepRow(float(w), band, est.esr, exact))
    return rows


def default_dt(band: Band, params: MarketParams, boundary: str = "bridge", scale: float = 1e-5) -> float:
    """Default step for a band.

    The bridge step has no discretization bias, so it takes the largest recommended
    step, :func:`dt_guard`.  The projection schemes use a fixed ratio
    sigma^2 dt / width^2 (``scale``) so their edge bias is comparable across bands,
    capped at the guard for very wide bands.
    """
    if boundary not in BOUNDARY_MODES:
        raise DomainError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")
    guard = dt_guard(band, params)
    if boundary == "bridge":
        return guard
    return min(scale * band.log_width**2 / params.sigma**2, guard)


__all__ = [
    "BOUNDARY_MODES",
    "GENERATOR",
    "N_BINS",
    "Estimate",
    "SimConfig",
    "SimEstimate",
    "SweepRow",
    "bin_probabilities",
    "default_dt",
    "dt_guard",
    "policy_sweep",
    "simulate_band",
]
