"""SVG figures: frontiers in multiples, trading boundaries, constant-Sharpe frontiers, MC occupancy."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# text as paths keeps the files self-contained
matplotlib.rcParams["svg.fonttype"] = "path"
matplotlib.rcParams["svg.hashsalt"] = "levlim"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _ok(points):
    return [p for p in points if p.ok]


def frontier_multiples(sweeps: dict, path, title: str = "") -> Path:
    """Expected excess return vs volatility, both as multiples of the asset's; one curve per spread."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    top = 1.0
    for eps, points in sorted(sweeps.items()):
        pts = _ok(points)
        s = np.array([p.s_multiple for p in pts])
        m = np.array([p.m_multiple for p in pts])
        ax.plot(s, m, label=f"spread {eps:.2%}")
        k = int(np.argmax(m))
        ax.plot(s[k], m[k], "o", ms=3, color=ax.lines[-1].get_color())
        top = max(top, float(s.max()))
    ax.plot([0, top], [0, top], "k-", lw=0.8, label="no costs")
    ax.set_xlabel("volatility (multiples of asset volatility)")
    ax.set_ylabel("expected excess return (multiples of asset)")
    ax.set_xlim(left=0)
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def trading_boundaries(points, mu: float, sigma: float, path) -> Path:
    """pi_- and pi_+ with the frictionless weight against average volatility."""
    pts = [p for p in _ok(points) if p.band is not None]
    s = np.array([p.s_multiple for p in pts])
    lo = np.array([p.pi_minus for p in pts])
    hi = np.array([p.pi_plus for p in pts])
    with np.errstate(divide="ignore"):
        merton = np.array([mu / (p.gamma * sigma**2) if p.gamma > 0 else np.inf for p in pts])
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.plot(s, lo, label="buy boundary")
    ax.plot(s, hi, label="sell boundary")
    ceiling = 1.2 * float(np.nanmax(hi))
    shown = merton <= ceiling
    ax.plot(s[shown], merton[shown], "k--", lw=0.8, label="frictionless weight")
    ax.set_xlabel("volatility (multiples of asset volatility)")
    ax.set_ylabel("risky weight")
    ax.set_ylim(0, ceiling)
    ax.legend(frameon=False)
    return _save(fig, path)


def constant_sharpe(frontiers: dict, sharpe: float, path) -> Path:
    """Absolute frontiers for assets sharing a Sharpe ratio, with the common frictionless line."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    top = 0.0
    for sigma, points in sorted(frontiers.items()):
        pts = _ok(points)
        s = np.array([p.s_hat for p in pts])
        m = np.array([p.m_hat_excess for p in pts])
        ax.plot(s, m, label=f"volatility {sigma:.0%}")
        top = max(top, float(s.max()))
    ax.plot([0, top], [0, sharpe * top], "k-", lw=0.8, label="no costs")
    ax.set_xlabel("volatility")
    ax.set_ylabel("expected excess return")
    ax.set_xlim(left=0)
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    return _save(fig, path)


def occupancy(edges, simulated, exact, path) -> Path:
    """Simulated bin probabilities of the ratio against the stationary law."""
    centres = 0.5 * (edges[1:] + edges[:-1])
    fig, (ax, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True,
                                  gridspec_kw={"height_ratios": [3, 1]})
    ax.step(centres, simulated, where="mid", label="simulated")
    ax.plot(centres, exact, "k-", lw=0.8, label="stationary law")
    ax.set_ylabel("bin probability")
    ax.legend(frameon=False)
    ax2.plot(centres, simulated / exact - 1.0, lw=0.8)
    ax2.axhline(0.0, color="k", lw=0.5)
    ax2.set_xlabel("risky/safe ratio")
    ax2.set_ylabel("relative error")
    return _save(fig, path)
