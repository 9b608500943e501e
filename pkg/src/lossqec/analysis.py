"""Post-processing: scaling fits, threshold crossings, gains, contours.

Operates on the harness CSV rows; produces plot-ready tables, no figures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import optimize


@dataclass
class FitResult:
    model: str
    params: dict
    cov: Optional[np.ndarray]
    window: tuple
    residual: float

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "cov": None if self.cov is None else [[float(v) for v in row] for row in self.cov],
            "window": list(self.window),
            "residual": float(self.residual),
        }


@dataclass
class ThresholdEstimate:
    crossing: float
    ci_low: float
    ci_high: float
    distances: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "crossing": float(self.crossing),
            "ci_low": float(self.ci_low),
            "ci_high": float(self.ci_high),
            "distances": list(self.distances),
        }


def fit_power_law(
    x: Sequence[float],
    y: Sequence[float],
    exponent: Optional[float] = None,
    sigma: Optional[Sequence[float]] = None,
) -> FitResult:
    """Least squares of log y against log x, optionally at fixed exponent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least three points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    w = None
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        w = y / np.maximum(sigma, 1e-300)  # d(log y) = dy / y
    if exponent is None:
        if w is None:
            k, a = np.polyfit(lx, ly, 1)
            cov = None
        else:
            (k, a), cov = np.polyfit(lx, ly, 1, w=w, cov=True)
        resid = float(np.sum((ly - (k * lx + a)) ** 2))
        return FitResult(
            "power", {"amplitude": math.exp(a), "exponent": k}, cov,
            (float(x.min()), float(x.max())), resid,
        )
    a = float(np.average(ly - exponent * lx, weights=None if w is None else w**2))
    resid = float(np.sum((ly - (exponent * lx + a)) ** 2))
    return FitResult(
        "power", {"amplitude": math.exp(a), "exponent": float(exponent)}, None,
        (float(x.min()), float(x.max())), resid,
    )


def ansatz_value(p_l, p_d, alpha, beta, gamma, d):
    k = (d + 1) / 2.0
    return (alpha * p_d + beta * p_l) ** k - (beta * p_l) ** k + (gamma * p_l) ** d


def fit_ansatz(
    points: Sequence[tuple[float, float, float]],
    d: int,
    window: float = 3e-4,
    p0: tuple[float, float, float] = (30.0, 15.0, 25.0),
) -> FitResult:
    """Fit the combined-noise scaling form over (p_l, p_d, eps_r) samples.

    Only points with eps_r below ``window`` enter the fit (the asymptotic
    low-error regime); the fit runs on log values with nonnegative
    parameters.
    """
    data = [(pl, pd, y) for pl, pd, y in points if 0.0 < y < window]
    if len(data) < 3:
        raise ValueError("not enough points below the fit window")
    pls = np.array([v[0] for v in data])
    pds = np.array([v[1] for v in data])
    ys = np.log(np.array([v[2] for v in data]))

    def model(_, alpha, beta, gamma):
        return np.log(np.maximum(ansatz_value(pls, pds, alpha, beta, gamma, d), 1e-300))

    popt, pcov = optimize.curve_fit(
        model, np.zeros_like(ys), ys, p0=p0,
        bounds=([0.0, 0.0, 0.0], [np.inf, np.inf, np.inf]), maxfev=20000,
    )
    resid = float(np.sum((model(None, *popt) - ys) ** 2))
    return FitResult(
        "ansatz", {"alpha": popt[0], "beta": popt[1], "gamma": popt[2], "d": d},
        pcov, (0.0, window), resid,
    )


def fit_poly_window(
    p: Sequence[float],
    y: Sequence[float],
    k_min: int,
    k_max: int,
    sigma: Optional[Sequence[float]] = None,
) -> FitResult:
    """Nonnegative least squares for sum_k a_k p^k over k in [k_min, k_max]."""
    if k_min > k_max:
        raise ValueError("empty exponent window")
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(p) < (k_max - k_min + 1):
        raise ValueError("underdetermined window")
    V = np.stack([p**k for k in range(k_min, k_max + 1)], axis=1)
    w = 1.0 / np.maximum(np.asarray(sigma) if sigma is not None else y, 1e-300)
    coef, rnorm = optimize.nnls(V * w[:, None], y * w)
    params = {f"a{k}": coef[i] for i, k in enumerate(range(k_min, k_max + 1))}
    return FitResult("poly", params, None, (k_min, k_max), float(rnorm**2))


def rounded_coefficients(fit: FitResult, floor: float = 1.0) -> dict:
    """Reported view with sub-unit coefficients rounded down to zero."""
    return {k: (0.0 if v < floor else v) for k, v in fit.params.items()}


def estimate_threshold(
    curve_a: Sequence[tuple[float, float, float, int]],
    curve_b: Sequence[tuple[float, float, float, int]],
    distances: tuple[int, int] = (0, 0),
    bootstrap: int = 200,
    seed: int = 0,
) -> ThresholdEstimate:
    """Crossing of two per-round error curves.

    Curves are sequences of (x, eps_r, stderr, shots) sampled on overlapping
    ranges; interpolation is linear in log eps_r.  The confidence interval
    resamples each point binomially.
    """
    xa = [v[0] for v in curve_a]
    xb = [v[0] for v in curve_b]
    if not set(np.round(xa, 12)) & set(np.round(xb, 12)):
        pass  # curves may be sampled on different grids; interpolation handles it

    def crossing(ya, yb) -> Optional[float]:
        lo = max(min(xa), min(xb))
        hi = min(max(xa), max(xb))
        if lo >= hi:
            return None
        grid = np.linspace(lo, hi, 512)
        la = np.interp(grid, xa, np.log(np.maximum(ya, 1e-300)))
        lb = np.interp(grid, xb, np.log(np.maximum(yb, 1e-300)))
        diff = la - lb
        sign = np.sign(diff)
        for i in range(len(grid) - 1):
            if sign[i] != sign[i + 1] and sign[i] != 0:
                # linear root between grid[i], grid[i+1]
                f0, f1 = diff[i], diff[i + 1]
                return float(grid[i] + (grid[i + 1] - grid[i]) * f0 / (f0 - f1))
        if sign[0] == 0:
            return float(grid[0])
        return None

    ya0 = [v[1] for v in curve_a]
    yb0 = [v[1] for v in curve_b]
    x0 = crossing(ya0, yb0)
    if x0 is None:
        raise ValueError("curves do not cross inside the scanned range")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(bootstrap):
        ya = [
            max(rng.binomial(max(s, 1), min(max(y, 1e-12), 1.0)) / max(s, 1), 1e-12)
            for (_, y, _, s) in curve_a
        ]
        yb = [
            max(rng.binomial(max(s, 1), min(max(y, 1e-12), 1.0)) / max(s, 1), 1e-12)
            for (_, y, _, s) in curve_b
        ]
        c = crossing(ya, yb)
        if c is not None:
            samples.append(c)
    if samples:
        lo, hi = np.percentile(samples, [2.5, 97.5])
    else:
        lo = hi = x0
    return ThresholdEstimate(x0, float(lo), float(hi), distances)


def compute_gain(eps_r_a: float, eps_r_b: float, shots_b: int = 0, rounds_b: int = 1):
    """Decimal gain log10(a/b).

    When the denominator vanishes (zero failures), the measured gain is a
    lower bound computed against the one-failure rate; returns
    (gain, is_lower_bound).  Both zero is undefined (None).
    """
    if eps_r_a < 0 or eps_r_b < 0:
        raise ValueError("negative error probabilities")
    if eps_r_a == 0.0 and eps_r_b == 0.0:
        return None, False
    if eps_r_b == 0.0:
        if shots_b <= 0:
            raise ValueError("need shots to bound a zero denominator")
        floor = 1.0 - (1.0 - 1.0 / shots_b) ** (1.0 / max(rounds_b, 1))
        return math.log10(eps_r_a / floor), True
    if eps_r_a == 0.0:
        return -math.inf, False
    return math.log10(eps_r_a / eps_r_b), False


def atom_consumption(protocol: str, p_l: float, d: int) -> float:
    """Average reloaded atoms per correction cycle (bulk estimate)."""
    if protocol == "teleportation":
        return 10.0 * p_l * d * d
    if protocol == "standard":
        return 12.0 * p_l * d * d
    raise ValueError(f"no detection unit: {protocol!r}")


def iso_contours(
    x: Sequence[float],
    y: Sequence[float],
    field2d: np.ndarray,
    levels: Sequence[float],
) -> dict[float, list[np.ndarray]]:
    """Marching-squares contours of a field sampled on a rectangular grid.

    ``field2d[i, j]`` is the value at (x[j], y[i]).  Returns per level a list
    of polylines as (n, 2) arrays in data coordinates.
    """
    import contourpy

    field2d = np.asarray(field2d, dtype=float)
    if field2d.shape != (len(y), len(x)):
        raise ValueError("field shape does not match the grid")
    gen = contourpy.contour_generator(
        x=np.asarray(x, float), y=np.asarray(y, float), z=field2d,
        name="serial", corner_mask=False,
    )
    out: dict[float, list[np.ndarray]] = {}
    fmin, fmax = np.nanmin(field2d), np.nanmax(field2d)
    for lv in levels:
        if not (fmin <= lv <= fmax):
            raise ValueError(f"level {lv} outside data range [{fmin}, {fmax}]")
        out[lv] = [np.asarray(seg) for seg in gen.lines(lv)]
    return out


def contour_straightness(polyline: np.ndarray) -> float:
    """Max perpendicular deviation from the end-to-end chord, normalized by
    the chord length (0 for a perfect line)."""
    p = np.asarray(polyline, dtype=float)
    if len(p) < 3:
        return 0.0
    a, b = p[0], p[-1]
    chord = b - a
    norm = np.hypot(*chord)
    if norm == 0:
        return float("inf")
    rel = p - a
    dev = np.abs(chord[0] * rel[:, 1] - chord[1] * rel[:, 0]) / norm
    return float(dev.max() / norm)


# --- record selection helpers -----------------------------------------------


def select(rows: Iterable[dict], **criteria) -> list[dict]:
    out = []
    for row in rows:
        ok = True
        for k, v in criteria.items():
            rv = row[k]
            if isinstance(v, float):
                ok = ok and abs(rv - v) < 1e-12
            else:
                ok = ok and rv == v
            if not ok:
                break
        if ok:
            out.append(row)
    return sorted(out, key=lambda r: (r["p_l"], r["p_d"]))


def curve(rows: Iterable[dict], axis: str = "p_l") -> list[tuple[float, float, float, int]]:
    return [(r[axis], r["eps_r"], r["stderr"], r["shots"] * r["rounds"]) for r in rows]
