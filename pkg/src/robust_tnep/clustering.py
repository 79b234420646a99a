"""Representative days from an hourly demand/wind history.

Days are clustered with k-means on standardized per-day feature vectors;
each cluster is represented by its medoid, a real day of the input, so
intra-day correlation between signals is kept.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import ClusterError, kmeans2

from .system import DAYS_PER_YEAR, RepresentativeDay, read_hourly_csv, write_hourly_csv

log = logging.getLogger(__name__)

MAX_RESTARTS = 10
N_INIT = 8


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class HourlySeries:
    """Per-day hourly signals: ``demand``/``wind`` map a profile name to a (days, hours) array."""

    labels: tuple
    demand: dict
    wind: dict

    def __post_init__(self):
        n = len(self.labels)
        shapes = {np.shape(a) for a in (*self.demand.values(), *self.wind.values())}
        if not self.labels or not shapes:
            raise ClusteringError("series must contain at least one day and one signal")
        if len(shapes) != 1 or next(iter(shapes))[0] != n:
            raise ClusteringError("every signal needs one complete row per day")
        for name, a in (*self.demand.items(), *self.wind.items()):
            a = np.asarray(a, dtype=float)
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ClusteringError(f"signal {name!r} has negative or non-finite values")
        for name, a in self.wind.items():
            if np.any(np.asarray(a) > 1.0):
                raise ClusteringError(f"wind capacity factor {name!r} exceeds 1")

    @property
    def n_days(self):
        return len(self.labels)

    @property
    def hours(self):
        return np.shape(next(iter({**self.demand, **self.wind}.values())))[1]

    @property
    def signals(self):
        return list(self.demand) + list(self.wind)

    def signal(self, name):
        return np.asarray(self.demand.get(name, self.wind.get(name)), dtype=float)

    def day(self, i):
        return RepresentativeDay(
            weight=0.0,
            demand_factor={k: tuple(float(x) for x in np.asarray(v)[i]) for k, v in self.demand.items()},
            wind_cf={k: tuple(float(x) for x in np.asarray(v)[i]) for k, v in self.wind.items()},
        )

    @classmethod
    def from_csv(cls, path, wind_signals=("wind",)):
        table = read_hourly_csv(path)
        if not table:
            raise ClusteringError(f"{path}: no rows")
        lengths = {len(s) for day in table.values() for s in day.values()}
        if len(lengths) != 1:
            raise ClusteringError(f"{path}: days with missing hours")
        signals = next(iter(table.values())).keys()
        arrays = {s: np.array([table[d][s] for d in table]) for s in signals}
        return cls(
            tuple(table),
            {s: a for s, a in arrays.items() if s not in wind_signals},
            {s: a for s, a in arrays.items() if s in wind_signals},
        )

    def to_csv(self, path):
        write_hourly_csv(path, {lab: {s: self.signal(s)[i] for s in self.signals} for i, lab in enumerate(self.labels)})


def _features(series):
    cols = []
    for name in series.signals:
        a = series.signal(name)
        sd = a.std()
        cols.append((a - a.mean()) / (sd if sd > 0 else 1.0))
    return np.hstack(cols)


def _kmeans(x, k, seed):
    """Best of several k-means runs; restarts with a new seed when a cluster empties."""
    best = None
    attempt = 0
    for run in range(N_INIT):
        while True:
            try:
                cent, lab = kmeans2(x, k, minit="++", missing="raise", seed=seed + run + 1000 * attempt)
                break
            except ClusterError:
                attempt += 1
                if attempt > MAX_RESTARTS:
                    raise ClusteringError(f"empty cluster after {MAX_RESTARTS} restarts") from None
        inertia = float(((x - cent[lab]) ** 2).sum())
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, cent, lab)
    return best[1], best[2]


def _groups_of_duplicates(raw, k):
    """Groups of identical days, largest split until there are ``k`` groups."""
    _, first, inverse = np.unique(raw, axis=0, return_index=True, return_inverse=True)
    groups = [list(np.flatnonzero(inverse.ravel() == g)) for g in np.argsort(first)]
    while len(groups) < k:
        big = max(range(len(groups)), key=lambda i: (len(groups[i]), -i))
        g = groups.pop(big)
        half = len(g) // 2
        groups[big:big] = [g[:half], g[half:]]
    return groups


def build_representative_days(series, k, seed=0):
    """``k`` weighted representative days; weights sum to 365."""
    n = series.n_days
    if k < 1 or k > n:
        raise ClusteringError(f"K={k} must lie in [1, {n}]")
    raw = np.hstack([series.signal(s) for s in series.signals])
    x = _features(series)
    if len(np.unique(raw, axis=0)) <= k:
        # k-means cannot separate identical days; each distinct day is its own cluster
        groups = _groups_of_duplicates(raw, k)
        medoids = [g[0] for g in groups]
    else:
        cent, lab = _kmeans(x, k, seed)
        groups, medoids = [], []
        for c in range(k):
            members = np.flatnonzero(lab == c)
            d = ((x[members] - cent[c]) ** 2).sum(axis=1)
            groups.append(list(members))
            medoids.append(int(members[np.argmin(d)]))
        order = np.argsort([g[0] for g in groups])
        groups = [groups[i] for i in order]
        medoids = [medoids[i] for i in order]
    scale = DAYS_PER_YEAR / n
    out = []
    for g, m in zip(groups, medoids):
        day = series.day(m)
        out.append(RepresentativeDay(len(g) * scale, day.demand_factor, day.wind_cf))
    return out


def assignment(series, days):
    """Index of the representative each input day is closest to (original units)."""
    raw = np.hstack([series.signal(s) for s in series.signals])
    reps = np.array([np.concatenate([np.asarray(d.demand_factor.get(s, d.wind_cf.get(s))) for s in series.signals])
                     for d in days])
    return np.argmin(((raw[:, None, :] - reps[None, :, :]) ** 2).sum(axis=2), axis=1)


def stability_sweep(case, series, k_values, seed=0, config=None, **solve_kwargs):
    """Total annual cost of the robust solve for each number of representative days.

    Failed points are recorded in-row and the sweep carries on.
    """
    from .nested_ccg import solve_robust_tnep

    rows = []
    for k in k_values:
        t0 = time.perf_counter()
        row = {"K": int(k)}
        try:
            days = build_representative_days(series, int(k), seed)
            sol = solve_robust_tnep(case.with_days(days), config, **solve_kwargs)
            row.update(
                capital_cost=sol.capital_cost,
                total_annual_cost=sol.total_annual_cost,
                outer_iterations=sol.log.outer_count,
                converged=sol.converged,
                error=None,
            )
        except Exception as exc:  # one bad point must not end the sweep
            log.warning("sweep point K=%s failed: %s", k, exc)
            row.update(capital_cost=None, total_annual_cost=None, outer_iterations=None, converged=False,
                       error=str(exc))
        row["wall_time"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def synthetic_year(seed=2016, n_days=365, hours=24, load_peak=0.8, load_exponent=3.0):
    """Seeded stand-in for a year of system load and wind capacity factors.

    Load follows a double-peaked daily shape with a seasonal swing, raised to
    ``load_exponent`` so that high-load days are rare, and peaks at
    ``load_peak``. Wind is anti-correlated with load and stronger at night.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    shape = 0.75 + 0.12 * np.exp(-((t - 8) / 2.5) ** 2) + 0.2 * np.exp(-((t - 18) / 3.0) ** 2)
    doy = np.arange(n_days)
    season = 0.1 * np.cos(2 * np.pi * (doy - 200) / 365.0)
    weekend = np.where(doy % 7 >= 5, -0.06, 0.0)
    load = shape[None, :] * (1.0 + season + weekend)[:, None] + rng.normal(0, 0.015, (n_days, hours))
    load = load_peak * np.clip(load / load.max(), 0.0, 1.0) ** load_exponent
    level = rng.beta(2.0, 3.0, n_days)
    diurnal = 0.15 * np.cos(2 * np.pi * (t - 3) / hours)
    wind = level[:, None] + diurnal[None, :] - 0.5 * season[:, None] + rng.normal(0, 0.05, (n_days, hours))
    wind = np.clip(wind, 0.0, 1.0)
    return HourlySeries(tuple(f"d{i + 1:03d}" for i in range(n_days)), {"load": load}, {"wind": wind})


def two_regime_series(n_a=200, n_b=165, hours=24, noise=0.0, seed=0):
    """Days from two regimes: high demand with low wind, and the reverse."""
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    a_load = 0.9 + 0.05 * np.sin(2 * np.pi * t / hours)
    b_load = 0.5 + 0.05 * np.sin(2 * np.pi * t / hours)
    a_wind = np.full(hours, 0.1)
    b_wind = np.full(hours, 0.8)
    load = np.vstack([np.tile(a_load, (n_a, 1)), np.tile(b_load, (n_b, 1))])
    wind = np.vstack([np.tile(a_wind, (n_a, 1)), np.tile(b_wind, (n_b, 1))])
    if noise:
        load = np.clip(load + rng.normal(0, noise, load.shape), 0, None)
        wind = np.clip(wind + rng.normal(0, noise, wind.shape), 0, 1)
    labels = tuple(f"a{i}" for i in range(n_a)) + tuple(f"b{i}" for i in range(n_b))
    return HourlySeries(labels, {"load": load}, {"wind": wind})
