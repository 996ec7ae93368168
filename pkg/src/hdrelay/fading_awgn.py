"""Half-duplex relaying over AWGN hops with continuous fading.

Per-state capacities are log2(1 + snr). For a threshold rho the relay
transmits when snr2 > (1 + snr1)**rho - 1, so

    c1(rho) = E[ log2(1 + snr1) ; snr2 <= (1 + snr1)**rho - 1 ]
    c2(rho) = E[ log2(1 + snr2) ; snr2 >  (1 + snr1)**rho - 1 ]

and the capacity is c1 = c2 at the balancing rho. c1 - c2 is continuous and
non-decreasing in rho for continuous densities, so rho is found by bisection.
Models with atoms (point mass, tabulated grids) have ties with positive
probability and are routed through the discrete solver, which uses a coin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .capacity_solver import PerStateCapacities, solve_from_capacities

DENSITY_ATOL = 1e-4
DEFAULT_NODES = 256
DEFAULT_MC_SAMPLES = 1_000_000
MAX_BRACKET_DOUBLINGS = 60
GRADING_POWER = 4


class FadingModelError(ValueError):
    pass


def _gauss_legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _graded_unit(n: int, power: int = GRADING_POWER) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre in v with u = 1 - (1 - v)**power.

    log2(1 + snr) grows like log(-log(1 - u)) at u = 1; the Jacobian
    power * (1 - v)**(power - 1) flattens that endpoint so the rule keeps
    its convergence rate. Also returns log(1 - u), computed without
    cancellation since u rounds to 1 at the last nodes.
    """
    v, w = _gauss_legendre_unit(n)
    return 1.0 - (1.0 - v) ** power, w * power * (1.0 - v) ** (power - 1), power * np.log1p(-v)


@dataclass(frozen=True)
class RayleighFading:
    """Independent Rayleigh hops: both SNRs exponential with the given means."""

    mean_snr1: float
    mean_snr2: float
    nodes: int = DEFAULT_NODES
    family: str = field(default="rayleigh", init=False)

    def __post_init__(self):
        if not (self.mean_snr1 > 0 and self.mean_snr2 > 0):
            raise FadingModelError("mean SNRs must be positive")
        mass = float(np.sum(_graded_unit(self.nodes)[1]))
        if abs(mass - 1.0) > DENSITY_ATOL:
            raise FadingModelError(f"density integrates to {mass}")

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        return rng.exponential(self.mean_snr1, n), rng.exponential(self.mean_snr2, n)

    def mean_capacities(self) -> tuple[float, float]:
        _, w, log_tail = _graded_unit(self.nodes)
        e1 = float(np.sum(w * np.log2(1.0 - self.mean_snr1 * log_tail)))
        e2 = float(np.sum(w * np.log2(1.0 - self.mean_snr2 * log_tail)))
        return e1, e2


@dataclass(frozen=True)
class DiscreteFading:
    """SNR pairs with probability masses (point masses or a tabulated grid)."""

    snr1: np.ndarray
    snr2: np.ndarray
    probs: np.ndarray
    family: str = "discrete"

    def __post_init__(self):
        s1 = np.atleast_1d(np.asarray(self.snr1, float))
        s2 = np.atleast_1d(np.asarray(self.snr2, float))
        pr = np.atleast_2d(np.asarray(self.probs, float))
        if pr.shape != (s1.size, s2.size):
            raise FadingModelError(f"mass table shape {pr.shape} does not match grids {(s1.size, s2.size)}")
        if np.any(s1 < 0) or np.any(s2 < 0) or np.any(pr < 0):
            raise FadingModelError("SNRs and masses must be non-negative")
        if abs(pr.sum() - 1.0) > DENSITY_ATOL:
            raise FadingModelError(f"density integrates to {pr.sum():.6g}, not 1")
        pr = pr / pr.sum()
        for name, val in (("snr1", s1), ("snr2", s2), ("probs", pr)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def point_mass(cls, snr1: float, snr2: float) -> "DiscreteFading":
        return cls([snr1], [snr2], [[1.0]], family="point_mass")

    @classmethod
    def from_density_grid(cls, snr1, snr2, density) -> "DiscreteFading":
        """Tabulated density f(snr1, snr2) on a rectilinear grid.

        Each node carries its trapezoid-rule cell mass.
        """
        s1 = np.asarray(snr1, float)
        s2 = np.asarray(snr2, float)
        f = np.asarray(density, float)
        mass = f * _trapezoid_weights(s1)[:, None] * _trapezoid_weights(s2)[None, :]
        return cls(s1, s2, mass, family="grid")

    @classmethod
    def from_file(cls, path: str | Path) -> "DiscreteFading":
        """Load a grid density from .npz (snr1, snr2, density) or CSV.

        The CSV layout has a header cell, then the snr2 grid across the first
        row; each following row starts with its snr1 value.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"grid density file not found: {path}")
        if path.suffix == ".npz":
            data = np.load(path)
            return cls.from_density_grid(data["snr1"], data["snr2"], data["density"])
        table = np.loadtxt(path, delimiter=",")
        return cls.from_density_grid(table[1:, 0], table[0, 1:], table[1:, 1:])

    def capacities(self) -> PerStateCapacities:
        return PerStateCapacities(np.log2(1.0 + self.snr1), np.log2(1.0 + self.snr2))

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        flat = self.probs.ravel()
        idx = np.searchsorted(np.cumsum(flat), rng.random(n) * flat.sum(), side="right")
        idx = np.minimum(idx, flat.size - 1)
        i, j = np.divmod(idx, self.snr2.size)
        return self.snr1[i], self.snr2[j]

    def mean_capacities(self) -> tuple[float, float]:
        caps = self.capacities()
        return float(np.sum(self.probs * caps.a[:, None])), float(np.sum(self.probs * caps.b[None, :]))


@dataclass(frozen=True)
class SampledFading:
    """Arbitrary joint SNR law given by a sampler; evaluated by seeded Monte Carlo."""

    sampler: Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]
    n_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0
    family: str = "sampled"

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        g1, g2 = self.sampler(rng, n)
        return np.asarray(g1, float), np.asarray(g2, float)

    def draws(self) -> tuple[np.ndarray, np.ndarray]:
        # one fixed sample set per model, reused for every rho
        return self.sample(np.random.default_rng(self.seed), self.n_samples)

    def mean_capacities(self) -> tuple[float, float]:
        g1, g2 = self.draws()
        return float(np.mean(np.log2(1 + g1))), float(np.mean(np.log2(1 + g2)))


def correlated_rayleigh(mean_snr1: float, mean_snr2: float, corr: float) -> Callable:
    """Sampler for Rayleigh hops whose complex gains have correlation ``corr``."""
    def sampler(rng, n):
        z1 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        z2 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        h2 = corr * z1 + math.sqrt(1 - corr ** 2) * z2
        return mean_snr1 * np.abs(z1) ** 2, mean_snr2 * np.abs(h2) ** 2
    return sampler


FadingModel = RayleighFading | DiscreteFading | SampledFading


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    if x.size == 1:
        return np.ones(1)
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass(frozen=True)
class RatePair:
    c1_bits: float
    c2_bits: float
    c1_stderr: float = 0.0
    c2_stderr: float = 0.0
    est_error: float = 0.0
    flagged: bool = False


@dataclass(frozen=True)
class FadingCapacityReport:
    rho_opt: float
    c1_bits: float
    c2_bits: float
    capacity_bits: float
    coin_prob: float = 0.0
    method: str = "quadrature"
    boundary: bool = False
    diagnostics: dict = field(default_factory=dict)


def _boundary_curve(snr1, rho):
    with np.errstate(over="ignore"):
        return np.expm1(rho * np.log1p(snr1))


def _rayleigh_rates(rho: float, model: RayleighFading, nodes: int) -> tuple[float, float]:
    _, w, log_tail = _graded_unit(nodes)
    snr1 = -model.mean_snr1 * log_tail
    cap1 = np.log2(1.0 + snr1)
    t = _boundary_curve(snr1, rho)
    # u-coordinate of the boundary on the snr2 axis, and 1 - ut
    ut = -np.expm1(-t / model.mean_snr2)
    span = np.exp(-t / model.mean_snr2)
    c1 = float(np.sum(w * cap1 * ut))
    # inner relay-side integral over [ut, 1] per outer node;
    # there 1 - u2 = span * (1 - v)**power
    _, wv, log_tail_v = _graded_unit(nodes)
    live = span > 0
    with np.errstate(divide="ignore"):
        log_span = np.log(span[live])
    snr2 = -model.mean_snr2 * (log_span[:, None] + log_tail_v[None, :])
    inner = np.zeros_like(span)
    inner[live] = span[live] * np.sum(wv[None, :] * np.log2(1.0 + snr2), axis=1)
    c2 = float(np.sum(w * inner))
    return c1, c2


def rate_pair(rho: float, model: FadingModel, flag_tol: float = 1e-5) -> RatePair:
    """Average rates (c1, c2) for threshold ``rho`` > 0 (``inf`` allowed)."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    if isinstance(model, RayleighFading):
        c1, c2 = _rayleigh_rates(rho, model, model.nodes)
        h1, h2 = _rayleigh_rates(rho, model, max(model.nodes // 2, 8))
        err = max(abs(c1 - h1), abs(c2 - h2))
        return RatePair(c1, c2, est_error=err, flagged=err > flag_tol * max(c1, c2, 1.0))
    if isinstance(model, DiscreteFading):
        caps = model.capacities()
        src = caps.b[None, :] <= rho * caps.a[:, None]
        c1 = float(np.sum(model.probs * caps.a[:, None] * src))
        c2 = float(np.sum(model.probs * caps.b[None, :] * ~src))
        return RatePair(c1, c2)
    if isinstance(model, SampledFading):
        g1, g2 = model.draws()
        src = g2 <= _boundary_curve(g1, rho)
        x1 = np.log2(1.0 + g1) * src
        x2 = np.log2(1.0 + g2) * ~src
        n = g1.size
        se1 = float(np.std(x1) / math.sqrt(n))
        se2 = float(np.std(x2) / math.sqrt(n))
        c1, c2 = float(np.mean(x1)), float(np.mean(x2))
        return RatePair(c1, c2, se1, se2, est_error=max(se1, se2),
                        flagged=max(se1, se2) > flag_tol * max(c1, c2, 1.0) * 100)
    raise TypeError(f"unsupported fading model {type(model).__name__}")


def solve_rho(model: FadingModel, tol: float = 1e-9, max_iter: int = 200) -> FadingCapacityReport:
    """Find rho with c1(rho) = c2(rho) and return the capacity.

    Bisection runs on log(rho) over a bracket that starts at [1/64, 64] and is
    widened by doubling until c1 - c2 changes sign; it stops when
    |c1 - c2| <= tol * max(c1, c2).
    """
    e1, e2 = model.mean_capacities()
    if not (e1 > 0 and e2 > 0):
        raise FadingModelError("both hops need positive average capacity")

    if isinstance(model, DiscreteFading):
        report = solve_from_capacities(model.capacities(), model.probs)
        return FadingCapacityReport(
            rho_opt=report.rho_opt, c1_bits=report.c1_bits, c2_bits=report.c2_bits,
            capacity_bits=report.capacity_bits, coin_prob=report.coin_prob_opt,
            method="discrete", boundary=report.boundary,
            diagnostics={"states": list(report.per_state.shape)},
        )

    def g(rho):
        rp = rate_pair(rho, model)
        return rp.c1_bits - rp.c2_bits, rp

    lo, hi = 1.0 / 64, 64.0
    g_lo, rp_lo = g(lo)
    g_hi, rp_hi = g(hi)
    doublings = 0
    while g_lo > 0 and doublings < MAX_BRACKET_DOUBLINGS:
        lo /= 2
        g_lo, rp_lo = g(lo)
        doublings += 1
    while g_hi < 0 and doublings < MAX_BRACKET_DOUBLINGS:
        hi *= 2
        g_hi, rp_hi = g(hi)
        doublings += 1
    method = "quadrature" if isinstance(model, RayleighFading) else "monte_carlo"
    if g_lo > 0 or g_hi < 0:
        rho, rp = (lo, rp_lo) if g_lo > 0 else (hi, rp_hi)
        cap = min(rp.c1_bits, rp.c2_bits)
        return FadingCapacityReport(
            rho_opt=rho, c1_bits=rp.c1_bits, c2_bits=rp.c2_bits, capacity_bits=cap,
            method=method, boundary=True,
            diagnostics={"bracket_doublings": doublings, "note": "no sign change; one hop always dominates"},
        )

    it = 0
    while True:
        mid = math.sqrt(lo * hi)
        gm, rp = g(mid)
        it += 1
        scale = max(rp.c1_bits, rp.c2_bits)
        if abs(gm) <= tol * scale or it >= max_iter or hi / lo - 1.0 < 1e-15:
            break
        if gm < 0:
            lo = mid
        else:
            hi = mid
    diag = {
        "iterations": it,
        "bracket_doublings": doublings,
        "estimated_error": rp.est_error,
        "flagged": rp.flagged,
        "relative_imbalance": abs(gm) / scale if scale else 0.0,
    }
    if isinstance(model, RayleighFading):
        diag["nodes"] = [model.nodes, model.nodes]
    else:
        diag.update(samples=model.n_samples, seed=model.seed,
                    c1_stderr=rp.c1_stderr, c2_stderr=rp.c2_stderr)
    return FadingCapacityReport(
        rho_opt=mid, c1_bits=rp.c1_bits, c2_bits=rp.c2_bits,
        capacity_bits=rp.c1_bits, method=method, diagnostics=diag,
    )


def quantize(model: RayleighFading, levels: int, nodes_per_bin: int = 16) -> tuple[PerStateCapacities, np.ndarray]:
    """Collapse each Rayleigh hop onto ``levels`` equiprobable SNR bins.

    A bin's capacity is the conditional mean of log2(1 + snr) over the bin,
    so the quantized spec keeps both average hop capacities.
    """
    v, wv = _gauss_legendre_unit(nodes_per_bin)
    edges = np.linspace(0.0, 1.0, levels + 1)

    def bin_means(mean):
        u = edges[:-1, None] + np.diff(edges)[:, None] * v[None, :]
        cap = np.log2(1.0 - mean * np.log1p(-u))
        return np.sum(wv[None, :] * cap, axis=1)

    caps = PerStateCapacities(bin_means(model.mean_snr1), bin_means(model.mean_snr2))
    joint = np.full((levels, levels), 1.0 / levels ** 2)
    return caps, joint
