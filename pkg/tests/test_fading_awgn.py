import math

import numpy as np
import pytest
from scipy import integrate, special

from hdrelay.capacity_solver import solve_from_capacities
from hdrelay.fading_awgn import (
    DiscreteFading,
    FadingModelError,
    RayleighFading,
    SampledFading,
    correlated_rayleigh,
    quantize,
    rate_pair,
    solve_rho,
)

LN2 = math.log(2.0)


def reference_rates(rho, m1, m2):
    """Rayleigh rates by adaptive quad, with the inner tail in closed form.

    For X ~ Exp(mean m):  E[log2(1+X); X > t]
        = log2(1+t) e^{-t/m} + e^{1/m} E1((1+t)/m) / ln 2.
    """
    def boundary(g1):
        return (1.0 + g1) ** rho - 1.0

    def f1(g1):
        return math.exp(-g1 / m1) / m1

    def c1_integrand(g1):
        return math.log2(1 + g1) * f1(g1) * -math.expm1(-boundary(g1) / m2)

    def c2_integrand(g1):
        t = boundary(g1)
        tail = math.log2(1 + t) * math.exp(-t / m2) + math.exp(1 / m2) * special.exp1((1 + t) / m2) / LN2
        return f1(g1) * tail

    c1 = integrate.quad(c1_integrand, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)[0]
    c2 = integrate.quad(c2_integrand, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)[0]
    return c1, c2


def mc_gap(rho, m1, m2, n=10_000_000, seed=11, chunk=1_000_000):
    """Monte Carlo estimate of c1 - c2 with its standard error."""
    rng = np.random.default_rng(seed)
    s = 0.0
    s2 = 0.0
    for _ in range(n // chunk):
        g1 = rng.exponential(m1, chunk)
        g2 = rng.exponential(m2, chunk)
        src = g2 <= (1 + g1) ** rho - 1
        x = np.where(src, np.log2(1 + g1), -np.log2(1 + g2))
        s += x.sum()
        s2 += np.dot(x, x)
    mean = s / n
    return mean, math.sqrt((s2 / n - mean ** 2) / n)


@pytest.mark.parametrize("rho", [0.3, 1.0, 2.5])
@pytest.mark.parametrize("m1, m2", [(10, 10), (20, 5), (1, 3)])
def test_rayleigh_quadrature_against_reference(rho, m1, m2):
    rp = rate_pair(rho, RayleighFading(m1, m2))
    c1, c2 = reference_rates(rho, m1, m2)
    assert rp.c1_bits == pytest.approx(c1, rel=1e-9)
    assert rp.c2_bits == pytest.approx(c2, rel=1e-9)
    assert not rp.flagged


def test_region_limits():
    model = RayleighFading(10, 4)
    e1, e2 = model.mean_capacities()
    lo = rate_pair(1e-9, model)
    hi = rate_pair(math.inf, model)
    assert lo.c1_bits == pytest.approx(0.0, abs=1e-6)
    assert lo.c2_bits == pytest.approx(e2, rel=1e-6)
    assert hi.c2_bits == pytest.approx(0.0, abs=1e-12)
    assert hi.c1_bits == pytest.approx(e1, rel=1e-12)


def test_mean_capacity_closed_form():
    # E[log2(1+X)] = e^{1/m} E1(1/m) / ln 2 for X ~ Exp(mean m)
    for m in (1.0, 5.0, 20.0):
        e1, _ = RayleighFading(m, 1.0).mean_capacities()
        assert e1 == pytest.approx(math.exp(1 / m) * special.exp1(1 / m) / LN2, rel=1e-6)


def test_symmetric_rates_equal_at_rho_one():
    rp = rate_pair(1.0, RayleighFading(10, 10))
    assert rp.c1_bits == pytest.approx(rp.c2_bits, rel=1e-9)


def test_symmetric_rho_opt_is_one():
    rep = solve_rho(RayleighFading(10, 10))
    assert rep.rho_opt == pytest.approx(1.0, abs=1e-6)
    assert abs(rep.c1_bits - rep.c2_bits) <= 1e-6 * rep.capacity_bits
    assert not rep.boundary


@pytest.mark.slow
def test_weaker_relay_hop_gets_more_slots():
    # Relay hop weaker (mean 5 vs 20): balancing needs a larger Relay region,
    # i.e. a smaller threshold, so rho_opt < 1 and g(1) = c1 - c2 > 0.
    rep = solve_rho(RayleighFading(20, 5))
    assert rep.rho_opt < 1.0
    gap, se = mc_gap(1.0, 20, 5)
    assert gap > 10 * se
    # the solver's threshold balances the MC estimate too
    gap_opt, se_opt = mc_gap(rep.rho_opt, 20, 5)
    assert abs(gap_opt) <= 4 * se_opt


def test_g_is_monotone_and_rates_bounded():
    model = RayleighFading(8, 3)
    rng = np.random.default_rng(5)
    g1, g2 = model.sample(rng, 400_000)
    emax = float(np.mean(np.maximum(np.log2(1 + g1), np.log2(1 + g2))))
    gaps = []
    for rho in np.geomspace(0.05, 20, 30):
        rp = rate_pair(rho, model)
        gaps.append(rp.c1_bits - rp.c2_bits)
        assert rp.c1_bits + rp.c2_bits <= emax * (1 + 1e-2)
    assert all(b >= a for a, b in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("m1, m2", [(1, 1), (20, 5), (3, 15), (1, 20)])
def test_capacity_below_hop_averages(m1, m2):
    model = RayleighFading(m1, m2)
    rep = solve_rho(model)
    e1, e2 = model.mean_capacities()
    assert rep.capacity_bits <= min(e1, e2)
    assert abs(rep.c1_bits - rep.c2_bits) <= 1e-6 * rep.capacity_bits


@pytest.mark.parametrize("g1, g2", [(10.0, 10.0), (3.0, 30.0), (1.0, 0.5)])
def test_point_mass_matches_fixed_channel(g1, g2):
    A, B = math.log2(1 + g1), math.log2(1 + g2)
    rep = solve_rho(DiscreteFading.point_mass(g1, g2))
    assert rep.capacity_bits == pytest.approx(A * B / (A + B), rel=1e-9)
    assert rep.rho_opt == pytest.approx(B / A, rel=1e-9)
    assert rep.coin_prob == pytest.approx(A / (A + B), rel=1e-9)


@pytest.mark.parametrize("m1, m2", [(10, 10), (20, 5), (1, 1)])
def test_discretization_consistency(m1, m2):
    model = RayleighFading(m1, m2)
    exact = solve_rho(model).capacity_bits
    caps, joint = quantize(model, 200)
    approx = solve_from_capacities(caps, joint).capacity_bits
    assert abs(approx - exact) <= 0.01 * exact
    # quantization keeps the hop averages
    e1, e2 = model.mean_capacities()
    assert caps.a.mean() == pytest.approx(e1, rel=1e-5)
    assert caps.b.mean() == pytest.approx(e2, rel=1e-5)


def test_quantization_converges():
    model = RayleighFading(20, 5)
    exact = solve_rho(model).capacity_bits
    errs = [abs(solve_from_capacities(*quantize(model, m)).capacity_bits - exact) for m in (10, 40, 160)]
    assert errs[0] > errs[1] > errs[2]


def test_sampled_model_is_seeded_and_close_to_quadrature():
    sampler = correlated_rayleigh(10, 10, 0.0)
    model = SampledFading(sampler, n_samples=200_000, seed=3)
    r1, r2 = solve_rho(model), solve_rho(model)
    assert r1 == r2
    assert r1.method == "monte_carlo"
    assert r1.capacity_bits == pytest.approx(solve_rho(RayleighFading(10, 10)).capacity_bits, rel=1e-2)
    assert r1.diagnostics["c1_stderr"] > 0


def test_one_hop_dominating_is_flagged_not_fatal():
    # half the draws have snr1 = 0 and always relay, the other half carry
    # almost nothing on the first hop, so c1 < c2 for every rho
    def sampler(rng, n):
        g1 = np.where(np.arange(n) % 2 == 0, 0.0, 1e-6)
        g2 = np.where(np.arange(n) % 2 == 0, 10.0, 1e-6)
        return g1, g2

    rep = solve_rho(SampledFading(sampler, n_samples=10))
    assert rep.boundary


def test_grid_density_from_files(tmp_path):
    # independent exponential density on a fine truncated grid
    x = np.linspace(0, 80, 801)
    y = np.linspace(0, 80, 801)
    f = np.exp(-x / 10)[:, None] / 10 * np.exp(-y / 10)[None, :] / 10
    wx = np.full(x.size, x[1] - x[0])
    wx[[0, -1]] /= 2
    f /= np.sum(f * wx[:, None] * wx[None, :])
    npz = tmp_path / "grid.npz"
    np.savez(npz, snr1=x, snr2=y, density=f)
    csv = tmp_path / "grid.csv"
    table = np.zeros((x.size + 1, y.size + 1))
    table[0, 1:] = y
    table[1:, 0] = x
    table[1:, 1:] = f
    np.savetxt(csv, table, delimiter=",")
    m_npz = DiscreteFading.from_file(npz)
    m_csv = DiscreteFading.from_file(csv)
    np.testing.assert_allclose(m_npz.probs, m_csv.probs, rtol=1e-12)
    exact = solve_rho(RayleighFading(10, 10)).capacity_bits
    assert solve_rho(m_npz).capacity_bits == pytest.approx(exact, rel=1e-2)


def test_grid_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        DiscreteFading.from_file(tmp_path / "missing.npz")
    with pytest.raises(FadingModelError, match="integrates"):
        DiscreteFading([1.0, 2.0], [1.0], [[0.3], [0.3]])


def test_rate_pair_rejects_nonpositive_rho():
    with pytest.raises(ValueError):
        rate_pair(0.0, RayleighFading(1, 1))


def test_rayleigh_rejects_bad_means():
    with pytest.raises(FadingModelError):
        RayleighFading(0.0, 1.0)
