import numpy as np
import pytest

from fraclat import build_lattice
from fraclat.energy import GridFunction, PowerP, gagliardo_seminorm, lq_norm
from fraclat.transfer import (
    ContinuumFunction,
    average,
    continuum_energy,
    embed,
    fe_interpolate,
    mollified_recovery,
    pc_l2_distance,
    sample,
)
from fraclat.study import tent_function


def test_embed_half_open_cells():
    lat = build_lattice(1, 0.5, [(-1, 1)], [(-1, 1)])
    u = GridFunction(lat, [1.0, 2.0, 7.0, 3.0, 4.0])
    f = embed(u)
    assert f([[0.24]])[0] == 7.0  # still in the cell of site 0
    assert f([[0.25]])[0] == 3.0  # the tie goes to the right cell
    assert f([[-0.25]])[0] == 7.0  # left edge belongs to the cell of site 0
    assert f([[-0.26]])[0] == 2.0


def test_embed_constant_and_norm_preservation():
    lat = build_lattice(1, 0.25, [(-1, 1)], [(-1, 1)])
    rng = np.random.default_rng(0)
    u = GridFunction(lat, rng.normal(size=lat.n_sites))
    f = embed(u)
    # exact: cells have volume eps, so the L^q norms agree
    for q in (1.0, 2.0, 3.0):
        cell_mids = lat.positions[:, 0].reshape(-1, 1)
        vals = f(cell_mids)
        norm = (lat.eps * np.sum(np.abs(vals) ** q)) ** (1 / q)
        assert norm == pytest.approx(lq_norm(lat, u, q, "global"), rel=1e-14)
    const = embed(GridFunction(lat, np.full(lat.n_sites, 3.3)))
    assert np.all(const(rng.uniform(-1, 1, size=(20, 1))) == 3.3)


def test_average_examples():
    lat = build_lattice(1, 0.5, [(-1, 1)], [(-1, 1)])
    lin = ContinuumFunction(evaluate=lambda p: p[:, 0], dim=1)
    assert np.allclose(average(lin, lat).values, lat.positions[:, 0], rtol=1e-14)
    const = ContinuumFunction(evaluate=lambda p: np.full(p.shape[0], 2.5), dim=1)
    assert np.allclose(average(const, lat).values, 2.5)


def test_duality_identity():
    # <R* v, f>_{L2} = eps^d sum v * (R f), both sides computed independently
    lat = build_lattice(1, 0.25, [(-1, 1)], [(-1, 1)])
    rng = np.random.default_rng(1)
    v = GridFunction(lat, rng.normal(size=lat.n_sites))
    f = ContinuumFunction(evaluate=lambda p: np.sin(2.0 * p[:, 0]) + p[:, 0] ** 3, dim=1)
    rf = average(f, lat)
    rhs = lat.eps * float(v.values @ rf.values)
    # left side: integrate R*v * f over each cell by high-order quadrature
    from numpy.polynomial.legendre import leggauss

    xg, wg = leggauss(12)
    lhs = 0.0
    for pos, val in zip(lat.positions[:, 0], v.values):
        pts = pos + (lat.eps / 2) * xg
        lhs += (lat.eps / 2) * float(wg @ f(pts.reshape(-1, 1))) * val
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_fe_interpolate_d1():
    lat = build_lattice(1, 0.5, [(-1, 1)], [(-1, 1)])
    u = GridFunction(lat, [0.0, 0.0, 0.0, 1.0, 0.0])
    q = fe_interpolate(u)
    assert q([[0.25]])[0] == pytest.approx(0.5)
    assert np.allclose(q(lat.positions), u.values, atol=1e-14)


def test_fe_interpolate_d2_center():
    lat = build_lattice(2, 1.0, [(0, 1), (0, 1)], [(0, 1), (0, 1)])
    vals = np.zeros(lat.n_sites)
    vals[lat.site_ids(np.array([[1, 0]]))[0]] = 1.0
    vals[lat.site_ids(np.array([[0, 1]]))[0]] = 1.0
    q = fe_interpolate(GridFunction(lat, vals))
    assert q(np.array([[0.5, 0.5]]))[0] == pytest.approx(0.5)


def test_sample():
    lat = build_lattice(1, 0.5, [(-1, 1)], [(-1, 1)])
    assert np.all(sample(ContinuumFunction(lambda p: np.full(p.shape[0], 3.0), dim=1), lat).values == 3.0)
    lin = sample(ContinuumFunction(lambda p: p[:, 0], dim=1), lat)
    assert np.allclose(lin.values, [-1, -0.5, 0, 0.5, 1])
    boxed = ContinuumFunction(lambda p: np.ones(p.shape[0]), dim=1,
                              support_box=np.array([[0.0, 1.0]]))
    assert np.allclose(sample(boxed, lat).values, [0, 0, 1, 1, 1])


def test_mollify_constant_interior():
    big = ContinuumFunction(lambda p: np.full(p.shape[0], 2.0), dim=1)
    m = mollified_recovery(big, 8)
    assert m([[0.3]])[0] == pytest.approx(2.0, abs=1e-7)


def test_mollify_sup_bound_and_convergence():
    tent = tent_function((-1.0, 1.0))
    sup = 1.0
    probes = np.array([[-0.4], [0.1], [0.55]])
    errs = []
    for k in (4, 16, 64):
        m = mollified_recovery(tent, k)
        vals = m(probes)
        assert np.all(np.abs(vals) <= sup + 1e-9)
        errs.append(np.abs(vals - tent(probes)).max())
    assert errs[2] < errs[1] < errs[0]


def test_continuum_energy_constant_zero():
    const = ContinuumFunction(lambda p: np.ones(p.shape[0]), dim=1,
                              smoothness="lipschitz", lipschitz_const=0.0)
    br = continuum_energy(const, 0.5, 2.0, PowerP(2), (-1, 1), quad_n=32)
    assert br.low == 0.0 and br.high == 0.0


def test_continuum_energy_interval_and_width_scaling():
    tent = tent_function((-2.0, 2.0))
    widths, xis = [], (0.4, 0.2, 0.1, 0.05)
    for xi in xis:
        br = continuum_energy(tent, 0.5, 2.0, PowerP(2), (-2, 2), quad_n=512, xi=xi)
        assert br.low <= br.high
        widths.append(br.high - br.low)
    fit = np.polyfit(np.log(xis), np.log(widths), 1)[0]
    assert fit == pytest.approx(2.0 - 1.0, rel=0.2)  # width ~ xi^{p - ps}


def test_continuum_energy_quadrature_refinement():
    tent = tent_function((-2.0, 2.0))
    brackets = [
        continuum_energy(tent, 0.5, 2.0, PowerP(2), (-2, 2), quad_n=n) for n in (64, 128, 256)
    ]
    lo = max(b.low for b in brackets)
    hi = min(b.high for b in brackets)
    assert lo <= hi  # all brackets overlap


def test_continuum_energy_requires_lipschitz():
    rough = ContinuumFunction(lambda p: np.sign(p[:, 0]), dim=1, smoothness="C0")
    with pytest.raises(ValueError):
        continuum_energy(rough, 0.5, 2.0, PowerP(2), (-1, 1))


def test_fe_stability_across_eps():
    # bracketed continuum energy of the interpolant stays within a single
    # constant times the discrete seminorm, uniformly over eps
    rng = np.random.default_rng(3)
    ratios = []
    for k in (3, 4, 5, 6):
        eps = 2.0**-k
        lat = build_lattice(1, eps, [(-1, 1)], [(-1, 1)])
        x = lat.positions[:, 0]
        u = GridFunction(lat, np.maximum(0.0, 1 - np.abs(x)) + 0.2 * np.sin(3 * x))
        q = fe_interpolate(u)
        br = continuum_energy(q, 0.5, 2.0, PowerP(2), (-1, 1), quad_n=128)
        semi = gagliardo_seminorm(lat, u, 0.5, 2.0, "global")
        ratios.append(br.high / semi**2)
    assert max(ratios) / min(ratios) < 2.0


def test_lp_equivalence_of_interpolant():
    for k in (3, 4, 5):
        eps = 2.0**-k
        lat = build_lattice(1, eps, [(-1, 1)], [(-1, 1)])
        rng = np.random.default_rng(10 + k)
        u = GridFunction(lat, rng.normal(size=lat.n_sites))
        q = fe_interpolate(u)
        # L2 norm of the interpolant over the halo by fine sampling
        xs = np.linspace(-1, 1, 4001).reshape(-1, 1)
        qnorm = np.sqrt(np.trapezoid(q(xs)[:, 0] ** 2 if q(xs).ndim > 1 else q(xs) ** 2,
                                     xs[:, 0]))
        unorm = lq_norm(lat, u, 2, "global")
        assert 1 / 3 <= qnorm / unorm <= 3


def test_pc_l2_distance_exact():
    lat1 = build_lattice(1, 0.5, [(-1, 1)], [(-1, 1)])
    lat2 = build_lattice(1, 0.25, [(-1, 1)], [(-1, 1)])
    u1 = GridFunction(lat1, np.ones(lat1.n_sites))
    u2 = GridFunction(lat2, np.zeros(lat2.n_sites))
    assert pc_l2_distance(u1, u2, [(-1, 1)]) == pytest.approx(np.sqrt(2.0), rel=1e-14)
    # step functions: embeddings disagree exactly on [-0.25, -0.125)
    step1 = GridFunction(lat1, np.where(lat1.positions[:, 0] >= 0, 1.0, 0.0))
    step2 = GridFunction(lat2, np.where(lat2.positions[:, 0] >= 0, 1.0, 0.0))
    assert pc_l2_distance(step1, step2, [(-1, 1)]) == pytest.approx(np.sqrt(0.125), rel=1e-14)
