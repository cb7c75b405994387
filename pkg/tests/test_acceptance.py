"""End-to-end acceptance gate: ten numbered criteria, one test (and one
pass/fail line under ``pytest -v``) per criterion.

Each test prints a one-line summary with the measured quantities so the
margins are visible in the captured output of a failing run.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from nslab import (
    DyadicPartition,
    GammaOperator,
    Grid,
    HEAT_Z_CONSTANT,
    PhysicalField,
    PreconditionViolation,
    apply_gamma,
    apply_gamma_inverse,
    build_partition,
    contraction_constant,
    derivative,
    derive_seed,
    divergence_error,
    empirical_lifespan,
    fixed_point_solve,
    gaussian_kernel,
    heat_semigroup,
    heat_trajectory,
    identity_gamma,
    l2_norm,
    leray_project,
    picard_solve,
    q_bilinear,
    random_divfree_field,
    reconstruct,
    besov_norm,
    sample_brownian,
    sobolev_norm,
    taylor_green,
    to_physical,
    to_spectral,
    validate_noise,
    zero_kernel,
    z_norm,
)
from oracles import reference_l2_norm, rk4_navier_stokes

GAMMA = 0.5


def _line(num, name, detail):
    print(f"criterion {num:02d} [{name}] PASS: {detail}")


# -------------------------------------------------------------------------
# 1. partition of unity


def test_c01_partition_of_unity():
    part = DyadicPartition(0, 0)  # window sums are independent of the band range
    tau = np.logspace(np.log10(2.0**-12), np.log10(2.0**12), 10_000)
    unity_err = float(np.max(np.abs(part.phi_sum(tau) - 1.0)))
    sq = part.phi_square_sum(tau)
    sq_min, sq_max = float(np.min(sq)), float(np.max(sq))
    assert unity_err <= 1e-10
    assert sq_min >= 0.5 - 1e-10
    assert sq_max <= 1.0 + 1e-10
    _line(1, "partition-of-unity",
          f"|sum phi - 1| <= {unity_err:.3e}; sum phi^2 in [{sq_min:.6f}, {sq_max:.6f}]")


# -------------------------------------------------------------------------
# 2. block reconstruction and Besov/Sobolev equivalence


def test_c02_reconstruction_and_besov_equivalence():
    g = Grid(16)
    part = build_partition(g)
    worst_recon = 0.0
    ratios = []
    for seed in range(20):
        f = random_divfree_field(g, seed=1000 + seed)
        err = l2_norm(reconstruct(part, f) - f) / l2_norm(f)
        worst_recon = max(worst_recon, err)
        for s in (0.5, 1.0, 1.5):
            ratios.append(besov_norm(part, f, s, 2) / sobolev_norm(f, s))
    ratios = np.asarray(ratios)
    assert worst_recon <= 1e-10
    assert float(np.min(ratios)) >= 1.0 / np.sqrt(2.0) - 1e-6
    assert float(np.max(ratios)) <= 1.0 + 1e-6
    _line(2, "lp-reconstruction",
          f"recon err <= {worst_recon:.3e}; Besov/Sobolev ratio in "
          f"[{np.min(ratios):.6f}, {np.max(ratios):.6f}]")


# -------------------------------------------------------------------------
# 3. structural exactness


def test_c03_structural_exactness():
    g = Grid(16)
    rng = np.random.default_rng(3)
    # div Q = 0 for arbitrary inputs, divergence-free or not
    generic = to_spectral(PhysicalField(g, rng.standard_normal((3, g.n, g.n, g.n))))
    pairs = [
        (random_divfree_field(g, seed=30), random_divfree_field(g, seed=31)),
        (generic, random_divfree_field(g, seed=32)),
    ]
    div_err = max(divergence_error(q_bilinear(x, y)) for x, y in pairs)
    assert div_err <= 1e-10

    model = validate_noise([(7.0, gaussian_kernel(1.0, 1.0))])
    path = sample_brownian(model, 0.5, 32, seed=33)
    op = GammaOperator(g, model, path)
    m = 16  # mid-horizon sample
    f = random_divfree_field(g, seed=34)

    roundtrip = l2_norm(apply_gamma_inverse(op, apply_gamma(op, f, m), m) - f) / l2_norm(f)
    assert roundtrip <= 1e-11

    part = build_partition(g)
    commutators = {
        "block": lambda h: part.block(h, 1),
        "derivative": lambda h: derivative(h, 1),
        "heat": lambda h: heat_semigroup(h, 0.1),
        "leray": lambda h: leray_project(h),
    }
    comm_err = 0.0
    for fn in commutators.values():
        lhs = apply_gamma(op, fn(f), m)
        rhs = fn(apply_gamma(op, f, m))
        comm_err = max(comm_err, l2_norm(lhs - rhs) / l2_norm(rhs))
    assert comm_err <= 1e-12

    decay_margin = np.inf
    for t in (0.01, 0.1, 1.0):
        ft = heat_semigroup(f, t)
        for j in part.bands():
            before = l2_norm(part.block(f, j))
            if before == 0.0:
                continue
            after = l2_norm(part.block(ft, j))
            bound = np.exp(-(9.0 / 16.0) * t * 4.0**j) * before
            decay_margin = min(decay_margin, bound * (1.0 + 1e-12) - after)
            assert after <= bound * (1.0 + 1e-12)
    _line(3, "structural-exactness",
          f"divQ {div_err:.2e}; roundtrip {roundtrip:.2e}; commutators {comm_err:.2e}; "
          f"heat-block decay margin {decay_margin:.2e}")


# -------------------------------------------------------------------------
# 4. eta discipline


def test_c04_eta_discipline():
    g = Grid(16)
    model = validate_noise([(7.0, gaussian_kernel(1.0, 1.0))])
    worst_slack = np.inf
    for i in range(100):
        path = sample_brownian(model, 5.0, 500, seed=derive_seed(4, i))
        op = GammaOperator(g, model, path)
        etas = op.eta_series()
        assert etas[0] == 1.0  # beta(0) = 0 makes the multiplier exactly 1
        bounds = np.array([op.paper_eta_bound(m) for m in range(op.times.size)])
        assert np.all(etas <= bounds * (1.0 + 1e-12)), f"bound violated on path {i}"
        worst_slack = min(worst_slack, float(np.min(np.log(bounds) - np.log(etas))))

    # zero kernel: the multiplier is the scalar exp(lambda beta - t lambda^2 / 2)
    lam = 7.0
    model0 = validate_noise([(lam, zero_kernel())])
    closed_err = 0.0
    for i in range(3):
        path = sample_brownian(model0, 5.0, 500, seed=derive_seed(40, i))
        op = GammaOperator(g, model0, path)
        closed = np.exp(lam * path.values[0] - 0.5 * path.times * lam**2)
        closed_err = max(closed_err, float(np.max(np.abs(op.eta_series() / closed - 1.0))))
    assert closed_err <= 1e-12
    _line(4, "eta-discipline",
          f"100 paths within the exponential bound (min log-slack {worst_slack:.3f}); "
          f"eta(0) = 1 exactly; zero-kernel closed form to {closed_err:.2e}")


# -------------------------------------------------------------------------
# 5. oracle equivalence


def test_c05_oracle_equivalence():
    g = Grid(32)
    u0 = taylor_green(g, amplitude=0.1)
    T, steps = 0.1, 32
    op = identity_gamma(g, np.linspace(0.0, T, steps + 1))
    rep = picard_solve(u0, op, GAMMA, T, steps, tol=1e-12, max_iter=40)
    assert rep.converged
    ours = to_physical(rep.trajectory.fields[-1]).values
    oracle = rk4_navier_stokes(to_physical(u0).values, g.length, T, 2 * steps)
    rel = reference_l2_norm(ours - oracle, g.length) / reference_l2_norm(oracle, g.length)
    assert rel <= 1e-4
    _line(5, "oracle-equivalence", f"Picard vs independent RK4 relative L2 = {rel:.3e}")


# -------------------------------------------------------------------------
# 6. fixed-point lemma, scalar instance


def test_c06_scalar_fixed_point():
    rep = fixed_point_solve(0.1, lambda x, y: x * y, abs, 1.0, tol=1e-15, max_iter=200)
    exact = (1.0 - np.sqrt(0.6)) / 2.0
    err = abs(rep.trajectory - exact)
    assert err <= 1e-12
    with pytest.raises(PreconditionViolation):
        fixed_point_solve(0.3, lambda x, y: x * y, abs, 1.0)
    _line(6, "scalar-fixed-point",
          f"x = 0.1 + x^2 solved to {err:.2e}; datum 0.3 >= 1/4 rejected")


# -------------------------------------------------------------------------
# 7. mild residual, invariant ball, quadrature order


def test_c07_residual_ball_and_refinement():
    g = Grid(16)
    model = validate_noise([(7.0, gaussian_kernel(1.0, 1.0))])
    path = sample_brownian(model, 0.25, 64, seed=derive_seed(7, 0))
    op = GammaOperator(g, model, path)
    worst_resid = 0.0
    for seed in (70, 71, 72):
        u0 = random_divfree_field(g, seed=seed, amplitude=0.05)
        rep = picard_solve(u0, op, GAMMA, 0.25, 32, tol=1e-11)
        assert rep.converged
        worst_resid = max(worst_resid, rep.mild_residual)
        a = heat_trajectory(u0, rep.trajectory.times)
        assert z_norm(rep.trajectory, GAMMA).total <= 2.0 * z_norm(a, GAMMA).total
    assert worst_resid <= 1e-8

    # quadrature refinement on a smooth-in-time transformation; Brownian
    # linear interpolation would cap the observable order below 2
    u0 = random_divfree_field(g, seed=31, amplitude=0.1)
    sols = {}
    for steps in (8, 16, 32, 128):
        opi = identity_gamma(g, np.linspace(0.0, 0.25, steps + 1))
        sols[steps] = picard_solve(
            u0, opi, GAMMA, 0.25, steps, tol=1e-13, max_iter=40
        ).trajectory.fields[-1]
    errs = [sobolev_norm(sols[m] - sols[128], 1.0) for m in (8, 16, 32)]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.7
    _line(7, "residual-ball-refinement",
          f"mild residual <= {worst_resid:.2e}; 2a-ball held; observed orders "
          f"{orders[0]:.2f}, {orders[1]:.2f}")


# -------------------------------------------------------------------------
# 8. lifespan lower bound


def test_c08_lifespan_bound():
    g = Grid(16)
    horizon = 1.0

    # calibrate the contraction constant on the noiseless transformation
    seed_cal = derive_seed(2024, 999)
    c_hat = max(
        contraction_constant(
            GAMMA, T, identity_gamma(g, np.linspace(0.0, horizon, 65)), 8,
            seed=seed_cal, num_steps=16,
        )
        for T in (1.0, 0.5, 0.25)
    )

    # bound check: 20 independent noise paths, fixed large datum
    model = validate_noise([(7.0, gaussian_kernel(1.0, 1.0))])
    u0 = taylor_green(g, amplitude=16.0)
    failures = 0
    margins = []
    for i in range(20):
        path = sample_brownian(model, horizon, 64, seed=derive_seed(77, i))
        op = GammaOperator(g, model, path)
        rep = empirical_lifespan(
            u0, op, GAMMA, horizon, c_hat, levels=16, num_steps=16, max_iter=60
        )
        testable = min(rep.t_star_derived, horizon)
        margins.append(rep.t_empirical / testable)
        if rep.t_empirical < testable:
            failures += 1
    assert failures == 0, f"{failures}/20 paths fell below the derived lower bound"

    # amplitude scaling of the certified window on the noiseless problem
    opi = identity_gamma(g, np.linspace(0.0, horizon, 65))
    amps = 16.0 * 2.0 ** (np.arange(5) / 4.0)
    t_cert = []
    for a in amps:
        rep = empirical_lifespan(
            taylor_green(g, amplitude=a), opi, GAMMA, horizon, c_hat,
            levels=16, num_steps=16, max_iter=60,
        )
        assert rep.t_certified > 0.0
        t_cert.append(rep.t_certified)
    slope = float(np.polyfit(np.log(amps), np.log(t_cert), 1)[0])
    target = -2.0 / GAMMA
    assert abs(slope - target) <= 0.15 * abs(target)
    _line(8, "lifespan-bound",
          f"c_hat = {c_hat:.4g}; 20/20 paths above the bound (min margin "
          f"{min(margins):.1f}x); amplitude slope {slope:.3f} vs {target}")


# -------------------------------------------------------------------------
# 9. heat semigroup Z-norm bound


def test_c09_heat_z_bound():
    g = Grid(16)
    worst = 0.0
    for seed in range(20):
        u = random_divfree_field(g, seed=100 + seed, kmax=4.0)
        denom = sobolev_norm(u, 0.5 + GAMMA)
        for T, steps in ((0.1, 100), (1.0, 300)):
            traj = heat_trajectory(u, np.linspace(0.0, T, steps + 1))
            worst = max(worst, z_norm(traj, GAMMA).total / denom)
    assert worst <= HEAT_Z_CONSTANT + 1e-6

    # counterexample to a constant-1 bound: a single mode at |k| = 2 picks
    # up a strictly positive dissipative contribution
    g8 = Grid(8)
    x1, _, _ = g8.mesh()
    zero = np.zeros_like(x1)
    mode = to_spectral(PhysicalField(g8, np.stack([zero, np.sin(2.0 * x1), zero])))
    traj = heat_trajectory(mode, np.linspace(0.0, 1.0, 4001))
    single = z_norm(traj, GAMMA).total / sobolev_norm(mode, 0.5 + GAMMA)
    assert single > 1.0 + 1e-3
    _line(9, "heat-z-bound",
          f"max ratio {worst:.6f} <= sqrt(3/2) = {HEAT_Z_CONSTANT:.6f}; constant-1 "
          f"violated by single-mode ratio {single:.6f}")


# -------------------------------------------------------------------------
# 10. byte-identical outputs across worker counts


CONFIG = """\
grid.n = 16
gamma = 0.5
noise.channels.1.lambda = 7.0
noise.channels.1.kernel.type = gaussian
noise.channels.1.kernel.amplitude = 1.0
noise.channels.1.kernel.sigma = 1.0
time.horizon = 0.25
time.steps = 16
monte_carlo.num_paths = 8
monte_carlo.base_seed = 10
search.t_probe_max = 0.25
search.levels = 4
initial_data.type = taylor_green
initial_data.amplitude = 0.05
calibration.ensemble_size = 4
calibration.num_steps = 8
"""


def _nslab(*args):
    return subprocess.run(
        [sys.executable, "-c", "from nslab.cli import main; raise SystemExit(main())", *args],
        capture_output=True,
        text=True,
    )


def test_c10_reproducibility_across_workers(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(CONFIG)
    outputs = {}
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        for sub in ("eta-stats", "lifespan"):
            r = _nslab(sub, "--config", str(cfg), "--out", str(out),
                       "--workers", str(workers))
            assert r.returncode == 0, r.stderr
        outputs[workers] = {
            name: (out / name).read_bytes()
            for name in ("eta_stats.csv", "lifespan.csv")
        }
    assert outputs[1] == outputs[8]
    sizes = {k: len(v) for k, v in outputs[1].items()}
    _line(10, "worker-reproducibility",
          f"eta_stats.csv and lifespan.csv byte-identical across 1 and 8 workers "
          f"({sizes['eta_stats.csv']} and {sizes['lifespan.csv']} bytes)")
