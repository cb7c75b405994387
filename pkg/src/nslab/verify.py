"""Named runtime invariant checks.

Each check exercises one mathematical identity or bound of the package on
small seeded inputs and reports PASS/FAIL (or SKIP when the requested
resolution cannot support the check).  ``run_checks`` drives the whole
battery; the ``tamper`` hook deliberately flips one named check to FAIL so
that the reporting and exit-code paths can themselves be tested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .littlewood_paley import besov_norm, build_partition, reconstruct, sobolev_norm, z_norm
from .noise import (
    GammaOperator,
    apply_gamma,
    apply_gamma_inverse,
    gaussian_kernel,
    sample_brownian,
    validate_noise,
)
from .solver import (
    fixed_point_solve,
    heat_trajectory,
    picard_solve,
)
from .spectral import (
    Grid,
    SpectralField,
    divergence_error,
    heat_semigroup,
    hermitian_symmetry_error,
    l2_norm,
    leray_project,
    load_snapshot,
    mean_magnitude,
    physical_l2_norm,
    q_bilinear,
    random_divfree_field,
    save_snapshot,
    tensor_product,
    to_physical,
    to_spectral,
    dealias,
    derivative,
)


@dataclass
class CheckResult:
    name: str
    status: str  # "PASS", "FAIL" or "SKIP"
    detail: str


def _pass_if(ok, detail):
    return ("PASS" if ok else "FAIL"), detail


# --- individual checks ------------------------------------------------------
# Each takes a shared context dict and returns (status, detail).


def _check_partition_unity(ctx):
    part = ctx["part"]
    tau = np.logspace(-3, 4, 20001)
    err = float(np.max(np.abs(part.phi_sum(tau) - 1.0)))
    return _pass_if(err <= 1e-10, f"max |sum phi - 1| = {err:.3e}")


def _check_partition_support(ctx):
    part = ctx["part"]
    inside = np.linspace(0.7501, 8.0 / 3.0 - 1e-4, 500)
    outside = np.concatenate([np.linspace(1e-6, 0.75, 200), np.linspace(8.0 / 3.0, 50.0, 200)])
    leak = float(np.max(np.abs(part.phi(outside))))
    positive_somewhere = float(np.max(part.phi(inside))) > 0.0
    return _pass_if(leak == 0.0 and positive_somewhere, f"leak outside support = {leak:.3e}")


def _check_phi_square_bounds(ctx):
    part = ctx["part"]
    tau = np.logspace(-3, 4, 20001)
    s = part.phi_square_sum(tau)
    lo, hi = float(np.min(s)), float(np.max(s))
    ok = lo >= 0.5 - 1e-12 and hi <= 1.0 + 1e-12
    return _pass_if(ok, f"sum phi^2 in [{lo:.6f}, {hi:.6f}]")


def _check_lp_reconstruction(ctx):
    f = ctx["u_rand"]
    err = np.max(np.abs(reconstruct(ctx["part"], f).coef - f.coef))
    scale = np.max(np.abs(f.coef))
    rel = float(err / scale)
    return _pass_if(rel <= 1e-10, f"relative reconstruction error = {rel:.3e}")


def _check_block_annihilation(ctx):
    part, f = ctx["part"], ctx["u_rand"]
    below = np.max(np.abs(part.block(f, part.j_min - 2).coef))
    above = np.max(np.abs(part.block(f, part.j_max + 2).coef))
    return _pass_if(below == 0.0 and above == 0.0, f"out-of-range blocks: {below:.1e}, {above:.1e}")


def _check_parseval(ctx):
    f = ctx["u_rand"]
    a = l2_norm(f)
    b = physical_l2_norm(to_physical(f))
    rel = abs(a - b) / a
    return _pass_if(rel <= 1e-12, f"|spectral - physical| / norm = {rel:.3e}")


def _check_transform_roundtrip(ctx):
    f = ctx["u_rand"]
    back = to_spectral(to_physical(f))
    rel = float(np.max(np.abs(back.coef - f.coef)) / np.max(np.abs(f.coef)))
    return _pass_if(rel <= 1e-13, f"roundtrip error = {rel:.3e}")


def _check_hermitian_preservation(ctx):
    q = q_bilinear(ctx["u_rand"], ctx["v_rand"])
    err = hermitian_symmetry_error(q)
    return _pass_if(err <= 1e-12, f"Hermitian symmetry error of Q = {err:.3e}")


def _check_zero_mean_preservation(ctx):
    q = q_bilinear(ctx["u_rand"], ctx["v_rand"])
    m = mean_magnitude(q)
    return _pass_if(m == 0.0, f"|mean of Q| = {m:.3e}")


def _check_q_divergence_free(ctx):
    q = q_bilinear(ctx["u_rand"], ctx["v_rand"])
    err = divergence_error(q)
    return _pass_if(err <= 1e-12, f"relative divergence of Q = {err:.3e}")


def _check_convective_oracle(ctx):
    # for divergence-free x, P div(x (x) y) = P(x . grad y) after identical
    # dealiasing of both tensor factors
    x, y = ctx["u_rand"], ctx["v_rand"]
    q = q_bilinear(x, y)
    g = x.grid
    px = to_physical(x).values
    conv = np.empty((3, g.n, g.n, g.n), dtype=complex)
    grads = [[to_physical(derivative(SpectralField(g, y.coef[j][None]), ax + 1)).values[0]
              for ax in range(3)] for j in range(3)]
    for j in range(3):
        adv = sum(px[i] * grads[j][i] for i in range(3))
        c = np.fft.fftn(adv) / g.n**3
        c *= g.dealias_mask
        c[0, 0, 0] = 0.0
        conv[j] = c
    alt = leray_project(SpectralField(g, conv))
    rel = float(np.max(np.abs(alt.coef - q.coef)) / max(np.max(np.abs(q.coef)), 1e-300))
    return _pass_if(rel <= 1e-10, f"convective-form mismatch = {rel:.3e}")


def _check_tensor_symmetry(ctx):
    x, y = ctx["u_rand"], ctx["v_rand"]
    txy = tensor_product(x, y)
    tyx = tensor_product(y, x)
    err = 0.0
    for i in range(3):
        for j in range(3):
            err = max(err, float(np.max(np.abs(txy.coef[3 * i + j] - tyx.coef[3 * j + i]))))
    scale = float(np.max(np.abs(txy.coef)))
    rel = err / scale
    return _pass_if(rel <= 1e-13, f"transpose symmetry error = {rel:.3e}")


def _check_besov_sobolev_equivalence(ctx):
    part, f = ctx["part"], ctx["u_rand"]
    s = 1.5
    ratio = besov_norm(part, f, s, 2) / sobolev_norm(f, s)
    ok = 1.0 / np.sqrt(2.0) - 1e-6 <= ratio <= 1.0 + 1e-6
    return _pass_if(ok, f"Besov(2)/Sobolev ratio = {ratio:.6f}")


def _check_heat_block_decay(ctx):
    part, f = ctx["part"], ctx["u_rand"]
    t = 0.05
    ht = heat_semigroup(f, t)
    worst = 0.0
    for j in part.bands():
        before = l2_norm(part.block(f, j))
        if before == 0.0:
            continue
        after = l2_norm(part.block(ht, j))
        bound = np.exp(-(9.0 / 16.0) * t * 4.0**j) * before
        worst = max(worst, after / bound)
    return _pass_if(worst <= 1.0 + 1e-12, f"max block-decay ratio = {worst:.6f}")


def _check_heat_z_bound(ctx):
    f = ctx["u_rand"]
    gamma = 0.5
    times = np.linspace(0.0, 0.5, 65)
    traj = heat_trajectory(f, times)
    ratio = z_norm(traj, gamma).total / sobolev_norm(f, 0.5 + gamma)
    ok = ratio <= np.sqrt(1.5) + 1e-6
    return _pass_if(ok, f"heat Z ratio = {ratio:.6f} (bound {np.sqrt(1.5):.6f})")


def _check_kernel_symbol_bound(ctx):
    ker = gaussian_kernel(1.3, 0.7)
    r = np.linspace(0.0, 50.0, 5001)
    sup = float(np.max(np.abs(ker.symbol(r))))
    return _pass_if(sup <= ker.l1_norm + 1e-12, f"sup |hhat| = {sup:.6f} vs L1 = {ker.l1_norm}")


def _check_eta_initial_value(ctx):
    op = ctx["op"]
    e0 = op.eta(0)
    return _pass_if(abs(e0 - 1.0) <= 1e-12, f"eta(0) = {e0!r}")


def _check_eta_paper_bound(ctx):
    op = ctx["op"]
    worst = 0.0
    for m in range(op.times.size):
        worst = max(worst, op.eta(m) / op.paper_eta_bound(m))
    return _pass_if(worst <= 1.0 + 1e-12, f"max eta/bound = {worst:.6f}")


def _check_gamma_inverse_roundtrip(ctx):
    op, f = ctx["op"], ctx["u_rand"]
    idx = op.times.size - 1
    back = apply_gamma_inverse(op, apply_gamma(op, f, idx), idx)
    rel = float(np.max(np.abs(back.coef - f.coef)) / np.max(np.abs(f.coef)))
    return _pass_if(rel <= 1e-11, f"Gamma roundtrip error = {rel:.3e}")


def _check_multiplier_commutation(ctx):
    op, f = ctx["op"], ctx["u_rand"]
    idx = op.times.size - 1
    t = 0.1
    a = heat_semigroup(apply_gamma(op, f, idx), t)
    b = apply_gamma(op, heat_semigroup(f, t), idx)
    rel = float(np.max(np.abs(a.coef - b.coef)) / np.max(np.abs(a.coef)))
    return _pass_if(rel <= 1e-12, f"commutation error = {rel:.3e}")


def _check_fixed_point_scalar(ctx):
    a, b = 0.1, 1.0
    report = fixed_point_solve(a, lambda x, y: b * x * y, abs, b, tol=1e-15, max_iter=200)
    exact = (1.0 - np.sqrt(1.0 - 4.0 * a * b)) / (2.0 * b)
    err = abs(report.trajectory - exact)
    return _pass_if(err <= 1e-12, f"scalar fixed-point error = {err:.3e}")


def _check_picard_residual(ctx):
    op, u0 = ctx["op"], ctx["u_small"]
    report = picard_solve(u0, op, 0.5, float(op.times[-1]), op.times.size - 1, tol=1e-11)
    ok = report.converged and report.mild_residual <= 1e-8
    return _pass_if(ok, f"mild residual = {report.mild_residual:.3e} after {report.iterations} iterations")


def _check_picard_ball(ctx):
    op, u0 = ctx["op"], ctx["u_small"]
    report = picard_solve(u0, op, 0.5, float(op.times[-1]), op.times.size - 1, tol=1e-11)
    a = heat_trajectory(u0, report.trajectory.times)
    ratio = z_norm(report.trajectory, 0.5).total / z_norm(a, 0.5).total
    return _pass_if(ratio <= 2.0, f"Z ratio to heat trajectory = {ratio:.4f}")


def _check_quadrature_refinement(ctx):
    steps = ctx["steps"]
    if steps < 8:
        return "SKIP", f"needs >= 8 time steps, have {steps}"
    op, u0 = ctx["op"], ctx["u_small"]
    t_final = float(op.times[-1])
    sols = {}
    for m in (steps // 2, steps):
        rep = picard_solve(u0, op, 0.5, t_final, m, tol=1e-12, max_iter=60)
        sols[m] = rep.trajectory.fields[-1]
    fine = picard_solve(u0, op, 0.5, t_final, 2 * steps, tol=1e-12, max_iter=60).trajectory.fields[-1]
    e_coarse = l2_norm(sols[steps // 2] - fine)
    e_fine = l2_norm(sols[steps] - fine)
    if e_fine == 0.0:
        return "PASS", "refinement error hit machine zero"
    order = float(np.log2(e_coarse / e_fine))
    return _pass_if(order >= 1.7, f"observed refinement order = {order:.3f}")


def _check_snapshot_roundtrip(ctx):
    import os
    import tempfile

    f = ctx["u_rand"]
    fd, path = tempfile.mkstemp(suffix=".nslb")
    os.close(fd)
    try:
        save_snapshot(f, path)
        g = load_snapshot(path, f.grid)
        same = np.array_equal(g.coef, f.coef)
    finally:
        os.unlink(path)
    return _pass_if(same, "bit-exact snapshot roundtrip" if same else "snapshot mismatch")


def _check_dealias_idempotent(ctx):
    f = ctx["u_rand"]
    d1 = dealias(f)
    d2 = dealias(d1)
    same = np.array_equal(d1.coef, d2.coef)
    return _pass_if(same, "dealias is a projection")


_CHECKS = [
    ("partition-unity", _check_partition_unity),
    ("partition-support", _check_partition_support),
    ("phi-square-bounds", _check_phi_square_bounds),
    ("lp-reconstruction", _check_lp_reconstruction),
    ("block-annihilation", _check_block_annihilation),
    ("parseval", _check_parseval),
    ("transform-roundtrip", _check_transform_roundtrip),
    ("dealias-idempotent", _check_dealias_idempotent),
    ("hermitian-preservation", _check_hermitian_preservation),
    ("zero-mean-preservation", _check_zero_mean_preservation),
    ("q-divergence-free", _check_q_divergence_free),
    ("convective-oracle", _check_convective_oracle),
    ("tensor-symmetry", _check_tensor_symmetry),
    ("besov-sobolev-equivalence", _check_besov_sobolev_equivalence),
    ("heat-block-decay", _check_heat_block_decay),
    ("heat-z-bound", _check_heat_z_bound),
    ("kernel-symbol-bound", _check_kernel_symbol_bound),
    ("eta-initial-value", _check_eta_initial_value),
    ("eta-paper-bound", _check_eta_paper_bound),
    ("gamma-inverse-roundtrip", _check_gamma_inverse_roundtrip),
    ("multiplier-commutation", _check_multiplier_commutation),
    ("fixed-point-scalar", _check_fixed_point_scalar),
    ("picard-residual", _check_picard_residual),
    ("picard-ball", _check_picard_ball),
    ("quadrature-refinement", _check_quadrature_refinement),
    ("snapshot-roundtrip", _check_snapshot_roundtrip),
]

CHECK_NAMES = [name for name, _ in _CHECKS]


def _build_context(n, seed, steps, horizon):
    grid = Grid(n)
    model = validate_noise([(7.0, gaussian_kernel(1.0, 1.0))])
    path = sample_brownian(model, horizon, steps, seed)
    op = GammaOperator(grid, model, path)
    return {
        "grid": grid,
        "part": build_partition(grid),
        "u_rand": random_divfree_field(grid, seed=seed + 1),
        "v_rand": random_divfree_field(grid, seed=seed + 2, slope=1.5),
        "u_small": random_divfree_field(grid, seed=seed + 3, amplitude=0.01),
        "op": op,
        "steps": steps,
    }


def run_checks(n=16, seed=0, steps=16, horizon=0.25, tamper=None):
    """Run every invariant check on seeded inputs of the requested size.

    ``tamper`` forces the named check to report FAIL; an unknown name
    raises ValueError before any check runs.
    """
    if tamper is not None and tamper not in CHECK_NAMES:
        raise ValueError(f"unknown check {tamper!r}; known: {', '.join(CHECK_NAMES)}")
    ctx = _build_context(n, seed, steps, horizon)
    results = []
    for name, fn in _CHECKS:
        try:
            status, detail = fn(ctx)
        except Exception as exc:  # a crashed check is a failed check
            status, detail = "FAIL", f"exception: {exc!r}"
        if tamper == name and status != "FAIL":
            status, detail = "FAIL", f"tampered (was {status}: {detail})"
        results.append(CheckResult(name, status, detail))
    return results
