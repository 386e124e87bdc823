"""Acceptance gate: every stated criterion, one pass/fail line each.

Quantitative criteria (1-4) run the cell-division convergence study against
the desk-scale reference; the reference is cached on disk, so only the first
run pays its cost.  Criterion 4 is slow and runs only when
FRAPOP_PAPER_REFERENCE=1 is set.  Property criteria (5-10) are self-contained.
"""
import math
import os

import numpy as np
import pytest

from frapop.fra import build_fbar, build_quantized
from frapop.harness import (
    DESK_REFERENCE,
    OFFSET_REFERENCE,
    PAPER_REFERENCE,
    error_at,
    initial_measure,
    reference_solution,
)
from frapop.measures import (
    ParticleMeasure,
    total_mass,
    w1_bruteforce_oracle,
    w1_normalized,
)
from frapop.model import ModelSpec, cell_division_model, g_fertility, validate
from frapop.solver import SimConfig, run, step_transport, two_particle_oracle

# published convergence errors Err(1, dt, epsilon), first four table rows
PUBLISHED_ERRORS = {
    1e-2: {
        0.1: 1.039119349267744e-3,
        0.05: 8.823037689904696e-4,
        0.025: 1.559106188788983e-4,
        0.0125: 8.584324175849732e-5,
    },
    1e-3: {
        0.1: 1.023703008152967e-3,
        0.05: 8.618079480449228e-4,
        0.025: 1.446641895315060e-4,
        0.0125: 7.307539446483757e-5,
    },
    1e-4: {
        0.1: 1.021598713535499e-3,
        0.05: 8.599090072320180e-4,
        0.025: 1.441428362080116e-4,
        0.0125: 7.245219715669196e-5,
    },
}


def report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", flush=True)


@pytest.fixture(scope="session")
def model():
    return cell_division_model()


@pytest.fixture(scope="session")
def error_cache(model):
    """Memoized Err(1, dt, epsilon) against the desk-scale reference."""
    ref = reference_solution(model, 1.0, *DESK_REFERENCE)
    cache = {}

    def error(dt: float, epsilon: float) -> float:
        key = (dt, epsilon)
        if key not in cache:
            cache[key] = error_at(model, 1.0, dt, epsilon, ref)
        return cache[key]

    return error


class TestQuantitative:
    def test_criterion_01_coarse_row_errors(self, error_cache):
        deviations = []
        for epsilon, rows in PUBLISHED_ERRORS.items():
            for dt, published in rows.items():
                computed = error_cache(dt, epsilon)
                rel = abs(computed - published) / published
                deviations.append((epsilon, dt, rel))
        worst = max(deviations, key=lambda d: d[2])
        ok = all(rel <= 0.20 for _, _, rel in deviations)
        report("criterion-01 published-error reproduction (20%)", ok,
               f"worst relative deviation {worst[2]:.1%} at "
               f"(epsilon={worst[0]:g}, dt={worst[1]:g}); "
               + "; ".join(f"eps={e:g},dt={d:g}:{r:.1%}" for e, d, r in deviations))
        assert ok

    def test_criterion_02_first_order_regime(self, error_cache):
        epsilon = 1e-4
        ladder = [2.5e-2, 1.25e-2, 6.25e-3, 3.125e-3]
        errs = [error_cache(dt, epsilon) for dt in ladder]
        qs = [math.log2(errs[i - 1] / errs[i]) for i in range(1, len(errs))]
        ok = all(0.85 <= q <= 1.15 for q in qs)
        report("criterion-02 first-order regime (q in [0.85, 1.15])", ok,
               "q = " + ", ".join(f"{q:.3f}" for q in qs))
        assert ok

    def test_criterion_03_stagnation_regime(self, model):
        # the desk reference's own step equals the 1.5625e-3 row, which makes
        # that row's error degenerate; measure against the offset reference
        epsilon = 1e-2
        ref = reference_solution(model, 1.0, *OFFSET_REFERENCE)
        ladder = [3.125e-3, 1.5625e-3, 7.8125e-4]
        errs = [error_at(model, 1.0, dt, epsilon, ref) for dt in ladder]
        q1 = math.log2(errs[0] / errs[1])
        q2 = math.log2(errs[1] / errs[2])
        ok = q1 < 0.5 and q2 < 0.5 and q2 < q1
        report("criterion-03 stagnation regime (q < 0.5, decreasing)", ok,
               f"q = {q1:.3f}, {q2:.3f}")
        assert ok

    @pytest.mark.skipif(os.environ.get("FRAPOP_PAPER_REFERENCE") != "1",
                        reason="slow full-reference check; set FRAPOP_PAPER_REFERENCE=1")
    def test_criterion_04_reference_insensitivity(self, model, error_cache):
        full_ref = reference_solution(model, 1.0, *PAPER_REFERENCE)
        shifts = []
        for epsilon, rows in PUBLISHED_ERRORS.items():
            for dt in rows:
                desk = error_cache(dt, epsilon)
                full = error_at(model, 1.0, dt, epsilon, full_ref)
                shifts.append(abs(full - desk) / desk)
        ok = all(s < 0.05 for s in shifts)
        report("criterion-04 reference insensitivity (<5%)", ok,
               f"max shift {max(shifts):.2%}")
        assert ok


class TestProperties:
    def test_criterion_05_particle_count_law(self):
        def const(v):
            return lambda x: np.full_like(np.asarray(x, dtype=np.float64), v)

        failures = []
        for seed in (11, 22, 33):
            rng = np.random.default_rng(seed)
            spec = ModelSpec(
                r=1,
                b=lambda t, mu, v=float(rng.uniform(0.01, 0.08)): const(v),
                c=lambda t, mu, v=float(rng.uniform(0.0, 0.4)): const(v),
                betas=(lambda t, mu, v=float(rng.uniform(0.05, 0.4)): const(v),),
                fs=(lambda y, a=float(rng.uniform(0.2, 0.8)): a * np.asarray(y, dtype=np.float64),),
                x_lo=0.0, x_hi=1.0, cap=1.0,
            )
            k = int(rng.integers(1, 21))
            epsilon = float(rng.choice([0.5, 0.25, 0.125]))
            cfg = SimConfig(T=0.4, N=k, epsilon=epsilon, cap=1.0, dx=0.1,
                            create_all_newborns=True)
            mu0 = ParticleMeasure(rng.uniform(0.41, 0.99, 6), rng.uniform(0.1, 1.0, 6))
            final, _ = run(spec, cfg, mu0)
            J = build_quantized(spec.fs[0], epsilon, 1.0).J
            if len(final) != 6 + J * k:
                failures.append((seed, len(final), 6 + J * k))
        ok = not failures
        report("criterion-05 particle-count law N0 + J*k", ok,
               "exact on 3 randomized models, k <= 20" if ok else f"failures {failures}")
        assert ok

    def test_criterion_06_pure_transport_mass_conservation(self):
        def zero(x):
            return np.zeros_like(np.asarray(x, dtype=np.float64))

        spec = ModelSpec(
            r=1,
            b=lambda t, mu: (lambda x: 0.04 * (1.0 - np.asarray(x, dtype=np.float64))),
            c=lambda t, mu: zero,
            betas=(lambda t, mu: zero,),
            fs=(lambda y: 0.5 * np.asarray(y, dtype=np.float64),),
            x_lo=0.0, x_hi=1.0, cap=1.0,
        )
        rng = np.random.default_rng(99)
        mu0 = ParticleMeasure(np.sort(rng.uniform(0.0, 0.9, 25)), rng.uniform(0.1, 1.0, 25))
        cfg = SimConfig(T=2.0, N=100, epsilon=0.25, cap=1.0, dx=0.1)
        final, traces = run(spec, cfg, mu0)
        ok = (total_mass(final) == total_mass(mu0)
              and all(tr.mass_after == tr.mass_before for tr in traces))
        report("criterion-06 pure-transport mass conservation", ok,
               "total mass bit-identical across 100 steps")
        assert ok

    def test_criterion_07_metric_oracle(self):
        rng = np.random.default_rng(20240502)

        def rand_measure():
            n = int(rng.integers(1, 7))
            return ParticleMeasure(rng.uniform(0.0, 2.0, n), rng.uniform(1e-3, 3.0, n))

        pairs = [(rand_measure(), rand_measure()) for _ in range(500)]
        worst = max(abs(w1_normalized(a, b) - w1_bruteforce_oracle(a, b))
                    for a, b in pairs)
        sym_ok = all(abs(w1_normalized(a, b) - w1_normalized(b, a)) <= 1e-14
                     for a, b in pairs[:100])
        tri_ok = True
        for i in range(0, 297, 3):
            a, b = pairs[i][0], pairs[i + 1][0]
            c = pairs[i + 2][0]
            if w1_normalized(a, b) > w1_normalized(a, c) + w1_normalized(c, b) + 1e-12:
                tri_ok = False
        ok = worst <= 1e-12 and sym_ok and tri_ok
        report("criterion-07 metric oracle (500 pairs, 1e-12)", ok,
               f"max |CDF sweep - transport oracle| = {worst:.2e}; "
               f"symmetry {'ok' if sym_ok else 'violated'}, "
               f"triangle {'ok' if tri_ok else 'violated'}")
        assert ok

    def test_criterion_08_fra_bounds(self):
        rng = np.random.default_rng(20240503)
        maps = [lambda y: 0.5 * np.asarray(y, dtype=np.float64)]
        for _ in range(3):
            a = float(rng.uniform(0.1, 1.0))
            kind = int(rng.integers(0, 2))
            if kind == 0:
                maps.append(lambda y, a=a: a * np.asarray(y, dtype=np.float64))
            else:
                maps.append(lambda y, a=a: np.minimum(np.asarray(y, dtype=np.float64), a))
        bounds_ok = True
        for f in maps:
            q = build_quantized(f, 1e-2, 1.0)
            xs = rng.uniform(0.0, np.nextafter(1.0, 0.0), 100_000)
            gap = np.asarray(f(xs), dtype=np.float64) - q(xs)
            if not (np.all(gap >= 0.0) and np.all(gap < q.epsilon) and np.all(q(xs) <= xs)):
                bounds_ok = False
        q = build_quantized(maps[0], 1e-2, 1.0)
        locs = np.sort(rng.uniform(0.0, 1.0, 2500))
        fbar = build_fbar(q, locs)
        agree_ok = bool(np.array_equal(fbar(locs), q(locs)))
        dense = np.linspace(0.0, np.nextafter(1.0, 0.0), 40_000)
        dev = float(np.max(np.abs(fbar(dense) - q(dense))))
        ok = bounds_ok and agree_ok and dev <= q.epsilon + 1e-15
        report("criterion-08 quantization bounds (1e5 samples)", ok,
               f"0 <= f - f_eps < eps and f_eps <= x on 4 maps; "
               f"rebuild exact on locations, sup deviation {dev:.3e} <= eps")
        assert ok

    def test_criterion_09_ode_oracles(self):
        b = lambda x: 0.1 * (1.0 - np.asarray(x, dtype=np.float64))
        mu = ParticleMeasure([0.5], [1.0])
        out = step_transport(mu, b, dt=0.1)
        exact = 1.0 - 0.5 * np.exp(-0.01)
        transport_err = abs(float(out.locations[0]) - exact)
        oracle_err = max(check.error for check in two_particle_oracle())
        ok = transport_err <= 1e-10 and oracle_err <= 1e-10
        report("criterion-09 ODE oracles (1e-10)", ok,
               f"transport closed-form error {transport_err:.2e}, "
               f"two-particle transcript error {oracle_err:.2e}")
        assert ok

    def test_criterion_10_model_checks(self, model):
        left = g_fertility(0.625)
        right = (640.0 / 117.0) * (-1.0 + 2.0 * 0.625 + 0.0)
        continuity = abs(left - 160.0 / 117.0) < 1e-14 and abs(right - left) < 1e-14
        mu0 = initial_measure(model, dx=0.875 / 512)
        mass_err = abs(total_mass(mu0) - 0.875**5 / 20.0)
        clean = validate(model).ok
        ok = continuity and mass_err <= 1e-12 and clean
        report("criterion-10 model checks", ok,
               f"g junction both pieces 160/117; initial-mass error {mass_err:.2e}; "
               f"validator {'clean' if clean else 'reported violations'}")
        assert ok
