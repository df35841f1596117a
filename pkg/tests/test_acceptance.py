"""Acceptance suite: one test per criterion, each with its runtime budget.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the "acceptance criteria" section of the summary.
"""

import io
import math
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from cartsim import ControlLaw, IntegratorConfig, ModelParams, cli, integrate, jacobian, vector_field
from cartsim import scenario as scn
from cartsim.control import (
    BacksteppingDesign,
    cross_coefficient,
    isolated_z2_coefficient,
    kappa,
    lyapunov_rate,
    pd_condition,
    rate_upper_bound,
    tau_from_a,
)
from cartsim.equilibria import controlled_equilibrium, interior_equilibria, residual, trivial_equilibria
from cartsim.simulate import applied_tau

import oracles

SEED = 8675309


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.2f} s, budget {self.seconds} s"


def random_params(rng, n):
    return [ModelParams(**oracles.random_params(rng)) for _ in range(n)]


def test_c1_jacobian_oracle():
    rng = np.random.default_rng(SEED)
    with Budget(5):
        worst = 0.0
        for p in random_params(rng, 1000):
            s = rng.uniform(0, 1e6, 3)
            J = jacobian(p, s)
            Jfd = oracles.fd_jacobian(lambda v: vector_field(p, v), s)
            worst = max(worst, np.linalg.norm(J - Jfd) / np.linalg.norm(J))
        assert worst < 1e-5, worst
        for p in random_params(rng, 1000):
            origin, _ = trivial_equilibria(p)
            got = np.sort_complex(origin.eigenvalues)
            want = np.sort_complex(np.array([p.r, p.phi - p.rho, -p.mu], dtype=complex))
            assert np.max(np.abs(got - want)) <= 1e-10


def test_c2_equilibrium_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    with Budget(30):
        draws = 1000
        Q = {n: 1.0 - rng.random(draws) for n in oracles.NAMES}  # (0, 1]
        refs = oracles.newton_interior(Q)
        compared = 0
        for i in range(draws):
            p = ModelParams(**{n: Q[n][i] for n in oracles.NAMES})
            got = interior_equilibria(p)
            assert len(got) == len(refs[i]), (i, [r.point for r in got], refs[i])
            for r, want in zip(got, refs[i]):
                assert np.allclose(r.point, want, rtol=1e-6, atol=0)
                compared += 1
                if r.admissible:
                    assert residual(p, r.point) < 1e-8 * max(1.0, np.max(np.abs(r.point)))
        assert compared > draws  # the comparison is not vacuous


def test_c3_backstepping_algebra():
    rng = np.random.default_rng(SEED)
    with Budget(5):
        for _ in range(1000):
            q = oracles.random_params(rng)
            q["gamma"] = 10 ** rng.uniform(-8, 0)
            q["b"] = 10 ** rng.uniform(-10, 0)
            q["rho"] = q["phi"] + rng.uniform(1e-3, 1)
            p = ModelParams(**q)
            a = rng.uniform(1.01, 10)
            # tumor sizes up to the carrying capacity 1/b
            x1 = rng.uniform(0, min(1e6, 1 / p.b))

            # (a) the closed-loop tumor equation is linear
            lhs = p.r * x1 * (1 - p.b * x1) - p.gamma * x1 * kappa(p, a, x1)
            assert lhs == pytest.approx(p.r * (1 - a) * x1, rel=1e-10)

            # (b) closed-form rate equals the chain rule
            xi = 10 ** rng.uniform(-4, 4)
            tau = tau_from_a(p, a)
            d = BacksteppingDesign.from_params(p, a, xi=xi, k=0.0, tau=tau)
            x2, u = rng.uniform(0, 1e6, 2)
            got = lyapunov_rate(p, d, (x1, x2, 0.0), u)
            want = oracles.chain_rule_rate(q, a, xi, tau, x1, x2, u)
            assert got == pytest.approx(want, rel=1e-8)

            # (c) the flux cancels the isolated z2 term
            assert abs(isolated_z2_coefficient(p, d)) <= 1e-12 * max(1.0, tau)


def test_c4_controlled_equilibrium():
    rng = np.random.default_rng(SEED)
    with Budget(1):
        for _ in range(100):
            q = oracles.random_params(rng)
            q["rho"] = q["phi"] + rng.uniform(1e-3, 1)
            p = ModelParams(**q)
            tau = 10 ** rng.uniform(-3, 6)
            r = controlled_equilibrium(p, tau)
            assert r.point[0] == 0
            assert residual(p, r.point, tau, drains_pool=True) < 1e-10 * max(1.0, tau)


def test_c5_certificate_condition():
    rng = np.random.default_rng(SEED)
    with Budget(1):
        for _ in range(1000):
            xi, ell, m = 10 ** rng.uniform(-3, 3, 3)
            edge = math.sqrt(xi * ell * m)
            d = BacksteppingDesign(a=2.0, tau=1.0, xi=xi, k=edge, ell_hat=ell, m_hat=m, b_hat=0.0)
            assert not pd_condition(d)
            assert pd_condition(d.with_(k=math.nextafter(edge, 0.0)))
            assert not pd_condition(d.with_(k=math.nextafter(edge, math.inf)))

        threshold = 36 / 1694.6
        for lm in np.concatenate([[0.02125], rng.uniform(0.02125, 10, 999)]):
            ell = rng.uniform(0.01, 1) * lm
            d = BacksteppingDesign(a=2.0, tau=1.0, xi=1694.6, k=6.0, ell_hat=ell, m_hat=lm / ell, b_hat=0.0)
            assert pd_condition(d)
        for lm in rng.uniform(0, threshold * (1 - 1e-9), 100):
            d = BacksteppingDesign(a=2.0, tau=1.0, xi=1694.6, k=6.0, ell_hat=lm, m_hat=1.0, b_hat=0.0)
            assert not pd_condition(d)


def test_c6_integrator_validation(synthetic):
    p = synthetic
    with Budget(10):
        for c in (1.0, 2e6, 5e8):
            traj = integrate(p, (c, 0, 0), ControlLaw.off(), horizon=100)
            for t in (1, 10, 100):
                i = int(round(t / 0.1))
                assert traj.t[i] == pytest.approx(t)
                assert traj.x[i, 0] == pytest.approx(oracles.logistic(c, p.r, p.b, t), rel=1e-6)

        traj = integrate(p, (0, 0, 6e5), ControlLaw.off(), horizon=100)
        for t in (1, 10, 50, 100):
            i = int(round(t / 0.1))
            want = oracles.linear_pool(p.as_dict(), (0.0, 6e5), t)
            assert np.allclose(traj.x[i, 1:], want, rtol=1e-6, atol=0)

        exact = oracles.logistic(2e6, p.r, p.b, 10.0)
        errs = [
            abs(integrate(p, (2e6, 0, 0), ControlLaw.off(), horizon=10, cfg=IntegratorConfig.rk4(h)).final_state[0] - exact)
            for h in (1.0, 0.5)
        ]
        assert 12 <= errs[0] / errs[1] <= 20, errs


def test_c7_regime_reproduction():
    # Parameters are the documented synthetic set in the bundled scenarios.
    with Budget(60):
        s = scn.load_bundled("uncontrolled")
        _, out, _ = cli.run_scenario(s)
        assert out.relapse_time is not None and out.clearance_time is None
        assert 60 <= out.nadir[0] <= 100, out.nadir  # regrowth onset

        b = scn.load_bundled("backstepping")
        assert b.initial == s.initial and b.events == s.events
        traj, out, _ = cli.run_scenario(b)
        assert out.clearance_time is not None and out.relapse_time is None
        eq = controlled_equilibrium(b.params, applied_tau(b.params, b.law))
        assert np.allclose(traj.final_state[1:], eq.point[1:], rtol=0.01, atol=0)

        g = scn.load_bundled("uncontrolled-activation")
        _, out, _ = cli.run_scenario(g)
        assert out.diverged or out.monotone_growth


def test_c8_lyapunov_monitor():
    with Budget(10):
        s = scn.load_bundled("backstepping")
        traj, _, d = cli.run_scenario(s)
        p, region, u_bound = s.params, s.region, s.certificate.u_bound
        assert pd_condition(d)

        after = traj.t >= s.law.start  # dose and control switch-on
        v = traj.v[after]
        frac = np.mean(np.diff(v) <= 0)
        assert frac >= 0.99, frac

        x, e = traj.x, traj.z2
        inside = (
            after
            & (x[:, 0] >= region.x1_lo)
            & (x[:, 0] <= region.x1_hi)
            & (e >= region.z2_lo)
            & (e <= region.z2_hi)
            & (x[:, 2] <= u_bound)
        )
        idx = np.nonzero(inside)[0]
        assert len(idx) > 100
        for i in idx:
            assert abs(cross_coefficient(p, d, x[i, 0], e[i], x[i, 2])) <= 2 * d.k
            rate = lyapunov_rate(p, d, x[i], x[i, 2])
            bound = float(rate_upper_bound(d, x[i, 0], e[i]))
            assert rate < 0
            assert rate <= bound + 1e-8 * abs(bound)
        pairs = idx[:-1][np.diff(idx) == 1]
        assert np.all(traj.v[pairs + 1] < traj.v[pairs])


def test_c9_cli_determinism_and_round_trip(tmp_path):
    with Budget(10):
        for name in scn.bundled_names():
            s = scn.load_bundled(name)
            assert scn.loads(scn.dumps(s)) == s
            outputs = []
            for run in range(2):
                path = tmp_path / f"{name}-{run}.csv"
                with redirect_stdout(io.StringIO()):
                    assert cli.main(["simulate", str(scn.bundled_path(name)), "-o", str(path)]) == 0
                outputs.append(path.read_bytes())
            assert outputs[0] == outputs[1]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
