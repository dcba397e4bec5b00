"""Smoke test for the accelmc_py extension.

Build and install first:

    pip install maturin
    pip install --no-build-isolation -e crates/python
"""

import math

import accelmc_py as am


def check_two_state():
    g = am.Generator.two_state(1.0, 1.0)
    assert g.n == 2
    assert abs(g.asymptotic_variance([1.0, 0.0]) - 0.25) < 1e-12
    assert abs(g.dv_rate([0.9, 0.1]) - 0.4) < 1e-8
    lam, slope, curv = g.tilted_eigenvalue([1.0, 0.0], 0.0)
    assert lam == 0.0 and abs(slope - 0.5) < 1e-12 and abs(curv - 0.25) < 1e-10
    mean, var, se = g.simulate_variance([1.0, 0.0], 500.0, 100, 1)
    assert abs(mean - 0.5) < 0.05 and abs(var - 0.25) < 4 * se


def check_orderings():
    for seed in range(10):
        inst = am.random_instance(seed, "metropolis" if seed % 2 else "glauber")
        f = inst["observable"]
        base, both = inst["base"], inst["combined"]
        assert both.spectral_gap() <= base.spectral_gap() + 1e-9
        assert both.asymptotic_variance(f) <= base.asymptotic_variance(f) + 1e-9
        ell = 0.5 * (min(f) + max(f))
        assert inst["cycle"].observable_rate(f, ell) >= base.observable_rate(f, ell) - 1e-8


def check_diffusion():
    r = am.compare_rates("cosine-1d", nodes=128, amplitude=0.0)
    assert abs(r["baseline"] - 0.125) < (2 * math.pi / 128) ** 2
    r = am.compare_rates("cosine-2d", mobility_name="sin-squared", mobility_param=0.5, delta=1.0, nodes=32)
    assert r["reversible"] >= r["baseline"] - 1e-3 and r["full"] >= r["reversible"] - 1e-3
    mean, var, se = am.simulate_diffusion_variance(20.0, 5e-3, 16, 3)
    assert math.isfinite(var) and se > 0


def check_errors():
    try:
        am.Generator([[1.0, -1.0], [1.0, -1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid generator accepted")


if __name__ == "__main__":
    check_two_state()
    check_orderings()
    check_diffusion()
    check_errors()
    print("accelmc_py smoke test: ok")
