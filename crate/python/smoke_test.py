"""Smoke test for the thermalfilter extension.

Build and install it first, for example with
    maturin develop -m crates/python/Cargo.toml --features extension-module
or copy target/release/libthermalfilter.so to thermalfilter.so on PYTHONPATH.
"""

import math

import thermalfilter as tf


def main():
    p = tf.BathParams(1.0, 0.8)
    v = p.steady_state_variance()
    assert abs(v - tf.steady_state_variance(1.0, 0.8)) == 0.0
    assert abs(tf.steady_state_variance(0.0, 0.5) - 1.0) < 1e-15
    assert tf.min_variance_over_n(1.0)[1] == math.inf

    c = tf.compute_coefficients(1.0, 0.8)
    assert c.f > 1.0

    sol = tf.integrate_covariance(1.0, 0.8, dt=1e-3, t_final=30.0)
    assert abs(sol["var_x"][-1] - v) < 1e-5

    tr = tf.simulate_trajectory(n=1.0, gamma=0.8, t_final=1.0, seed=3)
    assert len(tr["t"]) == 1000

    ens = tf.run_ensemble(n=1.0, gamma=0.8, t_final=1.0, n_traj=20, seed=3, workers=1)
    assert len(ens["t"]) > 0

    try:
        tf.BathParams(-1.0, 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("negative N accepted")

    try:
        tf.run_ensemble(bogus=1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown setting accepted")

    print("thermalfilter smoke test ok")


if __name__ == "__main__":
    main()
