"""Time quadrature: corrected trapezoid rules and derivative stencils."""

import math

import numpy as np
import pytest

from diraclab import timequad as tq


def test_trapezoid_exact_on_piecewise_linear():
    t = np.linspace(0.0, 1.0, 65)
    h = t[1] - t[0]
    hat = np.clip(1.0 - np.abs(t - 0.5) / 0.25, 0.0, None)
    assert abs(tq.trapezoid(hat, h) - 0.25) < 1e-15


def test_corrected_trapezoid_fourth_order():
    exact = math.e - 1.0
    errs = []
    for n in (33, 65, 129, 257):
        t = np.linspace(0.0, 1.0, n)
        errs.append(abs(tq.corrected_trapezoid(np.exp(t), t[1] - t[0]) - exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates.min() > 3.8
    assert errs[-1] < 1e-12


def test_corrected_beats_plain_by_orders():
    t = np.linspace(0.0, 1.0, 129)
    h = t[1] - t[0]
    f = np.exp(t)
    exact = math.e - 1.0
    plain = abs(tq.trapezoid(f, h) - exact)
    corr = abs(tq.corrected_trapezoid(f, h) - exact)
    assert plain > 1e-6
    assert corr < 1e-10


def test_end_derivatives_accuracy():
    t = np.linspace(0.0, 2.0, 257)
    left, right = tq.end_derivatives(np.exp(t), t[1] - t[0])
    assert abs(left - 1.0) < 1e-9
    assert abs(right - math.exp(2.0)) < 1e-8


def test_derivative_all_nodes():
    t = np.linspace(0.0, 2.0, 513)
    d = tq.derivative(np.sin(3.0 * t), t[1] - t[0])
    err = np.abs(d - 3.0 * np.cos(3.0 * t))
    # one-sided end stencils carry a larger constant than the central ones
    assert err[2:-2].max() < 5e-9
    assert err.max() < 5e-8


def test_cumulative_corrected_matches_antiderivative():
    t = np.linspace(0.0, 2.0, 513)
    h = t[1] - t[0]
    C = tq.cumulative_corrected(np.sin(3.0 * t) * np.exp(t), h)

    def F(x):
        return np.exp(x) * (np.sin(3.0 * x) - 3.0 * np.cos(3.0 * x)) / 10.0

    assert np.abs(C - (F(t) - F(0.0))).max() < 1e-9


def test_kink_corrections_restore_accuracy():
    """Hat x smooth products integrate to near roundoff with jumps fed in."""
    t = np.linspace(0.0, 1.0, 513)
    h = t[1] - t[0]
    hat = np.clip(1.0 - np.abs(t - 0.5) / 0.25, 0.0, None)
    g = np.exp(t)

    def seg(lo, hi, al, be):
        f = lambda x: (al + be * x - be) * math.exp(x)
        return f(hi) - f(lo)

    exact = seg(0.25, 0.5, -1.0, 4.0) + seg(0.5, 0.75, 3.0, -4.0)
    jumps = tq.product_kink_jumps(hat, g, h)
    got = tq.corrected_trapezoid(hat * g, h, kink_jumps=jumps)
    bare = tq.corrected_trapezoid(hat * g, h)
    assert abs(got - exact) < 1e-12
    assert abs(bare - exact) > 1e-8


def test_linear_kink_jumps_exact():
    t = np.linspace(0.0, 1.0, 9)
    h = t[1] - t[0]
    hat = np.clip(1.0 - np.abs(t - 0.5) / 0.25, 0.0, None)
    jumps = tq.linear_kink_jumps(hat, h)
    # slope goes 0 -> 4 at t=0.25, 4 -> -4 at t=0.5, -4 -> 0 at t=0.75
    want = np.zeros(7)
    want[[1, 3, 5]] = [4.0, -8.0, 4.0]
    assert np.abs(jumps - want).max() < 1e-12


def test_complex_and_multidimensional():
    t = np.linspace(0.0, 1.0, 257)
    h = t[1] - t[0]
    arr = np.exp(1j * 3.0 * t)[:, None] * np.array([1.0, 2.0])
    got = tq.corrected_trapezoid(arr, h)
    want = (np.exp(3j) - 1.0) / 3j * np.array([1.0, 2.0])
    assert np.abs(got - want).max() < 1e-9


def test_input_validation():
    with pytest.raises(ValueError, match="5 time samples"):
        tq.corrected_trapezoid(np.ones(4), 0.1)
    with pytest.raises(ValueError, match="positive"):
        tq.corrected_trapezoid(np.ones(8), 0.0)


def test_cumulative_trapezoid_piecewise_linear():
    h = 0.25
    nodes = np.arange(9) * h
    f = np.maximum(0.0, nodes - 1.0) * 3.0 + np.minimum(nodes, 0.75)
    running = tq.cumulative_trapezoid(f, h)
    # the trapezoid rule integrates piecewise-linear data exactly
    expected = np.concatenate(
        [[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))]
    )
    assert np.allclose(running, expected, atol=1e-15)
    assert running[0] == 0.0
