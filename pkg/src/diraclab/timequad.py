"""Quadrature in time for sampled wave data.

Everything here works on uniformly sampled arrays whose leading axis is
time.  The composite trapezoid rule carries an O(h^2) error dominated by
the Euler-Maclaurin boundary term h^2/12 (f'(b) - f'(a)); subtracting
that term (with derivatives from five-point stencils) pushes smooth
integrands to O(h^4), which is what the wave-data inner products need.

Sources sampled on the same grid are interpreted as piecewise linear,
so products of a sampled source with a smooth factor have derivative
kinks at the nodes.  The kink jumps are exactly h^{-1} times the second
difference of the linear factor, and each contributes +h^2/12 jump to
the corrected rule.
"""

from __future__ import annotations

import numpy as np

# one-sided 4th order first-derivative stencil at the left end
_END_STENCIL = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
# central 4th order
_MID_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _check_grid(samples, h):
    samples = np.asarray(samples)
    if samples.shape[0] < 5:
        raise ValueError("need at least 5 time samples")
    if h <= 0:
        raise ValueError("time step must be positive")
    return samples


def end_derivatives(samples, h):
    """4th-order one-sided derivatives at both ends along axis 0."""
    samples = _check_grid(samples, h)
    sten = _END_STENCIL.reshape((-1,) + (1,) * (samples.ndim - 1))
    left = (sten * samples[:5]).sum(axis=0) / h
    right = -(sten * samples[-1:-6:-1]).sum(axis=0) / h
    return left, right


def derivative(samples, h):
    """4th-order first derivative at every node along axis 0."""
    samples = _check_grid(samples, h)
    out = np.empty_like(samples, dtype=np.result_type(samples, float))
    n = samples.shape[0]
    windows = np.stack([samples[i : n - 4 + i] for i in range(5)], axis=0)
    sten = _MID_STENCIL.reshape((-1,) + (1,) * (windows.ndim - 1))
    out[2:-2] = (sten * windows).sum(axis=0) / h
    esten = _END_STENCIL.reshape((-1,) + (1,) * (samples.ndim - 1))
    for k in range(2):
        out[k] = (esten * samples[k : k + 5]).sum(axis=0) / h
        out[-1 - k] = -(esten * samples[-1 - k : -6 - k : -1]).sum(axis=0) / h
    return out


def trapezoid(samples, h):
    """Composite trapezoid along axis 0."""
    samples = np.asarray(samples)
    return h * (samples.sum(axis=0) - 0.5 * (samples[0] + samples[-1]))


def corrected_trapezoid(samples, h, kink_jumps=None):
    """Trapezoid with the h^2/12 Euler-Maclaurin boundary correction.

    kink_jumps, if given, holds the jumps of f' at the interior nodes
    (shape (n-2,) + trailing); each adds +h^2/12 jump, which restores
    O(h^4) accuracy for integrands with node kinks.
    """
    samples = _check_grid(samples, h)
    left, right = end_derivatives(samples, h)
    total = trapezoid(samples, h) - h * h / 12.0 * (right - left)
    if kink_jumps is not None:
        total = total + h * h / 12.0 * np.sum(kink_jumps, axis=0)
    return total


def cumulative_trapezoid(samples, h):
    """Running trapezoid integral from the first node.

    Exact for data that is piecewise linear between the nodes, which is
    how wave sources are represented.
    """
    samples = _check_grid(samples, h)
    csum = np.cumsum(samples, axis=0)
    return h * (csum - 0.5 * (samples + samples[0]))


def cumulative_corrected(samples, h):
    """Running integral from the first node, corrected node by node.

    Applies Euler-Maclaurin to every prefix: C_i = T_i - h^2/12
    (f'(t_i) - f'(t_0)), accurate to O(h^4) for smooth data.
    """
    samples = _check_grid(samples, h)
    csum = np.cumsum(samples, axis=0)
    prefix = h * (csum - 0.5 * (samples + samples[0]))
    d = derivative(samples, h)
    return prefix - h * h / 12.0 * (d - d[0])


def piecewise_linear_product_integral(x, y, h):
    """Exact integral of the product of two piecewise-linear interpolants.

    Works on the trailing axis so stacks of profiles can be paired at once.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[-1] != y.shape[-1] or x.shape[-1] < 2:
        raise ValueError("profiles must share a grid of at least two nodes")
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    xl, xr = x[..., :-1], x[..., 1:]
    yl, yr = y[..., :-1], y[..., 1:]
    return h * np.sum(
        (xl * yl + xr * yr) / 3.0 + (xl * yr + xr * yl) / 6.0, axis=-1
    )


def linear_kink_jumps(samples, h):
    """Derivative jumps of piecewise linear data at the interior nodes.

    Exact: the jump of f' at node k is (f_{k+1} - 2 f_k + f_{k-1}) / h.
    """
    samples = np.asarray(samples)
    return (samples[2:] - 2.0 * samples[1:-1] + samples[:-2]) / h


def product_kink_jumps(linear_samples, smooth_samples, h):
    """Derivative jumps of (piecewise linear) x (smooth) at interior nodes."""
    jumps = linear_kink_jumps(linear_samples, h)
    return jumps * np.asarray(smooth_samples)[1:-1]
