"""Numerical oracles for the flow: finite differences and grid quadrature."""

import numpy as np


def random_flow_params(net, rng, scale=0.4):
    net.theta[...] = rng.normal(0.0, scale, net.theta.shape)
    return net


def fd_gradient(net, y, c, h=1e-6, coords=None):
    coords = range(len(net.theta)) if coords is None else coords
    out = []
    for i in coords:
        old = net.theta[i]
        net.theta[i] = old + h
        up = net.nll(y, c)
        net.theta[i] = old - h
        down = net.nll(y, c)
        net.theta[i] = old
        out.append((up - down) / (2 * h))
    return np.array(out)


def gradient_rel_error(analytic, numeric, floor=1e-3):
    """Entrywise relative error; entries tiny next to the largest use a floor.

    The denominator is ``max(|numeric_i|, floor * max|numeric|)`` so that
    near-zero partials are judged against the gradient's overall scale
    instead of their own round-off.
    """
    denom = np.maximum(np.abs(numeric), floor * np.max(np.abs(numeric)))
    return np.abs(analytic - numeric) / denom


def grid_quadrature(model, x, n_grid=400, width=8.0, n_probe=4000, seed=0):
    """Trapezoid integral of the learned log-space density around its support.

    Returns ``(mass, mean)`` where ``mean`` is the density-weighted mean.
    """
    probe = model.sample_log(x, n_probe, seed)
    lo = probe.mean(axis=0) - width * probe.std(axis=0)
    hi = probe.mean(axis=0) + width * probe.std(axis=0)
    g0 = np.linspace(lo[0], hi[0], n_grid)
    g1 = np.linspace(lo[1], hi[1], n_grid)
    A, B = np.meshgrid(g0, g1, indexing="ij")
    pts = np.c_[A.ravel(), B.ravel()]
    dens = np.exp(model.log_prob_log(pts, x)).reshape(n_grid, n_grid)
    mass = np.trapezoid(np.trapezoid(dens, g1, axis=1), g0)
    m0 = np.trapezoid(np.trapezoid(dens * A, g1, axis=1), g0) / mass
    m1 = np.trapezoid(np.trapezoid(dens * B, g1, axis=1), g0) / mass
    return float(mass), np.array([m0, m1])
