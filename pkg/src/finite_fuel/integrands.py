"""Row-wise integrands shared by the outer (pathwise) and nested estimators.

Arrays are laid out as ``(row, node)`` for scalar processes and
``(firm, row, node)`` for per-firm levels. All quantities here use the
scenario's natural orientation: profit gradients for Cobb-Douglas, cost
gradients for quadratic tracking; the caller applies the orientation sign.
"""

from __future__ import annotations

import math

import numpy as np

# relative slack below which the aggregate plan counts as sitting on the fuel
BINDING_RTOL = 1e-12


def trapezoid(h: np.ndarray, dt: float) -> np.ndarray:
    """Integral over the last axis with the trapezoid rule."""
    if h.shape[-1] < 2:
        return np.zeros(h.shape[:-1])
    return dt * (h[..., 1:-1].sum(axis=-1) + 0.5 * (h[..., 0] + h[..., -1]))


def trapezoid_from_each_node(h: np.ndarray, dt: float) -> np.ndarray:
    """``out[..., k]`` is the trapezoid integral of ``h`` from node ``k`` to the end."""
    pieces = 0.5 * dt * (h[..., 1:] + h[..., :-1])
    rev = np.cumsum(pieces[..., ::-1], axis=-1)[..., ::-1]
    return np.concatenate([rev, np.zeros(h.shape[:-1] + (1,))], axis=-1)


def gradient_integrand(scn, shock: np.ndarray, levels: np.ndarray, disc: np.ndarray) -> np.ndarray:
    """Per-firm gradient density: ``e^(-delta s) R_y(X, nu)`` or ``delta e^(-delta s)(nu - W)``."""
    if scn.tag == "quadratic":
        return (scn.delta * disc * (levels[0] - shock))[None]
    return np.stack([disc * (shock / lv) ** a for lv, a in zip(levels, scn.alphas)])


def multiplier_density(scn, shock: np.ndarray, theta: np.ndarray, theta_plus: np.ndarray,
                       disc: np.ndarray, support: np.ndarray | None = None):
    """Closed-form Lagrange multiplier density and its support mask (natural sign).

    The support is where the aggregate base capacity exceeds the fuel's right
    limit; pass ``support`` to use base capacities computed elsewhere.
    """
    if scn.tag == "quadratic":
        on = (shock - scn.offset) > theta_plus if support is None else support
        val = scn.delta * disc * (theta - shock)
        return np.where(on, val, 0.0), on
    beta = scn.weights.beta
    total = sum(scn.ks)
    on = total * shock > theta_plus if support is None else support
    val = np.zeros(np.broadcast_shapes(shock.shape, theta.shape))
    for b, a in zip(beta, scn.alphas):
        val = val + b * ((shock / (b * theta)) ** a - scn.delta)
    return np.where(on, disc * val, 0.0), on


def right_limit(theta: np.ndarray) -> np.ndarray:
    return np.concatenate([theta[..., 1:], theta[..., -1:]], axis=-1)


def horizon_tails(scn, shock_end, levels_end, theta_end, disc_end):
    """Analytic continuation past the last node with the plan frozen.

    Returns ``(gradient_tail[firm, row], bound[row])``; the bound also covers
    the multiplier mass that the truncation drops.
    """
    if scn.tag == "quadratic":
        lam = math.sqrt(2.0 * scn.delta) / scn.shock.sigma
        grad = (disc_end * (levels_end[0] - shock_end))[None]
        bound = disc_end * (np.abs(theta_end - levels_end[0]) + np.abs(theta_end - shock_end)
                            + 1.0 / lam)
        return grad, bound
    grads, bound = [], np.zeros_like(shock_end)
    for lv, a, d, b in zip(levels_end, scn.alphas, scn.moment_denominators, scn.weights.beta):
        g = disc_end * (shock_end / lv) ** a / d
        grads.append(g)
        bound = bound + g + b * disc_end * (shock_end / (b * theta_end)) ** a / d
    return np.stack(grads), bound


def investment_price(scn, disc):
    """Unit investment cost at each node (zero for the tracking problem)."""
    return 0.0 * disc if scn.tag == "quadratic" else disc


def binding_slack(theta: np.ndarray, aggregate: np.ndarray) -> np.ndarray:
    """``theta - sum nu`` with floating-point dust from the cap shrink snapped to zero."""
    slack = theta - aggregate
    return np.where(np.abs(slack) <= BINDING_RTOL * np.abs(theta), 0.0, slack)
