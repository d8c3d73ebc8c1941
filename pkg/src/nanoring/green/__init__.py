"""Dyadic Green's tensor near the nanofiber and its channel decomposition.

Two independent constructions are available:

* the mode expansion G_g + G_r (guided poles plus the radiation continuum,
  anti-Hermitian part only for the continuum), which is what decay rates
  are computed from, and
* the scattering construction G0 + G_scat on a deformed kz contour, which
  gives the full complex tensor (real parts for level shifts, and fields).

Both agree on the imaginary part; the test suite checks this.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fiber_modes import FiberSpec, GuidedModeSolution, list_guided_modes
from ..quadrature import ConvergenceError, relative_change
from .free import DyadicValue, SingularityError, g0, g0_imag_tensor, g0_tensor
from .guided import guided_tensors
from .kernel import GeometryError, RingKernel
from .radiation import RadiationBasis, RadiationRule, radiation_orders
from .scattering import fiber_tensor

__all__ = [
    "GreenConfig", "CouplingChannels", "DyadicValue", "SingularityError", "GeometryError",
    "ConvergenceError", "RingKernel", "g0", "g0_tensor", "g0_imag_tensor", "g_guided",
    "g_radiation", "fiber_tensor", "coupling",
]


@dataclass(frozen=True)
class GreenConfig:
    """Numerical settings.

    nu_max : radiation orders kept, |nu| <= nu_max.
    panels, nodes_per_panel : starting radiation quadrature; nodes are
        doubled until the relative change is below ``tol``.
    l_max : largest guided azimuthal order searched.
    shifts : also compute real parts (level shifts) via the scattering
        construction.
    scat_nu_max : orders in the scattering construction (0 = automatic from
        ``scat_tol``).
    """

    nu_max: int = 7
    panels: int = 8
    nodes_per_panel: int = 64
    tol: float = 1e-3
    max_doublings: int = 4
    l_max: int = 8
    shifts: bool = True
    scat_nu_max: int = 0
    scat_tol: float = 1e-5
    scat_nodes: int = 16

    def __post_init__(self):
        if self.nu_max < 0:
            raise ValueError("nu_max must be >= 0")
        if self.panels < 1 or self.nodes_per_panel < 2:
            raise ValueError("need at least one panel and two nodes")
        if not 0 < self.tol < 1:
            raise ValueError("tol must be in (0, 1)")
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")


@dataclass
class CouplingChannels:
    """Projected coupling between two dipoles, in units where Gamma/gamma0 = Im.

    ``guided`` maps (family, l, m) to the pole-form contribution,
    ``radiation`` maps nu to i times the order-nu part of the continuum's
    anti-Hermitian part, ``dispersive`` is the real remainder
    Re(G0 + G_scat) - Re(G_g) (zero at coincident points and when shifts are
    disabled) and ``total`` = sum(guided) + sum(radiation) + dispersive.
    ``free`` is the free-space value, kept for baselines only.
    """

    free: complex
    guided: dict = field(default_factory=dict)
    radiation: dict = field(default_factory=dict)
    dispersive: float = 0.0
    total: complex = 0j

    def guided_total(self) -> complex:
        return complex(sum(self.guided.values())) if self.guided else 0j

    def radiation_total(self) -> complex:
        return complex(sum(self.radiation.values())) if self.radiation else 0j


def _cyl(p):
    p = np.asarray(p, float)
    return float(np.hypot(p[0], p[1])), float(np.arctan2(p[1], p[0])), float(p[2])


def _check_modes(modes, k0):
    for m in modes:
        if not isinstance(m, GuidedModeSolution) or not np.isclose(m.k0, k0, rtol=0, atol=1e-12):
            raise ValueError("every mode must be solved at this k0")


def g_guided(r1, r2, k0, modes) -> dict:
    """Guided dyadic per mode key, {(family, l, m): DyadicValue}."""
    _check_modes(modes, k0)
    p1, p2 = _cyl(r1), _cyl(r2)
    r1t, r2t = tuple(map(float, r1)), tuple(map(float, r2))
    return {k: DyadicValue(v, r1t, r2t, float(k0)) for k, v in guided_tensors(modes, p1, p2).items()}


def g_radiation(r1, r2, k0, fiber: FiberSpec, nu_max: int = 7, rule: RadiationRule | None = None,
                tol: float = 1e-3, max_doublings: int = 4) -> dict:
    """Anti-Hermitian radiation-continuum dyadic per order, {nu: DyadicValue}.

    Each value is i * (order-nu part of Im G_r); the quadrature is doubled
    until the summed tensor changes by less than ``tol`` relative.
    """
    rule = rule or RadiationRule()
    p1, p2 = _cyl(r1), _cyl(r2)

    def evaluate(rl):
        return radiation_orders(RadiationBasis.build(fiber.n_fiber, k0, nu_max, rl), p1, p2)

    prev = evaluate(rule)
    change = np.inf
    for _ in range(max_doublings):
        rule = rule.refined()
        cur = evaluate(rule)
        change = relative_change(cur.sum(0), prev.sum(0))
        prev = cur
        if change < tol:
            break
    else:
        raise ConvergenceError(f"radiation quadrature not converged (change {change:.2e})", change)
    r1t, r2t = tuple(map(float, r1)), tuple(map(float, r2))
    return {nu: DyadicValue(1j * prev[i], r1t, r2t, float(k0))
            for i, nu in enumerate(range(-nu_max, nu_max + 1))}


def coupling(r1, u1, r2, u2, fiber: FiberSpec, k0: float, config: GreenConfig = GreenConfig(),
             modes=None, cache=None) -> CouplingChannels:
    """Channel-resolved coupling g_hat = (6 pi / k0) u1 . G(r1, r2) . u2 for real
    unit dipoles u1, u2 at arbitrary points outside the fiber."""
    p1, p2 = _cyl(r1), _cyl(r2)
    if p1[0] <= 1.0 or p2[0] <= 1.0:
        raise GeometryError("both points must lie outside the fiber")
    u1, u2 = np.asarray(u1, float), np.asarray(u2, float)
    scale = 6.0 * np.pi / k0
    if modes is None:
        modes = list_guided_modes(fiber, k0, config.l_max, cache)
    same = np.allclose(r1, r2, rtol=0, atol=1e-12)
    free = (1j * scale * (u1 @ g0_imag_tensor(np.asarray(r1, float), np.asarray(r2, float), k0) @ u2)
            if same else scale * (u1 @ g0_tensor(np.asarray(r1, float), np.asarray(r2, float), k0) @ u2))
    guided = {k: scale * complex(u1 @ v.matrix @ u2) for k, v in g_guided(r1, r2, k0, modes).items()}
    rad = {nu: scale * complex(u1 @ v.matrix @ u2)
           for nu, v in g_radiation(r1, r2, k0, fiber, config.nu_max,
                                    RadiationRule(config.panels, config.nodes_per_panel),
                                    config.tol, config.max_doublings).items()}
    g_sum = complex(sum(guided.values())) if guided else 0j
    disp = 0.0
    if config.shifts and not same:
        nu_max = config.scat_nu_max or None
        full = scale * complex(u1 @ fiber_tensor(fiber.n_fiber, k0, r1, r2, nu_max, config.scat_nodes) @ u2)
        disp = full.real - g_sum.real
    im = g_sum.imag + sum(v.imag for v in rad.values())
    re = (0.0 if same else g_sum.real) + disp if config.shifts else 0.0
    return CouplingChannels(complex(free), guided, rad, float(disp), complex(re, im))
