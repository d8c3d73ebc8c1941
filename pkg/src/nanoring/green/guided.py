"""Guided-mode (pole) part of the fiber Green's tensor.

With mode functions e_{p,f}(r) exp(i p l phi + i f beta z), normalized by
int n^2 |e|^2 dA = 1, the retarded guided contribution is

    G_g(r, r') = i beta' / (4 k0) sum_{p,f} w_f E_{p,f}(r) (x) E_{p,f}(r')^*,

with beta' = dbeta/domega and w_f = 2 for the mode travelling from r' toward
r (f = sign(z - z')), 0 for the other direction and 1 for each when z = z'.
Its imaginary part is the familiar mode-function emission rate
beta' / (4 k0) sum_{p,f} E E^*, independent of dz.
"""
from __future__ import annotations

import numpy as np

from ..cylinder import cyl_to_cart
from ..fiber_modes import GuidedModeSolution


def direction_weight(f, dz):
    return 1.0 + f * np.sign(dz)


def mode_field_cart(mode: GuidedModeSolution, p):
    rho, phi, z = p
    e = mode.field(rho, phi, z)
    return cyl_to_cart(e[..., 0], e[..., 1], e[..., 2], phi)


def guided_tensors(modes, p1, p2) -> dict:
    """Pole-form guided dyadic per physical mode key (family, l, m).

    p1, p2 are cylindrical points; returns {key: 3x3 complex (Cartesian)}.
    """
    dz = p1[2] - p2[2]
    out: dict = {}
    for m in modes:
        w = direction_weight(m.id.f, dz)
        if w == 0.0:
            out.setdefault(m.key, np.zeros((3, 3), complex))
            continue
        e1 = mode_field_cart(m, p1)
        e2 = mode_field_cart(m, p2)
        term = (1j * m.dbeta_domega / (4.0 * m.k0)) * w * np.outer(e1, e2.conj())
        out[m.key] = out.get(m.key, 0.0) + term
    return out
