"""Shared constructions for the test suite.

Systems used repeatedly:

* ``bead_spec`` -- bead of mass ``mass`` on a rotating frictionless bar,
  kinetic energy (m/2)(rdot^2 + r^2 thetadot^2); q1 = r, u1 = theta.
* ``unit_system`` -- direct dynamics with A = 1, K = 0, D = 1 (E = 2 q1),
  i.e. qdot = wbar^2: the simplest transport model.
* ``example1_system`` -- direct dynamics A = q1^2, K = 0, D = 1: the cone
  collapses at q = 0 (the continuity counterexample).
* ``quadrant_system`` -- n = m = 2, A = I, K = 0, D^1 = diag(1,0),
  D^2 = diag(0,1): generators sweep the closed first quadrant.
* ``random_spd_spec`` -- random n=2, m=2 polynomial G, SPD by diagonal
  dominance on the sampled box.
"""

from __future__ import annotations

import numpy as np

from vibramech.expressions import parse_expression
from vibramech.model import MechanicalSpec, direct_dynamics


def bead_spec(mass: float = 1.0) -> MechanicalSpec:
    names = ["q1", "u1", "m"]
    zero = parse_expression("0", names)
    return MechanicalSpec(
        n=1, m=1,
        entries=[
            [parse_expression("m", names), zero],
            [zero, parse_expression("m*q1^2", names)],
        ],
        params={"m": mass},
    )


def _direct(n, m, A_rows, K_rows, E_rows):
    names = [f"q{i+1}" for i in range(n)] + [f"u{a+1}" for a in range(m)]
    conv = lambda rows: [[parse_expression(s, names) for s in row] for row in rows]
    return direct_dynamics(n, m, conv(A_rows), conv(K_rows), conv(E_rows))


def unit_system():
    return _direct(1, 1, [["1"]], [["0"]], [["2*q1"]])


def example1_system():
    return _direct(1, 1, [["q1^2"]], [["0"]], [["2*q1"]])


def quadrant_system():
    return _direct(
        2, 2,
        A_rows=[["1", "0"], ["0", "1"]],
        K_rows=[["0", "0"], ["0", "0"]],
        E_rows=[["2*q1", "0"], ["0", "2*q2"]],
    )


_MONOMIALS = ["1", "q1", "q2", "u1", "u2", "q1^2", "q2^2", "u1^2", "u2^2",
              "q1*q2", "q1*u1", "q2*u2", "u1*u2"]


def random_spd_spec(rng: np.random.Generator) -> MechanicalSpec:
    """Random symmetric polynomial G, n = m = 2, SPD for |q|,|u| <= 0.5.

    G = C + S with C = R R^T + 4 I (min eigenvalue >= 4) and S a small
    random polynomial perturbation (entries bounded by ~0.3 on the box, so
    ||S||_2 < 4 by Gershgorin).
    """
    names = ["q1", "q2", "u1", "u2"]
    R = rng.uniform(-1.0, 1.0, size=(4, 4))
    C = R @ R.T + 4.0 * np.eye(4)
    entries = [[None] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(i, 4):
            picks = rng.choice(len(_MONOMIALS), size=3, replace=False)
            coeffs = rng.uniform(-0.1, 0.1, size=3)
            text = repr(float(C[i, j]))
            for c, k in zip(coeffs, picks):
                text += f" + {float(c)!r}*{_MONOMIALS[k]}"
            e = parse_expression(text, names)
            entries[i][j] = e
            entries[j][i] = e
    return MechanicalSpec(n=2, m=2, entries=entries)
