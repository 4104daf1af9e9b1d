"""Mechanical system definitions and their reduction to pointwise dynamics.

A system is declared either by the symmetric kinetic-energy matrix G(q, u)
(``MechanicalSpec``) or directly by the reduced blocks A, K, E.  Reduction
produces a :class:`ReducedDynamics`: pointwise evaluators for

    A = (G11)^-1,   K = -A G12,   E = G22 - G21 A G12,

together with the exact derivative tensors B = dA/dq, C = dK/dq and
D = (1/2) dE/dq obtained by symbolic differentiation of the G entries
propagated through matrix calculus (never finite differences: the momentum
equation is quadratic in the control rate, which amplifies derivative noise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expressions as ex
from .expressions import Expr

__all__ = [
    "MechanicalSpec",
    "ReducedDynamics",
    "DynamicsBlocks",
    "SymbolicReduction",
    "IdentityReport",
    "SpdError",
    "SymmetryError",
    "reduce",
    "reduce_symbolic",
    "crosscheck_identities",
    "conjugate_momenta",
    "recover_velocities",
]


class SpdError(Exception):
    """G (or a reduced block) failed its symmetric factorization at a point."""

    def __init__(self, message: str, point=None, cond: float | None = None):
        if point is not None:
            message += f" at point {point}"
        if cond is not None:
            message += f" (condition estimate {cond:.3e})"
        super().__init__(message)
        self.point = point
        self.cond = cond


class SymmetryError(Exception):
    """Matrix of expressions is not structurally symmetric."""


def _substitute(e: Expr, values: Mapping[str, float]) -> Expr:
    """Replace parameter variables by constants and re-simplify."""
    if isinstance(e, ex.Var):
        return ex.Const(float(values[e.name])) if e.name in values else e
    if isinstance(e, ex.Const):
        return e
    if isinstance(e, ex.Unary):
        return ex.Unary(e.op, _substitute(e.arg, values))
    if isinstance(e, ex.Add):
        return ex.Add(tuple(_substitute(t, values) for t in e.terms))
    if isinstance(e, ex.Mul):
        return ex.Mul(tuple(_substitute(f, values) for f in e.factors))
    if isinstance(e, ex.Sub):
        return ex.Sub(_substitute(e.left, values), _substitute(e.right, values))
    if isinstance(e, ex.Div):
        return ex.Div(_substitute(e.num, values), _substitute(e.den, values))
    if isinstance(e, ex.Pow):
        return ex.Pow(_substitute(e.base, values), e.exponent)
    raise TypeError(type(e))


def coordinate_names(n: int, m: int) -> list[str]:
    return [f"q{i + 1}" for i in range(n)] + [f"u{a + 1}" for a in range(m)]


@dataclass
class MechanicalSpec:
    """System dimensions plus the (n+m) x (n+m) symbolic matrix G(q, u).

    ``entries`` holds the full matrix; construction enforces structural
    symmetry (entry (i,j) must simplify to the same tree as (j,i)).
    Parameter values are substituted immediately, so stored entries depend
    only on q1..qn, u1..um.
    """

    n: int
    m: int
    entries: list[list[Expr]]
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        size = self.n + self.m
        if len(self.entries) != size or any(len(row) != size for row in self.entries):
            raise ValueError(f"G must be {size}x{size}")
        subst = self.params
        self.entries = [
            [ex.simplify(_substitute(e, subst)) for e in row] for row in self.entries
        ]
        for i in range(size):
            for j in range(i + 1, size):
                if self.entries[i][j] != self.entries[j][i]:
                    raise SymmetryError(
                        f"G[{i + 1}][{j + 1}] != G[{j + 1}][{i + 1}]: "
                        f"{self.entries[i][j]} vs {self.entries[j][i]}"
                    )
        extra = set()
        allowed = set(coordinate_names(self.n, self.m))
        for row in self.entries:
            for e in row:
                extra |= e.variables() - allowed
        if extra:
            raise ex.UnknownVariableError(
                f"G entries use undeclared names {sorted(extra)}"
            )

    def evaluate_G(self, q: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Numeric G at (q, u); bitwise symmetric (upper triangle mirrored)."""
        size = self.n + self.m
        bind = _bindings(self.n, self.m, q, u)
        G = np.empty((size, size))
        for i in range(size):
            for j in range(i, size):
                G[i, j] = ex.evaluate(self.entries[i][j], bind)
                G[j, i] = G[i, j]
        return G


def _bindings(n: int, m: int, q, u) -> dict[str, float]:
    names = coordinate_names(n, m)
    vals = list(np.atleast_1d(np.asarray(q, dtype=float))) + list(
        np.atleast_1d(np.asarray(u, dtype=float))
    )
    return dict(zip(names, vals))


@dataclass
class DynamicsBlocks:
    """All pointwise blocks in one evaluation (the integrator hot path)."""

    A: np.ndarray  # (n, n)
    K: np.ndarray  # (n, m)
    E: np.ndarray  # (m, m)
    B: np.ndarray  # (n, n, n), B[k] = dA/dq^k
    C: np.ndarray  # (n, n, m), C[k] = dK/dq^k
    D: np.ndarray  # (n, m, m), D[k] = (1/2) dE/dq^k


class ReducedDynamics:
    """Pointwise evaluators for the reduced blocks and their q-derivatives.

    Pure functions of (q, u); instances are immutable after construction and
    safe for concurrent read-only use.
    """

    def __init__(self, n: int, m: int,
                 blocks_fn: Callable[[np.ndarray, np.ndarray], DynamicsBlocks],
                 provenance: str):
        self.n = n
        self.m = m
        self._blocks_fn = blocks_fn
        self.provenance = provenance  # "derived-from-G" | "user-supplied"

    def blocks(self, q, u) -> DynamicsBlocks:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return self._blocks_fn(q, u)

    def A(self, q, u) -> np.ndarray:
        return self.blocks(q, u).A

    def K(self, q, u) -> np.ndarray:
        return self.blocks(q, u).K

    def E(self, q, u) -> np.ndarray:
        return self.blocks(q, u).E

    def B(self, q, u) -> np.ndarray:
        return self.blocks(q, u).B

    def C(self, q, u) -> np.ndarray:
        return self.blocks(q, u).C

    def D(self, q, u) -> np.ndarray:
        return self.blocks(q, u).D


def _compile_matrix(entries: Sequence[Sequence[Expr]], argnames: list[str]):
    return [[ex.compile_expr(e, argnames) for e in row] for row in entries]


def _sym_fill(funcs, size: int, args) -> np.ndarray:
    M = np.empty((size, size))
    for i in range(size):
        for j in range(i, size):
            M[i, j] = funcs[i][j](*args)
            M[j, i] = M[i, j]
    return M


def reduce(spec: MechanicalSpec) -> ReducedDynamics:
    """Reduce a G-defined system to pointwise block evaluators.

    SPD of G is verified by an attempted Cholesky factorization at every
    evaluation point; failure raises :class:`SpdError` naming the point and a
    condition estimate.
    """
    n, m = spec.n, spec.m
    size = n + m
    names = coordinate_names(n, m)
    gfuncs = _compile_matrix(spec.entries, names)
    dgfuncs = [
        _compile_matrix(
            [[ex.differentiate(e, f"q{k + 1}") for e in row] for row in spec.entries],
            names,
        )
        for k in range(n)
    ]

    def blocks_fn(q: np.ndarray, u: np.ndarray) -> DynamicsBlocks:
        args = tuple(q) + tuple(u)
        G = _sym_fill(gfuncs, size, args)
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise SpdError("G is not positive definite", point=(q.copy(), u.copy()),
                           cond=float(np.linalg.cond(G))) from None
        G11, G12, G22 = G[:n, :n], G[:n, n:], G[n:, n:]
        A = np.linalg.inv(G11)
        A = (A + A.T) / 2.0
        M = A @ G12
        K = -M
        Y = G12.T @ M
        E = G22 - (Y + Y.T) / 2.0
        B = np.empty((n, n, n))
        C = np.empty((n, n, m))
        D = np.empty((n, m, m))
        for k in range(n):
            dG = _sym_fill(dgfuncs[k], size, args)
            dG11, dG12, dG22 = dG[:n, :n], dG[:n, n:], dG[n:, n:]
            dA = -(A @ dG11 @ A)
            dA = (dA + dA.T) / 2.0
            B[k] = dA
            C[k] = -(dA @ G12) - A @ dG12
            X = dG12.T @ M
            Z = G12.T @ dA @ G12
            dE = dG22 - X - X.T - (Z + Z.T) / 2.0
            D[k] = 0.5 * dE
        return DynamicsBlocks(A, K, E, B, C, D)

    return ReducedDynamics(n, m, blocks_fn, provenance="derived-from-G")


def direct_dynamics(n: int, m: int,
                    A_entries: Sequence[Sequence[Expr]],
                    K_entries: Sequence[Sequence[Expr]],
                    E_entries: Sequence[Sequence[Expr]],
                    params: Mapping[str, float] | None = None,
                    check_spd: bool = False) -> ReducedDynamics:
    """Build dynamics from user-supplied A, K, E expression matrices.

    B, C, D come from symbolic q-derivatives of the given entries.  SPD
    checking is off by default: degenerate systems (the standard negative
    example has A = q^2, singular at q = 0) must remain evaluable so the
    continuity probe can see the degeneracy.
    """
    params = dict(params or {})
    names = coordinate_names(n, m)

    def prep(entries, rows, cols, symmetric):
        if len(entries) != rows or any(len(r) != cols for r in entries):
            raise ValueError(f"expected a {rows}x{cols} matrix of expressions")
        out = [[ex.simplify(_substitute(e, params)) for e in row] for row in entries]
        if symmetric:
            for i in range(rows):
                for j in range(i + 1, cols):
                    if out[i][j] != out[j][i]:
                        raise SymmetryError(
                            f"entry ({i + 1},{j + 1}) != ({j + 1},{i + 1})"
                        )
        return out

    A_e = prep(A_entries, n, n, symmetric=True)
    K_e = prep(K_entries, n, m, symmetric=False)
    E_e = prep(E_entries, m, m, symmetric=True)
    dA_e = [[[ex.differentiate(e, f"q{k + 1}") for e in row] for row in A_e]
            for k in range(n)]
    dK_e = [[[ex.differentiate(e, f"q{k + 1}") for e in row] for row in K_e]
            for k in range(n)]
    dE_e = [[[ex.differentiate(e, f"q{k + 1}") for e in row] for row in E_e]
            for k in range(n)]

    A_f = _compile_matrix(A_e, names)
    K_f = _compile_matrix(K_e, names)
    E_f = _compile_matrix(E_e, names)
    dA_f = [_compile_matrix(M, names) for M in dA_e]
    dK_f = [_compile_matrix(M, names) for M in dK_e]
    dE_f = [_compile_matrix(M, names) for M in dE_e]

    def full_fill(funcs, rows, cols, args):
        M = np.empty((rows, cols))
        for i in range(rows):
            for j in range(cols):
                M[i, j] = funcs[i][j](*args)
        return M

    def blocks_fn(q: np.ndarray, u: np.ndarray) -> DynamicsBlocks:
        args = tuple(q) + tuple(u)
        A = _sym_fill(A_f, n, args)
        E = _sym_fill(E_f, m, args)
        if check_spd:
            for name, M in (("A", A), ("E", E)):
                try:
                    np.linalg.cholesky(M)
                except np.linalg.LinAlgError:
                    raise SpdError(f"{name} is not positive definite",
                                   point=(q.copy(), u.copy())) from None
        K = full_fill(K_f, n, m, args)
        B = np.empty((n, n, n))
        C = np.empty((n, n, m))
        D = np.empty((n, m, m))
        for k in range(n):
            B[k] = _sym_fill(dA_f[k], n, args)
            C[k] = full_fill(dK_f[k], n, m, args)
            D[k] = 0.5 * _sym_fill(dE_f[k], m, args)
        return DynamicsBlocks(A, K, E, B, C, D)

    return ReducedDynamics(n, m, blocks_fn, provenance="user-supplied")


# --------------------------------------------------------------------------
# Symbolic reduction (small n) for exact structural checks
# --------------------------------------------------------------------------

@dataclass
class SymbolicReduction:
    """Closed-form reduced blocks; entries are canonical expressions."""

    A: list[list[Expr]]
    K: list[list[Expr]]
    E: list[list[Expr]]
    D: list[list[list[Expr]]]  # D[k][a][b]


def _sym_matmul(X, Y):
    rows, inner, cols = len(X), len(Y), len(Y[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            row.append(ex.simplify(ex.Add(tuple(
                ex.Mul((X[i][r], Y[r][j])) for r in range(inner)
            ))))
        out.append(row)
    return out


def _sym_sub(X, Y):
    return [[ex.simplify(ex.Sub(a, b)) for a, b in zip(rx, ry)]
            for rx, ry in zip(X, Y)]


def _sym_neg(X):
    return [[ex.simplify(ex.Unary("neg", e)) for e in row] for row in X]


def _sym_inverse(M):
    k = len(M)
    if k == 1:
        det = M[0][0]
        adj = [[ex.Const(1.0)]]
    elif k == 2:
        a, b, c, d = M[0][0], M[0][1], M[1][0], M[1][1]
        det = ex.Sub(ex.Mul((a, d)), ex.Mul((b, c)))
        adj = [[d, ex.Unary("neg", b)], [ex.Unary("neg", c), a]]
    elif k == 3:
        def minor(i, j):
            rows = [r for r in range(3) if r != i]
            cols = [c for c in range(3) if c != j]
            return ex.Sub(
                ex.Mul((M[rows[0]][cols[0]], M[rows[1]][cols[1]])),
                ex.Mul((M[rows[0]][cols[1]], M[rows[1]][cols[0]])),
            )
        det = ex.Add(tuple(
            ex.Mul((ex.Const((-1.0) ** j), M[0][j], minor(0, j))) for j in range(3)
        ))
        adj = [[ex.Mul((ex.Const((-1.0) ** (i + j)), minor(j, i)))
                for j in range(3)] for i in range(3)]
    else:
        raise ValueError("symbolic inversion implemented for sizes 1..3")
    det = ex.simplify(det)
    return [[ex.simplify(ex.Div(adj[i][j], det)) for j in range(k)]
            for i in range(k)]


def reduce_symbolic(spec: MechanicalSpec) -> SymbolicReduction:
    """Exact closed-form A, K, E, D for systems with n <= 3.

    Complements :func:`reduce`: identical mathematics carried out on the
    expression trees, usable for structural assertions.
    """
    n, m = spec.n, spec.m
    G = spec.entries
    G11 = [row[:n] for row in G[:n]]
    G12 = [row[n:] for row in G[:n]]
    G21 = [row[:n] for row in G[n:]]
    G22 = [row[n:] for row in G[n:]]
    A = _sym_inverse(G11)
    K = _sym_neg(_sym_matmul(A, G12))
    E = _sym_sub(G22, _sym_matmul(_sym_matmul(G21, A), G12))
    D = []
    for k in range(n):
        var = f"q{k + 1}"
        D.append([[ex.simplify(ex.Mul((ex.Const(0.5), ex.differentiate(e, var))))
                   for e in row] for row in E])
    return SymbolicReduction(A=A, K=K, E=E, D=D)


# --------------------------------------------------------------------------
# Identity cross-checks (block-inverse route vs. Schur route)
# --------------------------------------------------------------------------

@dataclass
class IdentityReport:
    """Max absolute residuals of the two A/K/E routes and the four
    block-inverse identities, with pass/fail against a tolerance."""

    residuals: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    def summary(self) -> str:
        lines = [f"identity cross-check (tol {self.tol:g})"]
        for key, val in self.residuals.items():
            flag = "pass" if val <= self.tol else "FAIL"
            lines.append(f"  {key:<22s} {val:.3e}  {flag}")
        return "\n".join(lines)


def crosscheck_identities(spec: MechanicalSpec, q, u, tol: float) -> IdentityReport:
    """Evaluate both derivations of A, K, E and the four inverse-block
    identities at (q, u); report max absolute residual for each."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = spec.n
    G = spec.evaluate_G(q, u)
    if not np.array_equal(G, G.T):
        raise SymmetryError("numeric G is not symmetric at the requested point")
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SpdError("G is not positive definite", point=(q, u),
                       cond=float(np.linalg.cond(G))) from None
    G11, G12, G21, G22 = G[:n, :n], G[:n, n:], G[n:, :n], G[n:, n:]

    # route 1: block inverse
    A1 = np.linalg.inv(G11)
    K1 = -A1 @ G12
    E1 = G22 - G21 @ A1 @ G12

    # route 2: Schur complements of the full inverse
    Ghat = np.linalg.inv(G)
    H11, H12, H21, H22 = Ghat[:n, :n], Ghat[:n, n:], Ghat[n:, :n], Ghat[n:, n:]
    E2 = np.linalg.inv(H22)
    A2 = H11 - H12 @ E2 @ H21
    K2 = H12 @ E2

    eye_n = np.eye(n)
    eye_m = np.eye(spec.m)
    zeros_mn = np.zeros((spec.m, n))
    zeros_nm = np.zeros((n, spec.m))
    residuals = {
        "A routes": float(np.max(np.abs(A1 - A2))),
        "K routes": float(np.max(np.abs(K1 - K2))),
        "E routes": float(np.max(np.abs(E1 - E2))),
        "Ghat11 G11 + Ghat12 G21": float(np.max(np.abs(H11 @ G11 + H12 @ G21 - eye_n))),
        "Ghat22 G22 + Ghat21 G12": float(np.max(np.abs(H22 @ G22 + H21 @ G12 - eye_m))),
        "Ghat21 G11 + Ghat22 G21": float(np.max(np.abs(H21 @ G11 + H22 @ G21 - zeros_mn))),
        "G11 Ghat12 + G12 Ghat22": float(np.max(np.abs(G11 @ H12 + G12 @ H22 - zeros_nm))),
    }
    return IdentityReport(residuals=residuals, tol=tol)


# --------------------------------------------------------------------------
# Conjugate momenta
# --------------------------------------------------------------------------

def conjugate_momenta(spec: MechanicalSpec, q, u, qdot, udot):
    """(p; eta) = G(q, u) (qdot; udot), split into the two blocks."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.concatenate([np.atleast_1d(np.asarray(qdot, dtype=float)),
                        np.atleast_1d(np.asarray(udot, dtype=float))])
    G = spec.evaluate_G(q, u)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SpdError("G is not positive definite", point=(q, u)) from None
    pe = G @ v
    return pe[:spec.n], pe[spec.n:]


def recover_velocities(spec: MechanicalSpec, q, u, p, eta):
    """Inverse of :func:`conjugate_momenta`: (qdot; udot) = G^-1 (p; eta)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    rhs = np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)),
                          np.atleast_1d(np.asarray(eta, dtype=float))])
    G = spec.evaluate_G(q, u)
    v = np.linalg.solve(G, rhs)
    return v[:spec.n], v[spec.n:]
