"""Cone program data model and the interior-point solver bridge.

A ConeProgram is

    minimize    obj @ x
    subject to  offset_i + coeffs_i @ x  in  K_i   for every block i,

where K_i is a nonnegative orthant, a second-order cone, a rotated
second-order cone, or a real PSD cone (matrices stored as full
column-major vectors).  The rotated cone uses the convention
(t, s, u) with t*s >= ||u||^2 and t, s >= 0; it is lowered to a plain
second-order cone before the backend sees it.

Complex Hermitian LMIs enter through embed_complex, which maps an n x n
Hermitian matrix to the real symmetric 2n x 2n form
[[Re A, -Im A], [Im A, Re A]] whose definiteness agrees with the
complex one (each complex eigenvalue appears twice).

The robustification helpers implement two standard lifts:

  * schur_lift(t, r): ||r||^2 <= t as the Hermitian block
    [[t, r^H], [r, I]].
  * robust_lmi_lift(spec, lam): the finite LMI certifying
    A >= P^H X Q + Q^H X^H P for every ||X|| <= rho, namely
    [[A - lam Q^H Q, -rho P^H], [-rho P, lam I]] with multiplier
    lam >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

HERMITIAN_TOL = 1e-12


def embed_complex(A):
    """Real symmetric embedding of a complex Hermitian matrix.

    Raises ValueError when the input is not Hermitian to within
    1e-12 relative to its largest entry.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("embedding expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if float(np.max(np.abs(A - A.conj().T))) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def schur_lift(t, r):
    """Hermitian block [[t, r^H], [r, I]]; PSD exactly when ||r||^2 <= t."""
    r = np.asarray(r, dtype=complex).reshape(-1, 1)
    m = r.shape[0]
    out = np.empty((m + 1, m + 1), dtype=complex)
    out[0, 0] = t
    out[0, 1:] = r.conj().T
    out[1:, 0:1] = r
    out[1:, 1:] = np.eye(m)
    return out


@dataclass(frozen=True)
class RobustLmiSpec:
    """Data of the uncertain LMI  A >= P^H X Q + Q^H X^H P, ||X|| <= rho.

    A is s x s Hermitian, X ranges over p x q matrices with spectral
    norm at most rho, P is p x s and Q is q x s.
    """

    A: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    rho: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        P = np.asarray(self.P, dtype=complex)
        Q = np.asarray(self.Q, dtype=complex)
        s = A.shape[0]
        if A.shape != (s, s):
            raise ValueError("A must be square")
        scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
        if float(np.max(np.abs(A - A.conj().T))) > HERMITIAN_TOL * scale:
            raise ValueError("A must be Hermitian")
        if P.ndim != 2 or P.shape[1] != s or Q.ndim != 2 or Q.shape[1] != s:
            raise ValueError("P and Q must have as many columns as A")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)


def robust_lmi_lift(spec, lam):
    """Finite certificate LMI of the uncertain inequality in spec.

    Returns the Hermitian matrix
    [[A - lam Q^H Q, -rho P^H], [-rho P, lam I_p]]; PSD for some
    lam >= 0 exactly when A - P^H X Q - Q^H X^H P is PSD for every
    admissible X.
    """
    A, P, Q, rho = spec.A, spec.P, spec.Q, spec.rho
    s = A.shape[0]
    p = P.shape[0]
    out = np.empty((s + p, s + p), dtype=complex)
    out[:s, :s] = A - lam * (Q.conj().T @ Q)
    out[:s, s:] = -rho * P.conj().T
    out[s:, :s] = -rho * P
    out[s:, s:] = lam * np.eye(p)
    return out


@dataclass
class NonnegBlock:
    offset: np.ndarray
    coeffs: np.ndarray
    kind = "nonneg"

    def rows(self):
        return self.offset.shape[0]


@dataclass
class SocBlock:
    """z[0] >= ||z[1:]|| for z = offset + coeffs @ x."""

    offset: np.ndarray
    coeffs: np.ndarray
    kind = "soc"

    def rows(self):
        return self.offset.shape[0]


@dataclass
class RsocBlock:
    """z[0] * z[1] >= ||z[2:]||^2 with z[0], z[1] >= 0."""

    offset: np.ndarray
    coeffs: np.ndarray
    kind = "rsoc"

    def rows(self):
        return self.offset.shape[0]


@dataclass
class PsdBlock:
    """side x side real symmetric slack, stored column-major in z."""

    side: int
    offset: np.ndarray
    coeffs: np.ndarray
    kind = "psd"

    def rows(self):
        return self.side * self.side


def hermitian_psd_block(n_vars, base, terms):
    """PSD block for the complex Hermitian affine map base + sum x_i A_i.

    terms is an iterable of (variable index, Hermitian matrix) pairs;
    repeated indices accumulate.  The block is stored in the real
    embedding, doubling the side length.
    """
    E0 = embed_complex(base)
    side = E0.shape[0]
    coeffs = np.zeros((side * side, n_vars))
    for idx, mat in terms:
        coeffs[:, idx] += embed_complex(mat).reshape(-1, order="F")
    return PsdBlock(side=side, offset=E0.reshape(-1, order="F"), coeffs=coeffs)


@dataclass
class ConeProgram:
    """Linear objective over the intersection of affine cone slices."""

    n_vars: int
    objective: np.ndarray
    blocks: list = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        if self.objective.shape[0] != self.n_vars:
            raise ValueError("objective length must equal n_vars")
        for b in self.blocks:
            self._check_block(b)

    def _check_block(self, b):
        b.offset = np.asarray(b.offset, dtype=float).reshape(-1)
        b.coeffs = np.asarray(b.coeffs, dtype=float)
        if b.coeffs.shape != (b.offset.shape[0], self.n_vars):
            raise ValueError("block coefficient shape mismatch")
        if b.kind == "soc" and b.offset.shape[0] < 1:
            raise ValueError("second-order cone block needs at least one row")
        if b.kind == "rsoc" and b.offset.shape[0] < 2:
            raise ValueError("rotated cone block needs at least two rows")
        if b.kind == "psd" and b.offset.shape[0] != b.side * b.side:
            raise ValueError("psd block must carry side*side rows")

    def add(self, block):
        self._check_block(block)
        self.blocks.append(block)

    def slack(self, block, x):
        return block.offset + block.coeffs @ x

    def violation(self, x):
        """Largest constraint violation at x (0 when feasible)."""
        worst = 0.0
        for b in self.blocks:
            z = self.slack(b, x)
            if b.kind == "nonneg":
                v = float(np.max(-z, initial=0.0))
            elif b.kind == "soc":
                v = float(np.linalg.norm(z[1:]) - z[0])
            elif b.kind == "rsoc":
                v = max(float(-z[0]), float(-z[1]),
                        float(np.sum(z[2:] ** 2) - z[0] * z[1]))
            else:
                mat = z.reshape(b.side, b.side, order="F")
                v = float(-np.linalg.eigvalsh(0.5 * (mat + mat.T))[0])
            worst = max(worst, v)
        return worst

    def dump(self, path):
        """Write a self-describing text form of the program for debugging."""
        lines = ["coneprogram 1", f"vars {self.n_vars}", "minimize"]
        lines.append(" ".join("%.17g" % v for v in self.objective))
        for b in self.blocks:
            if b.kind == "psd":
                lines.append(f"block psd side {b.side}")
            else:
                lines.append(f"block {b.kind} rows {b.offset.shape[0]}")
            lines.append("offset " + " ".join("%.17g" % v for v in b.offset))
            for r in range(b.coeffs.shape[0]):
                lines.append("row " + " ".join("%.17g" % v for v in b.coeffs[r]))
        lines.append("end")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def load_program(path):
    """Inverse of ConeProgram.dump."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != "coneprogram 1":
        raise ValueError("unrecognized dump header")
    n_vars = int(lines[1].split()[1])
    assert lines[2] == "minimize"
    obj = np.array([float(v) for v in lines[3].split()])
    blocks = []
    i = 4
    while i < len(lines) and lines[i] != "end":
        head = lines[i].split()
        kind = head[1]
        if kind == "psd":
            side = int(head[3])
            rows = side * side
        else:
            rows = int(head[3])
        offset = np.array([float(v) for v in lines[i + 1].split()[1:]])
        coeffs = np.array([[float(v) for v in lines[i + 2 + r].split()[1:]]
                           for r in range(rows)]).reshape(rows, n_vars)
        cls = {"nonneg": NonnegBlock, "soc": SocBlock, "rsoc": RsocBlock}.get(kind)
        if cls is not None:
            blocks.append(cls(offset=offset, coeffs=coeffs))
        else:
            blocks.append(PsdBlock(side=side, offset=offset, coeffs=coeffs))
        i += 2 + rows
    return ConeProgram(n_vars=n_vars, objective=obj, blocks=blocks)


@dataclass(frozen=True)
class SolveOutcome:
    """Solver verdict: status, primal point, objective, raw statistics."""

    status: str
    x: np.ndarray = None
    objective: float = None
    stats: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "optimal"


def _rsoc_to_soc(block):
    """(t, s, u) with ts >= ||u||^2  <=>  ||(t - s, 2u)|| <= t + s."""
    off, co = block.offset, block.coeffs
    T = np.zeros((off.shape[0], off.shape[0]))
    T[0, 0] = T[0, 1] = 1.0
    T[1, 0] = 1.0
    T[1, 1] = -1.0
    for r in range(2, off.shape[0]):
        T[r, r] = 2.0
    return SocBlock(offset=T @ off, coeffs=T @ co)


_STATUS_MAP = {
    "optimal": "optimal",
    "primal infeasible": "infeasible",
    "dual infeasible": "unbounded",
    "unknown": "numerical_failure",
}


def solve(program, tol=1e-7, max_iters=100):
    """Solve a ConeProgram with the cvxopt interior-point backend.

    Deterministic: identical programs yield identical outcomes.  The
    status is one of optimal | infeasible | unbounded |
    numerical_failure; x and objective are populated only on optimal.
    """
    nonneg, soc, psd = [], [], []
    for b in program.blocks:
        if b.kind == "nonneg":
            nonneg.append(b)
        elif b.kind == "soc":
            soc.append(b)
        elif b.kind == "rsoc":
            soc.append(_rsoc_to_soc(b))
        else:
            psd.append(b)

    rows = sum(b.offset.shape[0] for b in nonneg)
    rows += sum(b.offset.shape[0] for b in soc)
    rows += sum(b.offset.shape[0] for b in psd)
    if rows == 0:
        raise ValueError("program has no constraints")
    G = np.zeros((rows, program.n_vars))
    h = np.zeros(rows)
    dims = {"l": 0, "q": [], "s": []}
    at = 0
    for b in nonneg:
        r = b.offset.shape[0]
        G[at:at + r] = -b.coeffs
        h[at:at + r] = b.offset
        dims["l"] += r
        at += r
    for b in soc:
        r = b.offset.shape[0]
        G[at:at + r] = -b.coeffs
        h[at:at + r] = b.offset
        dims["q"].append(r)
        at += r
    for b in psd:
        r = b.offset.shape[0]
        G[at:at + r] = -b.coeffs
        h[at:at + r] = b.offset
        dims["s"].append(b.side)
        at += r

    options = {
        "show_progress": False,
        "abstol": tol,
        "reltol": tol,
        "feastol": tol,
        "maxiters": max_iters,
    }
    # G is tall and skinny here, so the normal-equation KKT solver beats
    # the default QR; fall back to QR when the Cholesky route breaks down
    # or stalls without a verdict.
    def conelp(**kw):
        return cvx_solvers.conelp(
            cvx_matrix(program.objective),
            cvx_matrix(G),
            cvx_matrix(h),
            dims=dims,
            options=options,
            **kw,
        )

    try:
        try:
            sol = conelp(kktsolver="chol")
        except ArithmeticError:
            sol = conelp()
        else:
            if sol["status"] == "unknown":
                sol = conelp()
    except (ValueError, ArithmeticError, ZeroDivisionError) as exc:
        return SolveOutcome(status="numerical_failure",
                            stats={"error": repr(exc)})

    status = _STATUS_MAP.get(sol["status"], "numerical_failure")
    stats = {
        "solver_status": sol["status"],
        "iterations": sol.get("iterations"),
        "gap": sol.get("gap"),
    }
    if status != "optimal" or sol["x"] is None:
        return SolveOutcome(status=status, stats=stats)
    x = np.array(sol["x"]).reshape(-1)
    return SolveOutcome(
        status="optimal",
        x=x,
        objective=float(program.objective @ x),
        stats=stats,
    )
