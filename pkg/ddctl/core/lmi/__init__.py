"""Linear matrix inequality problems over a scalar decision vector.

Problems are built from matrix variables and affine expressions
(:mod:`ddctl.core.lmi.variables`), then solved by the dense interior point method
of :mod:`ddctl.core.lmi.ipm`. Strict inequalities are handled by :func:`max_margin`.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ddctl.core import DEFAULT_SETTINGS
from ddctl.core.errors import (
    DimensionError,
    InfeasibleError,
    NonConvergenceError,
    NumericalFailure,
)
from ddctl.core.lmi import ipm
from ddctl.core.lmi.variables import (  # NOQA
    AffineExpr,
    MatrixVariable,
    ScalarVariable,
    SymmetricVariable,
    VariableSpace,
    bmat,
)

logger = logging.getLogger(__name__)

STATUSES = ("optimal", "infeasible", "max-iterations", "numerical-failure")


class LmiBlock:
    """Constraint ``F0 + sum_i y_i F_i >= 0`` of size ``p``.

    :param F0: constant symmetric ``p x p`` matrix.
    :param F: coefficient tensor of shape ``(d, p, p)``.
    """

    def __init__(self, F0, F, name=None):
        self.F0 = np.atleast_2d(np.asarray(F0, dtype=float))
        p = self.F0.shape[0]
        self.F = np.asarray(F, dtype=float).reshape(-1, p, p)
        self.name = name
        if self.F0.shape != (p, p):
            raise DimensionError(f"Block constant must be square, got {self.F0.shape}")
        if not np.allclose(self.F0, self.F0.T) or not np.allclose(
            self.F, self.F.transpose(0, 2, 1)
        ):
            raise DimensionError(f"Block {name or ''} has non symmetric data")
        self.F0 = (self.F0 + self.F0.T) / 2.0
        self.F = (self.F + self.F.transpose(0, 2, 1)) / 2.0

    @property
    def size(self):
        return self.F0.shape[0]

    @property
    def dim(self):
        return self.F.shape[0]

    def assemble(self, y):
        return self.F0 + np.tensordot(y, self.F, axes=1)

    def scaled(self, factor):
        return LmiBlock(self.F0 * factor, self.F * factor, self.name)

    def to_record(self):
        return {"name": self.name, "F0": self.F0.tolist(), "F": self.F.tolist()}


class LmiProblem:
    """Minimize ``c'y + c0`` subject to every block being positive semidefinite
    and ``A_eq y = b_eq``.

    A zero objective makes it a pure feasibility problem.
    """

    def __init__(self, dim, blocks, c=None, c0=0.0, A_eq=None, b_eq=None, space=None):
        self.dim = int(dim)
        self.blocks = list(blocks)
        self.c = np.zeros(self.dim) if c is None else np.asarray(c, dtype=float).reshape(-1)
        self.c0 = float(c0)
        self.A_eq = np.zeros((0, self.dim)) if A_eq is None else np.atleast_2d(A_eq).astype(float)
        self.b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        self.space = space
        if self.c.shape != (self.dim,):
            raise DimensionError(f"Objective has {self.c.shape[0]} entries, expected {self.dim}")
        if self.A_eq.shape[1] != self.dim or self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise DimensionError("Equality constraints are inconsistent")
        for block in self.blocks:
            if block.dim != self.dim:
                raise DimensionError(
                    f"Block {block.name or ''} has {block.dim} coefficients, expected {self.dim}"
                )
        if not self.blocks:
            raise DimensionError("At least one block is required")

    @classmethod
    def build(cls, space, constraints, objective=None, equalities=None):
        """Assemble a problem from affine expressions.

        :param VariableSpace space: the declared variables.
        :param constraints: list of symmetric expressions (or ``(name, expr)`` pairs),
            each required positive semidefinite.
        :param objective: ``1 x 1`` expression to minimize.
        :param equalities: list of ``(expr, value)`` pairs with ``1 x 1`` expressions.
        """
        blocks = []
        for i, constraint in enumerate(constraints):
            name, expr = constraint if isinstance(constraint, tuple) else (f"block{i}", constraint)
            if not expr.is_symmetric(tol=1e-9 * max(1.0, np.abs(expr.const).max())):
                raise DimensionError(f"Constraint {name} is not symmetric")
            F0, F = space.coefficients(expr)
            blocks.append(LmiBlock(F0, F, name))
        c, c0 = (None, 0.0) if objective is None else space.linear_form(objective)
        A_eq = b_eq = None
        if equalities:
            rows = [space.linear_form(expr) for expr, _ in equalities]
            A_eq = np.array([row for row, _ in rows])
            b_eq = np.array([value - const for (_, const), (_, value) in zip(rows, equalities)])
        return cls(space.dim, blocks, c=c, c0=c0, A_eq=A_eq, b_eq=b_eq, space=space)

    def scaled(self, factor):
        """Same problem with every block multiplied by ``factor > 0``."""
        return LmiProblem(
            self.dim,
            [block.scaled(factor) for block in self.blocks],
            c=self.c,
            c0=self.c0,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            space=self.space,
        )

    def min_block_eigenvalue(self, y):
        return min(linalg.eigvalsh(block.assemble(y))[0] for block in self.blocks)

    def to_record(self):
        """Debugging dump, suitable for cross-solver comparison."""
        return {
            "d": self.dim,
            "c": self.c.tolist(),
            "c0": self.c0,
            "blocks": [block.to_record() for block in self.blocks],
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
        }


@dataclass
class LmiSolution:
    status: str
    y: np.ndarray
    objective_value: float
    dual_objective: float
    min_block_eigenvalue: float
    iterations: int
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    gap: float = 0.0
    Z: list = field(default_factory=list, repr=False)
    space: VariableSpace = field(default=None, repr=False)

    @property
    def primal_objective(self):
        return self.objective_value

    @property
    def optimal(self):
        return self.status == "optimal"

    def values(self):
        """Variable values keyed by name, when the problem was built from a variable space."""
        if self.space is None:
            raise DimensionError("Solution has no variable space")
        return self.space.extract(self.y)

    def raise_for_status(self):
        """Turn a non optimal status into the matching domain error."""
        details = {
            "status": self.status,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "gap": self.gap,
        }
        if self.status == "infeasible":
            raise InfeasibleError("LMI is infeasible", details=details)
        if self.status == "max-iterations":
            raise NonConvergenceError(
                "Interior point reached its iteration limit", details=details
            )
        if self.status == "numerical-failure":
            raise NumericalFailure("Interior point factorization breakdown", details=details)
        return self

    def to_record(self):
        return {
            "status": self.status,
            "y": self.y.tolist(),
            "objective": self.objective_value,
            "dual_objective": self.dual_objective,
            "min_block_eigenvalue": self.min_block_eigenvalue,
            "iterations": self.iterations,
        }


def solve(
    problem,
    feas_tol=DEFAULT_SETTINGS["feas_tol"],
    gap_tol=DEFAULT_SETTINGS["gap_tol"],
    max_iter=DEFAULT_SETTINGS["max_iter"],
    infeasibility_tol=DEFAULT_SETTINGS["infeasibility_tol"],
):
    """Solve ``problem`` with the primal-dual interior point method.

    ``optimal`` guarantees relative residuals below ``feas_tol``, relative duality gap
    below ``gap_tol`` and every block at the returned point with smallest eigenvalue
    above ``-feas_tol``.

    :rtype: LmiSolution
    """
    if problem.dim == 0:
        min_eig = problem.min_block_eigenvalue(np.zeros(0))
        status = "optimal" if min_eig >= -feas_tol else "infeasible"
        return LmiSolution(
            status=status,
            y=np.zeros(0),
            objective_value=problem.c0,
            dual_objective=problem.c0,
            min_block_eigenvalue=float(min_eig),
            iterations=0,
            space=problem.space,
        )

    status, y, Z, nu, info = ipm.solve(problem, feas_tol, gap_tol, max_iter, infeasibility_tol)
    solution = LmiSolution(
        status=status,
        y=y,
        objective_value=info["primal_objective"] + problem.c0,
        dual_objective=info["dual_objective"] + problem.c0,
        min_block_eigenvalue=info["min_block_eigenvalue"],
        iterations=info["iterations"],
        primal_residual=info["primal_residual"],
        dual_residual=info["dual_residual"],
        gap=info["gap"],
        Z=Z,
        space=problem.space,
    )
    log = logger.debug if status == "optimal" else logger.warning
    log(
        f"LMI {status} after {solution.iterations} iterations "
        f"(objective={solution.objective_value:.10g}, gap={solution.gap:.2e})"
    )
    return solution


@dataclass
class Margin:
    """Result of :func:`max_margin`: optimal margin ``t`` and witness ``y``."""

    t: float
    y: np.ndarray
    solution: LmiSolution
    space: VariableSpace = field(default=None, repr=False)

    @property
    def status(self):
        return self.solution.status

    def values(self):
        if self.space is None:
            raise DimensionError("Margin has no variable space")
        return self.space.extract(self.y)


def max_margin(problem, designated=None, **options):
    """Maximize ``t`` such that every designated block minus ``t I`` is positive semidefinite,
    the other blocks (normalization constraints) staying positive semidefinite.

    The objective of ``problem`` is ignored. The caller compares ``t`` with its strictness
    tolerance to decide strict feasibility.

    :param designated: indices or names of the blocks receiving the margin (default: all).
    :rtype: Margin
    """
    if designated is None:
        designated = range(len(problem.blocks))
    selected = set()
    for key in designated:
        if isinstance(key, str):
            matches = [i for i, block in enumerate(problem.blocks) if block.name == key]
            if not matches:
                raise DimensionError(f"Unknown block {key!r}")
            selected.update(matches)
        else:
            selected.add(int(key))

    dim = problem.dim + 1

    blocks = []
    for i, block in enumerate(problem.blocks):
        coefficient = -np.eye(block.size) if i in selected else np.zeros((block.size, block.size))
        F = np.concatenate([block.F, coefficient[None]], axis=0)
        blocks.append(LmiBlock(block.F0, F, block.name))
    c = np.zeros(dim)
    c[-1] = -1.0
    A_eq = np.hstack([problem.A_eq, np.zeros((problem.A_eq.shape[0], 1))])
    lifted = LmiProblem(dim, blocks, c=c, A_eq=A_eq, b_eq=problem.b_eq)

    solution = solve(lifted, **options)
    t = float(solution.y[-1])
    logger.debug(f"Margin problem {solution.status}: t={t:.6g}")
    return Margin(t=t, y=solution.y[:-1].copy(), solution=solution, space=problem.space)
