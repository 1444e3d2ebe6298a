"""Matrix decision variables embedded into the scalar decision vector ``y``,
and affine matrix expressions over them.

A symmetric ``p x p`` variable owns ``p (p + 1) / 2`` coordinates, one per lower
triangle entry ``(i, j)``, ``i >= j``, taken row by row. Its basis matrix is
``e_i e_j' + e_j e_i'`` off the diagonal and ``e_i e_i'`` on it, so the coordinate
of an entry is the entry itself and extraction is exact.
"""
import numpy as np

from ddctl.core.errors import DimensionError


class Variable:
    """Base class of decision variables.

    :param str name: label used in records and error messages.
    :param int offset: index of the first coordinate in ``y``.
    """

    shape = None
    size = 0

    def __init__(self, name, offset):
        self.name = name
        self.offset = offset

    @property
    def slice(self):
        return slice(self.offset, self.offset + self.size)

    def basis(self):
        """Coefficient tensor of shape ``(size,) + shape``."""
        raise NotImplementedError

    def embed(self, value):
        """Coordinates of ``value`` as a vector of length ``size``."""
        raise NotImplementedError

    def extract(self, y):
        """Matrix value of the variable at the decision vector ``y``."""
        raise NotImplementedError

    def expr(self):
        return AffineExpr(np.zeros(self.shape), {self: self.basis()})

    def __repr__(self):
        return f"<{self.__class__.__name__} {self.name} {self.shape}>"


class SymmetricVariable(Variable):
    def __init__(self, name, offset, p):
        super().__init__(name, offset)
        self.p = p
        self.shape = (p, p)
        self.size = p * (p + 1) // 2
        self._rows, self._cols = np.tril_indices(p)

    def basis(self):
        basis = np.zeros((self.size,) + self.shape)
        index = np.arange(self.size)
        basis[index, self._rows, self._cols] = 1.0
        basis[index, self._cols, self._rows] = 1.0
        return basis

    def embed(self, value):
        value = np.asarray(value, dtype=float)
        if value.shape != self.shape:
            raise DimensionError(f"{self.name} expects shape {self.shape}, got {value.shape}")
        return value[self._rows, self._cols].copy()

    def extract(self, y):
        coords = np.asarray(y, dtype=float)[self.slice]
        value = np.zeros(self.shape)
        value[self._rows, self._cols] = coords
        value[self._cols, self._rows] = coords
        return value


class MatrixVariable(Variable):
    """General ``rows x cols`` variable, coordinates stored row major."""

    def __init__(self, name, offset, rows, cols):
        super().__init__(name, offset)
        self.shape = (rows, cols)
        self.size = rows * cols

    def basis(self):
        return np.eye(self.size).reshape((self.size,) + self.shape)

    def embed(self, value):
        value = np.asarray(value, dtype=float)
        if value.shape != self.shape:
            raise DimensionError(f"{self.name} expects shape {self.shape}, got {value.shape}")
        return value.reshape(-1).copy()

    def extract(self, y):
        return np.asarray(y, dtype=float)[self.slice].reshape(self.shape).copy()


class ScalarVariable(MatrixVariable):
    def __init__(self, name, offset):
        super().__init__(name, offset, 1, 1)

    def extract(self, y):
        return float(np.asarray(y, dtype=float)[self.offset])


class VariableSpace:
    """Allocates variables and maps between matrix values and the decision vector.

    .. code-block:: python

        space = VariableSpace()
        P = space.symmetric("P", 3)
        G = space.matrix("G", 2, 2)
        y = space.embed({P: np.eye(3), G: np.zeros((2, 2))})
    """

    def __init__(self):
        self.variables = []

    @property
    def dim(self):
        return sum(v.size for v in self.variables)

    def _add(self, variable):
        if any(v.name == variable.name for v in self.variables):
            raise DimensionError(f"Variable {variable.name!r} already declared")
        self.variables.append(variable)
        return variable

    def symmetric(self, name, p):
        return self._add(SymmetricVariable(name, self.dim, p))

    def matrix(self, name, rows, cols):
        return self._add(MatrixVariable(name, self.dim, rows, cols))

    def scalar(self, name):
        return self._add(ScalarVariable(name, self.dim))

    def embed(self, values):
        y = np.zeros(self.dim)
        for variable, value in values.items():
            y[variable.slice] = variable.embed(np.atleast_2d(value))
        return y

    def extract(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise DimensionError(f"Decision vector has shape {y.shape}, expected ({self.dim},)")
        return {v.name: v.extract(y) for v in self.variables}

    def linear_form(self, expr):
        """Vector ``c`` and constant ``c0`` with ``expr(y) = c' y + c0`` for a 1x1 expression."""
        if expr.shape != (1, 1):
            raise DimensionError(f"Linear form expects a 1x1 expression, got {expr.shape}")
        c = np.zeros(self.dim)
        for variable, coeffs in expr.terms.items():
            c[variable.slice] += coeffs[:, 0, 0]
        return c, float(expr.const[0, 0])

    def coefficients(self, expr):
        """Constant matrix and coefficient tensor ``(dim, rows, cols)`` of ``expr``."""
        tensor = np.zeros((self.dim,) + expr.shape)
        for variable, coeffs in expr.terms.items():
            tensor[variable.slice] += coeffs
        return expr.const.copy(), tensor


class AffineExpr:
    """Matrix valued affine map ``const + sum_v coeff_v(value of v)``.

    ``terms`` maps each variable to a tensor of shape ``(variable.size, rows, cols)``.
    """

    # numpy arrays on the left defer to the reflected operators.
    __array_ufunc__ = None

    def __init__(self, const, terms=None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = dict(terms or {})

    @property
    def shape(self):
        return self.const.shape

    @classmethod
    def constant(cls, value):
        return cls(value)

    def _check_shape(self, other):
        if self.shape != other.shape:
            raise DimensionError(f"Shapes {self.shape} and {other.shape} do not match")

    def __add__(self, other):
        other = as_expr(other)
        self._check_shape(other)
        terms = dict(self.terms)
        for variable, coeffs in other.terms.items():
            terms[variable] = terms[variable] + coeffs if variable in terms else coeffs
        return AffineExpr(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self):
        return AffineExpr(-self.const, {v: -c for v, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) - self

    def __mul__(self, scalar):
        scalar = float(scalar)
        return AffineExpr(self.const * scalar, {v: c * scalar for v, c in self.terms.items()})

    __rmul__ = __mul__

    def lmul(self, M):
        """``M @ expr`` for a constant matrix ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        terms = {v: np.einsum("ab,sbc->sac", M, c) for v, c in self.terms.items()}
        return AffineExpr(M @ self.const, terms)

    def rmul(self, M):
        """``expr @ M`` for a constant matrix ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        terms = {v: np.einsum("sab,bc->sac", c, M) for v, c in self.terms.items()}
        return AffineExpr(self.const @ M, terms)

    def congruence(self, M):
        """``M' @ expr @ M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return self.rmul(M).lmul(M.T)

    @property
    def T(self):
        return AffineExpr(self.const.T, {v: c.transpose(0, 2, 1) for v, c in self.terms.items()})

    def trace(self, weight=None):
        """``Tr(weight @ expr)`` as a ``1 x 1`` expression."""
        weight = np.eye(self.shape[0]) if weight is None else np.asarray(weight, dtype=float)
        const = np.trace(weight @ self.const)
        terms = {
            v: np.einsum("ab,sba->s", weight, c).reshape(-1, 1, 1) for v, c in self.terms.items()
        }
        return AffineExpr([[const]], terms)

    def value(self, values):
        """Evaluate at the given variable values (mapping variable to matrix)."""
        result = self.const.copy()
        for variable, coeffs in self.terms.items():
            coords = variable.embed(np.atleast_2d(values[variable]))
            result += np.tensordot(coords, coeffs, axes=1)
        return result

    def is_symmetric(self, tol=1e-12):
        if self.shape[0] != self.shape[1]:
            return False
        parts = [self.const] + list(self.terms.values())
        return all(np.allclose(p, np.swapaxes(p, -1, -2), atol=tol) for p in parts)


def as_expr(value):
    if isinstance(value, AffineExpr):
        return value
    return AffineExpr.constant(value)


def bmat(blocks):
    """Assemble a block matrix from a nested list of expressions or constant matrices."""
    blocks = [[as_expr(b) for b in row] for row in blocks]
    heights = [row[0].shape[0] for row in blocks]
    widths = [b.shape[1] for b in blocks[0]]
    for i, row in enumerate(blocks):
        if len(row) != len(widths):
            raise DimensionError("Block rows have different lengths")
        for j, block in enumerate(row):
            if block.shape != (heights[i], widths[j]):
                raise DimensionError(
                    f"Block ({i}, {j}) has shape {block.shape}, expected {(heights[i], widths[j])}"
                )

    row_starts = np.concatenate([[0], np.cumsum(heights)])
    col_starts = np.concatenate([[0], np.cumsum(widths)])
    shape = (int(row_starts[-1]), int(col_starts[-1]))
    const = np.zeros(shape)
    terms = {}
    for i, row in enumerate(blocks):
        rows = slice(row_starts[i], row_starts[i + 1])
        for j, block in enumerate(row):
            cols = slice(col_starts[j], col_starts[j + 1])
            const[rows, cols] = block.const
            for variable, coeffs in block.terms.items():
                if variable not in terms:
                    terms[variable] = np.zeros((variable.size,) + shape)
                terms[variable][:, rows, cols] += coeffs
    return AffineExpr(const, terms)
