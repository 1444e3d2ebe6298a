"""This module contains generic schemas used by the core. You should declare schemas that
may be reused across `ddctl` here.

.. note:: This module is reserved for generic schemas only.

    - If a schema describes an experiment section, declare it in :mod:`ddctl.schema`.
"""
import math

import colander


class Any(colander.SchemaType):
    """Colander type agnostic field."""

    def deserialize(self, node, cstruct):
        return cstruct


class MatrixType(colander.SchemaType):
    """Rectangular matrix given as a list of rows of finite numbers.

    Deserializes into a list of lists of floats; conversion into arrays is left to
    the consumer so that the validated config stays JSON serializable.
    """

    def serialize(self, node, appstruct):
        if appstruct is colander.null:
            return colander.null
        return [[float(v) for v in row] for row in appstruct]

    def deserialize(self, node, cstruct):
        if cstruct is colander.null:
            return colander.null
        if not isinstance(cstruct, (list, tuple)) or not cstruct:
            raise colander.Invalid(node, "Matrix must be a non-empty list of rows")
        rows = []
        for row in cstruct:
            if not isinstance(row, (list, tuple)) or not row:
                raise colander.Invalid(node, "Matrix rows must be non-empty lists")
            try:
                values = [float(v) for v in row]
            except (TypeError, ValueError):
                raise colander.Invalid(node, "Matrix entries must be numbers")
            if not all(math.isfinite(v) for v in values):
                raise colander.Invalid(node, "Matrix entries must be finite")
            rows.append(values)
        if len({len(row) for row in rows}) != 1:
            raise colander.Invalid(node, "Matrix rows must have the same length")
        return rows


class Matrix(colander.SchemaNode):
    """Matrix field, optionally constrained to be square.

    .. code-block:: python

        class SystemSchema(colander.MappingSchema):
            A = Matrix(square=True)
    """

    schema_type = MatrixType
    square = False

    def validator(self, node, value):
        if self.square and len(value) != len(value[0]):
            raise colander.Invalid(node, "Matrix must be square")


class VectorType(colander.SchemaType):
    """Flat list of finite numbers."""

    def deserialize(self, node, cstruct):
        if cstruct is colander.null:
            return colander.null
        if not isinstance(cstruct, (list, tuple)) or not cstruct:
            raise colander.Invalid(node, "Vector must be a non-empty list")
        try:
            values = [float(v) for v in cstruct]
        except (TypeError, ValueError):
            raise colander.Invalid(node, "Vector entries must be numbers")
        if not all(math.isfinite(v) for v in values):
            raise colander.Invalid(node, "Vector entries must be finite")
        return values


class Vector(colander.SchemaNode):
    schema_type = VectorType


class PositiveInteger(colander.SchemaNode):
    schema_type = colander.Integer
    validator = colander.Range(min=1)


class PositiveFloat(colander.SchemaNode):
    schema_type = colander.Float

    def validator(self, node, value):
        if not value > 0 or not math.isfinite(value):
            raise colander.Invalid(node, "Must be a finite positive number")


class Seed(colander.SchemaNode):
    schema_type = colander.Integer
    validator = colander.Range(min=0)
    missing = 0


class StrictMapping(colander.MappingSchema):
    """Mapping schema rejecting unknown keys."""

    @staticmethod
    def schema_type():
        return colander.Mapping(unknown="raise")
