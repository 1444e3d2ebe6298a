"""Experiment configuration sections.

Every section rejects unknown keys. Matrices are validated for shape and finiteness
here; consistency between sections (e.g. weights against the system) is checked when
the domain objects are built.
"""
import colander

from ddctl.collect import KINDS, SCHEMES
from ddctl.core.schema import (
    Any,
    Matrix,
    PositiveFloat,
    PositiveInteger,
    Seed,
    StrictMapping,
    Vector,
)
from ddctl.dp import ORIENTATIONS
from ddctl.experiments import MC_SCHEMES

POLICIES = ("fixed-gain", "noisy-gain", "pure-noise", "prescribed")


class SystemSchema(StrictMapping):
    n = PositiveInteger(missing=colander.drop)
    m = PositiveInteger(missing=colander.drop)
    A = Matrix(square=True)
    B = Matrix()


class GeneratorSchema(StrictMapping):
    n = PositiveInteger()
    m = PositiveInteger()
    stable = colander.SchemaNode(colander.Boolean(), missing=False)
    cap = PositiveFloat(missing=colander.drop, validator=colander.Range(min=0, max=1))


class WeightsSchema(StrictMapping):
    Q = Matrix(square=True)
    R = Matrix(square=True)


class GainSchema(StrictMapping):
    F = Matrix()


class CollectionSchema(StrictMapping):
    scheme = colander.SchemaNode(colander.String(), validator=colander.OneOf(SCHEMES))
    N = PositiveInteger(missing=colander.drop)
    max_steps = PositiveInteger(missing=colander.drop)
    settle_max = PositiveInteger(missing=colander.drop)
    U = Matrix(square=True, missing=colander.drop)
    z = Vector(missing=colander.drop)
    epsilon = PositiveFloat(missing=colander.drop)
    K = Matrix(missing=colander.drop)
    threads = PositiveInteger(missing=colander.drop)


class DataSchema(StrictMapping):
    kind = colander.SchemaNode(colander.String(), validator=colander.OneOf(KINDS))
    scheme = colander.SchemaNode(colander.String(), validator=colander.OneOf(SCHEMES))
    n = PositiveInteger()
    m = PositiveInteger()
    S = Matrix(square=True)
    H = Matrix()
    sample_count = PositiveInteger()
    seed = Seed()
    params = colander.SchemaNode(Any(), missing=colander.drop)


class SolverSchema(StrictMapping):
    feas_tol = PositiveFloat(missing=colander.drop)
    gap_tol = PositiveFloat(missing=colander.drop)
    max_iter = PositiveInteger(missing=colander.drop)
    infeasibility_tol = PositiveFloat(missing=colander.drop)
    strict_tol = PositiveFloat(missing=colander.drop)


class DesignSchema(StrictMapping):
    epsilon = PositiveFloat(missing=colander.drop)
    condition_limit = PositiveFloat(missing=colander.drop)


class DpSchema(StrictMapping):
    eps_stop = PositiveFloat(missing=colander.drop)
    max_iter = PositiveInteger(missing=colander.drop)
    N = PositiveInteger(missing=colander.drop)
    F0 = Matrix(missing=colander.drop)
    orientation = colander.SchemaNode(
        colander.String(), validator=colander.OneOf(ORIENTATIONS), missing="q-bellman"
    )


class SimulationSchema(StrictMapping):
    x0 = Vector()
    steps = PositiveInteger()
    policy = colander.SchemaNode(
        colander.String(), validator=colander.OneOf(POLICIES), missing="fixed-gain"
    )
    F = Matrix(missing=colander.drop)
    U = Matrix(square=True, missing=colander.drop)
    inputs = Matrix(missing=colander.drop)


class CheckpointList(colander.SequenceSchema):
    checkpoint = PositiveInteger()


class McSchema(StrictMapping):
    scheme = colander.SchemaNode(colander.String(), validator=colander.OneOf(MC_SCHEMES))
    N_max = PositiveInteger()
    checkpoints = CheckpointList(missing=[])
    settle_max = PositiveInteger(missing=colander.drop)


class ExperimentConfig(StrictMapping):
    """Whole configuration document.

    ``status``, ``result``, ``report``, ``oracle`` and ``meta`` are accepted so that
    a result file can be given back as configuration; they are not used.
    """

    seed = Seed(missing=colander.drop)
    system = SystemSchema(missing=colander.drop)
    generator = GeneratorSchema(missing=colander.drop)
    weights = WeightsSchema(missing=colander.drop)
    gain = GainSchema(missing=colander.drop)
    collection = CollectionSchema(missing=colander.drop)
    data = DataSchema(missing=colander.drop)
    solver = SolverSchema(missing=colander.drop)
    design = DesignSchema(missing=colander.drop)
    dp = DpSchema(missing=colander.drop)
    simulation = SimulationSchema(missing=colander.drop)
    mc = McSchema(missing=colander.drop)

    status = colander.SchemaNode(Any(), missing=colander.drop)
    result = colander.SchemaNode(Any(), missing=colander.drop)
    report = colander.SchemaNode(Any(), missing=colander.drop)
    oracle = colander.SchemaNode(Any(), missing=colander.drop)
    meta = colander.SchemaNode(Any(), missing=colander.drop)
