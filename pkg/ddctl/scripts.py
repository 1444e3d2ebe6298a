"""One function per subcommand.

Each function receives the validated configuration, the run seed and the settings,
and returns an :class:`Outcome` with the JSON payload and an optional CSV trace.
Domain signals propagate as :class:`~ddctl.core.errors.DdctlError`.
"""
import logging
from dataclasses import dataclass

import numpy as np

from ddctl import collect, design, dp, experiments, oracle
from ddctl.core import rng as rng_streams
from ddctl.core.errors import ConfigurationError
from ddctl.core.linalg import spectral_radius
from ddctl.lti import (
    CostWeights,
    FixedGain,
    LtiSystem,
    NoisyGain,
    PrescribedInputs,
    PureNoise,
    Simulator,
    augment,
    simulate as simulate_plant,
)
from ddctl.schema_validation import validate_record

logger = logging.getLogger(__name__)

DEFAULT_TRAJECTORIES = 200
DEFAULT_MAX_STEPS = 10000
DEFAULT_SETTLE_MAX = 10000
DEFAULT_THRESHOLD = 1e-6


@dataclass
class Outcome:
    payload: dict
    header: list = None
    rows: list = None
    context: dict = None

    @property
    def has_trace(self):
        return self.header is not None


def _collection_context(record):
    if "truncated" not in record.params:
        return None
    return {"truncated_trajectories": len(record.params["truncated"])}


def _system(config):
    if "system" not in config:
        return None
    return LtiSystem.from_record(validate_record("system", config["system"]))


def _weights(config, system=None):
    weights = CostWeights.from_record(validate_record("weights", config["weights"]))
    if system is not None:
        weights.check(system)
    return weights


def _gain(config, section="gain", key="F"):
    values = config.get(section, {})
    return None if key not in values else np.array(values[key])


def _solver_options(config, settings):
    options = {
        key: settings[key] for key in ("feas_tol", "gap_tol", "max_iter", "infeasibility_tol")
    }
    solver = config.get("solver", {})
    options.update({k: v for k, v in solver.items() if k != "strict_tol"})
    return options


def _strict_tol(config, settings):
    return config.get("solver", {}).get("strict_tol", settings["strict_tol"])


def _excitation(section, n, m):
    U = section.get("U", np.eye(m))
    z = section.get("z", np.ones(n))
    return collect.ExcitationSpec(
        U, z, section.get("epsilon", DEFAULT_THRESHOLD), K=section.get("K")
    )


def _collect(config, system, seed, settings, kind=None):
    """Run the configured collection scheme on ``system``.

    Without a collection section, on-policy data uses exploring starts under the
    ``gain`` section and off-policy data restarted pure-noise trajectories.
    """
    sim = Simulator(system, guard=settings["divergence_guard"])
    default_scheme = "exploring-starts" if kind == "on-policy" else "restarting"
    section = config.get("collection", {"scheme": default_scheme})
    scheme = section["scheme"]
    n, m = system.n, system.m

    if scheme == "exploring-starts":
        if kind == "off-policy":
            raise ConfigurationError("Exploring starts produce on-policy data only")
        F = _gain(config)
        if F is None:
            raise ConfigurationError("On-policy collection requires a gain section")
        return collect.on_collect(sim, F, section.get("N", n + m + 2), seed=seed)

    if kind == "on-policy":
        raise ConfigurationError(f"Scheme {scheme} produces off-policy data only")
    spec = _excitation(section, n, m)
    if scheme == "exploration":
        return collect.off_collect(
            sim, spec, section.get("max_steps", DEFAULT_MAX_STEPS), seed=seed
        )
    if scheme == "restarting":
        threads = section.get("threads", settings["threads"])
        return collect.off_collect_restart(
            sim, spec, section.get("N", DEFAULT_TRAJECTORIES), seed=seed, threads=threads
        )
    return collect.off_collect_periodic(
        sim,
        spec,
        section.get("N", DEFAULT_TRAJECTORIES),
        section.get("settle_max", DEFAULT_SETTLE_MAX),
        seed=seed,
    )


def _data(config, system, seed, settings, kind):
    if "data" in config:
        record = collect.DataRecord.from_record(validate_record("data", config["data"]))
        return record.require(kind)
    return _collect(config, system, seed, settings, kind=kind)


def _closed_loop_report(system, F):
    rho = spectral_radius(system.closed_loop(F))
    return {"spectral_radius": rho, "stabilizing": bool(rho < 1.0)}


def _riccati(system, weights, settings):
    return oracle.solve_dare(
        system, weights, tol=settings["dare_tol"], max_iter=settings["dare_max_iter"]
    )


def simulate(config, seed, settings):
    system = _system(config)
    section = config["simulation"]
    name = section["policy"]
    F = section.get("F", _gain(config))
    try:
        if name == "fixed-gain":
            policy = FixedGain(F)
        elif name == "noisy-gain":
            policy = NoisyGain(F, section["U"])
        elif name == "pure-noise":
            policy = PureNoise(section["U"], system.n)
        else:
            policy = PrescribedInputs(section["inputs"])
    except KeyError as e:
        raise ConfigurationError(f"Policy {name} requires {e.args[0]}", original=e)
    if F is None and name in ("fixed-gain", "noisy-gain"):
        raise ConfigurationError(f"Policy {name} requires a gain F")

    trajectory = simulate_plant(
        system,
        section["x0"],
        policy,
        section["steps"],
        rng=rng_streams.master(seed),
        guard=settings["divergence_guard"],
    )
    header = ["k"] + [f"x{i}" for i in range(system.n)] + [f"u{j}" for j in range(system.m)]
    rows = []
    for k, state in enumerate(trajectory.states):
        inputs = trajectory.inputs[k] if k < trajectory.inputs.shape[0] else [None] * system.m
        rows.append([k] + list(state) + list(inputs))
    return Outcome({"status": "ok", "result": trajectory.to_record()}, header, rows)


def collect_data(config, seed, settings):
    system = _system(config)
    record = _collect(config, system, seed, settings)
    report = {
        "valid": collect.is_valid(record),
        "min_eigenvalue": record.min_eigenvalue(),
        "identity_residual": oracle.identity_residual(record, system),
    }
    payload = {
        "status": "ok",
        "data": record.to_record(),
        "system": system.to_record(),
        "report": report,
    }
    return Outcome(payload, context=_collection_context(record))


def eval_stability(config, seed, settings):
    system = _system(config)
    record = _data(config, system, seed, settings, "on-policy")
    verdict = design.eval_stability(
        record, strict_tol=_strict_tol(config, settings), **_solver_options(config, settings)
    )
    payload = {"status": "ok", "result": verdict.to_record()}
    if system is not None and "F" in record.params:
        payload["oracle"] = _closed_loop_report(system, record.params["F"])
    return Outcome(payload, context=_collection_context(record))


def eval_cost(config, seed, settings):
    system = _system(config)
    record = _data(config, system, seed, settings, "on-policy")
    weights = _weights(config, system)
    certificate = design.eval_cost(
        record,
        weights,
        strict_tol=_strict_tol(config, settings),
        **_solver_options(config, settings),
    )
    payload = {"status": "ok", "result": certificate.to_record()}
    if system is not None and "F" in record.params:
        F = record.params["F"]
        payload["oracle"] = {
            "augmented_cost": oracle.augmented_cost(system, weights, F),
            **_closed_loop_report(system, F),
        }
    return Outcome(payload, context=_collection_context(record))


def design_stabilizing(config, seed, settings):
    system = _system(config)
    record = _data(config, system, seed, settings, "off-policy")
    result = design.design_stabilizing(
        record,
        strict_tol=_strict_tol(config, settings),
        condition_limit=config.get("design", {}).get(
            "condition_limit", settings["condition_limit"]
        ),
        **_solver_options(config, settings),
    )
    payload = {"status": "ok", "result": result.to_record()}
    if system is not None:
        payload["oracle"] = {
            **_closed_loop_report(system, result.F),
            "lyapunov_certificate": oracle.lyapunov_certificate_holds(
                augment(system, result.F), result.lyapunov
            ),
        }
    return Outcome(payload)


def design_lqr(config, seed, settings):
    system = _system(config)
    record = _data(config, system, seed, settings, "off-policy")
    weights = _weights(config, system)
    section = config.get("design", {})
    epsilon = section.get("epsilon", settings["lqr_epsilon"])
    result = design.design_lqr(
        record,
        weights,
        epsilon=epsilon,
        strict_tol=_strict_tol(config, settings),
        condition_limit=section.get("condition_limit", settings["condition_limit"]),
        **_solver_options(config, settings),
    )
    payload = {"status": "ok", "result": result.to_record()}
    if system is not None:
        riccati = _riccati(system, weights, settings)
        report = {
            "Fstar": riccati.Fstar,
            "gain_error": float(np.linalg.norm(result.F - riccati.Fstar)),
            "optimal_cost": oracle.augmented_cost(system, weights, riccati.Fstar),
            **_closed_loop_report(system, result.F),
        }
        if report["stabilizing"]:
            cost = oracle.augmented_cost(system, weights, result.F)
            report["upper_bound_gap"] = result.objective - (1.0 + epsilon) * cost
        payload["oracle"] = report
    return Outcome(payload)


def _dp_outcome(trace, system, weights, settings):
    payload = {"status": "ok", "result": trace.to_record()}
    Fstar = None
    if system is not None:
        riccati = _riccati(system, weights, settings)
        Fstar = riccati.Fstar
        payload["oracle"] = {
            "Fstar": Fstar,
            "Pstar": riccati.Pstar,
            "gain_error": float(np.linalg.norm(trace.final_F - Fstar)),
        }
    return Outcome(payload, trace.csv_header(Fstar is not None), trace.csv_rows(Fstar))


def policy_iteration(config, seed, settings):
    system = _system(config)
    weights = _weights(config, system)
    section = config.get("dp", {})
    F0 = section.get("F0", _gain(config))
    if F0 is None:
        F0 = np.zeros((system.m, system.n))
    collector = dp.OnPolicyCollector(
        Simulator(system, guard=settings["divergence_guard"]), N=section.get("N"), seed=seed
    )
    trace = dp.policy_iteration(
        collector,
        weights,
        F0,
        eps_stop=section.get("eps_stop", settings["pi_eps"]),
        max_iter=section.get("max_iter", settings["pi_max_iter"]),
        orientation=section.get("orientation", "q-bellman"),
    )
    return _dp_outcome(trace, system, weights, settings)


def value_iteration(config, seed, settings):
    system = _system(config)
    record = _data(config, system, seed, settings, "off-policy")
    weights = _weights(config, system)
    section = config.get("dp", {})
    trace = dp.value_iteration(
        record,
        weights,
        eps_stop=section.get("eps_stop", settings["vi_eps"]),
        max_iter=section.get("max_iter", settings["vi_max_iter"]),
    )
    return _dp_outcome(trace, system, weights, settings)


def riccati_oracle(config, seed, settings):
    system = _system(config)
    weights = _weights(config, system)
    solution = _riccati(system, weights, settings)
    return Outcome({"status": "ok", "result": solution.to_record()})


def mc_validity(config, seed, settings):
    system = _system(config)
    section = config["collection"]
    mc = config["mc"]
    spec = _excitation(section, system.n, system.m)
    report = experiments.mc_validity(
        system,
        spec,
        scheme=mc["scheme"],
        N_max=mc["N_max"],
        checkpoints=mc["checkpoints"],
        seed=seed,
        settle_max=mc.get("settle_max", DEFAULT_SETTLE_MAX),
        threads=section.get("threads", settings["threads"]),
    )
    payload = {"status": "ok", "result": report.to_record()}
    return Outcome(payload, report.csv_header(), report.csv_rows())


def generate(config, seed, settings):
    section = config["generator"]
    system, weights = experiments.gen_system(
        section["n"],
        section["m"],
        stable_open_loop=section["stable"],
        spectral_radius_cap=section.get("cap", settings["spectral_radius_cap"]),
        seed=seed,
        attempts=settings["generation_attempts"],
    )
    return Outcome(
        {
            "status": "ok",
            "generator": section,
            "system": system.to_record(),
            "weights": weights.to_record(),
        }
    )


COMMANDS = {
    "simulate": simulate,
    "collect": collect_data,
    "eval-stability": eval_stability,
    "eval-cost": eval_cost,
    "design-stab": design_stabilizing,
    "design-lqr": design_lqr,
    "pi": policy_iteration,
    "vi": value_iteration,
    "oracle": riccati_oracle,
    "mc-validity": mc_validity,
    "gen": generate,
}
