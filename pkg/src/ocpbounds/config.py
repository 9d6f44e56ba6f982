"""
JSON run configuration.

Every section is optional; missing values fall back to the defaults below.
Unknown keys are rejected so that typos do not silently change a run::

    {
      "problem": {"k1": 1, "k2": 1, "m1": 2, "m2": 1, "beta": 0.5, "alpha": 0.05,
                  "psi_minus": -3.0, "psi_plus": 3.0,
                  "unconstrained": false, "ball_radius": null},
      "discretization": {"n": 50, "p_state": 1, "p_flux": 1, "p_control": 1},
      "alg1": {"i_max": 20, "eps": 1e-4},
      "pg": {"i_max_pg": 10, "eps_pg": 1e-6, "lambda_max": 1.0,
             "golden_tol": 1e-4, "metric": "lumped"},
      "c_omega": null,
      "output": {"dir": "out"}
    }
"""

import json
from dataclasses import asdict, dataclass, field

from .algorithms import AlgOneParams, PgParams
from .ocp_core import FRIEDRICHS_UNIT_SQUARE, AdmissibleSet
from .problems import build_case


class ConfigError(ValueError):
    pass


@dataclass
class ProblemSection:
    k1: int = 1
    k2: int = 1
    m1: int = 2
    m2: int = 1
    beta: float = 0.5
    alpha: float = 0.05
    psi_minus: float = -3.0
    psi_plus: float = 3.0
    unconstrained: bool = False
    ball_radius: float = None


@dataclass
class DiscretizationSection:
    n: int = 50
    p_state: int = 1
    p_flux: int = 1
    p_control: int = 1


@dataclass
class AlgOneSection:
    i_max: int = 20
    eps: float = 1e-4


@dataclass
class PgSection:
    i_max_pg: int = 10
    eps_pg: float = 1e-6
    lambda_max: float = 1.0
    golden_tol: float = 1e-4
    metric: str = "lumped"


@dataclass
class OutputSection:
    dir: str = "out"


_SECTIONS = {
    "problem": ProblemSection,
    "discretization": DiscretizationSection,
    "alg1": AlgOneSection,
    "pg": PgSection,
    "output": OutputSection,
}


@dataclass
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    discretization: DiscretizationSection = field(default_factory=DiscretizationSection)
    alg1: AlgOneSection = field(default_factory=AlgOneSection)
    pg: PgSection = field(default_factory=PgSection)
    output: OutputSection = field(default_factory=OutputSection)
    c_omega: float = None

    def to_dict(self):
        return asdict(self)

    @property
    def friedrichs(self):
        return FRIEDRICHS_UNIT_SQUARE if self.c_omega is None else self.c_omega

    def case(self):
        p = self.problem
        return build_case(p.k1, p.k2, p.m1, p.m2, p.beta, p.alpha,
                          p.psi_minus, p.psi_plus, unconstrained=p.unconstrained)

    def problem_data(self):
        case = self.case()
        data = case.problem(self.friedrichs)
        if self.problem.ball_radius is not None:
            data.admissible = AdmissibleSet.l2_ball(self.problem.ball_radius)
        return data

    def alg1_params(self):
        return AlgOneParams(self.alg1.i_max, self.alg1.eps)

    def pg_params(self):
        g = self.pg
        return PgParams(g.i_max_pg, g.eps_pg, g.lambda_max, g.golden_tol,
                        metric=g.metric, alg1=self.alg1_params())

    def validate(self):
        """Re-run the checks of the numerical modules; raise ConfigError on failure."""
        d = self.discretization
        try:
            _require_int(d.n, "discretization.n", 1)
            if d.p_state not in (1, 2):
                raise ValueError("discretization.p_state must be 1 or 2")
            if d.p_flux not in (1, 2):
                raise ValueError("discretization.p_flux must be 1 or 2")
            if d.p_control != 1:
                raise ValueError("discretization.p_control must be 1")
            if self.c_omega is not None:
                if not isinstance(self.c_omega, (int, float)) or isinstance(self.c_omega, bool):
                    raise ValueError("c_omega must be a number")
            if self.problem.unconstrained and self.problem.ball_radius is not None:
                raise ValueError("problem.unconstrained and problem.ball_radius are exclusive")
            self.problem_data()
            self.pg_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self


def _require_int(value, name, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValueError("{} must be an integer >= {}".format(name, minimum))


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - {"c_omega"}
    if unknown:
        raise ConfigError("unknown configuration keys: {}".format(", ".join(sorted(unknown))))
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError("section {!r} must be an object".format(name))
        allowed = set(cls.__dataclass_fields__)
        bad = set(section) - allowed
        if bad:
            raise ConfigError("unknown keys in {!r}: {}".format(name, ", ".join(sorted(bad))))
        kwargs[name] = cls(**section)
    kwargs["c_omega"] = raw.get("c_omega")
    return RunConfig(**kwargs).validate()


def load_config(path=None):
    """Read and validate a configuration file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig().validate()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read {}: {}".format(path, exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("invalid JSON in {}: {}".format(path, exc)) from exc
    return config_from_dict(raw)
