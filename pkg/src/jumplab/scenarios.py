"""Built-in coefficient scenarios and strict JSON configuration loading.

A scenario bundles a coefficient field, its mark measure, default numerics,
and an ordered list of checks with pinned tolerances.  Configurations are
JSON with a versioned ``schema`` field; unknown keys anywhere are rejected
with a message naming the field, as are missing required parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .coefficients import CoefficientField, MarkMeasure
from .errors import ConfigError
from .first_integral import SFICandidate
from .paths import SamplePath

Array = np.ndarray


@dataclass
class CheckSpec:
    """One named check with its tolerances and solver settings."""

    name: str
    tolerances: dict[str, float]
    settings: dict = field(default_factory=dict)


@dataclass
class ScenarioDef:
    """A registered scenario: builders, defaults, and its check list."""

    name: str
    summary: str
    required_params: tuple[str, ...]
    build: Callable[[dict], tuple[CoefficientField, MarkMeasure]]
    defaults: dict
    checks: list[CheckSpec]
    make_sfi: Callable[[dict], SFICandidate] | None = None
    jacobian_expected: Callable[[dict], Callable[[SamplePath], float]] | None = None
    gaussian_law: Callable[[dict, float, float], tuple[float, float]] | None = None
    lattice_law: Callable[[dict, float, float], tuple[float, float, Array]] | None = None

    def check_spec(self, name: str) -> CheckSpec:
        for spec in self.checks:
            if spec.name == name:
                return spec
        raise ConfigError(f"scenario '{self.name}' has no check '{name}'")


def _zero_field(extra_axis: int):
    if extra_axis:
        return lambda t, x: np.zeros(x.shape + (1,))
    return lambda t, x: np.zeros_like(x)


def _const_field(value: float, extra_axis: int):
    if extra_axis:
        return lambda t, x: np.full(x.shape + (1,), value)
    return lambda t, x: np.full_like(x, value)


def _diffusion_free() -> Callable:
    return _zero_field(1)


def _build_static(p: dict):
    coeffs = CoefficientField(
        n=1,
        m=1,
        drift=_zero_field(0),
        diffusion=_diffusion_free(),
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        elementwise=True,
    )
    return coeffs, MarkMeasure([])


def _build_constant_drift(p: dict):
    a0, b0 = float(p["a0"]), float(p["b0"])
    coeffs = CoefficientField(
        n=1,
        m=1,
        drift=_const_field(a0, 0),
        diffusion=_const_field(b0, 1),
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        elementwise=True,
    )
    return coeffs, MarkMeasure([])


def _build_heat(p: dict):
    b0 = float(p["b0"])
    coeffs = CoefficientField(
        n=1,
        m=1,
        drift=_zero_field(0),
        diffusion=_const_field(b0, 1),
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        elementwise=True,
    )
    return coeffs, MarkMeasure([])


def _build_ou(p: dict):
    theta, b0 = float(p["theta"]), float(p["b0"])
    coeffs = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: -theta * x,
        diffusion=_const_field(b0, 1),
        drift_jac=lambda t, x: np.array([[-theta]]),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        elementwise=True,
    )
    return coeffs, MarkMeasure([])


def _build_pure_jump(p: dict):
    h, rate = float(p["jump_size"]), float(p["rate"])
    coeffs = CoefficientField(
        n=1,
        m=1,
        drift=_zero_field(0),
        diffusion=_diffusion_free(),
        jump=lambda t, x, gamma: np.full_like(x, float(gamma[0])),
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        jump_jac=lambda t, x, gamma: np.zeros((1, 1)),
        jump_state_dependent=False,
        elementwise=True,
        jump_only=True,
    )
    return coeffs, MarkMeasure([(np.array([h]), rate)])


def _build_multiplicative(p: dict):
    c, rate = float(p["c"]), float(p["rate"])
    coeffs = CoefficientField(
        n=1,
        m=1,
        drift=_zero_field(0),
        diffusion=_diffusion_free(),
        jump=lambda t, x, gamma: float(gamma[0]) * x,
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        jump_jac=lambda t, x, gamma: np.array([[float(gamma[0])]]),
        elementwise=True,
        jump_only=True,
    )
    return coeffs, MarkMeasure([(np.array([c]), rate)])


def _build_jump_diffusion(p: dict):
    a0, b0, c, rate = float(p["a0"]), float(p["b0"]), float(p["c"]), float(p["rate"])
    coeffs = CoefficientField(
        n=1,
        m=1,
        drift=_const_field(a0, 0),
        diffusion=_const_field(b0, 1),
        jump=lambda t, x, gamma: float(gamma[0]) * x,
        drift_jac=lambda t, x: np.zeros((1, 1)),
        diffusion_jac=lambda t, x: np.zeros((1, 1, 1)),
        jump_jac=lambda t, x, gamma: np.array([[float(gamma[0])]]),
        elementwise=True,
    )
    return coeffs, MarkMeasure([(np.array([c]), rate)])


def _sfi_linear(a0: float, b0: float) -> SFICandidate:
    """u = x - a0 t - b0 w(t), conserved when dx = a0 dt + b0 dw."""
    return SFICandidate(
        value=lambda t, x, ctx=None: float(x[0]) - a0 * t - b0 * float(ctx.w[0]),
        grad=lambda t, x, ctx=None: np.ones(1),
        hess=lambda t, x, ctx=None: np.zeros((1, 1)),
        uses_noise=True,
        name="linear",
        series=lambda path: path.states[:, 0] - a0 * path.times - b0 * path.w()[:, 0],
    )


def _sfi_identity() -> SFICandidate:
    return SFICandidate(
        value=lambda t, x, ctx=None: float(x[0]),
        grad=lambda t, x, ctx=None: np.ones(1),
        hess=lambda t, x, ctx=None: np.zeros((1, 1)),
        name="identity",
        series=lambda path: path.states[:, 0],
    )


def _sfi_lattice(h: float) -> SFICandidate:
    """u = x - h N(t) for the constant-size jump flow."""
    return SFICandidate(
        value=lambda t, x, ctx=None: float(x[0]) - h * ctx.total_count,
        grad=lambda t, x, ctx=None: np.ones(1),
        hess=lambda t, x, ctx=None: np.zeros((1, 1)),
        uses_noise=True,
        name="lattice-count",
        series=lambda path: path.states[:, 0] - h * path.event_counts()[:, 0].astype(float),
    )


def _sfi_multiplicative(c: float) -> SFICandidate:
    """u = x (1+c)^(-N(t)) for the proportional jump flow."""
    return SFICandidate(
        value=lambda t, x, ctx=None: float(x[0]) * (1.0 + c) ** (-ctx.total_count),
        grad=lambda t, x, ctx=None: np.array([(1.0 + c) ** (-ctx.total_count)]),
        hess=lambda t, x, ctx=None: np.zeros((1, 1)),
        uses_noise=True,
        name="scaled-by-count",
        series=lambda path: path.states[:, 0]
        * (1.0 + c) ** (-path.event_counts()[:, 0].astype(float)),
    )


def _ou_law(p: dict, x0: float, T: float) -> tuple[float, float]:
    theta, b0 = float(p["theta"]), float(p["b0"])
    mean = x0 * np.exp(-theta * T)
    if theta == 0.0:
        var = b0**2 * T
    else:
        var = b0**2 * (-np.expm1(-2.0 * theta * T)) / (2.0 * theta)
    return float(mean), float(var)


def _lattice_law(p: dict, x0: float, T: float) -> tuple[float, float, Array]:
    from scipy import stats

    h, rate = float(p["jump_size"]), float(p["rate"])
    k_max = int(stats.poisson.ppf(1.0 - 1e-12, rate * T)) + 2
    pmf = stats.poisson.pmf(np.arange(k_max + 1), rate * T)
    return x0, h, pmf


_LADDER_DTS = [2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9, 2.0**-10]


SCENARIOS: dict[str, ScenarioDef] = {}


def _register(defn: ScenarioDef) -> None:
    SCENARIOS[defn.name] = defn


_register(
    ScenarioDef(
        name="static",
        summary="all coefficients zero; every residual vanishes identically",
        required_params=(),
        build=_build_static,
        defaults={
            "t_final": 1.0,
            "dt": 1e-3,
            "n_paths": 100,
            "x0": 0.0,
            "grid": {"lo": -4.0, "hi": 4.0, "dx": 0.01},
            "seed": 7,
        },
        checks=[
            CheckSpec("conservation", {"max_residual": 1e-12}),
            CheckSpec("jacobian-oracle", {"rel_err": 1e-9}, {"n_paths": 20}),
        ],
        make_sfi=lambda p: _sfi_identity(),
        jacobian_expected=lambda p: (lambda path: 1.0),
    )
)

_register(
    ScenarioDef(
        name="constant-drift",
        summary="constant drift and diffusion; linear first integral is exact",
        required_params=("a0", "b0"),
        build=_build_constant_drift,
        defaults={
            "t_final": 1.0,
            "dt": 1e-3,
            "n_paths": 1000,
            "x0": 0.0,
            "grid": {"lo": -4.0, "hi": 4.0, "dx": 0.01},
            "seed": 7,
        },
        checks=[
            CheckSpec("conservation", {"max_residual": 1e-12}),
            CheckSpec(
                "iw-ladder",
                {"min_order": 0.9},
                {"dts": _LADDER_DTS[:4], "n_paths": 400},
            ),
            CheckSpec("jacobian-oracle", {"rel_err": 1e-9}, {"n_paths": 20}),
        ],
        make_sfi=lambda p: _sfi_linear(float(p["a0"]), float(p["b0"])),
        jacobian_expected=lambda p: (lambda path: 1.0),
    )
)

_register(
    ScenarioDef(
        name="heat",
        summary="pure diffusion with constant coefficient; Gaussian oracles throughout",
        required_params=("b0",),
        build=_build_heat,
        defaults={
            "t_final": 0.5,
            "dt": 1e-3,
            "n_paths": 1000,
            "x0": 0.0,
            "grid": {"lo": -7.0, "hi": 7.0, "dx": 0.02},
            "seed": 7,
        },
        checks=[
            CheckSpec("conservation", {"max_residual": 1e-12}),
            CheckSpec("iw-ladder", {"min_order": 0.9}, {"dts": _LADDER_DTS, "n_paths": 1000}),
            CheckSpec(
                "density-pushforward",
                {"linf": 1e-2, "invariant_rel": 0.05},
                {"lo": -4.0, "hi": 4.0, "dx": 0.01, "dt": 1e-5, "t_final": 0.25, "sigma0": 0.5},
            ),
            CheckSpec(
                "forward-oracle",
                {"linf": 5e-3},
                {"lo": -4.0, "hi": 4.0, "dx": 0.01, "dt": 2.5e-5},
            ),
            CheckSpec(
                "backward-duality",
                {"l1": 1e-2},
                {
                    "lo": -4.0,
                    "hi": 4.0,
                    "dx": 0.01,
                    "dt": 2.5e-5,
                    "s": 0.25,
                    "t": 0.5,
                    "probe_lo": -2.5,
                    "probe_hi": 2.5,
                    "probe_step": 0.25,
                },
            ),
            CheckSpec(
                "mean-field",
                {"l1": 0.05},
                {
                    "lo": -7.0,
                    "hi": 7.0,
                    "dx": 0.02,
                    "dt": 5e-5,
                    "dt_forward": 1e-4,
                    "n_realizations": 1000,
                    "sigma0": 0.6,
                    "t_final": 0.5,
                },
            ),
            CheckSpec(
                "mc-vs-pde",
                {"l1": 0.05},
                {
                    "lo": -4.0,
                    "hi": 4.0,
                    "dx": 0.01,
                    "dt_forward": 2.5e-5,
                    "n_mc": 100000,
                    "dt_mc": 1e-3,
                    "rebin_dx": 0.05,
                },
            ),
        ],
        make_sfi=lambda p: _sfi_linear(0.0, float(p["b0"])),
        jacobian_expected=lambda p: (lambda path: 1.0),
        gaussian_law=lambda p, x0, T: (x0, float(p["b0"]) ** 2 * T),
    )
)

_register(
    ScenarioDef(
        name="ornstein-uhlenbeck",
        summary="linear mean-reverting drift; transient Gaussian law as oracle",
        required_params=("theta", "b0"),
        build=_build_ou,
        defaults={
            "t_final": 0.5,
            "dt": 1e-3,
            "n_paths": 1000,
            "x0": 0.0,
            "grid": {"lo": -4.0, "hi": 4.0, "dx": 0.01},
            "seed": 7,
        },
        checks=[
            CheckSpec("jacobian-oracle", {"rel_err": 1e-3}, {"n_paths": 20, "dt": 1e-4}),
            CheckSpec(
                "forward-oracle",
                {"linf": 5e-3},
                {"lo": -4.0, "hi": 4.0, "dx": 0.01, "dt": 2.5e-5},
            ),
            CheckSpec(
                "mc-vs-pde",
                {"l1": 0.05},
                {
                    "lo": -4.0,
                    "hi": 4.0,
                    "dx": 0.01,
                    "dt_forward": 2.5e-5,
                    "n_mc": 100000,
                    "dt_mc": 1e-3,
                    "rebin_dx": 0.05,
                },
            ),
        ],
        jacobian_expected=lambda p: (
            lambda path: float(np.exp(-float(p["theta"]) * path.t_final))
        ),
        gaussian_law=_ou_law,
    )
)

_register(
    ScenarioDef(
        name="pure-jump-lattice",
        summary="constant-size jumps on a lattice; Poisson counting oracle",
        required_params=("jump_size", "rate"),
        build=_build_pure_jump,
        defaults={
            "t_final": 1.0,
            "dt": 1e-3,
            "n_paths": 1000,
            "x0": 0.0,
            "grid": {"lo": -1.0, "hi": 8.0, "dx": 0.01},
            "seed": 7,
        },
        checks=[
            CheckSpec("conservation", {"max_residual": 1e-12}),
            CheckSpec("jacobian-oracle", {"rel_err": 1e-12}, {"n_paths": 100}),
            CheckSpec(
                "forward-oracle",
                {"sup_pmf": 1e-3},
                {"lo": -1.0, "hi": 8.0, "dx": 0.01, "dt": 1e-4, "k_max": 12},
            ),
            CheckSpec(
                "mc-vs-pde",
                {"l1": 0.05},
                {
                    "lo": -1.0,
                    "hi": 8.0,
                    "dx": 0.01,
                    "dt_forward": 1e-4,
                    "n_mc": 100000,
                    "dt_mc": 0.25,
                    "rebin_dx": 0.25,
                },
            ),
        ],
        make_sfi=lambda p: _sfi_lattice(float(p["jump_size"])),
        jacobian_expected=lambda p: (lambda path: 1.0),
        lattice_law=_lattice_law,
    )
)

_register(
    ScenarioDef(
        name="multiplicative-jump",
        summary="proportional jumps g = c x; count-scaled first integral is exact",
        required_params=("c", "rate"),
        build=_build_multiplicative,
        defaults={
            "t_final": 1.0,
            "dt": 1e-3,
            "n_paths": 1000,
            "x0": 1.0,
            "grid": {"lo": -1.0, "hi": 12.0, "dx": 0.01},
            "seed": 7,
        },
        checks=[
            CheckSpec("conservation", {"max_residual": 1e-12}),
            CheckSpec(
                "determinant",
                {"max_dev": 1e-8},
                {"n_samples": 10000, "x_lo": 0.5, "x_hi": 2.0},
            ),
            CheckSpec("jacobian-oracle", {"rel_err": 1e-12}, {"n_paths": 100}),
        ],
        make_sfi=lambda p: _sfi_multiplicative(float(p["c"])),
        jacobian_expected=lambda p: (
            lambda path: (1.0 + float(p["c"])) ** len(path.events)
        ),
    )
)

_register(
    ScenarioDef(
        name="jump-diffusion",
        summary="drift, diffusion, and proportional jumps together; property checks",
        required_params=("a0", "b0", "c", "rate"),
        build=_build_jump_diffusion,
        defaults={
            "t_final": 1.0,
            "dt": 1e-3,
            "n_paths": 500,
            "x0": 1.0,
            "grid": {"lo": -4.0, "hi": 8.0, "dx": 0.01},
            "seed": 7,
        },
        checks=[
            CheckSpec(
                "iw-ladder",
                {"min_order": 0.9},
                # 5 rungs with 400 paths keeps the fitted slope seed-stable
                {"dts": [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8], "n_paths": 400},
            ),
            CheckSpec(
                "determinant",
                {"max_dev": 1e-8},
                {"n_samples": 2000, "x_lo": 0.5, "x_hi": 2.0},
            ),
            CheckSpec("jacobian-oracle", {"rel_err": 1e-12}, {"n_paths": 100}),
        ],
        jacobian_expected=lambda p: (
            lambda path: (1.0 + float(p["c"])) ** len(path.events)
        ),
    )
)


@dataclass
class ResolvedRun:
    """A validated configuration bound to concrete coefficients and checks."""

    scenario: str
    definition: ScenarioDef
    params: dict
    coeffs: CoefficientField
    measure: MarkMeasure
    seed: int
    t_final: float
    dt: float
    n_paths: int
    x0: Array
    grid: dict
    checks: list[CheckSpec]
    threads: int = 1


def build_scenario(name: str, params: dict) -> tuple[CoefficientField, MarkMeasure]:
    """Build coefficients for a registered scenario, validating its parameters."""
    defn = _lookup(name)
    _validate_params(defn, params)
    return defn.build(params)


def _lookup(name: str) -> ScenarioDef:
    if name not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        raise ConfigError(f"unknown scenario '{name}' (known: {known})")
    return SCENARIOS[name]


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _validate_params(defn: ScenarioDef, params: dict) -> None:
    if not isinstance(params, dict):
        raise ConfigError("field 'params' must be an object")
    for key in params:
        if key not in defn.required_params:
            raise ConfigError(f"unknown field 'params.{key}' for scenario '{defn.name}'")
        if not _is_number(params[key]):
            raise ConfigError(f"field 'params.{key}' must be a number")
    for key in defn.required_params:
        if key not in params:
            raise ConfigError(f"missing field 'params.{key}' for scenario '{defn.name}'")


_TOP_KEYS = {
    "schema",
    "scenario",
    "params",
    "seed",
    "checks",
    "t_final",
    "dt",
    "n_paths",
    "x0",
    "grid",
    "threads",
    "tolerances",
}


def resolve_config(raw: dict) -> ResolvedRun:
    """Validate a parsed configuration object and bind it to a scenario."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown field '{key}'")
    if "schema" not in raw:
        raise ConfigError("missing field 'schema'")
    if raw["schema"] != 1:
        raise ConfigError(f"unsupported schema version {raw['schema']!r}; this build reads schema 1")
    if "scenario" not in raw:
        raise ConfigError("missing field 'scenario'")
    defn = _lookup(raw["scenario"])

    params = raw.get("params", {})
    _validate_params(defn, params)
    coeffs, measure = defn.build(params)

    def _number(key: str, default):
        v = raw.get(key, default)
        if not _is_number(v):
            raise ConfigError(f"field '{key}' must be a number")
        return v

    seed = raw.get("seed", defn.defaults["seed"])
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("field 'seed' must be a non-negative integer")
    t_final = float(_number("t_final", defn.defaults["t_final"]))
    dt = float(_number("dt", defn.defaults["dt"]))
    n_paths = raw.get("n_paths", defn.defaults["n_paths"])
    if not isinstance(n_paths, int) or isinstance(n_paths, bool) or n_paths < 1:
        raise ConfigError("field 'n_paths' must be a positive integer")
    x0 = float(_number("x0", defn.defaults["x0"]))
    threads = raw.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        raise ConfigError("field 'threads' must be a positive integer")

    grid = dict(defn.defaults["grid"])
    if "grid" in raw:
        if not isinstance(raw["grid"], dict):
            raise ConfigError("field 'grid' must be an object")
        for key, v in raw["grid"].items():
            if key not in ("lo", "hi", "dx"):
                raise ConfigError(f"unknown field 'grid.{key}'")
            if not _is_number(v):
                raise ConfigError(f"field 'grid.{key}' must be a number")
            grid[key] = float(v)

    check_names = [spec.name for spec in defn.checks]
    if "checks" in raw:
        if not isinstance(raw["checks"], list) or not all(isinstance(c, str) for c in raw["checks"]):
            raise ConfigError("field 'checks' must be a list of check names")
        for name in raw["checks"]:
            if name not in check_names:
                raise ConfigError(f"unknown check '{name}' for scenario '{defn.name}'")
        selected = [defn.check_spec(name) for name in raw["checks"]]
    else:
        selected = list(defn.checks)

    checks = [replace(spec, tolerances=dict(spec.tolerances), settings=dict(spec.settings)) for spec in selected]
    if "tolerances" in raw:
        tols = raw["tolerances"]
        if not isinstance(tols, dict):
            raise ConfigError("field 'tolerances' must be an object")
        by_name = {spec.name: spec for spec in checks}
        for cname, overrides in tols.items():
            if cname not in by_name:
                raise ConfigError(f"unknown field 'tolerances.{cname}' (check not selected)")
            if not isinstance(overrides, dict):
                raise ConfigError(f"field 'tolerances.{cname}' must be an object")
            for tname, v in overrides.items():
                if tname not in by_name[cname].tolerances:
                    raise ConfigError(f"unknown field 'tolerances.{cname}.{tname}'")
                if not _is_number(v):
                    raise ConfigError(f"field 'tolerances.{cname}.{tname}' must be a number")
                by_name[cname].tolerances[tname] = float(v)

    return ResolvedRun(
        scenario=defn.name,
        definition=defn,
        params=dict(params),
        coeffs=coeffs,
        measure=measure,
        seed=seed,
        t_final=t_final,
        dt=dt,
        n_paths=n_paths,
        x0=np.array([x0]),
        grid=grid,
        checks=checks,
        threads=threads,
    )


def load_config(path) -> ResolvedRun:
    """Read, parse, and validate a JSON configuration file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return resolve_config(raw)
