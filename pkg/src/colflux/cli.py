"""Command-line orchestration: JSON config in, CSV/JSON artifacts out.

Usage::

    colflux <scenario> --config <path> [--out <dir>] [--seed <n>] [--modes <n>]

Scenarios: validate, simulate, eigen, weights, gains, assimilate,
oracle_check, blind, compare_altitude. Exit codes: 0 success, 2 config
error, 3 numerical/diagnostic failure, 4 capacity error.

Determinism: identical config and seed produce byte-identical outputs.
Floats are written as the shortest decimal that round-trips to the same
double (Python's repr); JSON keys are emitted in sorted order; manifests
carry a config hash and library versions but no timestamps.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .assimilate import (
    AssimilationProblem,
    PriorSpec,
    map_estimate,
    oracle_bayes,
    representer_rows,
)
from .errors import (
    AssumptionError,
    CapacityError,
    ConfigError,
    DiagnosticError,
    NumericalError,
)
from .model import CoefficientProfile, validate_profile
from .numerics import ColumnGrid, TimeGrid, trapezoid
from .observe import (
    Weight,
    canonical_weights,
    observations_to_csv,
    observations_to_json,
    synthesize_data,
    write_weight_csv,
)
from .posterior import analyze_gain, blind_direction, gain_direction
from .spectral import eigensystem, expand_weight, expansion_residual, muntz_partial_sums
from .transport import (
    FluxSignal,
    energy_fit,
    mass_balance_residual,
    solve_forward,
    write_field_csv,
)

SCENARIOS = (
    "validate",
    "simulate",
    "eigen",
    "weights",
    "gains",
    "assimilate",
    "oracle_check",
    "blind",
    "compare_altitude",
)

_DEFAULTS = {"nz": 1001, "nt": 1024, "n_modes": 32, "seed": 0}

WEIGHT_LABELS = ("uniform", "rho_plus", "rho_minus")

_FUNCTION_KINDS = {
    "constant": ("value",),
    "linear": ("base", "slope"),
    "sine": ("amplitude", "cycles"),
    "parabola": ("amplitude",),
    "cosine": ("amplitude", "mode"),
    "bump": ("amplitude",),
    "samples": ("values",),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description with all defaults applied.

    ``nz`` counts column nodes (spacing h/(nz-1)); ``nt`` counts time
    steps, so the time grid has nt+1 nodes and spacing t_end/nt. With the
    defaults both spacings come out as round binary fractions and the
    default observation times (quarter points) are exact grid nodes.
    """

    scenario: str
    h: float = 1.0
    t_end: float = 1.0
    nz: int = _DEFAULTS["nz"]
    nt: int = _DEFAULTS["nt"]
    n_modes: int = _DEFAULTS["n_modes"]
    seed: int = _DEFAULTS["seed"]
    out_dir: str = "colflux_out"
    k_spec: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    w_spec: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    flux_spec: dict = field(
        default_factory=lambda: {"kind": "sine", "amplitude": 1.0, "cycles": 1.0}
    )
    initial_spec: dict = field(
        default_factory=lambda: {"kind": "constant", "value": 0.0}
    )
    prior_kind: str = "dirichlet_inverse_laplacian"
    prior_sigma: float = 1.0
    prior_mean_spec: dict = field(
        default_factory=lambda: {"kind": "constant", "value": 0.0}
    )
    obs_times: tuple = (0.25, 0.5, 1.0)
    obs_weights: tuple = ("rho_plus", "rho_minus", "rho_plus")
    obs_noise: tuple = (0.1, 0.1, 0.1)
    blind_m: int = 20
    blind_t_obs: float | None = None
    blind_seed_spec: dict = field(
        default_factory=lambda: {"kind": "parabola", "amplitude": 1.0}
    )

    def canonical(self) -> dict:
        """The config as a plain nested dict in the documented schema."""
        return {
            "scenario": self.scenario,
            "model": {"h": self.h, "k": dict(self.k_spec), "w": dict(self.w_spec)},
            "grid": {"nz": self.nz, "nt": self.nt, "t_end": self.t_end},
            "spectral": {"n_modes": self.n_modes},
            "prior": {
                "kind": self.prior_kind,
                "sigma": self.prior_sigma,
                "mean": dict(self.prior_mean_spec),
            },
            "observations": {
                "times": list(self.obs_times),
                "weights": [
                    w if isinstance(w, str) else dict(w) for w in self.obs_weights
                ],
                "noise": list(self.obs_noise),
            },
            "flux": dict(self.flux_spec),
            "initial": dict(self.initial_spec),
            "blind": {
                "m": self.blind_m,
                "seed_function": dict(self.blind_seed_spec),
                # t_obs is omitted while unset: the schema has no null
                **({} if self.blind_t_obs is None else {"t_obs": self.blind_t_obs}),
            },
            "seed": self.seed,
            "out": self.out_dir,
        }


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _check_keys(block: dict, allowed, path: str) -> None:
    for key in block:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, "unknown key")


def _require_number(block, key, path, default=None, positive=False, integer=False):
    where = f"{path}.{key}" if path else key
    if key not in block:
        if default is None:
            _fail(where, "missing required value")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(where, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        _fail(where, f"expected an integer, got {v!r}")
    if positive and v <= 0:
        _fail(where, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _check_function_spec(spec, path: str) -> dict:
    if not isinstance(spec, dict):
        _fail(path, f"expected an object with a 'kind', got {spec!r}")
    kind = spec.get("kind")
    if kind not in _FUNCTION_KINDS:
        _fail(f"{path}.kind", f"unknown kind {kind!r}; options {sorted(_FUNCTION_KINDS)}")
    _check_keys(spec, ("kind",) + _FUNCTION_KINDS[kind], path)
    out = {"kind": kind}
    if kind == "samples":
        vals = spec.get("values")
        if not isinstance(vals, list) or not vals:
            _fail(f"{path}.values", "expected a nonempty list of numbers")
        out["values"] = [float(v) for v in vals]
    else:
        for key in _FUNCTION_KINDS[kind]:
            out[key] = _require_number(spec, key, path, default=None)
    return out


def _eval_function_spec(spec: dict, nodes: np.ndarray, length: float) -> np.ndarray:
    kind = spec["kind"]
    if kind == "constant":
        return np.full(nodes.shape, spec["value"])
    if kind == "linear":
        return spec["base"] + spec["slope"] * nodes
    if kind == "sine":
        return spec["amplitude"] * np.sin(np.pi * spec["cycles"] * nodes / length)
    if kind == "parabola":
        return spec["amplitude"] * nodes * (length - nodes)
    if kind == "cosine":
        return spec["amplitude"] * np.cos(spec["mode"] * np.pi * nodes / length)
    if kind == "bump":
        return spec["amplitude"] * np.sin(np.pi * nodes / length) ** 2
    values = np.asarray(spec["values"], dtype=float)
    if values.shape != nodes.shape:
        msg = f"samples: expected {nodes.size} values, got {values.size}"
        raise ConfigError(msg)
    return values


def parse_config(text: str, scenario: str | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config document.

    Unknown keys anywhere are rejected with the offending path named;
    defaults are nz=1001, nt=1024, n_modes=32, seed=0. When ``scenario``
    is given (the CLI passes its positional argument) it is used instead
    of the document's "scenario" key, which then becomes optional.

    Raises
    ------
    ConfigError
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(
        raw,
        (
            "scenario",
            "model",
            "grid",
            "spectral",
            "prior",
            "observations",
            "flux",
            "initial",
            "blind",
            "seed",
            "out",
        ),
        "",
    )

    if scenario is None:
        scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        _fail("scenario", f"expected one of {SCENARIOS}, got {scenario!r}")

    kwargs = {"scenario": scenario}

    model = raw.get("model", {})
    _check_keys(model, ("h", "k", "w"), "model")
    kwargs["h"] = _require_number(model, "h", "model", default=1.0, positive=True)
    if "k" in model:
        k_spec = _check_function_spec(model["k"], "model.k")
        if k_spec["kind"] == "constant" and k_spec["value"] <= 0:
            _fail("model.k.value", "diffusivity must be positive (assumption A2)")
        kwargs["k_spec"] = k_spec
    if "w" in model:
        kwargs["w_spec"] = _check_function_spec(model["w"], "model.w")

    grid = raw.get("grid", {})
    _check_keys(grid, ("nz", "nt", "t_end"), "grid")
    kwargs["nz"] = _require_number(
        grid, "nz", "grid", default=_DEFAULTS["nz"], positive=True, integer=True
    )
    kwargs["nt"] = _require_number(
        grid, "nt", "grid", default=_DEFAULTS["nt"], positive=True, integer=True
    )
    kwargs["t_end"] = _require_number(grid, "t_end", "grid", default=1.0, positive=True)

    spectral = raw.get("spectral", {})
    _check_keys(spectral, ("n_modes",), "spectral")
    kwargs["n_modes"] = _require_number(
        spectral, "n_modes", "spectral", default=_DEFAULTS["n_modes"],
        positive=True, integer=True,
    )

    prior = raw.get("prior", {})
    _check_keys(prior, ("kind", "sigma", "mean"), "prior")
    if "kind" in prior:
        from .assimilate import PRIOR_KINDS

        if prior["kind"] not in PRIOR_KINDS:
            _fail("prior.kind", f"expected one of {PRIOR_KINDS}, got {prior['kind']!r}")
        kwargs["prior_kind"] = prior["kind"]
    kwargs["prior_sigma"] = _require_number(
        prior, "sigma", "prior", default=1.0, positive=True
    )
    if "mean" in prior:
        kwargs["prior_mean_spec"] = _check_function_spec(prior["mean"], "prior.mean")

    obs = raw.get("observations", {})
    _check_keys(obs, ("times", "weights", "noise"), "observations")
    if "times" in obs:
        times = obs["times"]
        if not isinstance(times, list) or not times:
            _fail("observations.times", "expected a nonempty list")
        kwargs["obs_times"] = tuple(float(t) for t in times)
    if "weights" in obs:
        weights = obs["weights"]
        if not isinstance(weights, list):
            _fail("observations.weights", "expected a list")
        checked = []
        for i, w in enumerate(weights):
            if isinstance(w, str):
                if w not in WEIGHT_LABELS:
                    _fail(
                        f"observations.weights[{i}]",
                        f"unknown label {w!r}; options {WEIGHT_LABELS}",
                    )
                checked.append(w)
            else:
                checked.append(
                    _check_function_spec(w, f"observations.weights[{i}]")
                )
        kwargs["obs_weights"] = tuple(checked)
    if "noise" in obs:
        noise = obs["noise"]
        if not isinstance(noise, list):
            _fail("observations.noise", "expected a list")
        kwargs["obs_noise"] = tuple(float(r) for r in noise)
    n_times = len(kwargs.get("obs_times", ExperimentConfig.obs_times))
    for key, label in (("obs_weights", "weights"), ("obs_noise", "noise")):
        got = kwargs.get(key, getattr(ExperimentConfig, key))
        if len(got) != n_times:
            _fail(
                f"observations.{label}",
                f"{len(got)} entries for {n_times} observation times",
            )

    if "flux" in raw:
        kwargs["flux_spec"] = _check_function_spec(raw["flux"], "flux")
    if "initial" in raw:
        kwargs["initial_spec"] = _check_function_spec(raw["initial"], "initial")

    blind = raw.get("blind", {})
    _check_keys(blind, ("m", "t_obs", "seed_function"), "blind")
    if "m" in blind:
        kwargs["blind_m"] = _require_number(
            blind, "m", "blind", default=None, positive=True, integer=True
        )
    if "t_obs" in blind:
        kwargs["blind_t_obs"] = _require_number(
            blind, "t_obs", "blind", default=None, positive=True
        )
    if "seed_function" in blind:
        kwargs["blind_seed_spec"] = _check_function_spec(
            blind["seed_function"], "blind.seed_function"
        )

    if "seed" in raw:
        kwargs["seed"] = _require_number({"seed": raw["seed"]}, "seed", "", integer=True)
    if "out" in raw:
        if not isinstance(raw["out"], str) or not raw["out"]:
            _fail("out", "expected a nonempty string")
        kwargs["out_dir"] = raw["out"]

    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# scenario machinery


class _Workspace:
    """Objects shared by the scenario implementations, built lazily."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.zgrid = ColumnGrid(h=config.h, n=config.nz)
        self.tgrid = TimeGrid(t_end=config.t_end, n=config.nt + 1)
        k = _eval_function_spec(config.k_spec, self.zgrid.nodes, config.h)
        w = _eval_function_spec(config.w_spec, self.zgrid.nodes, config.h)
        self.profile = validate_profile(k, w, self.zgrid)
        self._eig = None

    @property
    def eig(self):
        if self._eig is None:
            self._eig = eigensystem(self.profile, self.config.n_modes)
        return self._eig

    @property
    def flux(self) -> FluxSignal:
        values = _eval_function_spec(
            self.config.flux_spec, self.tgrid.nodes, self.config.t_end
        )
        return FluxSignal(grid=self.tgrid, values=values)

    @property
    def q0(self) -> np.ndarray:
        return _eval_function_spec(
            self.config.initial_spec, self.zgrid.nodes, self.config.h
        )

    def weight_for(self, spec) -> Weight:
        if isinstance(spec, str):
            if spec == "uniform":
                return Weight(
                    grid=self.zgrid,
                    values=np.ones(self.zgrid.n),
                    label="uniform",
                )
            plus, minus = canonical_weights(self.eig)
            return plus if spec == "rho_plus" else minus
        values = _eval_function_spec(spec, self.zgrid.nodes, self.config.h)
        return Weight(grid=self.zgrid, values=values, label="samples")

    def observation_weights(self) -> list:
        return [self.weight_for(s) for s in self.config.obs_weights]

    def prior(self) -> PriorSpec:
        mean = _eval_function_spec(
            self.config.prior_mean_spec, self.tgrid.nodes, self.config.t_end
        )
        return PriorSpec(
            mean=FluxSignal(grid=self.tgrid, values=mean),
            kind=self.config.prior_kind,
            sigma=self.config.prior_sigma,
        )

    def problem(self) -> AssimilationProblem:
        weights = self.observation_weights()
        obs = synthesize_data(
            self.profile,
            self.flux,
            self.q0,
            weights,
            np.asarray(self.config.obs_times, dtype=float),
            np.asarray(self.config.obs_noise, dtype=float),
            self.config.seed,
        )
        return AssimilationProblem(
            profile=self.profile,
            q0=self.q0,
            observations=obs,
            weights=tuple(weights),
            prior=self.prior(),
        )


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _write_csv(path: Path, header: str, columns) -> None:
    rows = zip(*columns)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _scenario_validate(ws: _Workspace, out: Path) -> list:
    profile = ws.profile
    _write_json(
        out / "validate.json",
        {
            "epsilon": float(profile.epsilon),
            "h": ws.config.h,
            "k_range": [float(profile.k.min()), float(profile.k.max())],
            "nz": ws.config.nz,
            "w_range": [float(profile.w.min()), float(profile.w.max())],
        },
    )
    return ["validate.json"]


def _scenario_simulate(ws: _Workspace, out: Path) -> list:
    flux = ws.flux
    field_ = solve_forward(ws.profile, flux, ws.q0)
    write_field_csv(field_, out / "field.csv")
    resid = mass_balance_residual(field_, ws.profile, flux)
    _write_csv(out / "mass_residual.csv", "t,residual", (ws.tgrid.nodes, resid))
    constant = energy_fit(field_, flux, ws.q0)
    _write_json(
        out / "energy.json",
        {"energy_constant": constant, "max_abs_mass_residual": float(np.abs(resid).max())},
    )
    return ["energy.json", "field.csv", "mass_residual.csv"]


def _scenario_eigen(ws: _Workspace, out: Path) -> list:
    eig = ws.eig
    with open(out / "eig.csv", "w", encoding="utf-8", newline="\n") as fh:
        sample_cols = ",".join(f"p_z{j}" for j in range(ws.zgrid.n))
        fh.write(f"n,lambda,mu_norm,{sample_cols}\n")
        for n in range(eig.n_modes):
            samples = ",".join(repr(float(v)) for v in eig.modes[:, n])
            fh.write(
                f"{n},{float(eig.eigenvalues[n])!r},{float(eig.mu_norms[n])!r},{samples}\n"
            )
    return ["eig.csv"]


def _scenario_weights(ws: _Workspace, out: Path) -> list:
    plus, minus = canonical_weights(ws.eig)
    write_weight_csv(plus, out / "rho_plus.csv")
    write_weight_csv(minus, out / "rho_minus.csv")
    _write_json(
        out / "weights.json",
        {
            "rho_minus": {
                "is_nonnegative": minus.is_nonnegative,
                "expansion_residual": expansion_residual(minus.values, ws.eig),
            },
            "rho_plus": {
                "is_nonnegative": plus.is_nonnegative,
                "expansion_residual": expansion_residual(plus.values, ws.eig),
            },
        },
    )
    return ["rho_minus.csv", "rho_plus.csv", "weights.json"]


def _scenario_gains(ws: _Workspace, out: Path) -> list:
    files = []
    summary = {}
    for i, (t_obs, wspec, r) in enumerate(
        zip(ws.config.obs_times, ws.config.obs_weights, ws.config.obs_noise)
    ):
        weight = ws.weight_for(wspec)
        a = (
            weight.coefficients
            if weight.coefficients is not None
            else expand_weight(weight.values, ws.eig)
        )
        gain = gain_direction(ws.eig, a, t_obs, r, ws.tgrid)
        name = f"gain_{i:02d}.csv"
        _write_csv(
            out / name,
            "t,G,truncation_envelope",
            (ws.tgrid.nodes, gain.values, gain.truncation_envelope),
        )
        files.append(name)
        analysis = analyze_gain(gain)
        summary[f"observation_{i:02d}"] = {
            "mean_projection": analysis.mean_projection,
            "monotone": analysis.monotone,
            "t_obs": float(t_obs),
            "max_truncation_envelope_interior": float(
                gain.truncation_envelope[: max(1, ws.tgrid.index_of(gain.t_obs) // 2)].max()
            ),
        }
    _write_json(out / "gains.json", summary)
    files.append("gains.json")
    return sorted(files)


def _scenario_assimilate(ws: _Workspace, out: Path) -> list:
    problem = ws.problem()
    flux_map, report = map_estimate(problem)
    _write_csv(out / "map_flux.csv", "t,F", (ws.tgrid.nodes, flux_map.values))
    mean, cov = oracle_bayes(problem)
    _write_csv(
        out / "posterior_variance.csv", "t,variance", (ws.tgrid.nodes, np.diag(cov))
    )
    with open(out / "observations.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(observations_to_csv(problem.observations))
    map_vs_mean = float(
        np.linalg.norm(flux_map.values - mean)
        / max(np.linalg.norm(mean), 1e-300)
    )
    _write_json(
        out / "assimilate.json",
        {
            "converged": report["converged"],
            "iterations": report["iterations"],
            "map_vs_oracle_mean_rel": map_vs_mean,
            "relative_residual": report["relative_residual"],
        },
    )
    return ["assimilate.json", "map_flux.csv", "observations.csv", "posterior_variance.csv"]


def _scenario_oracle_check(ws: _Workspace, out: Path) -> list:
    problem = ws.problem()
    mean, cov = oracle_bayes(problem)
    flux_map, report = map_estimate(problem)
    rows = representer_rows(problem)

    max_rel = 0.0
    for i, (t_obs, r) in enumerate(
        zip(ws.config.obs_times, ws.config.obs_noise)
    ):
        weight = problem.weights[i]
        a = expand_weight(weight.values, ws.eig)
        gain = gain_direction(ws.eig, a, t_obs, r, ws.tgrid)
        diff = rows[i] - gain.values
        num = np.sqrt(trapezoid(diff**2, ws.tgrid))
        den = np.sqrt(trapezoid(gain.values**2, ws.tgrid))
        max_rel = max(max_rel, float(num / den))

    map_vs_mean = float(
        np.linalg.norm(flux_map.values - mean) / max(np.linalg.norm(mean), 1e-300)
    )
    payload = {
        "map_vs_oracle_mean_rel": map_vs_mean,
        "max_representer_vs_gain_rel_l2": max_rel,
        "n_modes": ws.config.n_modes,
        "n_observations": len(problem.observations),
    }
    _write_json(out / "oracle_report.json", payload)
    _write_csv(out / "posterior_mean.csv", "t,F", (ws.tgrid.nodes, mean))
    if max_rel > 1e-2:
        msg = (
            "spectral gains and discrete representers disagree: max relative "
            f"L2 difference {max_rel:.3e} > 1e-2"
        )
        raise DiagnosticError(msg)
    return ["oracle_report.json", "posterior_mean.csv"]


def _scenario_blind(ws: _Workspace, out: Path) -> list:
    config = ws.config
    t_obs = config.blind_t_obs if config.blind_t_obs is not None else config.t_end
    seed_values = _eval_function_spec(
        config.blind_seed_spec, ws.tgrid.nodes, config.t_end
    )
    g = blind_direction(ws.eig, t_obs, config.blind_m, ws.tgrid, seed_values)
    _write_csv(out / "blind.csv", "t,G", (ws.tgrid.nodes, g))

    rng = np.random.Generator(np.random.Philox(key=config.seed))
    g_norm = np.sqrt(trapezoid(g**2, ws.tgrid))
    worst = 0.0
    for _ in range(50):
        rho = rng.random(ws.zgrid.n)
        a = expand_weight(rho, ws.eig)[: config.blind_m]
        gain = gain_direction(ws.eig, a, t_obs, 1.0, ws.tgrid)
        inner = trapezoid(g * gain.values, ws.tgrid)
        gain_norm = np.sqrt(trapezoid(gain.values**2, ws.tgrid))
        worst = max(worst, float(abs(inner) / (g_norm * gain_norm)))
    _write_json(
        out / "blind_report.json",
        {
            "m": config.blind_m,
            "max_normalized_projection": worst,
            "n_weights": 50,
            "t_obs": float(t_obs),
        },
    )
    if worst > 1e-6:
        msg = f"blind direction leaks: normalized projection {worst:.3e} > 1e-6"
        raise DiagnosticError(msg)
    return ["blind.csv", "blind_report.json"]


def _scenario_compare_altitude(ws: _Workspace, out: Path) -> list:
    eig = ws.eig
    t_end = ws.config.t_end
    plus, minus = canonical_weights(eig)
    results = {}
    for weight in (plus, minus):
        gain = gain_direction(eig, weight.coefficients, t_end, 1.0, ws.tgrid)
        analysis = analyze_gain(gain)
        results[weight.label] = analysis
    lam1 = float(eig.eigenvalues[1])
    closed_form = 2.0 * (1.0 - np.exp(-lam1 * t_end)) / lam1
    diff = abs(results["rho_plus"].mean_projection) - abs(
        results["rho_minus"].mean_projection
    )
    _write_json(
        out / "compare_altitude.json",
        {
            "closed_form_difference": closed_form,
            "lambda_1": lam1,
            "mean_gain_difference": float(diff),
            "rho_minus": {
                "mean_projection": results["rho_minus"].mean_projection,
                "monotone": results["rho_minus"].monotone,
            },
            "rho_plus": {
                "mean_projection": results["rho_plus"].mean_projection,
                "monotone": results["rho_plus"].monotone,
            },
        },
    )
    return ["compare_altitude.json"]


_SCENARIO_IMPL = {
    "validate": _scenario_validate,
    "simulate": _scenario_simulate,
    "eigen": _scenario_eigen,
    "weights": _scenario_weights,
    "gains": _scenario_gains,
    "assimilate": _scenario_assimilate,
    "oracle_check": _scenario_oracle_check,
    "blind": _scenario_blind,
    "compare_altitude": _scenario_compare_altitude,
}


def run_scenario(config: ExperimentConfig) -> int:
    """Run one scenario; write artifacts and a manifest; return exit code.

    Errors are reported as a structured JSON document on stderr (and in
    error.json under the output directory when it exists) rather than a
    traceback.
    """
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        try:
            ws = _Workspace(config)
        except AssumptionError as exc:
            raise ConfigError(str(exc)) from exc
        files = _SCENARIO_IMPL[config.scenario](ws, out)
        # the hash identifies the experiment, so the output location (where
        # it lands, not what it is) stays out of the hashed form
        ident = config.canonical()
        del ident["out"]
        canon = json.dumps(ident, sort_keys=True)
        manifest = {
            "config_hash": hashlib.sha256(canon.encode("utf-8")).hexdigest(),
            "outputs": sorted(files),
            "scenario": config.scenario,
            "seed": config.seed,
            "versions": {
                "colflux": __version__,
                "numpy": np.__version__,
                "python": ".".join(str(v) for v in sys.version_info[:3]),
                "scipy": scipy.__version__,
            },
        }
        _write_json(out / "manifest.json", manifest)
        (out / "error.json").unlink(missing_ok=True)
        return 0
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps errors to codes
        code = _exit_code_for(exc)
        report = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
        sys.stderr.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        if out.is_dir():
            _write_json(out / "error.json", report)
        return code


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, CapacityError):
        return 4
    if isinstance(exc, (NumericalError, DiagnosticError)):
        return 3
    if isinstance(exc, (ConfigError, ValueError, OSError, KeyError, TypeError)):
        return 2
    return 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="colflux",
        description="Column-observation flux estimation experiments.",
    )
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--modes", type=int, help="n_modes override")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
        config = parse_config(text, scenario=args.scenario)
    except OSError as exc:
        report = {"error": "ConfigError", "exit_code": 2, "message": str(exc)}
        sys.stderr.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        return 2
    except ConfigError as exc:
        report = {"error": "ConfigError", "exit_code": 2, "message": str(exc)}
        sys.stderr.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        return 2

    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.modes is not None:
        overrides["n_modes"] = args.modes
    config = ExperimentConfig(**{**_config_kwargs(config), **overrides})
    return run_scenario(config)


def _config_kwargs(config: ExperimentConfig) -> dict:
    return {
        f: getattr(config, f) for f in ExperimentConfig.__dataclass_fields__
    }


if __name__ == "__main__":
    sys.exit(main())
