"""Experiment configuration files (TOML) and their validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from qmle.estimate import OptimizerOptions
from qmle.models import GammaClaytonFamily, ParameterVector, theta0_from_spearman
from qmle.quantize import QuantizerBank
from qmle.simulate import ExperimentPlan


class ConfigError(ValueError):
    pass


SECTIONS = {
    "model": {"scales", "marginal_shapes", "theta0", "spearman_rho"},
    "banks": {"thresholds", "weights"},
    "plan": {"n_grid", "mc_runs", "estimators", "divisor", "base_seed"},
    "optimizer": {f.name for f in dataclasses.fields(OptimizerOptions)},
    "output": {"out_dir", "formats"},
    "scalar_fims": {"cases"},
}
FORMATS = {"csv", "json"}


def _check_keys(where: str, got: dict, allowed: set[str]):
    unknown = sorted(set(got) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def _floats(where, value, positive=True) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} must be a nonempty list")
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must contain numbers") from exc
    if positive and any(not v > 0.0 for v in out):
        raise ConfigError(f"{where} must be positive")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed configuration; ``raw`` keeps the validated section dicts for echoing."""

    raw: dict[str, dict[str, Any]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a table")
        _check_keys("top level", data, set(SECTIONS))
        raw = {}
        for name, section in data.items():
            if not isinstance(section, dict):
                raise ConfigError(f"[{name}] must be a table")
            _check_keys(name, section, SECTIONS[name])
            raw[name] = dict(section)
        cfg = cls(raw)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {k: dict(v) for k, v in self.raw.items()}

    def _validate(self):
        model = self.raw.get("model")
        if model is not None:
            if "theta0" in model and "spearman_rho" in model:
                raise ConfigError("[model] takes theta0 or spearman_rho, not both")
            self.family()
            if "marginal_shapes" in model:
                shapes = _floats("model.marginal_shapes", model["marginal_shapes"])
                if len(shapes) != self.family().n_sensors:
                    raise ConfigError("model.marginal_shapes and model.scales differ in length")
            if "theta0" in model and not float(model["theta0"]) > 0.0:
                raise ConfigError("model.theta0 must be positive")
            if "spearman_rho" in model and not 0.0 < float(model["spearman_rho"]) < 1.0:
                raise ConfigError("model.spearman_rho must lie in (0, 1)")
        if "banks" in self.raw:
            self.banks()
            self.bank_weights()
        if "optimizer" in self.raw:
            self.optimizer()
        if "output" in self.raw:
            formats = self.raw["output"].get("formats", ["csv", "json"])
            if not isinstance(formats, list) or not set(formats) <= FORMATS:
                raise ConfigError(f"output.formats must be a subset of {sorted(FORMATS)}")
        if "scalar_fims" in self.raw:
            self.scalar_cases()
        if "plan" in self.raw:
            self.plan()

    def section(self, name: str) -> dict:
        if name not in self.raw:
            raise ConfigError(f"missing [{name}] section")
        return self.raw[name]

    def family(self) -> GammaClaytonFamily:
        model = self.section("model")
        return GammaClaytonFamily(_floats("model.scales", model.get("scales", [4.0, 4.0])))

    def theta_star(self) -> ParameterVector:
        model = self.section("model")
        if "marginal_shapes" not in model:
            raise ConfigError("model.marginal_shapes is required here")
        if "theta0" in model:
            theta0 = float(model["theta0"])
        elif "spearman_rho" in model:
            theta0 = theta0_from_spearman(float(model["spearman_rho"]))
        else:
            raise ConfigError("[model] needs theta0 or spearman_rho")
        return ParameterVector(theta0, _floats("model.marginal_shapes", model["marginal_shapes"]))

    def banks(self) -> tuple[QuantizerBank, ...]:
        rows = self.section("banks").get("thresholds")
        if not isinstance(rows, list) or not rows:
            raise ConfigError("banks.thresholds must be a nonempty list of threshold lists")
        banks = tuple(QuantizerBank(_floats(f"banks.thresholds[{i}]", r, positive=False))
                      for i, r in enumerate(rows))
        if "model" in self.raw:
            n = self.family().n_sensors
            if any(b.n_sensors != n for b in banks):
                raise ConfigError(f"every bank needs {n} thresholds")
        return banks

    def bank_weights(self) -> tuple[float, ...] | None:
        w = self.section("banks").get("weights")
        if w is None:
            return None
        w = _floats("banks.weights", w, positive=False)
        if len(w) != len(self.banks()) or any(x < 0 for x in w) or sum(w) <= 0:
            raise ConfigError("banks.weights must give one nonnegative weight per bank")
        return tuple(x / sum(w) for x in w)

    def optimizer(self) -> OptimizerOptions:
        try:
            return OptimizerOptions(**self.raw.get("optimizer", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[optimizer]: {exc}") from exc

    def base_seed(self) -> int:
        seed = self.raw.get("plan", {}).get("base_seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ConfigError("plan.base_seed must be an integer in [0, 2^64)")
        return seed

    def plan(self, seed_override: int | None = None) -> ExperimentPlan:
        plan = self.section("plan")
        for key in ("n_grid", "mc_runs"):
            if key not in plan:
                raise ConfigError(f"plan.{key} is required")
        n_grid = plan["n_grid"]
        if not isinstance(n_grid, list) or not all(isinstance(n, int) and n > 0 for n in n_grid):
            raise ConfigError("plan.n_grid must be a list of positive integers")
        if not isinstance(plan["mc_runs"], int) or plan["mc_runs"] < 1:
            raise ConfigError("plan.mc_runs must be a positive integer")
        divisor = plan.get("divisor", 5)
        if not isinstance(divisor, int) or divisor < 1:
            raise ConfigError("plan.divisor must be a positive integer")
        estimators = plan.get("estimators", ["robust", "single", "raw", "raw_subset"])
        if not isinstance(estimators, list) or not all(isinstance(e, str) for e in estimators):
            raise ConfigError("plan.estimators must be a list of names")
        try:
            return ExperimentPlan(
                theta_star=self.theta_star(), banks=self.banks(), n_grid=tuple(n_grid),
                mc_runs=plan["mc_runs"], estimators=tuple(estimators), divisor=divisor,
                base_seed=self.base_seed() if seed_override is None else seed_override,
                family=self.family(), optimizer=self.optimizer())
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[plan]: {exc}") from exc

    def output(self) -> tuple[str | None, tuple[str, ...]]:
        out = self.raw.get("output", {})
        return out.get("out_dir"), tuple(out.get("formats", ["csv", "json"]))

    def scalar_cases(self) -> list[tuple[tuple[float, ...], tuple[float, ...]]]:
        """(informations, weights) pairs for scalar CRLB combination."""
        sec = self.section("scalar_fims")
        cases = sec.get("cases")
        if not isinstance(cases, list) or not cases:
            raise ConfigError("scalar_fims.cases must be a nonempty list of lists")
        out = []
        for i, case in enumerate(cases):
            infos = _floats(f"scalar_fims.cases[{i}]", case)
            out.append((infos, (1.0 / len(infos),) * len(infos)))
        return out
