"""Scenario files: validated JSON describing a system and how to test it."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import attitude as att
from .flows import (
    ConstantInput,
    FlowField,
    GradientLike,
    InputSignal,
    LeftInvariant,
    LinearField,
    PiecewiseConstantInput,
    RightPerturbed,
    SigmaCross,
    SinusoidInput,
)
from .manifolds import ConnectionManifold, make_manifold
from .suite import CHECK_NAMES, SuiteConfig
from .verify import DEFAULT_TOLERANCES


class ScenarioError(ValueError):
    """A scenario file could not be read or validated."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Vector = list[float]
Matrix = list[list[float]]


class ManifoldSpec(_Strict):
    kind: Literal["euclidean", "sphere2", "lie_group"]
    n: int = Field(3, ge=1, le=50)
    group: Literal["so3", "heisenberg"] = "so3"
    mu: float = 1.0

    def build(self) -> ConnectionManifold:
        return make_manifold(self.kind, self.n, self.group, self.mu)


class SigmaCrossSpec(_Strict):
    kind: Literal["sigma_cross"]
    S: Matrix = Field(default_factory=lambda: np.eye(3).tolist())
    c: Vector = Field(default_factory=lambda: [0.0, 0.0, 0.0])


class GradientSpec(_Strict):
    kind: Literal["gradient_like"]
    b: Vector


class LeftInvariantSpec(_Strict):
    kind: Literal["left_invariant"]
    L: Matrix = Field(default_factory=lambda: np.eye(3).tolist())
    c: Vector = Field(default_factory=lambda: [0.0, 0.0, 0.0])


class RightPerturbedSpec(_Strict):
    kind: Literal["right_perturbed"]
    L: Matrix = Field(default_factory=lambda: np.eye(3).tolist())
    c: Vector = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    kappa: float = 0.5


class LinearSpec(_Strict):
    kind: Literal["linear"]
    A: Matrix
    B: Matrix | None = None


SystemSpec = Annotated[
    Union[SigmaCrossSpec, GradientSpec, LeftInvariantSpec, RightPerturbedSpec, LinearSpec],
    Field(discriminator="kind"),
]


def build_field(spec) -> FlowField:
    if spec.kind == "sigma_cross":
        return SigmaCross(spec.S, spec.c)
    if spec.kind == "gradient_like":
        return GradientLike(spec.b)
    if spec.kind == "left_invariant":
        return LeftInvariant(spec.L, spec.c)
    if spec.kind == "right_perturbed":
        return RightPerturbed(spec.L, spec.c, spec.kappa)
    return LinearField(spec.A, spec.B)


class ConstantSpec(_Strict):
    kind: Literal["constant"]
    value: Vector


class SinusoidSpec(_Strict):
    kind: Literal["sinusoid"]
    amplitude: Vector
    frequency: Vector
    phase: Vector | None = None
    offset: Vector | None = None


class PiecewiseSpec(_Strict):
    kind: Literal["piecewise"]
    breakpoints: Vector
    values: Matrix

    @model_validator(mode="after")
    def _shape(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("values needs one more row than breakpoints")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        return self


InputSpec = Annotated[Union[ConstantSpec, SinusoidSpec, PiecewiseSpec], Field(discriminator="kind")]


def build_input(spec) -> InputSignal:
    if spec.kind == "constant":
        return ConstantInput(spec.value)
    if spec.kind == "sinusoid":
        return SinusoidInput(spec.amplitude, spec.frequency, spec.phase, spec.offset)
    return PiecewiseConstantInput(spec.breakpoints, spec.values)


def _label(spec) -> str:
    return spec.kind


class IntegrationSpec(_Strict):
    dt: float = Field(1e-3, gt=0, le=0.1)
    horizon: float = Field(1.0, gt=0, le=100.0)


class SamplingSpec(_Strict):
    n_base_points: int = Field(5, ge=2, le=50)
    magnitudes: Vector = Field(default_factory=lambda: [0.05, 0.1, 0.25, 0.5, 1.0])
    base_radius: float = Field(1.0, gt=0, le=2.5)
    reference_point: list | None = None
    patch_grid: tuple[int, int] = (41, 21)
    patch_separation: float = Field(0.4, gt=0, le=2.0)
    t_fit: Vector = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75])
    m_max: int = Field(1, ge=0, le=2)
    group_pairs: int = Field(100, ge=1, le=10000)

    @field_validator("magnitudes")
    @classmethod
    def _mags(cls, v):
        if not v or any(not 0 < a <= 2.5 for a in v):
            raise ValueError("magnitudes must lie in (0, 2.5]")
        return sorted(v)

    @field_validator("t_fit")
    @classmethod
    def _tfit(cls, v):
        if not v or any(not 0 <= t <= 1 for t in v):
            raise ValueError("t_fit entries are fractions of the horizon in [0, 1]")
        return v

    @field_validator("patch_grid")
    @classmethod
    def _grid(cls, v):
        if v[0] < 3 or v[1] < 3:
            raise ValueError("patch grid needs at least 3x3 nodes")
        return v


class NoiseModel(_Strict):
    gyro_std: float = Field(0.0, ge=0)
    accel_angle_std: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)


class TuningModel(_Strict):
    gyro_std: float = Field(0.01, gt=0)
    accel_angle_std: float = Field(0.01, gt=0)
    initial_std: float = Field(1.0, gt=0)


class ObserverSpec(_Strict):
    omega: InputSpec = Field(default_factory=lambda: ConstantSpec(kind="constant", value=[0.3, -0.2, 0.5]))
    q0_true: Vector = Field(default_factory=lambda: [0.0, 0.0, 1.0])
    initial_error_rad: float = Field(np.pi / 3, ge=0, lt=np.pi - 1e-3)
    initial_error_axis: Vector | None = None
    duration: float = Field(20.0, gt=0, le=3600)
    propagation_rate: float = Field(100.0, gt=0)
    update_rate: float = Field(10.0, gt=0)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    tuning: TuningModel = Field(default_factory=TuningModel)
    retraction: Literal["geodesic", "projected"] = "geodesic"
    convergence_window: float = Field(10.0, ge=0)

    @model_validator(mode="after")
    def _rates(self):
        if self.propagation_rate < self.update_rate:
            raise ValueError("propagation_rate must be >= update_rate")
        if self.convergence_window > self.duration:
            raise ValueError("convergence_window exceeds duration")
        if len(self.q0_true) != 3 or np.linalg.norm(self.q0_true) == 0:
            raise ValueError("q0_true must be a non-zero 3-vector")
        return self

    def build(self, seed: int | None = None) -> att.ObserverConfig:
        n = self.noise
        return att.ObserverConfig(
            omega=build_input(self.omega),
            q0_true=np.asarray(self.q0_true, float),
            initial_error_rad=self.initial_error_rad,
            initial_error_axis=None if self.initial_error_axis is None else np.asarray(self.initial_error_axis),
            duration=self.duration,
            propagation_rate=self.propagation_rate,
            update_rate=self.update_rate,
            noise=att.NoiseSpec(n.gyro_std, n.accel_angle_std, n.seed if seed is None else seed),
            tuning=att.FilterTuning(self.tuning.gyro_std, self.tuning.accel_angle_std, self.tuning.initial_std),
            retraction=self.retraction,
            convergence_window=self.convergence_window,
        )


TOLERANCE_KEYS = tuple(DEFAULT_TOLERANCES)


class Scenario(_Strict):
    name: str
    description: str = ""
    seed: int = Field(0, ge=0, lt=2**64)
    manifold: ManifoldSpec | None = None
    system: SystemSpec | None = None
    inputs: list[InputSpec] = Field(default_factory=list)
    integration: IntegrationSpec = Field(default_factory=IntegrationSpec)
    sampling: SamplingSpec = Field(default_factory=SamplingSpec)
    tolerances: dict[str, float] = Field(default_factory=dict)
    expect: dict[str, Literal["pass", "fail"]] = Field(default_factory=dict)
    observer: ObserverSpec | None = None

    @model_validator(mode="after")
    def _consistency(self):
        if (self.manifold is None) != (self.system is None):
            raise ValueError("manifold and system must be given together")
        if self.system is not None and not self.inputs:
            raise ValueError("a system needs at least one input signal")
        if self.manifold is None and self.observer is None:
            raise ValueError("scenario describes neither a system nor an observer run")
        bad = [k for k in self.tolerances if k not in TOLERANCE_KEYS]
        if bad:
            raise ValueError(f"unknown tolerance keys {bad}; allowed: {list(TOLERANCE_KEYS)}")
        if any(not v > 0 for v in self.tolerances.values()):
            raise ValueError("tolerances must be positive")
        spacing = self.integration.horizon / (self.sampling.patch_grid[0] - 1) / self.integration.dt
        if abs(spacing - round(spacing)) > 1e-6:
            raise ValueError("patch time spacing must be a whole number of integration steps")
        bad = [k for k in self.expect if k not in CHECK_NAMES]
        if bad:
            raise ValueError(f"unknown check names in expect: {bad}")
        return self

    # -- construction ----------------------------------------------------
    def build_manifold(self) -> ConnectionManifold:
        return self.manifold.build()

    def build_field(self) -> FlowField:
        return build_field(self.system)

    def build_inputs(self) -> list[InputSignal]:
        return [build_input(s) for s in self.inputs]

    def input_labels(self) -> list[str]:
        return [f"{k}:{_label(s)}" for k, s in enumerate(self.inputs)]

    def suite_config(self, tolerance_scale: float = 1.0) -> SuiteConfig:
        s = self.sampling
        tol = {k: v * tolerance_scale for k, v in {**DEFAULT_TOLERANCES, **self.tolerances}.items()}
        return SuiteConfig(
            horizon=self.integration.horizon,
            step=self.integration.dt,
            n_base_points=s.n_base_points,
            magnitudes=tuple(s.magnitudes),
            reference_point=None if s.reference_point is None else np.asarray(s.reference_point, float),
            base_radius=s.base_radius,
            patch_separation=s.patch_separation,
            n_t=s.patch_grid[0],
            n_s=s.patch_grid[1],
            t_fits=tuple(s.t_fit),
            m_max=s.m_max,
            group_pairs=s.group_pairs,
            seed=self.seed,
            tolerances=tol,
        )

    def expected(self, check: str) -> str:
        return self.expect.get(check, "pass")

    def digest(self) -> str:
        return scenario_digest(self)


def scenario_digest(sc: Scenario) -> str:
    """sha256 of the canonical JSON of the validated scenario."""
    canon = json.dumps(sc.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    from pydantic import ValidationError

    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{source}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    try:
        return Scenario.model_validate(raw)
    except ValidationError as e:
        lines = []
        for err in e.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{source}: field {loc}: {err['msg']}")
        raise ScenarioError("\n".join(lines)) from None


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"{path}: cannot read: {e.strerror}") from None
    return parse_scenario(text, str(path))


def shipped_scenarios() -> list[str]:
    root = resources.files("linobs") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def shipped_path(name: str) -> Path:
    """Filesystem path of a bundled scenario (``name`` with or without .json)."""
    if not name.endswith(".json"):
        name += ".json"
    p = resources.files("linobs") / "scenarios" / name
    if not p.is_file():
        raise ScenarioError(f"no bundled scenario {name!r}")
    return Path(str(p))
