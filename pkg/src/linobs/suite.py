"""Run a selection of verification checks on one system.

A system is a manifold, a flow field and one or more input signals. Every
check aggregates over the signals: its residual is the worst one seen and
its details list the per-signal results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flows import FlowField, InputSignal
from .kernel import OdeConfig
from .manifolds import ConnectionManifold, MatrixLieGroup, Sphere2
from .report import CheckReport
from . import verify as V

CHECK_NAMES = (
    "exact-linearization",
    "state-independence",
    "self-similarity",
    "jacobi",
    "preintegration",
    "equivalence",
    "curvature-condition",
    "group-affine",
    "induced-multiplication",
    "classify-s2",
)

# residuals at or below this are rounding noise and do not enter ratios
RATIO_FLOOR = 1e-12


@dataclass
class SuiteConfig:
    horizon: float = 1.0
    step: float = 1e-3
    n_base_points: int = 5
    magnitudes: tuple = (0.05, 0.1, 0.25, 0.5, 1.0)
    reference_point: np.ndarray | None = None
    base_radius: float = 1.0
    patch_separation: float = 0.4
    n_t: int = 41
    n_s: int = 21
    t_fits: tuple = (0.0, 0.25, 0.5, 0.75)
    m_max: int = 1
    group_pairs: int = 100
    seed: int = 0
    tolerances: dict = field(default_factory=dict)

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, V.DEFAULT_TOLERANCES[name]))

    @property
    def ode(self) -> OdeConfig:
        return OdeConfig(self.step)


def applicable_checks(m: ConnectionManifold) -> list[str]:
    names = list(CHECK_NAMES[:7])
    if isinstance(m, MatrixLieGroup):
        names.append("group-affine")
        if m.mu in (0.0, 1.0):
            names.append("induced-multiplication")
    if isinstance(m, Sphere2):
        names.append("classify-s2")
    return names


def default_reference(m: ConnectionManifold) -> np.ndarray:
    if isinstance(m, Sphere2):
        return np.array([0.0, 0.0, 1.0])
    if isinstance(m, MatrixLieGroup):
        return m.identity()
    return np.zeros(m.n_components)


def sample_base_points(m: ConnectionManifold, cfg: SuiteConfig, rng) -> list[np.ndarray]:
    ref = default_reference(m) if cfg.reference_point is None else np.asarray(cfg.reference_point, float)
    pts = [ref]
    while len(pts) < cfg.n_base_points:
        if isinstance(m, Sphere2):
            pts.append(m.random_point(rng, ref, cfg.base_radius))
        else:
            v = m.random_tangent(rng, ref)
            v *= cfg.base_radius * rng.uniform() / m.norm(ref, v)
            pts.append(m.exp(ref, v))
    return pts


def magnitude_ratio(profile: dict[float, float], hi: float, lo: float) -> float:
    """residual(hi) / residual(lo), with both floored at rounding level."""
    return max(profile[hi], RATIO_FLOOR) / max(profile[lo], RATIO_FLOOR)


def _merge(name: str, reports: list[CheckReport], tolerance: float, labels: list[str]) -> CheckReport:
    worst = max(r.max_residual for r in reports)
    details = [{"signal": lab, "max_residual": r.max_residual, "details": r.details}
               for lab, r in zip(labels, reports)]
    order = reports[0].truncation_order
    return CheckReport(name, worst, tolerance, sum(r.sample_count for r in reports), details, order)


def run_suite(m: ConnectionManifold, f: FlowField, signals: list[InputSignal],
              cfg: SuiteConfig = SuiteConfig(), checks=None,
              labels: list[str] | None = None) -> dict[str, CheckReport]:
    """Run ``checks`` (default: all applicable) and return reports by name."""
    if isinstance(signals, InputSignal):
        signals = [signals]
    labels = labels or [f"signal-{k}" for k in range(len(signals))]
    allowed = applicable_checks(m)
    if checks is None or checks == "all" or list(checks) == ["all"]:
        checks = allowed
    unknown = [c for c in checks if c not in CHECK_NAMES]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    bad = [c for c in checks if c not in allowed]
    if bad:
        raise ValueError(f"checks not applicable to {m!r}: {bad}")
    want = set(checks)
    if "equivalence" in want:
        want |= {"exact-linearization", "state-independence", "self-similarity", "preintegration"}
    if "classify-s2" in want:
        want |= {"exact-linearization", "state-independence", "self-similarity", "jacobi", "preintegration"}
    if "curvature-condition" in want or "state-independence" in want:
        want.add("exact-linearization")

    out: dict[str, CheckReport] = {}
    rng = np.random.default_rng(cfg.seed)
    bases = sample_base_points(m, cfg, rng)
    ref_frame = m.identity_frame(bases[0])

    if "exact-linearization" in want:
        lin, indep, curv, records0 = [], [], [], []
        for u in signals:
            recs, reps = [], []
            for p in bases:
                samples = V.default_error_samples(m, p, cfg.magnitudes)
                rec, rep = V.fit_linearization(m, f, u, p, samples, cfg.horizon, cfg.ode, ref_frame,
                                               cfg.tol("exact-linearization"))
                recs.append(rec)
                reps.append(rep)
            profile = V.exactness_profile(m, f, u, bases[0], cfg.magnitudes, cfg.horizon, cfg.ode)
            worst = max(r.max_residual for r in reps)
            details = [{"base_point": k, "max_residual": r.max_residual, "per_magnitude": r.details}
                       for k, r in enumerate(reps)]
            details.append({"magnitude_profile": profile})
            lin.append(CheckReport("exact-linearization", worst, cfg.tol("exact-linearization"),
                                   sum(r.sample_count for r in reps), details))
            if "state-independence" in want:
                indep.append(V.check_state_independence(recs, cfg.tol("state-independence")))
            records0.append(recs[0])
        out["exact-linearization"] = _merge("exact-linearization", lin, cfg.tol("exact-linearization"), labels)
        if indep:
            out["state-independence"] = _merge("state-independence", indep,
                                               cfg.tol("state-independence"), labels)
        if "curvature-condition" in want:
            for rec in records0:
                curv.append(V.check_curvature_condition(rec, cfg.m_max, seed=cfg.seed,
                                                        tolerance=cfg.tol("curvature-condition")))
            out["curvature-condition"] = _merge("curvature-condition", curv,
                                                cfg.tol("curvature-condition"), labels)

    if want & {"self-similarity", "jacobi", "preintegration"}:
        p1 = bases[0]
        v = m.random_tangent(rng, p1)
        p2 = m.exp(p1, cfg.patch_separation * v / m.norm(p1, v))
        sims, jacs, pres = [], [], []
        for u in signals:
            patch = V.build_patch(m, f, u, p1, p2, cfg.horizon, cfg.n_t, cfg.n_s, cfg.ode)
            if "self-similarity" in want:
                sims.append(V.check_self_similarity(patch, tolerance=cfg.tol("self-similarity")))
            if "jacobi" in want:
                rep = V.check_jacobi_agreement(patch, cfg.tol("jacobi"))
                rep.details.append({"commutator_residual": patch.commutator_residual,
                                    "tolerance": cfg.tol("commutator")})
                # the commutator identity shares the Jacobi tolerance scale
                rep.max_residual = max(rep.max_residual,
                                       patch.commutator_residual * cfg.tol("jacobi") / cfg.tol("commutator"))
                jacs.append(rep)
            if "preintegration" in want:
                t_fits = [t * cfg.horizon for t in cfg.t_fits]
                pres.append(V.check_preintegrability(patch, t_fits, cfg.tol("preintegration"), cfg.ode,
                                                     cfg.seed))
        for name, reps in (("self-similarity", sims), ("jacobi", jacs), ("preintegration", pres)):
            if reps:
                out[name] = _merge(name, reps, cfg.tol(name), labels)

    if "equivalence" in want:
        out["equivalence"] = V.check_equivalence(
            [out["exact-linearization"], out["state-independence"]],
            [out["self-similarity"], out["preintegration"]])

    if "group-affine" in want:
        reps = [V.check_group_affine(m, f, u, cfg.horizon, cfg.group_pairs, cfg.seed, cfg.ode,
                                     tol_affine=cfg.tol("group-affine"),
                                     tol_auto=cfg.tol("group-automorphism")) for u in signals]
        out["group-affine"] = _merge("group-affine", reps, 1.0, labels)

    if "induced-multiplication" in want:
        out["induced-multiplication"] = V.check_induced_multiplication(
            m, seed=cfg.seed, tolerance=cfg.tol("induced-multiplication"),
            tol_assoc=cfg.tol("associativity"))

    if "classify-s2" in want:
        from .attitude import classify_s2_systems

        out["classify-s2"] = classify_s2_systems(f, signals, cfg, suite=out)

    return {name: out[name] for name in CHECK_NAMES if name in out and name in checks}


def core_verdict(reports: dict[str, CheckReport]) -> bool:
    """True when every linear-observed property check present passed."""
    core = ("exact-linearization", "state-independence", "self-similarity", "jacobi", "preintegration")
    return all(reports[c].passed for c in core if c in reports)

