"""Radial retractions of model tubes, the gluing family of forms and Moser's method along it.

The gluing family lives in glued orientation: ``omega_0 = pi^* omega_lower`` and
``omega_1 = omega_high``, with ``omega_t = S_t^* omega_high`` for the fiber scaling
``S_t(x) = (x_kept, t * x_normal)``. Its time derivative is ``d(gamma_t)`` and Moser's
equation reads ``X_t -| omega_t = -gamma_t`` on the G-block.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from math import exp, log
from pathlib import Path
from typing import Any

import numpy as np
import sympy
from pydantic import BaseModel
from scipy.integrate import quad
from sympy import Matrix, Rational

from presymplectic_strata.core.config import LOGGER_NAME, MoserSettings
from presymplectic_strata.errors import (
    KernelInclusionError,
    QuadratureError,
    SingularSystemError,
)
from presymplectic_strata.services.algebra.fields import (
    DiffForm,
    MultiVector,
    exterior_d,
    interior,
    lie_derivative,
)
from presymplectic_strata.services.algebra.maps import PolyMap, pullback
from presymplectic_strata.services.algebra.polynomials import (
    Chart,
    evaluate_float,
    to_rational,
)
from presymplectic_strata.services.flows.integrators import RungeKutta4, integrate
from presymplectic_strata.services.foliation.distributions import (
    null_distribution,
    polarization_complement,
    sample_points,
)
from presymplectic_strata.services.foliation.tubes import LowerStratum, TubeSystem, tube_kernel_check
from presymplectic_strata.services.geometry.stratify import FormField

logger = logging.getLogger(LOGGER_NAME)

CLAIMED_RESCALING_EXPONENT = 1


def _unit_interval(t: Any) -> Rational:
    t = to_rational(t)
    if not 0 <= t <= 1:
        raise ValueError(f"Time {t} is outside [0, 1]")
    return t


def _normal_euler(chart: Chart, normal: Sequence[int]) -> MultiVector:
    """``E = sum_{i normal} x_i d/dx_i``."""
    gens = chart.gens
    return MultiVector.vector(chart, [gens[i] if i in normal else 0 for i in range(chart.dim)])


@dataclass(frozen=True, eq=False)
class RadialFlow:
    """``R^t(x) = (x_kept, (1 - t) x_normal)`` and its generator ``Y_t = -E / (1 - t)``.

    ``R^t`` is the gradient flow of ``rho`` run for the time ``s(t) = -log(1 - t) / (2 scale)``,
    so ``R^0 = id`` and ``R^1 = pi``. ``Y_t`` is undefined at ``t = 1``.
    """

    tube: TubeSystem
    t: Rational
    map: PolyMap
    generator: MultiVector | None

    @property
    def gradient_time(self) -> float:
        if self.t == 1:
            return float("inf")
        return -log(1 - float(self.t)) / (2 * float(to_rational(self.tube.scale)))


def radial_flow(tube: TubeSystem, t: Any) -> RadialFlow:
    t = _unit_interval(t)
    chart = tube.chart
    factor = chart.constant(1 - t)
    components = tuple(factor * g if i in tube.normal else g for i, g in enumerate(chart.gens))
    flow_map = PolyMap(chart, chart, components)
    generator = None
    if t < 1:
        generator = _normal_euler(chart, tube.normal) * (-1 / (1 - t))
    if t == 1 and flow_map != tube.retraction:
        raise AssertionError("R^1 is not the tube projection")
    return RadialFlow(tube, t, flow_map, generator)


class BlockExponent(BaseModel):
    block: str
    exponent: int | None
    fitted_rate: float | None = None
    fitted_scale: float | None = None


class RescalingReport(BaseModel):
    blocks: list[BlockExponent]
    exponential: bool
    exponent: int | None
    claimed_exponent: int = CLAIMED_RESCALING_EXPONENT
    matches_claim: bool
    lie_derivative_holds: bool


def _normal_degrees(c, normal: Sequence[int]) -> set[int]:
    return {sum(m[i] for i in normal) for m in c.keys()}


def _fit_block(c, k: int, normal: Sequence[int], n: int) -> tuple[float | None, float | None]:
    """Least-squares fit of ``log|c(S^tau x) e^(k tau)|`` against ``tau`` at a point where ``c != 0``."""
    rng = np.random.default_rng(0)
    point = np.ones(n)
    for _ in range(16):
        if evaluate_float(c, point) != 0:
            break
        point = rng.uniform(0.5, 1.5, n)
    else:
        return None, None
    base = abs(evaluate_float(c, point))
    taus = np.linspace(0.0, 1.0, 9)
    values = []
    for tau in taus:
        scaled = [x * exp(tau) if i in normal else x for i, x in enumerate(point)]
        values.append(abs(evaluate_float(c, scaled)) * exp(k * tau))
    if min(values) == 0.0:
        return None, None
    rate, intercept = np.polyfit(taus, np.log(values), 1)
    return float(rate), float(exp(intercept) / base)


def rescaling_check(tube: TubeSystem, omega: FormField) -> RescalingReport:
    """Per-block exponents ``c`` with ``(S^tau)^* omega = C e^(c tau) omega`` for ``S^tau = e^tau`` on the fibers.

    A block ``c_I dx_I`` scales exponentially exactly when ``c_I`` is homogeneous along the fibers;
    the exponent is its fiber degree plus the number of fiber legs in ``I``. The exponents are
    confirmed by ``L_E omega`` for the fiber Euler field ``E``.
    """
    omega.chart.require_same(tube.chart)
    form = omega.form
    normal = tube.normal
    blocks = []
    expected: dict = {}
    for idx, c in form.coeffs.items():
        k = sum(1 for i in idx if i in normal)
        degrees = _normal_degrees(c, normal)
        exponent = k + degrees.pop() if len(degrees) == 1 else None
        rate, scale = _fit_block(c, k, normal, tube.chart.dim)
        blocks.append(
            BlockExponent(block=form.basis_text(idx), exponent=exponent, fitted_rate=rate, fitted_scale=scale)
        )
        if exponent is not None:
            expected[idx] = exponent * c

    exponential = all(b.exponent is not None for b in blocks)
    exponents = {b.exponent for b in blocks}
    common = exponents.pop() if exponential and len(exponents) == 1 else None
    lie_holds = exponential and lie_derivative(_normal_euler(tube.chart, normal), form) == DiffForm(
        tube.chart, 2, expected
    )
    if not exponential:
        logger.warning("Rescaling is not exponential: some blocks are not homogeneous along the fibers")
    elif common is not None and common != CLAIMED_RESCALING_EXPONENT:
        logger.warning(
            f"Measured rescaling exponent {common} differs from the claimed exponent {CLAIMED_RESCALING_EXPONENT}"
        )
    return RescalingReport(
        blocks=blocks,
        exponential=exponential,
        exponent=common,
        matches_claim=common == CLAIMED_RESCALING_EXPONENT,
        lie_derivative_holds=lie_holds,
    )


def timed_chart(chart: Chart) -> Chart:
    """``chart`` with a trailing time coordinate."""
    name = "t"
    while name in chart.coord_names:
        name = f"{name}_"
    return chart.extended([name])


def spatial_part(a: DiffForm) -> DiffForm:
    """Drop every term with a ``dt`` leg; time is the last coordinate."""
    t_index = a.chart.dim - 1
    return DiffForm(a.chart, a.degree, {idx: c for idx, c in a.coeffs.items() if t_index not in idx})


def homotopy_primitive(eta: DiffForm, dims: int | None = None) -> DiffForm:
    """Radial primitive ``int_0^1 s^(k-1) (E -| eta)(s x) ds`` of a closed ``k``-form.

    Only the first ``dims`` coordinates are scaled; the rest are parameters.
    """
    chart = eta.chart
    dims = chart.dim if dims is None else dims
    k = eta.degree
    weighted = {}
    for idx, c in eta.coeffs.items():
        weighted[idx] = chart.ring.from_dict(
            {m: a / (sum(m[:dims]) + k) for m, a in c.items()}
        )
    gens = chart.gens
    euler = MultiVector.vector(chart, [gens[i] if i < dims else 0 for i in range(chart.dim)])
    return interior(euler, DiffForm(chart, k, weighted))


@dataclass(frozen=True, eq=False)
class FormFamily:
    """``omega_t`` polynomial in time, with ``d(primitive_t) = d/dt omega_t`` and a G-block frame."""

    chart: Chart
    omega: DiffForm
    primitive: DiffForm
    frame: tuple[MultiVector, ...]

    @property
    def timed(self) -> Chart:
        return self.omega.chart

    def _freeze(self, t: Any) -> PolyMap:
        return PolyMap(self.chart, self.timed, tuple(self.chart.gens) + (self.chart.constant(to_rational(t)),))

    def at(self, t: Any) -> DiffForm:
        freeze = self._freeze(t)
        return DiffForm(self.chart, 2, {idx: freeze.pull_scalar(c) for idx, c in self.omega.coeffs.items()})

    def primitive_at(self, t: Any) -> DiffForm:
        freeze = self._freeze(t)
        return DiffForm(self.chart, 1, {idx: freeze.pull_scalar(c) for idx, c in self.primitive.coeffs.items()})

    def beta(self, t: float, point: Sequence[float], tolerance: float = 1e-10) -> np.ndarray:
        """``beta_t = -int_t^1 gamma_u du`` at a point, with ``omega_t = omega_1 + d beta_t``."""
        n = self.chart.dim
        values = np.zeros(n)
        for i in range(n):
            c = self.primitive.coefficient((i,))
            if not c:
                continue
            value, error = quad(
                lambda u: evaluate_float(c, tuple(point) + (u,)), t, 1.0, epsabs=tolerance, epsrel=0.0, limit=200
            )
            if error > tolerance:
                raise QuadratureError(f"Quadrature of beta_{t} component {i} stalled at error {error:.3g}")
            values[i] = -value
        return values


def form_family(omega_t: DiffForm, frame: Sequence[MultiVector] | None = None) -> FormFamily:
    """Family from ``omega_t`` on a timed chart; the primitive is the radial one of ``d/dt omega_t``."""
    timed = omega_t.chart
    n = timed.dim - 1
    chart = Chart(timed.coord_names[:n])
    if spatial_part(omega_t) != omega_t:
        raise ValueError("A form family has no dt legs")
    if not spatial_part(exterior_d(omega_t)).is_zero:
        raise ValueError("omega_t is not closed for every t")
    t_gen = timed.gens[n]
    derivative = omega_t.map_coefficients(lambda c: c.diff(t_gen))
    primitive = homotopy_primitive(derivative, n)
    if frame is None:
        frame = tuple(MultiVector.coordinate_vector(chart, i) for i in range(n))
    return FormFamily(chart, omega_t, primitive, tuple(frame))


class InterpolationRecord(BaseModel):
    omega_t: str
    primitive: str
    endpoints_exact: bool
    kernel_checked: int
    normal_contraction: float
    normal_vanishing: bool
    quadrature_tolerance: float


def interpolate_forms(
    omega_high: FormField,
    tube: TubeSystem,
    lower: LowerStratum | None = None,
    samples: int = 20,
    seed: int = 0,
    settings: MoserSettings | None = None,
) -> tuple[FormFamily, InterpolationRecord]:
    """Gluing family ``omega_t = S_t^* omega_high`` from ``pi^* omega_lower`` to ``omega_high``.

    The G-block frame is the horizontal lift of the lower polarization. ``beta_t`` must vanish
    on ``ker omega_high`` along the stratum; this is checked by quadrature at random stratum points.
    """
    settings = settings or MoserSettings()
    omega_high.chart.require_same(tube.chart)
    chart = tube.chart
    stratum = tube.stratum_chart
    section = PolyMap(
        stratum,
        chart,
        tuple(stratum.gens[tube.kept.index(i)] if i in tube.kept else stratum.ring.zero for i in range(chart.dim)),
    )
    omega_lower = FormField(pullback(section, omega_high.form))
    kernel = tube_kernel_check(tube, omega_high, omega_lower, samples=samples, seed=seed)
    if not kernel.holds:
        raise KernelInclusionError("Tube projection moves ker omega_high out of ker omega_lower", witness=kernel.witnesses[0])

    timed = timed_chart(chart)
    t_gen = timed.gens[chart.dim]
    scaling = PolyMap(
        timed, chart, tuple(t_gen * g if i in tube.normal else g for i, g in enumerate(timed.gens[: chart.dim]))
    )
    omega_t = spatial_part(pullback(scaling, omega_high.form))
    pulled = spatial_part(pullback(scaling, interior(_normal_euler(chart, tube.normal), omega_high.form)))
    primitive = DiffForm(timed, 1, {idx: c.exquo(t_gen) for idx, c in pulled.coeffs.items()})

    if lower is None:
        lower_pol = polarization_complement(omega_lower, null_distribution(omega_lower))
    else:
        if lower.polarization.omega.form != omega_lower.form:
            logger.warning("Lower polarization is not built on the restriction of omega_high")
        lower_pol = lower.polarization
    frame = tuple(tube.lift(v) for v in lower_pol.g_frame.fields)
    family = FormFamily(chart, omega_t, primitive, frame)

    endpoints = family.at(0) == pullback(tube.projection, omega_lower.form) and family.at(1) == omega_high.form

    contraction = 0.0
    region = ((-1, 1),) * len(tube.kept)
    for point in (tube.section(p) for p in sample_points(region, samples, seed)):
        vectors = omega_high.form.matrix_at(point).nullspace()
        if not vectors:
            continue
        x = [float(c) for c in point]
        for t in (0.0, 0.25, 0.5, 0.75):
            beta = family.beta(t, x, settings.quadrature_tolerance)
            for v in vectors:
                w = np.array([float(c) for c in v])
                contraction = max(contraction, abs(float(beta @ w)) / np.linalg.norm(w))
    vanishing = contraction <= 10 * settings.quadrature_tolerance
    if not vanishing:
        logger.warning(f"beta_t does not vanish on ker omega_high along the stratum: {contraction:.3g}")
    record = InterpolationRecord(
        omega_t=omega_t.to_text(),
        primitive=primitive.to_text(),
        endpoints_exact=endpoints,
        kernel_checked=kernel.checked,
        normal_contraction=contraction,
        normal_vanishing=vanishing,
        quadrature_tolerance=settings.quadrature_tolerance,
    )
    logger.debug(f"Gluing family omega_t = {record.omega_t}, gamma_t = {record.primitive}")
    return family, record


class _MoserField:
    """Numeric right-hand side of ``x' = X_t(x)``, ``J' = DX_t(x) J`` on the G-block."""

    def __init__(self, family: FormFamily, singular_condition: float = 1e12):
        timed = family.timed
        symbols = timed.ring.symbols
        n = family.chart.dim
        self.n = n
        self.r = len(family.frame)
        self.singular_condition = singular_condition
        xs, t = symbols[:n], symbols[n]
        args = (t, *xs)

        frame = Matrix.hstack(
            Matrix.zeros(n, 0),
            *[Matrix([c.as_expr(*family.chart.ring.symbols) for c in v.components()]) for v in family.frame],
        )
        omega = Matrix(n, n, lambda i, j: family.omega.entry(i, j).as_expr())
        gamma = Matrix(n, 1, lambda i, _: family.primitive.coefficient((i,)).as_expr())

        def compile_(expr: Matrix):
            return sympy.lambdify(args, expr, "numpy")

        self._frame = compile_(frame) if self.r else None
        self._omega = compile_(omega)
        self._gamma = compile_(gamma)
        self._d_frame = [compile_(frame.diff(x)) for x in xs] if self.r else []
        self._d_omega = [compile_(omega.diff(x)) for x in xs]
        self._d_gamma = [compile_(gamma.diff(x)) for x in xs]

    def frame(self, x: np.ndarray) -> np.ndarray:
        if not self.r:
            return np.zeros((self.n, 0))
        return np.asarray(self._frame(0.0, *x), dtype=float).reshape(self.n, self.r)

    def omega(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._omega(t, *x), dtype=float).reshape(self.n, self.n)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        n = self.n
        x, jac = y[:n], y[n:].reshape(n, n)
        if self.r == 0:
            return np.zeros_like(y)
        g = self.frame(x)
        w = self.omega(t, x)
        gamma = np.asarray(self._gamma(t, *x), dtype=float).reshape(n)
        a = g.T @ w @ g
        singular = np.linalg.svd(a, compute_uv=False)
        if singular[0] == 0.0 or singular[-1] * self.singular_condition < singular[0]:
            raise SingularSystemError(f"omega_t is singular on the G-block at t={t:.6g}, x={x.tolist()}", time=t)
        coeffs = np.linalg.solve(a, g.T @ gamma)
        velocity = g @ coeffs

        dx = np.empty((n, n))
        for k in range(n):
            dg = np.asarray(self._d_frame[k](t, *x), dtype=float).reshape(n, self.r)
            dw = np.asarray(self._d_omega[k](t, *x), dtype=float).reshape(n, n)
            dgamma = np.asarray(self._d_gamma[k](t, *x), dtype=float).reshape(n)
            da = dg.T @ w @ g + g.T @ dw @ g + g.T @ w @ dg
            db = dg.T @ gamma + g.T @ dgamma
            dcoeffs = np.linalg.solve(a, db - da @ coeffs)
            dx[:, k] = dg @ coeffs + g @ dcoeffs
        return np.concatenate([velocity, (dx @ jac).reshape(-1)])


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Sampled Moser trajectories with the pullback residual ``|(phi^t)^* omega_t - omega_0|`` on the test frame."""

    coord_names: tuple[str, ...]
    times: np.ndarray
    trajectories: np.ndarray
    residuals: np.ndarray
    steps: int
    order: int
    halved_residual: float
    tolerance: float
    halving_factor: float
    orientation: str = "lower->higher"
    notes: tuple[str, ...] = field(default=())

    @property
    def final_residual(self) -> float:
        return float(self.residuals[:, -1].max()) if self.residuals.size else 0.0

    @property
    def halving_ratio(self) -> float:
        if self.halved_residual == 0.0:
            return float("inf")
        return self.final_residual / self.halved_residual

    @property
    def converged(self) -> bool:
        """Step halving shrinks the residual by the order-4 factor, or both runs sit at rounding level."""
        floor = 1e-13
        return self.halving_ratio >= self.halving_factor or max(self.final_residual, self.halved_residual) <= floor

    @property
    def within_tolerance(self) -> bool:
        return bool(np.all(np.isfinite(self.residuals))) and self.final_residual <= self.tolerance

    def reversed(self) -> "FlowResult":
        """Time reversal ``t -> 1 - t``."""
        orientation = "higher->lower" if self.orientation == "lower->higher" else "lower->higher"
        return replace(
            self,
            times=(1.0 - self.times)[::-1],
            trajectories=self.trajectories[:, ::-1, :],
            residuals=self.residuals[:, ::-1],
            orientation=orientation,
        )

    def summary(self) -> "FlowSummary":
        return FlowSummary(
            samples=int(self.trajectories.shape[0]),
            steps=self.steps,
            order=self.order,
            final_residual=self.final_residual,
            halved_residual=self.halved_residual,
            halving_ratio=self.halving_ratio,
            converged=self.converged,
            within_tolerance=self.within_tolerance,
            orientation=self.orientation,
        )

    def to_csv(self, path: str | Path, delimiter: str = ",", digits: int = 12) -> Path:
        """One row per sample and time: ``sample, t, x1, ...``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        samples, count, n = self.trajectories.shape
        rows = np.empty((samples * count, n + 2))
        for s in range(samples):
            rows[s * count : (s + 1) * count, 0] = s
            rows[s * count : (s + 1) * count, 1] = self.times
            rows[s * count : (s + 1) * count, 2:] = self.trajectories[s]
        header = delimiter.join(("sample", "t") + self.coord_names)
        fmt = ["%d"] + [f"%.{digits}g"] * (n + 1)
        np.savetxt(path, rows, fmt=fmt, delimiter=delimiter, header=header, comments="")
        logger.debug(f"Wrote {samples * count} trajectory rows to {path}")
        return path


class FlowSummary(BaseModel):
    samples: int
    steps: int
    order: int
    final_residual: float
    halved_residual: float
    halving_ratio: float
    converged: bool
    within_tolerance: bool
    orientation: str


def _run(field_: _MoserField, points: np.ndarray, steps: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = field_.n
    stepper = RungeKutta4()
    trajectories = np.empty((len(points), steps + 1, n))
    residuals = np.empty((len(points), steps + 1))
    times = np.linspace(0.0, 1.0, steps + 1)
    for s, x0 in enumerate(points):
        y0 = np.concatenate([x0, np.eye(n).reshape(-1)])
        times, states = integrate(stepper, field_, y0, 0.0, 1.0, steps)
        g0 = field_.frame(x0)
        reference = g0.T @ field_.omega(0.0, x0) @ g0
        for i, (t, y) in enumerate(zip(times, states)):
            x, jac = y[:n], y[n:].reshape(n, n)
            moved = jac @ g0
            residuals[s, i] = np.abs(moved.T @ field_.omega(t, x) @ moved - reference).max(initial=0.0)
        trajectories[s] = states[:, :n]
    return times, trajectories, residuals


def moser_solve(
    family: FormFamily,
    points: Sequence[Sequence[float]],
    steps: int | None = None,
    settings: MoserSettings | None = None,
) -> FlowResult:
    """Integrate ``X_t -| omega_t = -gamma_t`` with ``X_t`` in the G-block by fixed-step RK4.

    The run is repeated with half the step; the residual must drop by ``halving_factor``.
    """
    settings = settings or MoserSettings()
    steps = steps or settings.steps
    field_ = _MoserField(family)
    starts = np.asarray(points, dtype=float).reshape(-1, family.chart.dim)
    times, trajectories, residuals = _run(field_, starts, steps)
    _, _, halved = _run(field_, starts, 2 * steps)
    result = FlowResult(
        coord_names=family.chart.coord_names,
        times=times,
        trajectories=trajectories,
        residuals=residuals,
        steps=steps,
        order=RungeKutta4().order,
        halved_residual=float(halved[:, -1].max()) if halved.size else 0.0,
        tolerance=settings.residual_tolerance,
        halving_factor=settings.halving_factor,
    )
    if not result.within_tolerance:
        logger.warning(f"Moser residual {result.final_residual:.3g} exceeds {settings.residual_tolerance:.3g}")
    if not result.converged:
        logger.warning(f"Step halving improved the residual only {result.halving_ratio:.3g}x")
    logger.debug(f"Moser flow: {result.summary()}")
    return result


def area_scaling_family(chart: Chart, rate: Any = Rational(1, 2)) -> FormFamily:
    """``omega_t = (1 + rate t) dx1^dx2``; its Moser flow is ``x / sqrt(1 + rate t)``."""
    timed = timed_chart(chart)
    t_gen = timed.gens[chart.dim]
    return form_family(DiffForm(timed, 2, {(0, 1): 1 + timed.constant(rate) * t_gen}))

