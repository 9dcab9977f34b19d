"""Command dispatch: every command reads a manifest and options, and returns a Report.

A command returns ``passed=False`` when a verification fails (exit status 1). Input problems
raise ``StrataError``/``ValueError`` and are mapped to exit status 2 by the CLI.
"""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from sympy import Matrix, Rational

from presymplectic_strata.core.config import LOGGER_NAME, Settings
from presymplectic_strata.core.manifest import Manifest, load_manifest, parse_field, parse_manifest
from presymplectic_strata.core.reporting import Report, collect_warnings, make_table, provenance
from presymplectic_strata.errors import ManifestError
from presymplectic_strata.services.algebra.fields import DiffForm, MultiVector
from presymplectic_strata.services.algebra.polynomials import Chart, JetOrder
from presymplectic_strata.services.algebra.skew import (
    SkewForm,
    nullity,
    nullity_bounds,
    pfaffian,
    stratum_dim_oracle,
    stratum_table,
)
from presymplectic_strata.services.flows.gauge import gauge_flow
from presymplectic_strata.services.flows.gluing import composition_check, directed_extension_check, glue_morphism
from presymplectic_strata.services.flows.moser import (
    area_scaling_family,
    interpolate_forms,
    moser_solve,
    rescaling_check,
)
from presymplectic_strata.services.foliation.connection import special_connection
from presymplectic_strata.services.foliation.distributions import (
    Polarization,
    frobenius_check,
    gotay_form,
    null_distribution,
    polarization_complement,
    stabilize,
)
from presymplectic_strata.services.geometry.census import niceness_report
from presymplectic_strata.services.geometry.stratify import (
    Box,
    FormField,
    pointwise_nullity,
    realize_form_at_point,
    transversality_check,
)
from presymplectic_strata.services.geometry.whitney import ImplicitStratum, Verdict, cusp_family, whitney_check
from presymplectic_strata.services.linf.augmentation import curved_augmentation, mc_series, tangent_complex
from presymplectic_strata.services.linf.vdata import LinfStructure, VData, build_vdata
from presymplectic_strata.services.linf.verify import bracket_table, linf_verify, strictness_check
from presymplectic_strata.utils.lists import csv_to_list, parse_box, parse_point, parse_rational

logger = logging.getLogger(LOGGER_NAME)

BUILTIN_MODELS = {
    "r3flat": """\
# presymplectic-strata manifest v1
chart x1, x2, x3
omega = dx1^dx2, closed
""",
    "r4flat": """\
# presymplectic-strata manifest v1
chart x1, x2, x3, x4
omega = dx1^dx2, closed
""",
    "r3curved": """\
# presymplectic-strata manifest v1
chart x1, x2, x3
omega = (1 + x1*x2)*dx1^dx2, closed
""",
    "model4": """\
# presymplectic-strata manifest v1
chart x1, x2, x3, x4
omega = x1*dx1^dx2 + dx3^dx4, closed
box B = [-1,1]^4
tube T = x1
point y0 = 0, 0, 0, 0
""",
    "r4triple": """\
# presymplectic-strata manifest v1
chart x1, x2, x3, x4
chart S = x2, x3, x4
chart P = x3, x4
omega = dx3^dx4, closed
omega_s on S = dx3^dx4, closed
omega_p on P = dx3^dx4, closed
tube T_sr = x1
tube T_ps on S = x2
tube T_pr = x1, x2
""",
}


def resolve_manifest(model: str | None = None, path: str | Path | None = None) -> Manifest | None:
    if model and path:
        raise ValueError("Give either a manifest file or a built-in model, not both")
    if model:
        if model not in BUILTIN_MODELS:
            raise ManifestError(f"Unknown model {model!r}", expected=sorted(BUILTIN_MODELS))
        return parse_manifest(BUILTIN_MODELS[model])
    if path:
        return load_manifest(path)
    return None


@dataclass
class Outcome:
    records: dict[str, Any]
    tables: dict[str, str] = field(default_factory=dict)
    passed: bool = True


@dataclass(frozen=True, eq=False)
class CommandContext:
    manifest: Manifest | None
    settings: Settings
    options: Mapping[str, Any]
    seed: int

    def option(self, name: str, default: Any = None) -> Any:
        """Command-line option, then manifest ``set`` parameter, then ``default``."""
        value = self.options.get(name)
        if value is None and self.manifest is not None:
            value = self.manifest.param(name)
        return default if value is None else value

    def flag(self, name: str) -> bool:
        value = self.option(name, False)
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes")
        return bool(value)

    def require_manifest(self) -> Manifest:
        if self.manifest is None:
            raise ManifestError("This command needs a manifest (--manifest) or a built-in model (--model)")
        return self.manifest

    def form(self, option: str = "form") -> FormField:
        return self.require_manifest().form_field(self.option(option, "omega"))

    def point(self, chart: Chart, option: str = "point") -> tuple[Rational, ...]:
        text = self.option(option)
        if text is None:
            return (Rational(0),) * chart.dim
        if self.manifest is not None and text in self.manifest.points:
            point = self.manifest.point(text)
        else:
            point = parse_point(str(text))
        if len(point) != chart.dim:
            raise ValueError(f"Point {tuple(point)} does not match the chart {chart.coord_names}")
        return point

    def box(self, chart: Chart) -> Box:
        text = self.option("box")
        if text is None:
            return ((Rational(-1), Rational(1)),) * chart.dim
        if self.manifest is not None and text in self.manifest.boxes:
            return self.manifest.box(text)
        return parse_box(str(text))

    def polarization(self, omega: FormField, point: tuple[Rational, ...]) -> Polarization:
        name = self.option("polarization")
        if name is not None:
            return self.require_manifest().polarization(name)
        return polarization_complement(omega, null_distribution(omega, base_point=point))

    def vdata(self, option: str = "form") -> VData:
        omega = self.form(option)
        polarization = self.polarization(omega, self.point(omega.chart))
        jets = self.settings.app.jets
        gotay = gotay_form(polarization, fiber_order=jets.fiber_order)
        return build_vdata(gotay, polarization, JetOrder(jets.base_order, jets.fiber_order))


def _matrix_text(matrix: Matrix) -> list[list[str]]:
    return [[str(matrix[i, j]) for j in range(matrix.cols)] for i in range(matrix.rows)]


def _element(text: str | None, vdata: VData) -> MultiVector:
    if not text:
        return MultiVector.zero(vdata.chart, 1)
    value = parse_field(text, vdata.chart)
    if isinstance(value, DiffForm):
        if not value.is_zero:
            raise ManifestError(f"{text!r} is a form; expected a multivector on {vdata.chart.coord_names}")
        return MultiVector.zero(vdata.chart, 1)
    return value


def run_dims(ctx: CommandContext) -> Outcome:
    if ctx.option("N") is None:
        raise ValueError("dims needs --N")
    n = int(ctx.option("N"))
    rows = stratum_table(n)
    passed = True
    if ctx.flag("oracle"):
        for row in rows:
            if not row["empty"]:
                row["oracle"] = stratum_dim_oracle(n, row["m"], seed=ctx.seed)
                passed &= row["oracle"] == row["dim"]
    table = make_table(
        ["m", "dim", "codim", "empty", "admissible"], [[r[k] for k in ("m", "dim", "codim", "empty", "admissible")] for r in rows]
    )
    return Outcome({"N": n, "strata": rows, "bounds": nullity_bounds(n)}, {"strata": table}, passed)


def run_stratify(ctx: CommandContext) -> Outcome:
    omega = ctx.form()
    settings = ctx.settings.app
    samples = int(ctx.option("samples", settings.sampling.samples_per_stratum))
    limit = ctx.option("transversality_points")
    report = niceness_report(
        omega,
        ctx.box(omega.chart),
        samples,
        ctx.seed,
        settings.numeric,
        settings.sampling,
        int(limit) if limit is not None else None,
    )
    records: dict[str, Any] = {"form": omega.to_text(), "census": report}
    if ctx.option("point") is not None:
        point = ctx.point(omega.chart)
        records["nullity_at_point"] = pointwise_nullity(omega, point)
        records["transversality"] = transversality_check(omega, point)
    table = make_table(
        ["m", "count", "expected dim", "local dim", "admissible", "transversal"],
        [
            [s.m, s.count, s.expected_dim, s.local_dim, s.admissible, f"{s.transversal_points}/{s.checked_points}"]
            for s in report.strata
        ],
    )
    return Outcome(records, {"census": table}, report.nice)


def run_whitney(ctx: CommandContext) -> Outcome:
    settings = ctx.settings.app
    if ctx.flag("cusp"):
        higher, lower, tangent, sequences = cusp_family()
        report = whitney_check(higher, lower, (0.0, 0.0, 0.0), tangent, sequences, settings.whitney, settings.numeric, ctx.seed)
    else:
        omega = ctx.form()
        high, low = ctx.option("higher"), ctx.option("lower")
        if high is None:
            raise ValueError("whitney needs --higher (and usually --lower) nullities")
        higher = ImplicitStratum(omega, int(high))
        lower = ImplicitStratum(omega, int(low)) if low is not None else None
        point = [float(c) for c in ctx.point(omega.chart)]
        report = whitney_check(higher, lower, point, settings=settings.whitney, numeric=settings.numeric, seed=ctx.seed)
    table = make_table(
        ["sequence", "limit A", "verdict A", "limit B", "verdict B"],
        [[r.index, r.limit_a, r.verdict_a, r.limit_b, r.verdict_b] for r in report.sequences],
    )
    passed = report.condition_a is Verdict.PASS and report.condition_b is Verdict.PASS
    return Outcome({"whitney": report}, {"sequences": table}, passed)


def run_realize(ctx: CommandContext) -> Outcome:
    text = ctx.option("Q")
    if text is None:
        raise ValueError("realize needs --Q, rows separated by ';'")
    q = SkewForm.from_rows([list(parse_point(row)) for row in str(text).split(";")])
    chart = Chart(tuple(f"x{i + 1}" for i in range(q.n)))
    x0 = ctx.point(chart)
    omega = realize_form_at_point(q, x0, chart)
    value = omega.form.matrix_at(x0)
    records = {
        "form": omega.to_text(),
        "point": [str(c) for c in x0],
        "closed": True,
        "value_matches": value == q.entries,
        "nullity": nullity(q),
        "pfaffian": str(pfaffian(q)) if q.n % 2 == 0 else None,
    }
    return Outcome(records, passed=records["value_matches"])


def run_gotay(ctx: CommandContext) -> Outcome:
    omega = ctx.form()
    polarization = ctx.polarization(omega, ctx.point(omega.chart))
    gotay = gotay_form(polarization, fiber_order=ctx.settings.app.jets.fiber_order)
    integrable = frobenius_check(polarization.f_frame, seed=ctx.seed)
    stabilizations = [stabilize(polarization, int(k))[1] for k in csv_to_list(str(ctx.option("stabilize", "1,2,5")))]
    records = {
        "form": omega.to_text(),
        "base_point": [str(c) for c in polarization.base_point],
        "f_frame": polarization.f_frame.to_text(),
        "g_frame": polarization.g_frame.to_text(),
        "integrable": integrable,
        "chart": list(gotay.chart.coord_names),
        "gotay_form": gotay.to_text(),
        "virtual_dim": polarization.virtual_dim,
        "stabilization": stabilizations,
    }
    table = make_table(
        ["dim", "rank G", "vir.dim"],
        [[polarization.omega.dim, polarization.g_rank, polarization.virtual_dim]]
        + [[s.dim_after, s.rank_after, s.after] for s in stabilizations],
    )
    passed = integrable and all(s.before == s.after for s in stabilizations)
    return Outcome(records, {"stabilization": table}, passed)


def run_linf_verify(ctx: CommandContext) -> Outcome:
    jets = ctx.settings.app.jets
    structure = LinfStructure(ctx.vdata())
    arity = int(ctx.option("arity", jets.max_arity))
    report = linf_verify(structure, arity, int(ctx.option("trials", jets.trials)), ctx.seed)
    rows = bracket_table(structure, max_arity=min(arity, 2))
    table = make_table(["arity", "arguments", "value"], [[r.arity, ", ".join(r.arguments), r.value] for r in rows])
    records = {
        "poisson": structure.vdata.poisson.to_text(),
        "bracket_sign": structure.vdata.sign,
        "strict": strictness_check(structure),
        "passed": report.passed,
        "first_failure": report.first_failure,
        "exhausted_at": report.exhausted_at,
        "verification": report,
    }
    return Outcome(records, {"brackets": table}, report.passed)


def run_mc(ctx: CommandContext) -> Outcome:
    vdata = ctx.vdata()
    sigma = _element(ctx.option("sigma"), vdata)
    records: dict[str, Any] = {"sigma": sigma.to_text()}
    structure = LinfStructure(vdata)
    passed = True
    augment = ctx.option("augment")
    if augment:
        base = vdata.polarization.chart
        x = parse_field(str(augment), base)
        if not isinstance(x, MultiVector):
            raise ManifestError(f"--augment needs a vector field on {base.coord_names}")
        omega_ref = ctx.form("reference") if ctx.option("reference") else vdata.polarization.omega
        augmentation = curved_augmentation(omega_ref, vdata.polarization.f_frame, x, vdata)
        structure = LinfStructure(vdata, curvature=augmentation.element)
        records["augmentation"] = {
            "components": [str(c) for c in augmentation.components],
            "closed": augmentation.closed,
            "obstruction": list(augmentation.obstruction),
        }
        passed = augmentation.closed
        if ctx.option("point") is not None and augmentation.element is not None:
            point = ctx.point(base)
            records["tangent_complex"] = tangent_complex(
                structure, augmentation.element, point, ctx.settings.app.tangent_complex
            )
    result = mc_series(structure, sigma, int(ctx.option("arity", ctx.settings.app.jets.max_arity)))
    records["maurer_cartan"] = result
    return Outcome(records, passed=passed and result.coisotropic)


def run_connection(ctx: CommandContext) -> Outcome:
    omega = ctx.form()
    record = special_connection(omega, ctx.point(omega.chart))
    records = {
        "point": [str(c) for c in record.point],
        "kernel_dim": record.kernel_dim,
        "parallel": record.parallel,
        "obstruction_on_kernel_only": record.obstruction_on_kernel_only,
        "residual": [_matrix_text(m) for m in record.residual],
        "correction": [_matrix_text(m) for m in record.correction],
        "cutoff": record.cutoff,
    }
    passed = record.parallel or (record.kernel_dim > 0 and record.obstruction_on_kernel_only)
    return Outcome(records, passed=passed)


def run_moser(ctx: CommandContext) -> Outcome:
    settings = ctx.settings.app
    rng = np.random.default_rng(ctx.seed)
    samples = int(ctx.option("samples", settings.moser.samples))
    records: dict[str, Any] = {}
    if ctx.option("family") == "area":
        chart = Chart(("x1", "x2"))
        family = area_scaling_family(chart, parse_rational(ctx.option("rate", "1/2")))
        records["family"] = family.omega.to_text()
    else:
        manifest = ctx.require_manifest()
        omega = ctx.form()
        tube_name = ctx.option("tube") or next(iter(manifest.tubes), None)
        if tube_name is None:
            raise ManifestError("moser needs a tube (--tube) to interpolate along", expected=sorted(manifest.tubes))
        tube = manifest.tube(tube_name)
        family, interpolation = interpolate_forms(omega, tube, seed=ctx.seed, settings=settings.moser)
        records["interpolation"] = interpolation
        records["rescaling"] = rescaling_check(tube, omega)
    points = rng.uniform(-1.0, 1.0, size=(samples, family.chart.dim))
    steps = ctx.option("steps")
    result = moser_solve(family, points, int(steps) if steps is not None else None, settings.moser)
    if ctx.flag("reverse"):
        result = result.reversed()
    records["flow"] = result.summary()
    csv_path = ctx.option("csv")
    if csv_path:
        written = result.to_csv(csv_path, settings.report.csv_delimiter, settings.report.float_digits)
        records["csv"] = str(written)
    summary = records["flow"]
    return Outcome(records, passed=summary.within_tolerance and summary.converged)


def run_gauge(ctx: CommandContext) -> Outcome:
    vdata = ctx.vdata()
    text = ctx.option("xi")
    if not text:
        raise ValueError("gauge needs --xi, time coefficients separated by ';'")
    terms = [_element(part.strip(), vdata) for part in str(text).split(";")]
    delta_text = ctx.option("delta")
    delta0 = parse_field(str(delta_text), vdata.chart) if delta_text else vdata.poisson
    caps = ctx.option("caps")
    caps = JetOrder(*(int(c) for c in csv_to_list(str(caps)))) if caps else None
    steps = ctx.option("steps")
    _, family, report = gauge_flow(vdata, terms, delta0, int(steps) if steps else None, caps, ctx.settings.app.gauge)
    table = make_table(["t", "Delta_t"], list(zip(report.times, report.deltas)))
    tolerance = ctx.settings.app.moser.residual_tolerance
    passed = report.phi_identity_at_zero and report.phi_defect <= tolerance and report.kernel_preserved
    return Outcome({"xi": [t.to_text() for t in family.terms], "gauge": report}, {"deltas": table}, passed)


def run_glue(ctx: CommandContext) -> Outcome:
    manifest = ctx.require_manifest()
    lower_name, higher_name = ctx.option("lower"), ctx.option("higher")
    if not lower_name or not higher_name:
        raise ValueError("glue needs --lower and --higher forms")

    def vdata_of(name: str) -> VData:
        return CommandContext(manifest, ctx.settings, {**ctx.options, "form": name, "point": None, "polarization": None}, ctx.seed).vdata()

    def tube_of(option: str):
        name = ctx.option(option)
        return manifest.tube(name) if name else None

    lower, higher = vdata_of(lower_name), vdata_of(higher_name)
    samples = int(ctx.option("samples", 3))
    direct, record = glue_morphism(lower, higher, tube_of("tube"), samples=samples, seed=ctx.seed)
    records: dict[str, Any] = {"morphism": record}
    passed = record.chain_map
    middle_name = ctx.option("middle")
    if middle_name:
        middle = vdata_of(middle_name)
        first, first_record = glue_morphism(lower, middle, tube_of("lower_tube"), samples=samples, seed=ctx.seed)
        second, second_record = glue_morphism(middle, higher, tube_of("upper_tube"), samples=samples, seed=ctx.seed)
        composition = composition_check(first, second, direct, samples=samples, seed=ctx.seed)
        records.update({"lower_to_middle": first_record, "middle_to_higher": second_record, "composition": composition})
        passed = passed and first_record.chain_map and second_record.chain_map and composition.holds
    return Outcome(records, passed=passed)


def run_directed_check(ctx: CommandContext) -> Outcome:
    report = directed_extension_check(
        parse_rational(ctx.option("c", 1)), parse_rational(ctx.option("C", 1)), int(ctx.option("samples", 20))
    )
    return Outcome({"directedness": report}, passed=report.directed)


COMMANDS: dict[str, Callable[[CommandContext], Outcome]] = {
    "dims": run_dims,
    "stratify": run_stratify,
    "whitney": run_whitney,
    "realize": run_realize,
    "gotay": run_gotay,
    "linf-verify": run_linf_verify,
    "mc": run_mc,
    "connection": run_connection,
    "moser": run_moser,
    "gauge": run_gauge,
    "glue": run_glue,
    "directed-check": run_directed_check,
}


def run(
    command: str,
    manifest: Manifest | None = None,
    options: Mapping[str, Any] | None = None,
    settings: Settings | None = None,
) -> Report:
    """Dispatch ``command`` and wrap its outcome, settings and logged warnings in a Report."""
    if command not in COMMANDS:
        raise ValueError(f"Unknown command {command!r}; expected one of {sorted(COMMANDS)}")
    settings = settings or Settings()
    options = {k: v for k, v in (options or {}).items() if v is not None}
    seed = int(options["seed"]) if "seed" in options else settings.effective_seed
    context = CommandContext(manifest, settings, options, seed)
    logger.info(f"Running {command} with {options}")
    with collect_warnings() as warnings:
        outcome = COMMANDS[command](context)
    if not outcome.passed:
        logger.warning(f"{command}: verification failed")
    return Report(
        command=command,
        arguments={k: str(v) for k, v in sorted(options.items())},
        settings=settings.model_dump(mode="json"),
        records=outcome.records,
        tables=outcome.tables,
        warnings=list(warnings),
        provenance=provenance(seed),
        passed=outcome.passed,
    )
