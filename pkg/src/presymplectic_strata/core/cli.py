import os
import argparse

from presymplectic_strata.core.commands import BUILTIN_MODELS

# Keys of parse_cli_args() that configure the run rather than the command
RUN_KEYS = ("command", "toml_file", "manifest", "model", "output", "console")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-t",
        "--toml-file",
        dest="toml_file",
        default=os.getenv("STRATA_CONFIG_TOML", ""),
        type=str,
        help="Path to .toml file with settings overriding the packaged defaults.",
    )
    source = common.add_mutually_exclusive_group()
    source.add_argument("-m", "--manifest", dest="manifest", type=str, help="Path to a manifest file.")
    source.add_argument("--model", dest="model", choices=sorted(BUILTIN_MODELS), help="Built-in model manifest.")
    common.add_argument("--seed", dest="seed", type=int, help="Random seed (default: settings).")
    common.add_argument("-o", "--output", dest="output", type=str, help="Write the report here instead of stdout.")
    common.add_argument("--console", dest="console", action="store_true", default=None, help="Also log to stderr.")
    return common


def build_parser() -> argparse.ArgumentParser:
    """
    Creates the argument parser with one subcommand per report.

    Options left unset are None so manifest ``set`` parameters and settings can fill them.

    Returns:
        argparse.ArgumentParser: An argument parser object.
    """
    parser = argparse.ArgumentParser(
        prog="presymplectic-strata",
        description="Nullity strata, foliations and L-infinity checks for presymplectic forms",
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    def form_option(p: argparse.ArgumentParser) -> None:
        p.add_argument("--form", dest="form", help="Manifest form name (default: omega).")

    def point_option(p: argparse.ArgumentParser) -> None:
        p.add_argument("--point", dest="point", help="Manifest point name or comma-separated rationals.")

    dims = command("dims", "Stratum dimensions of skew forms on R^N")
    dims.add_argument("--N", dest="N", type=int, required=True)
    dims.add_argument("--oracle", dest="oracle", action="store_true", default=None, help="Cross-check by rank.")

    stratify = command("stratify", "Sampled nullity census and niceness verdict")
    form_option(stratify)
    point_option(stratify)
    stratify.add_argument("--box", dest="box", help="Manifest box name or a box like [-1,1]^4.")
    stratify.add_argument("--samples", dest="samples", type=int)
    stratify.add_argument("--transversality-points", dest="transversality_points", type=int)

    whitney = command("whitney", "Whitney conditions A and B between two strata")
    form_option(whitney)
    point_option(whitney)
    whitney.add_argument("--cusp", dest="cusp", action="store_true", default=None, help="Use the cusp family.")
    whitney.add_argument("--higher", dest="higher", type=int, help="Nullity of the higher stratum.")
    whitney.add_argument("--lower", dest="lower", type=int, help="Nullity of the lower stratum.")

    realize = command("realize", "Closed form with a prescribed value at a point")
    realize.add_argument("--Q", dest="Q", help="Skew matrix, rows separated by ';'.")
    point_option(realize)

    gotay = command("gotay", "Polarization, Gotay form and stabilization")
    form_option(gotay)
    point_option(gotay)
    gotay.add_argument("--polarization", dest="polarization", help="Manifest polarization name.")
    gotay.add_argument("--stabilize", dest="stabilize", help="Comma-separated k values (default 1,2,5).")

    linf = command("linf-verify", "Derived brackets and the L-infinity relations")
    form_option(linf)
    linf.add_argument("--polarization", dest="polarization")
    linf.add_argument("--arity", dest="arity", type=int)
    linf.add_argument("--trials", dest="trials", type=int)

    mc = command("mc", "Maurer-Cartan series of a foliation 1-form")
    form_option(mc)
    point_option(mc)
    mc.add_argument("--polarization", dest="polarization")
    mc.add_argument("--sigma", dest="sigma", help="Element on the Gotay chart (default 0).")
    mc.add_argument("--augment", dest="augment", help="Vector field X curving the structure by X -| omega.")
    mc.add_argument("--reference", dest="reference", help="Manifest form used as omega_ref.")
    mc.add_argument("--arity", dest="arity", type=int)

    connection = command("connection", "Special connection and its obstruction at a point")
    form_option(connection)
    point_option(connection)

    moser = command("moser", "Moser flow of an interpolating family")
    form_option(moser)
    moser.add_argument("--family", dest="family", choices=["area"], help="Built-in family instead of a tube.")
    moser.add_argument("--rate", dest="rate")
    moser.add_argument("--tube", dest="tube", help="Manifest tube name.")
    moser.add_argument("--samples", dest="samples", type=int)
    moser.add_argument("--steps", dest="steps", type=int)
    moser.add_argument("--csv", dest="csv", help="Write trajectories to this CSV file.")
    moser.add_argument("--reverse", dest="reverse", action="store_true", default=None)

    gauge = command("gauge", "Gauge flow of the Poisson bivector")
    form_option(gauge)
    gauge.add_argument("--polarization", dest="polarization")
    gauge.add_argument("--xi", dest="xi", help="Time coefficients of xi_t separated by ';'.")
    gauge.add_argument("--delta", dest="delta", help="Initial bivector (default: the Poisson bivector).")
    gauge.add_argument("--steps", dest="steps", type=int)
    gauge.add_argument("--caps", dest="caps", help="Jet caps 'base,fiber'.")

    glue = command("glue", "Gluing morphism between two strata")
    glue.add_argument("--lower", dest="lower", help="Manifest form of the lower stratum.")
    glue.add_argument("--higher", dest="higher", help="Manifest form of the higher stratum.")
    glue.add_argument("--tube", dest="tube")
    glue.add_argument("--middle", dest="middle", help="Intermediate form for the composition check.")
    glue.add_argument("--lower-tube", dest="lower_tube")
    glue.add_argument("--upper-tube", dest="upper_tube")
    glue.add_argument("--samples", dest="samples", type=int)

    directed = command("directed-check", "Forward smoothness of the directed extension")
    directed.add_argument("--c", dest="c")
    directed.add_argument("--C", dest="C")
    directed.add_argument("--samples", dest="samples", type=int)

    return parser


def parse_cli_args(argv: list[str] | None = None) -> dict:
    """
    Parses the command line.

    Returns:
        dict: Parsed arguments; the command options are every key not in RUN_KEYS.
    """
    args = build_parser().parse_args(argv)
    return vars(args)
