import logging
import sys
from pathlib import Path

from presymplectic_strata.core import cli, config
from presymplectic_strata.core.commands import resolve_manifest, run
from presymplectic_strata.core.reporting import render_report
from presymplectic_strata.errors import StrataError
from presymplectic_strata.utils.logs import init_logging_config

# Exit status for malformed input: manifest, settings or options
INPUT_ERROR = 2


def main(argv: list[str] | None = None) -> int:
    """Run one command; exit 0 when it passes, 1 when a verification fails, 2 on bad input."""
    # ---------- Initialization ----------
    cli_args = cli.parse_cli_args(argv)
    logger = logging.getLogger(config.LOGGER_NAME)

    try:
        # -------- Loading Settings ----------
        toml_file = (cli_args.get("toml_file") or "").strip("'\"")  # clean quotes if any
        if toml_file and not Path(toml_file).is_file():
            raise FileNotFoundError(f"Config error: settings file not found: {toml_file}")
        runtime_settings = config.load_settings_from_toml(toml_file or None)

        # -------- Create Logger ----------
        logger = init_logging_config(config=runtime_settings.app.logging, console=cli_args.get("console"))

        # ---------- Run ----------
        manifest = resolve_manifest(cli_args.get("model"), cli_args.get("manifest"))
        options = {k: v for k, v in cli_args.items() if k not in cli.RUN_KEYS}
        report = run(cli_args["command"], manifest, options, runtime_settings)
        text = render_report(report, runtime_settings.app.report)
    except (StrataError, ValueError, OSError) as e:
        logger.error(f"Input error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return INPUT_ERROR

    output = cli_args.get("output")
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text, encoding="utf-8")
        logger.info(f"Report written to {output}")
    else:
        sys.stdout.write(text)
    logger.info(f"{report.command}: {report.status}")
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
