import re

from sympy import Rational

_INTERVAL = re.compile(r"\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]")


def csv_to_list(csv_string: str) -> list:
    """
    Converts a comma-separated string to a list of strings.

    Args:
        csv_string: A string of comma-separated values.

    Returns:
        A list of strings.
    """
    csv_list = [item.strip().strip(" \"'") for item in csv_string.split(",")]

    # Remove empty strings from list
    csv_list = list(filter(None, csv_list))
    return csv_list


def parse_rational(text: str) -> Rational:
    """Exact rational from ``"3/4"``, ``"-2"`` or ``"0.25"``."""
    try:
        return Rational(str(text).strip())
    except (TypeError, ValueError):
        raise ValueError(f"Not a rational number: {text!r}") from None


def parse_point(csv_string: str) -> tuple[Rational, ...]:
    """Parse ``"0, 1/2, -3"`` into exact rational coordinates."""
    return tuple(parse_rational(item) for item in csv_to_list(csv_string))


def parse_box(box_string: str) -> tuple[tuple[Rational, Rational], ...]:
    """
    Parse a box written either as a power ``[-1,1]^4`` or as a product
    ``[-1,1]x[0,2]x[-1/2,1/2]``.

    Raises:
        ValueError: If the string is not a box or an interval is empty.
    """
    box_string = box_string.strip()
    power = re.fullmatch(r"(\[[^\]]*\])\s*\^\s*(\d+)", box_string)
    if power:
        intervals = [power.group(1)] * int(power.group(2))
    else:
        intervals = [part.strip() for part in box_string.split("x")]

    box = []
    for interval in intervals:
        match = _INTERVAL.fullmatch(interval)
        if not match:
            raise ValueError(f"Invalid box interval: {interval!r}")
        lo, hi = parse_rational(match.group(1)), parse_rational(match.group(2))
        if lo >= hi:
            raise ValueError(f"Empty box interval: {interval!r}")
        box.append((lo, hi))
    return tuple(box)
