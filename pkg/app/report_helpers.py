"""
Report helper functions.
Handles number formatting, improvement percentages and template rendering.
"""

import math
from pathlib import Path
from typing import Optional

from jinja2 import Environment, FileSystemLoader, StrictUndefined

TEMPLATES_DIR = Path(__file__).parent / "templates"

_environment = None


def get_environment() -> Environment:
    """Shared Jinja2 environment over app/templates"""
    global _environment
    if _environment is None:
        _environment = Environment(
            loader=FileSystemLoader(str(TEMPLATES_DIR)),
            undefined=StrictUndefined,
            keep_trailing_newline=True,
            trim_blocks=True,
            lstrip_blocks=True,
        )
        _environment.filters["meters"] = format_meters
        _environment.filters["pct"] = format_pct
    return _environment


def render_template(name: str, **context) -> str:
    return get_environment().get_template(name).render(**context)


def improvement_pct(ours: float, baseline: float) -> Optional[float]:
    """
    Percentage improvement of ours over baseline.

    Rules:
    - (1 - ours / baseline) * 100, positive when ours is smaller
    - None when the baseline is 0 or either value is not finite
    """
    if not (math.isfinite(ours) and math.isfinite(baseline)) or baseline == 0:
        return None
    return (1.0 - ours / baseline) * 100.0


def format_meters(value: float) -> str:
    """
    Format a length in meters for tables.
    Returns: "0.012345" format, "n/a" for missing values
    """
    if value is None or not math.isfinite(value):
        return "n/a"
    return f"{value:.6f}"


def format_pct(value: Optional[float]) -> str:
    """
    Format a percentage.
    Returns: "53.10" format, "n/a" when undefined
    """
    if value is None or not math.isfinite(value):
        return "n/a"
    if round(value, 2) == 0:
        return "0.00"
    return f"{value:.2f}"


def format_ms(value: float) -> str:
    return f"{value:.1f}"