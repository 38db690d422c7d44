"""Behind-the-meter solar reconstruction from net-metered interval data.

The pipeline estimates how much PV generation hides behind net meters:
weather-weighted similarity picks non-solar look-alikes for each solar
customer, their average consumption stands in for the solar customer's
native load, and the gap between metered and estimated consumption is
re-attributed to generation. A synthetic generator with known ground
truth validates the whole chain, and a scenario builder re-aggregates
customers to target penetration levels.
"""

__version__ = "0.1.0"

from .core import (
    Calendar,
    Channel,
    CustomerKind,
    CustomerRecord,
    Dataset,
    DaytimeSpec,
    DaytimeWindow,
    IntervalSeries,
    SignConvention,
    build_calendar,
    canonicalize_signs,
)
from .errors import PipelineError
from .weather import DailyWeight, WeatherGroup, WeatherTable, WeightSeries

__all__ = [
    "Calendar",
    "Channel",
    "CustomerKind",
    "CustomerRecord",
    "DailyWeight",
    "Dataset",
    "DaytimeSpec",
    "DaytimeWindow",
    "IntervalSeries",
    "PipelineError",
    "SignConvention",
    "WeatherGroup",
    "WeatherTable",
    "WeightSeries",
    "build_calendar",
    "canonicalize_signs",
    "__version__",
]
