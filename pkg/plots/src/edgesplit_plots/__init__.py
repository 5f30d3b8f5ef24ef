"""Figure rendering for edgesplit benchmark CSV outputs."""

from .schema import RESULT_COLUMNS, TRACE_COLUMNS, SchemaError, load_rows
from .render import FIGURES, render

__version__ = "0.1.0"
