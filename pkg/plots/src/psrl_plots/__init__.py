from psrl_plots.render import PlotSpec, SchemaError, panel_curves, render, runtime_tables

__version__ = "0.1.0"

__all__ = ["PlotSpec", "SchemaError", "panel_curves", "render", "runtime_tables"]
