"""Built-in step functions that chains reference by name.

Each function takes a StepContext and returns its step output: monitor
functions read the world, analyze functions run a learner, plan functions
emit ActionProposal lists, knowledge stores the tick record. Scenario
services (models, feeds, catalogs) are bound per instance at instantiation.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from . import engines, metrics, sdi
from .chain import ActionProposal, AnalysisOutput, catalog_translate


class TrafficFeed:
    """Per-minute traffic means plus how far the simulation clock has
    advanced into them. t=0 corresponds to minute index `offset`."""

    def __init__(self, values, offset: int = 0):
        self.values = np.asarray(getattr(values, "values", values), dtype=float)
        self.offset = offset

    def index_at(self, t_ms: int) -> int:
        return min(self.offset + t_ms // 60_000, len(self.values))

    def window_at(self, t_ms: int, window: int) -> np.ndarray:
        end = self.index_at(t_ms)
        if end < window:
            raise ConfigError(f"feed has only {end} minutes, need a window of {window}")
        return self.values[end - window:end]


def monitor_scrape_frame(ctx):
    """Scrape one metric frame; services: metric_catalog, workload (TimeSeries)."""
    catalog = ctx.services["metric_catalog"]
    workload = ctx.services["workload"]
    idx = min(int(ctx.t_ms // 1000), len(workload.values) - 1)
    return metrics.scrape(ctx.state, workload.values[idx], catalog, workload.t[idx])


def monitor_traffic_window(ctx):
    """Last `window` per-minute traffic means; services: traffic_feed."""
    feed = ctx.services["traffic_feed"]
    return feed.window_at(ctx.t_ms, int(ctx.params.get("window", 30)))


def monitor_knob_value(ctx):
    return sdi.get_knob(ctx.state, ctx.params["node"], ctx.params["parameter"])


def analyze_encode_frame(ctx):
    """Compress the monitored frame; services: compressor, scaler."""
    frame = next(iter(ctx.inputs.values()))
    net = ctx.services["compressor"]
    scaler = ctx.services["scaler"]
    return engines.encode(net, scaler.transform(frame.values))


def analyze_forecast_traffic(ctx):
    """Forecast the horizon ahead and summarise it for planning; services:
    predictor. The aggregate defaults to the forecast max (provision for the
    worst upcoming minute)."""
    window = next(iter(ctx.inputs.values()))
    model = ctx.services["predictor"]
    forecast = engines.rnn_predict(model, window)
    agg = ctx.params.get("aggregate", "max")
    value = float(forecast.max() if agg == "max" else forecast.mean())
    return AnalysisOutput(kind=ctx.params.get("kind", "traffic.forecast"), value=value)


def plan_catalog_translate(ctx):
    """Turn the analysis output into knob proposals via the action catalog;
    services: action_catalog."""
    output = next((v for v in ctx.inputs.values() if isinstance(v, AnalysisOutput)), None)
    if output is None:
        return []
    catalog = ctx.services["action_catalog"]
    return catalog_translate(catalog, output, ctx.instance.chain.destination_domain,
                             ctx.state, issued_by=ctx.instance.chain.id,
                             timestamp=ctx.t_ms)


def plan_knob_setpoint(ctx):
    """Propose a fixed set-point for one knob (params: node, parameter,
    value). Emits nothing when the knob already sits at the set-point."""
    node = ctx.params["node"]
    parameter = ctx.params["parameter"]
    value = float(ctx.params["value"])
    current = sdi.get_knob(ctx.state, node, parameter)
    delta = value - current
    if delta == 0:
        return []
    return [ActionProposal(
        target=node, parameter=parameter, value=value,
        direction=1 if delta > 0 else -1,
        issued_by=ctx.instance.chain.id, timestamp=ctx.t_ms,
    )]


def knowledge_store(ctx):
    """Append this tick's inputs to the instance knowledge store."""
    record = {"t_ms": ctx.t_ms, "inputs": dict(ctx.inputs)}
    ctx.instance.knowledge.append(record)
    return record


def build_default_registry():
    from .control import FunctionRegistry

    registry = FunctionRegistry()
    registry.register("monitor.scrape_frame", monitor_scrape_frame)
    registry.register("monitor.traffic_window", monitor_traffic_window)
    registry.register("monitor.knob_value", monitor_knob_value)
    registry.register("analyze.encode_frame", analyze_encode_frame)
    registry.register("analyze.forecast_traffic", analyze_forecast_traffic)
    registry.register("plan.catalog_translate", plan_catalog_translate)
    registry.register("plan.knob_setpoint", plan_knob_setpoint)
    registry.register("knowledge.store", knowledge_store)
    return registry
