"""Multipath radio tomographic imaging: simulation, reconstruction and localization."""

from .channel import WaveformSpec
from .geometry import NodePlacement, Scene, trace_pathways
from .pipeline import Scenario, Simulator, position_grid
from .rti import ElasticNetConfig, elastic_net

__version__ = "0.1.0"
__all__ = ["ElasticNetConfig", "NodePlacement", "Scenario", "Scene", "Simulator", "WaveformSpec", "elastic_net",
           "position_grid", "trace_pathways"]
