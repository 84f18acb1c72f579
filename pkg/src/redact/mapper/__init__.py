"""Implementing a module on a fabric: mapping, packing, routing and bitstreams."""

from .bitgen import emit_bitstream, pin_map
from .fit import FitReport, Implementation, fit_search, implement, verify_configured
from .pack import Placement, pack_place
from .route import RoutingResult, check_routing, route
from .techmap import MappedDesign, tech_map

__all__ = [
    "FitReport", "Implementation", "MappedDesign", "Placement", "RoutingResult",
    "check_routing", "emit_bitstream", "fit_search", "implement", "pack_place",
    "pin_map", "route", "tech_map", "verify_configured",
]
