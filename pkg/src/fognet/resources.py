"""Abstract resource classes and the per-technology capacity view.

The per-technology controllers summarize raw link state into one
`AbstractResourceView`; everything above them (flow control, slicing)
reasons over these aggregates instead of individual links.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict


class ResourceClass:
    MACRO = "Macro"
    WLAN = "Wlan"
    MIDDLE_MILE = "MiddleMile"
    BACKHAUL = "Backhaul"

    ALL = (MACRO, WLAN, MIDDLE_MILE, BACKHAUL)


@dataclass(frozen=True)
class RatView:
    """Aggregate state of one access technology."""

    total_capacity: Fraction
    reserved_gbr: Fraction
    best_effort_load: Fraction
    up: bool

    def headroom(self) -> Fraction:
        return self.total_capacity - self.reserved_gbr - self.best_effort_load


@dataclass
class AbstractResourceView:
    """Capacity/load abstraction per resource class.

    Regenerable from raw link state at any time; holds no state of its own.
    """

    rats: Dict[str, RatView] = field(default_factory=dict)

    def total(self, cls: str) -> Fraction:
        view = self.rats.get(cls)
        return view.total_capacity if view else Fraction(0)

    def reserved(self, cls: str) -> Fraction:
        view = self.rats.get(cls)
        return view.reserved_gbr if view else Fraction(0)

    def load(self, cls: str) -> Fraction:
        view = self.rats.get(cls)
        return view.best_effort_load if view else Fraction(0)
