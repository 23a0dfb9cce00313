"""Flicker severity of amplitude-modulated, clipped-cosine supply voltages."""

__version__ = "0.1.0"

from .flickermeter import Flickermeter, FlickermeterConfig, measure_pst  # noqa: E402
from .signals import CarrierSpec, ModulatingSpec, SignalBuffer, modulate, synthesize_carrier, synthesize_modulating, thd  # noqa: E402

__all__ = [
    "CarrierSpec",
    "Flickermeter",
    "FlickermeterConfig",
    "ModulatingSpec",
    "SignalBuffer",
    "measure_pst",
    "modulate",
    "synthesize_carrier",
    "synthesize_modulating",
    "thd",
]
