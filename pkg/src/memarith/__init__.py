"""Memristance-domain analog arithmetic: device model, programming loop,
read-out circuits and an expression compiler on top of them."""

from .device import DeviceParams, DeviceState, Window, memristance, state_for
from .programmer import ProgrammerConfig, program
from .blocks import ReadPulse, BlockResult, OpampModel, Mode
from .compiler import parse, check_ranges, lower, execute, compile_expression

__version__ = "0.1.0"
