"""hlsdbg: a desk-scale workbench for HLS logic-bug injection, localization, and repair."""

__version__ = "0.1.0"
