"""Functional and timing simulator for a radix-encoded spiking CNN accelerator."""

__version__ = "0.1.0"
