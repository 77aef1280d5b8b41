"""Phase-field two-phase flow with electrowetting, and neural surrogates for it."""

__version__ = "0.1.0"
