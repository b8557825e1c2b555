"""Localization and tracking of RIS-equipped users from OFDM probing.

One single-antenna transmitter illuminates moving reconfigurable intelligent
surfaces (RISs); several single-antenna receivers observe the reflections.
The package synthesizes the received frames, estimates delay, Doppler and the
sum-of-cosines angle parameter per (RIS, receiver), localizes each RIS by
least squares, tracks it with an extended Kalman filter and evaluates the
Fisher-information bounds of the setup.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("ris-track")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = ["__version__"]
