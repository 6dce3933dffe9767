"""Unit constants for writing sequences in physical units.

Times are seconds, frequencies Hz, voltages volts.  Import these into
sequence scripts so durations read like ``250 * us`` or ``80 * MHz``.
"""

ns = 1e-9
us = 1e-6
ms = 1e-3
s = 1.0

Hz = 1.0
kHz = 1e3
MHz = 1e6
GHz = 1e9

mV = 1e-3
V = 1.0

# dBm values are plain floats; the constant exists so scripts can write
# ``-18 * dBm`` and stay explicit about the scale.
dBm = 1.0
