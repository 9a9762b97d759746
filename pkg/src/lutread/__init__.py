"""Co-design toolkit for LUT-mapped qubit-readout classifiers.

End-to-end desk-scale flow: labeled I/Q trace datasets, a bit-exact
integrator preprocessor, fan-in-constrained truth-table networks,
analytic area/latency cost models, a differential-evolution joint
search, and HDL emission verified by a built-in netlist interpreter.
"""

__version__ = "0.1.0"
