"""Load-forecast robustness toolkit.

Trains ReLU feedforward load forecasters, computes globally optimal
integrity (bounded perturbation) and availability (feature blocking)
attacks against them by branch-and-bound over big-M MILP encodings, and
hardens them with adversarial training driven by an exact inner solver.
"""

__version__ = "0.1.0"

FILE_FORMAT_VERSION = 1
