"""Incompatibility robustness certified by tilted CHSH correlations.

For each tilt alpha the maximally violating qubit realization is built, its
correlation table is fed to the device-independent bound for Bob's pair and
the result is compared with the robustness of the pair itself.

Run: python3 demos/tilted_chsh_tradeoff.py [level]
"""
import sys

import numpy as np

from mmmbounds.algebra import Scenario
from mmmbounds.oracle import born_rule, tilted_chsh_realization, variant_device
from mmmbounds.quantifiers import variant_di_given_P

level = sys.argv[1] if len(sys.argv) > 1 else "1"
scenario = Scenario.bell(2, 2)
print(f"{'alpha':>6} {'DI bound':>10} {'device':>10}")
for alpha in np.linspace(0, 1, 6):
    r, _ = tilted_chsh_realization(alpha)
    di = variant_di_given_P("IR", scenario, born_rule(r), level, party="B")
    dev = variant_device("IR", r.measurements[1], 2)
    print(f"{alpha:6.2f} {di.value:10.6f} {dev.value:10.6f}")
