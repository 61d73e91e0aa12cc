"""Minimal incompatibility robustness needed for a given CHSH value.

Scans the violation K between the local bound and the quantum maximum and
prints the direct lower bound, then the largest violation reachable at a
fixed robustness.

Run: python3 demos/chsh_violation_curve.py
"""
import numpy as np

from mmmbounds.bell import get_functional
from mmmbounds.quantifiers import ir_given_violation, max_violation

chsh = get_functional("chsh")
print(f"{'K':>7} {'min IR':>10}")
for K in np.linspace(2.0, 2.82, 9):
    print(f"{K:7.3f} {ir_given_violation(chsh, K, 1).value:10.6f}")

print(f"\n{'IR0':>7} {'max K':>10}")
for ir0 in (0.0, 0.05, 0.1, 3 - 2 * np.sqrt(2)):
    print(f"{ir0:7.4f} {max_violation(chsh, ir0, 1).value:10.6f}")
