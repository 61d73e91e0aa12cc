"""Device-level quantifiers of a few qubit measurement pairs.

Each variant is evaluated directly on the measurement operators, no Bell
scenario involved. The pair {X, Z} has IR = 3 - 2 sqrt(2) and
IRR = sqrt(2) - 1.

Run: python3 demos/device_quantifiers.py
"""
import numpy as np

from mmmbounds.oracle import VARIANTS, pauli, variant_device

I, X, _, Z = pauli()


def spectral(O, eta=1.0):
    return [(I + eta * O) / 2, (I - eta * O) / 2]


pairs = {
    "X, Z": [spectral(X), spectral(Z)],
    "X, (X+Z)/sqrt2": [spectral(X), spectral((X + Z) / np.sqrt(2))],
    "noisy X, Z (eta=0.8)": [spectral(X, 0.8), spectral(Z, 0.8)],
}
print(f"{'pair':<22}" + "".join(f"{v:>10}" for v in VARIANTS))
for name, meas in pairs.items():
    vals = [variant_device(v, meas, 2).value for v in VARIANTS]
    print(f"{name:<22}" + "".join(f"{x:10.5f}" for x in vals))
