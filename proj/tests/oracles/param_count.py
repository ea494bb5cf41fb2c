#!/usr/bin/env python3
"""Independent parameter count for the enhancer, walked layer by layer."""
import sys


def count(hidden=48, depth=5, kernel=8, growth=2, squeeze=2, lstm_layers=2, lstm_hidden=None):
    chans = [hidden * growth ** i for i in range(depth)]
    total = 0
    for i, c in enumerate(chans):
        cin = 1 if i == 0 else chans[i - 1]
        total += cin * c * kernel + c            # strided conv
        total += 2 * c * c + 2 * c               # 1x1 conv before GLU
        total += (c // squeeze) * c + c // squeeze  # channel squeeze
        total += c * (c // squeeze) + c          # channel excite
        total += c + 1                           # sequence attention
    cb = chans[-1]
    h = lstm_hidden or cb
    for layer in range(lstm_layers):
        din = cb if layer == 0 else 2 * h
        total += 2 * (4 * h * din + 4 * h * h + 4 * h)
    total += cb * 2 * h + cb                     # direction merge
    for i, c in enumerate(chans):
        cdown = 1 if i == 0 else chans[i - 1]
        total += 3 * (c * c + c)                 # skip fusion convs
        total += 2 * c * c + 2 * c               # 1x1 conv before GLU
        total += c * cdown * kernel + cdown      # transposed conv
    return total


if __name__ == "__main__":
    print("default", count())
    print("desk", count(hidden=16, depth=3))
    print("toy", count(hidden=4, depth=2))
    sys.exit(0)
