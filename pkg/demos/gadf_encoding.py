"""Turn a short time series into a Gramian Angular Difference Field.

Run: python demos/gadf_encoding.py [output.pgm]
"""

import sys

import numpy as np

from gaf_attn.dataset import EegSegment
from gaf_attn.gaf import EncodeOptions, encode_trial, export_pgm, gadf_matrix, rescale, to_polar

t = np.linspace(0, 2, 256, endpoint=False)
series = np.sin(2 * np.pi * 1.5 * t) + 0.3 * np.sin(2 * np.pi * 5 * t)

# Rescaling pins the extremes to -1 and 1, then each value becomes an angle.
x = rescale(series)
polar = to_polar(x)
print(f"rescaled range [{x.min():.1f}, {x.max():.1f}], angles in [{polar.phi.min():.2f}, {polar.phi.max():.2f}]")

g = gadf_matrix(x)
print(f"GADF {g.shape}: diagonal max {np.abs(np.diag(g)).max():.1e}, antisymmetry max {np.abs(g + g.T).max():.1e}")

# A trial stacks one field per channel. PAA shrinks 256 samples to 64 first.
channels = np.stack([np.roll(series, 8 * c) for c in range(14)])
image = encode_trial(EegSegment(channels, score=75.0), EncodeOptions(paa_target=64))
print(f"trial image: {image.data.shape} (channels, k, k)")

out = sys.argv[1] if len(sys.argv) > 1 else "gadf_channel0.pgm"
export_pgm(image, 0, out)
print(f"wrote channel 0 to {out}")
