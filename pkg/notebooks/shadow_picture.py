"""Render {alpha > 0.3} for a Bargmann-Fock sample on a 512 x 512 pixel window.

    python notebooks/shadow_picture.py [outdir]

Black pixels are shaded points (alpha > 0.3), white pixels are lit.
"""

import sys
from pathlib import Path

import numpy as np

from shadowperc import gridio, kernel, percolation, shadow
from shadowperc.sampler import Window

out = Path(sys.argv[1] if len(sys.argv) > 1 else "shadow_picture")
out.mkdir(parents=True, exist_ok=True)

k = kernel.bargmann_fock()
w = Window.from_rect(0, 0, 127.75, 127.75, 0.25)
horizon = 16.0
noise = shadow.noise_for_shadow(w, k, horizon, seed=1, stream=0)
sf = shadow.continuous_alpha(noise, k, w, horizon)

img = percolation.render_mask(sf, 0.3)
gridio.write_pgm(out / "alpha.pgm", img)
print(f"{img.shape[1]}x{img.shape[0]} pixels, {np.mean(img == 0):.1%} black")

# horizontal crossing of the lit set {alpha <= 0.3} on the lattice
m = percolation.threshold(sf, 0.3, "<=")
print("lit set crosses left to right:", percolation.has_crossing(m, None, "h"))
print("largest lit cluster:", percolation.label_clusters(m).sizes.max(), "sites")
