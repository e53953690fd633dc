"""Freeze the reference render of z_sem = 0 (noise off) used by the decode tests."""

from pathlib import Path

import numpy as np

from globaldirs import io
from globaldirs.worldmodel import GeneratorSpec, SyntheticGenerator

out = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden_decode_zero.json"
spec = GeneratorSpec(noise=0.0)
img = SyntheticGenerator(spec).decode(np.zeros(spec.n), 0)
io.write_json(out, {"spec": spec.__dict__, **io.image_to_dict(img)})
print(f"wrote {out}")
