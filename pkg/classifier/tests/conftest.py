import json
import struct

import numpy as np
import pytest

MAGIC = b"SYNCSPC1"


def write_spec_file(path, mags: np.ndarray, window=64, hop=32):
    mags = np.ascontiguousarray(mags, dtype="<f4")
    bins, frames = mags.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", bins, frames, window, hop))
        fh.write(mags.tobytes())


def build_dataset(root, classes, per_class, bins=33, frames=6, make_mags=None,
                  seed=0):
    """Handcraft a dataset directory in the exported layout."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for label_idx, label in enumerate(classes):
        class_dir = root / label
        class_dir.mkdir()
        for rep in range(per_class):
            if make_mags is not None:
                mags = make_mags(label_idx, rep, rng)
            else:
                mags = rng.uniform(0, 1, size=(bins, frames))
            write_spec_file(class_dir / f"{rep:04d}.spec", mags)
    manifest = {
        "classes": list(classes),
        "traces_per_class": per_class,
        "spec_shape": [bins, frames],
    }
    (root / "manifest.json").write_text(json.dumps(manifest))
    return root


@pytest.fixture
def toy_dataset(tmp_path):
    """Two trivially separable classes: energy in the low vs high bins."""

    def make_mags(label_idx, rep, rng):
        mags = rng.uniform(0, 0.1, size=(33, 6))
        rows = slice(0, 12) if label_idx == 0 else slice(20, 32)
        mags[rows, :] += 5.0 + 0.2 * rng.standard_normal((12, 6))
        return np.abs(mags)

    return build_dataset(tmp_path / "toy", ["low-band", "high-band"], 8,
                         make_mags=make_mags)
