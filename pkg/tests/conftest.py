import json

import numpy as np
import pytest

from autosynth.normalize import NormalizedMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def random_normalized(rng):
    def make(n, p):
        return NormalizedMatrix.from_array(rng.uniform(70, 130, size=(n, p)))
    return make


@pytest.fixture
def write_csv(tmp_path):
    """Write a raw indicator CSV (and optional metadata) into tmp_path."""

    def write(header, rows, meta=None, name="data.csv"):
        path = tmp_path / name
        lines = [",".join(header)] + [",".join(str(c) for c in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        meta_path = None
        if meta is not None:
            meta_path = tmp_path / (path.stem + "_meta.json")
            meta_path.write_text(json.dumps(meta), encoding="utf-8")
        return path, meta_path

    return write
