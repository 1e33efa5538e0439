import numpy as np
import pytest
from scipy import ndimage

from echobench.synthdata import PhantomParams, apply_split, generate_dataset, split_patients, write_manifest


def random_blob(rng: np.random.Generator, max_size: int = 64) -> np.ndarray:
    """A random, possibly irregular, single-component mask without holes."""
    h, w = rng.integers(4, max_size + 1, size=2)
    field = ndimage.gaussian_filter(rng.standard_normal((h, w)), rng.uniform(0.5, 3.0))
    mask = field > np.quantile(field, rng.uniform(0.3, 0.9))
    if not mask.any():
        mask[h // 2, w // 2] = True
    return mask


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """6 patients x 2 frames of 32x32 phantoms, split 4/1/1."""
    root = tmp_path_factory.mktemp("data")
    entries = generate_dataset(6, 2, 11, PhantomParams.for_size(32), root)
    ids = sorted({e.patient_id for e in entries})
    entries = apply_split(entries, split_patients(ids, (0.6, 0.2, 0.2), seed=1))
    write_manifest(root / "manifest.csv", entries)
    return root
