from __future__ import annotations

import numpy as np
import pytest

from regionsep.heatmap import HeatmapConfig, heatmap_protocol, region_hit
from regionsep.geometry import DEFAULT_REGIONS


def test_axis_has_24_points_at_default_step():
    ax = HeatmapConfig().axis()
    assert len(ax) == 24
    assert ax[0] == pytest.approx(0.2) and ax[-1] == pytest.approx(4.8)


def test_region_hit_folds_mirror():
    assert region_hit(DEFAULT_REGIONS, 75.0, 1.0, True)
    assert region_hit(DEFAULT_REGIONS, 285.0, 1.0, True)
    assert not region_hit(DEFAULT_REGIONS, 285.0, 1.0, False)
    assert not region_hit(DEFAULT_REGIONS, 75.0, 2.0, True)


@pytest.fixture(scope="module")
def coarse():
    return heatmap_protocol(HeatmapConfig(grid_step=0.6, duration=1.0))


def test_coarse_grid_outputs(coarse, tmp_path):
    assert coarse.decay_db.shape == (8, 8)
    paths = coarse.write(tmp_path)
    rows = paths["grid"].read_text().splitlines()
    assert len(rows) == 8 and all(len(r.split(",")) == 8 for r in rows)
    pgm = paths["image"].read_bytes()
    assert pgm.startswith(b"P5\n8 8\n255\n") and len(pgm) == len(b"P5\n8 8\n255\n") + 64
    assert len(paths["cells"].read_text().splitlines()) == 65


def test_oracle_heatmap_contrast(coarse):
    inside = [c["decay_db"] for c in coarse.cells if c["in_region"]]
    outside = [c["decay_db"] for c in coarse.cells if not c["in_region"]]
    assert inside and max(inside) < 1.0
    assert min(outside) >= 40.0


def test_passthrough_heatmap_is_flat():
    # step 2.3 puts the middle grid point on the array centroid, which is skipped
    res = heatmap_protocol(HeatmapConfig(grid_step=2.3, duration=0.5, mask="passthrough"))
    assert res.decay_db.shape == (3, 3)
    assert np.isnan(res.decay_db[1, 1])
    finite = res.decay_db[np.isfinite(res.decay_db)]
    assert finite.size == 8 and np.allclose(finite, 0.0, atol=1e-9)
    assert res.pgm()[-5] == 255


def test_bad_mask_rejected():
    with pytest.raises(ValueError):
        heatmap_protocol(HeatmapConfig(mask="file:x"))
