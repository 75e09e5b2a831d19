import numpy as np
import pytest

from gstrans.data import make_ring_task
from gstrans.evaluate import (CANONICAL_NAMES, canonical_transforms,
                              evaluate_accuracy, nearest_canonical,
                              transform_distance, transform_report)
from gstrans.nn import TrainConfig, model_forward, train
from gstrans.transforms import HardTransforms, Schedule


def by_name(height, width):
    return {ct.name: ct.targets for ct in canonical_transforms(height, width)}


class TestCanonicalTransforms:
    def test_names_and_count(self):
        cts = canonical_transforms(3, 3)
        assert tuple(ct.name for ct in cts) == CANONICAL_NAMES

    def test_identity(self):
        assert np.array_equal(by_name(2, 4)["identity"], np.arange(8))

    def test_up_clamps_top_row(self):
        up = by_name(3, 3)["up"]
        # top row maps to itself, others one row up
        assert list(up) == [0, 1, 2, 0, 1, 2, 3, 4, 5]

    def test_right_clamps_last_column(self):
        right = by_name(2, 3)["right"]
        assert list(right) == [1, 2, 2, 4, 5, 5]

    def test_h_contract_3x3(self):
        # every column flows one step toward the center column
        contract = by_name(3, 3)["h-contract"]
        assert list(contract) == [1, 1, 1, 4, 4, 4, 7, 7, 7]

    def test_h_dilate_3x4(self):
        # center column is index 1; columns flow away, clamped at the edges
        dilate = by_name(3, 4)["h-dilate"]
        cols = dilate[:4] % 4
        assert list(cols) == [0, 1, 3, 3]

    def test_v_dilate_4x2(self):
        dilate = by_name(4, 2)["v-dilate"]
        rows = dilate[::2] // 2
        # center row is 1; row 0 clamps at 0, rows 2,3 flow down (3 clamped)
        assert list(rows) == [0, 1, 3, 3]

    def test_all_maps_in_range(self):
        for h, w in [(2, 2), (4, 5), (16, 16)]:
            for ct in canonical_transforms(h, w):
                assert ct.targets.min() >= 0
                assert ct.targets.max() < h * w

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            canonical_transforms(1, 5)


class TestTransformDistance:
    def test_identical(self):
        a = np.arange(6)
        assert transform_distance(a, a, 6) == 0.0

    def test_counted_fraction(self):
        a = np.array([0, 1, 2, 3])
        b = np.array([0, 1, 0, 0])
        assert transform_distance(a, b, 4) == 0.5

    def test_disjoint(self):
        assert transform_distance(np.zeros(5, int), np.ones(5, int), 5) == 1.0

    def test_shape_check(self):
        with pytest.raises(ValueError):
            transform_distance(np.arange(4), np.arange(5), 4)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = rng.integers(0, 9, (2, 9))
        assert transform_distance(a, b, 9) == transform_distance(b, a, 9)


class TestNearestCanonical:
    def test_exact_match(self):
        for name, targets in by_name(4, 4).items():
            got, d = nearest_canonical(targets, 4, 4)
            assert d == 0.0
            # some canonical maps coincide on tiny grids; distance is what counts
            assert np.array_equal(by_name(4, 4)[got], targets)

    def test_perturbed_identity(self):
        targets = np.arange(16).copy()
        targets[5] = 6  # one vertex deviates
        name, d = nearest_canonical(targets, 4, 4)
        assert name == "identity"
        assert d == pytest.approx(1 / 16)

    def test_tie_goes_to_list_order(self):
        # a map equidistant from everything still returns a single name
        name, d = nearest_canonical(np.zeros(16, dtype=int), 4, 4)
        assert name in CANONICAL_NAMES


class TestTransformReport:
    def test_csv_layout(self):
        maps = by_name(3, 3)
        hard = HardTransforms(9, np.stack([maps["identity"], maps["down"]]))
        lines = transform_report(hard, 3, 3).splitlines()
        assert lines[0] == "k,nearest_name,distance"
        assert lines[1] == "0,identity,0"
        assert lines[2] == "1,down,0"
        assert lines[3] == "mean,,0"

    def test_mean_row(self):
        targets = np.arange(9).copy()
        targets[0] = 1
        hard = HardTransforms(9, np.stack([np.arange(9), targets]))
        lines = transform_report(hard, 3, 3).splitlines()
        mean = float(lines[-1].split(",")[2])
        assert mean == pytest.approx((0 + 1 / 9) / 2)


class TestEvaluateAccuracy:
    def setup_method(self):
        self.ds, self.g = make_ring_task(8, 2, 12, 0.05, seed=0)
        cfg = TrainConfig(Schedule(2.0, 0.5, 10), batch_size=8, k=2,
                          hidden=(4,), seed=0)
        self.model, self.params, _, _ = train(self.ds, self.g, cfg)

    def test_matches_per_sample_argmax(self):
        idx = self.ds.splits["val"]
        acc = evaluate_accuracy(self.model, self.params, self.ds, "val", 0.5)
        preds = [int(np.argmax(model_forward(self.ds.signals[i], self.model,
                                             self.params, 0.5)))
                 for i in idx]
        expected = float(np.mean([p == self.ds.labels[i]
                                  for p, i in zip(preds, idx)]))
        assert acc == pytest.approx(expected)

    def test_accepts_index_array(self):
        idx = self.ds.splits["train"][:5]
        acc = evaluate_accuracy(self.model, self.params, self.ds, idx, 0.5)
        assert 0.0 <= acc <= 1.0

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            evaluate_accuracy(self.model, self.params, self.ds,
                              np.array([], dtype=int), 0.5)
