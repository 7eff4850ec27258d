import itertools
import math
import random

import pytest

import sseg


def test_hungarian_matches_brute_force():
    rng = random.Random(7)
    for _ in range(20):
        n = rng.randint(1, 5)
        cost = [[rng.random() for _ in range(n)] for _ in range(n)]
        pairs, total = sseg.hungarian(cost)
        best = min(sum(cost[i][p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        assert total == pytest.approx(best, abs=1e-12)
        assert sorted(r for r, _ in pairs) == list(range(n))


def test_focal_closed_form():
    assert sseg.focal_loss(0.5, 1, 0.15, 2.0) == pytest.approx(0.15 * 0.25 * math.log(2), abs=1e-12)


def test_edge_error_fixtures():
    assert sseg.edge_error_from_counts(1, 2, 2) == pytest.approx(0.5, abs=1e-12)
    assert sseg.edge_error_from_counts(1, 1, 2) == pytest.approx(1 / 3, abs=1e-12)


def test_box_iou_identity_and_disjoint():
    box = ((0, 0, 0), (1, 2, 3), (1, 0, 0, 0))
    assert sseg.box_iou(box, box) == pytest.approx(1.0)
    far = ((10, 0, 0), (1, 2, 3), (1, 0, 0, 0))
    assert sseg.box_iou(box, far) == 0.0


def test_chamfer_is_zero_on_itself():
    pts = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
    assert sseg.chamfer_sq(pts, pts) == 0.0


def test_generated_chair_and_rule_based_path():
    record = sseg.gen_shape("toy-chair", 3, boundary_noise=0.0, outlier_fraction=0.0)
    assert len(record["points"]) == len(record["instances"]) == len(record["semantics"])
    assert len(set(record["instances"])) == 6
    pred = sseg.infer(record)
    assert sseg.part_ap(pred, record["hierarchy"]) >= 0.9
    assert sseg.structure_difference(pred, record["hierarchy"]) == 0


def test_errors_surface_as_exceptions():
    with pytest.raises(sseg.Error, match="UnknownLabel|InvalidArgument"):
        sseg.gen_shape("toy-sofa", 1)
