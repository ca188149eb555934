import csv
import math
import pytest
import torch

from guidancelab.data import (
    RingDataManager, RingSpec, angular_distance, embed_condition,
    embed_conditions, export_dataset_csv, make_dataset, sample_condition,
    sample_ring, wrap_angle
)
from guidancelab.utils import make_generator

C = 3 * math.pi / 4


def test_sample_condition_is_uniform():
    conds = sample_condition(make_generator(0), 100000)
    assert ((conds >= 0) & (conds < 2 * math.pi)).all()
    assert abs(torch.cos(conds).mean().item()) < 0.02
    assert abs(torch.sin(conds).mean().item()) < 0.02


def test_sample_condition_is_reproducible():
    a = sample_condition(make_generator(4), 10)
    b = sample_condition(make_generator(4), 10)
    assert torch.equal(a, b)
    assert isinstance(sample_condition(make_generator(4)), float)


def test_wrap_angle_range():
    a = wrap_angle(torch.tensor([-1e-20, -math.pi, 2 * math.pi, 7.]))
    assert ((a >= 0) & (a < 2 * math.pi)).all()


def test_degenerate_ring_is_exact():
    spec = RingSpec(mu_r=1.5, sigma_r=0., sigma_theta=0.)
    z = sample_ring(0.4, spec, make_generator(0))
    assert z.tolist() == pytest.approx(
        [1.5 * math.cos(0.4), 1.5 * math.sin(0.4)], abs=1e-15
    )


def test_ring_samples_concentrate_near_the_condition(spec):
    z = sample_ring(torch.full((100000, ), C), spec, make_generator(1))
    angles = torch.atan2(z[:, 1], z[:, 0])
    within = (angular_distance(angles, C) <= math.pi / 64).double().mean()
    assert within.item() >= 0.95
    lo, hi = spec.band(3)
    radius = z.norm(dim=1)
    assert ((radius >= lo) & (radius <= hi)).double().mean().item() >= 0.99


def test_ring_spec_validation():
    with pytest.raises(ValueError):
        RingSpec(sigma_r=-0.1)
    with pytest.raises(ValueError):
        RingSpec(mu_r=0.2, sigma_r=0.1)


def test_ring_spec_dict_round_trip(spec):
    again = RingSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()


@pytest.mark.parametrize(
    'cond, expected', [(0., (1., 0., 1.)), (math.pi, (-1., 0., 1.)),
                       (None, (0., 0., 0.))]
)
def test_embed_condition(cond, expected):
    assert embed_condition(cond).tolist() == pytest.approx(expected, abs=1e-15)


def test_embed_conditions_null_mask():
    emb = embed_conditions(
        torch.tensor([0., math.pi / 2]), torch.tensor([False, True])
    )
    assert emb[0].tolist() == [1., 0., 1.]
    assert emb[1].tolist() == [0., 0., 0.]


@pytest.mark.parametrize(
    'a, b, expected', [(C, C, 0.), (0.1, 2 * math.pi - 0.1, 0.2),
                       (0., math.pi / 2, math.pi / 2)]
)
def test_angular_distance(a, b, expected):
    assert angular_distance(a, b) == pytest.approx(expected, abs=1e-12)


def test_make_dataset_rejects_empty(spec):
    with pytest.raises(ValueError):
        make_dataset(0, spec, seed=0)


def test_make_dataset_radius_and_determinism(spec):
    points, conds = make_dataset(100000, spec, seed=2)
    assert abs(points.norm(dim=1).mean().item() - spec.mu_r) < 0.005
    again, _ = make_dataset(100000, spec, seed=2)
    assert torch.equal(points, again)
    assert conds.shape == (100000, )


def test_datamanager_batches(spec):
    a = RingDataManager(spec, num_samples=100, batch_size=8, seed=1)
    b = RingDataManager(spec, num_samples=100, batch_size=8, seed=1)
    for _ in range(3):
        (za, ca), (zb, cb) = a.next_batch(), b.next_batch()
        assert torch.equal(za, zb) and torch.equal(ca, cb)
    assert a.next_batch(batch_size=5)[0].shape == (5, 2)


def test_export_dataset_csv(tmp_path, spec):
    points, conds = make_dataset(5, spec, seed=0)
    fpath = export_dataset_csv(points, conds, str(tmp_path / 'ring.csv'))
    with open(fpath) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['x', 'y', 'c']
    assert len(rows) == 6
    assert float(rows[1][0]) == points[0, 0].item()
