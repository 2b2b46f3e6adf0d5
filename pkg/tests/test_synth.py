import numpy as np
import pytest

from logitcohort.errors import ParameterError
from logitcohort.evaluation import partition_scores, tmr_at_fmr
from logitcohort.fileio import read_matrix, read_protocol
from logitcohort.pipeline import score_baseline
from logitcohort.synth import SynthConfig, generate, perturb, write_synth


def test_noiseless_pairs_are_identical():
    d = generate(SynthConfig(num_identities=200, dim=16, num_eval=20, seed=1))
    np.testing.assert_array_equal(d.gallery, d.probes)
    m = score_baseline(d.protocol, d.vectors())
    assert np.allclose(m.scores[m.genuine], 1.0, atol=1e-12)
    assert tmr_at_fmr(*partition_scores(m), target=1e-3).tmr_at_target == 1.0


def test_eval_identities_are_weight_rows():
    d = generate(SynthConfig(num_identities=200, dim=16, num_eval=20, seed=1))
    np.testing.assert_allclose(d.gallery, d.weights[d.eval_ids], rtol=0, atol=1e-15)
    assert [s.label for s in d.protocol.gallery] == [f"id{c}" for c in d.eval_ids]


def test_disjoint_mode():
    d = generate(SynthConfig(num_identities=200, dim=16, num_eval=20, seed=1, disjoint=True))
    assert d.eval_ids.min() >= 200
    assert np.max(d.gallery @ d.weights.T) < 0.999


def test_deterministic():
    cfg = SynthConfig(num_identities=300, dim=8, num_eval=10, sigma_gallery=0.2, sigma_probe=0.7, seed=99, num_cohort=5)
    a, b = generate(cfg), generate(cfg)
    for x, y in [(a.weights, b.weights), (a.gallery, b.gallery), (a.probes, b.probes), (a.cohort_probe, b.cohort_probe)]:
        assert x.tobytes() == y.tobytes()
    assert a.protocol == b.protocol


def test_unit_norm(rng):
    d = generate(SynthConfig(num_identities=400, dim=32, num_eval=30, sigma_gallery=0.5, sigma_probe=2.0, seed=4, num_cohort=10))
    for m in (d.weights, d.gallery, d.probes, d.cohort_gallery, d.cohort_probe):
        assert np.all(np.isfinite(m))
        np.testing.assert_allclose(np.linalg.norm(m, axis=1), 1.0, atol=1e-9)


def test_perturbation_angle_scale(rng):
    c = np.tile(np.eye(64)[0], (4000, 1))
    out = perturb(rng, c, 0.3)
    angles = np.arccos(np.clip(out @ np.eye(64)[0], -1, 1))
    assert np.sqrt(np.mean(angles**2)) == pytest.approx(0.3, rel=0.03)


def test_mean_genuine_decreases_with_probe_noise():
    means = []
    for sp in (0.2, 0.6, 1.0, 1.4):
        vals = []
        for seed in range(5):
            d = generate(SynthConfig(num_identities=500, dim=64, num_eval=30, sigma_gallery=0.2, sigma_probe=sp, seed=seed))
            m = score_baseline(d.protocol, d.vectors())
            vals.append(m.scores[m.genuine].mean())
        means.append(np.mean(vals))
    assert all(a > b for a, b in zip(means, means[1:]))


def test_heavy_probe_noise_collapses_baseline():
    # regression fixture (not a claim about real data): near-orthogonal probes
    d = generate(SynthConfig(2000, 128, 100, sigma_gallery=0.0, sigma_probe=1.5, seed=0))
    r = tmr_at_fmr(*partition_scores(score_baseline(d.protocol, d.vectors())), target=1e-3)
    assert r.tmr_at_target == pytest.approx(0.03, abs=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_identities=5, num_eval=10),
        dict(num_eval=1),
        dict(dim=1),
        dict(sigma_probe=-0.1),
        dict(num_identities=10, num_eval=5, num_cohort=6),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ParameterError):
        SynthConfig(**kwargs)


def test_write_synth(tmp_path):
    d = generate(SynthConfig(num_identities=50, dim=4, num_eval=5, seed=2, num_cohort=3))
    paths = write_synth(d, tmp_path)
    assert read_protocol(paths["protocol"]) == d.protocol
    np.testing.assert_allclose(read_matrix(paths["weights"]), d.weights, atol=1e-7)
    assert read_matrix(paths["cohort_probe"]).shape == (3, 4)
