import numpy as np
import pytest

from logitcohort.errors import DimensionError, ParameterError, ProtocolError
from logitcohort.linalg import compute_logits_batch, cosine_matrix
from logitcohort.locos import SelectionStrategy, make_template, s_locos
from logitcohort.pipeline import (
    METHOD_NAMES,
    Flow,
    MethodConfig,
    cohort_scores,
    enroll,
    genuine_mask,
    score_baseline,
    score_cohort_ranklist,
    score_locos,
    score_protocol,
    score_templates,
    template_scores,
)
from logitcohort.protocol import Sample, VerificationProtocol
from logitcohort.ranklist import RankFunction, RankSimParams, rank_similarity, ranks_from_similarities
from logitcohort.synth import SynthConfig, generate


def _proto(g_labels, p_labels, n_cohort=0):
    return VerificationProtocol(
        gallery=[Sample(f"g{i}", lab, str(i)) for i, lab in enumerate(g_labels)],
        probes=[Sample(f"p{i}", lab, str(i)) for i, lab in enumerate(p_labels)],
        cohort_gallery=[Sample(f"cg{i}", f"c{i}", str(i)) for i in range(n_cohort)],
        cohort_probe=[Sample(f"cp{i}", f"c{i}", str(i)) for i in range(n_cohort)],
    )


def test_baseline_example():
    proto = _proto(["a", "b"], ["a", "b", "c"])
    G = np.eye(3)[:2]
    P = np.eye(3)
    m = score_baseline(proto, {"gallery": G, "probe": P})
    assert m.shape == (2, 3)
    np.testing.assert_array_equal(m.scores, [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(m.genuine, [[True, False, False], [False, True, False]])
    assert m.method == "baseline" and m.probe_ids == ["p0", "p1", "p2"]


def test_genuine_mask_uses_labels_only():
    mask = genuine_mask(["x", "y", "x"], ["x", "z"])
    np.testing.assert_array_equal(mask, [[True, False], [False, False], [True, False]])


def test_relabeling_changes_only_mask(small_synth):
    d = small_synth
    m1 = score_protocol(d.protocol, d.vectors(), MethodConfig.from_name("cohort-s3"))
    relabeled = VerificationProtocol(
        gallery=[Sample(s.sample_id, "same", s.ref) for s in d.protocol.gallery],
        probes=d.protocol.probes,
        cohort_gallery=d.protocol.cohort_gallery,
        cohort_probe=d.protocol.cohort_probe,
    )
    m2 = score_protocol(relabeled, d.vectors(), MethodConfig.from_name("cohort-s3"))
    assert m1.scores.tobytes() == m2.scores.tobytes()
    assert not np.array_equal(m1.genuine, m2.genuine)


# -- cohort flow --------------------------------------------------------------

def test_cohort_matches_scalar_definition(rng):
    G, P = rng.standard_normal((4, 6)), rng.standard_normal((5, 6))
    CG, CP = rng.standard_normal((9, 6)), rng.standard_normal((9, 6))
    params = RankSimParams(k=4, lam=0.9)
    for fn in RankFunction:
        S = cohort_scores(G, P, CG, CP, fn, params)
        for i in range(4):
            for j in range(5):
                gg = ranks_from_similarities(cosine_matrix(G[i : i + 1], CG)[0])
                gp = ranks_from_similarities(cosine_matrix(P[j : j + 1], CP)[0])
                assert S[i, j] == rank_similarity(gg, gp, fn, params)


def test_cohort_of_one_is_constant(rng):
    G, P = rng.standard_normal((3, 4)), rng.standard_normal((6, 4))
    C = rng.standard_normal((1, 4))
    for fn in RankFunction:
        S = cohort_scores(G, P, C, C, fn)
        assert np.all(S == S[0, 0])


def test_identical_samples_score_one(rng):
    X = rng.standard_normal((5, 8))
    CG = rng.standard_normal((30, 8))
    for fn in (RankFunction.S1, RankFunction.S3):
        S = cohort_scores(X, X, CG, CG, fn)
        np.testing.assert_array_equal(np.diag(S), 1.0)


def test_cohort_cost_stats(small_synth):
    d = small_synth
    stats = {}
    score_cohort_ranklist(d.protocol, d.vectors(), RankFunction.S1, stats=stats)
    n_g, n_p, n_c = len(d.protocol.gallery), len(d.protocol.probes), len(d.protocol.cohort_gallery)
    assert stats == {"cohort_similarities": (n_g + n_p) * n_c, "rank_comparisons": n_g * n_p}


def test_cohort_requires_cohort():
    proto = _proto(["a"], ["a"])
    with pytest.raises(ProtocolError):
        score_cohort_ranklist(proto, {"gallery": np.ones((1, 2)), "probe": np.ones((1, 2))}, RankFunction.S1)


# -- logit-selection flow -----------------------------------------------------

def test_full_top_k_equals_cosine_on_logits(rng):
    Zg, Zp = rng.standard_normal((6, 80)), rng.standard_normal((7, 80))
    templates = [make_template(z, SelectionStrategy.top_k(80), str(i)) for i, z in enumerate(Zg)]
    S = template_scores(templates, Zp, MethodConfig.from_name("locos-t", K=80))
    np.testing.assert_allclose(S, cosine_matrix(Zg, Zp), rtol=0, atol=1e-12)


def test_self_comparison_scores_one(rng):
    Z = rng.standard_normal((4, 200))
    proto = _proto(list("abcd"), list("abcd"))
    for name, top in (("locos-t", 1.0), ("locos-tb", 2.0), ("locos-p", 1.0), ("locos-random", 1.0)):
        m = score_locos(proto, {"gallery": Z, "probe": Z}, MethodConfig.from_name(name, K=50))
        np.testing.assert_allclose(np.diag(m.scores), top, atol=1e-12)


@pytest.mark.parametrize("name", ["locos-t", "locos-tb", "locos-random"])
def test_template_scores_match_scalar(rng, name):
    Zg, Zp = rng.standard_normal((3, 120)), rng.standard_normal((4, 120))
    cfg = MethodConfig.from_name(name, K=30)
    templates = [make_template(z, cfg.strategy, str(i)) for i, z in enumerate(Zg)]
    S = template_scores(templates, Zp, cfg)
    for i in range(3):
        for j in range(4):
            assert S[i, j] == pytest.approx(s_locos(Zg[i], Zp[j], templates[i].selection), abs=1e-13)


def test_probe_mode_selects_on_probe(rng):
    Zg, Zp = rng.standard_normal((3, 90)), rng.standard_normal((5, 90))
    cfg = MethodConfig.from_name("locos-p", K=20)
    templates = [make_template(z, cfg.strategy, str(i)) for i, z in enumerate(Zg)]
    S = template_scores(templates, Zp, cfg)
    for j in range(5):
        sel = make_template(Zp[j], SelectionStrategy.top_k(20), "q").selection
        for i in range(3):
            assert S[i, j] == pytest.approx(s_locos(Zp[j], Zg[i], sel), abs=1e-13)


@pytest.mark.parametrize("name", ["locos-t-s1", "locos-tb-s2", "locos-tb-s3"])
def test_ranked_locos_matches_scalar(rng, name):
    Zg, Zp = rng.standard_normal((3, 60)), rng.standard_normal((4, 60))
    cfg = MethodConfig.from_name(name, K=16, params=RankSimParams(k=5))
    templates = [make_template(z, cfg.strategy, str(i)) for i, z in enumerate(Zg)]
    S = template_scores(templates, Zp, cfg)
    for i, t in enumerate(templates):
        for j in range(4):
            gg = ranks_from_similarities(Zg[i][t.selection.indexes])
            gp = ranks_from_similarities(Zp[j][t.selection.indexes])
            assert S[i, j] == rank_similarity(gg, gp, cfg.rank_fn, cfg.params)


def test_float32_probe_logits(rng):
    Zg = rng.standard_normal((3, 100))
    Zp = rng.standard_normal((4, 100)).astype(np.float32)
    cfg = MethodConfig.from_name("locos-t", K=25)
    templates = [make_template(z, cfg.strategy, str(i)) for i, z in enumerate(Zg)]
    np.testing.assert_allclose(
        template_scores(templates, Zp, cfg),
        template_scores(templates, Zp.astype(np.float64), cfg),
        rtol=0,
        atol=1e-15,
    )


def test_top_beats_first_k_on_genuine_pairs():
    for seed in range(5):
        d = generate(SynthConfig(1000, 64, 30, sigma_gallery=0.3, sigma_probe=0.9, seed=seed))
        means = {}
        for name in ("locos-t", "locos-random"):
            m = score_protocol(d.protocol, d.vectors(), MethodConfig.from_name(name, K=100), weights=d.weights)
            means[name] = m.scores[m.genuine].mean()
        assert means["locos-t"] > means["locos-random"]


def test_embedding_and_logit_paths_agree(small_synth):
    d = small_synth
    cfg = MethodConfig.from_name("locos-tb", K=40)
    via_weights = score_protocol(d.protocol, d.vectors(), cfg, weights=d.weights)
    logits = {r: compute_logits_batch(d.vectors()[r], d.weights) for r in ("gallery", "probe")}
    assert via_weights.scores.tobytes() == score_protocol(d.protocol, logits, cfg).scores.tobytes()


def test_dropping_probes_keeps_columns(small_synth):
    d = small_synth
    cfg = MethodConfig.from_name("locos-t", K=40)
    Z = {r: compute_logits_batch(d.vectors()[r], d.weights) for r in ("gallery", "probe")}
    full = score_locos(d.protocol, Z, cfg)
    keep = [0, 3, 5]
    sub = VerificationProtocol(gallery=d.protocol.gallery, probes=[d.protocol.probes[j] for j in keep])
    part = score_locos(sub, {"gallery": Z["gallery"], "probe": Z["probe"][keep]}, cfg)
    np.testing.assert_allclose(part.scores, full.scores[:, keep], rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", ["baseline", "cohort-s2", "locos-tb", "locos-p", "locos-t-s1"])
def test_thread_count_independent(small_synth, monkeypatch, name):
    d = small_synth
    cfg = MethodConfig.from_name(name, K=40)
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("LOGITCOHORT_THREADS", threads)
        outs.append(score_protocol(d.protocol, d.vectors(), cfg, weights=d.weights).scores.tobytes())
    assert outs[0] == outs[1]


def test_bad_thread_env(small_synth, monkeypatch):
    monkeypatch.setenv("LOGITCOHORT_THREADS", "0")
    d = small_synth
    with pytest.raises(ParameterError):
        score_protocol(d.protocol, d.vectors(), MethodConfig.from_name("cohort-s1"))


# -- configuration and validation ---------------------------------------------

def test_method_names_round_trip():
    assert len(METHOD_NAMES) == 14
    for name in METHOD_NAMES:
        assert MethodConfig.from_name(name).name == name


@pytest.mark.parametrize(
    "make",
    [
        lambda: MethodConfig.from_name("locos-random-s1"),
        lambda: MethodConfig.from_name("locos-p-s2"),
        lambda: MethodConfig(Flow.LOCOS_RANK, RankFunction.S1, strategy=SelectionStrategy.first_k(5)),
        lambda: MethodConfig(Flow.LOCOS_RANK, RankFunction.S1, strategy=SelectionStrategy.probe_top_k(5)),
        lambda: MethodConfig(Flow.BASELINE, RankFunction.S1),
        lambda: MethodConfig(Flow.COHORT),
        lambda: MethodConfig(Flow.LOCOS),
    ],
)
def test_invalid_method_combinations(make):
    with pytest.raises(ParameterError):
        make()


def test_template_label_mismatch(rng):
    proto = _proto(["a", "b"], ["a"])
    Zg = rng.standard_normal((2, 20))
    templates = enroll(proto, Zg, SelectionStrategy.top_k(5))
    swapped = templates[::-1]
    with pytest.raises(ProtocolError, match="label"):
        score_templates(proto, swapped, rng.standard_normal((1, 20)), MethodConfig.from_name("locos-t", K=5))


def test_template_kind_mismatch(rng):
    proto = _proto(["a"], ["a"])
    templates = enroll(proto, rng.standard_normal((1, 20)), SelectionStrategy.top_k(5))
    with pytest.raises(ParameterError):
        score_templates(proto, templates, rng.standard_normal((1, 20)), MethodConfig.from_name("locos-p", K=5))


def test_probe_logit_width_checked(rng):
    proto = _proto(["a"], ["a"])
    templates = enroll(proto, rng.standard_normal((1, 20)), SelectionStrategy.top_k(5))
    with pytest.raises(DimensionError):
        score_templates(proto, templates, rng.standard_normal((1, 21)), MethodConfig.from_name("locos-t", K=5))


def test_missing_role_vectors():
    proto = _proto(["a"], ["a"])
    with pytest.raises(ProtocolError):
        score_baseline(proto, {"gallery": np.ones((1, 3))})
    with pytest.raises(ProtocolError):
        score_baseline(proto, {"gallery": np.ones((2, 3)), "probe": np.ones((1, 3))})
