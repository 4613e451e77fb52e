import numpy as np
import pytest

from cfglab import rng as rngmod
from cfglab.errors import Divergence, LengthExceeded
from cfglab.probe import (
    ProbeConfig,
    _sequence_grads,
    attention_weights,
    init_model,
    probe_eval,
    probe_forward,
    probe_targets,
    probe_train,
    read_probe,
    write_probe,
)
from cfglab.sampler import sample_derivation
from cfglab.tensordump import synthesize_fixture


def _planted_dataset(cfg, n_seqs, seed, noise=0.0, shift=0, target="ancestors"):
    dump, derivs = synthesize_fixture(
        cfg, n_seqs, "planted", rngmod.stream(seed), noise=noise, shift=shift
    )
    return [
        (seq.hidden[0].astype(np.float64), probe_targets(cfg, d, target))
        for seq, d in zip(dump.sequences, derivs)
    ]


def _small_model(rng, n_positions=6, heads=2, d=4, pos_dim=5, level_sizes=(3, 2)):
    config = ProbeConfig(heads=heads, pos_dim=pos_dim, max_len=n_positions, iterations=1)
    model = init_model(config, d, level_sizes, rng)
    model.weight[:] = 0.1 * rng.standard_normal(model.weight.shape)
    return model


def test_gradient_check_against_central_differences():
    rng = rngmod.stream(900)
    model = _small_model(rng, n_positions=3, heads=2, d=4)
    E = rng.standard_normal((3, 4))
    targets = np.array([[0, 2, 1], [1, 0, 1]])

    def loss_at():
        loss, *_ = _sequence_grads(model, E, targets, None)
        return loss

    _, aW, aP, _ = _sequence_grads(model, E, targets, None)
    h = 1e-5
    for arr, grad in ((model.weight, aW), (model.pos[:3], aP)):
        num = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            keep = arr[idx]
            arr[idx] = keep + h
            up = loss_at()
            arr[idx] = keep - h
            down = loss_at()
            arr[idx] = keep
            num[idx] = (up - down) / (2 * h)
            it.iternext()
        scale = max(np.linalg.norm(grad), np.linalg.norm(num))
        assert np.linalg.norm(grad - num) / scale <= 1e-4


def test_gradient_check_boundaries_and_masks():
    rng = rngmod.stream(901)
    config = ProbeConfig(
        target="boundaries", heads=2, pos_dim=4, max_len=4, delta=1, iterations=1
    )
    model = init_model(config, 3, (1, 1), rng)
    model.weight[:] = 0.2 * rng.standard_normal(model.weight.shape)
    E = rng.standard_normal((4, 3))
    targets = np.array([[0, 1, 0, 1], [1, 0, 0, 1]])
    _, aW, aP, _ = _sequence_grads(model, E, targets, 1)
    h = 1e-5
    for arr, grad in ((model.weight, aW), (model.pos[:4], aP)):
        num = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            keep = arr[idx]
            arr[idx] = keep + h
            up, *_ = _sequence_grads(model, E, targets, 1)
            arr[idx] = keep - h
            down, *_ = _sequence_grads(model, E, targets, 1)
            arr[idx] = keep
            num[idx] = (up - down) / (2 * h)
            it.iternext()
        scale = max(np.linalg.norm(grad), np.linalg.norm(num))
        assert np.linalg.norm(grad - num) / scale <= 1e-4


def test_delta0_closed_form():
    rng = rngmod.stream(902)
    model = _small_model(rng)
    E = rng.standard_normal((6, 4))
    G = probe_forward(model, E, delta=0)
    expected = np.zeros_like(G)
    for r in range(model.config.heads):
        expected += E @ model.weight[r].T
    expected /= model.config.heads
    assert np.allclose(G, expected, atol=1e-12)


def test_forward_linear_in_hidden_states():
    rng = rngmod.stream(903)
    model = _small_model(rng)
    E1 = rng.standard_normal((6, 4))
    E2 = rng.standard_normal((6, 4))
    for delta in (None, 0, 1):
        lhs = probe_forward(model, E1 + E2, delta=delta)
        rhs = probe_forward(model, E1, delta=delta) + probe_forward(model, E2, delta=delta)
        assert np.allclose(lhs, rhs, atol=1e-10)


def test_zero_readout_gives_uniform_posterior():
    rng = rngmod.stream(904)
    config = ProbeConfig(heads=3, pos_dim=4, max_len=5, iterations=1)
    model = init_model(config, 4, (3, 2), rng)  # weight and bias start at zero
    G = probe_forward(model, rng.standard_normal((5, 4)))
    assert np.allclose(G, 0.0)
    for sl in model.level_slices():
        logits = G[:, sl]
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        assert np.allclose(probs, 1.0 / logits.shape[1])


def test_attention_rows_sum_to_one_under_every_mask():
    rng = rngmod.stream(905)
    model = _small_model(rng, n_positions=7)
    for delta in (None, 0, 1, 2):
        w = attention_weights(model, 7, delta)
        assert np.allclose(w.sum(axis=2), 1.0, atol=1e-12)
        if delta is not None:
            idx = np.arange(7)
            outside = np.abs(idx[:, None] - idx[None, :]) > delta
            assert np.all(w[:, outside] == 0.0)


def test_attention_independent_of_content():
    # the mixing weights are a function of the length alone
    rng = rngmod.stream(906)
    model = _small_model(rng)
    w1 = attention_weights(model, 6, None)
    w2 = attention_weights(model, 6, None)
    assert (w1 == w2).all()


def test_length_capacity_enforced():
    rng = rngmod.stream(907)
    model = _small_model(rng, n_positions=4)
    with pytest.raises(LengthExceeded):
        probe_forward(model, rng.standard_normal((9, 4)))


def test_planted_zero_noise_reaches_high_accuracy(depth4):
    dataset = _planted_dataset(depth4, 40, seed=908)
    config = ProbeConfig(
        heads=4,
        pos_dim=32,
        delta=0,
        learning_rate=0.02,
        weight_decay=0.001,
        batch_size=None,
        iterations=400,
        max_len=max(E.shape[0] for E, _ in dataset),
    )
    level_sizes = [len(lv) for lv in depth4.levels[:-1]]
    model, trace = probe_train(config, dataset, rngmod.stream(909), level_sizes=level_sizes)
    table = probe_eval(model, dataset)
    for level, entry in table.items():
        assert entry["accuracy"] >= 0.99, (level, entry)


def test_full_batch_loss_nonincreasing(depth4):
    dataset = _planted_dataset(depth4, 20, seed=910)
    config = ProbeConfig(
        heads=2,
        pos_dim=16,
        delta=0,
        learning_rate=0.01,
        weight_decay=0.0,
        batch_size=None,
        iterations=60,
        max_len=max(E.shape[0] for E, _ in dataset),
    )
    _, trace = probe_train(
        config, dataset, rngmod.stream(911), trace_every=1,
        level_sizes=[len(lv) for lv in depth4.levels[:-1]],
    )
    losses = [v for _, v in trace]
    for a, b in zip(losses, losses[1:]):
        assert b <= a + 1e-9


def test_shifted_signal_needs_wider_mask():
    # labels are iid, features carry the previous position's label: with a
    # point mask the probe sits at chance, with a one-step mask it can
    # recover the signal almost exactly
    rng = rngmod.stream(912)
    classes, levels, n, n_train, n_eval = 3, 2, 48, 30, 15
    seqs = []
    for _ in range(n_train + n_eval):
        labels = rng.integers(classes, size=(levels, n))
        labels[:, n - 1] = labels[:, n - 2]  # final label visible at the final key
        onehot = np.zeros((n, classes * levels))
        for lvl in range(levels):
            for i in range(n):
                onehot[i, lvl * classes + labels[lvl, i]] = 1.0
        shifted = np.vstack([onehot[:1], onehot[:-1]])
        seqs.append((shifted, labels))
    train, evalset = seqs[:n_train], seqs[n_train:]

    def fit(delta, iterations, lr):
        config = ProbeConfig(
            heads=8,
            pos_dim=32,
            delta=delta,
            learning_rate=lr,
            weight_decay=0.001,
            batch_size=None,
            iterations=iterations,
            max_len=n,
        )
        model, _ = probe_train(
            config, train, rngmod.stream(913), level_sizes=[classes] * levels
        )
        table = probe_eval(model, evalset)
        return np.mean([e["accuracy"] for e in table.values()])

    assert fit(0, 200, 0.05) < 0.5  # chance is 1/3
    assert fit(1, 1500, 0.05) >= 0.99


def test_random_features_track_majority_rate(depth4):
    dump, derivs = synthesize_fixture(
        depth4, 50, "uniform_window", rngmod.stream(914), dim=4
    )
    dataset = [
        (seq.hidden[0].astype(np.float64), probe_targets(depth4, d, "ancestors"))
        for seq, d in zip(dump.sequences, derivs)
    ]
    level_sizes = [len(lv) for lv in depth4.levels[:-1]]
    config = ProbeConfig(
        heads=2,
        pos_dim=8,
        delta=0,
        learning_rate=0.02,
        weight_decay=0.001,
        batch_size=None,
        iterations=300,
        max_len=max(E.shape[0] for E, _ in dataset),
    )
    model, _ = probe_train(config, dataset, rngmod.stream(915), level_sizes=level_sizes)
    table = probe_eval(model, dataset)
    counts = {lvl: {} for lvl in range(len(level_sizes))}
    total = 0
    for _, targets in dataset:
        total += targets.shape[1]
        for lvl in range(targets.shape[0]):
            for v in targets[lvl]:
                counts[lvl][int(v)] = counts[lvl].get(int(v), 0) + 1
    for lvl in range(len(level_sizes)):
        majority = max(counts[lvl].values()) / total
        assert abs(table[lvl + 1]["accuracy"] - majority) <= 0.05


def test_delta0_matches_plain_logistic_regression(depth4):
    sklearn = pytest.importorskip("sklearn.linear_model")
    dataset = _planted_dataset(depth4, 30, seed=916, noise=0.1)
    level_sizes = [len(lv) for lv in depth4.levels[:-1]]
    config = ProbeConfig(
        heads=2,
        pos_dim=8,
        delta=0,
        learning_rate=0.02,
        weight_decay=0.0001,
        batch_size=None,
        iterations=500,
        max_len=max(E.shape[0] for E, _ in dataset),
    )
    model, _ = probe_train(config, dataset, rngmod.stream(917), level_sizes=level_sizes)
    table = probe_eval(model, dataset)

    X = np.vstack([E for E, _ in dataset])
    for lvl in range(len(level_sizes)):
        y = np.concatenate([t[lvl] for _, t in dataset])
        if len(set(y.tolist())) < 2:
            continue  # the root level is a single class
        clf = sklearn.LogisticRegression(max_iter=2000).fit(X, y)
        ours = table[lvl + 1]["accuracy"]
        theirs = clf.score(X, y)
        assert abs(ours - theirs) <= 0.01, (lvl, ours, theirs)


def test_boundary_eval_reports_base_rate(depth4):
    dataset = _planted_dataset(depth4, 10, seed=918, target="boundaries")
    config = ProbeConfig(
        target="boundaries",
        heads=2,
        pos_dim=8,
        delta=0,
        batch_size=None,
        iterations=5,
        max_len=max(E.shape[0] for E, _ in dataset),
    )
    model, _ = probe_train(config, dataset, rngmod.stream(919))
    table = probe_eval(model, dataset)
    for level, entry in table.items():
        assert 0.0 <= entry["base_rate"] <= 1.0


def test_divergence_reported():
    rng = rngmod.stream(920)
    dataset = [(rng.standard_normal((5, 3)) * 100, np.zeros((1, 5), dtype=int))]
    config = ProbeConfig(
        heads=1, pos_dim=2, learning_rate=1e18, batch_size=None, iterations=50, max_len=5
    )
    with np.errstate(all="ignore"), pytest.raises(Divergence):
        probe_train(config, dataset, rng, level_sizes=[2])


def test_model_file_round_trip(depth4):
    dataset = _planted_dataset(depth4, 5, seed=921)
    config = ProbeConfig(
        heads=2, pos_dim=8, delta=1, batch_size=None, iterations=3,
        max_len=max(E.shape[0] for E, _ in dataset),
    )
    model, _ = probe_train(
        config, dataset, rngmod.stream(922),
        level_sizes=[len(lv) for lv in depth4.levels[:-1]],
    )
    blob = write_probe(model)
    again = read_probe(blob)
    assert write_probe(again) == blob
    assert again.config.target == "ancestors" and again.config.delta == 1
    E = dataset[0][0]
    a = probe_forward(model, E)
    b = probe_forward(again, E)
    assert np.allclose(a, b, atol=1e-5)  # float32 storage rounding
