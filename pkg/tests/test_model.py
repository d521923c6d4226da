import numpy as np
import pytest
from helpers import fd_gradients, make_data, make_model, rel_err, zero_bank

from adham.autodiff import Tensor
from adham.data import Dataset, FoldSplit
from adham.model import (
    AdhamModel,
    HazardNet,
    NumericalError,
    TrainConfig,
    fit,
    hazard_loglik_chunks,
    joint_objective_chunks,
    loglik_d_values,
    mc_loglik,
    mc_loglik_d,
    mixture_objective,
    regularizer,
    sample_dataset,
)
from adham.network import Mlp

rng = np.random.default_rng(2024)
LN2 = np.log(2.0)


class TestMixtureStructure:
    def test_assignment_probs_simplex(self):
        m = make_model(C=7)
        p = m.assignment_probs(rng.normal(size=(11, 3)))
        assert p.shape == (11, 7)
        assert np.all(p > 0)
        np.testing.assert_allclose(p.sum(axis=1), np.ones(11), atol=1e-12)

    def test_assignment_probs_single_vector(self):
        m = make_model(C=5)
        p = m.assignment_probs(np.zeros(3))
        assert p.shape == (5,)
        np.testing.assert_allclose(p.sum(), 1.0, atol=1e-12)

    def test_zeroed_assignment_uniform(self):
        m = make_model(C=4)
        for w in m.assignment.weights:
            w[...] = 0.0
        for b in m.assignment.biases:
            b[...] = 0.0
        p = m.assignment_probs(rng.normal(size=(6, 3)))
        np.testing.assert_allclose(p, np.full((6, 4), 0.25), atol=1e-12)

    def test_importance_matrix_rows(self):
        m = make_model(C=4, D=5)
        b = m.importance_matrix()
        assert b.shape == (4, 5)
        assert np.all(b > 0)
        np.testing.assert_allclose(b.sum(axis=1), np.ones(4), atol=1e-12)

    def test_importance_matrix_zero_logits_uniform(self):
        m = make_model(C=3, D=4)
        m.importance_logits[...] = 0.0
        np.testing.assert_allclose(m.importance_matrix(), np.full((3, 4), 0.25))

    def test_covariate_weight_single_subgroup(self):
        m = make_model(C=1, D=4)
        row = m.importance_matrix()[0]
        w = m.covariate_weight(rng.normal(size=(9, 4)))
        np.testing.assert_allclose(w, np.tile(row, (9, 1)), atol=1e-12)

    def test_covariate_weight_simplex(self):
        m = make_model(C=6, D=4)
        w = m.covariate_weight(rng.normal(size=(8, 4)))
        assert np.all(w > 0)
        np.testing.assert_allclose(w.sum(axis=1), np.ones(8), atol=1e-12)

    def test_covariate_weight_identity_importance(self):
        # near-one-hot importance rows make p(d|x) mirror the assignment
        m = make_model(C=3, D=3)
        m.importance_logits[...] = 1e3 * np.eye(3)
        x = rng.normal(size=(5, 3))
        np.testing.assert_allclose(
            m.covariate_weight(x), m.assignment_probs(x), atol=1e-12
        )

    def test_bad_logits_shape(self):
        m = make_model(C=4, D=3)
        with pytest.raises(ValueError):
            AdhamModel(m.assignment, np.zeros((4, 2)), m.hazard_bank, 1.0)

    def test_bad_groups(self):
        m = make_model(C=4, D=3)
        with pytest.raises(ValueError):
            AdhamModel(m.assignment, np.zeros((2, 3)), m.hazard_bank, 1.0,
                       groups=[[0, 1], [1, 2, 3]])


class TestHazards:
    def test_constant_rate_from_zero_params(self):
        m = zero_bank(make_model(time_scale=1.0))
        t = rng.uniform(0, 3, size=10)
        xv = rng.normal(size=10)
        np.testing.assert_allclose(m.population_hazard(0, t, xv), np.full(10, LN2),
                                   atol=1e-12)

    def test_time_scale_divides_rate(self):
        m = zero_bank(make_model(time_scale=5.0))
        np.testing.assert_allclose(m.population_hazard(1, 2.0, 0.3), LN2 / 5.0)

    def test_rates_positive(self):
        m = make_model(seed=3)
        t = rng.uniform(0, 2, size=(50,))
        for d in range(m.n_features):
            assert np.all(m.population_hazard(d, t, rng.normal(size=50)) > 0)

    def test_hazard_net_sees_bank_updates(self):
        m = make_model()
        h = HazardNet(m.hazard_bank, 0, m.time_scale)
        before = h.rate(1.0, 0.5)
        m.hazard_bank.weights[0][0] += 0.7
        assert h.rate(1.0, 0.5) != before

    def test_components_match_per_net_rates(self):
        m = make_model(D=4, seed=5)
        x = rng.normal(size=(6, 4))
        t = rng.uniform(0.1, 2, size=6)
        comp = m.hazard_components(x, t)
        for d in range(4):
            np.testing.assert_allclose(comp[:, d], m.population_hazard(d, t, x[:, d]),
                                       atol=1e-12)

    def test_marginal_is_convex_combination(self):
        m = make_model(D=3, seed=6)
        x = rng.normal(size=(7, 3))
        t = rng.uniform(0.1, 2, size=7)
        comp = m.hazard_components(x, t)
        lam = m.marginal_hazard(x, t)
        assert np.all(lam >= comp.min(axis=1) - 1e-12)
        assert np.all(lam <= comp.max(axis=1) + 1e-12)

    def test_marginal_double_sum_oracle(self):
        # brute force over subgroups and covariates
        m = make_model(D=3, C=5, seed=7)
        x = rng.normal(size=(4, 3))
        t = rng.uniform(0.1, 2, size=4)
        f = m.assignment_probs(x)
        b = m.importance_matrix()
        comp = m.hazard_components(x, t)
        expected = np.zeros(4)
        for i in range(4):
            for c in range(5):
                for d in range(3):
                    expected[i] += f[i, c] * b[c, d] * comp[i, d]
        np.testing.assert_allclose(m.marginal_hazard(x, t), expected, atol=1e-10)

    def test_single_covariate_collapse(self):
        m = make_model(D=1, C=6, seed=8)
        x = rng.normal(size=(5, 1))
        t = rng.uniform(0.1, 2, size=5)
        np.testing.assert_allclose(m.marginal_hazard(x, t),
                                   m.population_hazard(0, t, x[:, 0]), atol=1e-12)

    def test_marginal_hazard_times_matches_columns(self):
        m = make_model(seed=9)
        x = rng.normal(size=(5, 3))
        times = rng.uniform(0.1, 2, size=(5, 4))
        grid = m.marginal_hazard_times(x, times)
        for j in range(4):
            np.testing.assert_allclose(grid[:, j], m.marginal_hazard(x, times[:, j]),
                                       atol=1e-12)

    def test_decomposition_sums_to_marginal(self):
        m = make_model(D=4, seed=10)
        x = rng.normal(size=4)
        times = np.linspace(0.1, 2, 6)
        dec = m.hazard_decomposition(x, times)
        assert dec.shape == (4, 6)
        total = dec.sum(axis=0)
        per_t = [m.marginal_hazard(x, tt) for tt in times]
        np.testing.assert_allclose(total, per_t, atol=1e-12)

    def test_decomposition_zero_weight_covariate(self):
        m = make_model(D=3, C=2, seed=11)
        m.importance_logits[...] = np.array([[1e3, 1e3, -1e3]] * 2)
        dec = m.hazard_decomposition(rng.normal(size=3), np.array([0.5, 1.0]))
        assert np.all(dec[2] < 1e-200)

    def test_requires_vector_input(self):
        m = make_model()
        with pytest.raises(ValueError):
            m.hazard_decomposition(np.zeros((2, 3)), [1.0])


class TestMcLoglik:
    def test_constant_hazard_exact(self):
        # constant rate c: the estimator equals log(c) - c*t for any samples
        m = zero_bank(make_model())
        d = Dataset(rng.normal(size=(3, 3)), np.array([0.5, 1.0, 2.0]),
                    np.array([1, 1, 1]))
        got = mc_loglik(m, d, n_samples=8, rng=np.random.default_rng(0))
        want = sum(np.log(LN2) - LN2 * t for t in (0.5, 1.0, 2.0))
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_censored_records_drop_log_term(self):
        m = zero_bank(make_model())
        d = Dataset(rng.normal(size=(2, 3)), np.array([1.5, 1.5]), np.array([0, 1]))
        got = mc_loglik(m, d, n_samples=4, rng=np.random.default_rng(0))
        want = (-LN2 * 1.5) + (np.log(LN2) - LN2 * 1.5)
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_time_zero_contributes_nothing(self):
        m = zero_bank(make_model())
        d = Dataset(np.zeros((1, 3)), np.array([0.0]), np.array([1]))
        np.testing.assert_allclose(mc_loglik(m, d, n_samples=4,
                                             rng=np.random.default_rng(0)), 0.0)

    def test_population_scale_factor(self):
        m = zero_bank(make_model())
        d = make_data(m, n=6, seed=2)
        a = mc_loglik(m, d, n_samples=4, t_samples=np.full((6, 4), 0.5))
        b = mc_loglik(m, d, n_total=12, n_samples=4, t_samples=np.full((6, 4), 0.5))
        np.testing.assert_allclose(b, 2 * a, atol=1e-10)

    def test_fixed_samples_reproducible(self):
        m = make_model(seed=13)
        d = make_data(m, n=5)
        u = np.random.default_rng(3).random((5, 6))
        assert mc_loglik(m, d, t_samples=u) == mc_loglik(m, d, t_samples=u)

    def test_linear_hazard_mc_mean(self):
        # lambda(t) = a*t has closed-form record log-likelihood
        class LinearHazard:
            def __init__(self, a):
                self.a = a

            def marginal_hazard(self, x, t):
                return self.a * np.asarray(t)

            def marginal_hazard_times(self, x, times):
                return self.a * times

        a, t_i, M, R = 0.7, 1.3, 8, 2000
        d = Dataset(np.zeros((1, 1)), np.array([t_i]), np.array([1]))
        lin = LinearHazard(a)
        draw_rng = np.random.default_rng(42)
        vals = np.array([mc_loglik(lin, d, n_samples=M, rng=draw_rng) for _ in range(R)])
        want = np.log(a * t_i) - a * t_i**2 / 2.0
        se = vals.std(ddof=1) / np.sqrt(R)
        assert abs(vals.mean() - want) < 4 * se

    def test_bad_t_samples_shape(self):
        m = make_model()
        d = make_data(m, n=4)
        with pytest.raises(ValueError):
            mc_loglik(m, d, t_samples=np.zeros((3, 2)))


class TestMcLoglikD:
    def test_constant_hazard_exact(self):
        m = zero_bank(make_model(D=2))
        d = Dataset(rng.normal(size=(2, 2)), np.array([1.0, 2.0]), np.array([1, 0]))
        got = mc_loglik_d(m, 0, d, n_samples=4, rng=np.random.default_rng(0))
        want = (np.log(LN2) - LN2 * 1.0) + (-LN2 * 2.0)
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_matches_vector_path(self):
        # HazardNet evaluation vs the stacked chunked evaluation
        m = make_model(D=3, seed=14)
        d = make_data(m, n=7, seed=3)
        u = np.random.default_rng(5).random((7, 6))
        vec = loglik_d_values(m, d, u)
        for di in range(3):
            np.testing.assert_allclose(mc_loglik_d(m, di, d, t_samples=u), vec[di],
                                       rtol=1e-10)


class TestRegularizer:
    def one_hot_assignment_model(self, C, D):
        # depth-0 assignment with huge identity weights makes softmax one-hot
        m = make_model(D=D, C=C, assign_depth=0)
        m.assignment.weights[0][...] = 0.0
        m.assignment.weights[0][:C, :C] = 1e3 * np.eye(C) if D >= C else 0.0
        m.assignment.biases[0][...] = 0.0
        return m

    def test_identical_one_hot_assignments(self):
        m = make_model(D=4, C=3, assign_depth=0)
        m.assignment.weights[0][...] = 0.0
        m.assignment.biases[0][...] = np.array([1e3, 0.0, 0.0])  # everyone in group 0
        x = rng.normal(size=(6, 4))
        np.testing.assert_allclose(regularizer(m, x, w_orth=1.0, w_ent=0.0), 1.0,
                                   atol=1e-9)

    def test_orthogonal_assignments(self):
        m = self.one_hot_assignment_model(C=4, D=4)
        x = 1e0 * np.eye(4)  # four records, four distinct groups
        np.testing.assert_allclose(regularizer(m, x, w_orth=1.0, w_ent=0.0), 0.0,
                                   atol=1e-9)

    def test_uniform_importance_entropy(self):
        m = make_model(D=5, C=3)
        m.importance_logits[...] = 0.0
        x = rng.normal(size=(8, 5))
        np.testing.assert_allclose(regularizer(m, x, w_orth=0.0, w_ent=1.0),
                                   -np.log(5.0), atol=1e-12)

    def test_needs_two_records(self):
        m = make_model()
        with pytest.raises(ValueError):
            regularizer(m, np.zeros((1, 3)))


class TestTracedObjectives:
    def test_hazard_chunks_match_mc_loglik_d(self):
        m = make_model(D=3, seed=15)
        d = make_data(m, n=6, seed=4)
        u = np.random.default_rng(6).random((6, 5))
        vec = loglik_d_values(m, d, u, n_total=18)
        for di in range(3):
            np.testing.assert_allclose(
                mc_loglik_d(m, di, d, n_total=18, t_samples=u), vec[di], rtol=1e-10)

    def test_hazard_chunks_gradient(self):
        m = make_model(D=2, C=3, hidden=3, depth=1, seed=16)
        d = make_data(m, n=4, seed=5)
        u = np.random.default_rng(7).random((4, 3))
        arrays = m.hazard_bank.param_list()

        wraps = m.hazard_bank.wrap()
        for piece in hazard_loglik_chunks(m, d, u, wraps=wraps):
            (piece.sum() * (-1.0)).backward()
        fd = fd_gradients(lambda: -float(loglik_d_values(m, d, u).sum()), arrays)
        for w, g in zip(wraps, fd):
            assert np.max(rel_err(w.grad, g)) < 1e-4

    def test_single_covariate_gradient_isolated(self):
        # gradient of one net's log-likelihood only touches that net's slice
        m = make_model(D=3, hidden=3, depth=1, seed=17)
        d = make_data(m, n=4, seed=6)
        u = np.random.default_rng(8).random((4, 3))
        onehot = np.zeros(3)
        onehot[1] = 1.0
        wraps = m.hazard_bank.wrap()
        for piece in hazard_loglik_chunks(m, d, u, wraps=wraps):
            (piece * onehot).sum().backward()
        for w in wraps:
            assert not np.any(w.grad[0])
            assert not np.any(w.grad[2])
            assert np.any(w.grad[1])

    def test_mixture_objective_value_decomposes(self):
        m = make_model(D=3, C=4, seed=18)
        d = make_data(m, n=6, seed=7)
        u = np.random.default_rng(9).random((6, 5))
        obj, ll = mixture_objective(m, d, u, w_orth=0.7, w_ent=0.3)
        np.testing.assert_allclose(ll, mc_loglik(m, d, t_samples=u), rtol=1e-10)
        np.testing.assert_allclose(
            float(obj.data), ll - regularizer(m, d.x, w_orth=0.7, w_ent=0.3),
            rtol=1e-10)

    def test_mixture_objective_gradient(self):
        m = make_model(D=2, C=3, hidden=3, depth=1, seed=19)
        d = make_data(m, n=5, seed=8)
        u = np.random.default_rng(10).random((5, 4))
        arrays = m.assignment.param_list() + [m.importance_logits]

        aw = m.assignment.wrap()
        lt = Tensor(m.importance_logits)
        obj, _ = mixture_objective(m, d, u, w_orth=0.5, w_ent=0.5,
                                   assign_params=aw, logits=lt)
        obj.backward()

        def value():
            o, _ = mixture_objective(m, d, u, w_orth=0.5, w_ent=0.5)
            return float(o.data)

        fd = fd_gradients(value, arrays)
        for w, g in zip(aw + [lt], fd):
            assert np.max(rel_err(w.grad, g)) < 1e-4

    def test_joint_chunks_value(self):
        m = make_model(D=3, C=4, seed=20)
        d = make_data(m, n=6, seed=9)
        u = np.random.default_rng(11).random((6, 5))
        total = sum(float(p.data) for p in joint_objective_chunks(
            m, d, u, w_orth=0.4, w_ent=0.6))
        want = mc_loglik(m, d, t_samples=u) - regularizer(m, d.x, 0.4, 0.6)
        np.testing.assert_allclose(total, want, rtol=1e-10)

    def test_joint_chunks_gradient(self):
        m = make_model(D=2, C=2, hidden=3, depth=1, seed=21)
        d = make_data(m, n=4, seed=10)
        u = np.random.default_rng(12).random((4, 3))
        arrays = (m.hazard_bank.param_list() + m.assignment.param_list()
                  + [m.importance_logits])

        bw = m.hazard_bank.wrap()
        aw = m.assignment.wrap()
        lt = Tensor(m.importance_logits)
        for piece in joint_objective_chunks(m, d, u, bank_wraps=bw,
                                            assign_params=aw, logits=lt):
            piece.backward()

        def value():
            return sum(float(p.data) for p in joint_objective_chunks(m, d, u))

        fd = fd_gradients(value, arrays)
        for w, g in zip(bw + aw + [lt], fd):
            assert np.max(rel_err(w.grad, g)) < 1e-4

    def test_phase_one_never_reads_assignment(self):
        m = make_model(seed=22)
        d = make_data(m, n=5, seed=11)
        u = np.random.default_rng(13).random((5, 4))
        before = loglik_d_values(m, d, u)
        m.assignment.weights[0][...] += 123.0
        m.importance_logits[...] += 5.0
        np.testing.assert_array_equal(loglik_d_values(m, d, u), before)


def tiny_fit_setup(n=60, D=2, seed=0):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, D))
    t = r.exponential(1.0, size=n) + 0.05
    e = (r.random(n) < 0.7).astype(int)
    data = Dataset(x, t, e)
    idx = np.arange(n)
    fold = FoldSplit(train_idx=idx[: int(0.7 * n)], val_idx=idx[int(0.7 * n):],
                     test_idx=np.array([], dtype=int))
    return data, fold


class TestFit:
    CFG = dict(subgroups=3, hidden=6, depth=1, batch_size=16,
               integral_samples=8, epochs=4, patience=4, seed=5)

    def test_smoke_and_shapes(self):
        data, fold = tiny_fit_setup()
        res = fit(data, fold, TrainConfig(**self.CFG))
        assert len(res.history) <= 4
        assert res.model.n_subgroups == 3
        p = res.model.assignment_probs(data.x[:5])
        np.testing.assert_allclose(p.sum(axis=1), np.ones(5), atol=1e-12)
        assert res.model.time_scale == data.time[fold.train_idx].max()
        for h in res.history:
            assert np.isfinite(h["train_loglik"]) and np.isfinite(h["val_loglik"])

    def test_deterministic(self):
        data, fold = tiny_fit_setup()
        a = fit(data, fold, TrainConfig(**self.CFG))
        b = fit(data, fold, TrainConfig(**self.CFG))
        for pa, pb in zip(a.model.hazard_bank.param_list(),
                          b.model.hazard_bank.param_list()):
            np.testing.assert_array_equal(pa, pb)
        for pa, pb in zip(a.model.assignment.param_list(),
                          b.model.assignment.param_list()):
            np.testing.assert_array_equal(pa, pb)
        np.testing.assert_array_equal(a.model.importance_logits,
                                      b.model.importance_logits)
        assert [h["val_loglik"] for h in a.history] == [h["val_loglik"] for h in b.history]

    def test_seed_matters(self):
        data, fold = tiny_fit_setup()
        a = fit(data, fold, TrainConfig(**self.CFG))
        b = fit(data, fold, TrainConfig(**{**self.CFG, "seed": 6}))
        assert not np.array_equal(a.model.importance_logits, b.model.importance_logits)

    def test_best_epoch_tracks_validation(self):
        data, fold = tiny_fit_setup()
        res = fit(data, fold, TrainConfig(**{**self.CFG, "epochs": 6, "patience": 6}))
        scores = [h["val_loglik"] for h in res.history]
        assert res.best_epoch == int(np.argmax(scores))

    def test_training_improves_validation(self):
        data, fold = tiny_fit_setup(n=120)
        res = fit(data, fold, TrainConfig(**{**self.CFG, "epochs": 25, "patience": 25,
                                             "lr": 5e-3}))
        scores = [h["val_loglik"] for h in res.history]
        assert max(scores) > scores[0]

    def test_early_stopping_cuts_epochs(self):
        data, fold = tiny_fit_setup()
        res = fit(data, fold, TrainConfig(**{**self.CFG, "epochs": 50, "patience": 2,
                                             "lr": 0.05}))
        # an overshooting learning rate stalls validation and patience fires
        assert res.stopped_epoch < 49
        assert res.stopped_epoch >= res.best_epoch + 2

    def test_joint_mode_runs(self):
        data, fold = tiny_fit_setup()
        res = fit(data, fold, TrainConfig(**{**self.CFG, "joint": True}))
        assert np.isfinite(res.history[-1]["val_loglik"])

    def test_dropout_mode_runs(self):
        data, fold = tiny_fit_setup()
        res = fit(data, fold, TrainConfig(**{**self.CFG, "dropout": 0.15}))
        assert np.isfinite(res.history[-1]["val_loglik"])

    def test_weight_decay_changes_result(self):
        data, fold = tiny_fit_setup()
        a = fit(data, fold, TrainConfig(**self.CFG))
        b = fit(data, fold, TrainConfig(**{**self.CFG, "weight_decay": 0.1}))
        assert not np.array_equal(a.model.hazard_bank.weights[0],
                                  b.model.hazard_bank.weights[0])

    def test_divergence_raises_with_context(self):
        data, fold = tiny_fit_setup(n=40)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericalError, match="epoch"):
                fit(data, fold, TrainConfig(**{**self.CFG, "lr": 1e308, "epochs": 3}))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1)
        with pytest.raises(ValueError):
            TrainConfig(dropout=1.0)
        with pytest.raises(ValueError):
            TrainConfig(integral_samples=0)
        with pytest.raises(ValueError):
            TrainConfig(w_ent=-0.1)


class TestSampleDataset:
    def test_valid_dataset(self):
        m = zero_bank(make_model())
        x = rng.normal(size=(50, 3))
        d = sample_dataset(m, x, horizon=10.0, rng=np.random.default_rng(1))
        assert len(d) == 50
        assert np.all(d.time <= 10.0)
        assert set(np.unique(d.event)) <= {0, 1}
        np.testing.assert_array_equal(d.x, x)

    def test_constant_hazard_event_time_mean(self):
        # rate log(2): mean event time 1/log(2); huge horizon makes censoring rare
        m = zero_bank(make_model())
        x = rng.normal(size=(3000, 3))
        d = sample_dataset(m, x, horizon=200.0, rng=np.random.default_rng(2))
        events = d.time[d.event == 1]
        assert len(events) > 2800
        se = events.std(ddof=1) / np.sqrt(len(events))
        assert abs(events.mean() - 1.0 / LN2) < 5 * se
