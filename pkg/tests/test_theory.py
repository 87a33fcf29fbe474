import numpy as np
import pytest

from cld.errors import AllStepsZero, MissingSnapshots
from cld.theory import (
    alignment_diagnostics,
    run_theory_study,
    smoothness_estimate,
    theorem_bound_check,
)
from cld.trainer import (
    DatasetBundle,
    ModelParams,
    SyntheticSpec,
    TrainConfig,
    batch_gradient,
    generate_dataset,
    train_and_log,
)

SPEC = SyntheticSpec(n_train=300, n_val=80, n_query=40, n_reference=3000, seed=0)


@pytest.fixture(scope="module")
def data():
    return generate_dataset(SPEC)


@pytest.fixture(scope="module")
def snap_run(data):
    return train_and_log(data, TrainConfig(epochs=15, learning_rate=0.3, seed=0,
                                           record_parameter_snapshots=True))


def ref_grad_fn(data):
    spec = data.spec

    def fn(flat):
        params = ModelParams.from_flat(flat, spec.num_classes, spec.input_dim)
        return batch_gradient(params, data.reference.x, data.reference.labels)

    return fn


class TestSmoothness:
    def test_quadratic_fixture_recovers_curvature(self):
        # gradient of 0.5 * lam * ||theta||^2 is lam * theta, so every pair
        # ratio is exactly lam and the safety factor doubles it
        lam = 3.25
        rng = np.random.default_rng(0)
        snaps = [rng.standard_normal(6) for _ in range(5)]
        l_hat = smoothness_estimate(snaps, lambda th: lam * th)
        assert l_hat / 2.0 == pytest.approx(lam, abs=0)

    def test_all_steps_zero(self):
        snaps = [np.ones(4), np.ones(4), np.ones(4)]
        with pytest.raises(AllStepsZero):
            smoothness_estimate(snaps, lambda th: th)

    def test_needs_two_snapshots(self):
        with pytest.raises(MissingSnapshots):
            smoothness_estimate([np.ones(3)], lambda th: th)

    def test_stable_across_seeds_within_twenty_percent(self):
        l_hats = []
        for seed in range(3):
            spec = SyntheticSpec(n_train=300, n_val=80, n_query=40, n_reference=3000,
                                 seed=seed)
            d = generate_dataset(spec)
            run = train_and_log(d, TrainConfig(epochs=15, learning_rate=0.3, seed=seed,
                                               record_parameter_snapshots=True))
            l_hats.append(smoothness_estimate(run.snapshots, ref_grad_fn(d)))
        l_hats = np.array(l_hats)
        mean = l_hats.mean()
        assert np.all(l_hats <= 1.2 * mean) and np.all(l_hats >= 0.8 * mean)


class TestAlignment:
    def test_requires_snapshots(self, data):
        run = train_and_log(data, TrainConfig(epochs=3, seed=0))
        with pytest.raises(MissingSnapshots):
            alignment_diagnostics(run, [0, 1], data)

    def test_singleton_coreset_kappa_is_its_cosine_gap(self, data, snap_run):
        report = alignment_diagnostics(snap_run, [5], data)
        for cp in report.unflagged:
            assert cp.cosines.shape == (1,)
            assert cp.kappa == pytest.approx(1.0 - cp.cosines[0], abs=0)

    def test_full_coreset_with_validation_equal_train_gives_e_equals_delta(self, data):
        mirrored = DatasetBundle(
            spec=data.spec,
            train=data.train,
            validation=data.train,
            query=data.query,
            reference=data.reference,
            clean_train_labels=data.clean_train_labels,
            noisy_train_mask=data.noisy_train_mask,
        )
        run = train_and_log(mirrored, TrainConfig(epochs=8, learning_rate=0.3, seed=0,
                                                  record_parameter_snapshots=True))
        report = alignment_diagnostics(run, mirrored.train.sample_ids, mirrored)
        for cp in report.checkpoints:
            assert cp.e_t == pytest.approx(cp.delta_t, abs=1e-12)

    def test_subset_gap_inequality_holds(self, data, snap_run):
        rng = np.random.default_rng(3)
        coreset = rng.permutation(data.train.sample_ids)[:40]
        report = alignment_diagnostics(snap_run, coreset, data)
        assert report.subset_gap_violations() == []
        assert report.b_hat > 0
        for cp in report.unflagged:
            assert 0.0 <= cp.kappa <= 2.0
            assert np.all(np.abs(cp.cosines) <= 1.0)


class TestBound:
    def test_single_epoch_degenerate_case(self, data):
        run = train_and_log(data, TrainConfig(epochs=1, learning_rate=0.05, seed=0,
                                              record_parameter_snapshots=True))
        l_hat = 3.0
        report = theorem_bound_check(run, data, l_hat=l_hat, eta=0.05)
        expect_first_term = 2.0 * report.r0 / 0.05
        assert report.bound >= expect_first_term
        assert report.bound_holds

    def test_bound_tightens_when_validation_equals_reference(self, data, snap_run):
        l_hat = smoothness_estimate(snap_run.snapshots, ref_grad_fn(data))
        eta = 0.5 / l_hat
        cfg = TrainConfig(epochs=15, learning_rate=eta, seed=0,
                          record_parameter_snapshots=True)
        base_run = train_and_log(data, cfg)
        base = theorem_bound_check(base_run, data, l_hat, eta)

        mirrored = DatasetBundle(
            spec=data.spec,
            train=data.train,
            validation=data.reference,
            query=data.query,
            reference=data.reference,
            clean_train_labels=data.clean_train_labels,
            noisy_train_mask=data.noisy_train_mask,
        )
        mirrored_run = train_and_log(mirrored, cfg)
        tight = theorem_bound_check(mirrored_run, mirrored, l_hat, eta)
        assert tight.delta == pytest.approx(0.0, abs=1e-12)
        assert tight.bound <= base.bound
        assert base.bound_holds and tight.bound_holds

    def test_eta_warning(self, data, snap_run):
        report = theorem_bound_check(snap_run, data, l_hat=10.0, eta=1.0)
        assert report.eta_warning


class TestStudy:
    def test_full_study_passes_all_checks(self):
        spec = SyntheticSpec(n_train=500, n_val=120, n_query=50, n_reference=5000, seed=0)
        study = run_theory_study(seed=0, spec=spec, epochs=20)
        b = study.bound
        assert b.subset_gap_violations == []
        assert b.descent_ok
        assert b.slack > 0
        assert not b.eta_warning
        assert study.eta == pytest.approx(0.5 / study.l_hat)
        d = b.to_dict()
        assert d["bound_holds"] and isinstance(d["kappa"], float)
