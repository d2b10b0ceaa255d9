import math

import numpy as np
import pytest

import driftsync.simulator as simulator
from driftsync.learners import Compression, LearnerParams, LossSpec, update
from driftsync.protocol import SyncStrategy
from driftsync.rkhs import KernelModel, KernelSpec, point_key
from driftsync.simulator import ExperimentConfig, NumericalError, compare, run
from driftsync.streams import StreamSpec, generate_example, make_stream

XOR = StreamSpec("gaussian_xor", seed=3, cluster_sd=0.7)
TRUNC = LearnerParams(0.5, 0.01, Compression("truncate", 30))


def cfg(strategy, m=4, T=150, stream=XOR, params=TRUNC, **kw):
    return ExperimentConfig(m=m, T=T, stream=stream, params=params, strategy=strategy, **kw)


def test_serial_oracle_equivalence():
    c = cfg(SyncStrategy.none(), m=1, T=200)
    r = run(c)
    f = KernelModel.empty(c.kernel, 2)
    losses = []
    for t in range(1, 201):
        x, y = generate_example(c.stream, 0, t)
        out = update(f, x, y, c.params, c.loss, birth=(t, 0))
        losses.append(out.loss)
        f = out.model
    assert r.losses[:, 0].tolist() == losses
    assert np.array_equal(r.final_models[0].coeffs, f.coeffs)


@pytest.mark.parametrize("strategy", [SyncStrategy.continuous(), SyncStrategy.periodic(7),
                                      SyncStrategy.dynamic(0.3)])
def test_single_learner_matches_no_sync(strategy):
    base = run(cfg(SyncStrategy.none(), m=1))
    other = run(cfg(strategy, m=1))
    assert other.losses.tolist() == base.losses.tolist()


def test_identical_streams_stay_identical(monkeypatch):
    real = make_stream

    class Shared:
        def __init__(self, spec, m):
            self.inner = real(spec, m)
            self.dim = self.inner.dim

        def example(self, i, t):
            return self.inner.example(0, t)

    monkeypatch.setattr(simulator, "make_stream", Shared)
    r = run(cfg(SyncStrategy.continuous(), T=100))
    assert all(rec.divergence_at_check in (None, 0.0) for rec in r.ledger.records)
    assert np.all(r.losses == r.losses[:, :1])
    first = r.final_models[0]
    assert all(np.array_equal(f.coeffs, first.coeffs) for f in r.final_models)


def test_zero_learning_rate():
    for s in (SyncStrategy.continuous(), SyncStrategy.dynamic(0.1)):
        r = run(cfg(s, T=50, params=LearnerParams(0.0, 0.0)))
        assert r.cum_loss == 4 * 50
        assert r.cum_bytes == 0
        assert all(len(f) == 0 for f in r.final_models)


def test_determinism():
    a = run(cfg(SyncStrategy.dynamic(0.3)))
    b = run(cfg(SyncStrategy.dynamic(0.3)))
    assert a.losses.tobytes() == b.losses.tobytes()
    assert a.drift.tobytes() == b.drift.tobytes()
    assert [r.bytes for r in a.ledger.records] == [r.bytes for r in b.ledger.records]


def test_monotone_series_and_conservation():
    r = run(cfg(SyncStrategy.dynamic(0.3), T=120, metrics_every=7))
    assert r.losses.shape == (120, 4)
    assert r.sample_rounds[-1] == 120
    for s in (r.cum_loss_series, r.cum_bytes_series, r.cum_syncs_series):
        assert np.all(np.diff(s) >= 0)


def test_continuous_uncompressed_support_is_loss_set():
    params = LearnerParams(0.5, 0.0)
    c = cfg(SyncStrategy.continuous(), m=3, T=60, params=params)
    r = run(c)
    lossy = {point_key(generate_example(c.stream, i, t)[0])
             for t in range(1, 61) for i in range(3) if r.losses[t - 1, i] > 0}
    for f in r.final_models:
        assert set(f.keys) == lossy


def test_numerical_failure_is_reported():
    c = ExperimentConfig(m=2, T=50, stream=StreamSpec("rotating_hyperplane", seed=1, d=3), kernel=None,
                         loss=LossSpec("squared"), params=LearnerParams(1e200, 0.0),
                         strategy=SyncStrategy.none())
    with pytest.raises(NumericalError) as info:
        run(c)
    assert info.value.t >= 1 and info.value.learner in (0, 1)


def test_csv_exhaustion_shortens_run(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("\n".join(f"{i * 0.1},{(-1) ** i}" for i in range(25)) + "\n")
    c = cfg(SyncStrategy.continuous(), m=4, T=100,
            stream=StreamSpec("csv", path=str(p)), params=LearnerParams(0.5, 0.0))
    r = run(c)
    assert r.shortened and r.rounds_completed == 6 and r.T == 6


def test_linear_runs():
    c = ExperimentConfig(m=3, T=100, stream=StreamSpec("rotating_hyperplane", seed=2, d=5), kernel=None,
                         params=LearnerParams(0.1, 0.0), strategy=SyncStrategy.periodic(5))
    r = run(c)
    assert r.syncs == 20
    assert all(rec.bytes == 2 * 3 * 40 for rec in r.ledger.records if rec.theta)


def test_compare_rejects_mismatched_configs():
    with pytest.raises(ValueError):
        compare([cfg(SyncStrategy.continuous()), cfg(SyncStrategy.dynamic(1.0), T=10)])


def test_compare_lossless_stream_quiesces():
    # well separated clusters: both protocols stop communicating once loss stops
    stream = StreamSpec("gaussian_xor", seed=2, cluster_sd=0.1)
    params = LearnerParams(1.0, 0.0, Compression("truncate", 50))
    k = KernelSpec("gaussian", 0.5)
    cmp = compare([cfg(SyncStrategy.dynamic(5.0), T=300, stream=stream, params=params, kernel=k),
                   cfg(SyncStrategy.periodic(1), T=300, stream=stream, params=params, kernel=k)])
    dyn, per = cmp.results
    assert dyn.cum_bytes <= per.cum_bytes
    assert not cmp.bound_violations
    assert len(cmp.rows) == 2 and cmp.rows[0].strategy.startswith("dynamic")
    last_loss = int(np.nonzero(dyn.losses.sum(axis=1))[0].max()) + 1
    assert dyn.quiescence_round <= last_loss


def test_none_vs_continuous_reported():
    cmp = compare([cfg(SyncStrategy.none()), cfg(SyncStrategy.continuous())])
    none_row, cont_row = cmp.rows
    print(f"none L={none_row.cum_loss:.1f}, continuous L={cont_row.cum_loss:.1f}")
    assert none_row.cum_bytes == 0
