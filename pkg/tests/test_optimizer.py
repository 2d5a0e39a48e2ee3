import numpy as np
import pytest

from fpclass import optimizer as opt
from fpclass.errors import InvalidArgumentError, StateError
from fpclass.network import Network
from fpclass.rng import RngStream
from fpclass.topology import NetworkTopology, fc_spec


class TestLrSchedule:
    CFG = opt.CAFFENET_SGD

    def test_base_rate(self):
        assert opt.lr_at(self.CFG, 0) == 0.01

    def test_first_drop(self):
        assert opt.lr_at(self.CFG, 500) == pytest.approx(0.001)

    def test_late_iteration(self):
        assert opt.lr_at(self.CFG, 1999) == pytest.approx(1e-5)

    def test_drop_count(self):
        cfg = self.CFG
        rates = [opt.lr_at(cfg, it) for it in range(cfg.iterations)]
        drops = sum(1 for a, b in zip(rates, rates[1:]) if b < a)
        assert drops == (cfg.iterations - 1) // cfg.step_size
        assert len(set(rates)) == drops + 1  # piecewise constant


class TestSgdStep:
    def _step(self, w, g, cfg, state=None):
        w = np.array([w], dtype=np.float64)
        g = np.array([g], dtype=np.float64)
        state = state or opt.OptimizerState([w])
        opt.sgd_step([w], [g], state, cfg)
        return w[0], state

    def test_fixed_point(self):
        cfg = opt.SgdConfig(1, 1, 0.1, 0.9, 1.0, 1, 0.0)
        w, _ = self._step(1.0, 0.0, cfg)
        assert w == 1.0

    def test_plain_descent(self):
        cfg = opt.SgdConfig(1, 1, 0.1, 0.0, 1.0, 1, 0.0)
        w, _ = self._step(1.0, 0.5, cfg)
        assert w == pytest.approx(0.95)

    def test_two_step_momentum_trace(self):
        cfg = opt.SgdConfig(1, 2, 0.1, 0.9, 1.0, 10, 0.0)
        w = np.array([1.0])
        state = opt.OptimizerState([w])
        opt.sgd_step([w], [np.array([1.0])], state, cfg)
        assert w[0] == pytest.approx(0.9)  # v1 = -0.1
        opt.sgd_step([w], [np.array([1.0])], state, cfg)
        assert w[0] == pytest.approx(0.71)  # v2 = 0.9*(-0.1) - 0.1 = -0.19
        assert state.iteration == 2

    def test_pure_decay_shrinks_norm(self):
        cfg = opt.SgdConfig(1, 1, 0.1, 0.0, 1.0, 1, 0.5)
        w = np.array([2.0, -3.0])
        state = opt.OptimizerState([w])
        for _ in range(20):
            before = np.linalg.norm(w)
            opt.sgd_step([w], [np.zeros(2)], state, cfg)
            assert np.linalg.norm(w) < before

    def test_shape_mismatch(self):
        w = np.zeros(3)
        state = opt.OptimizerState([w])
        with pytest.raises(StateError):
            opt.sgd_step([w], [np.zeros(4)], state, opt.CAFFENET_SGD)


class TestConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(InvalidArgumentError):
            opt.SgdConfig(0, 1, 0.1, 0.9, 0.1, 1, 0.0)
        with pytest.raises(InvalidArgumentError):
            opt.SgdConfig(1, 1, 0.1, 1.0, 0.1, 1, 0.0)
        with pytest.raises(InvalidArgumentError):
            opt.SgdConfig(1, 1, 0.1, 0.9, 0.0, 1, 0.0)
        with pytest.raises(InvalidArgumentError):
            opt.SgdConfig(1, 1, 0.1, 0.9, 0.1, 0, 0.0)
        with pytest.raises(InvalidArgumentError):
            opt.SgdConfig(1, 1, 0.1, 0.9, 0.1, 1, -0.1)

    def test_table_defaults(self):
        assert opt.CAFFENET_SGD == opt.SgdConfig(256, 2000, 0.01, 0.9, 0.1, 500, 0.001)
        assert opt.PROPOSED_SGD == opt.SgdConfig(128, 4000, 0.01, 0.9, 0.1, 1000, 0.0005)
        assert opt.PROPOSED_SGD_SMALL.iterations == 1300
        assert opt.PROPOSED_SGD_SMALL.step_size == 220


def _toy_topology():
    return NetworkTopology((1, 6, 6), (
        fc_spec(16, "relu"),
        fc_spec(5, "softmax"),
    ))


def _toy_data(n=40, seed=0):
    """Two linearly separable classes: bright top half vs bright bottom half."""
    gen = RngStream(seed).generator
    images = gen.uniform(0, 40, size=(n, 6, 6))
    labels = np.arange(n) % 2
    for i, lab in enumerate(labels):
        rows = slice(0, 3) if lab == 0 else slice(3, 6)
        images[i, rows, :] += 180
    return images, labels


class TestTrain:
    CFG = opt.SgdConfig(batch_size=8, iterations=200, learning_rate=1e-4,
                        momentum=0.9, gamma=0.1, step_size=150, weight_decay=0.0)

    def _network(self, images):
        top = _toy_topology()
        from fpclass.topology import compute_mean_offset
        top = top.with_mean_offset(compute_mean_offset(images))
        return Network(top, dtype=np.float32, rng=RngStream(5))

    def test_zero_iterations_unchanged(self):
        images, labels = _toy_data()
        net = self._network(images)
        before = [p.value.copy() for p in net.params]
        losses = opt.train(net, images, labels, self.CFG.updated(iterations=0), RngStream(1))
        assert len(losses) == 0
        for b, p in zip(before, net.params):
            assert np.array_equal(b, p.value)

    def test_deterministic_given_seed(self):
        images, labels = _toy_data()
        weights = []
        for _ in range(2):
            net = self._network(images)
            opt.train(net, images, labels, self.CFG, RngStream(1))
            weights.append([p.value.copy() for p in net.params])
        for a, b in zip(*weights):
            assert np.array_equal(a, b)

    def test_separable_data_reaches_full_accuracy(self):
        images, labels = _toy_data()
        net = self._network(images)
        losses = opt.train(net, images, labels, self.CFG, RngStream(1))
        assert (net.predict(images) == labels).all()
        # decreasing trend: late losses below early losses
        k = max(1, len(losses) // 10)
        assert losses[-k:].mean() < losses[:k].mean()

    def test_empty_dataset_rejected(self):
        net = self._network(np.ones((1, 6, 6)))
        with pytest.raises(InvalidArgumentError):
            opt.train(net, np.zeros((0, 6, 6)), np.zeros(0), self.CFG, RngStream(1))

    def test_loss_trace_csv(self, tmp_path):
        images, labels = _toy_data(12)
        net = self._network(images)
        losses = opt.train(net, images, labels, self.CFG.updated(iterations=5), RngStream(1))
        path = tmp_path / "trace.csv"
        opt.write_loss_trace(path, losses, self.CFG)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,learning_rate,loss"
        assert len(lines) == 6
        assert lines[1].startswith("0,0.0001,")
