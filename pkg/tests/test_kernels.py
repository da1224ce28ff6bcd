"""Cross-backend agreement and gradient checks for the kernel layer."""

import numpy as np
import pytest

from duracd import nn
from duracd._kernels import available_backends
from duracd.nn import DenseParams, LstmState, LstmWeights

from conftest import finite_diff, rel_err

BACKENDS = available_backends()


def random_acd_case(seed, n=4000, p=2, q=2):
    rng = np.random.default_rng(seed)
    dt = rng.exponential(1.0, n)
    alphas = rng.uniform(0.02, 0.15, p)
    betas = rng.uniform(0.05, 0.35, q)
    return 0.1 + rng.uniform(0, 0.2), alphas, betas, dt, 1.0 + rng.uniform(0, 1)


def random_net_case(seed, B=3, T=5, nf=2, H=3, dh=2):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(B, T, nf))
    seeds = rng.normal(size=B)
    args = (
        rng.normal(size=(H, H + nf + 1)) * 0.4, rng.normal(size=(H, H + nf + 1)) * 0.4,
        rng.normal(size=(H, H + nf + 1)) * 0.4, rng.normal(size=(H, H + nf + 1)) * 0.4,
        rng.normal(size=H) * 0.2, rng.normal(size=H) * 0.2,
        rng.normal(size=H) * 0.2, rng.normal(size=H) * 0.2,
        rng.normal(size=(dh, H)) * 0.4, rng.normal(size=dh) * 0.2,
        rng.normal(size=dh) * 0.4, float(rng.normal() * 0.2),
    )
    return feats, seeds, args


def test_both_backends_importable():
    assert "numpy" in BACKENDS
    if "cython" not in BACKENDS:
        pytest.skip("compiled extension not built")


@pytest.mark.skipif("cython" not in BACKENDS, reason="no compiled extension")
class TestCrossBackend:
    def test_acd_recursion_bitwise(self):
        omega, alphas, betas, dt, pre = random_acd_case(0)
        a = BACKENDS["numpy"].acd_recursion(omega, alphas, betas, dt, pre)
        b = BACKENDS["cython"].acd_recursion(omega, alphas, betas, dt, pre)
        assert np.array_equal(a, b)

    def test_acd_simulate_bitwise(self):
        omega, alphas, betas, _, pre = random_acd_case(1)
        eps = np.random.default_rng(5).exponential(1.0, 3000)
        a = BACKENDS["numpy"].acd_simulate(omega, alphas, betas, eps, pre)
        b = BACKENDS["cython"].acd_simulate(omega, alphas, betas, eps, pre)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_acd_nll_grad_close(self):
        for seed in range(3):
            omega, alphas, betas, dt, pre = random_acd_case(seed)
            got_a = BACKENDS["numpy"].acd_nll_grad(omega, alphas, betas, dt, pre)
            got_b = BACKENDS["cython"].acd_nll_grad(omega, alphas, betas, dt, pre)
            for a, b in zip(got_a, got_b):
                assert rel_err(a, b) < 1e-12

    def test_hybrid_forward_backward_close(self):
        feats, seeds, args = random_net_case(2)
        ca = BACKENDS["numpy"].hybrid_forward(feats, seeds, *args)
        cb = BACKENDS["cython"].hybrid_forward(feats, seeds, *args)
        for key in ca:
            assert rel_err(ca[key], cb[key]) < 1e-12, key
        rng = np.random.default_rng(3)
        dh_ext = rng.normal(size=ca["h"].shape)
        dy_ext = rng.normal(size=ca["y"].shape)
        ga = BACKENDS["numpy"].hybrid_backward(feats, seeds, *args, ca, dh_ext, dy_ext)
        gb = BACKENDS["cython"].hybrid_backward(feats, seeds, *args, cb, dh_ext, dy_ext)
        for key in ga:
            assert rel_err(np.asarray(ga[key]), np.asarray(gb[key])) < 1e-11, key


class TestAcdKernels:
    def test_nll_consistent_with_recursion(self, backend):
        omega, alphas, betas, dt, pre = random_acd_case(4)
        mu = backend.acd_recursion(omega, alphas, betas, dt, pre)
        manual = float(np.sum(np.log(mu) + dt / mu))
        assert abs(backend.acd_nll(omega, alphas, betas, dt, pre) - manual) < 1e-8

    def test_grad_matches_finite_differences(self, backend):
        # relative error < 1e-6 at random admissible parameter points
        for seed in range(4):
            omega, alphas, betas, dt, pre = random_acd_case(seed, n=1500)
            nll, dw, da, db = backend.acd_nll_grad(omega, alphas, betas, dt, pre)
            theta = np.concatenate([[omega], alphas, betas])
            p = alphas.shape[0]

            def f(th):
                return backend.acd_nll(th[0], th[1:1 + p], th[1 + p:], dt, pre)

            fd = finite_diff(f, theta, eps=3e-6)
            analytic = np.concatenate([[dw], da, db])
            assert rel_err(analytic, fd) < 1e-6

    def test_simulate_replay_identity(self, backend):
        omega, alphas, betas, _, pre = random_acd_case(6)
        eps = np.random.default_rng(8).exponential(1.0, 2000)
        dt, mu = backend.acd_simulate(omega, alphas, betas, eps, pre)
        mu_replay = backend.acd_recursion(omega, alphas, betas, dt, pre)
        assert np.array_equal(mu, mu_replay)


class TestHybridKernel:
    def test_forward_matches_stepwise_composition(self, backend):
        """The fused kernel must agree with the single-step reference ops
        chained by hand, including the ln-mu feedback."""
        feats, seeds, args = random_net_case(9, B=2, T=6, nf=1, H=4, dh=3)
        cache = backend.hybrid_forward(feats, seeds, *args)
        (Wf, Wi, Wo, Wc, bf, bi, bo, bc, W1, b1, w2, b2) = args
        w = LstmWeights(W_f=Wf, W_i=Wi, W_o=Wo, W_c=Wc, b_f=bf, b_i=bi, b_o=bo, b_c=bc)
        head = DenseParams(layers=[(W1, b1), (w2[None, :], np.array([b2]))])
        for b in range(feats.shape[0]):
            state = LstmState.zeros(4)
            fb = seeds[b]
            for t in range(feats.shape[1]):
                x = np.concatenate([feats[b, t], [fb]])
                state, _ = nn.lstm_step(w, x, state)
                y, _ = nn.dense_forward(head, state.h)
                fb = float(y[0])
                assert rel_err(state.h, cache["h"][b, t]) < 1e-12
                assert rel_err(fb, cache["y"][b, t]) < 1e-12

    def test_backward_matches_finite_differences(self, backend):
        feats, seeds, args = random_net_case(10)
        rng = np.random.default_rng(11)
        cache = backend.hybrid_forward(feats, seeds, *args)
        dh_ext = rng.normal(size=cache["h"].shape)
        dy_ext = rng.normal(size=cache["y"].shape)
        grads = backend.hybrid_backward(feats, seeds, *args, cache, dh_ext, dy_ext)

        def loss_for(idx):
            def f(arr):
                a2 = list(args)
                a2[idx] = arr if args[idx].ndim else float(arr)
                c = backend.hybrid_forward(feats, seeds, *a2)
                return float(np.sum(dh_ext * c["h"]) + np.sum(dy_ext * c["y"]))
            return f

        names = ["Wf", "Wi", "Wo", "Wc", "bf", "bi", "bo", "bc", "W1", "b1", "w2"]
        for idx, name in enumerate(names):
            fd = finite_diff(loss_for(idx), args[idx])
            assert rel_err(np.asarray(grads[name]), fd) < 1e-6, name

        def f_feats(fa):
            c = backend.hybrid_forward(fa, seeds, *args)
            return float(np.sum(dh_ext * c["h"]) + np.sum(dy_ext * c["y"]))

        assert rel_err(grads["feats"], finite_diff(f_feats, feats)) < 1e-6

        def f_seed(s):
            c = backend.hybrid_forward(feats, s, *args)
            return float(np.sum(dh_ext * c["h"]) + np.sum(dy_ext * c["y"]))

        assert rel_err(grads["seed"], finite_diff(f_seed, seeds)) < 1e-6

    def test_deterministic(self, backend):
        feats, seeds, args = random_net_case(12)
        a = backend.hybrid_forward(feats, seeds, *args)
        b = backend.hybrid_forward(feats, seeds, *args)
        for key in a:
            assert np.array_equal(a[key], b[key])
