import os
import subprocess
import sys

import numpy as np
import pytest

from safepredict import _backend, _kernel_py
from safepredict.meta import MetaConfig, SafePredict

compiled = _backend.compiled_kernel()
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled kernel not built")


def _inputs(variant, n, seed):
    rng = np.random.default_rng(seed)
    losses = np.where(rng.random(n) < 0.5, rng.random(n), (rng.random(n) < 0.2).astype(float))
    kw = dict(plain=dict(eta=0.8), adaptive=dict(eta=2.0, alpha=rng.uniform(0, 0.01, n),
                                                 beta=rng.uniform(0.95, 1, n)),
              doubling={}, ws_doubling=dict(alpha=5.0 / n, horizon=n))[variant]
    cfg = MetaConfig(0.07, w_init=0.4, variant=variant, **kw)
    sp = SafePredict(cfg, seed=seed)
    return (losses, rng.random(n), cfg.alphas(0, n), cfg.betas(0, n), cfg.epsilon,
            cfg.w_init, cfg.log_inv_wd, cfg.variant.doubling, sp.state._pack())


@needs_ext
@pytest.mark.parametrize("variant", ["plain", "doubling", "adaptive", "ws_doubling"])
@pytest.mark.parametrize("seed", range(3))
def test_backends_bit_identical(variant, seed):
    args = _inputs(variant, 20000, seed)
    a = _kernel_py.simulate(*args)
    b = compiled.simulate(*args)
    assert tuple(a[0]) == tuple(b[0])
    for x, y in zip(a[1:], b[1:]):
        assert x.dtype == np.asarray(y).dtype
        assert np.array_equal(x, np.asarray(y))


@needs_ext
def test_sigmoid_pair_identical_at_extremes():
    for z in (-800.0, -40.0, -1e-300, 0.0, 1e-300, 3.7, 40.0, 800.0):
        assert _kernel_py.sigmoid_pair(z) == tuple(compiled.sigmoid_pair(z))


def test_sigmoid_pair_never_overflows():
    p, d = _kernel_py.sigmoid_pair(-1e6)
    assert p == 0.0 and d == 1.0
    p, d = _kernel_py.sigmoid_pair(1e6)
    assert p == 1.0 and d == 0.0


def test_fallback_selected_by_environment():
    code = "import safepredict; print(safepredict.BACKEND)"
    env = dict(os.environ, SAFEPREDICT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_compiled_backend_is_default():
    if os.environ.get("SAFEPREDICT_PURE_PYTHON"):
        pytest.skip("fallback forced")
    assert _backend.NAME == "cython"
