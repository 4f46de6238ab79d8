"""Both backends compute the same thing; the env flag selects between them."""
import os
import subprocess
import sys

import numpy as np
import pytest

from mmseeker import kernels

numba_only = pytest.mark.skipif("numba" not in kernels.IMPLEMENTATIONS, reason="numba missing")
NP, NB = kernels.IMPLEMENTATIONS["numpy"], kernels.IMPLEMENTATIONS.get("numba", {})


@numba_only
class TestParity:
    def test_fused_scores(self, rng):
        v = rng.normal(size=(300, 4, 16)).astype(np.float32)
        g, t = rng.dirichlet(np.ones(4)), rng.normal(size=16)
        np.testing.assert_allclose(NB["fused_scores"](v, g, t), NP["fused_scores"](v, g, t), rtol=1e-10)

    def test_dot_rows(self, rng):
        x, q = rng.normal(size=(100, 9)), rng.normal(size=9)
        np.testing.assert_allclose(NB["dot_rows"](x, q), NP["dot_rows"](x, q), rtol=1e-12)

    def test_pq_scan(self, rng):
        rows = rng.normal(size=(3, 3, 4, 32)).astype(np.float32)
        codes = rng.integers(32, size=(200, 3, 4)).astype(np.uint16)
        w = rng.random(3)
        np.testing.assert_allclose(NB["pq_scan"](rows, codes, w, w), NP["pq_scan"](rows, codes, w, w),
                                   rtol=1e-10)

    def test_pq_assign(self, rng):
        x, c = rng.normal(size=(200, 12)).astype(np.float32), rng.normal(size=(3, 20, 4)).astype(np.float32)
        np.testing.assert_array_equal(NB["pq_assign"](x, c), NP["pq_assign"](x, c))

    def test_lut_scan(self, rng):
        lut = rng.normal(size=(4, 3, 16))
        codes = rng.integers(16, size=(100, 4, 3)).astype(np.uint16)
        w = rng.random(4)
        np.testing.assert_allclose(NB["lut_scan"](lut, codes, w), NP["lut_scan"](lut, codes, w), rtol=1e-12)

    def test_hamming(self, rng):
        keys = rng.integers(0, 2**63, size=(50, 3), dtype=np.uint64)
        t = keys[7].copy()
        t[1] ^= np.uint64(0b1011)
        a, b = NB["hamming_scan"](keys, t), NP["hamming_scan"](keys, t)
        np.testing.assert_array_equal(a, b)
        assert a[7] == 3

    def test_nearest_centroid(self, rng):
        x, c = rng.normal(size=(500, 5)), rng.normal(size=(17, 5))
        la, da = NB["nearest_centroid"](x, c)
        lb, db = NP["nearest_centroid"](x, c)
        np.testing.assert_array_equal(la, lb)
        np.testing.assert_allclose(da, db, rtol=1e-12)

    def test_assign_expanded(self, rng):
        x, c = rng.normal(size=(500, 5)), rng.normal(size=(17, 5))
        pn = (x ** 2).sum(axis=1)
        la, da = NB["assign_expanded"](x, pn, c)
        lb, db = NP["assign_expanded"](x, pn, c)
        np.testing.assert_array_equal(la, lb)
        np.testing.assert_allclose(da, db, rtol=1e-9, atol=1e-12)

    def test_cluster_sums(self, rng):
        x, lab = rng.normal(size=(100, 3)), rng.integers(5, size=100)
        sa, ca = NB["cluster_sums"](x, lab, 6)
        sb, cb = NP["cluster_sums"](x, lab, 6)
        np.testing.assert_allclose(sa, sb, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(ca, cb)


def _run(code: str, flag: str) -> str:
    env = dict(os.environ, MMSEEKER_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    return out.stdout.strip()


@pytest.mark.parametrize("flag,expected", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_env_flag_selects_backend(flag, expected):
    if expected == "numba" and not NB:
        pytest.skip("numba missing")
    code = ("from mmseeker import kernels, backend_name;"
            "print(backend_name(), kernels.pq_scan.__name__)")
    name, fn = _run(code, flag).split()
    assert name == expected and fn.endswith(expected)


def test_backends_give_same_ranking():
    code = ("import numpy as np\n"
            "from mmseeker.synth import SynthConfig, generate, generate_target\n"
            "from mmseeker.pq_retrieval import MultiModalPQ\n"
            "c = SynthConfig(L=300, d=16, seed=4)\n"
            "s = generate(c)\n"
            "m = MultiModalPQ.fit(s, 4, 16, seed=0)\n"
            "r = m.search(generate_target(c, 0), c.fusion, 10)\n"
            "print(','.join(map(str, r.positions)))\n")
    assert _run(code, "0") == _run(code, "1")
