import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from schattenlab.schatten import (MAX_DIM, DenseOperator, dump_operator, hilbert_schmidt_norm,
                                  load_operator, schatten_norm, singular_values, trace_power,
                                  weak_schatten_quasinorm)


def rand(n, seed):
    r = np.random.default_rng(seed)
    return r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))


def test_identity_modes_scale_with_weight():
    A = DenseOperator(np.eye(5), weight=0.25)
    assert np.allclose(singular_values(A), 0.25)


def test_rank_one():
    r = np.random.default_rng(1)
    u, v = r.normal(size=6), r.normal(size=6)
    s = singular_values(DenseOperator(np.outer(u, v)))
    assert s[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))
    assert np.all(s[1:] < 1e-12)


def test_svd_against_eigenvalues():
    M = rand(8, 2)
    s = singular_values(DenseOperator(M))
    ev = np.sqrt(np.sort(np.linalg.eigvalsh(M.conj().T @ M))[::-1])
    assert np.allclose(s, ev)


def test_schatten_basics():
    w = 0.5
    A = DenseOperator(np.diag([1.0, 1.0, 0.0]), weight=w)
    assert schatten_norm(A, 2) == pytest.approx(np.sqrt(2) * w)
    P = rand(6, 3)
    P = DenseOperator(P @ P.conj().T, hermitian=True)
    assert schatten_norm(P, 1) == pytest.approx(trace_power(P, 1).real)
    big = DenseOperator(rand(10, 4))
    assert schatten_norm(big, 1e3) == pytest.approx(singular_values(big)[0], rel=0.01)
    with pytest.raises(ValueError):
        schatten_norm(A, 0.5)


def test_size_cap():
    with pytest.raises(ValueError):
        singular_values(DenseOperator(np.zeros((MAX_DIM + 1, MAX_DIM + 1))))


def test_weak_quasinorm():
    r = 3.0
    s = np.arange(1, 40) ** (-1 / r)
    assert weak_schatten_quasinorm(DenseOperator(np.diag(s)), r) == pytest.approx(1.0)
    u = np.ones(4)
    one = DenseOperator(np.outer(u, u))
    assert weak_schatten_quasinorm(one, 2.0) == pytest.approx(4.0)
    M = rand(7, 5)
    P = DenseOperator(M @ M.conj().T, hermitian=True)
    sv = singular_values(P)
    brute = max((k + 1) ** (1 / 2.5) * sv[k] for k in range(sv.size))
    assert weak_schatten_quasinorm(P, 2.5) == pytest.approx(brute)
    assert weak_schatten_quasinorm(P, 2.5) <= schatten_norm(P, 2.5) * (1 + 1e-12)


def test_trace_powers():
    P = np.diag([1.0, 1.0, 1.0, 0.0])
    for m in (1, 2, 5):
        assert trace_power(DenseOperator(P, weight=1.0, hermitian=True), m).real == pytest.approx(3)
    H = rand(6, 9)
    H = H + H.conj().T
    lam = np.linalg.eigvalsh(H)
    assert trace_power(DenseOperator(H, hermitian=True), 3).real == pytest.approx(np.sum(lam ** 3))
    assert trace_power(DenseOperator(H), 3).real == pytest.approx(np.sum(lam ** 3))


def test_hilbert_schmidt_from_entries():
    A = DenseOperator(rand(9, 5), weight=0.3)
    assert hilbert_schmidt_norm(A) == pytest.approx(schatten_norm(A, 2))


def test_binary_dump_round_trip(tmp_path):
    A = DenseOperator(rand(5, 6), basis="momentum", weight=0.1)
    path = tmp_path / "op.bin"
    dump_operator(A, path)
    raw = path.read_bytes()
    assert len(raw) == 16 + 25 * 16
    assert np.frombuffer(raw[:16], "<u4").tolist() == [5, 5, 1, 0]
    B = load_operator(path)
    assert B.basis == "momentum"
    assert np.allclose(singular_values(A), singular_values(B))


def test_hermitian_flag_checked():
    with pytest.raises(ValueError):
        DenseOperator(np.array([[0, 1], [0, 0]], float), hermitian=True)


@given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 8.0))
def test_unitary_invariance_triangle_monotonicity(seed, r):
    A = DenseOperator(rand(6, seed))
    B = DenseOperator(rand(6, seed + 1))
    U = unitary_group.rvs(6, random_state=seed % 2 ** 31)
    W = unitary_group.rvs(6, random_state=(seed + 7) % 2 ** 31)
    a = schatten_norm(A, r)
    assert schatten_norm(DenseOperator(U @ A.matrix @ W), r) == pytest.approx(a, rel=1e-8)
    assert schatten_norm(A + B, r) <= a + schatten_norm(B, r) + 1e-10
    assert schatten_norm(A, r + 1.0) <= a * (1 + 1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.floats(1.1, 6.0))
def test_holder(seed, a):
    A = DenseOperator(rand(5, seed))
    B = DenseOperator(rand(5, seed + 3))
    b = a / (a - 1)
    lhs = abs(np.trace(A.matrix @ B.matrix))
    assert lhs <= schatten_norm(A, a) * schatten_norm(B, b) * (1 + 1e-10)
