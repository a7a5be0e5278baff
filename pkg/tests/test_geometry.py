import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptok.geometry import (
    CLASSES,
    assign_sse,
    center,
    frechet_distance,
    ideal_helix,
    ideal_strand,
    kabsch_rmsd,
    random_rotation,
    read_coords,
    read_pdb_ca,
    sse_fractions,
    synth_chain,
    synth_corpus,
    tm_align,
    tm_d0,
    tm_score,
    write_coords,
)
from adaptok.geometry.synth import min_nonbonded


def _rot_z(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1.0]])


def _horn_superpose(a, b):
    """Optimal rotation via Horn's quaternion eigenproblem (independent of SVD)."""
    a = a - a.mean(0)
    b = b - b.mean(0)
    s = a.T @ b
    sxx, sxy, sxz, syx, syy, syz, szx, szy, szz = s.ravel()
    n = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    w, v = np.linalg.eigh(n)
    q0, q1, q2, q3 = v[:, -1]
    r = np.array([
        [q0**2 + q1**2 - q2**2 - q3**2, 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2)],
        [2 * (q1 * q2 + q0 * q3), q0**2 - q1**2 + q2**2 - q3**2, 2 * (q2 * q3 - q0 * q1)],
        [2 * (q1 * q3 - q0 * q2), 2 * (q2 * q3 + q0 * q1), q0**2 - q1**2 - q2**2 + q3**2],
    ])
    return a @ r.T, b


def _coords(seed, n=12):
    return np.random.default_rng(seed).normal(size=(n, 3))


# center


def test_center_single_point():
    np.testing.assert_array_equal(center([[1.0, 2.0, 3.0]]), [[0, 0, 0]])


def test_center_two_points():
    np.testing.assert_allclose(center([[0, 0, 0], [2.0, 0, 0]]), [[-1, 0, 0], [1, 0, 0]])


def test_center_is_idempotent():
    c = center(_coords(0))
    np.testing.assert_allclose(center(c), c, atol=1e-15)
    assert np.linalg.norm(c.mean(0)) < 1e-6


def test_center_rejects_bad_shape():
    with pytest.raises(ValueError):
        center(np.zeros((3, 2)))


# rotations


@pytest.mark.parametrize("seed", range(5))
def test_random_rotation_is_proper_orthogonal(seed):
    r = random_rotation(seed)
    assert np.abs(r.T @ r - np.eye(3)).max() < 1e-6
    assert abs(np.linalg.det(r) - 1.0) < 1e-6


def test_random_rotation_mean_vanishes():
    rng = np.random.default_rng(0)
    mean = np.mean([random_rotation(rng) for _ in range(10_000)], axis=0)
    assert np.abs(mean).max() < 0.05


def test_random_rotation_is_deterministic():
    np.testing.assert_array_equal(random_rotation(42), random_rotation(42))


# kabsch


def test_kabsch_rigid_copy_is_zero():
    a = _coords(1)
    b = a @ random_rotation(3).T + np.array([1.0, -2.0, 0.5])
    assert kabsch_rmsd(a, b) < 1e-5


def test_kabsch_identical_is_zero():
    a = _coords(2)
    assert kabsch_rmsd(a, a) == pytest.approx(0.0, abs=1e-12)


def test_kabsch_segment_matches_grid_search():
    a = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    b = np.array([[0.0, 0, 0], [1.0, 0.2, 0]])
    ac, bc = a - a.mean(0), b - b.mean(0)
    grid = min(np.sqrt(np.mean(np.sum((ac @ _rot_z(d).T - bc) ** 2, 1))) for d in np.arange(0, 360, 1.0))
    # out-of-plane rotations can only do worse; a coarse 3-D sweep confirms it
    coarse = min(
        np.sqrt(np.mean(np.sum((ac @ (_rot_z(g) @ _rot_x(b_) @ _rot_z(a_)).T - bc) ** 2, 1)))
        for a_ in range(0, 360, 15) for b_ in range(0, 181, 15) for g in range(0, 360, 15)
    )
    k = kabsch_rmsd(a, b)
    assert abs(k - grid) < 1e-3
    assert k <= coarse + 1e-12
    assert k == pytest.approx(np.sqrt(0.26) - 0.5, abs=1e-9)


def _rot_x(deg):
    a = np.radians(deg)
    return np.array([[1.0, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])


def test_kabsch_handles_reflection():
    a = _coords(4)
    mirrored = a * np.array([1.0, 1.0, -1.0])
    pa, pb = _horn_superpose(a, mirrored)
    horn = np.sqrt(np.mean(np.sum((pa - pb) ** 2, 1)))
    assert kabsch_rmsd(a, mirrored) == pytest.approx(horn, abs=1e-9)
    assert kabsch_rmsd(a, mirrored) > 0.1


def test_kabsch_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        kabsch_rmsd(_coords(0, 5), _coords(0, 6))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 40), st.floats(-5, 5))
def test_kabsch_rigid_invariance_property(seed, n, shift):
    a = _coords(seed, n)
    b = a @ random_rotation(seed + 1).T + shift
    assert kabsch_rmsd(a, b) < 1e-5


# TM-score


def test_tm_identical_is_one():
    a = _coords(5, 30)
    assert tm_score(a, a) == pytest.approx(1.0, abs=1e-12)


def test_tm_all_distances_d0_is_half():
    # a ring and its dilation: the identity is the optimal alignment and every d_i = d0
    n = 40
    d0_nm = tm_d0(n) / 10.0
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    a = np.stack([np.cos(ang), np.sin(ang), np.zeros(n)], 1)
    b = a * (1.0 + d0_nm)
    assert tm_score(a, b) == pytest.approx(0.5, abs=1e-9)


def test_tm_d0_floor():
    assert tm_d0(10) == 0.5
    assert tm_d0(100) == pytest.approx(1.24 * 85 ** (1 / 3) - 1.8)


@pytest.mark.parametrize("seed", range(4))
def test_tm_matches_independent_implementation(seed):
    a = _coords(seed, 50)
    b = a + 0.15 * np.random.default_rng(seed + 100).normal(size=a.shape)
    pa, pb = _horn_superpose(a, b)
    d = np.linalg.norm(pa - pb, axis=1) * 10.0
    d0 = 1.24 * (50 - 15) ** (1 / 3) - 1.8
    ref = np.mean(1 / (1 + (d / d0) ** 2))
    assert tm_score(a, b) == pytest.approx(ref, abs=1e-6)


def test_tm_length_mismatch():
    with pytest.raises(ValueError):
        tm_score(_coords(0, 5), _coords(0, 7))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 60))
def test_tm_symmetric_and_bounded(seed, n):
    a, b = _coords(seed, n), _coords(seed + 7, n)
    s = tm_score(a, b)
    assert abs(s - tm_score(b, a)) < 1e-9
    assert 0 < s <= 1


# secondary structure


def test_sse_ideal_helix():
    assert sse_fractions(assign_sse(ideal_helix(30)))["helix"] >= 0.9


def test_sse_ideal_strand():
    assert sse_fractions(assign_sse(ideal_strand(20)))["sheet"] >= 0.9


def test_sse_short_chain_is_coil():
    assert list(assign_sse(ideal_helix(4))) == ["C"] * 4


def test_sse_random_coil_is_mostly_coil():
    fr = [sse_fractions(assign_sse(synth_chain("coil", 60, np.random.default_rng(s)))) for s in range(60)]
    assert np.mean([f["helix"] + f["sheet"] for f in fr]) < 0.30


def test_sse_label_count_equals_length():
    c = synth_chain("mixed", 57, np.random.default_rng(3))
    assert len(assign_sse(c)) == 57


@pytest.mark.parametrize("seed", range(10))
def test_all_helix_class_is_helical(seed):
    c = synth_chain("all-helix", 48, np.random.default_rng(seed))
    assert sse_fractions(assign_sse(c))["helix"] >= 0.9


@pytest.mark.parametrize("seed", range(5))
def test_all_sheet_class_is_sheet(seed):
    c = synth_chain("all-sheet", 50, np.random.default_rng(seed))
    assert sse_fractions(assign_sse(c))["sheet"] >= 0.8


# corpus


def test_corpus_is_deterministic():
    a, b = synth_corpus(12, seed=7), synth_corpus(12, seed=7)
    for (ca, la), (cb, lb) in zip(a, b):
        assert la == lb
        np.testing.assert_array_equal(ca, cb)


def test_corpus_chain_invariants():
    corpus = synth_corpus(40, seed=1, min_len=20, max_len=120)
    assert {lab for _, lab in corpus} == set(CLASSES)
    for c, _ in corpus:
        assert 20 <= len(c) <= 120
        np.testing.assert_allclose(np.linalg.norm(np.diff(c, axis=0), axis=1), 0.38, atol=1e-6)
        assert np.linalg.norm(c.mean(0)) < 1e-6
        assert min_nonbonded(c) >= 0.4 - 1e-9


def test_corpus_max_length():
    c, _ = synth_corpus(1, class_mix=["coil"], seed=0, min_len=256, max_len=256)[0]
    assert len(c) == 256
    with pytest.raises(ValueError):
        synth_corpus(1, min_len=10, max_len=257)


def test_corpus_class_mix():
    labels = {lab for _, lab in synth_corpus(10, class_mix={"all-helix": 1.0, "coil": 0.0}, seed=0)}
    assert labels == {"all-helix"}
    with pytest.raises(ValueError):
        synth_corpus(1, class_mix=["beta-barrel"])


# frechet


def test_frechet_identical_sets():
    x = np.random.default_rng(0).normal(size=(200, 4))
    assert frechet_distance(x, x) == pytest.approx(0.0, abs=1e-6)


def test_frechet_shift():
    x = np.random.default_rng(1).normal(size=(300, 3))
    v = np.array([0.5, -1.0, 2.0])
    assert frechet_distance(x, x + v) == pytest.approx(v @ v, abs=1e-6)


def test_frechet_1d_gaussians():
    rng = np.random.default_rng(2)
    a, b = rng.normal(0, 1, 100_000), rng.normal(3, 1, 100_000)
    assert frechet_distance(a, b) == pytest.approx(9.0, abs=0.2)


def test_frechet_matches_scipy_sqrtm():
    from scipy.linalg import sqrtm

    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(50, 5)), rng.normal(size=(60, 5)) @ rng.normal(size=(5, 5))
    m1, m2 = a.mean(0), b.mean(0)
    s1, s2 = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
    ref = np.sum((m1 - m2) ** 2) + np.trace(s1 + s2 - 2 * np.real(sqrtm(s1 @ s2)))
    assert frechet_distance(a, b) == pytest.approx(ref, rel=1e-6)


def test_frechet_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        frechet_distance(np.zeros((5, 2)) + np.arange(5)[:, None], np.ones((5, 3)) * np.arange(5)[:, None])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_frechet_nonnegative(seed, d):
    rng = np.random.default_rng(seed)
    assert frechet_distance(rng.normal(size=(d + 3, d)), rng.normal(size=(d + 5, d)) * 2) >= 0


# io


def test_text_roundtrip(tmp_path):
    c = synth_chain("mixed", 30, np.random.default_rng(0))
    write_coords(tmp_path / "c.txt", c)
    np.testing.assert_allclose(read_coords(tmp_path / "c.txt"), c, atol=1e-6)


def test_text_reader_rejects_malformed(tmp_path):
    (tmp_path / "bad.txt").write_text("0 1.0 2.0\n")
    with pytest.raises(ValueError, match="index x y z"):
        read_coords(tmp_path / "bad.txt")


def test_pdb_ca_reader(tmp_path):
    lines = [
        "ATOM      1  N   ALA A   1      11.104   6.134  -6.504  1.00  0.00           N",
        "ATOM      2  CA  ALA A   1      11.639   6.071  -5.147  1.00  0.00           C",
        "ATOM      3  C   ALA A   1      13.140   5.980  -5.198  1.00  0.00           C",
        "HETATM    4  CA  HOH A   2       0.000   0.000   0.000  1.00  0.00           O",
        "ATOM      5  CA  GLY A   2      13.759   6.088  -4.025  1.00  0.00           C",
    ]
    (tmp_path / "x.pdb").write_text("\n".join(lines) + "\n")
    c = read_pdb_ca(tmp_path / "x.pdb")
    np.testing.assert_allclose(c, [[1.1639, 0.6071, -0.5147], [1.3759, 0.6088, -0.4025]])


# ------------------------------------------------------------ alignment


def test_tm_align_self_is_one():
    c = synth_corpus(1, seed=8)[0][0]
    tm, pairs = tm_align(c, c)
    assert abs(tm - 1.0) < 1e-9 and len(pairs) == len(c)


def test_tm_align_finds_contiguous_fragment():
    c = synth_chain("coil", 40, np.random.default_rng(1))
    frag = c[7:30] @ _rot_z(0.7).T + 1.5
    tm, pairs = tm_align(frag, c)
    assert tm > 0.999
    assert np.array_equal(pairs[:, 1] - pairs[:, 0], np.full(len(pairs), 7))


@given(st.integers(0, 50))
@settings(max_examples=10, deadline=None)
def test_tm_align_never_below_identity_tm(seed):
    corpus = synth_corpus(2, seed=seed, min_len=30, max_len=30)
    a, b = corpus[0][0], corpus[1][0]
    assert tm_align(a, b)[0] >= tm_score(a, b) - 1e-9
