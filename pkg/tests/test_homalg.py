from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfcalc.cubical import CubicalField, cubical_sublevel_homology
from gfcalc.errors import BoxNotCertified, InputError, NotAComplex, ThresholdTooClose
from gfcalc.homalg import (
    ChainComplexZ,
    GradedAbGroup,
    GroupDegree,
    SparseComplex,
    cyclic,
    derived_mod_p,
    derived_tensor,
    detect_rank_one,
    direct_sum_groups,
    homology,
    homology_dims_mod_p,
    invariant_factors,
    rank_mod_p,
    smith_normal_form,
)
from oracles import DETECTION_LIBRARY, check_snf, determinantal_factors


def test_snf_examples():
    assert smith_normal_form([[2, 0], [0, 3]])[1] == [[1, 0], [0, 6]]
    assert smith_normal_form([[0, 0], [0, 0]])[1] == [[0, 0], [0, 0]]
    U, D, V = smith_normal_form([[1, 0], [0, 1]])
    assert D == [[1, 0], [0, 1]]


def test_snf_against_determinantal_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        M = rng.integers(-5, 6, size=(4, 4)).tolist()
        assert check_snf(M) == determinantal_factors(M)


@given(st.integers(1, 4), st.integers(1, 4), st.data())
def test_snf_rectangular(m, n, data):
    M = [[data.draw(st.integers(-6, 6)) for _ in range(n)] for _ in range(m)]
    assert check_snf(M) == determinantal_factors(M)


def test_rank_mod_p():
    assert rank_mod_p([[2, 0], [0, 3]], 2) == 1
    assert rank_mod_p([[2, 0], [0, 3]], 5) == 2


def circle_complex() -> ChainComplexZ:
    return ChainComplexZ({0: 2, 1: 2}, {1: [[-1, -1], [1, 1]]})


def rp2_complex() -> ChainComplexZ:
    """Minimal simplicial RP^2 (6 vertices, 15 edges, 10 triangles)."""
    tris = [(0, 1, 3), (0, 1, 4), (0, 2, 3), (0, 2, 5), (0, 4, 5),
            (1, 2, 4), (1, 2, 5), (1, 3, 5), (2, 3, 4), (3, 4, 5)]
    edges = sorted({e for t in tris for e in itertools.combinations(t, 2)})
    eidx = {e: i for i, e in enumerate(edges)}
    d1 = [[0] * len(edges) for _ in range(6)]
    for j, (a, b) in enumerate(edges):
        d1[a][j], d1[b][j] = -1, 1
    d2 = [[0] * len(tris) for _ in edges]
    for j, (a, b, c) in enumerate(tris):
        d2[eidx[(b, c)]][j] += 1
        d2[eidx[(a, c)]][j] -= 1
        d2[eidx[(a, b)]][j] += 1
    return ChainComplexZ({0: 6, 1: len(edges), 2: len(tris)}, {1: d1, 2: d2})


def test_homology_examples():
    H = homology(circle_complex())
    assert H[0] == GroupDegree(1) and H[1] == GroupDegree(1)
    assert homology(ChainComplexZ({0: 1})).is_z_in_degree() == 0
    H = homology(rp2_complex())
    assert H[0] == GroupDegree(1)
    assert H[1] == GroupDegree(0, (2,))
    assert H[2].is_zero()
    assert homology_dims_mod_p(rp2_complex(), 2) == {0: 1, 1: 1, 2: 1}
    assert homology_dims_mod_p(rp2_complex(), 3) == {0: 1}


def test_homology_matches_rank_formula_on_rp2():
    C = rp2_complex()
    d1, d2 = np.array(C.d(1), dtype=float), np.array(C.d(2), dtype=float)
    r1, r2 = np.linalg.matrix_rank(d1), np.linalg.matrix_rank(d2)
    H = homology(C)
    assert H[0].free == 6 - r1
    assert H[1].free == 15 - r1 - r2
    assert invariant_factors(C.d(2)).count(2) == 1


def test_not_a_complex():
    with pytest.raises(NotAComplex):
        ChainComplexZ({0: 1, 1: 1, 2: 1}, {1: [[1]], 2: [[1]]})
    with pytest.raises(InputError):
        ChainComplexZ({0: 2, 1: 1}, {1: [[1]]})


@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_cone_is_acyclic(a, b, data):
    # cone of the identity on a two-term complex A_1 -> A_0
    d = [[data.draw(st.integers(-3, 3)) for _ in range(a)] for _ in range(b)]
    # C_2 = A_1, C_1 = A_0 + A_1, C_0 = A_0
    d2 = [[-x for x in row] for row in d] + [[int(i == j) for j in range(a)] for i in range(a)]
    d1 = [[int(i == j) for j in range(b)] + row for i, row in enumerate(d)]
    C = ChainComplexZ({0: b, 1: b + a, 2: a}, {1: d1, 2: d2})
    assert homology(C).is_zero()


def test_sparse_complex_torsion():
    S = SparseComplex({0: ["p"], 1: ["e"], 2: ["t"]}, {"e": {}, "t": {"e": 3}})
    H = S.homology()
    assert H[0] == GroupDegree(1) and H[1] == GroupDegree(0, (3,))
    assert S.homology_mod_p(3) == {0: 1, 1: 1, 2: 1}
    assert S.homology_mod_p(2) == {0: 1}


def resolution_tensor(A: GradedAbGroup, B: GradedAbGroup) -> GradedAbGroup:
    """Oracle: tensor free resolutions as chain complexes and take homology.

    Each ``Z/n`` in degree k is ``Z --n--> Z`` in degrees (k+1, k); each ``Z`` is itself.
    """
    def pieces(G):
        out = []
        for k, g in G.degrees:
            out += [(k, 0)] * g.free + [(k, t) for t in g.torsion]
        return out

    total = GradedAbGroup()
    for ka, na in pieces(A):
        for kb, nb in pieces(B):
            ca = {ka: 1} if na == 0 else {ka: 1, ka + 1: 1}
            cb = {kb: 1} if nb == 0 else {kb: 1, kb + 1: 1}
            ranks: dict[int, int] = {}
            cells = []
            for i in ca:
                for j in cb:
                    ranks[i + j] = ranks.get(i + j, 0) + 1
                    cells.append((i, j))
            index: dict[int, list] = {}
            for c in cells:
                index.setdefault(c[0] + c[1], []).append(c)
            bds = {}
            for deg, cs in index.items():
                rows = index.get(deg - 1, [])
                if not rows:
                    continue
                mat = [[0] * len(cs) for _ in rows]
                for col, (i, j) in enumerate(cs):
                    if i == ka + 1:
                        mat[rows.index((ka, j))][col] += na
                    if j == kb + 1:
                        mat[rows.index((i, kb))][col] += (-1) ** (i - ka) * nb
                bds[deg] = mat
            total = direct_sum_groups(total, homology(ChainComplexZ(ranks, bds)))
    return total


def test_derived_tensor_examples():
    B = GradedAbGroup({0: (2, [3]), 2: (0, [4])})
    assert derived_tensor(cyclic(0), B) == B
    T = derived_tensor(cyclic(2), cyclic(2))
    assert T == GradedAbGroup({0: (0, [2]), 1: (0, [2])})
    A = GradedAbGroup({0: (1, [4])})
    assert derived_tensor(A, cyclic(2)) == GradedAbGroup({0: (0, [2, 2]), 1: (0, [2])})
    assert derived_mod_p(cyclic(2), 2) == {0: 1, 1: 1}


graded = st.dictionaries(
    st.integers(-2, 2),
    st.tuples(st.integers(0, 2), st.lists(st.sampled_from([2, 3, 4, 6]), max_size=2)),
    max_size=3,
).map(GradedAbGroup)


@given(graded, graded)
def test_derived_tensor_matches_resolution_oracle_and_is_symmetric(A, B):
    T = derived_tensor(A, B)
    assert T == resolution_tensor(A, B)
    assert T == derived_tensor(B, A)
    assert derived_tensor(A, cyclic(0)) == A


def test_graded_group_json_round_trip():
    G = GradedAbGroup({0: (1, [2, 4]), 3: (0, [6])})
    assert GradedAbGroup.from_json(G.to_json()) == G
    assert G[3].torsion == (6,)
    assert GradedAbGroup({1: (0, [2, 3])})[1].torsion == (6,)
    with pytest.raises(InputError):
        GradedAbGroup.from_json([{"free": 1}])


@pytest.mark.parametrize("A,B,primes,expected", DETECTION_LIBRARY)
def test_detect_rank_one_library(A, B, primes, expected):
    assert detect_rank_one(A, B, primes) == expected


def test_detect_rank_one_requires_coprime_prime():
    with pytest.raises(InputError):
        detect_rank_one(cyclic(2), cyclic(0), [2])
    with pytest.raises(InputError):
        detect_rank_one(cyclic(0), cyclic(0), [4])


def _line_field(n: int = 65):
    axes = [np.linspace(-2.0, 2.0, n)]
    return axes


def test_cubical_linear_function_is_trivial():
    field = CubicalField.sample(lambda w: w + 1e-3, _line_field())
    assert cubical_sublevel_homology(field, (0.0, -1.9)).is_zero()


def test_cubical_double_well_and_refinement():
    # Double well with minima -0.5 at w = +-1 and a saddle of value 0.5 at the origin.
    for n in (33, 65):
        axes = [np.linspace(-2, 2, n) + 1e-4, np.linspace(-2, 2, n) + 2e-4]
        field = CubicalField.sample(lambda w, v: (w * w - 1) ** 2 + v * v - 0.5, axes)
        assert cubical_sublevel_homology(field, (0.2, -0.45)).is_zero()
        assert cubical_sublevel_homology(field, (0.6, -0.45)) == GradedAbGroup({1: 1})
        assert cubical_sublevel_homology(field, (0.6, -0.6)) == GradedAbGroup({0: 1})
        assert cubical_sublevel_homology(field, (3.0, 0.2)) == GradedAbGroup({1: 1})
        assert cubical_sublevel_homology(field, (3.0, 0.2), coefficients=2) == GradedAbGroup({1: 1})


def test_cubical_errors():
    axes = [np.linspace(-1, 1, 5)]
    field = CubicalField.sample(lambda w: w, axes)
    with pytest.raises(ThresholdTooClose):
        cubical_sublevel_homology(field, (0.0, -2.0))
    with pytest.raises(BoxNotCertified):
        cubical_sublevel_homology(CubicalField(axes, field.values, certified=False), (0.1, -2.0))
    with pytest.raises(InputError):
        CubicalField([np.array([0.0, 0.0])], np.zeros(2))
