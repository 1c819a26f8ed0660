import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdiv import symbolic as sym
from resdiv.forms import Form
from resdiv.hefer import check_scalar_hefer, hefer_decompose, koszul_hefer, verify_hefer
from resdiv.koszul import koszul_complex
from resdiv.poly import Poly

poly2 = st.lists(st.tuples(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
                           st.tuples(st.integers(0, 3), st.integers(0, 3))), min_size=1, max_size=4)


@settings(max_examples=50, deadline=None)
@given(poly2)
def test_scalar_hefer_identity(terms):
    p = Poly.from_terms(2, [(c, e, (0, 0)) for c, e in terms])
    assert check_scalar_hefer(p, hefer_decompose(p), samples=50) <= 1e-10 * max(1, max(abs(c) for c, _ in terms))


def test_hefer_of_monomial_is_telescoping_sum():
    h = hefer_decompose(Poly.monomial(1, [3]))
    # ζ³ − z³ = (ζ² + ζz + z²)(ζ − z)
    assert h[0].as_dict() == {(0, 2): 1, (1, 1): 1, (2, 0): 1}


def test_hefer_rejects_antiholomorphic():
    with pytest.raises(ValueError):
        hefer_decompose(Poly.monomial(1, [0], [1]))


@pytest.mark.parametrize("gens", [
    [Poly.monomial(1, [2])],
    [Poly.monomial(2, [1, 0]), Poly.monomial(2, [0, 2])],
    [Poly.monomial(2, [2, 0]), Poly.monomial(2, [1, 1]) * 0.5j, Poly.monomial(2, [0, 3])],
])
def test_koszul_hefer_satisfies_identity(gens):
    H = koszul_hefer(gens)
    rep = verify_hefer(H, koszul_complex(gens), samples=50, seed=3)
    assert rep.passed and rep.max_residual < 1e-10
    for (l, k), blk in H.blocks.items():
        for row in blk.entries:
            for e in row:
                assert all(bin(h).count("1") == k - l and a == 0 for h, a, _ in e.terms)


def test_identity_block_and_shape_checks():
    gens = [Poly.monomial(2, [1, 0]), Poly.monomial(2, [0, 1])]
    H = koszul_hefer(gens)
    assert all(e.is_zero() for row in H[(2, 1)].entries for e in row)
    with pytest.raises(ValueError):
        koszul_hefer(gens, m=3)
    with pytest.raises(ValueError):
        verify_hefer(H, koszul_complex([Poly.monomial(2, [1, 0])]))


def test_operator_is_exponential_of_delta():
    gens = [Poly.monomial(2, [1, 0]), Poly.monomial(2, [0, 1])]
    H = koszul_hefer(gens)
    x = Form.frame(2, 2, [0, 1], sym.ONE)
    y = H.operator(x)
    assert len(y.terms) == 4
    assert y.coeff((), (), [0, 1]) == sym.ONE
