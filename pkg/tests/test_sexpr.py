import pytest
from hypothesis import given, strategies as st

from mlspec.diagnostics import ArtifactError
from mlspec.sexpr import dumps, loads, loads_many

symbols = st.from_regex(r"[a-zA-Z_#'][a-zA-Z0-9_#'.\-]*", fullmatch=True).filter(
    lambda s: not s.lstrip("+-").replace(".", "").isdigit()
)
atoms = st.one_of(
    st.integers(min_value=-(2**63), max_value=2**63),
    st.floats(allow_nan=False, allow_infinity=False),
    symbols,
)
forms = st.recursive(atoms, lambda inner: st.lists(inner, max_size=5), max_leaves=40)


@given(forms)
def test_round_trip(form):
    assert loads(dumps(form)) == form


def test_examples():
    assert loads("(aget (tvar 1) a 0)") == ["aget", ["tvar", 1], "a", 0]
    assert loads("()") == []
    assert loads("1.5") == 1.5
    assert loads("-42") == -42
    assert loads("x#3") == "x#3"


def test_float_atoms_never_look_like_ints():
    assert isinstance(loads(dumps(1.0)), float)
    assert isinstance(loads(dumps(1)), int)


def test_errors():
    with pytest.raises(ArtifactError):
        loads("(a (b)")
    with pytest.raises(ArtifactError):
        loads("a)")
    with pytest.raises(ArtifactError):
        loads("a b")  # two forms where one expected


def test_loads_many():
    assert loads_many("a (b c) 3") == ["a", ["b", "c"], 3]
