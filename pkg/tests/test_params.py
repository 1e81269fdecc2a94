import numpy as np
import pytest
from hypothesis import given, strategies as st

from physiodft.errors import SpecError, StartValueError
from physiodft.params import Exp, Identity, ParamDef, ParamSpace, ScaledLogistic, make_transform


@given(st.floats(-15, 15))
def test_transform_roundtrip(x):
    for tr in (Identity(), Exp(), ScaledLogistic(0.0, 1 / 3)):
        assert tr.to_internal(tr.to_natural(x)) == pytest.approx(x, rel=1e-6, abs=1e-9)


@given(st.floats(-5, 5))
def test_transform_derivatives(x):
    h = 1e-6
    for tr in (Identity(), Exp(), ScaledLogistic(-1.0, 2.0)):
        fd = (tr.to_natural(x + h) - tr.to_natural(x - h)) / (2 * h)
        assert tr.derivative(x) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_transform_domain_errors():
    with pytest.raises(StartValueError):
        Exp().to_internal(0.0)
    with pytest.raises(StartValueError):
        ScaledLogistic(0, 0.5).to_internal(0.5)
    with pytest.raises(SpecError):
        make_transform("sqrt")
    assert make_transform(["logistic", 0, 1]) == ScaledLogistic(0.0, 1.0)


def _space():
    return ParamSpace([ParamDef("a", 0.5), ParamDef("s", 2.0, transform=Exp()), ParamDef("c", 1.0, fixed=True)])


def test_space_mapping():
    sp = _space()
    assert sp.free_names == ("a", "s") and sp.n_free == 2
    x = sp.start()
    assert np.allclose(x, [0.5, np.log(2.0)])
    th = sp.theta(x)
    assert th == pytest.approx({"a": 0.5, "s": 2.0, "c": 1.0})
    assert np.allclose(sp.internal(th), x)
    assert np.allclose(sp.jacobian(x), [1.0, 2.0])


def test_space_errors():
    with pytest.raises(SpecError):
        ParamSpace([ParamDef("a", 0.0), ParamDef("a", 1.0)])
    with pytest.raises(StartValueError):
        ParamSpace([ParamDef("a", np.nan)])
    ParamSpace([ParamDef("a", np.nan, fixed=True)])


def test_override():
    sp = _space().override({"c": {"fixed": False, "start": 3.0}, "s": {"transform": "identity"}, "a": 1.5})
    assert sp.free_names == ("a", "s", "c")
    assert sp["a"].value == 1.5 and sp["c"].value == 3.0 and isinstance(sp["s"].transform, Identity)
    with pytest.raises(SpecError, match="zzz"):
        _space().override({"zzz": 1.0})
    assert _space().fix_all().n_free == 0
    assert _space().with_values({"s": 5.0})["s"].value == 5.0
