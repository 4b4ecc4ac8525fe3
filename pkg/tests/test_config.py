import pytest

from genericmech import config
from genericmech.errors import ParseError, ValidationError
from genericmech.constitutive import ThermalGauge


def test_defaults():
    cfg = config.parse_string("")
    sc = cfg.scene
    assert sc.integrator == "rk4" and sc.s_ext == 1
    assert sc.model.gauge == ThermalGauge.parse("e")
    assert cfg.model_kind == "quadratic" and cfg.verify.trials == 5


def test_values_are_coerced():
    cfg = config.parse_string(
        "grid.d = 2\ngrid.N = 16, 32\nmodel.G = 2.5  # shear modulus\n"
        "run.dealias = yes\nrun.gravity = 0, -1\ndissipation.heat_conductivity = 0.1\n")
    sc = cfg.scene
    assert sc.grid.N == (16, 32) and sc.dealias is True and tuple(sc.gravity) == (0.0, -1.0)
    assert sc.dissipation.heat_conductivity == 0.1


@pytest.mark.parametrize("text,needle", [
    ("modle.G = 1", "did you mean 'model.G'"),
    ("run.stesp = 3", "did you mean 'run.steps'"),
    ("run.steps = 3\nrun.steps = 4", "duplicate"),
    ("run.steps = many", "cannot read"),
    ("run.steps =", "empty value"),
    ("grid", "expected"),
])
def test_parse_errors_carry_location(text, needle):
    with pytest.raises(ParseError) as exc:
        config.parse_text(text, "scene.cfg")
    assert needle in str(exc.value) and "scene.cfg:" in str(exc.value)


def test_validation_names_every_bad_key():
    with pytest.raises(ValidationError) as exc:
        config.parse_string("run.dt = -1\nmodel.K = 3\n")
    assert "model.K" in str(exc.value)
    with pytest.raises(ValidationError) as exc:
        config.parse_string("run.dt = -1\ndissipation.shear_viscosity = -2\n")
    msg = str(exc.value)
    assert "run.dt" in msg and "dissipation.shear_viscosity" in msg


def test_bad_model_kind_and_corruption():
    with pytest.raises(ValidationError, match="model.kind"):
        config.parse_string("model.kind = granite")
    with pytest.raises(ValidationError, match="verify.corrupt"):
        config.parse_string("verify.corrupt = nonsense")


def test_mantle_and_sma_build():
    m = config.parse_string("model.kind = mantle\nmodel.diffusant = beta\n")
    assert m.model_kind == "mantle"
    s = config.parse_string("model.kind = sma\ngrid.d = 2\ngrid.N = 16\n")
    assert s.scene.model.energy is not None


def test_missing_file():
    with pytest.raises(ParseError, match="not found"):
        config.parse_config("/nonexistent/scene.cfg")
