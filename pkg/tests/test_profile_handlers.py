import numpy as np
import pytest

from drivercal.config import ConfigError
from drivercal.core.plugin_registry import PluginRegistry
from drivercal.core.population_generator import default_registry, leader_profile
from drivercal.handlers import (
    BaseProfileHandler,
    ConstantProfileHandler,
    RecordedProfileHandler,
    SawtoothProfileHandler,
    StopAndGoProfileHandler,
)
from drivercal.models.synth_models import LeaderProfileRequest


def request(kind, frames=600, **settings):
    return LeaderProfileRequest(kind=kind, frames=frames, **settings)


class TestHandlers:
    def test_constant(self):
        series = ConstantProfileHandler().process(request("constant", 10, cruise_speed=12.0))
        assert series == [12.0] * 10

    def test_sawtooth_is_periodic_between_bounds(self):
        series = np.array(
            SawtoothProfileHandler().process(
                request("sawtooth", low_speed=2.0, cruise_speed=12.0, period_frames=100)
            )
        )
        assert series.min() >= 2.0 and series.max() <= 12.0
        np.testing.assert_allclose(series[:100], series[100:200])

    def test_stop_and_go_brakes_to_low_speed_and_back(self):
        series = np.array(
            StopAndGoProfileHandler().process(
                request("stop_and_go", cruise_speed=14.0, low_speed=0.0, seed=3)
            )
        )
        assert len(series) == 600
        assert series.min() == pytest.approx(0.0)
        assert series.max() > 0.8 * 14.0 - 1e-9
        assert series.max() <= 14.0

    def test_stop_and_go_depends_on_seed(self):
        handler = StopAndGoProfileHandler()
        first = handler.process(request("stop_and_go", seed=1))
        assert first == handler.process(request("stop_and_go", seed=1))
        assert first != handler.process(request("stop_and_go", seed=2))

    def test_recorded_truncates(self):
        handler = RecordedProfileHandler()
        series = handler.process(request("recorded", 3, recorded=[5.0, 6.0, 7.0, 8.0]))
        assert series == [5.0, 6.0, 7.0]

    def test_recorded_without_series_cannot_be_handled(self):
        handler = RecordedProfileHandler()
        assert handler.can_handle(request("recorded", 3)) == 0.0
        with pytest.raises(ValueError):
            handler.process(request("recorded", 3))

    def test_recorded_too_short_raises(self):
        with pytest.raises(ValueError, match="2 frames"):
            RecordedProfileHandler().process(request("recorded", 3, recorded=[1.0, 2.0]))

    def test_wrong_kind_is_refused(self):
        with pytest.raises(ValueError):
            ConstantProfileHandler().process(request("sawtooth"))


class HalfConfidentHandler(BaseProfileHandler):
    kind = "ramp"

    def can_handle(self, request):
        return 0.5 if request.kind == "ramp" else 0.0

    def build_series(self, request):
        return np.linspace(0.0, 10.0, request.frames)


class TestRegistry:
    def test_exact_match_wins(self):
        registry = default_registry()
        handler = registry.get_handler(request("sawtooth"))
        assert isinstance(handler, SawtoothProfileHandler)

    def test_partial_confidence_handler_is_used_when_nothing_better(self):
        registry = PluginRegistry()
        registry.register_handler(ConstantProfileHandler(), priority=1)
        registry.register_handler(HalfConfidentHandler(), priority=50)
        assert isinstance(registry.get_handler(request("ramp")), HalfConfidentHandler)
        assert registry.get_handler(request("zigzag")) is None

    def test_priority_order(self):
        registry = PluginRegistry()
        late, early = HalfConfidentHandler(), ConstantProfileHandler()
        registry.register_handler(late, priority=50)
        registry.register_handler(early, priority=5)
        assert registry.get_handlers_by_priority() == [early, late]

    def test_only_profile_handlers_register(self):
        with pytest.raises(ValueError):
            PluginRegistry().register_handler(object())


def test_leader_profile_unknown_kind_is_a_config_error():
    with pytest.raises(ConfigError, match="zigzag") as info:
        leader_profile("zigzag", 10)
    assert "sawtooth" in str(info.value)
    assert "stop_and_go" in str(info.value)


def test_recorded_kind_without_series_names_the_missing_field():
    with pytest.raises(ConfigError, match="recorded_leader"):
        leader_profile("recorded", 10)


def test_leader_profile_is_seeded():
    assert leader_profile("stop_and_go", 400, seed=4) == leader_profile(
        "stop_and_go", 400, seed=4
    )
    assert all(v >= 0 for v in leader_profile("sawtooth", 400, low_speed=0.0))
