"""Pytest configuration and fixtures for xroffload tests."""

from __future__ import annotations

from typing import Callable, Protocol

import pytest

from xroffload import DeviceSpec, ImpulseResponse, Request, Scenario, ThermalStage, load_scenario


class DeviceFactory(Protocol):
    def __call__(self, id: str = "dev", **overrides: object) -> DeviceSpec: ...


@pytest.fixture(scope="session")
def single_stage() -> ImpulseResponse:
    """One first-order stage, R = 10 °C/W, theta = 100 s."""
    return ImpulseResponse.parametric([ThermalStage(10.0, 100.0)])


@pytest.fixture
def make_device(single_stage: ImpulseResponse) -> DeviceFactory:
    """Build a HoloLens-like device; keyword arguments override fields."""

    def factory(id: str = "dev", **overrides: object) -> DeviceSpec:
        fields: dict[str, object] = {
            "tdp_watts": 2.0,
            "battery_joules": 10_000.0,
            "request_power_watts": 2.0,
            "request_duration_s": 35.0,
            "thermal": single_stage,
            "ambient_temp_c": 25.0,
        }
        fields.update(overrides)
        return DeviceSpec(id=id, **fields)  # type: ignore[arg-type]

    return factory


@pytest.fixture
def make_scenario() -> Callable[..., Scenario]:
    """Scenario with explicit requests given as `(device, arrival)` pairs."""

    def factory(
        devices: list[DeviceSpec],
        arrivals: list[tuple[str, float]],
        horizon_s: float = 400.0,
        dt_s: float = 1.0,
        **kwargs: object,
    ) -> Scenario:
        specs = {d.id: d for d in devices}
        requests = [specs[dev].request(f"{dev}-{i:02d}", a) for i, (dev, a) in enumerate(arrivals)]
        return Scenario(horizon_s, tuple(devices), tuple(requests), dt_s=dt_s, **kwargs)  # type: ignore[arg-type]

    return factory


@pytest.fixture(scope="session")
def glass() -> Scenario:
    return load_scenario("glass.scenario")


@pytest.fixture(scope="session")
def hololens() -> Scenario:
    return load_scenario("hololens.scenario")


@pytest.fixture(scope="session")
def replication() -> Scenario:
    return load_scenario("replication.scenario")


@pytest.fixture(scope="session")
def glass_arrivals() -> list[float]:
    return [30.0, 130.0, 230.0, 800.0, 1600.0, 1700.0, 1800.0, 2500.0, 2950.0, 3400.0]


def local_ids(requests: tuple[Request, ...] | None, arrivals: set[float]) -> list[str]:
    return [r.id for r in requests or () if r.arrival_s in arrivals]
